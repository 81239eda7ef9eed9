"""
Exception hierarchy shared by every module
"""
from enum import IntEnum
from typing import Optional


class AbortReason(IntEnum):
    """Reason codes carried in ABORT frames and cycle reports"""
    QBER = 1
    EC_DETECTABLE = 2
    VERIFY = 3
    INFEASIBLE = 4
    MAC = 5
    KEM = 6
    HE = 7
    TIMEOUT = 8
    PROTOCOL = 9
    INSUFFICIENT_KEY = 10


class HoqsError(Exception):
    """Base class for all errors raised by the toolkit"""


class ValidationError(HoqsError, ValueError):
    """Invalid parameters or configuration"""


class PoolExhausted(HoqsError):
    """PSK pool has fewer unallocated bits than requested"""


class DoubleAesAllocation(HoqsError):
    """The fixed AES key was requested a second time"""


class KeyReuseError(HoqsError):
    """A one-time key was presented for a second use"""


class AuthenticationFailure(HoqsError):
    """MAC or AEAD tag did not verify"""


class PadError(HoqsError):
    """Padding or trailer is inconsistent"""


class FrameError(HoqsError):
    """Malformed protocol frame"""


class CapacityError(HoqsError):
    """Instruction-sequence family is smaller than 2^n_obs"""


class InsufficientKey(HoqsError):
    """One-time-pad key shorter than the data"""


class DetectableFailure(HoqsError):
    """Decoder found no codeword matching the target syndrome"""

    def __init__(self, message: str, iterations: int = 0):
        super().__init__(message)
        self.iterations = iterations


class ConvergenceError(HoqsError):
    """Bisection did not reach the requested tolerance"""

    def __init__(self, message: str, estimate: Optional[float] = None):
        super().__init__(message)
        self.estimate = estimate


class ChannelTimeout(HoqsError):
    """No frame arrived within the configured timeout"""


class ProtocolAbort(HoqsError):
    """A protocol phase aborted; carries the reason code"""

    def __init__(self, reason: AbortReason, detail: str = ""):
        super().__init__(f"{reason.name.lower()}: {detail}" if detail else reason.name.lower())
        self.reason = reason
        self.detail = detail


class QberAbort(ProtocolAbort):
    """Sampled QBER exceeded the threshold"""

    def __init__(self, alpha: float, threshold: float):
        super().__init__(AbortReason.QBER, f"alpha={alpha:.5f} > {threshold}")
        self.alpha = alpha


class VerificationAbort(ProtocolAbort):
    """Error-correction verification hashes differ"""

    def __init__(self, detail: str = "verification hash mismatch"):
        super().__init__(AbortReason.VERIFY, detail)
