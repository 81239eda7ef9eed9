"""
ML-KEM key establishment and the 128/120/8 split of the shared secret
"""
import hashlib
import hmac
import logging
from enum import Enum
from functools import lru_cache
from typing import Optional, Tuple

from quantcrypt import kem

from app.core.config import settings
from app.core.errors import AbortReason, ProtocolAbort, ValidationError
from app.schemas.cipher import PQC_KEY_BYTES, V_PRIME_BYTES, SplitSecret
from app.schemas.protocol import FrameType

logger = logging.getLogger(__name__)

SHARED_SECRET_BYTES = 32
CONFIRM_BYTES = 16
CONFIRM_LABEL = b"confirm"

PARAMETER_SETS = {
    "ML-KEM-512": "MLKEM_512",
    "ML-KEM-768": "MLKEM_768",
    "ML-KEM-1024": "MLKEM_1024",
}


class KemRole(str, Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"


@lru_cache(maxsize=None)
def _kem_instance(name: str):
    return getattr(kem, PARAMETER_SETS[name])()


def get_kem(parameter_set: Optional[str] = None):
    """quantcrypt KEM instance for an ML-KEM parameter set (default KEM_PARAMETER_SET)"""
    name = parameter_set or settings.KEM_PARAMETER_SET
    if name not in PARAMETER_SETS:
        raise ValidationError(f"Unknown KEM parameter set {name}; "
                              f"choose from {sorted(PARAMETER_SETS)}")
    return _kem_instance(name)


def kem_keypair(parameter_set: Optional[str] = None) -> Tuple[bytes, bytes]:
    """Returns (public_key, secret_key)"""
    return get_kem(parameter_set).keygen()


def kem_encapsulate(public_key: bytes,
                    parameter_set: Optional[str] = None) -> Tuple[bytes, bytes]:
    """Returns (ciphertext, shared_secret)"""
    try:
        return get_kem(parameter_set).encaps(public_key)
    except Exception as e:
        raise ProtocolAbort(AbortReason.KEM, f"encapsulation failed: {str(e)}") from e


def kem_decapsulate(secret_key: bytes, ciphertext: bytes,
                    parameter_set: Optional[str] = None) -> bytes:
    try:
        return get_kem(parameter_set).decaps(secret_key, ciphertext)
    except Exception as e:
        raise ProtocolAbort(AbortReason.KEM, f"decapsulation failed: {str(e)}") from e


def confirmation_tag(shared_secret: bytes, ciphertext: bytes) -> bytes:
    """HMAC-SHA256(ss, "confirm" || ct) truncated to 16 bytes"""
    return hmac.new(shared_secret, CONFIRM_LABEL + ciphertext,
                    hashlib.sha256).digest()[:CONFIRM_BYTES]


def check_confirmation(shared_secret: bytes, ciphertext: bytes, tag: bytes) -> None:
    """
    Raises:
        ProtocolAbort: the peer derived a different secret
    """
    if not hmac.compare_digest(confirmation_tag(shared_secret, ciphertext), tag):
        raise ProtocolAbort(AbortReason.KEM, "key confirmation mismatch")


def kem_establish(role: KemRole, channel, parameter_set: Optional[str] = None) -> bytes:
    """
    Run one KEM exchange over an authenticated frame channel.

    The initiator sends KEM_PK and receives KEM_CT; the responder does the
    opposite and appends a confirmation tag to the ciphertext.

    Args:
        role: initiator (Alice) or responder (Bob)
        channel: object with send_frame(FrameType, bytes) / recv_frame(FrameType)
            that authenticates every frame
        parameter_set: ML-KEM parameter set name

    Returns:
        32-byte shared secret
    """
    role = KemRole(role)
    if role == KemRole.INITIATOR:
        public_key, secret_key = kem_keypair(parameter_set)
        channel.send_frame(FrameType.KEM_PK, public_key)
        payload = channel.recv_frame(FrameType.KEM_CT)
        ciphertext, tag = payload[:-CONFIRM_BYTES], payload[-CONFIRM_BYTES:]
        secret = kem_decapsulate(secret_key, ciphertext, parameter_set)
        check_confirmation(secret, ciphertext, tag)
    else:
        public_key = channel.recv_frame(FrameType.KEM_PK)
        ciphertext, secret = kem_encapsulate(public_key, parameter_set)
        channel.send_frame(FrameType.KEM_CT, ciphertext + confirmation_tag(secret, ciphertext))

    if len(secret) != SHARED_SECRET_BYTES:
        raise ProtocolAbort(AbortReason.KEM, f"shared secret has {len(secret)} bytes")
    logger.debug(f"KEM established as {role.value}")
    return secret


def split_shared_secret(secret: bytes) -> SplitSecret:
    """
    Bits [0,128) -> PQC key, [128,248) -> base nonce v', [248,256) -> counter seed.

    Raises:
        ValidationError: the secret is not 32 bytes
    """
    if len(secret) != SHARED_SECRET_BYTES:
        raise ValidationError(f"Shared secret must be {SHARED_SECRET_BYTES} bytes, "
                              f"got {len(secret)}")
    v_end = PQC_KEY_BYTES + V_PRIME_BYTES
    return SplitSecret(
        pqc_key=secret[:PQC_KEY_BYTES],
        base_nonce_v_prime=secret[PQC_KEY_BYTES:v_end],
        counter_seed=secret[v_end],
    )
