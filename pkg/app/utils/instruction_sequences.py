"""
Instruction sequences: the balanced, no-adjacent-repeat family of cascade
orders, its lexicographic ranking, and one-time-pad encryption of the index.
"""
import logging
from functools import lru_cache
from typing import Optional

import numpy as np

from app.core.auth import bits_to_int
from app.core.config import settings
from app.core.errors import CapacityError, ValidationError
from app.schemas.cipher import CIPHER_ORDER, CipherTag, InstructionSequence, gamma_for

logger = logging.getLogger(__name__)


def _check_n_obs(n_obs: int) -> None:
    if n_obs < 0 or n_obs == 1:
        raise ValidationError(f"n_obs must lie in {{0, 2, 3, 4, ...}}, got {n_obs}")


@lru_cache(maxsize=None)
def _completions(counts: tuple, last: int) -> int:
    """Valid suffixes using `counts` remaining symbols after symbol `last` (-1: none)"""
    if not any(counts):
        return 1
    total = 0
    for sym, remaining in enumerate(counts):
        if remaining and sym != last:
            rest = counts[:sym] + (remaining - 1,) + counts[sym + 1:]
            total += _completions(rest, sym)
    return total


def count_valid(n_obs: int) -> int:
    """Number of length-3*gamma words with gamma of each primitive and no adjacent repeats"""
    _check_n_obs(n_obs)
    gamma = gamma_for(n_obs)
    return _completions((gamma,) * 3, -1)


def verify_capacity(n_obs: int) -> None:
    """
    Raises:
        CapacityError: fewer than 2^n_obs sequences exist
    """
    available = count_valid(n_obs)
    if available < 2 ** n_obs:
        raise CapacityError(f"n_obs={n_obs}: {available} sequences < 2^{n_obs}")


def verify_supported(n_obs_max: Optional[int] = None) -> None:
    """Capacity check over every supported n_obs up to N_OBS_MAX"""
    n_obs_max = settings.N_OBS_MAX if n_obs_max is None else n_obs_max
    for n_obs in [0] + list(range(2, n_obs_max + 1)):
        verify_capacity(n_obs)
    logger.debug(f"Instruction-sequence capacity verified up to n_obs={n_obs_max}")


def _check_index(index: int, n_obs: int) -> None:
    if n_obs > settings.N_OBS_MAX:
        raise ValidationError(f"n_obs={n_obs} exceeds N_OBS_MAX={settings.N_OBS_MAX}")
    verify_capacity(n_obs)
    if not 0 <= index < 2 ** n_obs:
        raise ValidationError(f"Index {index} outside [0, 2^{n_obs})")


def unrank(index: int, n_obs: int) -> InstructionSequence:
    """
    The index-th sequence of the family in lexicographic order (OTP < AES < ASCON).

    Args:
        index: 0 <= index < 2^n_obs
        n_obs: Security strength

    Returns:
        InstructionSequence
    """
    _check_n_obs(n_obs)
    _check_index(index, n_obs)
    gamma = gamma_for(n_obs)
    counts = [gamma] * 3
    last = -1
    steps = []
    remaining = index
    for _ in range(3 * gamma):
        for sym in range(3):
            if not counts[sym] or sym == last:
                continue
            counts[sym] -= 1
            block = _completions(tuple(counts), sym)
            if remaining < block:
                steps.append(CIPHER_ORDER[sym])
                last = sym
                break
            remaining -= block
            counts[sym] += 1
    return InstructionSequence(steps=steps, n_obs=n_obs)


def rank(sequence: InstructionSequence) -> int:
    """Inverse of unrank"""
    gamma = sequence.gamma
    counts = [gamma] * 3
    last = -1
    index = 0
    for step in sequence.steps:
        target = CIPHER_ORDER.index(CipherTag(step))
        for sym in range(target):
            if counts[sym] and sym != last:
                counts[sym] -= 1
                index += _completions(tuple(counts), sym)
                counts[sym] += 1
        counts[target] -= 1
        last = target
    return index


def index_bits(index: int, n_obs: int) -> np.ndarray:
    """Big-endian n_obs-bit representation of index"""
    return np.array([(index >> (n_obs - 1 - k)) & 1 for k in range(n_obs)], dtype=np.uint8)


def encrypt_is(index: int, pad: np.ndarray) -> np.ndarray:
    """
    pi = index bits XOR pad (decryption is the same operation).

    Args:
        index: Sequence index below 2^n_obs
        pad: n_obs freshly allocated PSK bits

    Returns:
        n_obs-bit ciphertext
    """
    pad = np.asarray(pad, dtype=np.uint8)
    n_obs = pad.size
    if not 0 <= index < 2 ** n_obs:
        raise ValidationError(f"Index {index} does not fit in {n_obs} pad bits")
    return index_bits(index, n_obs) ^ pad


def decrypt_is(pi: np.ndarray, pad: np.ndarray) -> int:
    pi = np.asarray(pi, dtype=np.uint8)
    pad = np.asarray(pad, dtype=np.uint8)
    if pi.size != pad.size:
        raise ValidationError("Ciphertext and pad lengths differ")
    return bits_to_int(pi ^ pad)
