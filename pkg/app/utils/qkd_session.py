"""
Simulated BBM92 post-processing: raw keys at a target QBER, sampling and
QBER estimation, syndrome reconciliation, verification hashing and
Toeplitz privacy amplification.
"""
import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import matmul_toeplitz

from app.core.config import settings
from app.core.errors import DetectableFailure, QberAbort, ValidationError, VerificationAbort
from app.schemas.security import OptimizerConfig, QberSymbols, SecurityParams
from app.schemas.session import RawKeyPair, SessionOutcome, SessionStatus
from app.utils.finite_key_optimizer import optimize
from app.utils.reconciliation import MinSumDecoder, ParityCheck, ec_syndrome, standard_code

logger = logging.getLogger(__name__)

HASH_WORD_BITS = 32


def simulate_raw_keys(N_total: int, qber: float, seed: int) -> RawKeyPair:
    """Uniform Alice bits; Bob's copy flips each bit independently with probability qber"""
    if not 0.0 <= qber <= 0.5:
        raise ValidationError(f"qber must lie in [0, 0.5], got {qber}")
    if N_total < 1:
        raise ValidationError(f"N_total must be positive, got {N_total}")
    rng = np.random.default_rng(seed)
    alice = rng.integers(0, 2, N_total, dtype=np.uint8)
    flips = (rng.random(N_total) < qber).astype(np.uint8)
    return RawKeyPair(alice_bits=alice, bob_bits=alice ^ flips, true_qber=qber, rng_seed=seed)


def draw_sample_indices(N: int, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """n positions drawn uniformly without replacement, and the sorted complement"""
    if not 0 < n <= N:
        raise ValidationError(f"Need 0 < n <= N, got n={n}, N={N}")
    sample = np.sort(rng.choice(N, size=n, replace=False))
    mask = np.ones(N, dtype=bool)
    mask[sample] = False
    return sample, np.flatnonzero(mask)


def mismatch_fraction(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.count_nonzero(a != b)) / a.size if a.size else 0.0


def check_qber(alpha: float, threshold: Optional[float] = None) -> None:
    threshold = settings.QBER_THRESHOLD if threshold is None else threshold
    if alpha > threshold:
        raise QberAbort(alpha, threshold)


def sample_and_estimate(pair: RawKeyPair, n: int,
                        seed: int) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Estimate the QBER on n randomly sampled positions.

    Returns:
        (alpha, sample_indices, remainder_indices)

    Raises:
        QberAbort: alpha exceeds QBER_THRESHOLD
    """
    sample, remainder = draw_sample_indices(pair.size, n, np.random.default_rng(seed))
    alpha = mismatch_fraction(pair.alice_bits[sample], pair.bob_bits[sample])
    check_qber(alpha)
    return alpha, sample, remainder


def estimate_symbols(pair: RawKeyPair, sample: np.ndarray,
                     remainder: np.ndarray) -> QberSymbols:
    """alpha, beta, gamma_tot and K measured on a simulated pair"""
    errors = pair.alice_bits != pair.bob_bits
    K = int(np.count_nonzero(errors))
    return QberSymbols(
        alpha=float(errors[sample].mean()) if sample.size else 0.0,
        beta=float(errors[remainder].mean()) if remainder.size else 0.0,
        gamma_tot=K / pair.size,
        K=K,
    )


def _hash_params(n_bits: int, t: int) -> Tuple[int, int]:
    words = max(1, math.ceil(n_bits / HASH_WORD_BITS))
    return words, HASH_WORD_BITS + t - 1


def verification_seed_bytes(n_bits: int, t: int) -> int:
    """Seed length for hashing n_bits to t bits: one coefficient per word plus the offset"""
    words, q_star = _hash_params(n_bits, t)
    return (words + 1) * math.ceil(q_star / 8)


def verification_seed(n_bits: int, t: int, rng: np.random.Generator) -> bytes:
    return rng.bytes(verification_seed_bytes(n_bits, t))


def verification_hash(bits: np.ndarray, t: int, seed: bytes) -> int:
    """
    Multiply-add-shift hash of a bit string to t bits.

    The string is cut into 32-bit words x_i (zero padded); with Q* = 32 + t - 1,
    odd coefficients a_i < 2^Q* and an offset b < 2^Q* read from the seed,
    h = ((sum a_i x_i + b) mod 2^Q*) >> (Q* - t).
    """
    bits = np.asarray(bits, dtype=np.uint8)
    words, q_star = _hash_params(bits.size, t)
    if len(seed) != verification_seed_bytes(bits.size, t):
        raise ValidationError("Verification seed length does not match the input")
    width = math.ceil(q_star / 8)
    mask = (1 << q_star) - 1
    coeffs = [int.from_bytes(seed[i * width:(i + 1) * width], "big") & mask for i in range(words)]
    offset = int.from_bytes(seed[words * width:], "big") & mask

    padded = np.zeros(words * HASH_WORD_BITS, dtype=np.uint8)
    padded[:bits.size] = bits
    packed = np.packbits(padded).reshape(words, 4)
    acc = offset
    for a, word in zip(coeffs, packed):
        acc += (a | 1) * int.from_bytes(word.tobytes(), "big")
    return (acc & mask) >> (q_star - t)


def verify_correction(alice_bits: np.ndarray, bob_bits_corrected: np.ndarray, t: int,
                      hash_seed: bytes) -> bool:
    """
    Compare t-bit hashes of both reconciled strings.

    Raises:
        VerificationAbort: the hashes differ
    """
    if np.asarray(alice_bits).size != np.asarray(bob_bits_corrected).size:
        raise ValidationError("Verification inputs must have equal length")
    if verification_hash(alice_bits, t, hash_seed) != verification_hash(bob_bits_corrected, t,
                                                                         hash_seed):
        raise VerificationAbort()
    return True


def toeplitz_seed_length(n_bits: int, l: int) -> int:
    return n_bits + l - 1


def privacy_amplify(key: np.ndarray, l: int, seed: np.ndarray) -> np.ndarray:
    """
    Compress ``key`` to l bits with the Toeplitz matrix T[i, j] = seed[i - j]
    (first column seed[:l]; first row seed[0] followed by seed[l:]).

    A seed with a single leading 1 and l = len(key) is the identity.
    """
    key = np.asarray(key, dtype=np.uint8)
    seed = np.asarray(seed, dtype=np.uint8)
    m = key.size
    if not 0 < l <= m:
        raise ValidationError(f"Output length {l} must lie in (0, {m}]")
    if seed.size != toeplitz_seed_length(m, l):
        raise ValidationError(f"Toeplitz seed must have {toeplitz_seed_length(m, l)} bits")
    column = seed[:l].astype(float)
    row = np.concatenate([seed[:1], seed[l:]]).astype(float)
    product = matmul_toeplitz((column, row), key.astype(float))
    return (np.rint(product).astype(np.int64) & 1).astype(np.uint8)


def run_qkd_session(params: SecurityParams, pair: RawKeyPair, optimizer_config: OptimizerConfig,
                    code: Optional[ParityCheck] = None,
                    seed: Optional[int] = None) -> SessionOutcome:
    """
    One post-processing session on a simulated pair:
    sample -> estimate -> (delta := alpha) -> optimize l -> syndrome -> decode
    -> verify -> privacy amplification.

    No key material is returned on any abort path.
    """
    if pair.size != params.N:
        raise ValidationError(f"Pair holds {pair.size} bits, params expect N={params.N}")
    code = code or standard_code(params.r, params.key_bits)
    if code.cols != params.key_bits or code.rows != params.r:
        raise ValidationError(f"{code!r} does not match r={params.r}, N-n={params.key_bits}")
    seed = pair.rng_seed if seed is None else seed
    rng = np.random.default_rng([seed, 1])

    try:
        alpha, _, remainder = sample_and_estimate(pair, params.n, seed)
    except QberAbort as e:
        logger.warning(f"Session aborted: {e}")
        return SessionOutcome(status=SessionStatus.ABORT_QBER, alpha=e.alpha)

    config = optimizer_config.model_copy(update={"params": params}).with_delta(alpha)
    result = optimize(config)
    if not result.feasible:
        logger.warning(f"Session aborted: no feasible key length at alpha={alpha:.5f}")
        return SessionOutcome(status=SessionStatus.ABORT_INFEASIBLE, alpha=alpha, report=result)

    alice_rem = pair.alice_bits[remainder]
    decoder = MinSumDecoder(code)
    try:
        corrected = decoder.decode(pair.bob_bits[remainder], ec_syndrome(alice_rem, code), alpha)
    except DetectableFailure as e:
        logger.warning(f"Session aborted: {e}")
        return SessionOutcome(status=SessionStatus.ABORT_EC_DETECTABLE, alpha=alpha,
                              report=result, leaked_bits=params.r,
                              decoder_iterations=e.iterations)

    hash_seed = verification_seed(alice_rem.size, params.t, rng)
    try:
        verify_correction(alice_rem, corrected, params.t, hash_seed)
    except VerificationAbort as e:
        logger.warning(f"Session aborted: {e}")
        return SessionOutcome(status=SessionStatus.ABORT_VERIFY, alpha=alpha, report=result,
                              leaked_bits=params.r + params.t,
                              decoder_iterations=decoder.iterations)

    pa_seed = rng.integers(0, 2, toeplitz_seed_length(alice_rem.size, result.l_max),
                           dtype=np.uint8)
    outcome = SessionOutcome(
        status=SessionStatus.COMPLETED,
        alpha=alpha,
        final_key=privacy_amplify(alice_rem, result.l_max, pa_seed),
        peer_key=privacy_amplify(corrected, result.l_max, pa_seed),
        report=result,
        leaked_bits=params.r + params.t,
        decoder_iterations=decoder.iterations,
    )
    logger.info(f"Session completed: alpha={alpha:.5f} l={result.l_max}")
    return outcome
