"""
Finite-key failure probabilities and deviation bounds for BBM92 post-processing.

Every function here is pure. Scalar entry points validate their inputs; the
``*_array`` variants skip validation and broadcast over numpy arrays for the
optimizer's grid scans.
"""
import math
from fractions import Fraction
from functools import lru_cache
from typing import Literal, Optional, Tuple, Union

import numpy as np
from scipy import special

from app.core.config import settings
from app.core.errors import ConvergenceError, ValidationError

ArrayLike = Union[float, np.ndarray]
Rounding = Literal["floor", "round"]

LN2 = math.log(2.0)


def binary_entropy(x: ArrayLike) -> ArrayLike:
    """
    Binary entropy h2(x) in bits, with 0*log2(0) = 0.

    Args:
        x: Probability (scalar or array) in [0, 1]

    Returns:
        h2(x), same shape as the input
    """
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any((arr < 0.0) | (arr > 1.0)):
        raise ValidationError(f"binary_entropy domain is [0, 1], got {x}")
    h = (special.entr(arr) + special.entr(1.0 - arr)) / LN2
    if h.ndim == 0:
        return float(h)
    return h


def eps_auth(q: int, p: int) -> float:
    """Forgery probability q * 2^-p of q Wegman-Carter tags of p bits, clamped to 1"""
    if q < 1 or p < 1:
        raise ValidationError(f"eps_auth needs q >= 1 and p >= 1, got q={q}, p={p}")
    return min(1.0, math.ldexp(float(q), -p))


def verification_bits(s: int) -> int:
    """t = ceil((s + 2) * log2(10)), so that 2^-t <= 10^-(s+2)"""
    if s < 1:
        raise ValidationError(f"s must be >= 1, got {s}")
    return math.ceil((s + 2) * math.log2(10))


def eps_ec_and_t(s: int) -> Tuple[int, float]:
    """
    Error-correction verification length and failure probability.

    Returns:
        (t, 2^-t)
    """
    t = verification_bits(s)
    return t, math.ldexp(1.0, -t)


def syndrome_floor(N: int, n: int, delta: float) -> float:
    """Minimum syndrome length r' = 1.19 (N - n) h2(delta) for reliable decoding"""
    return 1.19 * (N - n) * binary_entropy(delta)


def log2_eps_pa_array(l: ArrayLike, t: int, nu: ArrayLike, delta: float, r: int,
                      n: int) -> ArrayLike:
    """log2 of the privacy-amplification failure probability (unclamped)"""
    x = np.asarray(delta + np.asarray(nu, dtype=float))
    h = (special.entr(x) + special.entr(1.0 - x)) / LN2
    exponent = -n * (1.0 - h) + r + t + np.asarray(l, dtype=float)
    return exponent / 2.0 - 1.0


def eps_pa(l: int, t: int, nu: float, delta: float, r: int, n: int) -> float:
    """
    Privacy-amplification failure probability 1/2 * sqrt(2^E) with
    E = -n (1 - h2(delta + nu)) + r + t + l.

    ``n`` is the number of bits entering privacy amplification (N - n of the
    raw key). Evaluated as 2^(E/2 - 1) so neither 2^E nor its root is formed.

    Args:
        l: Candidate final key length (> 0)
        t: Verification hash length
        nu: Deviation estimate
        delta: QBER threshold
        r: Syndrome length
        n: Bits entering privacy amplification

    Returns:
        Failure probability clamped to [0, 1]
    """
    if l <= 0:
        raise ValidationError(f"eps_pa needs l > 0, got {l}")
    if not 0.0 <= delta + nu < 0.5:
        raise ValidationError(f"eps_pa needs 0 <= delta + nu < 1/2, got {delta + nu}")
    log2_value = float(log2_eps_pa_array(l, t, nu, delta, r, n))
    return min(1.0, math.pow(2.0, log2_value)) if log2_value < 1024 else 1.0


def serfling_array(nu: ArrayLike, mu: ArrayLike, delta: float, N: int, n: int) -> ArrayLike:
    """Unclamped sqrt(theta1 + theta2) broadcast over (nu, mu)"""
    nu = np.asarray(nu, dtype=float)
    mu = np.asarray(mu, dtype=float)
    m_err = np.floor(N * (delta + mu))
    gamma = 1.0 / (m_err + 1.0) + 1.0 / (N - m_err + 1.0)
    with np.errstate(over="ignore"):
        theta1 = np.exp(-2.0 * N * n * mu ** 2 / (N - n + 1))
        theta2 = np.exp(-2.0 * gamma * (((N - n) * (nu - mu)) ** 2 - 1.0))
    return np.sqrt(theta1 + theta2)


def eps_pe_serfling(nu: float, mu: float, delta: float, N: int, n: int) -> float:
    """
    Serfling plus hypergeometric-tail estimation failure sqrt(theta1 + theta2).

    The Gamma term uses m = N: m_err = floor(N (delta + mu)), and
    Gamma = 1/(m_err + 1) + 1/(N - m_err + 1).
    """
    if not 0.0 < mu < nu:
        raise ValidationError(f"eps_pe_serfling needs 0 < mu < nu, got mu={mu}, nu={nu}")
    if delta + mu >= 1.0:
        raise ValidationError("eps_pe_serfling needs delta + mu < 1")
    return min(1.0, float(serfling_array(nu, mu, delta, N, n)))


def _gamma_plus_from_log(delta: ArrayLike, log_inv_eps: ArrayLike, n: int) -> ArrayLike:
    kappa = 2.0 * np.asarray(log_inv_eps, dtype=float) / (9.0 * n)
    root = np.sqrt(kappa * (kappa + delta - delta * delta))
    return (3.0 * kappa + (1.0 - 2.0 * kappa) * delta + 3.0 * root) / (1.0 + 4.0 * kappa)


def gamma_plus_chernoff(delta: float, eps: float, n: int) -> float:
    """
    Relaxed-Chernoff upper confidence bound on the true error rate.

    kappa = 2 ln(1/eps) / (9 n);
    Gamma+ = (3 kappa + (1 - 2 kappa) delta + 3 sqrt(kappa (kappa + delta - delta^2)))
             / (1 + 4 kappa)
    """
    if not 0.0 < eps <= 1.0:
        raise ValidationError(f"gamma_plus_chernoff needs 0 < eps <= 1, got {eps}")
    if n < 1:
        raise ValidationError(f"gamma_plus_chernoff needs n >= 1, got {n}")
    return float(_gamma_plus_from_log(delta, -math.log(eps), n))


def nu_from_gamma(gamma_plus: ArrayLike, delta: float, N: int, n: int) -> ArrayLike:
    """nu = N (Gamma+ - delta) / (N - n); equals 2 (Gamma+ - delta) when n = N/2"""
    if n >= N:
        raise ValidationError(f"nu_from_gamma needs n < N, got n={n}, N={N}")
    if np.any(np.asarray(gamma_plus) < delta):
        raise ValidationError("nu_from_gamma needs gamma_plus >= delta")
    value = N * (np.asarray(gamma_plus, dtype=float) - delta) / (N - n)
    return float(value) if np.ndim(value) == 0 else value


def eps_pe_chernoff_array(delta: float, nu: ArrayLike, N: int, n: int,
                          tol: Optional[float] = None, y_max: Optional[float] = None,
                          max_iters: Optional[int] = None) -> np.ndarray:
    """
    Vectorized bisection of eps_pe_chernoff over many target nu values.

    Targets that do not converge within the iteration cap come back as NaN.
    """
    tol = settings.CHERNOFF_TOL if tol is None else tol
    y_max = settings.CHERNOFF_Y_MAX if y_max is None else y_max
    max_iters = settings.CHERNOFF_MAX_ITERS if max_iters is None else max_iters

    target = np.atleast_1d(np.asarray(nu, dtype=float))
    lo = np.zeros_like(target)
    hi = np.full_like(target, y_max)
    result = np.full_like(target, np.nan)
    active = np.ones(target.shape, dtype=bool)
    scale = N / (N - n)

    for _ in range(max_iters):
        if not active.any():
            break
        mid = (lo + hi) / 2.0
        nu_pred = scale * (_gamma_plus_from_log(delta, mid, n) - delta)
        done = active & (np.abs(nu_pred - target) <= tol)
        result[done] = np.exp(-mid[done])
        active &= ~done
        below = nu_pred < target
        lo = np.where(active & below, mid, lo)
        hi = np.where(active & ~below, mid, hi)
    return result


def eps_pe_chernoff(delta: float, nu: float, N: int, n: int, tol: Optional[float] = None) -> float:
    """
    Chernoff estimation failure for a target deviation nu.

    Bisects y in [0, 1000] (at most 2000 iterations) until the nu predicted by
    Gamma+(delta, e^-y, n) matches the target within tol, and returns e^-y.
    Larger y means smaller eps and larger nu.

    Raises:
        ConvergenceError: the target was not matched within the iteration cap
    """
    if nu <= 0:
        raise ValidationError(f"eps_pe_chernoff needs nu > 0, got {nu}")
    tol = settings.CHERNOFF_TOL if tol is None else tol
    if tol <= 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    value = float(eps_pe_chernoff_array(delta, nu, N, n, tol=tol)[0])
    if math.isnan(value):
        raise ConvergenceError(f"Chernoff bisection did not reach nu={nu} within tol={tol}")
    return value


def _log_comb(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    return special.gammaln(np.asarray(a) + 1.0) - special.gammaln(np.asarray(b) + 1.0) \
        - special.gammaln(np.asarray(a) - np.asarray(b) + 1.0)


@lru_cache(maxsize=65536)
def _hypergeom_cdf_cached(x_obs: int, N: int, K: int, n: int, exact_max_n: int) -> float:
    lo = max(0, n - (N - K))
    hi = min(x_obs, K, n)
    if hi < lo:
        return 0.0
    if N <= exact_max_n:
        num = sum(math.comb(K, x) * math.comb(N - K, n - x) for x in range(lo, hi + 1))
        return float(Fraction(num, math.comb(N, n)))
    x = np.arange(lo, hi + 1, dtype=float)
    logs = _log_comb(K, x) + _log_comb(N - K, n - x) - _log_comb(N, n)
    return min(1.0, float(np.exp(special.logsumexp(logs))))


def hypergeom_cdf(x_obs: int, N: int, K: int, n: int, exact_max_n: Optional[int] = None) -> float:
    """
    P[X <= x_obs] for X ~ Hypergeometric(population N, K marked, n drawn).

    Exact integer binomials are used up to ``exact_max_n`` (HYPERGEOM_EXACT_MAX_N),
    log-gamma terms combined with logsumexp beyond it.

    Args:
        x_obs: Observed count; negative values give the empty sum
        N: Population size
        K: Marked items in the population
        n: Sample size

    Returns:
        Cumulative probability in [0, 1]
    """
    if not 0 <= K <= N or not 0 <= n <= N:
        raise ValidationError(f"hypergeom_cdf needs 0 <= K, n <= N, got N={N}, K={K}, n={n}")
    if x_obs < 0:
        return 0.0
    if x_obs >= min(n, K):
        return 1.0
    exact_max_n = settings.HYPERGEOM_EXACT_MAX_N if exact_max_n is None else exact_max_n
    return _hypergeom_cdf_cached(int(x_obs), int(N), int(K), int(n), int(exact_max_n))


def observed_errors(delta: float, n: int, rounding: Rounding = "floor") -> int:
    """
    Observed error count x_obs from delta * n.

    ``floor`` is the normative rule; ``round`` reproduces the rounding variant.
    The floor absorbs representation error below 1e-9 (0.0627 * 10000 -> 627).
    """
    value = delta * n
    if rounding == "floor":
        return math.floor(value + 1e-9)
    if rounding == "round":
        return int(round(value))
    raise ValidationError(f"Unknown rounding mode: {rounding}")


def cp_marked_count(delta: ArrayLike, nu: ArrayLike, N: int, n: int) -> ArrayLike:
    """K = round(N (delta + nu) - n nu), clamped to [0, N]"""
    K = np.rint(N * (np.asarray(delta) + np.asarray(nu)) - n * np.asarray(nu))
    K = np.clip(K, 0, N).astype(np.int64)
    return int(K) if K.ndim == 0 else K


def eps_pe_cp(delta: float, nu: float, N: int, n: int, rounding: Rounding = "floor",
              exact_max_n: Optional[int] = None) -> float:
    """
    Exact Clopper-Pearson (hypergeometric) estimation failure.

    Probability of observing at most x_obs errors in the n sampled bits when
    K = round(N (delta + nu) - n nu) errors are present among all N bits.
    """
    if nu < 0:
        raise ValidationError(f"eps_pe_cp needs nu >= 0, got {nu}")
    K = cp_marked_count(delta, nu, N, n)
    x_obs = observed_errors(delta, n, rounding)
    return hypergeom_cdf(x_obs, N, K, n, exact_max_n=exact_max_n)


def eps_pe_cp_array(delta: float, nu: np.ndarray, N: int, n: int,
                    rounding: Rounding = "floor", exact_max_n: Optional[int] = None) -> np.ndarray:
    """eps_pe_cp over a nu grid, evaluating the tail once per distinct K"""
    Ks = cp_marked_count(delta, np.asarray(nu, dtype=float), N, n)
    x_obs = observed_errors(delta, n, rounding)
    unique_k, inverse = np.unique(Ks, return_inverse=True)
    tails = np.array([hypergeom_cdf(x_obs, N, int(k), n, exact_max_n=exact_max_n)
                      for k in unique_k])
    return tails[inverse]


def budget_total(eps_auth_value: float, eps_ec_value: float, eps_pa_value: float,
                 eps_pe_value: float) -> float:
    """Composable sum eps_auth + eps_ec + eps_pa + 2 eps_pe"""
    return eps_auth_value + eps_ec_value + eps_pa_value + 2.0 * eps_pe_value
