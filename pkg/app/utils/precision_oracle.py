"""
200-bit re-evaluation of the finite-key formulas, used to audit the
double-precision path and to recompute stored optimizer budgets.
"""
import itertools
import math
from fractions import Fraction

import mpmath

from app.schemas.security import EpsilonBudget, OptimizationResult, OptimizerConfig, PeType
from app.utils.finite_key_bounds import cp_marked_count, hypergeom_cdf, observed_errors

PRECISION_BITS = 200


def binary_entropy_mp(x) -> mpmath.mpf:
    with mpmath.workprec(PRECISION_BITS):
        x = mpmath.mpf(x)
        if x == 0 or x == 1:
            return mpmath.mpf(0)
        return -x * mpmath.log(x, 2) - (1 - x) * mpmath.log(1 - x, 2)


def eps_pa_mp(l: int, t: int, nu, delta, r: int, n: int) -> mpmath.mpf:
    """1/2 sqrt(2^E) evaluated directly, E = -n (1 - h2(delta + nu)) + r + t + l"""
    with mpmath.workprec(PRECISION_BITS):
        h = binary_entropy_mp(mpmath.mpf(delta) + mpmath.mpf(nu))
        exponent = -n * (1 - h) + r + t + l
        return mpmath.mpf("0.5") * mpmath.sqrt(mpmath.power(2, exponent))


def eps_pe_serfling_mp(nu, mu, delta, N: int, n: int) -> mpmath.mpf:
    with mpmath.workprec(PRECISION_BITS):
        nu, mu, delta = mpmath.mpf(nu), mpmath.mpf(mu), mpmath.mpf(delta)
        m_err = mpmath.floor(N * (delta + mu))
        gamma = 1 / (m_err + 1) + 1 / (N - m_err + 1)
        theta1 = mpmath.exp(-2 * N * n * mu ** 2 / (N - n + 1))
        theta2 = mpmath.exp(-2 * gamma * (((N - n) * (nu - mu)) ** 2 - 1))
        return mpmath.sqrt(theta1 + theta2)


def gamma_plus_chernoff_mp(delta, eps, n: int) -> mpmath.mpf:
    with mpmath.workprec(PRECISION_BITS):
        delta, eps = mpmath.mpf(delta), mpmath.mpf(eps)
        kappa = 2 * mpmath.log(1 / eps) / (9 * n)
        root = mpmath.sqrt(kappa * (kappa + delta - delta ** 2))
        return (3 * kappa + (1 - 2 * kappa) * delta + 3 * root) / (1 + 4 * kappa)


def hypergeom_cdf_exhaustive(x_obs: int, N: int, K: int, n: int) -> Fraction:
    """
    Enumerate every n-subset of a population whose first K items are marked.

    Only for tiny populations; the count of subsets is C(N, n).
    """
    favourable = 0
    for subset in itertools.combinations(range(N), n):
        if sum(1 for i in subset if i < K) <= x_obs:
            favourable += 1
    return Fraction(favourable, math.comb(N, n))


def recompute_budget(result: OptimizationResult, config: OptimizerConfig) -> EpsilonBudget:
    """
    Recompute the budget of a feasible result from its witnesses.

    eps_pa and the Serfling/Chernoff-side quantities are re-evaluated at 200
    bits; the Chernoff eps_pe is the bisection output itself, so it is taken
    from the result. CP tails are recomputed with exact binomials.
    """
    if not result.feasible:
        raise ValueError("Cannot recompute the budget of an infeasible result")
    params = config.params
    m = params.key_bits
    if result.pe_type == PeType.SERFLING:
        eps_pe = float(min(1, eps_pe_serfling_mp(result.nu_star, result.mu_star,
                                                 params.delta, params.N, params.n)))
    elif result.pe_type == PeType.CP_EXACT:
        K = cp_marked_count(params.delta, result.nu_star, params.N, params.n)
        x_obs = observed_errors(params.delta, params.n, config.rounding)
        eps_pe = hypergeom_cdf(x_obs, params.N, K, params.n, exact_max_n=params.N)
    else:
        eps_pe = result.budget.eps_pe
    eps_pa = float(min(1, eps_pa_mp(result.l_max, params.t, result.nu_star,
                                    params.delta, params.r, m)))
    return EpsilonBudget(
        eps_auth=params.eps_auth, eps_ec=params.eps_ec, eps_pa=eps_pa,
        eps_pe=eps_pe, eps_qkd=params.eps_qkd,
    )
