"""
Test the finite-key failure probabilities and deviation bounds
"""
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from app.core.errors import ConvergenceError, ValidationError
from app.schemas.security import SecurityParams
from app.utils.finite_key_bounds import (
    binary_entropy,
    budget_total,
    cp_marked_count,
    eps_auth,
    eps_ec_and_t,
    eps_pa,
    eps_pe_chernoff,
    eps_pe_chernoff_array,
    eps_pe_cp,
    eps_pe_cp_array,
    eps_pe_serfling,
    gamma_plus_chernoff,
    hypergeom_cdf,
    nu_from_gamma,
    observed_errors,
    syndrome_floor,
    verification_bits,
)
from app.utils.precision_oracle import (
    eps_pa_mp,
    eps_pe_serfling_mp,
    gamma_plus_chernoff_mp,
    hypergeom_cdf_exhaustive,
)


def test_binary_entropy_values():
    """h2 is 1 at one half, 0 at the ends and symmetric"""
    assert binary_entropy(0.5) == pytest.approx(1.0)
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    assert binary_entropy(0.11) == pytest.approx(binary_entropy(0.89))
    values = binary_entropy(np.array([0.0, 0.25, 0.5]))
    assert values.shape == (3,)
    assert values[1] == pytest.approx(0.8112781244591328)


@pytest.mark.parametrize("x", [-0.1, 1.5, float("nan")])
def test_binary_entropy_domain(x):
    with pytest.raises(ValidationError):
        binary_entropy(x)


def test_eps_auth():
    assert eps_auth(1, 61) == 2.0 ** -61
    assert eps_auth(4, 61) == 2.0 ** -59
    assert eps_auth(2 ** 70, 61) == 1.0
    with pytest.raises(ValidationError):
        eps_auth(0, 61)


def test_verification_bits():
    """t = ceil((s + 2) log2 10)"""
    assert verification_bits(6) == 27
    assert verification_bits(9) == 37
    t, eps = eps_ec_and_t(6)
    assert t == 27
    assert eps == 2.0 ** -27
    assert eps <= 10.0 ** -8


def test_syndrome_floor():
    expected = 1.19 * 10000 * binary_entropy(0.0627)
    assert syndrome_floor(20000, 10000, 0.0627) == pytest.approx(expected)
    assert syndrome_floor(20000, 10000, 0.0627) < 5000


def test_syndrome_length_check():
    """With the check on, r must reach 1.19 (N - n) h2(delta)"""
    floor = syndrome_floor(20000, 10000, 0.05)
    r_min = math.ceil(floor)
    assert SecurityParams(N=20000, r=r_min, delta=0.05, r_prime_check=True).r == r_min
    with pytest.raises(ValueError, match="below"):
        SecurityParams(N=20000, r=r_min - 1, delta=0.05, r_prime_check=True)
    assert SecurityParams(N=20000, r=r_min - 1, delta=0.05).r == r_min - 1


def test_delta_above_qber_threshold_rejected():
    SecurityParams(N=20000, r=5000, delta=0.11)
    with pytest.raises(ValueError):
        SecurityParams(N=20000, r=5000, delta=0.1101)
    with pytest.raises(ValueError):
        SecurityParams(N=20000, r=5000, delta=0.12, r_prime_check=True)


def test_eps_pa_formula():
    """eps_pa = 1/2 sqrt(2^E)"""
    l, t, nu, delta, r, n = 10, 27, 0.01, 0.05, 20, 1000
    exponent = -n * (1 - binary_entropy(delta + nu)) + r + t + l
    assert eps_pa(l, t, nu, delta, r, n) == pytest.approx(0.5 * math.sqrt(2.0 ** exponent),
                                                          rel=1e-12)


def test_eps_pa_clamps_and_validates():
    assert eps_pa(10 ** 6, 27, 0.01, 0.05, 5000, 10000) == 1.0
    with pytest.raises(ValidationError):
        eps_pa(0, 27, 0.01, 0.05, 20, 1000)
    with pytest.raises(ValidationError):
        eps_pa(10, 27, 0.3, 0.25, 20, 1000)


def test_eps_pa_matches_high_precision():
    """Double and 200-bit evaluations agree to 12 significant digits"""
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(500, 2001))
        delta = float(rng.uniform(0.01, 0.1))
        nu = float(rng.uniform(0.001, 0.05))
        r = int(rng.integers(0, n // 5))
        l = int(rng.integers(1, 51))
        reference = float(eps_pa_mp(l, 27, nu, delta, r, n))
        assert eps_pa(l, 27, nu, delta, r, n) == pytest.approx(reference, rel=1e-12)


def test_eps_pe_serfling_matches_formula():
    nu, mu, delta, N, n = 0.04, 0.01, 0.0627, 20000, 10000
    reference = float(eps_pe_serfling_mp(nu, mu, delta, N, n))
    assert eps_pe_serfling(nu, mu, delta, N, n) == pytest.approx(reference, rel=1e-9)


def test_eps_pe_serfling_decreases_in_nu():
    values = [eps_pe_serfling(nu, 0.005, 0.0627, 20000, 10000) for nu in (0.01, 0.02, 0.04)]
    assert values[0] >= values[1] >= values[2]


def test_eps_pe_serfling_requires_mu_below_nu():
    with pytest.raises(ValidationError):
        eps_pe_serfling(0.01, 0.02, 0.0627, 20000, 10000)
    with pytest.raises(ValidationError):
        eps_pe_serfling(0.01, 0.0, 0.0627, 20000, 10000)


def test_gamma_plus_chernoff():
    """Upper confidence bound lies above delta and matches the closed form"""
    value = gamma_plus_chernoff(0.0627, 1e-7, 10000)
    assert value > 0.0627
    assert value == pytest.approx(float(gamma_plus_chernoff_mp(0.0627, 1e-7, 10000)), rel=1e-12)
    with pytest.raises(ValidationError):
        gamma_plus_chernoff(0.0627, 0.0, 10000)


def test_nu_from_gamma_half_sample():
    """nu = 2 (Gamma+ - delta) when n = N/2"""
    assert nu_from_gamma(0.08, 0.06, 20000, 10000) == pytest.approx(0.04)
    with pytest.raises(ValidationError):
        nu_from_gamma(0.05, 0.06, 20000, 10000)


def test_eps_pe_chernoff_inverts_gamma_plus():
    """The bisection output reproduces the target nu"""
    delta, N, n = 0.0627, 20000, 10000
    for nu in (0.01, 0.03, 0.05):
        eps = eps_pe_chernoff(delta, nu, N, n)
        recovered = nu_from_gamma(gamma_plus_chernoff(delta, eps, n), delta, N, n)
        assert recovered == pytest.approx(nu, abs=1e-7)


def test_eps_pe_chernoff_monotone():
    values = eps_pe_chernoff_array(0.0627, np.array([0.01, 0.02, 0.04]), 20000, 10000)
    assert values[0] > values[1] > values[2]


def test_eps_pe_chernoff_unreachable_target():
    with pytest.raises(ConvergenceError):
        eps_pe_chernoff(0.0627, 10.0, 20000, 10000)
    with pytest.raises(ValidationError):
        eps_pe_chernoff(0.0627, 0.0, 20000, 10000)


def test_hypergeom_cdf_matches_enumeration():
    """Exhaustive subset enumeration on every tiny instance"""
    for N in range(1, 9):
        for K in range(N + 1):
            for n in range(N + 1):
                for x in range(n + 1):
                    exact = hypergeom_cdf_exhaustive(x, N, K, n)
                    assert hypergeom_cdf(x, N, K, n) == pytest.approx(float(exact), abs=1e-15)


def subset_counts(N: int, K: int) -> list:
    """counts[n][k]: n-subsets of N items holding k of the K marked ones, built item by item"""
    counts = [[1]]
    for item in range(N):
        marked = int(item < K)
        grown = [[0] * (len(counts) + 1) for _ in range(len(counts) + 1)]
        for n, row in enumerate(counts):
            for k, ways in enumerate(row):
                grown[n][k] += ways
                grown[n + 1][k + marked] += ways
        counts = grown
    return counts


def test_hypergeom_cdf_exact_up_to_twenty():
    """Every (K, n, x) with N <= 20 against direct subset counts"""
    for N in range(1, 21):
        for K in range(N + 1):
            counts = subset_counts(N, K)
            for n in range(N + 1):
                total = sum(counts[n])
                assert total == math.comb(N, n)
                favourable = 0
                for x in range(n + 1):
                    favourable += counts[n][x]
                    expected = favourable / total
                    assert hypergeom_cdf(x, N, K, n) == pytest.approx(expected, abs=1e-15)


def test_hypergeom_cdf_log_path_agrees_with_exact():
    for K in (10, 40, 90):
        for x in (0, 3, 8):
            exact = hypergeom_cdf(x, 200, K, 100)
            approx = hypergeom_cdf(x, 200, K, 100, exact_max_n=0)
            assert approx == pytest.approx(exact, rel=1e-9)


def test_hypergeom_cdf_large_population():
    """logsumexp path against scipy at the Table-1 size"""
    N, n, K, x = 20000, 10000, 1300, 627
    expected = stats.hypergeom(N, K, n).cdf(x)
    assert hypergeom_cdf(x, N, K, n) == pytest.approx(expected, rel=1e-8)


def test_hypergeom_cdf_edges():
    assert hypergeom_cdf(-1, 10, 5, 5) == 0.0
    assert hypergeom_cdf(5, 10, 5, 5) == 1.0
    with pytest.raises(ValidationError):
        hypergeom_cdf(1, 10, 11, 5)


def test_observed_errors_rounding():
    """Floor is normative; 0.0627 * 10000 gives 627 despite representation error"""
    assert observed_errors(0.0627, 10000) == 627
    assert observed_errors(0.06276, 10000, "round") == 628
    assert observed_errors(0.06276, 10000, "floor") == 627
    with pytest.raises(ValidationError):
        observed_errors(0.1, 100, "ceil")


def test_cp_marked_count():
    assert cp_marked_count(0.05, 0.01, 20000, 10000) == 1100
    assert cp_marked_count(0.0, 0.0, 100, 50) == 0
    counts = cp_marked_count(0.05, np.array([0.0, 0.01]), 20000, 10000)
    assert counts.tolist() == [1000, 1100]


def test_eps_pe_cp_monotone_and_vectorized():
    nus = np.array([0.005, 0.01, 0.02])
    values = eps_pe_cp_array(0.0627, nus, 20000, 10000)
    assert values[0] >= values[1] >= values[2]
    for nu, value in zip(nus, values):
        assert eps_pe_cp(0.0627, float(nu), 20000, 10000) == pytest.approx(value)
    with pytest.raises(ValidationError):
        eps_pe_cp(0.0627, -0.01, 20000, 10000)


def test_budget_total():
    """eps_auth + eps_ec + eps_pa + 2 eps_pe"""
    assert budget_total(1.0, 2.0, 3.0, 4.0) == 14.0
