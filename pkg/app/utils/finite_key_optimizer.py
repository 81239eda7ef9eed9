"""
Key-length optimizer: maximize l over the deviation grid subject to
eps_auth + eps_ec + eps_pa + 2 eps_pe <= eps_QKD.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import timedelta
from typing import Dict, List, Optional

import numpy as np

from app.core.errors import ValidationError
from app.schemas.security import (
    EpsilonBudget,
    OptimizationResult,
    OptimizerConfig,
    PeType,
    SecurityParams,
)
from app.utils.finite_key_bounds import (
    binary_entropy,
    budget_total,
    eps_pe_chernoff_array,
    eps_pe_cp_array,
    log2_eps_pa_array,
    serfling_array,
)

logger = logging.getLogger(__name__)


@dataclass
class _ChunkScan:
    """Best candidate and counters for one slice of the nu grid"""
    offset: int
    best_l: int = -1
    nu_idx: int = -1
    mu_idx: int = -1
    eps_pe: float = math.nan
    eps_pa: float = math.nan
    first_positive_b: int = -1
    min_eps_pe: float = math.inf
    max_b: float = -math.inf
    n_points: int = 0
    n_budget_exhausted: int = 0
    n_nonpositive_l: int = 0
    n_over_budget: int = 0


def nu_grid(config: OptimizerConfig) -> np.ndarray:
    """Linspace(nu_lo, 0.5 - delta - nu_lo, nu_grid_points)"""
    hi = 0.5 - config.params.delta - config.nu_lo
    if hi <= config.nu_lo:
        return np.empty(0)
    return np.linspace(config.nu_lo, hi, config.nu_grid_points)


def refined_points(points: int) -> int:
    """Grid size whose linspace contains the previous grid (2p - 1)"""
    return 2 * points - 1


def candidate_key_lengths(B: np.ndarray, delta: float, nu: np.ndarray, n: int, r: int,
                          t: int) -> np.ndarray:
    """Array form of candidate_key_length; 0 marks points with no usable length"""
    B = np.asarray(B, dtype=float)
    h = binary_entropy(np.clip(delta + np.asarray(nu, dtype=float), 0.0, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        l_est = np.log2(4.0 * B * B) + n * (1.0 - np.asarray(h)) - r - t
    l = np.floor(np.nan_to_num(l_est, nan=-1.0, neginf=-1.0, posinf=-1.0))
    return np.where((B > 0) & (l > 0), l, 0.0)


def candidate_key_length(B: float, delta: float, nu: float, n: int, r: int,
                         t: int) -> Optional[int]:
    """
    floor(log2(4 B^2) + n (1 - h2(delta + nu)) - r - t), the largest l with eps_pa(l) <= B.

    Args:
        B: Budget left for privacy amplification (eps_QKD - eps_ec - 2 eps_pe - eps_auth)
        n: Bits entering privacy amplification

    Returns:
        Key length, or None when B <= 0 or the length is not positive
    """
    if B <= 0:
        return None
    l = int(candidate_key_lengths(B, delta, nu, n, r, t))
    return l if l > 0 else None


def _eps_pe_block(config: OptimizerConfig, nus: np.ndarray) -> np.ndarray:
    """eps_pe over a slice of the nu grid; 2-D (nu, mu) for serfling"""
    params = config.params
    N, n, delta = params.N, params.n, params.delta
    if config.pe_type == PeType.CP_EXACT:
        return eps_pe_cp_array(delta, nus, N, n, rounding=config.rounding)[:, None]
    if config.pe_type == PeType.CHERNOFF:
        return eps_pe_chernoff_array(delta, nus, N, n)[:, None]

    steps = np.linspace(0.0, 1.0, config.mu_grid_points)[None, :]
    nu_col = nus[:, None]
    mus = config.mu_lo + (nu_col - 2.0 * config.mu_lo) * steps
    values = np.minimum(1.0, serfling_array(nu_col, mus, delta, N, n))
    # no valid mu when nu <= 2 mu_lo
    values[(nu_col <= 2.0 * config.mu_lo).ravel()] = np.nan
    return values


def _scan_chunk(config: OptimizerConfig, nus: np.ndarray, offset: int) -> _ChunkScan:
    params = config.params
    m = params.key_bits
    eps_qkd, eps_ec, eps_a = params.eps_qkd, params.eps_ec, params.eps_auth
    scan = _ChunkScan(offset=offset)

    eps_pe = _eps_pe_block(config, nus)
    finite = np.isfinite(eps_pe)
    eps_pe = np.where(finite, np.minimum(eps_pe, 1.0), np.nan)
    B = eps_qkd - eps_ec - eps_a - 2.0 * eps_pe
    positive = finite & (B > 0)

    scan.n_points = int(eps_pe.size)
    scan.n_budget_exhausted = int(np.count_nonzero(~positive))
    if finite.any():
        scan.min_eps_pe = float(np.nanmin(eps_pe))
        scan.max_b = float(np.nanmax(B))
    rows = np.flatnonzero(positive.any(axis=1))
    if rows.size:
        scan.first_positive_b = offset + int(rows[0])

    l = candidate_key_lengths(B, params.delta, nus[:, None], m, params.r, params.t)
    usable = positive & (l > 0)
    scan.n_nonpositive_l = int(np.count_nonzero(positive & ~usable))
    if not usable.any():
        return scan

    nu_b = np.broadcast_to(nus[:, None], l.shape)
    eps_pa = np.where(
        usable,
        np.exp2(np.minimum(log2_eps_pa_array(l, params.t, nu_b, params.delta, params.r, m), 0.0)),
        np.nan,
    )
    total = eps_a + eps_ec + eps_pa + 2.0 * eps_pe
    accepted = usable & (total <= eps_qkd * (1.0 + config.slack))
    scan.n_over_budget = int(np.count_nonzero(usable & ~accepted))
    if not accepted.any():
        return scan

    # argmax returns the first maximum in C order: smallest nu, then smallest mu
    flat = int(np.argmax(np.where(accepted, l, -1.0)))
    row, col = np.unravel_index(flat, l.shape)
    scan.best_l = int(l[row, col])
    scan.nu_idx = offset + int(row)
    scan.mu_idx = int(col)
    scan.eps_pe = float(eps_pe[row, col])
    scan.eps_pa = float(eps_pa[row, col])
    return scan


def _scan_grid(config: OptimizerConfig, grid: np.ndarray) -> List[_ChunkScan]:
    offsets = list(range(0, grid.size, config.chunk))
    jobs = [(grid[o:o + config.chunk], o) for o in offsets]
    if config.workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(lambda job: _scan_chunk(config, *job), jobs))
    return [_scan_chunk(config, nus, o) for nus, o in jobs]


def _mu_value(config: OptimizerConfig, nu: float, mu_idx: int) -> Optional[float]:
    if config.pe_type != PeType.SERFLING:
        return None
    step = mu_idx / (config.mu_grid_points - 1)
    return float(config.mu_lo + (nu - 2.0 * config.mu_lo) * step)


def _check_params(params: SecurityParams) -> None:
    if params.n != params.N // 2:
        raise ValidationError(
            f"The optimizer fixes n = floor(N/2); got n={params.n} for N={params.N}"
        )


def optimize(config: OptimizerConfig) -> OptimizationResult:
    """
    Maximize the final key length over the nu grid (and mu grid for serfling).

    Each grid point evaluates eps_pe, the remaining budget B, the candidate l
    and re-verifies the full composable budget including eps_pa. Ties on l are
    broken towards the smallest nu, then the smallest mu, so results do not
    depend on how the grid was split across workers.

    Args:
        config: Parameters, bound type and grid resolution

    Returns:
        OptimizationResult; l_max is None when no grid point is feasible
    """
    params = config.params
    _check_params(params)
    started = time.perf_counter()

    grid = nu_grid(config)
    scans = _scan_grid(config, grid) if grid.size else []

    best: Optional[_ChunkScan] = None
    for scan in scans:
        if scan.best_l > 0 and (best is None or scan.best_l > best.best_l):
            best = scan

    diagnostics: Dict[str, float] = {
        "n_points": float(sum(s.n_points for s in scans)),
        "n_budget_exhausted": float(sum(s.n_budget_exhausted for s in scans)),
        "n_nonpositive_l": float(sum(s.n_nonpositive_l for s in scans)),
        "n_over_budget": float(sum(s.n_over_budget for s in scans)),
        "max_B": max((s.max_b for s in scans), default=-math.inf),
    }
    resolution = float(grid[1] - grid[0]) if grid.size > 1 else 0.0
    elapsed = timedelta(seconds=time.perf_counter() - started)

    if best is None:
        min_pe = min((s.min_eps_pe for s in scans), default=1.0)
        budget = EpsilonBudget(
            eps_auth=params.eps_auth, eps_ec=params.eps_ec, eps_pa=0.0,
            eps_pe=min(1.0, min_pe), eps_qkd=params.eps_qkd,
        )
        logger.info(
            f"No feasible key length: pe={config.pe_type.value} s={params.s} "
            f"N={params.N} delta={params.delta:.5f}"
        )
        return OptimizationResult(
            pe_type=config.pe_type, budget=budget, grid_resolution=resolution,
            elapsed=elapsed, diagnostics=diagnostics,
        )

    nu_star = float(grid[best.nu_idx])
    budget = EpsilonBudget(
        eps_auth=params.eps_auth, eps_ec=params.eps_ec, eps_pa=best.eps_pa,
        eps_pe=best.eps_pe, eps_qkd=params.eps_qkd,
    )
    result = OptimizationResult(
        pe_type=config.pe_type,
        l_max=best.best_l,
        nu_star=nu_star,
        mu_star=_mu_value(config, nu_star, best.mu_idx),
        budget=budget,
        grid_resolution=resolution,
        elapsed=elapsed,
        diagnostics=diagnostics,
    )
    logger.info(
        f"Optimized pe={config.pe_type.value} s={params.s} N={params.N} "
        f"delta={params.delta:.5f}: l={result.l_max} nu*={nu_star:.6f} "
        f"in {elapsed.total_seconds():.2f}s"
    )
    return result


def minimal_feasible_nu(config: OptimizerConfig) -> Optional[float]:
    """
    Smallest grid nu with 2 eps_pe < eps_QKD - eps_ec - eps_auth (some mu for serfling).

    Independent of l, so it compares the tightness of the estimation bounds alone.
    """
    _check_params(config.params)
    grid = nu_grid(config)
    for scan in _scan_grid(config, grid) if grid.size else []:
        if scan.first_positive_b >= 0:
            return float(grid[scan.first_positive_b])
    return None


def feasibility_report(result: OptimizationResult,
                       slack: float = 0.0) -> Dict[str, float]:
    """
    Itemized budget of an optimization result for audit and CSV export.

    Returns:
        Mapping with each eps component, the total, eps_QKD, the margin and
        the scan diagnostics
    """
    budget = result.budget
    report: Dict[str, float] = {
        "eps_auth": budget.eps_auth,
        "eps_ec": budget.eps_ec,
        "eps_pa": budget.eps_pa,
        "eps_pe": budget.eps_pe,
        "two_eps_pe": 2.0 * budget.eps_pe,
        "eps_total": budget_total(budget.eps_auth, budget.eps_ec, budget.eps_pa,
                                  budget.eps_pe),
        "eps_qkd": budget.eps_qkd,
        "margin": budget.eps_qkd - budget.eps_total,
        "accepted": float(result.feasible and budget.accepted(slack)),
    }
    report.update(result.diagnostics)
    return report


def optimize_all_bounds(config: OptimizerConfig) -> Dict[PeType, OptimizationResult]:
    """Run the same configuration once per estimation bound"""
    return {
        pe: optimize(config.model_copy(update={"pe_type": pe}))
        for pe in PeType
    }

