"""Harvest-then-transmit rate model and the search over the harvesting fraction.

A block of unit length is split into a harvesting phase of length ``t``
and a transmission phase of length ``1 - t``. The harvested energy
``P |h|^2 t`` is spent over the transmission phase, giving a mean photon
number per symbol of ``P |h|^2 t / (1 - t)``. The effective rate is
``log2(M) (1 - t) (1 - P_e)``.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .binary import helstrom_binary, helstrom_bpsk_noiseless
from .errors import BackendMismatch, BracketError, ConvergenceError, DomainError, WpqError
from .fock import TRUNC_TOL, thermal_displaced_rho
from .povm import DiscriminationProblem, SolverOptions, solve_min_error_povm
from .srm import srm_error_exact, srm_error_large_m

log = logging.getLogger(__name__)

PLATEAU_SLACK = 1e-12


class ErrorBackend(str, enum.Enum):
    ANALYTIC_BPSK_NOISELESS = "analytic_bpsk_noiseless"
    SPECTRAL_BINARY = "spectral_binary"
    SRM_EXACT = "srm_exact"
    SRM_LARGE_M = "srm_large_m"
    POVM_SDP = "povm_sdp"

    @classmethod
    def auto(cls, m: int, n_a: float) -> "ErrorBackend":
        """Cheapest exact backend for the case split BPSK/M-PSK x noiseless/noisy."""
        if m == 2:
            return cls.ANALYTIC_BPSK_NOISELESS if n_a == 0 else cls.SPECTRAL_BINARY
        return cls.SRM_EXACT if n_a == 0 else cls.POVM_SDP

    def check(self, m: int, n_a: float) -> None:
        if self in (ErrorBackend.ANALYTIC_BPSK_NOISELESS, ErrorBackend.SPECTRAL_BINARY) and m != 2:
            raise BackendMismatch(f"{self.value} requires M=2, got M={m}")
        if self in (ErrorBackend.ANALYTIC_BPSK_NOISELESS, ErrorBackend.SRM_EXACT, ErrorBackend.SRM_LARGE_M) and n_a != 0:
            raise BackendMismatch(f"{self.value} requires a noiseless channel, got N_a={n_a}")


@dataclass(frozen=True)
class SystemConfig:
    power: float
    channel_gain: float = 1.0
    thermal_photons: float = 0.0
    modulation_order: int = 2
    n_cut: int = 40
    grid_points: int = 1000
    trunc_tol: float = TRUNC_TOL
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.power < 0:
            raise DomainError("power must be >= 0")
        if self.channel_gain <= 0:
            raise DomainError("channel gain must be > 0")
        if self.thermal_photons < 0:
            raise DomainError("thermal photon number must be >= 0")
        if self.modulation_order < 2:
            raise DomainError("modulation order must be >= 2")
        if self.n_cut < 1 or self.grid_points < 1:
            raise DomainError("n_cut and grid_points must be >= 1")


@dataclass(frozen=True)
class EnergySplit:
    t: float
    harvested_energy: float
    photon_rate: float


def _check_t(t: float) -> None:
    if not 0.0 < t < 1.0:
        raise DomainError(f"harvesting fraction must lie in (0, 1), got {t}")


def photon_rate(config: SystemConfig, t: float) -> float:
    _check_t(t)
    return config.power * config.channel_gain * t / (1.0 - t)


def energy_split(config: SystemConfig, t: float) -> EnergySplit:
    alpha = photon_rate(config, t)
    return EnergySplit(t, config.power * t * config.channel_gain, alpha)


def psk_amplitudes(m: int, alpha: float) -> np.ndarray:
    """Amplitudes ``sqrt(alpha) exp(-2 pi i k / M)``, ``k = 0..M-1``."""
    return math.sqrt(alpha) * np.exp(-2j * np.pi * np.arange(m) / m)


def psk_states(m: int, alpha: float, n_a: float, n_cut: int, trunc_tol: float = TRUNC_TOL):
    return [thermal_displaced_rho(mu, n_a, n_cut, trunc_tol) for mu in psk_amplitudes(m, alpha)]


def error_probability(config: SystemConfig, alpha: float, backend: ErrorBackend) -> float:
    m, n_a = config.modulation_order, config.thermal_photons
    backend = ErrorBackend(backend)
    backend.check(m, n_a)
    if backend is ErrorBackend.ANALYTIC_BPSK_NOISELESS:
        return helstrom_bpsk_noiseless(alpha)
    if backend is ErrorBackend.SRM_EXACT:
        return srm_error_exact(m, alpha)
    if backend is ErrorBackend.SRM_LARGE_M:
        return srm_error_large_m(m, alpha)
    states = psk_states(m, alpha, n_a, config.n_cut, config.trunc_tol)
    if backend is ErrorBackend.SPECTRAL_BINARY:
        return helstrom_binary(states[0], states[1]).p_error
    report = solve_min_error_povm(DiscriminationProblem(states), config.solver)
    if not report.converged:
        raise ConvergenceError(
            f"POVM solver did not certify optimality (residual {report.certificate_residual:.3e})", report
        )
    return report.p_error


def effective_rate(config: SystemConfig, t: float, backend: ErrorBackend | str | None = None):
    """Effective rate and error probability at harvesting fraction ``t``.

    Returns:
        ``(rate, p_error)`` with ``rate = log2(M) (1 - t) (1 - p_error)``.
    """
    m = config.modulation_order
    backend = ErrorBackend.auto(m, config.thermal_photons) if backend in (None, "auto") else ErrorBackend(backend)
    alpha = photon_rate(config, t)
    pe = error_probability(config, alpha, backend)
    return math.log2(m) * (1.0 - t) * (1.0 - pe), pe


def time_grid(k: int) -> np.ndarray:
    """``K`` points ``i / (K + 1)``, symmetric inside (0, 1)."""
    return np.arange(1, k + 1) / (k + 1.0)


@dataclass
class RateProfile:
    """Effective rate sampled over the harvesting-fraction grid.

    Failed points carry NaN in ``p_errors`` and ``rates`` and are excluded
    from the argmax. ``at_boundary`` is set when the argmax is the first or
    last usable grid point, in which case a finer grid may move it.
    """

    ts: np.ndarray
    p_errors: np.ndarray
    rates: np.ndarray
    failed: np.ndarray
    t_star: float
    r_star: float
    argmax: int
    n_failed: int
    at_boundary: bool
    backend: ErrorBackend

    @property
    def p_error_star(self) -> float:
        return float(self.p_errors[self.argmax]) if self.argmax >= 0 else math.nan

    def is_unimodal(self, slack: float = PLATEAU_SLACK) -> bool:
        """True if the usable rates rise up to the argmax and fall after it."""
        r = self.rates[~self.failed]
        if r.size < 2:
            return True
        i = int(np.argmax(r))
        d = np.diff(r)
        return bool(np.all(d[:i] > -slack) and np.all(d[i:] < slack))

    def bracket(self) -> tuple[float, float]:
        """Grid neighbours of the argmax, clipped to (0, 1)."""
        k = self.ts.size
        lo = self.ts[self.argmax - 1] if self.argmax > 0 else self.ts[0] / 2
        hi = self.ts[self.argmax + 1] if self.argmax < k - 1 else (1.0 + self.ts[-1]) / 2
        return float(lo), float(hi)


def _grid_point(args):
    config, t, backend = args
    try:
        rate, pe = effective_rate(config, t, backend)
        return rate, pe, None
    except (WpqError, np.linalg.LinAlgError) as exc:
        if isinstance(exc, BackendMismatch):
            raise
        return math.nan, math.nan, f"{type(exc).__name__}: {exc}"


def optimize_time_fraction(
    config: SystemConfig,
    backend: ErrorBackend | str | None = None,
    grid_points: int | None = None,
    jobs: int = 1,
) -> RateProfile:
    """Exhaustive search of the effective rate over ``t_i = i / (K + 1)``.

    ``grid_points`` overrides ``config.grid_points``. Points whose error
    probability cannot be computed (typically truncation at large photon
    numbers) are marked failed; ties go to the smallest ``t``.
    """
    m = config.modulation_order
    backend = ErrorBackend.auto(m, config.thermal_photons) if backend in (None, "auto") else ErrorBackend(backend)
    backend.check(m, config.thermal_photons)
    ts = time_grid(grid_points or config.grid_points)
    tasks = [(config, float(t), backend) for t in ts]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_grid_point, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_grid_point(task) for task in tasks]

    rates = np.array([r[0] for r in results])
    p_errors = np.array([r[1] for r in results])
    failed = np.array([r[2] is not None for r in results])
    n_failed = int(failed.sum())
    if n_failed:
        first = next(r[2] for r in results if r[2] is not None)
        log.warning("%d of %d grid points failed (M=%d, N_a=%g, P=%g); first: %s",
                    n_failed, ts.size, m, config.thermal_photons, config.power, first)
    if n_failed == ts.size:
        return RateProfile(ts, p_errors, rates, failed, math.nan, math.nan, -1, n_failed, False, backend)

    masked = np.where(failed, -np.inf, rates)
    i = int(np.argmax(masked))  # first occurrence, i.e. smallest t on ties
    usable = np.flatnonzero(~failed)
    at_boundary = i in (usable[0], usable[-1])
    return RateProfile(ts, p_errors, rates, failed, float(ts[i]), float(rates[i]), i, n_failed, bool(at_boundary), backend)


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-6):
    """Maximise a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``.

    Raises:
        BracketError: the value at the final point is below both endpoints.
    """
    if hi - lo < tol:
        x = 0.5 * (lo + hi)
        return x, f(x)
    f_lo, f_hi = f(lo), f(hi)
    a, b = lo, hi
    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a >= tol:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = f(x2)
    x = 0.5 * (a + b)
    fx = f(x)
    if fx < f_lo and fx < f_hi:
        raise BracketError(f"objective at {x:.6g} ({fx:.6g}) is below both bracket ends ({f_lo:.6g}, {f_hi:.6g})")
    best = max((fx, x), (f1, x1), (f2, x2), (f_lo, lo), (f_hi, hi))
    return best[1], best[0]


def refine_t_star(
    config: SystemConfig,
    backend: ErrorBackend | str | None = None,
    bracket: tuple[float, float] | None = None,
    objective: Callable[[float], float] | None = None,
    tol: float = 1e-6,
):
    """Golden-section refinement of the optimal harvesting fraction.

    ``bracket`` defaults to the grid neighbours of the grid optimum.
    ``objective`` replaces the effective rate (used for testing).

    Returns:
        ``(t_star, r_star)``.
    """
    if objective is None:
        def objective(t):
            return effective_rate(config, t, backend)[0]
    if bracket is None:
        bracket = optimize_time_fraction(config, backend).bracket()
    lo, hi = bracket
    if not 0.0 < lo <= hi < 1.0:
        raise DomainError(f"bracket {bracket} must lie inside (0, 1)")
    return golden_section_max(objective, lo, hi, tol)
