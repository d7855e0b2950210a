"""M-ary minimum-error measurements.

The optimum POVM is found with the fixed-point iteration

    Pi_i <- S^{-1/2} (p_i rho_i) Pi_i (p_i rho_i) S^{-1/2},
    S = sum_j (p_j rho_j) Pi_j (p_j rho_j),

damped so the error probability never increases, and is accepted only when
the Holevo/Yuen-Kennedy-Lax conditions hold: with
``Y = sum_i p_i rho_i Pi_i``, ``Y`` must be Hermitian and every
``Y - p_i rho_i`` positive semidefinite.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, DimensionMismatch, DomainError
from .fock import PSD_TOL, DensityOperator, is_hermitian

log = logging.getLogger(__name__)

COMPLETENESS_TOL = 1e-8


def _as_matrix(state) -> np.ndarray:
    return state.matrix if isinstance(state, DensityOperator) else np.asarray(state, dtype=complex)


def _herm(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def _tr_prod(a: np.ndarray, b: np.ndarray) -> complex:
    """``Tr(a @ b)`` without forming the product."""
    return complex(np.einsum("ij,ji->", a, b))


class Povm:
    """An ordered list of measurement operators summing to the identity."""

    def __init__(self, elements: Sequence[np.ndarray]):
        elements = [np.asarray(e, dtype=complex) for e in elements]
        if not elements:
            raise DomainError("a POVM needs at least one element")
        shape = elements[0].shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise DimensionMismatch(f"POVM elements must be square, got {shape}")
        if any(e.shape != shape for e in elements):
            raise DimensionMismatch("POVM elements have different shapes")
        self.elements = elements

    def __len__(self):
        return len(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    def __iter__(self):
        return iter(self.elements)

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def completeness_error(self) -> float:
        total = sum(self.elements)
        return float(np.abs(total - np.eye(self.dim)).max())

    def min_eigenvalue(self) -> float:
        return min(float(np.linalg.eigvalsh(_herm(e))[0]) for e in self.elements)

    def validate(self, tol: float = COMPLETENESS_TOL, psd_tol: float = PSD_TOL) -> None:
        for e in self.elements:
            if not is_hermitian(e, 1e-10):
                raise DomainError("POVM element is not Hermitian")
        err = self.completeness_error()
        if err > tol:
            raise DomainError(f"POVM elements do not sum to identity (max deviation {err:.3e})")
        lo = self.min_eigenvalue()
        if lo < -psd_tol:
            raise DomainError(f"POVM element has eigenvalue {lo:.3e}")


@dataclass(frozen=True)
class DiscriminationProblem:
    """An ensemble of states with prior probabilities."""

    states: tuple
    priors: tuple

    def __init__(self, states, priors=None):
        mats = tuple(_as_matrix(s) for s in states)
        if not mats:
            raise DomainError("need at least one state")
        shape = mats[0].shape
        if any(m.shape != shape for m in mats) or len(shape) != 2 or shape[0] != shape[1]:
            raise DimensionMismatch("all states must be square matrices of the same dimension")
        if priors is None:
            priors = [1.0 / len(mats)] * len(mats)
        priors = tuple(float(p) for p in priors)
        if len(priors) != len(mats):
            raise DimensionMismatch(f"{len(priors)} priors for {len(mats)} states")
        if min(priors) < 0 or abs(sum(priors) - 1.0) > 1e-12:
            raise DomainError("priors must be non-negative and sum to 1")
        object.__setattr__(self, "states", mats)
        object.__setattr__(self, "priors", priors)

    @property
    def dim(self) -> int:
        return self.states[0].shape[0]

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 5000
    cert_tol: float = 1e-7
    damping: float = 1.0
    min_damping: float = 1e-6
    # relative singular-value floor for the pseudo-inverse square root
    rank_rtol: float = 1e-14
    # extrapolate along successive steps of the factors (see solve_min_error_povm)
    extrapolate: bool = True
    extrapolation_growth: float = 2.0
    max_extrapolation: float = 100.0


@dataclass
class SolverReport:
    p_error: float
    povm: Povm
    iterations: int
    certificate_residual: float
    converged: bool
    objective_history: list = field(default_factory=list, repr=False)


def _check_dims(problem: DiscriminationProblem, povm: Povm) -> None:
    if len(povm) != len(problem):
        raise DimensionMismatch(f"POVM has {len(povm)} elements for {len(problem)} states")
    if povm.dim != problem.dim:
        raise DimensionMismatch(f"POVM dimension {povm.dim} != state dimension {problem.dim}")


def evaluate_error(problem: DiscriminationProblem, povm: Povm) -> float:
    """Average error probability ``sum_i p_i Tr((I - Pi_i) rho_i)``."""
    _check_dims(problem, povm)
    return _objective(problem.states, problem.priors, povm.elements)


def _objective(states, priors, elements) -> float:
    total = 0.0
    for p, rho, pi in zip(priors, states, elements):
        total += p * (np.trace(rho).real - _tr_prod(pi, rho).real)
    return float(total)


def check_optimality_certificate(problem: DiscriminationProblem, povm: Povm) -> float:
    """Residual of the minimum-error optimality conditions; zero iff ``povm`` is optimal.

    Returns the larger of the anti-Hermitian part of ``Y = sum_i p_i rho_i Pi_i``
    (max-abs entry) and the largest negative eigenvalue among ``Y_h - p_i rho_i``,
    where ``Y_h`` is the Hermitian part of ``Y``.
    """
    _check_dims(problem, povm)
    return _certificate(problem.states, problem.priors, povm.elements)


def _certificate(states, priors, elements) -> float:
    y = sum(p * rho @ pi for p, rho, pi in zip(priors, states, elements))
    asym = float(np.abs(y - y.conj().T).max())
    y_h = _herm(y)
    worst = 0.0
    for p, rho in zip(priors, states):
        lo = float(np.linalg.eigvalsh(y_h - p * _herm(rho))[0])
        worst = max(worst, -lo)
    return max(asym, worst)


def _factor(pi: np.ndarray) -> np.ndarray:
    """``C`` with ``C C^dagger = pi`` for a PSD ``pi``."""
    w, v = np.linalg.eigh(_herm(pi))
    keep = w > 0
    return v[:, keep] * np.sqrt(w[keep])


def _range_sqrt_inv(b: np.ndarray, rtol: float):
    """``(B B^dagger)^{-1/2}`` on the numerical range of ``B``, and an orthonormal basis of its kernel.

    Working from the SVD of ``B`` resolves eigenvalues of ``B B^dagger`` down
    to ``eps^2`` relative, instead of ``eps`` for a direct eigendecomposition.
    """
    n, k = b.shape
    if k > n:
        # B^dagger = Q R, so B B^dagger = R^dagger R; only the small triangular factor is needed
        b = np.linalg.qr(b.conj().T, mode="r").conj().T
    u, s, _ = np.linalg.svd(b, full_matrices=True)
    s = np.concatenate([s, np.zeros(n - s.size)]) if s.size < n else s[:n]
    keep = s > rtol * (s[0] if s.size else 0.0)
    uk = u[:, keep]
    return (uk / s[keep]) @ uk.conj().T, u[:, ~keep]


def _complete_factors(factors, rtol: float = 1e-5) -> list:
    inv, kernel = _range_sqrt_inv(np.hstack(factors), rtol)
    out = [inv @ c for c in factors]
    if kernel.shape[1]:
        out[0] = np.hstack([out[0], kernel])
    n = out[0].shape[0]
    if out[0].shape[1] > n:
        out[0] = _factor(out[0] @ out[0].conj().T)
    return out


def complete_povm(elements, rtol: float = 1e-5) -> list:
    """Symmetric completeness repair ``S^{-1/2} Pi_i S^{-1/2}`` with ``S = sum_i Pi_i``.

    Directions where ``S`` vanishes (singular values of the stacked factors
    below ``rtol``) are added to element 0.
    """
    return [_herm(c @ c.conj().T) for c in _complete_factors([_factor(e) for e in elements], rtol)]


def _fixed_point_step(weighted, factors, rtol):
    parts = [w @ c for w, c in zip(weighted, factors)]
    inv, _ = _range_sqrt_inv(np.hstack(parts), rtol)
    return _complete_factors([inv @ p for p in parts])


def _elements(factors):
    return [_herm(c @ c.conj().T) for c in factors]


def solve_min_error_povm(
    problem: DiscriminationProblem,
    options: SolverOptions | None = None,
    raise_on_failure: bool = False,
) -> SolverReport:
    """Minimum-error POVM for ``problem``.

    Starts from ``Pi_i = I/M`` and iterates until the optimality certificate
    drops to ``options.cert_tol``. A step that increases the error
    probability by more than 1e-10 is retried with half the damping factor.

    The iteration is linearly convergent and slow when the states are nearly
    indistinguishable. With ``options.extrapolate`` each plain step
    ``C -> C'`` of the factors ``Pi_i = C_i C_i^dagger`` is also tried
    extrapolated, ``C + w (C' - C)`` followed by the completeness repair; the
    extrapolated point is kept only if its error probability is no larger
    than that of the plain step. ``w`` grows by ``extrapolation_growth`` on
    success (capped at ``max_extrapolation``) and shrinks on failure.

    If the iteration budget runs out, the returned report has
    ``converged=False``; with ``raise_on_failure`` a
    :class:`ConvergenceError` carrying that report is raised instead.
    """
    opts = options or SolverOptions()
    states, priors = problem.states, problem.priors
    m, n = len(problem), problem.dim
    eye = np.eye(n, dtype=complex)

    if m == 1:
        povm = Povm([eye])
        pe = _objective(states, priors, povm.elements)
        return SolverReport(pe, povm, 0, _certificate(states, priors, povm.elements), True, [pe])

    weighted = [p * _herm(rho) for p, rho in zip(priors, states)]
    factors = [eye / np.sqrt(m) for _ in range(m)]
    elements = _elements(factors)
    obj = _objective(states, priors, elements)
    history = [obj]
    theta = opts.damping
    omega = 1.0
    residual = _certificate(states, priors, elements)
    it = 0
    while residual > opts.cert_tol and it < opts.max_iterations:
        it += 1
        target_factors = _fixed_point_step(weighted, factors, opts.rank_rtol)
        target = _elements(target_factors)
        while True:
            if theta >= 1.0:
                trial, trial_factors = target, target_factors
            else:
                trial = [(1.0 - theta) * a + theta * b for a, b in zip(elements, target)]
                trial_factors = None
            trial_obj = _objective(states, priors, trial)
            if trial_obj <= obj + 1e-10 or theta < opts.min_damping:
                break
            theta *= 0.5
        if trial_obj > obj + 1e-10:
            log.debug("damping exhausted at iteration %d", it)
            break
        if opts.extrapolate and trial_factors is not None:
            if omega > 1.0 and all(a.shape == b.shape for a, b in zip(factors, trial_factors)):
                x_factors = _complete_factors([a + omega * (b - a) for a, b in zip(factors, trial_factors)])
                x_elements = _elements(x_factors)
                x_obj = _objective(states, priors, x_elements)
                if x_obj <= trial_obj:
                    trial, trial_obj, trial_factors = x_elements, x_obj, x_factors
                    omega = min(omega * opts.extrapolation_growth, opts.max_extrapolation)
                else:
                    omega = max(1.0, omega / opts.extrapolation_growth ** 2)
            else:
                omega = opts.extrapolation_growth
        elements, obj = trial, trial_obj
        factors = trial_factors if trial_factors is not None else [_factor(e) for e in elements]
        history.append(obj)
        residual = _certificate(states, priors, elements)

    elements = _elements(_complete_factors(factors))
    povm = Povm(elements)
    pe = _objective(states, priors, elements)
    residual = _certificate(states, priors, elements)
    converged = residual <= opts.cert_tol
    report = SolverReport(pe, povm, it, residual, converged, history)
    if not converged:
        msg = f"certificate residual {residual:.3e} > {opts.cert_tol:g} after {it} iterations"
        log.warning(msg)
        if raise_on_failure:
            raise ConvergenceError(msg, report)
    return report
