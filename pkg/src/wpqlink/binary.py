"""Minimum-error discrimination of two equiprobable states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError
from .fock import DensityOperator, hermitian_eig
from .povm import Povm

# eigenvalues of the difference operator above this count as positive
POSITIVE_CUT = 1e-12


@dataclass(frozen=True)
class BinaryDiscriminationResult:
    p_error: float
    povm: Povm
    positive_eigensum: float


def _as_matrix(state) -> np.ndarray:
    return state.matrix if isinstance(state, DensityOperator) else np.asarray(state, dtype=complex)


def helstrom_binary(rho0, rho1) -> BinaryDiscriminationResult:
    """Helstrom bound and optimal projective measurement for two states with equal priors.

    The difference ``rho1 - rho0`` is diagonalised; the error probability is
    ``(1 - sum of positive eigenvalues) / 2``. POVM element ``i`` is the
    outcome that decides ``rho_i``: element 1 projects onto the positive
    eigenspace of the difference, element 0 onto the non-positive one
    (zero eigenvalues included).
    """
    r0, r1 = _as_matrix(rho0), _as_matrix(rho1)
    if r0.shape != r1.shape:
        raise DimensionMismatch(f"state shapes differ: {r0.shape} vs {r1.shape}")
    delta = r1 - r0
    delta = 0.5 * (delta + delta.conj().T)
    w, v = hermitian_eig(delta)
    pos = w > POSITIVE_CUT
    s = float(w[pos].sum())
    vp = v[:, pos]
    pi1 = vp @ vp.conj().T
    pi0 = np.eye(delta.shape[0], dtype=complex) - pi1
    return BinaryDiscriminationResult(0.5 * (1.0 - s), Povm([pi0, pi1]), s)


def helstrom_bpsk_noiseless(alpha: float) -> float:
    """Closed-form Helstrom bound for the coherent states ``|mu>`` and ``|-mu>``, ``alpha = |mu|^2``."""
    if alpha < 0:
        raise DomainError(f"mean photon number must be >= 0, got {alpha}")
    # 1 - sqrt(1 - q) rewritten as q / (1 + sqrt(1 - q)) to keep precision when q -> 0
    q = np.exp(-4.0 * alpha)
    return float(0.5 * q / (1.0 + np.sqrt(1.0 - q)))
