"""Truncated Fock-space primitives.

States and operators are dense numpy arrays indexed by photon number
``n = 0, ..., n_cut - 1``. Vectors are 1-D complex arrays, operators are
2-D complex arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammainc, gammaln

from .errors import ConvergenceError, DimensionMismatch, DomainError, TruncationError

TRUNC_TOL = 1e-8
HERM_TOL = 1e-12
PSD_TOL = 1e-10
# below this thermal occupation the displaced-thermal formula is replaced by its pure-state limit
PURE_LIMIT_NA = 1e-9


def is_hermitian(a: np.ndarray, tol: float = HERM_TOL) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = float(np.abs(a).max(initial=0.0))
    return float(np.abs(a - a.conj().T).max(initial=0.0)) <= tol * scale


def _require_hermitian(a: np.ndarray, tol: float = HERM_TOL) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not is_hermitian(a, tol):
        raise DomainError("matrix is not Hermitian")
    return a


@dataclass(frozen=True)
class DensityOperator:
    """A unit-trace PSD operator, up to the reported truncation deficit.

    ``trunc_error`` is ``1 - Tr(matrix)``, the probability mass that sits
    above the Fock cutoff. The matrix is never renormalised.
    """

    matrix: np.ndarray
    trunc_error: float = 0.0

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def validate(self, trunc_tol: float = TRUNC_TOL, psd_tol: float = PSD_TOL) -> None:
        m = _require_hermitian(self.matrix)
        tr = float(np.trace(m).real)
        if abs(1.0 - tr) > trunc_tol:
            raise TruncationError(f"trace {tr!r} deviates from 1 by more than {trunc_tol:g}", 1.0 - tr)
        lo = float(np.linalg.eigvalsh(m)[0])
        if lo < -psd_tol:
            raise DomainError(f"density operator has eigenvalue {lo:.3e} below -{psd_tol:g}")


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray  # real, descending
    eigenvectors: np.ndarray  # columns are orthonormal eigenvectors


def truncation_loss(alpha: float, n_cut: int) -> float:
    """Poisson mass above the cutoff, ``P(n >= n_cut)`` for mean ``alpha``."""
    if alpha == 0:
        return 0.0
    return float(gammainc(n_cut, alpha))


def make_coherent_state(mu: complex, n_cut: int, trunc_tol: float = TRUNC_TOL) -> np.ndarray:
    """Fock amplitudes ``exp(-|mu|^2/2) mu^n / sqrt(n!)`` for ``n < n_cut``.

    Raises:
        TruncationError: if more than ``trunc_tol`` of the photon-number
            distribution lies at or above ``n_cut``.
    """
    if n_cut < 1:
        raise DomainError("n_cut must be >= 1")
    mu = complex(mu)
    r = abs(mu)
    loss = truncation_loss(r * r, n_cut)
    if loss > trunc_tol:
        raise TruncationError(
            f"n_cut={n_cut} loses {loss:.3e} of the norm of a coherent state with |mu|^2={r * r:g}", loss
        )
    vec = np.zeros(n_cut, dtype=complex)
    if r == 0:
        vec[0] = 1.0
        return vec
    n = np.arange(n_cut)
    log_mag = -0.5 * r * r + n * np.log(r) - 0.5 * gammaln(n + 1)
    vec[:] = np.exp(log_mag) * np.exp(1j * n * np.angle(mu))
    return vec


def projector(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    return np.outer(vec, vec.conj())


def _log_laguerre_table(n_max: int, x: float) -> np.ndarray:
    """``log L_k^(nu)(x)`` for ``k, nu = 0..n_max`` at a fixed ``x <= 0``.

    Uses the three-term recurrence in k, written for the ratio
    ``L_{k+1} / L_k`` so that no intermediate overflows. For ``x <= 0`` all
    polynomials and ratios are positive.
    """
    nu = np.arange(n_max + 1, dtype=float)
    table = np.zeros((n_max + 1, n_max + 1))
    if n_max == 0:
        return table
    ratio = 1.0 + nu - x
    table[1] = np.log(ratio)
    for k in range(1, n_max):
        ratio = ((2 * k + 1 + nu - x) - (k + nu) / ratio) / (k + 1)
        table[k + 1] = table[k] + np.log(ratio)
    return table


def thermal_displaced_rho(
    mu: complex, n_a: float, n_cut: int, trunc_tol: float = TRUNC_TOL
) -> DensityOperator:
    """Density matrix of a coherent state ``|mu>`` in thermal noise of mean ``n_a`` photons.

    For ``m >= n``::

        <m|rho|n> = exp(-|mu|^2/(n_a+1)) / (n_a+1) * sqrt(n!/m!)
                    * (mu/(n_a+1))^(m-n) * (n_a/(n_a+1))^n
                    * L_n^(m-n)(-|mu|^2 / (n_a (n_a+1)))

    and the upper triangle is the conjugate transpose. All factorials and
    powers are accumulated in the log domain. ``n_a`` below 1e-9 returns
    the pure projector ``|mu><mu|``.

    Raises:
        DomainError: ``n_a < 0``.
        TruncationError: the trace deficit exceeds ``trunc_tol``.
    """
    if n_a < 0:
        raise DomainError(f"thermal photon number must be >= 0, got {n_a}")
    if n_cut < 1:
        raise DomainError("n_cut must be >= 1")
    mu = complex(mu)
    if n_a < PURE_LIMIT_NA:
        vec = make_coherent_state(mu, n_cut, trunc_tol)
        rho = projector(vec)
        return DensityOperator(rho, max(0.0, 1.0 - float(np.trace(rho).real)))

    a2 = abs(mu) ** 2
    x = -a2 / (n_a * (n_a + 1.0))
    log_lag = _log_laguerre_table(n_cut - 1, x)

    m_idx, n_idx = np.tril_indices(n_cut)
    nu = m_idx - n_idx
    lg = gammaln(np.arange(n_cut) + 1.0)
    log_mag = (
        -a2 / (n_a + 1.0)
        - np.log1p(n_a)
        + 0.5 * (lg[n_idx] - lg[m_idx])
        + n_idx * np.log(n_a / (n_a + 1.0))
        + log_lag[n_idx, nu]
    )
    vals = np.zeros(nu.shape, dtype=complex)
    if a2 > 0:
        log_mag = log_mag + nu * (np.log(abs(mu)) - np.log1p(n_a))
        vals[:] = np.exp(log_mag) * np.exp(1j * nu * np.angle(mu))
    else:
        diag = nu == 0
        vals[diag] = np.exp(log_mag[diag])

    rho = np.zeros((n_cut, n_cut), dtype=complex)
    rho[m_idx, n_idx] = vals
    rho[n_idx, m_idx] = vals.conj()
    deficit = 1.0 - float(np.trace(rho).real)
    if deficit > trunc_tol:
        raise TruncationError(
            f"n_cut={n_cut} loses {deficit:.3e} of the trace (|mu|^2={a2:g}, n_a={n_a:g})", deficit
        )
    return DensityOperator(rho, max(0.0, deficit))


def hermitian_eig(a: np.ndarray) -> EigenDecomposition:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Raises:
        ConvergenceError: LAPACK failed or the reconstruction residual
            exceeds ``1e-9 * max|a|``.
    """
    a = _require_hermitian(a)
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"eigendecomposition failed: {exc}") from exc
    w = w[::-1]
    v = v[:, ::-1]
    scale = float(np.abs(a).max(initial=0.0))
    resid = float(np.abs(a - (v * w) @ v.conj().T).max(initial=0.0))
    if resid > 1e-9 * max(scale, np.finfo(float).tiny):
        raise ConvergenceError(f"eigendecomposition residual {resid:.3e} too large")
    return EigenDecomposition(w, v)


def matrix_sqrt_inv(a: np.ndarray, rank_tol: float = 1e-12, psd_tol: float = PSD_TOL) -> np.ndarray:
    """Pseudo-inverse square root of a PSD matrix.

    Eigenvalues above ``rank_tol`` map to ``lambda**-0.5``; the rest map to 0.
    """
    w, v = hermitian_eig(a)
    if w.size and w[-1] < -psd_tol:
        raise DomainError(f"matrix has eigenvalue {w[-1]:.3e} below -{psd_tol:g}")
    keep = w > rank_tol
    d = np.zeros_like(w)
    d[keep] = 1.0 / np.sqrt(w[keep])
    out = (v * d) @ v.conj().T
    return 0.5 * (out + out.conj().T)
