import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import gammaln

from wpqlink.errors import DomainError, TruncationError
from wpqlink.fock import (
    DensityOperator,
    hermitian_eig,
    is_hermitian,
    make_coherent_state,
    matrix_sqrt_inv,
    projector,
    thermal_displaced_rho,
    truncation_loss,
)


def _raw_coherent(betas, n_cut):
    """Untruncated-check coherent amplitudes for an array of complex ``betas``, shape (len, n_cut)."""
    betas = np.asarray(betas, dtype=complex)
    n = np.arange(n_cut)
    r = np.abs(betas)[:, None]
    with np.errstate(divide="ignore"):
        logr = np.where(r > 0, np.log(np.where(r > 0, r, 1.0)), -np.inf)
    logmag = -0.5 * r * r + n * logr - 0.5 * gammaln(n + 1.0)
    logmag[:, 0] = -0.5 * r[:, 0] ** 2
    return np.exp(logmag) * np.exp(1j * n * np.angle(betas)[:, None])


def glauber_rho(mu, n_a, n_cut, h=0.05, width=7.0):
    """Oracle: integrate the Gaussian P-function against |beta><beta| on a square grid."""
    s = width * math.sqrt(n_a)
    x = np.arange(-s, s + h / 2, h)
    xr, xi = np.meshgrid(x, x)
    d = (xr + 1j * xi).ravel()
    w = np.exp(-np.abs(d) ** 2 / n_a) / (math.pi * n_a) * h * h
    vecs = _raw_coherent(mu + d, n_cut)
    return (vecs.T * w) @ vecs.conj()


# --- coherent states ---------------------------------------------------------


def test_vacuum():
    v = make_coherent_state(0, 40)
    expected = np.zeros(40)
    expected[0] = 1
    np.testing.assert_array_equal(v, expected)


def test_overlap_antipodal():
    mu = math.sqrt(0.5)
    a = make_coherent_state(mu, 40)
    b = make_coherent_state(-mu, 40)
    assert abs(np.vdot(a, b)) ** 2 == pytest.approx(math.exp(-2), abs=1e-12)


def test_norm_matches_partial_poisson_sum():
    v = make_coherent_state(1.0, 40)
    oracle = sum(math.exp(-1) / math.factorial(n) for n in range(40))
    assert np.vdot(v, v).real == pytest.approx(oracle, abs=1e-14)
    assert abs(np.vdot(v, v).real - 1) <= 1e-12


def test_coherent_truncation_error():
    with pytest.raises(TruncationError) as info:
        make_coherent_state(5.0, 20)
    assert info.value.deficit == pytest.approx(truncation_loss(25.0, 20))


def test_large_cutoff_no_overflow():
    v = make_coherent_state(3.0, 400)
    assert np.all(np.isfinite(v))
    assert np.vdot(v, v).real == pytest.approx(1.0, abs=1e-12)


@given(
    st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False),
    st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False),
)
def test_overlap_property(mu, nu):
    a = make_coherent_state(mu, 40)
    b = make_coherent_state(nu, 40)
    exact = np.exp(-abs(mu) ** 2 / 2 - abs(nu) ** 2 / 2 + np.conj(mu) * nu)
    assert abs(np.vdot(a, b) - exact) <= 1e-8


# --- displaced thermal states ------------------------------------------------


def test_thermal_vacuum_is_bose_einstein():
    rho = thermal_displaced_rho(0, 0.5, 40).matrix
    n = np.arange(40)
    np.testing.assert_allclose(np.diag(rho).real, (1 / 1.5) * (0.5 / 1.5) ** n, rtol=1e-12, atol=0)
    assert rho[0, 0].real == pytest.approx(2 / 3, abs=1e-15)
    assert np.abs(rho - np.diag(np.diag(rho))).max() == 0


def test_zero_noise_is_pure_projector():
    d = thermal_displaced_rho(1.0, 0.0, 40)
    assert d.purity() == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(d.matrix, projector(make_coherent_state(1.0, 40)), atol=1e-15)


def test_thermal_trace_and_psd():
    d = thermal_displaced_rho(1.0, 0.5, 40)
    assert abs(np.trace(d.matrix).real - 1) <= 1e-8
    assert np.linalg.eigvalsh(d.matrix)[0] >= -1e-10
    d.validate()


@pytest.mark.parametrize("mu,n_a", [(1.0, 0.5), (0.7 - 0.4j, 0.25), (1.2j, 1.0)])
def test_thermal_matches_glauber_integral(mu, n_a):
    rho = thermal_displaced_rho(mu, n_a, 40).matrix
    oracle = glauber_rho(mu, n_a, 40)
    assert np.abs(rho - oracle).max() <= 1e-4


def test_thermal_first_column_phase_convention():
    # <1|rho|0> carries mu, not conj(mu): the mean field <a> = Tr(a rho) equals mu
    mu, n_a = 0.6 + 0.3j, 0.4
    rho = thermal_displaced_rho(mu, n_a, 60).matrix
    a = np.diag(np.sqrt(np.arange(1, 60)), 1)
    assert np.trace(a @ rho) == pytest.approx(mu, abs=1e-10)
    # and the mean photon number is |mu|^2 + n_a
    assert np.trace(a.T @ a @ rho).real == pytest.approx(abs(mu) ** 2 + n_a, abs=1e-8)


def test_thermal_truncation_reported_not_renormalised():
    with pytest.raises(TruncationError) as info:
        thermal_displaced_rho(1.0, 5.0, 40)
    assert info.value.deficit > 1e-4
    d = thermal_displaced_rho(1.0, 5.0, 40, trunc_tol=1e-2)
    assert d.trunc_error == pytest.approx(1 - np.trace(d.matrix).real)
    assert d.trunc_error > 1e-4


def test_thermal_negative_noise():
    with pytest.raises(DomainError):
        thermal_displaced_rho(1.0, -0.1, 40)


@given(
    st.floats(0.0, 2.0),
    st.floats(0.0, 2 * math.pi),
    st.floats(0.01, 5.0),
)
def test_thermal_invariants_property(r, phase, n_a):
    mu = r * np.exp(1j * phase)
    d = thermal_displaced_rho(mu, n_a, 200)
    assert is_hermitian(d.matrix, 1e-12)
    assert abs(np.trace(d.matrix).real - 1) <= 1e-8
    assert np.linalg.eigvalsh(d.matrix)[0] >= -1e-10


@given(st.floats(0.0, 2.0), st.floats(0.0, 2 * math.pi))
def test_small_noise_continuity(r, phase):
    mu = r * np.exp(1j * phase)
    noisy = thermal_displaced_rho(mu, 1e-6, 40).matrix
    pure = projector(make_coherent_state(mu, 40))
    assert np.abs(noisy - pure).max() <= 1e-4


# --- eigendecomposition ------------------------------------------------------


def test_eig_identity():
    w, _ = hermitian_eig(np.eye(4))
    np.testing.assert_allclose(w, np.ones(4))


def test_eig_diag():
    w, v = hermitian_eig(np.diag([3.0, -1.0]))
    np.testing.assert_allclose(w, [3, -1])
    np.testing.assert_allclose(np.abs(v), np.eye(2))


def test_eig_bpsk_difference_rank_two():
    mu = 0.5
    a = make_coherent_state(mu, 40)
    b = make_coherent_state(-mu, 40)
    delta = projector(b) - projector(a)
    w, _ = hermitian_eig(delta)
    big = w[np.abs(w) > 1e-9]
    assert big.size == 2
    # in span{|mu>, |-mu>} the difference of projectors has eigenvalues +-sqrt(1 - |<a|b>|^2)
    eta = math.sqrt(1 - math.exp(-4 * mu * mu))
    np.testing.assert_allclose(big, [eta, -eta], atol=1e-12)


def test_eig_rejects_non_hermitian():
    with pytest.raises(DomainError):
        hermitian_eig(np.array([[0, 1], [0, 0]], dtype=complex))


@given(st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_eig_residual_property(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    a = x + x.conj().T
    w, v = hermitian_eig(a)
    assert np.all(np.diff(w) <= 0)
    assert np.abs(a - (v * w) @ v.conj().T).max() <= 1e-9 * np.abs(a).max()
    assert np.abs(v.conj().T @ v - np.eye(n)).max() <= 1e-10


# --- pseudo-inverse square root ---------------------------------------------


def test_sqrt_inv_identity():
    np.testing.assert_allclose(matrix_sqrt_inv(np.eye(3)), np.eye(3), atol=1e-15)


def test_sqrt_inv_diag():
    np.testing.assert_allclose(matrix_sqrt_inv(np.diag([4.0, 1.0])), np.diag([0.5, 1.0]), atol=1e-15)


def test_sqrt_inv_pseudo_branch():
    np.testing.assert_allclose(matrix_sqrt_inv(np.diag([4.0, 0.0]), 1e-12), np.diag([0.5, 0.0]), atol=1e-15)


def test_sqrt_inv_rejects_negative():
    with pytest.raises(DomainError):
        matrix_sqrt_inv(np.diag([1.0, -1e-6]))


def test_density_validate_flags_negative():
    with pytest.raises(DomainError):
        DensityOperator(np.diag([1.1, -0.1]).astype(complex)).validate()
