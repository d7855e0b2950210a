import math

import numpy as np
import pytest

from wpqlink.binary import helstrom_bpsk_noiseless
from wpqlink.errors import BackendMismatch, BracketError, DomainError
from wpqlink.wpcn import (
    ErrorBackend,
    SystemConfig,
    effective_rate,
    energy_split,
    golden_section_max,
    optimize_time_fraction,
    photon_rate,
    psk_amplitudes,
    refine_t_star,
    time_grid,
)

BPSK = SystemConfig(power=1.0)


def test_photon_rate_examples():
    assert photon_rate(BPSK, 0.5) == 1.0
    assert photon_rate(BPSK, 0.9) == pytest.approx(9.0, abs=1e-12)
    assert photon_rate(BPSK, 1e-12) == pytest.approx(0.0, abs=1e-11)
    for bad in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(DomainError):
            photon_rate(BPSK, bad)


def test_energy_split_identity():
    cfg = SystemConfig(power=2.5, channel_gain=0.3)
    for t in (0.1, 0.5, 0.77):
        e = energy_split(cfg, t)
        assert e.harvested_energy == pytest.approx(2.5 * 0.3 * t)
        assert e.photon_rate == pytest.approx(2.5 * 0.3 * t / (1 - t), abs=1e-12)


def test_config_validation():
    for kwargs in (dict(power=-1), dict(power=1, channel_gain=0), dict(power=1, thermal_photons=-1),
                   dict(power=1, modulation_order=1), dict(power=1, grid_points=0)):
        with pytest.raises(DomainError):
            SystemConfig(**kwargs)
    SystemConfig(power=1, modulation_order=6)  # powers of two are not required


def test_psk_amplitudes():
    mu = psk_amplitudes(4, 2.0)
    np.testing.assert_allclose(np.abs(mu) ** 2, 2.0)
    np.testing.assert_allclose(mu, math.sqrt(2) * np.array([1, -1j, -1, 1j]), atol=1e-15)


def test_rate_low_power_limit_bpsk():
    cfg = SystemConfig(power=1e-14)
    for t in (0.2, 0.6):
        rate, pe = effective_rate(cfg, t)
        assert rate == pytest.approx((1 - t) / 2, abs=1e-6)


def test_rate_hand_value():
    rate, pe = effective_rate(BPSK, 0.5, ErrorBackend.ANALYTIC_BPSK_NOISELESS)
    expected = 0.5 * (1 - 0.5 * (1 - math.sqrt(1 - math.exp(-4))))
    assert rate == pytest.approx(expected, abs=1e-15)
    assert pe == pytest.approx(helstrom_bpsk_noiseless(1.0))


@pytest.mark.parametrize("m", [2, 4, 8, 32])
@pytest.mark.parametrize("backend", ["srm_exact", "srm_large_m"])
def test_rate_zero_power_limit_srm(m, backend):
    cfg = SystemConfig(power=0.0, modulation_order=m)
    rate, _ = effective_rate(cfg, 0.3, backend)
    assert rate == pytest.approx(math.log2(m) * 0.7 / m, abs=1e-12)


def test_backend_mismatch():
    with pytest.raises(BackendMismatch):
        effective_rate(SystemConfig(power=1, thermal_photons=0.5, modulation_order=8), 0.5, "srm_exact")
    with pytest.raises(BackendMismatch):
        effective_rate(SystemConfig(power=1, modulation_order=4), 0.5, "spectral_binary")
    with pytest.raises(BackendMismatch):
        optimize_time_fraction(SystemConfig(power=1, thermal_photons=0.5, grid_points=5), "analytic_bpsk_noiseless")


def test_auto_backend():
    assert ErrorBackend.auto(2, 0) is ErrorBackend.ANALYTIC_BPSK_NOISELESS
    assert ErrorBackend.auto(2, 0.5) is ErrorBackend.SPECTRAL_BINARY
    assert ErrorBackend.auto(8, 0) is ErrorBackend.SRM_EXACT
    assert ErrorBackend.auto(8, 0.5) is ErrorBackend.POVM_SDP


def test_time_grid():
    ts = time_grid(4)
    np.testing.assert_allclose(ts, [0.2, 0.4, 0.6, 0.8])
    np.testing.assert_allclose(time_grid(1000) + time_grid(1000)[::-1], 1.0)


def _check_profile_identities(profile, m):
    ok = ~profile.failed
    ts, pe, r = profile.ts[ok], profile.p_errors[ok], profile.rates[ok]
    assert np.abs(r - math.log2(m) * (1 - ts) * (1 - pe)).max() <= 1e-12
    assert np.all(r >= 0) and np.all(r <= math.log2(m) * (1 - ts) + 1e-15)
    assert profile.r_star == np.nanmax(profile.rates)
    assert profile.t_star == profile.ts[int(np.nanargmax(np.where(profile.failed, -np.inf, profile.rates)))]


def test_profile_unimodal_bpsk():
    profile = optimize_time_fraction(SystemConfig(power=1.0, grid_points=1000))
    _check_profile_identities(profile, 2)
    assert profile.is_unimodal(1e-12)
    assert not profile.at_boundary and profile.n_failed == 0


@pytest.mark.parametrize("power", [1e-3, 100.0, 1e3])
def test_prop1_extremes(power):
    profile = optimize_time_fraction(SystemConfig(power=power, grid_points=1000))
    assert profile.t_star <= 0.05


def test_t_star_rises_then_falls_over_power():
    powers = [0.01, 0.1, 1.0, 10.0, 100.0]
    t = [optimize_time_fraction(SystemConfig(power=p, grid_points=1000)).t_star for p in powers]
    peak = int(np.argmax(t))
    assert 0 < peak < len(t) - 1
    assert all(a <= b for a, b in zip(t[:peak], t[1:peak + 1]))
    assert all(a >= b for a, b in zip(t[peak:], t[peak + 1:]))


def test_backend_consistency_bpsk():
    cfg = SystemConfig(power=1.0, grid_points=200)
    a = optimize_time_fraction(cfg, "analytic_bpsk_noiseless")
    b = optimize_time_fraction(cfg, "spectral_binary")
    ok = ~b.failed
    assert np.abs(a.rates[ok] - b.rates[ok]).max() <= 1e-7
    # the largest photon numbers at the end of the grid exceed the Fock cutoff
    assert b.n_failed > 0 and not b.failed[: len(b.ts) // 2].any()


def test_failed_points_excluded_with_count():
    cfg = SystemConfig(power=10.0, thermal_photons=0.5, grid_points=50)
    profile = optimize_time_fraction(cfg)
    assert profile.n_failed > 0
    assert np.isnan(profile.rates[profile.failed]).all()
    assert not profile.failed[profile.argmax]
    _check_profile_identities(profile, 2)


def test_all_points_failed():
    cfg = SystemConfig(power=1e4, thermal_photons=0.5, n_cut=5, grid_points=5)
    profile = optimize_time_fraction(cfg)
    assert profile.argmax == -1 and profile.n_failed == 5 and math.isnan(profile.t_star)


def test_zero_power_argmax_at_first_point():
    # at P = 0 every grid point has P_e = 1 - 1/M, so the rate only falls with t
    cfg = SystemConfig(power=0.0, modulation_order=4, grid_points=9)
    profile = optimize_time_fraction(cfg, "srm_exact")
    assert profile.argmax == 0 and profile.at_boundary


def test_parallel_matches_serial():
    cfg = SystemConfig(power=1.0, thermal_photons=0.25, grid_points=40)
    a = optimize_time_fraction(cfg, jobs=1)
    b = optimize_time_fraction(cfg, jobs=2)
    np.testing.assert_array_equal(a.rates, b.rates)
    assert a.t_star == b.t_star


def test_golden_section_quadratic():
    x, fx = golden_section_max(lambda t: -(t - 0.3) ** 2, 0.1, 0.6, 1e-6)
    assert x == pytest.approx(0.3, abs=1e-6)
    x, _ = refine_t_star(BPSK, bracket=(0.1, 0.6), objective=lambda t: 1 - (t - 0.3) ** 2)
    assert x == pytest.approx(0.3, abs=1e-6)


def test_golden_section_degenerate_bracket():
    calls = []

    def f(t):
        calls.append(t)
        return t

    lo, hi = 0.4, 0.4 + 5e-7
    x, fx = golden_section_max(f, lo, hi, 1e-6)
    assert x == 0.5 * (lo + hi) and calls == [x]


def test_golden_section_bracket_error():
    with pytest.raises(BracketError):
        golden_section_max(lambda t: (t - 0.5) ** 2, 0.2, 0.8)


def test_refine_stationary_bpsk():
    profile = optimize_time_fraction(SystemConfig(power=1.0, grid_points=1000))
    t, r = refine_t_star(BPSK, tol=1e-8)
    assert r >= profile.r_star - 1e-12
    h = 1e-5

    def rate(x):
        return effective_rate(BPSK, x)[0]

    assert abs((rate(t + h) - rate(t - h)) / (2 * h)) <= 1e-4


def test_refine_rejects_bad_bracket():
    with pytest.raises(DomainError):
        refine_t_star(BPSK, bracket=(0.0, 0.5), objective=lambda t: t)
