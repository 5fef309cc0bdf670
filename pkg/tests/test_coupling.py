import numpy as np
import pytest

import ionxy as ix
from ionxy.errors import (
    DegenerateTones,
    ResonantTone,
    TargetUnreachable,
    ValidationError,
    ZeroCoupling,
    ZeroMatrix,
)

U_KG = 1.66053906660e-27

FIG1_MODE = ix.ModeSet.from_literal([2 * np.pi * 1.1e6], [[1.0], [1.0]],
                                    [[0.0648], [0.0648]])
MU1 = 2 * np.pi * 1.108e6
MU2 = 2 * np.pi * 1.105e6


def fig3_trap():
    return ix.TrapConfig(omega_x=2 * np.pi * 5e6, omega_y=2 * np.pi * 4.8e6,
                         omega_z=2 * np.pi * 0.4e6, mass=171 * U_KG,
                         delta_k=2 * np.pi / 355e-9)


def experiment_modes():
    trap = ix.TrapConfig(omega_x=2 * np.pi * 1.135e6, omega_y=2 * np.pi * 0.920e6,
                         omega_z=2 * np.pi * 0.201e6, mass=171 * U_KG,
                         delta_k=np.sqrt(2) * 2 * np.pi / 355e-9)
    geo = ix.equilibrium_positions(2, trap)
    return trap, ix.lamb_dicke(ix.transverse_modes(geo, trap, "X'"), trap)


def test_single_mode_coupling_magnitude():
    tone = ix.SDFTone(mu=MU1, rabi=2 * np.pi * 15e3)
    j = ix.ising_couplings(FIG1_MODE, tone)
    assert j.J[0, 1] / (2 * np.pi) == pytest.approx(59.0, rel=0.02)


def test_zero_rabi_row():
    tone = ix.SDFTone(mu=MU1, rabi=[0.0, 2 * np.pi * 15e3])
    j = ix.ising_couplings(FIG1_MODE, tone)
    assert np.all(j.J[0, :] == 0.0)
    assert np.all(j.J[:, 0] == 0.0)


def test_single_mode_limit_equals_eta_form():
    # trap-backed matrix against the closed single-mode expression
    trap, modes = experiment_modes()
    tone = ix.SDFTone(mu=modes.omega_m[1] - 2 * np.pi * 8e3, rabi=2 * np.pi * 15e3)
    j = ix.ising_couplings(modes, tone, trap, mode_mask=[1])
    eta = modes.eta[0, 1]
    omega = modes.omega_m[1]
    expected = (2 * np.pi * 15e3)**2 * (-eta * eta) * omega / (tone.mu**2 - omega**2)
    assert j.J[0, 1] == pytest.approx(expected, rel=1e-12)


def test_symmetry_zero_diagonal_quadratic_scaling():
    trap, modes = experiment_modes()
    rng = np.random.default_rng(3)
    for _ in range(5):
        rabi = 2 * np.pi * rng.uniform(5e3, 20e3, size=2)
        tone = ix.SDFTone(mu=modes.omega_m[1] - 2 * np.pi * rng.uniform(5e3, 20e3),
                          rabi=rabi)
        j = ix.ising_couplings(modes, tone)
        assert np.array_equal(j.J, j.J.T)
        assert np.all(np.diag(j.J) == 0)
        c = rng.uniform(0.2, 3.0)
        j_scaled = ix.ising_couplings(modes, tone.scaled(c))
        np.testing.assert_allclose(j_scaled.J, c**2 * j.J, rtol=1e-12)


def test_sign_flip_across_resonance():
    tone_above = ix.SDFTone(mu=2 * np.pi * 1.108e6, rabi=2 * np.pi * 15e3)
    tone_below = ix.SDFTone(mu=2 * np.pi * 1.092e6, rabi=2 * np.pi * 15e3)
    j_above = ix.ising_couplings(FIG1_MODE, tone_above)
    j_below = ix.ising_couplings(FIG1_MODE, tone_below)
    assert j_above.J[0, 1] > 0 > j_below.J[0, 1]


def test_resonant_tone_guard():
    tone = ix.SDFTone(mu=2 * np.pi * (1.1e6 + 50.0), rabi=2 * np.pi * 15e3)
    with pytest.raises(ResonantTone):
        ix.ising_couplings(FIG1_MODE, tone)


def test_stark_factor_scales_rabi():
    tone = ix.SDFTone(mu=MU1, rabi=2 * np.pi * 15e3)
    j = ix.ising_couplings(FIG1_MODE, tone)
    j_corr = ix.ising_couplings(FIG1_MODE, tone, stark_factor=1.03)
    np.testing.assert_allclose(j_corr.J, 1.03**2 * j.J, rtol=1e-12)


def test_matched_y_tone_scale():
    tone_x = ix.SDFTone(mu=MU1, rabi=2 * np.pi * 15e3)
    tone_y = ix.matched_y_tone(tone_x, MU2, FIG1_MODE)
    scale = tone_y.rabi[0] / tone_x.rabi[0]
    # close to the near-resonance estimate sqrt(5/8)
    assert scale == pytest.approx(np.sqrt(5.0 / 8.0), rel=1e-3)
    assert tone_y.rabi[0] / (2 * np.pi) == pytest.approx(11.86e3, rel=1e-3)
    assert tone_y.spin_phase == pytest.approx(np.pi / 2)


def test_matched_y_tone_identity_at_equal_mu():
    tone_x = ix.SDFTone(mu=MU1, rabi=2 * np.pi * 15e3)
    tone_y = ix.matched_y_tone(tone_x, MU1, FIG1_MODE)
    assert tone_y.rabi[0] == pytest.approx(tone_x.rabi[0], rel=1e-15)


def test_xy_couplings_match_after_scaling():
    tone_x = ix.SDFTone(mu=MU1, rabi=2 * np.pi * 15e3)
    tone_y = ix.matched_y_tone(tone_x, MU2, FIG1_MODE)
    jx, jy = ix.xy_couplings(FIG1_MODE, tone_x, tone_y)
    assert jx.J[0, 1] == pytest.approx(jy.J[0, 1], rel=1e-12)
    assert (jx.axis_label, jy.axis_label) == ("xx", "yy")


def test_xy_couplings_equal_for_identical_tones():
    tone_x = ix.SDFTone(mu=MU1, rabi=2 * np.pi * 15e3)
    tone_y = ix.SDFTone(mu=MU1, rabi=2 * np.pi * 15e3, spin_phase=np.pi / 2)
    jx, jy = ix.xy_couplings(FIG1_MODE, tone_x, tone_y)
    np.testing.assert_allclose(jx.J, jy.J, rtol=1e-15)


def test_xy_couplings_phase_check():
    tone_x = ix.SDFTone(mu=MU1, rabi=1.0, spin_phase=0.3)
    tone_y = ix.SDFTone(mu=MU2, rabi=1.0, spin_phase=np.pi / 2)
    with pytest.raises(ValidationError):
        ix.xy_couplings(FIG1_MODE, tone_x, tone_y)
    ix.xy_couplings(FIG1_MODE, tone_x, tone_y, check_phases=False)


def test_experimental_couplings_in_reported_range():
    trap, modes = experiment_modes()
    tilt = modes.omega_m[1]
    tone_x = ix.SDFTone(mu=tilt - 2 * np.pi * 8e3, rabi=2 * np.pi * 15e3)
    tone_y = ix.SDFTone(mu=tilt - 2 * np.pi * 5e3, rabi=2 * np.pi * 11.5e3,
                        spin_phase=np.pi / 2)
    jx, jy = ix.xy_couplings(modes, tone_x, tone_y, trap)
    assert 70.0 <= jx.J[0, 1] / (2 * np.pi) <= 90.0
    assert 70.0 <= jy.J[0, 1] / (2 * np.pi) <= 90.0


def test_validity_report_fig1d_passes():
    tone_x = ix.SDFTone(mu=MU1, rabi=2 * np.pi * 15e3)
    tone_y = ix.matched_y_tone(tone_x, MU2, FIG1_MODE)
    jx, jy = ix.xy_couplings(FIG1_MODE, tone_x, tone_y)
    rep = ix.validity_report(jx, jy, tone_x, tone_y, FIG1_MODE)
    assert rep.verdict == "pass"
    assert rep.separation_ratio == pytest.approx(2 * np.pi * 3e3 / jx.J[0, 1], rel=1e-9)
    assert rep.separation_ratio == pytest.approx(50.99, rel=0.01)
    # algebraic identity between the bound and the separation ratio
    assert rep.lambda_bound * rep.separation_ratio == pytest.approx(4.0, rel=1e-12)


def test_validity_report_fig1c_fails():
    tone_x = ix.SDFTone(mu=MU1, rabi=2 * np.pi * 15e3)
    tone_y = ix.SDFTone(mu=MU1 - 2 * np.pi * 59.0, rabi=2 * np.pi * 15e3,
                        spin_phase=np.pi / 2)
    jx, jy = ix.xy_couplings(FIG1_MODE, tone_x, tone_y)
    rep = ix.validity_report(jx, jy, tone_x, tone_y, FIG1_MODE)
    assert rep.verdict == "fail"
    assert rep.separation_ratio == pytest.approx(1.0, rel=0.05)


def test_validity_report_degenerate_tones():
    tone_x = ix.SDFTone(mu=MU1, rabi=2 * np.pi * 15e3)
    tone_y = ix.SDFTone(mu=MU1, rabi=2 * np.pi * 15e3, spin_phase=np.pi / 2)
    jx, jy = ix.xy_couplings(FIG1_MODE, tone_x, tone_y)
    with pytest.raises(DegenerateTones, match="Ising"):
        ix.validity_report(jx, jy, tone_x, tone_y, FIG1_MODE)


def test_power_law_fit_exact():
    n = 6
    idx = np.arange(n)
    dist = np.abs(idx[:, None] - idx[None, :]).astype(float)
    np.fill_diagonal(dist, 1.0)
    j = ix.CouplingMatrix(J=np.where(np.eye(n, dtype=bool), 0.0, 1.0 / dist))
    alpha, resid = ix.power_law_fit(j)
    assert alpha == pytest.approx(1.0, abs=1e-12)
    assert resid == pytest.approx(0.0, abs=1e-12)


def test_power_law_fit_constant():
    n = 5
    j = ix.CouplingMatrix(J=np.ones((n, n)) - np.eye(n))
    alpha, _ = ix.power_law_fit(j)
    assert alpha == pytest.approx(0.0, abs=1e-12)


def test_power_law_fit_errors():
    j = ix.CouplingMatrix(J=np.zeros((4, 4)))
    with pytest.raises(ZeroCoupling):
        ix.power_law_fit(j)
    small = ix.CouplingMatrix(J=np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ValidationError):
        ix.power_law_fit(small)


def test_alpha_grid_monotone_and_covers_reported_range():
    sol = ix.engineer_power_law(1.0, fig3_trap(), 25, 2 * np.pi * 100.0)
    assert np.all(np.diff(sol.grid_alphas) > 0)
    assert sol.grid_alphas[0] < 0.1
    assert sol.grid_alphas[-1] > 1.8


@pytest.mark.parametrize("target", [0.5, 1.0, 1.5])
def test_engineer_power_law_targets(target):
    sol = ix.engineer_power_law(target, fig3_trap(), 25, 2 * np.pi * 100.0)
    assert sol.alpha_error <= 0.05
    tone = ix.SDFTone(mu=sol.mu1, rabi=sol.rabi_scale)
    modes_trap = fig3_trap()
    geo = ix.equilibrium_positions(25, modes_trap)
    modes = ix.lamb_dicke(ix.transverse_modes(geo, modes_trap, "X'"), modes_trap)
    j = ix.ising_couplings(modes, tone)
    assert np.abs(j.J).max() == pytest.approx(2 * np.pi * 100.0, rel=1e-9)


def test_engineer_target_alpha_near_zero_is_com_dominated():
    # targets just above the low end sit right over the center-of-mass mode
    sol = ix.engineer_power_law(0.1, fig3_trap(), 12, 2 * np.pi * 100.0)
    trap = fig3_trap()
    geo = ix.equilibrium_positions(12, trap)
    modes = ix.lamb_dicke(ix.transverse_modes(geo, trap, "X'"), trap)
    assert sol.mu1 > modes.omega_m[0]
    assert sol.detuning < 2 * np.pi * 100e3


def test_engineer_unreachable_target():
    with pytest.raises(TargetUnreachable):
        ix.engineer_power_law(1.9, fig3_trap(), 25, 2 * np.pi * 100.0,
                              detuning_hi=2 * np.pi * 3e3)


def test_frobenius_proximity_basics():
    a = ix.CouplingMatrix(J=np.array([[0.0, 2.0], [2.0, 0.0]]))
    assert ix.frobenius_proximity(a, a) == pytest.approx(1.0, rel=1e-14)
    b = ix.CouplingMatrix(J=np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0],
                                      [0.0, 0.0, 0.0]]))
    c = ix.CouplingMatrix(J=np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0],
                                      [1.0, 0.0, 0.0]]))
    assert ix.frobenius_proximity(b, c) == pytest.approx(0.0, abs=1e-14)
    zero = ix.CouplingMatrix(J=np.zeros((2, 2)))
    with pytest.raises(ZeroMatrix):
        ix.frobenius_proximity(a, zero)


def test_fig3_proximity_above_99_percent():
    trap = fig3_trap()
    geo = ix.equilibrium_positions(25, trap)
    modes = ix.lamb_dicke(ix.transverse_modes(geo, trap, "X'"), trap)
    sol = ix.engineer_power_law(1.0, trap, 25, 2 * np.pi * 100.0)
    tone_x = ix.SDFTone(mu=sol.mu1, rabi=sol.rabi_scale)
    tone_y = ix.matched_y_tone(tone_x, sol.mu1 + 2 * np.pi * 3e3, modes)
    jx, jy = ix.xy_couplings(modes, tone_x, tone_y)
    assert ix.frobenius_proximity(jx, jy) > 0.99
    # single-mode truncation matches exactly
    nearest = int(np.argmin(np.abs(modes.omega_m - tone_x.mu)))
    jx1, jy1 = ix.xy_couplings(modes, tone_x, tone_y, mode_mask=[nearest])
    np.testing.assert_allclose(jx1.J, jy1.J, rtol=1e-9, atol=1e-12)


def test_mode_spectrum_report_two_ions():
    trap, _ = experiment_modes()
    rep = ix.mode_spectrum_report(trap, 2)
    np.testing.assert_allclose(
        rep.x_freqs / (2 * np.pi * 1e6),
        [1.135, np.sqrt(1.135**2 - 0.201**2)], rtol=1e-9)
    np.testing.assert_allclose(
        rep.y_freqs / (2 * np.pi * 1e6),
        [0.920, np.sqrt(0.920**2 - 0.201**2)], rtol=1e-9)
    assert not rep.overlap
    assert rep.gap > 0


def test_mode_spectrum_single_ion_gap():
    trap, _ = experiment_modes()
    rep = ix.mode_spectrum_report(trap, 1)
    assert rep.gap == pytest.approx(trap.omega_x - trap.omega_y, rel=1e-12)


def test_mode_band_gap_shrinks_with_ion_number():
    trap = ix.TrapConfig(omega_x=2 * np.pi * 1.1e6, omega_y=2 * np.pi * 0.9e6,
                         omega_z=2 * np.pi * 132.7e3, mass=171 * U_KG)
    gaps = [ix.mode_spectrum_report(trap, n).gap for n in range(2, 11)]
    assert all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))


def test_coupling_matrix_csv_header():
    j = ix.CouplingMatrix(J=np.array([[0.0, 1.5], [1.5, 0.0]]))
    lines = j.to_csv().strip().split("\n")
    assert lines[0] == "ion,1,2"
    assert lines[1].startswith("1,0,")
