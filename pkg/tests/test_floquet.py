import numpy as np
import pytest

import ionxy as ix
from ionxy.errors import InvalidEdgeFraction, ValidationError

MODE = ix.ModeSet.from_literal([2 * np.pi * 1.0], [[1.0], [1.0]], [[1.0], [1.0]])
SPEC = ix.HilbertSpec(n_ions=2, mode_indices=(0,), n_max=4)
MU = 2 * np.pi * 1.02
ETA_OMEGA = 2 * np.pi * 0.003


def cw_coupling():
    tone = ix.SDFTone(mu=MU, rabi=ETA_OMEGA)
    return ix.ising_couplings(MODE, tone, resonance_guard=1e-9 * MU).J[0, 1]


def tone_pair():
    return (ix.SDFTone(mu=MU, rabi=ETA_OMEGA, spin_phase=0.0),
            ix.SDFTone(mu=MU, rabi=ETA_OMEGA, spin_phase=np.pi / 2))


def test_blackman_envelope_shape():
    env = ix.blackman_edge_envelope(0.4)
    assert env(0.0) == pytest.approx(0.0, abs=1e-12)
    assert env(1.0) == pytest.approx(0.0, abs=1e-12)
    assert env(0.2) == pytest.approx(1.0, rel=1e-12)   # end of the rise
    assert env(0.5) == pytest.approx(1.0, rel=1e-12)   # flat top
    u = np.linspace(0, 1, 501)
    vals = env(u)
    assert np.all(vals >= -1e-12) and np.all(vals <= 1.0 + 1e-12)
    # symmetric pulse
    np.testing.assert_allclose(vals, vals[::-1], atol=1e-12)


def test_rectangular_envelope_and_validation():
    assert ix.blackman_edge_envelope(0.0) is None
    with pytest.raises(InvalidEdgeFraction):
        ix.blackman_edge_envelope(0.95)


def test_duty_cycle_factor_value():
    # half duty times the mean squared Blackman-edged profile:
    # (1 - f) + f * (0.42^2 + 0.5^2/2 + 0.08^2/2) with f = 0.4
    expected = 0.5 * (0.6 + 0.4 * (0.42**2 + 0.125 + 0.0032))
    assert ix.duty_cycle_factor(0.4) == pytest.approx(expected, rel=1e-4)
    assert ix.duty_cycle_factor(0.0) == pytest.approx(0.5, rel=1e-12)


def test_schedule_invariant():
    tx, ty = tone_pair()
    j = 2 * np.pi * 8e-5
    sched = ix.FloquetSchedule.from_nf(32.0, j, tx, ty)
    assert sched.n_f * sched.t_f * sched.j_target_cyc == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValidationError):
        ix.FloquetSchedule(n_f=31.0, t_f=sched.t_f, j_target=j, tone_x=tx,
                           tone_y=ty)


def test_build_program_structure():
    tx, ty = tone_pair()
    j = 2 * np.pi * 8e-5
    sched = ix.FloquetSchedule.from_nf(8.0, j, tx, ty, edge_fraction=0.4)
    total = 8 * sched.t_f
    prog = ix.build_floquet_program(sched, total)
    assert len(prog.segments) == 16
    durations = [d for d, _ in prog.segments]
    np.testing.assert_allclose(durations, sched.t_f / 2.0, rtol=1e-12)
    phases = [tones[0].spin_phase for _, tones in prog.segments]
    np.testing.assert_allclose(phases[0::2], 0.0, atol=1e-15)
    np.testing.assert_allclose(phases[1::2], np.pi / 2, atol=1e-15)
    assert prog.segments[0][1][0].envelope is not None


def test_build_program_single_period():
    tx, ty = tone_pair()
    sched = ix.FloquetSchedule.from_nf(1.0, 2 * np.pi * 8e-5, tx, ty,
                                       edge_fraction=0.0)
    prog = ix.build_floquet_program(sched, sched.t_f)
    assert len(prog.segments) == 2
    assert prog.segments[0][1][0].envelope is None


def test_build_program_rejects_partial_period():
    tx, ty = tone_pair()
    sched = ix.FloquetSchedule.from_nf(8.0, 2 * np.pi * 8e-5, tx, ty)
    with pytest.raises(ValidationError):
        ix.build_floquet_program(sched, 8.5 * sched.t_f)


def test_deviation_zero_for_ideal_trajectory():
    times = np.linspace(0, 1, 64)
    pops = np.tile([1.0, 0.0, 0.0, 0.0], (64, 1))
    assert ix.xy_deviation(times, pops, pops.copy()) == 0.0
    assert ix.xy_deviation(times, pops, pops.copy(), period=0.125) == 0.0


def test_spectral_amplitude_synthetic():
    t = np.linspace(0, 32.0, 4096)
    f0 = 0.75
    v = 0.3 * np.cos(2 * np.pi * f0 * t + 0.4) + 0.05
    amp = ix.spectral_amplitude(t, v, f0)
    assert amp == pytest.approx(0.3, rel=0.05)
    assert ix.spectral_amplitude(t, v, 3.1) < 0.02


def test_pulsed_coupling_matches_duty_model():
    # fit the du oscillation over a few periods: the realized coupling must
    # fall within 15% of the continuous value times the duty-cycle factor
    j_eff = cw_coupling() * ix.duty_cycle_factor(0.4)
    tx, ty = tone_pair()
    sched = ix.FloquetSchedule.from_nf(48.0, j_eff, tx, ty, 0.4)
    total_cycle = 2 * np.pi / j_eff
    horizon = int(round(0.5 * total_cycle / sched.t_f)) * sched.t_f
    prog = ix.build_floquet_program(sched, horizon)
    traj = ix.evolve_full(ix.product_state(SPEC, "du"), prog, MODE, horizon,
                          sched.t_f / 8)
    obs = ix.observables(traj)
    fit = ix.fit_oscillation(traj.times, obs["spin_populations"][:, 2])
    realized = fit.omega / 2.0   # P_ud oscillates at (Jx + Jy) = 2 J
    assert realized == pytest.approx(j_eff, rel=0.15)


def test_scan_results_independent_of_order():
    j_eff = cw_coupling() * ix.duty_cycle_factor(0.4)
    tx, ty = tone_pair()
    sched = ix.FloquetSchedule.from_nf(32.0, j_eff, tx, ty, 0.4)
    total = 0.1 * 2 * np.pi / j_eff
    a = ix.scan_nf([24.0, 40.0], sched, MODE, SPEC, inits=("dd",),
                   total_time=total)
    b = ix.scan_nf([40.0, 24.0], sched, MODE, SPEC, inits=("dd",),
                   total_time=total)
    np.testing.assert_allclose(sorted(a.navg["dd"]), sorted(b.navg["dd"]),
                               rtol=1e-12)
    np.testing.assert_allclose(sorted(a.deviation["dd"]),
                               sorted(b.deviation["dd"]), rtol=1e-12)


def test_baseline_phonon_occupation_scales_with_rabi():
    j_eff = cw_coupling() * ix.duty_cycle_factor(0.4)
    total = 0.05 * 2 * np.pi / j_eff
    strong = ix.dual_sdf_baseline(j_eff, MODE, SPEC, MU, MU + 30 * j_eff,
                                  inits=("dd",), total_time=total)
    weak = ix.dual_sdf_baseline(j_eff / 100.0, MODE, SPEC, MU, MU + 30 * j_eff,
                                inits=("dd",), total_time=total)
    assert weak["navg"]["dd"] < strong["navg"]["dd"] / 10.0
