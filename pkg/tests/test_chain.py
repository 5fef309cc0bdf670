import json

import numpy as np
import pytest
from scipy.optimize import minimize

import ionxy as ix
from ionxy.errors import ValidationError, ZigZagUnstable

U_KG = 1.66053906660e-27


def yb_trap(wx=1.135e6, wy=0.920e6, wz=0.201e6, dk=2 * np.pi / 355e-9):
    return ix.TrapConfig(omega_x=2 * np.pi * wx, omega_y=2 * np.pi * wy,
                         omega_z=2 * np.pi * wz, mass=171 * U_KG, delta_k=dk)


def brute_force_positions(n):
    """Independent oracle: direct minimization of the dimensionless potential."""
    def potential(u):
        pair = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                pair += 1.0 / abs(u[i] - u[j])
        return 0.5 * np.sum(u**2) + pair

    best = None
    for scale in (0.5, 1.0, 2.0):
        guess = np.linspace(-scale * n / 2, scale * n / 2, n)
        res = minimize(potential, guess, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 40000})
        if best is None or res.fun < best.fun:
            best = res
    return np.sort(best.x)


def test_single_ion_at_center():
    geo = ix.equilibrium_positions(1, yb_trap())
    assert geo.positions == pytest.approx([0.0])


def test_two_ion_positions_match_brute_force():
    geo = ix.equilibrium_positions(2, yb_trap())
    oracle = brute_force_positions(2)
    np.testing.assert_allclose(geo.positions, oracle, atol=5e-4)
    # analytic value (1/2)^(2/3)
    np.testing.assert_allclose(geo.positions, [-0.62996, 0.62996], atol=1e-4)


def test_three_ion_positions_match_brute_force():
    geo = ix.equilibrium_positions(3, yb_trap())
    oracle = brute_force_positions(3)
    np.testing.assert_allclose(geo.positions, oracle, atol=5e-4)
    np.testing.assert_allclose(geo.positions, [-1.0772, 0.0, 1.0772], atol=1e-4)


@pytest.mark.parametrize("n", [2, 5, 10, 30])
def test_equilibrium_gradient_and_symmetry(n):
    geo = ix.equilibrium_positions(n, yb_trap(wx=5e6, wy=4.8e6, wz=0.2e6))
    u = geo.positions
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    grad = u - np.sum(np.sign(d) / d**2, axis=1)
    assert np.max(np.abs(grad)) < 1e-10
    np.testing.assert_allclose(u, -u[::-1], atol=1e-9)
    assert np.all(np.diff(u) > 0)


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("n", [2, 7, 17, 30])
def test_mode_matrix_orthonormal_random_traps(seed, n):
    rng = np.random.default_rng(seed)
    trap = yb_trap(wx=rng.uniform(3, 6) * 1e6, wy=rng.uniform(2.5, 2.9) * 1e6,
                   wz=rng.uniform(0.1, 0.2) * 1e6)
    geo = ix.equilibrium_positions(n, trap)
    for axis in ("X'", "Y'"):
        modes = ix.transverse_modes(geo, trap, axis)
        gram = modes.b.T @ modes.b
        assert np.max(np.abs(gram - np.eye(n))) < 1e-10
        assert np.all(np.diff(modes.omega_m) <= 0)
        # row and column sums of b^2 are 1
        np.testing.assert_allclose((modes.b**2).sum(axis=0), 1.0, atol=1e-10)
        np.testing.assert_allclose((modes.b**2).sum(axis=1), 1.0, atol=1e-10)


def test_eigendecomposition_residual():
    trap = yb_trap()
    geo = ix.equilibrium_positions(5, trap)
    modes = ix.transverse_modes(geo, trap, "X'")
    u = geo.positions
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    inv3 = 1.0 / np.abs(d)**3
    hess = inv3.copy()
    np.fill_diagonal(hess, (trap.omega_x / trap.omega_z)**2 - inv3.sum(axis=1))
    for m in range(5):
        lam = (modes.omega_m[m] / trap.omega_z)**2
        resid = hess @ modes.b[:, m] - lam * modes.b[:, m]
        assert np.linalg.norm(resid) < 1e-9


def test_single_ion_modes():
    trap = yb_trap()
    geo = ix.equilibrium_positions(1, trap)
    modes = ix.transverse_modes(geo, trap, "X'")
    assert modes.omega_m == pytest.approx([trap.omega_x])
    np.testing.assert_allclose(modes.b, [[1.0]])


def test_two_ion_tilt_matches_analytic():
    trap = yb_trap()
    geo = ix.equilibrium_positions(2, trap)
    for axis, wt in (("X'", trap.omega_x), ("Y'", trap.omega_y)):
        modes = ix.transverse_modes(geo, trap, axis)
        assert modes.omega_m[0] == pytest.approx(wt, rel=1e-12)
        tilt = np.sqrt(wt**2 - trap.omega_z**2)
        assert modes.omega_m[1] == pytest.approx(tilt, rel=1e-12)


def test_com_mode_is_uniform_and_positive():
    trap = yb_trap(wx=5e6, wy=4.8e6, wz=0.4e6)
    geo = ix.equilibrium_positions(9, trap)
    modes = ix.transverse_modes(geo, trap, "X'")
    np.testing.assert_allclose(modes.b[:, 0], 1 / np.sqrt(9), atol=1e-10)


def test_zigzag_detection():
    # soft transverse confinement flips the lowest transverse eigenvalue
    trap = ix.TrapConfig(omega_x=2 * np.pi * 0.30e6, omega_y=2 * np.pi * 0.25e6,
                         omega_z=2 * np.pi * 0.2e6, mass=171 * U_KG)
    with pytest.raises(ZigZagUnstable):
        ix.equilibrium_positions(10, trap)


def test_lamb_dicke_values():
    trap = yb_trap()
    geo = ix.equilibrium_positions(2, trap)
    modes = ix.lamb_dicke(ix.transverse_modes(geo, trap, "X'"), trap)
    # eta = b dk sqrt(hbar / 2 M omega); b = 1/sqrt(2), omega ~ 1.1 MHz
    # reproduces the canonical 0.0648 at omega = 2 pi x 1.1 MHz
    hbar = 1.054571817e-34
    direct = (1 / np.sqrt(2)) * trap.delta_k * np.sqrt(
        hbar / (2 * trap.mass * 2 * np.pi * 1.1e6))
    assert direct == pytest.approx(0.0648, abs=2e-4)
    expected = modes.b * trap.delta_k * np.sqrt(
        hbar / (2 * trap.mass * modes.omega_m))[None, :]
    np.testing.assert_allclose(modes.eta, expected, rtol=1e-9)


def test_lamb_dicke_zero_b_and_sqrt_law():
    m1 = ix.ModeSet(axis="X'", omega_m=[2 * np.pi * 1.1e6], b=[[0.0], [1.0]])
    trap = yb_trap()
    filled = ix.lamb_dicke(m1, trap)
    assert filled.eta[0, 0] == 0.0
    m2 = ix.ModeSet(axis="X'", omega_m=[2 * np.pi * 2.2e6], b=[[0.0], [1.0]])
    filled2 = ix.lamb_dicke(m2, trap)
    assert filled2.eta[1, 0] == pytest.approx(filled.eta[1, 0] / np.sqrt(2), rel=1e-12)


def test_lamb_dicke_requires_delta_k():
    trap = ix.TrapConfig(omega_x=2 * np.pi * 1e6, omega_y=2 * np.pi * 0.9e6,
                         omega_z=2 * np.pi * 0.2e6, mass=171 * U_KG, delta_k=0.0)
    geo = ix.equilibrium_positions(2, trap)
    modes = ix.transverse_modes(geo, trap, "X'")
    with pytest.raises(ValidationError):
        ix.lamb_dicke(modes, trap)


def test_literal_modes_and_json_roundtrip():
    modes = ix.ModeSet.from_literal([2 * np.pi], [[1.0], [1.0]], [[1.0], [1.0]])
    payload = json.loads(modes.to_json())
    assert payload["omega_m_rad_s"] == [2 * np.pi]
    assert payload["eta"] == [[1.0], [1.0]]


def test_trap_config_validation():
    with pytest.raises(ValidationError):
        ix.TrapConfig(omega_x=-1.0, omega_y=1.0, omega_z=1.0, mass=1.0)
    with pytest.raises(ValidationError):
        ix.TrapConfig(omega_x=1.0, omega_y=1.0, omega_z=1.0, mass=1.0, delta_k=-1.0)
