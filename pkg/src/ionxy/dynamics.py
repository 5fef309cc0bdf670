"""Exact spin-phonon time evolution in a truncated Fock space, effective
XY-model evolution, a closed-form two-ion solution, observables, and
second-order-commutator (Magnus) diagnostics.

Basis ordering is spin-major with ion 1 most significant: the amplitude
vector is the flattened C-order tensor with axes
``[spin_1, ..., spin_N, fock_1, ..., fock_M]`` where spin index 0 is
|down> and Fock axes follow the order of ``HilbertSpec.mode_indices``.

States produced by :func:`evolve_full` live in the interaction picture
of the free spin and phonon Hamiltonian: with the drive off the state is
constant.  Spin populations and phonon numbers are frame independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, solve_ivp
from scipy.optimize import curve_fit

from .chain import ModeSet
from .coupling import CouplingMatrix, SDFTone, ising_couplings
from .errors import (
    DimensionCap,
    DimensionMismatch,
    FitDiverged,
    LeakageExceeded,
    MissingStates,
    StepFailure,
    UnsupportedDrive,
    ValidationError,
)

__all__ = [
    "HilbertSpec",
    "QuantumState",
    "DriveProgram",
    "Trajectory",
    "MagnusDiagnostics",
    "OscillationFit",
    "build_hamiltonian",
    "evolve_full",
    "evolve_effective",
    "closed_form_2ion",
    "observables",
    "magnus_diagnostics",
    "fit_oscillation",
    "spin_label_index",
    "spin_basis_labels",
    "product_state",
    "thermal_fock_sample",
]

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], complex)

LEAKAGE_HARD_LIMIT = 1e-3
INIT_LEAKAGE_LIMIT = 1e-6
EFFECTIVE_N_CAP = 14


@dataclass(frozen=True)
class HilbertSpec:
    """Truncated spin-phonon Hilbert space.

    ``mode_indices`` selects which modes of a ModeSet take part in the
    dynamics; each carries ``n_max + 1`` Fock levels.
    """

    n_ions: int
    mode_indices: tuple[int, ...] = ()
    n_max: int = 4
    dim_cap: int = 2**16

    def __post_init__(self):
        object.__setattr__(self, "mode_indices",
                           tuple(int(i) for i in np.atleast_1d(self.mode_indices)))
        if self.n_ions < 1:
            raise ValidationError("n_ions must be >= 1", parameter="n_ions")
        if self.mode_indices and self.n_max < 1:
            raise ValidationError("n_max must be >= 1", parameter="n_max")
        if self.dim > self.dim_cap:
            raise DimensionCap(
                f"dimension {self.dim} exceeds cap {self.dim_cap}")

    @property
    def levels(self) -> int:
        return self.n_max + 1

    @property
    def n_modes(self) -> int:
        return len(self.mode_indices)

    @property
    def spin_dim(self) -> int:
        return 2**self.n_ions

    @property
    def fock_dim(self) -> int:
        return self.levels**self.n_modes

    @property
    def dim(self) -> int:
        return self.spin_dim * self.fock_dim


def spin_basis_labels(n_ions: int) -> list[str]:
    """Labels 'dd', 'du', ... with ion 1 as the leading character."""
    return ["".join("u" if (k >> (n_ions - 1 - i)) & 1 else "d"
                    for i in range(n_ions))
            for k in range(2**n_ions)]


def spin_label_index(label: str) -> int:
    idx = 0
    for ch in label:
        if ch not in "du":
            raise ValidationError(f"spin label may only contain 'd'/'u': {label!r}")
        idx = (idx << 1) | (1 if ch == "u" else 0)
    return idx


@dataclass(frozen=True)
class QuantumState:
    """Normalized amplitude vector over the spin (x) Fock product basis."""

    amplitudes: np.ndarray
    spec: HilbertSpec

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, complex).ravel()
        if amp.size != self.spec.dim:
            raise DimensionMismatch(
                f"state has {amp.size} amplitudes, space has {self.spec.dim}")
        norm = np.linalg.norm(amp)
        if abs(norm - 1.0) > 1e-9:
            raise ValidationError(f"state norm {norm!r} deviates from 1 by more than 1e-9")
        object.__setattr__(self, "amplitudes", amp)

    def top_level_population(self) -> float:
        return _top_level_population(self.amplitudes, self.spec)


def _tensor_shape(spec: HilbertSpec) -> tuple[int, ...]:
    return (2,) * spec.n_ions + (spec.levels,) * spec.n_modes


def _top_level_population(amp: np.ndarray, spec: HilbertSpec) -> float:
    if spec.n_modes == 0:
        return 0.0
    tensor = np.abs(amp.reshape(_tensor_shape(spec))) ** 2
    worst = 0.0
    for k in range(spec.n_modes):
        pop = tensor.take(spec.n_max, axis=spec.n_ions + k).sum()
        worst = max(worst, float(pop))
    return worst


def product_state(spec: HilbertSpec, spins: str | Sequence[int],
                  fock: Sequence[int] | None = None) -> QuantumState:
    """Product basis state |spins> (x) |n_1 ... n_M>; phonon vacuum by default."""
    if isinstance(spins, str):
        sidx = spin_label_index(spins)
        if len(spins) != spec.n_ions:
            raise ValidationError("spin label length mismatch")
    else:
        sidx = 0
        for s in spins:
            sidx = (sidx << 1) | int(s)
    occ = [0] * spec.n_modes if fock is None else list(fock)
    if len(occ) != spec.n_modes:
        raise ValidationError("one Fock occupation per mode required")
    fidx = 0
    for n in occ:
        if not 0 <= n <= spec.n_max:
            raise ValidationError("Fock occupation outside truncation")
        fidx = fidx * spec.levels + int(n)
    amp = np.zeros(spec.dim, complex)
    amp[sidx * spec.fock_dim + fidx] = 1.0
    return QuantumState(amplitudes=amp, spec=spec)


def thermal_fock_sample(spec: HilbertSpec, nbar: float | Sequence[float],
                        rng: np.random.Generator) -> list[int]:
    """Draw per-mode Fock occupations from a geometric (thermal) law.

    Used for pure-state sampling of thermal initial conditions; the
    distribution is truncated and renormalized at ``n_max``.
    """
    nbars = np.broadcast_to(np.asarray(nbar, float), (spec.n_modes,))
    occ = []
    for nb in nbars:
        if nb < 0:
            raise ValidationError("nbar must be >= 0")
        ns = np.arange(spec.levels)
        p = (nb / (nb + 1.0)) ** ns / (nb + 1.0) if nb > 0 else (ns == 0).astype(float)
        p = p / p.sum()
        occ.append(int(rng.choice(spec.levels, p=p)))
    return occ


@dataclass(frozen=True)
class DriveProgram:
    """Ordered drive segments; tones within a segment act simultaneously.

    ``use_rwa`` selects the rotating-frame form where each mode term
    oscillates at delta_m = omega_m - mu and the sideband amplitude is
    eta Omega / 2 (the motional phase enters with flipped sign relative
    to the lab cosine).  The lab form keeps cos(mu t + psi) against the
    free phonon phases and is retained as a cross-check.
    """

    segments: tuple[tuple[float, tuple[SDFTone, ...]], ...]
    use_rwa: bool = True

    def __post_init__(self):
        segs = []
        for duration, tones in self.segments:
            if duration <= 0:
                raise ValidationError("segment durations must be > 0")
            tone_tuple = tuple(tones) if isinstance(tones, (list, tuple)) else (tones,)
            segs.append((float(duration), tone_tuple))
        object.__setattr__(self, "segments", tuple(segs))

    @classmethod
    def continuous(cls, tones, duration: float, use_rwa: bool = True) -> "DriveProgram":
        return cls(segments=((duration, tuple(np.atleast_1d(tones))),), use_rwa=use_rwa)

    @property
    def total_duration(self) -> float:
        return sum(d for d, _ in self.segments)

    def boundaries(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([d for d, _ in self.segments])])

    def all_tones(self) -> list[SDFTone]:
        return [t for _, tones in self.segments for t in tones]


def _kron_chain(mats: list[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, mats)


def _spin_operator(spec: HilbertSpec, ion: int, pauli: np.ndarray) -> np.ndarray:
    mats = [np.eye(2, dtype=complex)] * spec.n_ions
    mats[ion] = pauli
    op = _kron_chain(mats)
    if spec.n_modes:
        op = np.kron(op, np.eye(spec.fock_dim, dtype=complex))
    return op


def _mode_operator(spec: HilbertSpec, k: int, op: np.ndarray) -> np.ndarray:
    mats = [np.eye(spec.levels, dtype=complex)] * spec.n_modes
    mats[k] = op
    full = _kron_chain(mats)
    return np.kron(np.eye(spec.spin_dim, dtype=complex), full)


def _destroy(levels: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, levels, dtype=float)), k=1).astype(complex)


class _SegmentTerms:
    """Precomputed operator terms of one drive segment.

    RWA terms: H(t) = sum env(u) (exp(-i delta t) P + h.c.).
    Lab terms: H(t) = sum env(u) cos(mu t + psi_i) (exp(-i omega t) Q_im + h.c.).
    """

    def __init__(self, tones, spec: HilbertSpec, modes: ModeSet, use_rwa: bool,
                 t0: float, duration: float):
        if modes.eta is None:
            raise ValidationError("ModeSet.eta required for dynamics; call lamb_dicke")
        self.t0 = t0
        self.duration = duration
        self.rwa = []   # (delta, P, Pdag, envelope)
        self.lab = []   # (omega, mu, psi, Q, Qdag, envelope)
        a_ops = [_mode_operator(spec, k, _destroy(spec.levels))
                 for k in range(spec.n_modes)]
        for tone in tones:
            rabi = tone.rabi_for(spec.n_ions)
            psi = tone.phase_for(spec.n_ions)
            theta = tone.spin_phase
            pauli = np.cos(theta) * SIGMA_X + np.sin(theta) * SIGMA_Y
            spin_ops = [_spin_operator(spec, i, pauli) for i in range(spec.n_ions)]
            for k, mode_idx in enumerate(spec.mode_indices):
                omega = modes.omega_m[mode_idx]
                eta = modes.eta[:, mode_idx]
                if use_rwa:
                    delta = omega - tone.mu
                    K = sum((eta[i] * rabi[i] / 2.0) * np.exp(1j * psi[i]) * spin_ops[i]
                            for i in range(spec.n_ions))
                    P = K @ a_ops[k]
                    self.rwa.append((delta, P, P.conj().T, tone.envelope))
                else:
                    uniform_psi = np.allclose(psi, psi[0])
                    if uniform_psi:
                        Q = sum(eta[i] * rabi[i] * spin_ops[i]
                                for i in range(spec.n_ions)) @ a_ops[k]
                        self.lab.append((omega, tone.mu, psi[0], Q, Q.conj().T,
                                         tone.envelope))
                    else:
                        for i in range(spec.n_ions):
                            Q = (eta[i] * rabi[i]) * (spin_ops[i] @ a_ops[k])
                            self.lab.append((omega, tone.mu, psi[i], Q, Q.conj().T,
                                             tone.envelope))

    def _env(self, envelope, t: float) -> float:
        if envelope is None:
            return 1.0
        u = (t - self.t0) / self.duration
        return float(envelope(min(max(u, 0.0), 1.0)))

    def hamiltonian(self, t: float, dim: int) -> np.ndarray:
        H = np.zeros((dim, dim), complex)
        for delta, P, Pdag, envelope in self.rwa:
            c = self._env(envelope, t) * np.exp(-1j * delta * t)
            H += c * P + np.conj(c) * Pdag
        for omega, mu, psi, Q, Qdag, envelope in self.lab:
            c = self._env(envelope, t) * np.cos(mu * t + psi) * np.exp(-1j * omega * t)
            H += c * Q + np.conj(c) * Qdag
        return H

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        acc = np.zeros_like(y)
        for delta, P, Pdag, envelope in self.rwa:
            c = self._env(envelope, t) * np.exp(-1j * delta * t)
            acc += c * (P @ y) + np.conj(c) * (Pdag @ y)
        for omega, mu, psi, Q, Qdag, envelope in self.lab:
            c = self._env(envelope, t) * np.cos(mu * t + psi) * np.exp(-1j * omega * t)
            acc += c * (Q @ y) + np.conj(c) * (Qdag @ y)
        return -1j * acc

    def fastest_cycle_frequency(self, use_rwa: bool) -> float:
        """Largest cyclic frequency present (Hz-like units of 1/t)."""
        f = 0.0
        for delta, _, _, envelope in self.rwa:
            f = max(f, abs(delta) / (2 * np.pi))
            if envelope is not None:
                f = max(f, 10.0 / self.duration)
        for omega, mu, _, _, _, envelope in self.lab:
            f = max(f, omega / (2 * np.pi), mu / (2 * np.pi))
            if envelope is not None:
                f = max(f, 10.0 / self.duration)
        return f


def _segment_terms(drive: DriveProgram, spec: HilbertSpec, modes: ModeSet):
    bounds = drive.boundaries()
    return [
        _SegmentTerms(tones, spec, modes, drive.use_rwa, bounds[k], duration)
        for k, (duration, tones) in enumerate(drive.segments)
    ], bounds


def build_hamiltonian(t: float, drive: DriveProgram, spec: HilbertSpec,
                      modes: ModeSet) -> np.ndarray:
    """Hamiltonian matrix (rad/s) of the drive at global time t.

    Hermitian by construction; couples |s, n> to |s', n +- 1> only.
    """
    if t < 0 or t > drive.total_duration + 1e-12:
        raise ValidationError("t outside the drive program")
    terms, bounds = _segment_terms(drive, spec, modes)
    k = min(int(np.searchsorted(bounds, t, side="right")) - 1, len(terms) - 1)
    return terms[k].hamiltonian(t, spec.dim)


@dataclass
class Trajectory:
    """Sampled evolution: times, states, and truncation diagnostics."""

    times: np.ndarray
    states: np.ndarray | None
    spec: HilbertSpec
    leakage_series: np.ndarray | None = None
    leakage: float = 0.0
    max_norm_drift: float = 0.0

    @property
    def spin_only(self) -> bool:
        return self.spec.n_modes == 0

    def require_states(self) -> np.ndarray:
        if self.states is None:
            raise MissingStates("trajectory stored observables only")
        return self.states


def evolve_full(init: QuantumState, drive: DriveProgram, modes: ModeSet,
                t_final: float, sample_dt: float, *, rtol: float = 1e-8,
                atol: float = 1e-11, max_step: float | None = None,
                method: str = "DOP853") -> Trajectory:
    """Integrate the Schroedinger equation under the drive program.

    Adaptive embedded Runge-Kutta with a step cap of one fiftieth of the
    fastest oscillation period in the active frame, so the beatnote is
    never aliased.  The state is renormalized at every sample point; the
    norm drift accumulated between samples is recorded and the top Fock
    level of every mode is monitored.

    Raises
    ------
    LeakageExceeded
        If any top-level population exceeds 1e-3 (enlarge n_max).
    StepFailure
        If the integrator cannot meet its tolerance.
    """
    spec = init.spec
    if init.top_level_population() >= INIT_LEAKAGE_LIMIT:
        raise ValidationError("initial state already populates the top Fock level")
    if t_final <= 0 or sample_dt <= 0:
        raise ValidationError("t_final and sample_dt must be > 0")
    total_duration = drive.total_duration
    if total_duration < t_final * (1.0 - 1e-9) - 1e-12:
        raise ValidationError("drive program shorter than t_final")
    t_final = min(t_final, total_duration)
    terms, bounds = _segment_terms(drive, spec, modes)

    sample_times = np.arange(0.0, t_final + sample_dt * 1e-9, sample_dt)
    sample_times = np.minimum(sample_times, t_final)
    if sample_times[-1] < t_final - sample_dt * 1e-6:
        sample_times = np.append(sample_times, t_final)
    sample_times = np.unique(sample_times)

    states = np.empty((sample_times.size, spec.dim), complex)
    leak = np.empty(sample_times.size)
    states[0] = init.amplitudes
    leak[0] = init.top_level_population()
    max_drift = 0.0
    y = init.amplitudes.copy()

    for k, seg in enumerate(terms):
        seg_start, seg_end = bounds[k], min(bounds[k + 1], t_final)
        if seg_start >= t_final - 1e-15 * max(1.0, t_final):
            break
        cap = max_step
        if cap is None:
            fmax = seg.fastest_cycle_frequency(drive.use_rwa)
            cap = (1.0 / (50.0 * fmax)) if fmax > 0 else np.inf
        idx = np.flatnonzero((sample_times > seg_start + 1e-15) &
                             (sample_times <= seg_end + 1e-15))
        eval_points = list(sample_times[idx])
        sample_slots = {e: int(s) for e, s in enumerate(idx)}
        if not eval_points or eval_points[-1] < seg_end * (1.0 - 1e-14):
            eval_points.append(seg_end)
        sol = solve_ivp(seg.rhs, (seg_start, seg_end), y, method=method,
                        t_eval=eval_points, rtol=rtol, atol=atol, max_step=cap)
        if not sol.success:
            raise StepFailure(f"integrator failed in segment {k}: {sol.message}")
        for e in range(sol.t.size):
            col = sol.y[:, e]
            max_drift = max(max_drift, abs(np.linalg.norm(col) - 1.0))
            col = col / np.linalg.norm(col)
            slot = sample_slots.get(e)
            if slot is not None:
                states[slot] = col
                leak[slot] = _top_level_population(col, spec)
                if leak[slot] > LEAKAGE_HARD_LIMIT:
                    raise LeakageExceeded(
                        f"top Fock level population {leak[slot]:.2e} at "
                        f"t={sol.t[e]:.3e}; enlarge n_max")
            if e == sol.t.size - 1:
                y = col
    return Trajectory(times=sample_times, states=states, spec=spec,
                      leakage_series=leak, leakage=float(leak.max()),
                      max_norm_drift=float(max_drift))


def _spin_pair_hamiltonian(jx: np.ndarray, jy: np.ndarray) -> np.ndarray:
    n = jx.shape[0]
    dim = 2**n
    spec = HilbertSpec(n_ions=n)
    H = np.zeros((dim, dim), complex)
    sx = [_spin_operator(spec, i, SIGMA_X) for i in range(n)]
    sy = [_spin_operator(spec, i, SIGMA_Y) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            H += jx[i, j] * (sx[i] @ sx[j]) + jy[i, j] * (sy[i] @ sy[j])
    return H


def evolve_effective(jx: CouplingMatrix | np.ndarray, jy: CouplingMatrix | np.ndarray,
                     init_spin, times) -> Trajectory:
    """Evolve a spin state under H/hbar = sum J^x sxsx + J^y sysy.

    Uses one Hermitian eigendecomposition, so energy is conserved to
    machine precision.  Capped at 14 ions.
    """
    jx_mat = jx.J if isinstance(jx, CouplingMatrix) else np.asarray(jx, float)
    jy_mat = jy.J if isinstance(jy, CouplingMatrix) else np.asarray(jy, float)
    if jx_mat.shape != jy_mat.shape:
        raise DimensionMismatch("jx and jy differ in shape")
    n = jx_mat.shape[0]
    if n > EFFECTIVE_N_CAP:
        raise DimensionCap(f"effective evolution capped at {EFFECTIVE_N_CAP} ions")
    spec = HilbertSpec(n_ions=n)
    if isinstance(init_spin, str):
        psi0 = product_state(spec, init_spin).amplitudes
    else:
        psi0 = np.asarray(init_spin, complex).ravel()
        if psi0.size != spec.dim:
            raise DimensionMismatch("initial spin state dimension mismatch")
        psi0 = psi0 / np.linalg.norm(psi0)
    H = _spin_pair_hamiltonian(jx_mat, jy_mat)
    evals, evecs = np.linalg.eigh(H)
    # psi(t) = V exp(-i E t) V^dag psi0
    coeff = evecs.conj().T @ psi0
    times = np.atleast_1d(np.asarray(times, float))
    phases = np.exp(-1j * np.outer(times, evals))
    states = np.einsum("ab,tb->ta", evecs, phases * coeff[None, :])
    return Trajectory(times=times, states=states, spec=spec,
                      leakage_series=np.zeros(times.size), leakage=0.0,
                      max_norm_drift=0.0)


_CLOSED_FORM_BASIS = {"dd": 0, "du": 1, "ud": 2, "uu": 3}


def closed_form_2ion(jx12: float, jy12: float, init: str, tau: float) -> np.ndarray:
    """Exact two-ion amplitudes under J^x sxsx + J^y sysy.

    (dd, uu) mix at the difference frequency J^x - J^y and (du, ud) at
    the sum J^x + J^y; basis order is (dd, du, ud, uu).
    """
    if init not in _CLOSED_FORM_BASIS:
        raise ValidationError("init must be one of dd, du, ud, uu")
    diff = (jx12 - jy12) * tau
    summ = (jx12 + jy12) * tau
    out = np.zeros(4, complex)
    if init == "dd":
        out[0] = np.cos(diff)
        out[3] = -1j * np.sin(diff)
    elif init == "uu":
        out[3] = np.cos(diff)
        out[0] = -1j * np.sin(diff)
    elif init == "du":
        out[1] = np.cos(summ)
        out[2] = -1j * np.sin(summ)
    else:
        out[2] = np.cos(summ)
        out[1] = -1j * np.sin(summ)
    return out


def _spin_density(amp: np.ndarray, spec: HilbertSpec) -> np.ndarray:
    psi = amp.reshape(spec.spin_dim, spec.fock_dim)
    return psi @ psi.conj().T


def observables(traj: Trajectory, reference: "Trajectory | np.ndarray | None" = None
                ) -> dict:
    """Per-time spin populations, mean phonon numbers, and optional fidelity.

    ``reference`` may be a spin-only trajectory (or an array of spin
    amplitudes on the same time grid); the fidelity of the phonon-traced
    state against the pure reference is <ref| rho_spin |ref>.
    """
    states = traj.require_states()
    spec = traj.spec
    tensor = np.abs(states.reshape((states.shape[0],) + _tensor_shape(spec))) ** 2
    spin_axes = tuple(range(1, 1 + spec.n_ions))
    fock_axes = tuple(range(1 + spec.n_ions, 1 + spec.n_ions + spec.n_modes))
    populations = tensor.sum(axis=fock_axes) if fock_axes else tensor
    populations = populations.reshape(states.shape[0], spec.spin_dim)
    n_mean = np.zeros((states.shape[0], spec.n_modes))
    for k in range(spec.n_modes):
        axis = 1 + spec.n_ions + k
        weights = np.arange(spec.levels, dtype=float)
        marg = tensor.sum(axis=tuple(a for a in spin_axes + fock_axes if a != axis))
        n_mean[:, k] = marg @ weights
    result = {
        "labels": spin_basis_labels(spec.n_ions),
        "spin_populations": populations,
        "mean_phonons": n_mean,
        "leakage": traj.leakage_series,
    }
    if reference is not None:
        ref_states = reference.require_states() if isinstance(reference, Trajectory) \
            else np.asarray(reference, complex)
        if ref_states.shape[0] != states.shape[0]:
            raise DimensionMismatch("reference trajectory time grid mismatch")
        fid = np.empty(states.shape[0])
        for t in range(states.shape[0]):
            rho = _spin_density(states[t], spec)
            phi = ref_states[t]
            fid[t] = float(np.real(phi.conj() @ rho @ phi))
        result["fidelity"] = fid
    return result


@dataclass
class MagnusDiagnostics:
    """Accumulated second-order phases of a two-tone drive.

    ``chi_x``/``chi_y`` are the two-spin phases whose secular slopes
    reproduce (minus) the coupling matrices; ``lambda_abs`` is the
    magnitude of the cross sigma_x sigma_y coefficient, ``zeta_abs`` the
    vacuum-expectation magnitude of the single-spin sigma_z cross term,
    and ``phi_abs`` the residual spin-motion displacement magnitude.
    """

    tau: np.ndarray
    chi_x: np.ndarray
    chi_y: np.ndarray
    lambda_abs: np.ndarray
    zeta_abs: np.ndarray
    phi_abs: np.ndarray
    jx: CouplingMatrix
    jy: CouplingMatrix
    mu_split: float

    @property
    def lambda_max(self) -> float:
        return float(self.lambda_abs.max())

    @property
    def lambda_bound(self) -> float:
        """Analytic cap 4 max(|J^x|, |J^y|) / |mu1 - mu2| on the cross term."""
        jmax = np.maximum(np.abs(self.jx.J), np.abs(self.jy.J)).max()
        return float(4.0 * jmax / self.mu_split) if self.mu_split > 0 else np.inf

    @property
    def bound_satisfied(self) -> bool:
        return self.lambda_max <= self.lambda_bound

    def secular_slopes(self) -> dict:
        """Linear-fit growth rates of each accumulated phase."""
        def slope(series):
            flat = series.reshape(series.shape[0], -1)
            return np.array([np.polyfit(self.tau, flat[:, c], 1)[0]
                             for c in range(flat.shape[1])]).reshape(series.shape[1:])
        return {
            "chi_x": slope(self.chi_x),
            "chi_y": slope(self.chi_y),
            "lambda": slope(self.lambda_abs),
            "zeta": slope(self.zeta_abs),
        }


def _two_tone(drive: DriveProgram) -> tuple[SDFTone, SDFTone]:
    if len(drive.segments) != 1:
        raise UnsupportedDrive("diagnostics require a single continuous segment")
    tones = drive.segments[0][1]
    if len(tones) != 2:
        raise UnsupportedDrive("diagnostics require exactly two tones")
    x = [t for t in tones if abs(np.cos(t.spin_phase)) > 0.999]
    y = [t for t in tones if abs(np.sin(t.spin_phase)) > 0.999]
    if len(x) != 1 or len(y) != 1:
        raise UnsupportedDrive("tones must have spin phases 0 and pi/2")
    if x[0].envelope is not None or y[0].envelope is not None:
        raise UnsupportedDrive("diagnostics assume constant-amplitude tones")
    return x[0], y[0]


def magnus_diagnostics(drive: DriveProgram, modes: ModeSet,
                       tau_grid: np.ndarray) -> MagnusDiagnostics:
    """Numerically accumulate the double-time commutator integrals.

    The inner time integral is carried out in closed form and the outer
    integral by cumulative trapezoid on ``tau_grid``, which must resolve
    the largest detuning present.
    """
    tone_x, tone_y = _two_tone(drive)
    if modes.eta is None:
        raise ValidationError("ModeSet.eta required; call lamb_dicke first")
    tau = np.asarray(tau_grid, float)
    if tau.ndim != 1 or tau.size < 8 or np.any(np.diff(tau) <= 0):
        raise ValidationError("tau_grid must be increasing with >= 8 points")
    if tau[0] > 0:
        tau = np.concatenate([[0.0], tau])
        prepended = True
    else:
        prepended = False

    n = modes.n_ions
    gx = modes.eta * tone_x.rabi_for(n)[:, None] / 2.0
    gy = modes.eta * tone_y.rabi_for(n)[:, None] / 2.0
    d1 = modes.omega_m - tone_x.mu
    d2 = modes.omega_m - tone_y.mu
    # rotating-frame constant phases (sign flipped relative to the lab cosine)
    cx = -tone_x.phase_for(n)
    cy = -tone_y.phase_for(n)

    T, M = tau.size, modes.n_modes

    def cumint(values):
        return cumulative_trapezoid(values, tau, axis=0, initial=0.0)

    # same-tone phases: chi_ij = 2 sum_m g_im g_jm Int (1 - cos(delta t))/delta
    K1 = cumint((1.0 - np.cos(np.outer(tau, d1))) / d1[None, :])
    K2 = cumint((1.0 - np.cos(np.outer(tau, d2))) / d2[None, :])
    chi_x = 2.0 * np.einsum("im,jm,tm->tij", gx, gx, K1)
    chi_y = 2.0 * np.einsum("im,jm,tm->tij", gy, gy, K2)
    for arr in (chi_x, chi_y):
        arr[:, np.arange(n), np.arange(n)] = 0.0

    # cross two-spin term: pair (i, j) carries constant c = cx_i - cy_j
    lam = np.zeros((T, n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            c = cx[i] - cy[j]
            inner = ((np.cos(np.outer(tau, d1 - d2) + c) - np.cos(np.outer(tau, d1) + c)) / d2[None, :]
                     + (np.cos(np.outer(tau, d2 - d1) - c) - np.cos(np.outer(tau, d2) - c)) / d1[None, :])
            lam[:, i, j] = np.abs(cumint(inner) @ (gx[i] * gy[j]))

    # single-spin sigma_z cross term, vacuum expectation
    zeta = np.zeros((T, n))
    for i in range(n):
        c = cx[i] - cy[i]
        t1 = np.exp(-1j * (np.outer(tau, d1) + c)) * (np.exp(1j * np.outer(tau, d2)) - 1.0) / (1j * d2[None, :])
        t2 = np.exp(-1j * (np.outer(tau, d2) - c)) * (np.exp(1j * np.outer(tau, d1)) - 1.0) / (1j * d1[None, :])
        zeta[:, i] = np.abs(cumint(t1 - t2) @ (gx[i] * gy[i]))

    # first-order residual displacement, summed in quadrature over modes/tones
    disp_x = cumint(np.exp(-1j * np.outer(tau, d1)))
    disp_y = cumint(np.exp(-1j * np.outer(tau, d2)))
    phi = np.sqrt(np.abs(disp_x[:, None, :] * gx[None, :, :]) ** 2 @ np.ones(M)
                  + np.abs(disp_y[:, None, :] * gy[None, :, :]) ** 2 @ np.ones(M))

    jx = ising_couplings(modes, tone_x)
    jy = ising_couplings(modes, tone_y)
    sl = slice(1, None) if prepended else slice(None)
    return MagnusDiagnostics(tau=tau[sl], chi_x=chi_x[sl], chi_y=chi_y[sl],
                             lambda_abs=lam[sl], zeta_abs=zeta[sl],
                             phi_abs=phi[sl], jx=jx, jy=jy,
                             mu_split=abs(tone_x.mu - tone_y.mu))


@dataclass
class OscillationFit:
    """Damped squared-sine fit parameters and their standard errors."""

    omega: float
    decay_time: float
    amplitude: float
    saturation: float
    phase: float
    offset: float
    stderr: dict

    def as_array(self) -> np.ndarray:
        return np.array([self.omega, self.decay_time, self.amplitude,
                         self.saturation, self.phase, self.offset])


def _oscillation_model(t, omega, decay_time, amplitude, saturation, phase, offset):
    env = np.exp(-t / decay_time)
    return np.sin(omega * t + phase) ** 2 * amplitude * env + saturation * (1.0 - env) + offset


def fit_oscillation(times, values) -> OscillationFit:
    """Fit sin^2(w t + phi) alpha e^(-t/T) + beta (1 - e^(-t/T)) + C.

    The frequency guess comes from the dominant FFT component (the
    squared sine oscillates at twice the returned omega).  Raises
    FitDiverged when the least squares does not converge.
    """
    t = np.asarray(times, float)
    v = np.asarray(values, float)
    if t.size != v.size:
        raise ValidationError("times and values length mismatch")
    if t.size < 8:
        raise ValidationError("need at least 8 samples")
    span = t[-1] - t[0]
    detrended = v - v.mean()
    freqs = np.fft.rfftfreq(t.size, d=(t[1] - t[0]))
    power = np.abs(np.fft.rfft(detrended))
    peak = freqs[1 + int(np.argmax(power[1:]))] if power.size > 1 else 1.0 / span
    omega0 = max(np.pi * peak, np.pi / (10 * span))
    ptp = float(v.max() - v.min())
    p0_common = [omega0, span, max(ptp, 1e-12), float(np.clip(v[-1] - v.min(), 0, 1) or 0.1),
                 0.0, float(v.min())]
    lower = [0.0, span * 1e-3, 0.0, -2.0 * max(ptp, 1.0), -np.pi, -np.inf]
    upper = [np.inf, span * 1e6, 4.0 * max(ptp, 1e-9), 2.0 * max(ptp, 1.0), np.pi, np.inf]
    best = None
    for phase0 in (0.0, np.pi / 4, np.pi / 2, -np.pi / 4):
        p0 = list(p0_common)
        p0[4] = phase0
        try:
            popt, pcov = curve_fit(_oscillation_model, t, v, p0=p0,
                                   bounds=(lower, upper), maxfev=20000)
        except (RuntimeError, ValueError):
            continue
        resid = float(np.sum((_oscillation_model(t, *popt) - v) ** 2))
        if best is None or resid < best[0]:
            best = (resid, popt, pcov)
    if best is None:
        raise FitDiverged("oscillation fit did not converge from any start")
    _, popt, pcov = best
    if not np.all(np.isfinite(popt)):
        raise FitDiverged("oscillation fit returned non-finite parameters")
    err = np.sqrt(np.abs(np.diag(pcov)))
    names = ["omega", "decay_time", "amplitude", "saturation", "phase", "offset"]
    return OscillationFit(omega=float(popt[0]), decay_time=float(popt[1]),
                          amplitude=float(popt[2]), saturation=float(popt[3]),
                          phase=float(popt[4]), offset=float(popt[5]),
                          stderr=dict(zip(names, err.tolist())))
