"""Spin-spin coupling matrices from off-resonant spin-dependent-force tones,
validity checks for the two-tone XY scheme, and detuning engineering for
power-law interaction profiles.

The coupling between ions i and j mediated by the modes of one axis is

    J_ij = Omega_i Omega_j sum_m eta_im eta_jm omega_m / (mu^2 - omega_m^2)

which for trap-derived mode sets is identical to the form written with
``hbar dk^2 / 2M`` and the bare mode matrix.  The eta-based form also
covers dimensionless literal mode sets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .chain import ModeSet, TrapConfig, equilibrium_positions, lamb_dicke, transverse_modes
from .errors import (
    DegenerateTones,
    ResonantTone,
    TargetUnreachable,
    ValidationError,
    ZeroCoupling,
    ZeroMatrix,
)

__all__ = [
    "SDFTone",
    "CouplingMatrix",
    "ValidityReport",
    "SpectrumReport",
    "PowerLawSolution",
    "DEFAULT_RESONANCE_GUARD",
    "ising_couplings",
    "xy_couplings",
    "matched_y_tone",
    "validity_report",
    "power_law_fit",
    "engineer_power_law",
    "frobenius_proximity",
    "mode_spectrum_report",
]

DEFAULT_RESONANCE_GUARD = 2 * np.pi * 100.0  # rad/s


@dataclass(frozen=True)
class SDFTone:
    """One spin-dependent-force tone.

    Parameters
    ----------
    mu : float
        Tone frequency (rad/s).
    rabi : array_like
        Per-ion Rabi frequencies (rad/s).  A scalar is broadcast when the
        ion count is known from context.
    spin_phase : float
        0 couples to sigma_x, pi/2 to sigma_y.
    motional_phase : array_like
        Per-ion motional phase (rad); scalar broadcasts.
    envelope : callable, optional
        Amplitude shape on [0, 1] (fraction of the hosting segment),
        returning values in [0, 1].  None means constant amplitude.
    """

    mu: float
    rabi: np.ndarray
    spin_phase: float = 0.0
    motional_phase: np.ndarray = 0.0
    envelope: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.mu <= 0:
            raise ValidationError("tone frequency mu must be > 0", parameter="mu")
        rabi = np.atleast_1d(np.asarray(self.rabi, float))
        if np.any(rabi < 0):
            raise ValidationError("rabi frequencies must be >= 0", parameter="rabi")
        object.__setattr__(self, "rabi", rabi)
        psi = np.asarray(self.motional_phase, float)
        object.__setattr__(self, "motional_phase", psi)

    def rabi_for(self, n_ions: int) -> np.ndarray:
        if self.rabi.size == 1:
            return np.full(n_ions, self.rabi[0])
        if self.rabi.size != n_ions:
            raise ValidationError(
                f"rabi has {self.rabi.size} entries for {n_ions} ions",
                parameter="rabi")
        return self.rabi

    def phase_for(self, n_ions: int) -> np.ndarray:
        psi = np.atleast_1d(self.motional_phase)
        if psi.size == 1:
            return np.full(n_ions, psi[0])
        if psi.size != n_ions:
            raise ValidationError(
                f"motional_phase has {psi.size} entries for {n_ions} ions",
                parameter="motional_phase")
        return psi

    def scaled(self, factor) -> "SDFTone":
        """Return a copy with rabi multiplied by a scalar or per-ion factor."""
        return SDFTone(mu=self.mu, rabi=self.rabi * np.asarray(factor, float),
                       spin_phase=self.spin_phase,
                       motional_phase=self.motional_phase,
                       envelope=self.envelope)


@dataclass(frozen=True)
class CouplingMatrix:
    """Symmetric spin-spin coupling matrix (rad/s) for one Pauli pair."""

    J: np.ndarray
    axis_label: str = "xx"
    mu: float | None = None
    mode_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        J = np.asarray(self.J, float)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise ValidationError("J must be a square matrix")
        if not np.allclose(J, J.T, atol=1e-12 * max(1.0, np.abs(J).max())):
            raise ValidationError("J must be symmetric")
        J = 0.5 * (J + J.T)
        np.fill_diagonal(J, 0.0)
        object.__setattr__(self, "J", J)

    @property
    def n_ions(self) -> int:
        return self.J.shape[0]

    def max_abs(self) -> float:
        return float(np.abs(self.J).max()) if self.n_ions > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "axis_label": self.axis_label,
            "mu_rad_s": self.mu,
            "mode_indices": None if self.mode_indices is None else list(self.mode_indices),
            "J_rad_s": self.J.tolist(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def to_csv(self) -> str:
        """Row-major CSV with a header row of ion indices."""
        n = self.n_ions
        lines = ["ion," + ",".join(str(j + 1) for j in range(n))]
        for i in range(n):
            lines.append(str(i + 1) + "," +
                         ",".join(format(v, ".17g") for v in self.J[i]))
        return "\n".join(lines) + "\n"


def _effective_eta(modes: ModeSet, trap: TrapConfig | None) -> np.ndarray:
    if modes.eta is not None:
        return modes.eta
    if trap is None:
        raise ValidationError("ModeSet has no eta and no trap was supplied")
    return lamb_dicke(modes, trap).eta


def _resolve_mask(modes: ModeSet, mode_mask) -> np.ndarray:
    if mode_mask is None:
        return np.arange(modes.n_modes)
    mask = np.asarray(mode_mask)
    if mask.dtype == bool:
        if mask.size != modes.n_modes:
            raise ValidationError("boolean mode_mask length mismatch")
        return np.flatnonzero(mask)
    return mask.astype(int)


def _check_resonance(mu: float, omega: np.ndarray, guard: float):
    gap = np.min(np.abs(mu - omega))
    if gap < guard:
        raise ResonantTone(
            f"tone at {mu:.6e} rad/s is within {gap:.3e} rad/s of a mode "
            f"(guard {guard:.3e})")


def ising_couplings(modes: ModeSet, tone: SDFTone, trap: TrapConfig | None = None,
                    *, mode_mask=None, stark_factor=1.0,
                    resonance_guard: float = DEFAULT_RESONANCE_GUARD) -> CouplingMatrix:
    """Coupling matrix generated by a single tone on one mode axis.

    Parameters
    ----------
    modes : ModeSet
        Modes of the driven axis.  ``eta`` must be present or a trap
        supplied to derive it.
    tone : SDFTone
        Tone frequency and per-ion Rabi amplitudes.
    trap : TrapConfig, optional
        Used only to fill ``eta`` when missing.
    mode_mask : array_like, optional
        Mode indices (or boolean mask) restricting the mode sum;
        single-mode truncation passes one index.
    stark_factor : float or array_like
        Per-ion multiplicative correction on the Rabi frequencies
        (calibrated light-shift compensation); default 1.
    resonance_guard : float
        Minimum |mu - omega_m| (rad/s) before ResonantTone is raised.

    Returns
    -------
    CouplingMatrix
        Symmetric, zero-diagonal matrix in rad/s.
    """
    eta = _effective_eta(modes, trap)
    idx = _resolve_mask(modes, mode_mask)
    omega = modes.omega_m[idx]
    _check_resonance(tone.mu, omega, resonance_guard)
    rabi = tone.rabi_for(modes.n_ions) * np.asarray(stark_factor, float)
    weights = omega / (tone.mu**2 - omega**2)
    g = eta[:, idx] * rabi[:, None]          # g_im = eta_im Omega_i
    J = (g * weights[None, :]) @ g.T
    np.fill_diagonal(J, 0.0)
    axis = "xx" if abs(np.cos(tone.spin_phase)) >= abs(np.sin(tone.spin_phase)) else "yy"
    return CouplingMatrix(J=J, axis_label=axis, mu=tone.mu,
                          mode_indices=tuple(int(i) for i in idx))


def xy_couplings(modes: ModeSet, tone_x: SDFTone, tone_y: SDFTone,
                 trap: TrapConfig | None = None, *, mode_mask=None,
                 stark_x=1.0, stark_y=1.0, check_phases: bool = True,
                 resonance_guard: float = DEFAULT_RESONANCE_GUARD
                 ) -> tuple[CouplingMatrix, CouplingMatrix]:
    """Coupling matrices of the two parallel tones, evaluated at mu_1 and mu_2."""
    if check_phases:
        if not np.isclose(np.cos(tone_x.spin_phase), 1.0, atol=1e-9):
            raise ValidationError("tone_x.spin_phase must be 0 (sigma_x);"
                                  " pass check_phases=False to override")
        if not np.isclose(np.sin(tone_y.spin_phase), 1.0, atol=1e-9):
            raise ValidationError("tone_y.spin_phase must be pi/2 (sigma_y);"
                                  " pass check_phases=False to override")
    jx = ising_couplings(modes, tone_x, trap, mode_mask=mode_mask,
                         stark_factor=stark_x, resonance_guard=resonance_guard)
    jy = ising_couplings(modes, tone_y, trap, mode_mask=mode_mask,
                         stark_factor=stark_y, resonance_guard=resonance_guard)
    return (CouplingMatrix(J=jx.J, axis_label="xx", mu=jx.mu, mode_indices=jx.mode_indices),
            CouplingMatrix(J=jy.J, axis_label="yy", mu=jy.mu, mode_indices=jy.mode_indices))


def matched_y_tone(tone_x: SDFTone, mu2: float, modes: ModeSet,
                   *, resonance_guard: float = DEFAULT_RESONANCE_GUARD) -> SDFTone:
    """Y tone whose Rabi amplitudes are globally rescaled to match couplings.

    The scale ``sqrt(|mu2^2 - w_c^2| / |mu1^2 - w_c^2|)`` uses the mode
    nearest to the x tone, so the match is exact in the single-mode
    truncation and better than 99% with all modes included whenever the
    tones sit close to one mode.
    """
    _check_resonance(mu2, modes.omega_m, resonance_guard)
    nearest = modes.omega_m[np.argmin(np.abs(modes.omega_m - tone_x.mu))]
    scale = np.sqrt(abs(mu2**2 - nearest**2) / abs(tone_x.mu**2 - nearest**2))
    return SDFTone(mu=mu2, rabi=tone_x.rabi * scale, spin_phase=np.pi / 2.0,
                   motional_phase=tone_x.motional_phase, envelope=tone_x.envelope)


@dataclass(frozen=True)
class ValidityReport:
    """Checks that the two-tone drive realizes a clean XY Hamiltonian.

    ``separation_ratio`` compares the tone splitting against the largest
    coupling; ``slow_regime_ratios`` compare each tone's detuning from
    every mode against the sideband amplitude eta_im Omega_i / 2; the
    ``lambda_bound`` is the analytic cap 4 max|J| / |mu1 - mu2| on the
    residual cross coupling.
    """

    separation_ratio: float
    slow_regime_ratios: tuple[float, ...]
    lambda_bound: float
    verdict: str
    mu_split: float
    j_max: float

    def to_dict(self) -> dict:
        return {
            "separation_ratio": self.separation_ratio,
            "slow_regime_ratios": list(self.slow_regime_ratios),
            "lambda_bound": self.lambda_bound,
            "verdict": self.verdict,
            "mu_split_rad_s": self.mu_split,
            "j_max_rad_s": self.j_max,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


PASS_RATIO = 10.0
WARN_RATIO = 3.0


def validity_report(jx: CouplingMatrix, jy: CouplingMatrix,
                    tone_x: SDFTone, tone_y: SDFTone,
                    modes: ModeSet, trap: TrapConfig | None = None) -> ValidityReport:
    """Grade a two-tone configuration: pass (>= 10x), warn (>= 3x) or fail.

    Raises
    ------
    DegenerateTones
        If mu1 equals mu2; the resulting effective spin-spin Hamiltonian
        is Ising type and the XY separation criterion is meaningless.
    """
    if tone_x.mu == tone_y.mu:
        raise DegenerateTones(
            "mu1 equals mu2: the resulting effective spin-spin Hamiltonian "
            "is Ising type")
    mu_split = abs(tone_x.mu - tone_y.mu)
    j_max = max(jx.max_abs(), jy.max_abs())
    if j_max == 0:
        raise ZeroMatrix("both coupling matrices are zero")
    separation_ratio = mu_split / j_max
    eta = _effective_eta(modes, trap)
    ratios = []
    for tone in (tone_x, tone_y):
        rabi = tone.rabi_for(modes.n_ions)
        # sideband amplitude after the rotating-wave expansion is eta*Omega/2
        amp = np.abs(eta) * rabi[:, None] / 2.0
        detune = np.abs(tone.mu - modes.omega_m)[None, :]
        active = amp > 0
        if not np.any(active):
            ratios.append(np.inf)
        else:
            full_detune = np.broadcast_to(detune, amp.shape)
            ratios.append(float(np.min(full_detune[active] / amp[active])))
    lambda_bound = 4.0 * j_max / mu_split
    worst = min([separation_ratio] + ratios)
    if worst >= PASS_RATIO:
        verdict = "pass"
    elif worst >= WARN_RATIO:
        verdict = "warn"
    else:
        verdict = "fail"
    return ValidityReport(separation_ratio=float(separation_ratio),
                          slow_regime_ratios=tuple(float(r) for r in ratios),
                          lambda_bound=float(lambda_bound), verdict=verdict,
                          mu_split=float(mu_split), j_max=float(j_max))


def power_law_fit(j: CouplingMatrix) -> tuple[float, float]:
    """Least-squares exponent of |J_ij| ~ 1/|i-j|^alpha over all pairs.

    Returns ``(alpha, residual)`` where residual is the RMS deviation of
    log|J| around the fitted line.
    """
    n = j.n_ions
    if n < 3:
        raise ValidationError("power_law_fit needs at least 3 ions")
    iu, ju = np.triu_indices(n, k=1)
    vals = np.abs(j.J[iu, ju])
    if np.any(vals == 0):
        raise ZeroCoupling("J contains zero couplings; exponent undefined")
    x = np.log(np.abs(iu - ju).astype(float))
    y = np.log(vals)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return float(-slope), float(np.sqrt(np.mean(resid**2)))


@dataclass(frozen=True)
class PowerLawSolution:
    """Result of a detuning scan targeting a coupling decay exponent."""

    mu1: float
    rabi_scale: float
    alpha: float
    alpha_error: float
    detuning: float
    grid_detunings: np.ndarray = field(repr=False)
    grid_alphas: np.ndarray = field(repr=False)


def _alpha_at(modes: ModeSet, mu: float) -> float:
    tone = SDFTone(mu=mu, rabi=1.0)
    j = ising_couplings(modes, tone)
    return power_law_fit(j)[0]


def engineer_power_law(target_alpha: float, trap: TrapConfig, n_ions: int,
                       j_max_target: float, *, axis: str = "X'",
                       n_grid: int = 400,
                       detuning_lo: float = 2 * np.pi * 1e3,
                       detuning_hi: float = 2 * np.pi * 1e6,
                       tolerance: float = 0.05) -> PowerLawSolution:
    """Pick mu1 above the center-of-mass mode to hit a decay exponent.

    Scans ``n_grid`` logarithmically spaced detunings above the highest
    mode, fits alpha at each, refines by bisection on the bracketing grid
    interval, and returns the tone frequency plus the uniform Rabi scale
    that sets max|J| to ``j_max_target``.

    Raises
    ------
    TargetUnreachable
        If no grid point comes within ``tolerance`` of the target.
    """
    if not (0.05 < target_alpha < 2.0):
        raise ValidationError("target_alpha outside (0.05, 2.0)",
                              parameter="target_alpha")
    geometry = equilibrium_positions(n_ions, trap)
    modes = lamb_dicke(transverse_modes(geometry, trap, axis), trap)
    com = modes.omega_m[0]
    detunings = np.geomspace(detuning_lo, detuning_hi, n_grid)
    alphas = np.array([_alpha_at(modes, com + d) for d in detunings])
    best = int(np.argmin(np.abs(alphas - target_alpha)))
    if abs(alphas[best] - target_alpha) > tolerance:
        raise TargetUnreachable(
            f"closest achievable alpha {alphas[best]:.3f} misses target "
            f"{target_alpha:.3f} by more than {tolerance}")
    # refine on a bracketing interval when the scan crosses the target
    detuning = detunings[best]
    crossings = np.flatnonzero(np.diff(np.sign(alphas - target_alpha)) != 0)
    if crossings.size:
        k = crossings[np.argmin(np.abs(crossings - best))]
        detuning = brentq(lambda d: _alpha_at(modes, com + d) - target_alpha,
                          detunings[k], detunings[k + 1], xtol=1e-3)
    mu1 = com + detuning
    unit = ising_couplings(modes, SDFTone(mu=mu1, rabi=1.0))
    rabi_scale = float(np.sqrt(j_max_target / unit.max_abs()))
    j = ising_couplings(modes, SDFTone(mu=mu1, rabi=rabi_scale))
    alpha, _ = power_law_fit(j)
    return PowerLawSolution(mu1=float(mu1), rabi_scale=rabi_scale,
                            alpha=float(alpha),
                            alpha_error=float(abs(alpha - target_alpha)),
                            detuning=float(detuning),
                            grid_detunings=detunings, grid_alphas=alphas)


def frobenius_proximity(a: CouplingMatrix, b: CouplingMatrix) -> float:
    """Normalized trace overlap Tr(A^T B) / (||A||_F ||B||_F) in [-1, 1]."""
    if a.J.shape != b.J.shape:
        raise ValidationError("coupling matrices differ in shape")
    na = np.linalg.norm(a.J)
    nb = np.linalg.norm(b.J)
    if na == 0 or nb == 0:
        raise ZeroMatrix("Frobenius proximity undefined for a zero matrix")
    return float(np.tensordot(a.J, b.J) / (na * nb))


@dataclass(frozen=True)
class SpectrumReport:
    """Transverse mode frequencies of both principal axes.

    ``gap`` is the signed distance between the two frequency bands:
    positive when disjoint, negative when they overlap.
    """

    x_freqs: np.ndarray
    y_freqs: np.ndarray
    gap: float
    overlap: bool

    def to_dict(self) -> dict:
        return {
            "x_freqs_rad_s": self.x_freqs.tolist(),
            "y_freqs_rad_s": self.y_freqs.tolist(),
            "gap_rad_s": self.gap,
            "overlap": self.overlap,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def mode_spectrum_report(trap: TrapConfig, n_ions: int) -> SpectrumReport:
    """Compute both transverse spectra and how close their bands come."""
    geometry = equilibrium_positions(n_ions, trap)
    x = transverse_modes(geometry, trap, "X'").omega_m
    y = transverse_modes(geometry, trap, "Y'").omega_m
    gap = max(x.min() - y.max(), y.min() - x.max())
    return SpectrumReport(x_freqs=x, y_freqs=y, gap=float(gap),
                          overlap=bool(gap <= 0))
