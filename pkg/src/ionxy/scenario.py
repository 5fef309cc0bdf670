"""Scenario files: TOML parsing, unit resolution, and validation.

Every physical quantity is a ``{ value = ..., unit = "..." }`` table with
an explicit unit tag; angular frequencies accept ``"rad/s"`` or
``"2pi*Hz"`` (value in Hz, multiplied by 2 pi).  Bare numbers are
rejected for dimensioned fields so a missing factor of 2 pi cannot slip
through silently.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .chain import ModeSet, TrapConfig, equilibrium_positions, lamb_dicke, transverse_modes
from .coupling import DEFAULT_RESONANCE_GUARD, SDFTone
from .dynamics import HilbertSpec, spin_label_index
from .errors import ParseError, UnknownKey, ValidationError

__all__ = ["Scenario", "parse_scenario", "RUN_KINDS"]

RUN_KINDS = ("modes", "couplings", "engineer", "evolve", "floquet-scan", "diagnostics")

_ATOMIC_MASS = 1.66053906660e-27

_SCHEMA = {
    "run": None,
    "n_ions": None,
    "seed": None,
    "trap": {
        "omega_x": None, "omega_y": None, "omega_z": None,
        "mass": None, "delta_k": None,
    },
    "modes": {"axis": None, "omega_m": None, "b": None, "eta": None},
    "hilbert": {"axis": None, "mode_indices": None, "n_max": None, "dim_cap": None},
    "drive": {
        "tones": {"mu": None, "rabi": None, "spin_phase": None, "motional_phase": None},
        "use_rwa": None, "duration": None, "sample_dt": None,
        "init_spins": None, "init_nbar": None, "rtol": None,
    },
    "engineer": {"target_alpha": None, "j_max": None, "mu2_offset": None, "axis": None},
    "floquet": {
        "nf_values": None, "mu": None, "rabi": None, "edge_fraction": None,
        "inits": None, "j_target": None, "baseline_mu2_offset_factor": None,
        "total_cycles": None, "sample_dt": None, "rtol": None,
    },
    "diagnostics": {"tau_max": None, "n_points": None},
    "couplings": {"axis": None, "mode_indices": None},
    "output": {"dir": None, "formats": None},
}


def _check_keys(data, schema, path=""):
    if not isinstance(data, dict):
        return
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise UnknownKey(f"unknown key {where!r}", parameter=where)
        sub = schema[key]
        if isinstance(sub, dict):
            if isinstance(value, list):
                for item in value:
                    _check_keys(item, sub, where)
            else:
                _check_keys(value, sub, where)


def _quantity(node, kinds, path):
    """Resolve a {value, unit} table to base units (rad/s, s, kg, 1/m)."""
    if not isinstance(node, dict) or set(node) != {"value", "unit"}:
        raise ValidationError(
            f"{path} must be a table {{ value = ..., unit = ... }}", parameter=path)
    value = node["value"]
    unit = node["unit"]
    if not isinstance(value, (int, float)):
        raise ValidationError(f"{path}.value must be a number", parameter=path)
    conversions = {
        "angular": {"rad/s": 1.0, "2pi*Hz": 2.0 * np.pi},
        "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6},
        "mass": {"kg": 1.0, "u": _ATOMIC_MASS},
        "wavenumber": {"1/m": 1.0, "2pi/m": 2.0 * np.pi},
    }
    for kind in np.atleast_1d(kinds):
        table = conversions[kind]
        if unit in table:
            return float(value) * table[unit]
    allowed = sorted({u for k in np.atleast_1d(kinds) for u in conversions[k]})
    raise ValidationError(
        f"{path}.unit must be one of {allowed}, got {unit!r}", parameter=path)


def _get(data, key, path, required=True, default=None):
    if key not in data:
        if required:
            raise ValidationError(f"missing required key {path}.{key}".lstrip("."),
                                  parameter=f"{path}.{key}".lstrip("."))
        return default
    return data[key]


@dataclass
class Scenario:
    """Fully resolved scenario: all quantities in rad/s, s, kg, 1/m."""

    run: str
    n_ions: int
    seed: int
    trap: TrapConfig | None
    literal_modes: ModeSet | None
    hilbert_axis: str
    hilbert_mode_indices: tuple[int, ...] | None
    n_max: int
    dim_cap: int
    tones: list[SDFTone] = field(default_factory=list)
    use_rwa: bool = True
    duration: float | None = None
    sample_dt: float | None = None
    init_spins: str = "dd"
    init_nbar: float = 0.0
    rtol: float = 1e-8
    engineer: dict | None = None
    floquet: dict | None = None
    diagnostics: dict | None = None
    couplings_axis: str = "X'"
    couplings_mode_indices: tuple[int, ...] | None = None
    output_dir: str | None = None
    output_formats: tuple[str, ...] = ("csv", "json")
    resolved: dict = field(default_factory=dict, repr=False)

    def mode_set(self) -> ModeSet:
        """Modes the scenario operates on (literal, or derived from the trap)."""
        if self.literal_modes is not None:
            return self.literal_modes
        geometry = equilibrium_positions(self.n_ions, self.trap)
        modes = transverse_modes(geometry, self.trap, self.hilbert_axis)
        if self.trap.delta_k > 0:
            modes = lamb_dicke(modes, self.trap)
        return modes

    def hilbert_spec(self, modes: ModeSet) -> HilbertSpec:
        indices = self.hilbert_mode_indices
        if indices is None:
            indices = tuple(range(modes.n_modes))
        return HilbertSpec(n_ions=self.n_ions, mode_indices=indices,
                           n_max=self.n_max, dim_cap=self.dim_cap)

    def resonance_guard(self) -> float:
        # literal (often dimensionless) mode sets get a relative guard
        if self.literal_modes is not None:
            return 1e-9 * float(np.max(self.literal_modes.omega_m))
        return DEFAULT_RESONANCE_GUARD


def _parse_tone(node, n_ions, path) -> SDFTone:
    mu = _quantity(_get(node, "mu", path), "angular", f"{path}.mu")
    rabi_node = _get(node, "rabi", path)
    if isinstance(rabi_node, list):
        rabi = np.array([_quantity(r, "angular", f"{path}.rabi[{i}]")
                         for i, r in enumerate(rabi_node)])
    else:
        rabi = _quantity(rabi_node, "angular", f"{path}.rabi")
    spin_phase = float(_get(node, "spin_phase", path, required=False, default=0.0))
    psi = _get(node, "motional_phase", path, required=False, default=0.0)
    psi = np.asarray(psi, float)
    tone = SDFTone(mu=mu, rabi=rabi, spin_phase=spin_phase, motional_phase=psi)
    tone.rabi_for(n_ions)
    tone.phase_for(n_ions)
    return tone


def parse_scenario(path) -> Scenario:
    """Load, resolve units, and validate one scenario file.

    Raises
    ------
    ParseError
        On TOML syntax errors (with position information).
    UnknownKey, ValidationError
        On schema or invariant violations.
    """
    raw_path = Path(path)
    if not raw_path.exists():
        raise ParseError(f"scenario file not found: {raw_path}")
    try:
        with open(raw_path, "rb") as handle:
            data = tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{raw_path}: {exc}") from exc

    _check_keys(data, _SCHEMA)

    run = _get(data, "run", "")
    if run not in RUN_KINDS:
        raise ValidationError(f"run must be one of {RUN_KINDS}, got {run!r}",
                              parameter="run")
    n_ions = int(_get(data, "n_ions", ""))
    if n_ions < 1:
        raise ValidationError("n_ions must be >= 1", parameter="n_ions")
    seed = int(_get(data, "seed", "", required=False, default=0))

    has_trap = "trap" in data
    has_modes = "modes" in data
    if has_trap == has_modes:
        raise ValidationError("exactly one of [trap] or [modes] is required",
                              parameter="trap")

    trap = None
    literal = None
    if has_trap:
        t = data["trap"]
        trap = TrapConfig(
            omega_x=_quantity(_get(t, "omega_x", "trap"), "angular", "trap.omega_x"),
            omega_y=_quantity(_get(t, "omega_y", "trap"), "angular", "trap.omega_y"),
            omega_z=_quantity(_get(t, "omega_z", "trap"), "angular", "trap.omega_z"),
            mass=_quantity(_get(t, "mass", "trap"), "mass", "trap.mass"),
            delta_k=_quantity(_get(t, "delta_k", "trap", required=False,
                                   default={"value": 0.0, "unit": "1/m"}),
                              "wavenumber", "trap.delta_k"),
        )
    else:
        m = data["modes"]
        omega_m = [_quantity(w, "angular", f"modes.omega_m[{i}]")
                   for i, w in enumerate(_get(m, "omega_m", "modes"))]
        b = np.asarray(_get(m, "b", "modes"), float)
        eta = np.asarray(_get(m, "eta", "modes"), float)
        if b.shape != (n_ions, len(omega_m)) or eta.shape != b.shape:
            raise ValidationError(
                "modes.b and modes.eta must be n_ions x n_modes", parameter="modes.b")
        literal = ModeSet.from_literal(omega_m, b, eta,
                                       axis=_get(m, "axis", "modes", required=False,
                                                 default="X'"))

    h = data.get("hilbert", {})
    hilbert_axis = _get(h, "axis", "hilbert", required=False, default="X'")
    mode_indices = _get(h, "mode_indices", "hilbert", required=False)
    if mode_indices is not None:
        mode_indices = tuple(int(i) for i in mode_indices)
    n_max = int(_get(h, "n_max", "hilbert", required=False, default=4))
    dim_cap = int(_get(h, "dim_cap", "hilbert", required=False, default=2**16))

    scen = Scenario(run=run, n_ions=n_ions, seed=seed, trap=trap,
                    literal_modes=literal, hilbert_axis=hilbert_axis,
                    hilbert_mode_indices=mode_indices, n_max=n_max,
                    dim_cap=dim_cap, resolved=data)

    if "drive" in data:
        d = data["drive"]
        tone_nodes = _get(d, "tones", "drive", required=False, default=[])
        scen.tones = [_parse_tone(t, n_ions, f"drive.tones[{i}]")
                      for i, t in enumerate(tone_nodes)]
        scen.use_rwa = bool(_get(d, "use_rwa", "drive", required=False, default=True))
        if "duration" in d:
            scen.duration = _quantity(d["duration"], "time", "drive.duration")
        if "sample_dt" in d:
            scen.sample_dt = _quantity(d["sample_dt"], "time", "drive.sample_dt")
        scen.init_spins = _get(d, "init_spins", "drive", required=False, default="d" * n_ions)
        if len(scen.init_spins) != n_ions:
            raise ValidationError("drive.init_spins length must equal n_ions",
                                  parameter="drive.init_spins")
        spin_label_index(scen.init_spins)
        scen.init_nbar = float(_get(d, "init_nbar", "drive", required=False, default=0.0))
        scen.rtol = float(_get(d, "rtol", "drive", required=False, default=1e-8))

    if "engineer" in data:
        e = data["engineer"]
        targets = _get(e, "target_alpha", "engineer")
        targets = [float(a) for a in np.atleast_1d(targets)]
        scen.engineer = {
            "targets": targets,
            "j_max": _quantity(_get(e, "j_max", "engineer"), "angular", "engineer.j_max"),
            "mu2_offset": _quantity(_get(e, "mu2_offset", "engineer"), "angular",
                                    "engineer.mu2_offset"),
            "axis": _get(e, "axis", "engineer", required=False, default="X'"),
        }

    if "floquet" in data:
        f = data["floquet"]
        scen.floquet = {
            "nf_values": [float(v) for v in _get(f, "nf_values", "floquet")],
            "mu": _quantity(_get(f, "mu", "floquet"), "angular", "floquet.mu"),
            "rabi": _quantity(_get(f, "rabi", "floquet"), "angular", "floquet.rabi"),
            "edge_fraction": float(_get(f, "edge_fraction", "floquet",
                                        required=False, default=0.4)),
            "inits": tuple(_get(f, "inits", "floquet", required=False,
                                default=["dd", "du"])),
            "j_target": (_quantity(f["j_target"], "angular", "floquet.j_target")
                         if "j_target" in f else None),
            "baseline_mu2_offset_factor": float(
                _get(f, "baseline_mu2_offset_factor", "floquet",
                     required=False, default=30.0)),
            "total_cycles": float(_get(f, "total_cycles", "floquet",
                                       required=False, default=1.0)),
            "sample_dt": (_quantity(f["sample_dt"], "time", "floquet.sample_dt")
                          if "sample_dt" in f else None),
            "rtol": float(_get(f, "rtol", "floquet", required=False, default=1e-8)),
        }
        for init in scen.floquet["inits"]:
            spin_label_index(init)

    if "diagnostics" in data:
        g = data["diagnostics"]
        scen.diagnostics = {
            "tau_max": _quantity(_get(g, "tau_max", "diagnostics"), "time",
                                 "diagnostics.tau_max"),
            "n_points": int(_get(g, "n_points", "diagnostics", required=False,
                                 default=2048)),
        }

    if "couplings" in data:
        c = data["couplings"]
        scen.couplings_axis = _get(c, "axis", "couplings", required=False, default="X'")
        idx = _get(c, "mode_indices", "couplings", required=False)
        if idx is not None:
            scen.couplings_mode_indices = tuple(int(i) for i in idx)

    if "output" in data:
        o = data["output"]
        scen.output_dir = _get(o, "dir", "output", required=False)
        formats = _get(o, "formats", "output", required=False, default=["csv", "json"])
        for fmt in formats:
            if fmt not in ("csv", "json"):
                raise ValidationError(f"unknown output format {fmt!r}",
                                      parameter="output.formats")
        scen.output_formats = tuple(formats)

    _validate_run_requirements(scen)
    return scen


def _validate_run_requirements(scen: Scenario):
    need = {
        "modes": scen.trap is not None,
        "couplings": bool(scen.tones),
        "engineer": scen.engineer is not None and scen.trap is not None,
        "evolve": bool(scen.tones) and scen.duration is not None
                  and scen.sample_dt is not None,
        "floquet-scan": scen.floquet is not None,
        "diagnostics": len(scen.tones) == 2 and scen.diagnostics is not None,
    }
    if not need[scen.run]:
        raise ValidationError(
            f"run = {scen.run!r} is missing its required sections",
            parameter="run")
    # resonance pre-check: every tone must clear the guard
    if scen.tones and (scen.trap is not None or scen.literal_modes is not None):
        try:
            modes = scen.mode_set()
        except Exception:
            return  # chain-level problems surface with full context at run time
        guard = scen.resonance_guard()
        omega = modes.omega_m if scen.hilbert_mode_indices is None else \
            modes.omega_m[list(scen.hilbert_mode_indices)]
        for i, tone in enumerate(scen.tones):
            gap = float(np.min(np.abs(tone.mu - omega)))
            if gap < guard:
                raise ValidationError(
                    f"drive.tones[{i}].mu is within {gap:.3e} rad/s of a motional "
                    f"mode (ResonantTone guard {guard:.3e})",
                    parameter=f"drive.tones[{i}].mu")
