"""Scenario execution: wires the modules together and writes
machine-readable outputs plus a reproducibility manifest.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .coupling import (
    SDFTone,
    engineer_power_law,
    frobenius_proximity,
    ising_couplings,
    matched_y_tone,
    mode_spectrum_report,
    power_law_fit,
    validity_report,
    xy_couplings,
)
from .dynamics import (
    DriveProgram,
    evolve_full,
    magnus_diagnostics,
    observables,
    product_state,
    thermal_fock_sample,
)
from .errors import ValidationError
from .floquet import FloquetSchedule, dual_sdf_baseline, duty_cycle_factor, scan_nf
from .scenario import Scenario

__all__ = ["RunManifest", "run_scenario", "write_csv"]


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path: Path, header: list[str], rows, descriptions: dict | None = None):
    """Deterministic CSV with a sidecar JSON schema descriptor."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    schema = {
        "file": path.name,
        "columns": [{"name": name,
                     "description": (descriptions or {}).get(name, "")}
                    for name in header],
    }
    path.with_suffix(path.suffix + ".schema.json").write_text(
        json.dumps(schema, indent=2) + "\n")


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


@dataclass
class RunManifest:
    """Record of one run: resolved inputs, outputs, and content hashes."""

    run: str
    version: str
    seed: int
    wall_clock_s: float
    parameters: dict
    outputs: list

    def to_dict(self) -> dict:
        return {
            "tool": "ionxy",
            "version": self.version,
            "run": self.run,
            "seed": self.seed,
            "wall_clock_s": self.wall_clock_s,
            "parameters": self.parameters,
            "outputs": self.outputs,
        }


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _trajectory_rows(traj, obs):
    labels = obs["labels"]
    header = ["t"] + [f"P_{lab}" for lab in labels] + \
        [f"n_mean_{k}" for k in range(obs["mean_phonons"].shape[1])] + ["leakage"]
    rows = []
    for i, t in enumerate(traj.times):
        rows.append([t, *obs["spin_populations"][i],
                     *obs["mean_phonons"][i], obs["leakage"][i]])
    return header, rows


def _run_modes(scen: Scenario, out: Path) -> list[Path]:
    report = mode_spectrum_report(scen.trap, scen.n_ions)
    rows = [["X'", m, w, w / (2 * np.pi)] for m, w in enumerate(report.x_freqs)]
    rows += [["Y'", m, w, w / (2 * np.pi)] for m, w in enumerate(report.y_freqs)]
    csv_path = out / "mode_spectrum.csv"
    write_csv(csv_path, ["axis", "mode", "omega_rad_s", "freq_hz"], rows)
    json_path = out / "mode_spectrum.json"
    _write_json(json_path, report.to_dict())
    return [csv_path, json_path]


def _resolved_tones(scen: Scenario):
    if len(scen.tones) == 1:
        return scen.tones[0], None
    if len(scen.tones) == 2:
        return scen.tones[0], scen.tones[1]
    raise ValidationError("couplings/diagnostics need one or two tones",
                          parameter="drive.tones")


def _run_couplings(scen: Scenario, out: Path) -> list[Path]:
    modes = scen.mode_set()
    guard = scen.resonance_guard()
    mask = scen.couplings_mode_indices
    tone_x, tone_y = _resolved_tones(scen)
    paths = []
    if tone_y is None:
        j = ising_couplings(modes, tone_x, scen.trap, mode_mask=mask,
                            resonance_guard=guard)
        path = out / "j_matrix.csv"
        path.write_text(j.to_csv())
        _write_json(out / "j_matrix.json", j.to_dict())
        paths += [path, out / "j_matrix.json"]
    else:
        jx, jy = xy_couplings(modes, tone_x, tone_y, scen.trap, mode_mask=mask,
                              resonance_guard=guard)
        for name, j in (("jx", jx), ("jy", jy)):
            path = out / f"{name}_matrix.csv"
            path.write_text(j.to_csv())
            _write_json(out / f"{name}_matrix.json", j.to_dict())
            paths += [path, out / f"{name}_matrix.json"]
        report = validity_report(jx, jy, tone_x, tone_y, modes, scen.trap)
        _write_json(out / "validity.json", report.to_dict())
        paths.append(out / "validity.json")
    return paths


def _run_engineer(scen: Scenario, out: Path) -> list[Path]:
    cfg = scen.engineer
    results = []
    paths = []
    for target in cfg["targets"]:
        sol = engineer_power_law(target, scen.trap, scen.n_ions, cfg["j_max"],
                                 axis=cfg["axis"])
        modes = scen.mode_set()
        tone_x = SDFTone(mu=sol.mu1, rabi=sol.rabi_scale)
        tone_y = matched_y_tone(tone_x, sol.mu1 + cfg["mu2_offset"], modes)
        jx, jy = xy_couplings(modes, tone_x, tone_y, scen.trap)
        prox = frobenius_proximity(jx, jy)
        alpha, resid = power_law_fit(jx)
        results.append({
            "target_alpha": target,
            "mu1_rad_s": sol.mu1,
            "detuning_rad_s": sol.detuning,
            "rabi_scale_rad_s": sol.rabi_scale,
            "alpha": alpha,
            "alpha_residual": resid,
            "proximity": prox,
            "j_max_rad_s": float(np.abs(jx.J).max()),
        })
        tag = f"{target:.3g}".replace(".", "p")
        for name, j in ((f"jx_alpha_{tag}", jx), (f"jy_alpha_{tag}", jy)):
            path = out / f"{name}.csv"
            path.write_text(j.to_csv())
            paths.append(path)
    csv_path = out / "engineer.csv"
    write_csv(csv_path,
              ["target_alpha", "mu1_rad_s", "detuning_rad_s", "rabi_scale_rad_s",
               "alpha", "alpha_residual", "proximity", "j_max_rad_s"],
              [[r[k] for k in ("target_alpha", "mu1_rad_s", "detuning_rad_s",
                               "rabi_scale_rad_s", "alpha", "alpha_residual",
                               "proximity", "j_max_rad_s")] for r in results])
    _write_json(out / "engineer.json", {"results": results})
    return paths + [csv_path, out / "engineer.json"]


def _run_evolve(scen: Scenario, out: Path, seed: int) -> list[Path]:
    modes = scen.mode_set()
    spec = scen.hilbert_spec(modes)
    program = DriveProgram.continuous(scen.tones, scen.duration,
                                      use_rwa=scen.use_rwa)
    if scen.init_nbar > 0:
        rng = np.random.default_rng(seed)
        fock = thermal_fock_sample(spec, scen.init_nbar, rng)
    else:
        fock = None
    psi0 = product_state(spec, scen.init_spins, fock)
    traj = evolve_full(psi0, program, modes, scen.duration, scen.sample_dt,
                       rtol=scen.rtol)
    obs = observables(traj)
    header, rows = _trajectory_rows(traj, obs)
    csv_path = out / "trajectory.csv"
    write_csv(csv_path, header, rows)
    _write_json(out / "trajectory.json", {
        "labels": obs["labels"],
        "t_final_s": scen.duration,
        "max_norm_drift": traj.max_norm_drift,
        "max_leakage": traj.leakage,
        "init_spins": scen.init_spins,
        "init_fock": fock,
    })
    return [csv_path, out / "trajectory.json"]


def _run_floquet(scen: Scenario, out: Path, jobs: int) -> list[Path]:
    cfg = scen.floquet
    modes = scen.mode_set()
    spec = scen.hilbert_spec(modes)
    guard = scen.resonance_guard()
    tone_x = SDFTone(mu=cfg["mu"], rabi=cfg["rabi"], spin_phase=0.0)
    tone_y = SDFTone(mu=cfg["mu"], rabi=cfg["rabi"], spin_phase=np.pi / 2.0)
    j_target = cfg["j_target"]
    if j_target is None:
        j_cw = ising_couplings(modes, tone_x, resonance_guard=guard).max_abs()
        j_target = j_cw * duty_cycle_factor(cfg["edge_fraction"])
    total = cfg["total_cycles"] * 2.0 * np.pi / j_target
    schedule = FloquetSchedule.from_nf(cfg["nf_values"][0], j_target, tone_x,
                                       tone_y, cfg["edge_fraction"])
    result = scan_nf(cfg["nf_values"], schedule, modes, spec, inits=cfg["inits"],
                     total_time=total, sample_dt=cfg["sample_dt"],
                     rtol=cfg["rtol"], jobs=jobs)
    mu2 = cfg["mu"] + cfg["baseline_mu2_offset_factor"] * j_target
    baseline = dual_sdf_baseline(j_target, modes, spec, cfg["mu"], mu2,
                                 inits=cfg["inits"], total_time=total,
                                 rtol=cfg["rtol"])
    result.baseline_navg = baseline["navg"]

    inits = list(cfg["inits"])
    header = ["nf"] + [f"navg_{i}" for i in inits] + [f"deviation_{i}" for i in inits]
    rows = []
    for k, nf in enumerate(result.nf_values):
        rows.append([nf] + [result.navg[i][k] for i in inits]
                    + [result.deviation[i][k] for i in inits])
    csv_path = out / "floquet_scan.csv"
    write_csv(csv_path, header, rows)
    paths = [csv_path]
    for (nf, init), traj in sorted(result.trajectories.items()):
        obs = observables(traj)
        h, r = _trajectory_rows(traj, obs)
        p = out / f"floquet_traj_nf{nf:g}_{init}.csv"
        write_csv(p, h, r)
        paths.append(p)
    _write_json(out / "floquet_scan.json", {
        "j_target_rad_s": j_target,
        "total_time_s": total,
        "baseline_navg": baseline["navg"],
        "baseline_mu2_rad_s": mu2,
        "nf_values": list(result.nf_values),
        "navg": {k: list(v) for k, v in result.navg.items()},
        "deviation": {k: list(v) for k, v in result.deviation.items()},
    })
    paths.append(out / "floquet_scan.json")
    return paths


def _run_diagnostics(scen: Scenario, out: Path) -> list[Path]:
    modes = scen.mode_set()
    cfg = scen.diagnostics
    program = DriveProgram.continuous(scen.tones, cfg["tau_max"],
                                      use_rwa=True)
    tau = np.linspace(0.0, cfg["tau_max"], cfg["n_points"] + 1)[1:]
    diag = magnus_diagnostics(program, modes, tau)
    n = modes.n_ions
    header = ["tau"]
    for i in range(n):
        for j in range(i + 1, n):
            header += [f"chi_x_{i+1}{j+1}", f"chi_y_{i+1}{j+1}"]
    for i in range(n):
        for j in range(n):
            if i != j:
                header.append(f"lambda_{i+1}{j+1}")
    header += [f"zeta_{i+1}" for i in range(n)] + [f"phi_{i+1}" for i in range(n)]
    rows = []
    for k, t in enumerate(diag.tau):
        row = [t]
        for i in range(n):
            for j in range(i + 1, n):
                row += [diag.chi_x[k, i, j], diag.chi_y[k, i, j]]
        for i in range(n):
            for j in range(n):
                if i != j:
                    row.append(diag.lambda_abs[k, i, j])
        row += list(diag.zeta_abs[k]) + list(diag.phi_abs[k])
        rows.append(row)
    csv_path = out / "magnus_diagnostics.csv"
    write_csv(csv_path, header, rows)
    slopes = diag.secular_slopes()
    _write_json(out / "magnus_diagnostics.json", {
        "lambda_max": diag.lambda_max,
        "lambda_bound": diag.lambda_bound,
        "bound_satisfied": diag.bound_satisfied,
        "chi_x_slope_rad_s": slopes["chi_x"].tolist(),
        "chi_y_slope_rad_s": slopes["chi_y"].tolist(),
        "lambda_slope_rad_s": slopes["lambda"].tolist(),
        "zeta_slope_rad_s": slopes["zeta"].tolist(),
        "jx_rad_s": diag.jx.J.tolist(),
        "jy_rad_s": diag.jy.J.tolist(),
    })
    return [csv_path, out / "magnus_diagnostics.json"]


def run_scenario(scen: Scenario, out_dir, *, seed: int | None = None,
                 jobs: int = 1) -> RunManifest:
    """Execute the scenario's pipeline and write outputs plus manifest.

    Identical scenario and seed produce byte-identical CSV files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = scen.seed if seed is None else int(seed)
    started = time.perf_counter()
    if scen.run == "modes":
        paths = _run_modes(scen, out)
    elif scen.run == "couplings":
        paths = _run_couplings(scen, out)
    elif scen.run == "engineer":
        paths = _run_engineer(scen, out)
    elif scen.run == "evolve":
        paths = _run_evolve(scen, out, seed)
    elif scen.run == "floquet-scan":
        paths = _run_floquet(scen, out, jobs)
    elif scen.run == "diagnostics":
        paths = _run_diagnostics(scen, out)
    else:  # unreachable after validation
        raise ValidationError(f"unknown run kind {scen.run!r}", parameter="run")
    elapsed = time.perf_counter() - started
    outputs = [{"path": p.name, "sha256": _sha256(p)} for p in sorted(set(paths))]
    # schema sidecars ride along
    for p in sorted(out.glob("*.schema.json")):
        outputs.append({"path": p.name, "sha256": _sha256(p)})
    manifest = RunManifest(run=scen.run, version=__version__, seed=seed,
                           wall_clock_s=elapsed, parameters=scen.resolved,
                           outputs=outputs)
    _write_json(out / "manifest.json", manifest.to_dict())
    return manifest
