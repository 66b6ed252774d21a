"""Run orchestration: simulate, equilibria, diagnose, sweep and spectrum.

Every command writes into its output directory and finishes with a
``manifest.json`` that lists each file with its SHA-256 digest.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .checkpoint import checkpoint_load, checkpoint_save
from .config import RunConfig, apply_overrides, build_config
from .damping import coercivity_probe, lipschitz_probe, make_damping
from .diagnostics import (
    NotSettled,
    attractor_sample,
    completeness_defect,
    decay_rate_fit,
    determining_modes_experiment,
    difference_bound_fit,
    find_equilibria,
    hyperbolicity_margin,
    quasi_stability_fit,
    regularity_profile,
)
from .forces import potential_bound_probe, random_field
from .integrator import Evolver, IntegrationError, StatePair, Trajectory
from .spectral import ModalField

log = logging.getLogger(__name__)

LYAPUNOV_TOL = 1e-9


# ---------------------------------------------------------------------------
# Small I/O helpers
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, ModalField):
        return obj.coeffs.tolist()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path: Path, header: list[str], rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
    path.write_text(buf.getvalue())
    return path


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, cfg: RunConfig | None, command: str, checks: dict, wall_time: float,
                   extra: dict | None = None) -> Path:
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "command": command,
        "config": cfg.raw if cfg is not None else None,
        "config_source": cfg.source if cfg is not None else None,
        "versions": {"dampedplate": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "wall_time_seconds": wall_time,
        "files": {str(p.relative_to(out)): sha256_file(p) for p in files},
        "checks": checks,
    }
    manifest.update(extra or {})
    return write_json(out / "manifest.json", manifest)


def verify_manifest(out: str | os.PathLike) -> dict[str, bool]:
    """Recompute every listed digest; maps file name to match status."""
    out = Path(out)
    manifest = json.loads((out / "manifest.json").read_text())
    return {name: (out / name).is_file() and sha256_file(out / name) == digest
            for name, digest in manifest["files"].items()}


def _leading_coefficients(cfg: RunConfig, A, arr: np.ndarray) -> np.ndarray:
    k = min(cfg.leading_modes, A.domain.size)
    return arr.reshape(len(arr), -1)[:, A.order[:k]]


def _mode_labels(A, k):
    return ["c_" + "_".join(str(i) for i in A.multi_index(r)) for r in range(min(k, A.domain.size))]


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def trajectory_rows(cfg: RunConfig, A, traj: Trajectory):
    led = traj.ledger
    scale = 1.0 + abs(float(led.energy[0]))
    lam = A.eigenvalues
    axes = tuple(range(1, traj.u.ndim))
    norm_u1 = np.sqrt(np.sum(lam[None] * traj.u**2, axis=axes))
    norm_v = np.sqrt(np.sum(traj.v**2, axis=axes))
    coeffs = _leading_coefficients(cfg, A, traj.u)
    header = ["t", "energy", "kinetic", "elastic", "potential", "dissipation", "residual", "residual_abs",
              "theta_integral", "norm_u1", "norm_v"] + _mode_labels(A, cfg.leading_modes)
    rows = []
    for i in range(len(traj)):
        rows.append([traj.times[i], led.energy[i], led.kinetic[i], led.elastic[i], led.potential[i],
                     led.dissipation[i], led.residual[i] / scale, led.residual[i], led.theta_integral[i],
                     norm_u1[i], norm_v[i], *coeffs[i]])
    return header, rows


def simulation_checks(cfg: RunConfig, traj: Trajectory) -> dict:
    led = traj.ledger
    scale = 1.0 + abs(float(led.energy[0]))
    max_res = float(np.max(np.abs(led.residual))) / scale
    checks = {
        "energy_identity": {"value": max_res, "limit": cfg.integrator.residual_budget,
                            "pass": max_res <= cfg.integrator.residual_budget},
        "finite_state": {"pass": bool(np.all(np.isfinite(traj.u)) and np.all(np.isfinite(traj.v)))},
    }
    if not cfg.damping.test_mode:
        inc = float(traj.meta.get("max_energy_increase", -np.inf))
        checks["lyapunov_monotone"] = {"value": inc, "limit": LYAPUNOV_TOL, "pass": inc <= LYAPUNOV_TOL}
        dis = np.diff(led.dissipation)
        checks["dissipation_nondecreasing"] = {"pass": bool(np.all(dis >= -1e-14 * (1 + abs(led.dissipation).max())))}
    return checks


def run_simulate(cfg: RunConfig, out: str | os.PathLike, resume: str | os.PathLike | None = None,
                 stop_at: float | None = None) -> dict:
    """Evolve the configured initial state; writes CSV, checkpoint, summary and manifest.

    With ``stop_at`` the run halts at that sample time and leaves a
    checkpoint that ``resume`` continues from.
    """
    t_wall = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    problem = cfg.problem()
    ev = Evolver(problem.system())
    if resume is not None:
        rs = checkpoint_load(resume).state
    else:
        rs = ev.start(cfg.initial_state(problem), cfg.T, cfg.stride)
    meta = {"config": cfg.name, "seed": cfg.seed, "deterministic": cfg.deterministic}
    ckpt = out / "checkpoint.bin"
    targets = []
    if cfg.checkpoint_every > 0:
        k = 1
        while rs.t0 + k * cfg.checkpoint_every < rs.horizon:
            if rs.t0 + k * cfg.checkpoint_every > rs.t:
                targets.append(rs.t0 + k * cfg.checkpoint_every)
            k += 1
    if stop_at is not None:
        targets = [x for x in targets if x < stop_at] + [stop_at]
    try:
        for target in targets:
            ev.advance(rs, target)
            checkpoint_save(ckpt, rs, meta)
        if stop_at is None:
            ev.advance(rs)
    except IntegrationError as exc:
        checkpoint_save(out / "failure_checkpoint.bin", rs, meta)
        write_json(out / "failure_dump.json", exc.dump)
        raise
    checkpoint_save(ckpt, rs, meta)
    traj = ev.trajectory(rs, meta)
    header, rows = trajectory_rows(cfg, problem.A, traj)
    write_csv(out / "trajectory.csv", header, rows)
    checks = simulation_checks(cfg, traj)
    summary = {
        "t_final": float(rs.t),
        "complete": bool(rs.done),
        "samples": len(traj),
        "steps": rs.steps,
        "rejections": rs.rejections,
        "energy_initial": float(traj.ledger.energy[0]),
        "energy_final": float(traj.ledger.energy[-1]),
        "max_residual_relative": checks["energy_identity"]["value"],
        "theta_integral": float(traj.ledger.theta_integral[-1]),
        "max_energy_increase": float(rs.max_increase),
        "dt_range": [traj.meta["dt_min_used"], traj.meta["dt_max_used"]],
    }
    write_json(out / "summary.json", summary)
    write_manifest(out, cfg, "simulate", checks, time.perf_counter() - t_wall)
    return {"summary": summary, "checks": checks, "trajectory": traj}


# ---------------------------------------------------------------------------
# equilibria
# ---------------------------------------------------------------------------


def run_equilibria(cfg: RunConfig, out: str | os.PathLike) -> dict:
    t_wall = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    problem = cfg.problem()
    A = problem.A
    d = cfg.diagnostics
    eqs = find_equilibria(A, cfg.model, tol=d.equilibrium_tol, n_lin=d.n_lin)
    k = cfg.leading_modes
    header = ["index", "energy", "residual", "margin", "margin_normalized", "min_eigenvalue", "morse_index",
              "iterations"] + _mode_labels(A, k)
    rows = []
    for i, e in enumerate(eqs):
        rep = hyperbolicity_margin(A, cfg.model, e.phi, d.n_lin)
        coeffs = e.phi.coeffs.ravel()[A.order[:k]]
        rows.append([i, e.energy, e.residual, rep.margin, rep.normalized, rep.min_eigenvalue, rep.morse_index,
                     e.iterations, *coeffs])
    write_csv(out / "equilibria.csv", header, rows)
    checks = {"residuals_within_tol": {"pass": all(e.residual <= d.equilibrium_tol for e in eqs)}}
    write_manifest(out, cfg, "equilibria", checks, time.perf_counter() - t_wall, {"count": len(eqs)})
    return {"equilibria": eqs, "count": len(eqs)}


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------


def _perturbed_pairs(cfg, problem, base: StatePair, n: int):
    rng = np.random.default_rng(cfg.seed + 7919)
    scale = cfg.diagnostics.perturbation * max(problem.h_norm(base.u.coeffs, base.v.coeffs), 1.0)
    out = []
    for _ in range(n):
        du = random_field(problem.A, rng, scale / np.sqrt(2), s=1.0, n_modes=8)
        dv = random_field(problem.A, rng, scale / np.sqrt(2), s=0.0, n_modes=8)
        out.append((base, StatePair(base.u + du, base.v + dv, base.t)))
    return out


def diagnose(cfg: RunConfig, select=None) -> dict:
    """Run the selected diagnostics and return a report per name."""
    select = tuple(select or cfg.diagnostics.select)
    d = cfg.diagnostics
    problem = cfg.problem()
    A = problem.A
    reports: dict[str, dict] = {}
    eqs = None
    traj = None
    pairs = None

    def equilibria():
        nonlocal eqs
        if eqs is None:
            eqs = find_equilibria(A, cfg.model, tol=d.equilibrium_tol, n_lin=d.n_lin)
        return eqs

    def trajectory():
        nonlocal traj
        if traj is None:
            traj = problem.evolve(cfg.initial_state(problem), cfg.T, cfg.stride)
        return traj

    def difference_pairs():
        nonlocal pairs
        if pairs is None:
            base = cfg.initial_state(problem)
            pairs = [problem.difference_evolve(a, b, d.difference_T, cfg.stride)
                     for a, b in _perturbed_pairs(cfg, problem, base, d.pairs)]
        return pairs

    transient = d.transient if d.transient is not None else 0.2 * cfg.T
    for name in select:
        if name == "equilibria":
            reports[name] = {"count": len(equilibria()), "equilibria": [
                {"energy": e.energy, "residual": e.residual, "margin": e.margin, "min_eigenvalue": e.min_eigenvalue,
                 "morse_index": e.morse_index, "leading": e.phi.coeffs.ravel()[A.order[:cfg.leading_modes]]}
                for e in equilibria()]}
        elif name == "margin":
            reports[name] = {"margins": [dataclasses.asdict(hyperbolicity_margin(A, cfg.model, e.phi, d.n_lin))
                                         for e in equilibria()], "n_lin": min(d.n_lin, A.domain.size)}
        elif name == "decay":
            tr = trajectory()
            try:
                fit = decay_rate_fit(tr, equilibria(), A)
            except NotSettled as exc:
                reports[name] = {"settled": False, "message": str(exc), "distance": exc.distance,
                                 "threshold": exc.threshold}
                continue
            rep = hyperbolicity_margin(A, cfg.model, fit.equilibrium, d.n_lin)
            reports[name] = {"settled": True, "gamma": fit.gamma, "C": fit.C, "r_squared": fit.r_squared,
                             "window": fit.window, "equilibrium_index": fit.equilibrium_index,
                             "final_distance": fit.final_distance, "threshold": fit.threshold,
                             "margin_at_equilibrium": rep.margin, "min_eigenvalue_at_equilibrium": rep.min_eigenvalue,
                             "leading": fit.equilibrium.coeffs.ravel()[A.order[:cfg.leading_modes]]}
        elif name == "regularity":
            prof = regularity_profile(trajectory(), problem, transient)
            post = prof.post
            reports[name] = {"transient": transient, "bounded": prof.bounded(), "decayed": prof.decayed(),
                             "post_transient_max": {k: float(getattr(prof, k)[post].max()) for k in prof.SERIES},
                             "final": {k: float(getattr(prof, k)[-1]) for k in prof.SERIES}}
        elif name in ("quasi_stability", "difference_bound"):
            if name == "quasi_stability":
                fit = quasi_stability_fit(difference_pairs(), d.gammas)
                coarse = quasi_stability_fit(difference_pairs(), d.gammas, every=2)
                reports[name] = {"gammas": fit.gammas, "C": fit.C, "C_subsampled": coarse.C,
                                 "relative_change": np.abs(coarse.C - fit.C) / np.maximum(fit.C, 1e-300),
                                 "pairs": len(pairs)}
            else:
                g = difference_bound_fit(difference_pairs())
                reports[name] = dataclasses.asdict(g)
        elif name == "determining_modes":
            rep = determining_modes_experiment(problem, (cfg.seed, cfg.seed + 1), cfg.T, cfg.stride,
                                               d.determining_modes, cfg.initial.radius)
            reports[name] = {"table": rep.table, "threshold": rep.threshold,
                             "full_initial": float(rep.full_difference[0]),
                             "full_final": float(rep.full_difference[-1])}
        elif name == "attractor":
            horizon = d.attractor_horizon or cfg.T
            trans = d.attractor_transient if d.attractor_transient is not None else 0.5 * horizon
            s = attractor_sample(problem, d.attractor_seeds, trans, horizon, d.attractor_stride, d.projection_modes,
                                 cfg.initial.radius)
            est = s.estimate
            reports[name] = {"dimension": est.dimension, "degenerate": est.degenerate,
                             "scaling_range": est.scaling_range, "slope_spread": est.slope_spread,
                             "points": len(s.points), "projection_modes": s.M, "transient": s.transient,
                             "regularity_max": s.regularity}
        elif name == "completeness":
            N = d.completeness_N
            reports[name] = {"N": N, "defect": completeness_defect(A, N)}
        elif name == "probes":
            base = cfg.initial_state(problem)
            rho = max(problem.h_norm(base.u.coeffs, base.v.coeffs), 1.0)
            dmp = make_damping(cfg.damping, A)
            rng = np.random.default_rng(cfg.seed)
            worst = np.inf
            for _ in range(d.probe_samples):
                u = random_field(A, rng, rho * rng.uniform(0.1, 1.0)).coeffs
                v = random_field(A, rng, rho * rng.uniform(0.1, 1.0), s=0.0).coeffs
                worst = min(worst, dmp.rate(u, v))
            reports[name] = {
                "rho": rho,
                "min_dissipation_rate": worst,
                "coercivity": dataclasses.asdict(coercivity_probe(cfg.damping, A, rho, d.probe_samples, cfg.seed)),
                "lipschitz": dataclasses.asdict(lipschitz_probe(cfg.damping, A, rho, d.probe_samples, cfg.seed)),
                "potential_bound": dataclasses.asdict(potential_bound_probe(cfg.model, cfg.domain, 10, seed=cfg.seed)),
            }
    return reports


def run_diagnose(cfg: RunConfig, out: str | os.PathLike, select=None) -> dict:
    t_wall = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    reports = diagnose(cfg, select)
    for name, rep in reports.items():
        write_json(out / f"{name}.json", rep)
    write_manifest(out, cfg, "diagnose", {}, time.perf_counter() - t_wall, {"diagnostics": sorted(reports)})
    return reports


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _sweep_point(doc: dict, parameter: str, value, out: str, source: str | None) -> dict:
    doc = apply_overrides(doc, {parameter: value})
    doc.pop("sweep", None)
    cfg = build_config(doc, source)
    eq = run_equilibria(cfg, Path(out) / "equilibria")
    sim = run_simulate(cfg, Path(out) / "simulate")
    return {"parameter": parameter, "value": value, "equilibria": eq["count"],
            "energy_final": sim["summary"]["energy_final"],
            "max_residual_relative": sim["summary"]["max_residual_relative"],
            "pass": all(c["pass"] for c in sim["checks"].values())}


def run_sweep(cfg: RunConfig, out: str | os.PathLike, workers: int | None = None) -> dict:
    """One subdirectory per parameter value, points evaluated in parallel processes."""
    if cfg.sweep is None:
        from .config import ConfigError

        raise ConfigError("sweep", "config has no [sweep] table")
    t_wall = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    sw = cfg.sweep
    workers = workers or sw.workers or os.cpu_count() or 1
    dirs = [str(out / f"point_{i:03d}") for i in range(len(sw.values))]
    args = [(cfg.raw, sw.parameter, v, d, cfg.source) for v, d in zip(sw.values, dirs)]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(args))) as pool:
            results = list(pool.map(_sweep_point, *zip(*args)))
    else:
        results = [_sweep_point(*a) for a in args]
    counts = [r["equilibria"] for r in results]
    changes = [i for i in range(1, len(counts)) if counts[i] != counts[i - 1]]
    header = ["index", "parameter", "value", "equilibria", "count_change", "energy_final", "max_residual_relative",
              "pass"]
    rows = [[i, r["parameter"], float(r["value"]), r["equilibria"], int(i in changes), r["energy_final"],
             r["max_residual_relative"], int(r["pass"])] for i, r in enumerate(results)]
    write_csv(out / "aggregate.csv", header, rows)
    write_manifest(out, cfg, "sweep", {"points_pass": {"pass": all(r["pass"] for r in results)}},
                   time.perf_counter() - t_wall, {"count_changes": changes})
    return {"points": results, "count_changes": changes}


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------


def spectrum_table(cfg: RunConfig, count: int | None = None) -> list[list]:
    problem = cfg.problem()
    A = problem.A
    count = min(count or A.domain.size, A.domain.size)
    lam = A.sorted_eigenvalues
    mu = A.laplace.ravel()[A.order]
    return [[r + 1, "(" + ",".join(str(i) for i in A.multi_index(r)) + ")", float(lam[r]), float(mu[r])]
            for r in range(count)]
