"""Single runs, convergence sweeps and benchmark presets with their file outputs."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .config import RunConfig, preset
from .errors import ConfigurationError
from .io import write_csv, write_json, write_vtk
from .mesh import MeshDescriptor, build_mesh
from .postprocess import (accumulate_time_norms, diagonal_profile, difference_norms, error_norms,
                          eoc_from_differences, fcr_project, midline_profile, monotone_segments,
                          pairwise_rates, profile_l1_distance)
from .problems import ProblemDescriptor, ProblemError, get_problem
from .semidiscrete import EGState
from .timestepping import RunResult, TimeLoopConfig, run_transient

log = logging.getLogger(__name__)

COUNTERS = ("global_violations", "local_violations", "entropy_violations", "cfl_violations")


@dataclass
class SingleRun:
    """In-memory outcome of one run; ``report`` is the JSON-ready summary."""

    problem: ProblemDescriptor
    mesh: MeshDescriptor
    loop: TimeLoopConfig
    result: RunResult
    report: dict
    out_dir: Optional[Path] = None
    profiles: dict = field(default_factory=dict)

    @property
    def state(self) -> EGState:
        return self.result.state


def _setup(cfg: RunConfig, scheme: str, nx: int, ny: int):
    problem = get_problem(cfg.problem)
    mesh, _ = build_mesh(problem.domain, nx, ny)
    loop = TimeLoopConfig.from_dt(cfg.t_final, cfg.time_step(nx, ny), mode=scheme, cfl_policy=cfg.cfl_policy)
    return problem, mesh, loop


def _safe_errors(problem, mesh, state) -> Optional[dict]:
    try:
        return error_norms(problem, mesh, state)
    except ProblemError:
        return None


def _snapshot_steps(n_steps: int, every: int) -> set:
    steps = {0, n_steps}
    if every > 0:
        steps.update(range(0, n_steps + 1, every))
    return steps


def run_directory(cfg: RunConfig, scheme: str, nx: int, ny: int) -> Path:
    return Path(cfg.out) / f"{cfg.problem}-{scheme}-{nx}x{ny}"


def profile_table(kind: str, mesh: MeshDescriptor, u_fcr, u_cg) -> list:
    fn = midline_profile if kind == "midline" else diagonal_profile
    s, xs, ys, vf = fn(mesh, u_fcr)
    vc = fn(mesh, u_cg)[3]
    return [{"s": a, "x": b, "y": c, "u_fcr": d, "u_cg": e} for a, b, c, d, e in zip(s, xs, ys, vf, vc)]


def run_single(cfg: RunConfig, scheme: str | None = None, nx: int | None = None, ny: int | None = None,
               write: bool = True, check: bool = True) -> SingleRun:
    """One transient run; writes VTK snapshots, diagnostics CSV, report JSON and profiles."""
    scheme = scheme or cfg.scheme
    if nx is None:
        nx, ny = cfg.mesh_size()
    problem, mesh, loop = _setup(cfg, scheme, nx, ny)
    out_dir = run_directory(cfg, scheme, nx, ny) if write else None
    snaps = _snapshot_steps(loop.n_steps, cfg.snapshot_every)
    written = []

    def snapshot(step, t, rec, st):
        if out_dir is None or step not in snaps:
            return
        fcr = fcr_project(mesh, st)
        name = f"snapshot_{step:06d}.vtk"
        write_vtk(out_dir / name, mesh, {"u_fcr": fcr.u, "u_cg": st.u}, {"U": st.U},
                  title=f"{problem.name} {scheme} step={step} t={t:.10g}")
        written.append(name)

    log.info("run %s/%s on %dx%d, %d steps of dt=%.6g", problem.name, scheme, nx, ny, loop.n_steps, loop.dt)
    result = run_transient(problem, mesh, loop, observers=[snapshot], check=check)
    final_errors = _safe_errors(problem, mesh, result.state)

    records = [asdict(r) for r in result.records]
    report = {
        "config": cfg.to_dict() | {"scheme": scheme, "nx": nx, "ny": ny},
        "dt": loop.dt,
        "n_steps": loop.n_steps,
        "wall_clock": None if cfg.reproducible else result.wall_clock,
        "counters": {k: result.total(k) for k in COUNTERS},
        "final_errors": final_errors,
        "snapshots": written,
        "steps": records,
    }
    run = SingleRun(problem, mesh, loop, result, report, out_dir)
    if cfg.profile != "none":
        fcr = fcr_project(mesh, result.state)
        run.profiles[cfg.profile] = profile_table(cfg.profile, mesh, fcr.u, result.state.u)
    if out_dir is not None:
        write_csv(out_dir / "diagnostics.csv", [{k: v for k, v in r.items() if k != "errors"} for r in records])
        for kind, rows in run.profiles.items():
            write_csv(out_dir / f"profile_{kind}.csv", rows)
            report.setdefault("profiles", []).append(f"profile_{kind}.csv")
        write_json(out_dir / "report.json", report)
    return run


# ---------------------------------------------------------------------------
# convergence

def _level_run(cfg: RunConfig, scheme: str, k: int, exact: bool):
    nx, ny = cfg.cells_for_level(k)
    problem, mesh, loop = _setup(cfg, scheme, nx, ny)

    def err(st):
        return error_norms(problem, mesh, st)

    result = run_transient(problem, mesh, loop, error_fn=err if exact else None)
    row = {"problem": problem.name, "scheme": scheme, "level": k, "h": 2.0 ** (-k), "nx": nx, "ny": ny,
           "dt": loop.dt, "n_steps": loop.n_steps}
    if exact:
        linf_l1, l2_h1 = accumulate_time_norms([r.errors for r in result.records], loop.dt)
        row.update(linf_L1=linf_l1, l2_H1=l2_h1)
    row.update({c: result.total(c) for c in COUNTERS})
    row["wall_clock"] = None if cfg.reproducible else result.wall_clock
    return row, mesh, result.state


def run_convergence(cfg: RunConfig, write: bool = True) -> list:
    """Per-level norms and rates for every scheme; one CSV row per level per scheme.

    With an exact solution: l_inf(L1) and l2(H1) with pairwise rates. Without
    one: differences of successive levels and three-level EOCs.
    """
    problem = get_problem(cfg.problem)
    exact = problem.exact is not None
    need = 2 if exact else 3
    if len(cfg.levels) < need:
        what = "pairwise rates" if exact else "three-level EOC"
        raise ConfigurationError(f"levels: {what} needs at least {need} refinement levels, got {list(cfg.levels)}")
    rows = []
    for scheme in cfg.schemes:
        level_rows, states = [], []
        for k in cfg.levels:
            t0 = time.perf_counter()
            row, mesh, state = _level_run(cfg, scheme, k, exact)
            log.info("%s level %d done in %.1fs", scheme, k, time.perf_counter() - t0)
            level_rows.append(row)
            states.append((mesh, state))
        if exact:
            for key, rate_key in (("linf_L1", "rate_L1"), ("l2_H1", "rate_H1")):
                rates = pairwise_rates([r[key] for r in level_rows])
                for r, rate in zip(level_rows, [None] + rates):
                    r[rate_key] = rate
        else:
            diffs = [None] + [difference_norms(*states[i - 1], *states[i]) for i in range(1, len(states))]
            for i, r in enumerate(level_rows):
                r["diff_L1"], r["diff_L2"] = diffs[i] if diffs[i] else (None, None)
                if i >= 2:
                    r["eoc_L1"] = eoc_from_differences(diffs[i - 1][0], diffs[i][0])
                    r["eoc_L2"] = eoc_from_differences(diffs[i - 1][1], diffs[i][1])
                else:
                    r["eoc_L1"] = r["eoc_L2"] = None
        rows.extend(level_rows)
    if write:
        cols = ["problem", "scheme", "level", "h", "nx", "ny", "dt", "n_steps"]
        cols += ["linf_L1", "l2_H1", "rate_L1", "rate_H1"] if exact else ["diff_L1", "diff_L2", "eoc_L1", "eoc_L2"]
        cols += list(COUNTERS) + ["wall_clock"]
        write_csv(Path(cfg.out) / f"convergence_{problem.name}.csv", rows, cols)
        write_json(Path(cfg.out) / f"convergence_{problem.name}.json", {"config": cfg.to_dict(), "rows": rows})
    return rows


# ---------------------------------------------------------------------------
# benchmarks

def compare_profiles(runs: dict, kind: str, reference: str = "lo") -> dict:
    """Monotone segments of each profile and L1 distances to the reference scheme."""
    out = {}
    ref = runs.get(reference)
    for scheme, run in runs.items():
        rows = run.profiles.get(kind)
        if rows is None:
            continue
        s = [r["s"] for r in rows]
        v = [r["u_fcr"] for r in rows]
        entry = {"monotone_segments": monotone_segments(v)}
        if ref is not None and kind in ref.profiles:
            entry["l1_distance_to_" + reference] = profile_l1_distance(s, v, [r["u_fcr"] for r in ref.profiles[kind]])
        out[scheme] = entry
    return out


def bench(name: str, out: str | None = None, reproducible: bool = False, **overrides) -> dict:
    """Run a preset: a convergence sweep for multi-level presets, else one run per scheme."""
    cfg = preset(name, out=out, reproducible=reproducible or None, **overrides)
    t0 = time.perf_counter()
    if len(cfg.levels) > 1:
        rows = run_convergence(cfg)
        summary = {"preset": cfg.preset, "kind": "convergence", "rows": rows}
    else:
        runs = {s: run_single(cfg, scheme=s) for s in cfg.schemes}
        summary = {"preset": cfg.preset, "kind": "single",
                   "runs": {s: {"counters": r.report["counters"], "final_errors": r.report["final_errors"],
                                "directory": r.out_dir.name} for s, r in runs.items()}}
        if cfg.profile != "none":
            summary["profiles"] = compare_profiles(runs, cfg.profile)
    summary["wall_clock"] = None if cfg.reproducible else time.perf_counter() - t0
    write_json(Path(cfg.out) / f"bench_{cfg.preset}.json", summary)
    return summary

