"""Configuration, orchestration, and artifact emission.

One JSON config drives the whole pipeline; ``--set key=value`` overrides
individual leaves by dotted path (values parse as JSON literals, falling
back to bare strings). Subcommands emit single artifacts; ``run``
executes band -> boundary -> solve -> values -> screen -> simulate in
dependency order, skipping stages whose artifacts were not requested,
and finishes with a summary JSON carrying the structural constants,
tolerances, and pass/fail flags of every check that ran.

Exit codes: 2 for configuration problems (message names the offending
dotted path), 3 for solver failures and missing upstream artifacts, 4
for a failed verification gate.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import json
import os
from pathlib import Path

import click
import numpy as np

from . import boundary as boundary_mod
from . import hjb
from . import model as model_mod
from . import output
from . import principal
from . import screening
from . import simulate
from .errors import CheckError, ConfigError, SolverError

ORDERING_TOL = 1e-2
VIOLATING_FRACTION_TOL = 0.01
TERMINAL_GAP_TOL = 1e-8
FILTER_SHADOW_TOL = 1e-6

EMIT_NAMES = (
    "band", "boundary", "field", "values", "screening",
    "trajectories", "summary",
)
_PRESETS = Path(__file__).parent / "presets"


# ---------------------------------------------------------------------------
# config loading


def _decode_literal(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_raw_config(config: str | None, overrides) -> dict:
    """Read the JSON config (bundled preset name or file path) and apply
    dotted-path overrides."""
    if config is None:
        path = _PRESETS / "dominated.json"
    else:
        cand = Path(config)
        if cand.is_file():
            path = cand
        else:
            path = _PRESETS / f"{config}.json"
            if not path.is_file():
                raise ConfigError(
                    f"no such file or bundled preset: {config!r}",
                    field="config",
                )
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON ({exc})", field="config")
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} must hold a JSON object", field="config")

    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(
                f"override {item!r} must look like key=value", field="set"
            )
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {}
                node[part] = child
            node = child
        node[parts[-1]] = _decode_literal(raw)
    return doc


def _section(doc: dict, name: str) -> dict | None:
    sec = doc.get(name)
    if sec is None:
        return None
    if not isinstance(sec, dict):
        raise ConfigError("must be a JSON object", field=name)
    return dict(sec)


def _pair(value, name):
    try:
        a, b = value
        return float(a), float(b)
    except (TypeError, ValueError):
        raise ConfigError("must be a pair of numbers", field=name)


def _build_model(doc: dict) -> model_mod.ModelSpec:
    sec = _section(doc, "model")
    if sec is None:
        raise ConfigError("section is required", field="model")
    params = sec.get("cost_params")
    if isinstance(params, dict):
        params = dict(params)
        for key in ("curvature", "linear"):
            if key in params:
                params[key] = _pair(
                    params[key], f"model.cost_params.{key}"
                )
        sec["cost_params"] = params
    if "r_type" in sec:
        sec["r_type"] = _pair(sec["r_type"], "model.r_type")
    try:
        return model_mod.ModelSpec(**sec)
    except TypeError as exc:
        raise ConfigError(str(exc), field="model")


def _build_grid(doc: dict) -> hjb.GridSpec:
    sec = _section(doc, "grid")
    try:
        return hjb.GridSpec(**(sec or {}))
    except TypeError as exc:
        raise ConfigError(str(exc), field="grid")


def _build_sim(doc: dict, seed: int | None) -> simulate.SimConfig | None:
    sec = _section(doc, "sim")
    if sec is None:
        return None
    if "initial" in sec:
        try:
            sec["initial"] = tuple(float(v) for v in sec["initial"])
        except (TypeError, ValueError):
            raise ConfigError(
                "must be a list of four numbers", field="sim.initial"
            )
    if seed is not None:
        sec["seed"] = seed
    try:
        return simulate.SimConfig(**sec)
    except TypeError as exc:
        raise ConfigError(str(exc), field="sim")


@dataclasses.dataclass(frozen=True)
class RunConfig:
    spec: model_mod.ModelSpec
    grid: hjb.GridSpec
    sim: simulate.SimConfig | None
    sweep: tuple[float, ...]
    output_dir: Path
    emit: frozenset[str]
    n_export: int
    threads: int
    raw: dict


def build_run_config(
    config: str | None,
    overrides,
    output_dir: str | None,
    seed: int | None,
    threads: int | None,
) -> RunConfig:
    doc = load_raw_config(config, overrides)
    spec = _build_model(doc)
    # The library accepts degenerate priors (known-type evaluation); the
    # pipeline does not — every stage conditions on a truly uncertain type.
    if not 0.0 < spec.prior_p0 < 1.0:
        raise ConfigError(
            f"prior p0={spec.prior_p0:g} must be interior to (0, 1)",
            field="model.prior_p0",
        )
    grid = _build_grid(doc)
    grid.validate_for(spec)
    sim = _build_sim(doc, seed)

    sweep_raw = doc.get("sweep", [spec.prior_p0])
    if isinstance(sweep_raw, (int, float)):
        sweep_raw = [sweep_raw]
    try:
        sweep = tuple(float(p) for p in sweep_raw)
    except (TypeError, ValueError):
        raise ConfigError("must be a list of priors", field="sweep")
    if not sweep:
        raise ConfigError("needs at least one prior", field="sweep")
    for p in sweep:
        if not 0.0 < p < 1.0:
            raise ConfigError(
                f"prior p0={p:g} must be interior to (0, 1)", field="sweep"
            )

    emit_raw = doc.get("emit", list(EMIT_NAMES))
    if isinstance(emit_raw, str):
        emit_raw = [emit_raw]
    emit = frozenset(emit_raw)
    unknown = emit - set(EMIT_NAMES)
    if unknown:
        raise ConfigError(
            f"unknown artifact names {sorted(unknown)}; "
            f"choose from {list(EMIT_NAMES)}",
            field="emit",
        )

    n_export = doc.get("n_export", 10)
    if not isinstance(n_export, int) or n_export < 0:
        raise ConfigError("must be a nonnegative integer", field="n_export")

    if threads is None:
        env = os.environ.get("ASHJB_THREADS")
        if env is not None:
            try:
                threads = int(env)
            except ValueError:
                raise ConfigError(
                    f"ASHJB_THREADS={env!r} is not an integer",
                    field="threads",
                )
        else:
            threads = 1
    if threads < 1:
        raise ConfigError("must be >= 1", field="threads")

    outdir = Path(output_dir if output_dir is not None
                  else doc.get("output_dir", "out"))
    return RunConfig(
        spec=spec, grid=grid, sim=sim, sweep=sweep, output_dir=outdir,
        emit=emit, n_export=n_export, threads=threads, raw=doc,
    )


# ---------------------------------------------------------------------------
# lazy stage cache


class Pipeline:
    """Computes each stage at most once, on first demand, so a subcommand
    pays only for the stages its artifact actually needs."""

    def __init__(self, cfg: RunConfig, check_only: bool = False):
        self.cfg = cfg
        self.check_only = check_only

    @functools.cached_property
    def bvals(self) -> boundary_mod.BoundaryValues:
        return boundary_mod.make_boundary(self.cfg.spec)

    @functools.cached_property
    def solved(self) -> tuple[hjb.ValueField, hjb.PolicyField]:
        if self.check_only:
            return output.load_field(
                self.cfg.output_dir / "field.npz", self.cfg.spec
            )
        return hjb.solve_interior(self.cfg.spec, self.cfg.grid, self.bvals)

    @property
    def field(self) -> hjb.ValueField:
        return self.solved[0]

    @property
    def policy(self) -> hjb.PolicyField:
        return self.solved[1]

    @functools.cached_property
    def principal_reports(self) -> list[principal.PrincipalReport]:
        return principal.sweep_prior(self.cfg.spec, self.field,
                                     self.cfg.sweep)

    @functools.cached_property
    def screen_solution(self) -> screening.ScreeningSolution:
        return screening.solve_screening(self.cfg.spec, self.cfg.grid)

    @functools.cached_property
    def screen_reports(self) -> list[screening.ScreenReport]:
        return screening.sweep_screening(
            self.cfg.spec, self.screen_solution, self.cfg.sweep
        )

    @functools.cached_property
    def bundle(self) -> simulate.PathBundle:
        cfg = self.cfg
        if cfg.sim is None:
            raise ConfigError("section is required to simulate", field="sim")
        return simulate.rollout_policy(
            cfg.spec, self.field, self.policy, cfg.sim,
            n_threads=cfg.threads,
        )

    @functools.cached_property
    def trajectories(self) -> dict:
        cfg = self.cfg
        if cfg.sim is None:
            raise ConfigError("section is required to simulate", field="sim")
        return simulate.trajectory_export(
            cfg.spec, self.field, self.policy, cfg.sim, cfg.n_export
        )


# ---------------------------------------------------------------------------
# artifact writers


def _emit_band(pipe: Pipeline) -> Path:
    cfg = pipe.cfg
    return output.write_csv(
        cfg.output_dir / "band.csv", output.BAND_HEADER,
        output.band_rows(cfg.spec, cfg.grid.n_time),
    )


def _emit_boundary(pipe: Pipeline) -> Path:
    cfg = pipe.cfg
    return output.write_csv(
        cfg.output_dir / "boundary.csv", output.BOUNDARY_HEADER,
        output.boundary_rows(cfg.spec, pipe.bvals, cfg.grid.n_time),
    )


def _emit_field(pipe: Pipeline) -> list[Path]:
    cfg = pipe.cfg
    field, policy = pipe.solved
    paths = [
        output.write_csv(
            cfg.output_dir / "field.csv", output.FIELD_HEADER,
            output.field_rows(field, policy),
        ),
        output.save_field(cfg.output_dir / "field.npz", cfg.spec, field,
                          policy),
        output.write_json(cfg.output_dir / "field_summary.json", {
            "grid": {
                "n_time": cfg.grid.n_time,
                "n_gap": cfg.grid.n_gap,
                "n_belief": cfg.grid.n_belief,
                "n_control": cfg.grid.n_control,
                "terminal_layer_eps": cfg.grid.terminal_layer_eps,
                "cfl_safety": cfg.grid.cfl_safety,
            },
            "solver": field.info,
            "t_star": field.t_star,
        }),
    ]
    return paths


def _emit_values(pipe: Pipeline) -> Path:
    return output.write_csv(
        pipe.cfg.output_dir / "values.csv", output.VALUES_HEADER,
        output.values_rows(pipe.principal_reports),
    )


def _emit_screen(pipe: Pipeline) -> Path:
    return output.write_csv(
        pipe.cfg.output_dir / "screen.csv", output.SCREEN_HEADER,
        output.screen_rows(pipe.screen_reports),
    )


def _emit_compare_from_reports(pipe: Pipeline) -> Path:
    priors = [rep.prior_p0 for rep in pipe.principal_reports]
    return output.write_csv(
        pipe.cfg.output_dir / "compare.csv", output.COMPARE_HEADER,
        output.compare_rows(
            priors,
            [rep.v_conditional for rep in pipe.principal_reports],
            [rep.v_screening for rep in pipe.screen_reports],
            [rep.v_unconditional for rep in pipe.principal_reports],
        ),
    )


def _emit_trajectories(pipe: Pipeline) -> Path:
    return output.write_csv(
        pipe.cfg.output_dir / "trajectory.csv", output.TRAJECTORY_HEADER,
        output.trajectory_rows(pipe.trajectories),
    )


def _bundle_doc(pipe: Pipeline) -> dict:
    b = pipe.bundle
    cfg = pipe.cfg
    return {
        "n_paths": cfg.sim.n_paths,
        "n_steps": b.n_steps,
        "dt": b.dt,
        "seed": cfg.sim.seed,
        "threads": cfg.threads,
        "payoff_mean": b.payoff_mean,
        "payoff_se": b.payoff_se,
        "violation_stats": b.violation_stats,
        "terminal_gap_stats": b.terminal_gap_stats,
        "hit_stats": b.hit_stats,
        "filter_error": b.filter_error,
    }


# ---------------------------------------------------------------------------
# checks


def _ordering_violations(priors, v_c, v_s, v_uc, tol=ORDERING_TOL):
    bad = []
    for p0, vc, vs, vu in zip(priors, v_c, v_s, v_uc):
        if vc > vs + tol or vs > vu + tol:
            bad.append(float(p0))
    return bad


def run_checks(pipe: Pipeline, stages: set[str]) -> dict:
    """Pass/fail flags for every gate the requested stages support."""
    checks: dict[str, bool] = {}
    if "field" in stages:
        report = hjb.check_apriori(pipe.cfg.spec, pipe.field)
        checks["apriori_sandwich"] = bool(report.passed)
        k_bound = float(pipe.field.info["control_trunc_K"]) + 1e-12
        checks["control_truncation"] = bool(
            max(np.max(np.abs(pipe.policy.z0_star)),
                np.max(np.abs(pipe.policy.z1_star))) <= k_bound
        )
    if "values" in stages and "screening" in stages:
        checks["ordering"] = not _ordering_violations(
            [r.prior_p0 for r in pipe.principal_reports],
            [r.v_conditional for r in pipe.principal_reports],
            [r.v_screening for r in pipe.screen_reports],
            [r.v_unconditional for r in pipe.principal_reports],
        )
    if "simulate" in stages:
        b = pipe.bundle
        checks["band_violations"] = bool(
            b.violation_stats["violating_fraction"] < VIOLATING_FRACTION_TOL
        )
        checks["terminal_gap"] = bool(
            b.terminal_gap_stats["max"] <= TERMINAL_GAP_TOL
        )
        checks["filter_shadow"] = bool(b.filter_error <= FILTER_SHADOW_TOL)
    return checks


def _constants_doc(spec: model_mod.ModelSpec) -> dict:
    sc = model_mod.structural_constants(spec)
    c_up, c_lo, b_growth = hjb.apriori_constants(spec)
    return {
        "a_lower": sc.gap_lower,
        "a_upper": sc.gap_upper,
        "c0_saturation": sc.c0_saturation,
        "n0_growth": sc.n0_growth,
        "c_growth": sc.c_growth,
        "sup_cost": sc.sup_cost,
        "c_upper_envelope": c_up,
        "c_lower_envelope": c_lo,
        "gap_growth_bound": b_growth,
    }


def _tolerances_doc() -> dict:
    return {
        "ordering": ORDERING_TOL,
        "violating_fraction": VIOLATING_FRACTION_TOL,
        "terminal_gap": TERMINAL_GAP_TOL,
        "filter_shadow": FILTER_SHADOW_TOL,
    }


# ---------------------------------------------------------------------------
# command plumbing


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            raise SystemExit(2)
        except SolverError as exc:
            click.echo(f"solver error: {exc}", err=True)
            raise SystemExit(3)
        except CheckError as exc:
            click.echo(f"check failed: {exc}", err=True)
            raise SystemExit(4)
    return wrapper


def _common(fn):
    fn = click.option(
        "--config", default=None, metavar="PATH",
        help="Config JSON: a file path or a bundled preset name "
             "(dominated, nondominated). Defaults to the dominated preset.",
    )(fn)
    fn = click.option(
        "--set", "overrides", multiple=True, metavar="KEY=VALUE",
        help="Override a config leaf by dotted path; the value parses as "
             "a JSON literal (falling back to a bare string).",
    )(fn)
    fn = click.option("--output-dir", default=None, metavar="PATH",
                      help="Artifact directory (beats the config value).")(fn)
    fn = click.option("--seed", default=None, type=int, metavar="N",
                      help="Replace the simulation seed.")(fn)
    fn = click.option("--threads", default=None, type=int, metavar="N",
                      help="Worker threads for path simulation "
                           "(beats ASHJB_THREADS).")(fn)
    return fn


def _configure(config, overrides, output_dir, seed, threads,
               check_only: bool = False) -> Pipeline:
    cfg = build_run_config(config, overrides, output_dir, seed, threads)
    return Pipeline(cfg, check_only=check_only)


def _report(paths) -> None:
    if isinstance(paths, (str, Path)):
        paths = [paths]
    for path in paths:
        click.echo(f"wrote {path}")


@click.group()
def main():
    """Credible bands, state-constrained contract values, and path
    simulation for the two-type adverse-selection model."""


@main.command()
@_common
@_guarded
def band(config, overrides, output_dir, seed, threads):
    """Emit the credible band walls over the time grid."""
    pipe = _configure(config, overrides, output_dir, seed, threads)
    _report(_emit_band(pipe))


@main.command()
@_common
@_guarded
def boundary(config, overrides, output_dir, seed, threads):
    """Emit lateral boundary data: pooled walls and per-type screening
    walls."""
    pipe = _configure(config, overrides, output_dir, seed, threads)
    _report(_emit_boundary(pipe))


@main.command()
@_common
@click.option("--check-only", is_flag=True,
              help="Skip solving; load field.npz from the output "
                   "directory and re-run the invariant checks.")
@_guarded
def solve(config, overrides, output_dir, seed, threads, check_only):
    """Solve the interior value field (or re-check a stored solve)."""
    pipe = _configure(config, overrides, output_dir, seed, threads,
                      check_only=check_only)
    if check_only:
        checks = run_checks(pipe, {"field"})
        for name, ok in sorted(checks.items()):
            click.echo(f"check {name}: {'pass' if ok else 'FAIL'}")
        if not all(checks.values()):
            failed = [n for n, ok in sorted(checks.items()) if not ok]
            raise CheckError(f"failed: {', '.join(failed)}")
        return
    _report(_emit_field(pipe))


@main.command()
@_common
@_guarded
def values(config, overrides, output_dir, seed, threads):
    """Emit conditional and unconditional principal values over the
    prior sweep."""
    pipe = _configure(config, overrides, output_dir, seed, threads)
    _report(_emit_values(pipe))


@main.command()
@_common
@_guarded
def screen(config, overrides, output_dir, seed, threads):
    """Emit the screening benchmark values over the prior sweep."""
    pipe = _configure(config, overrides, output_dir, seed, threads)
    _report(_emit_screen(pipe))


@main.command("simulate")
@_common
@_guarded
def simulate_cmd(config, overrides, output_dir, seed, threads):
    """Roll out the optimal policy under the filtered dynamics; emit
    summary statistics and optionally per-path trajectories."""
    pipe = _configure(config, overrides, output_dir, seed, threads)
    cfg = pipe.cfg
    paths = [output.write_json(
        cfg.output_dir / "simulate_summary.json", _bundle_doc(pipe)
    )]
    if "trajectories" in cfg.emit and cfg.n_export > 0:
        paths.append(_emit_trajectories(pipe))
    _report(paths)


@main.command()
@_common
@_guarded
def compare(config, overrides, output_dir, seed, threads):
    """Join values.csv and screen.csv from the output directory into the
    three-way comparison table; flag ordering violations."""
    pipe = _configure(config, overrides, output_dir, seed, threads)
    outdir = pipe.cfg.output_dir
    rows_v = _read_csv(outdir / "values.csv", output.VALUES_HEADER)
    rows_s = _read_csv(outdir / "screen.csv", output.SCREEN_HEADER)
    if [r["p0"] for r in rows_v] != [r["p0"] for r in rows_s]:
        raise SolverError(
            "values.csv and screen.csv cover different prior sweeps; "
            "regenerate them from one config"
        )
    priors = [float(r["p0"]) for r in rows_v]
    v_c = [float(r["v_c"]) for r in rows_v]
    v_s = [float(r["v_s"]) for r in rows_s]
    v_uc = [float(r["v_uc"]) for r in rows_v]
    _report(output.write_csv(
        outdir / "compare.csv", output.COMPARE_HEADER,
        output.compare_rows(priors, v_c, v_s, v_uc),
    ))
    bad = _ordering_violations(priors, v_c, v_s, v_uc)
    if bad:
        raise CheckError(
            "value ordering v_c <= v_s <= v_uc violated beyond "
            f"{ORDERING_TOL:g} at priors {bad}"
        )
    click.echo(f"check ordering: pass ({len(priors)} priors)")


def _read_csv(path: Path, header) -> list[dict]:
    if not path.is_file():
        raise SolverError(f"missing upstream artifact {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != tuple(header):
            raise SolverError(
                f"{path} has columns {reader.fieldnames}, "
                f"expected {list(header)}"
            )
        return list(reader)


@main.command()
@_common
@click.option("--check-only", is_flag=True,
              help="Skip solving; load field.npz from the output "
                   "directory and re-run the checks.")
@_guarded
def run(config, overrides, output_dir, seed, threads, check_only):
    """Execute the full pipeline in dependency order, skipping artifacts
    not listed under `emit`, and finish with the check summary."""
    pipe = _configure(config, overrides, output_dir, seed, threads,
                      check_only=check_only)
    cfg = pipe.cfg
    emit = cfg.emit
    stages: set[str] = set()

    if check_only:
        stages.add("field")  # loads the archive rather than solving
    else:
        if "band" in emit:
            _report(_emit_band(pipe))
        if "boundary" in emit:
            _report(_emit_boundary(pipe))
        if "field" in emit:
            _report(_emit_field(pipe))
            stages.add("field")
        if "values" in emit:
            _report(_emit_values(pipe))
            stages.add("values")
        if "screening" in emit:
            _report(_emit_screen(pipe))
            stages.add("screening")
        if "values" in emit and "screening" in emit:
            _report(_emit_compare_from_reports(pipe))
        if "trajectories" in emit and cfg.n_export > 0:
            _report(_emit_trajectories(pipe))
        if cfg.sim is not None and ("trajectories" in emit
                                    or "summary" in emit):
            stages.add("simulate")

    checks = run_checks(pipe, stages)
    for name, ok in sorted(checks.items()):
        click.echo(f"check {name}: {'pass' if ok else 'FAIL'}")

    if "summary" in emit:
        doc = {
            "config": cfg.raw,
            "constants": _constants_doc(cfg.spec),
            "tolerances": _tolerances_doc(),
            "checks": checks,
            "passed": bool(checks) and all(checks.values()),
        }
        if "field" in stages:
            doc["solver"] = pipe.field.info
        if "simulate" in stages:
            doc["simulate"] = _bundle_doc(pipe)
        _report(output.write_json(cfg.output_dir / "summary.json", doc))

    if checks and not all(checks.values()):
        failed = [n for n, ok in sorted(checks.items()) if not ok]
        raise CheckError(f"failed: {', '.join(failed)}")


if __name__ == "__main__":
    main()
