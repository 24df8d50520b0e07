"""Fixed-schema artifact emission and the solved-field archive.

Every float passes through one 12-significant-digit formatter, headers
are frozen constants, and rows iterate in a fixed order, so a given
config and seed reproduce byte-identical CSVs on any run or thread
count. JSON summaries carry runtimes and so are deterministic only up to
those fields.

``save_field`` / ``load_field`` archive a solved (ValueField,
PolicyField) pair as an .npz next to the CSVs; the band and grid are
rebuilt from the model on load, with edge checks so a stale archive
cannot silently pair with a different model.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import band as band_mod
from .boundary import BoundaryValues
from .errors import ConfigError, SolverError
from .hjb import GridSpec, PolicyField, ValueField
from .model import ModelSpec

BAND_HEADER = ("t", "W_lower", "W_upper")
BOUNDARY_HEADER = (
    "t", "wbar", "wunder",
    "v0_upper", "v0_lower", "v1_upper", "v1_lower",
)
FIELD_HEADER = ("t", "s", "p", "y", "w", "z0_star", "z1_star", "boundary_flag")
VALUES_HEADER = ("p0", "v_c", "y0_c", "y1_c", "v_uc", "y0_uc", "y1_uc")
SCREEN_HEADER = ("p0", "v_s", "y0", "y1c", "y0c", "y1")
COMPARE_HEADER = ("p0", "v_c", "v_s", "v_uc")
TRAJECTORY_HEADER = (
    "path", "t", "X", "p", "Y0", "Y1",
    "W_lower", "W_upper", "z0", "z1", "boundary_flag",
)


def fmt(value) -> str:
    """One formatter for every emitted number: ints verbatim, floats at
    12 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.12g" % float(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# row generators (header constants above fix the column orders)


def band_rows(spec: ModelSpec, n_time: int):
    bd = band_mod.build(spec)
    for t in np.linspace(0.0, spec.horizon_T, n_time + 1):
        t = float(t)
        yield t, bd.lower(t), bd.upper(t)


def boundary_rows(spec: ModelSpec, bvals: BoundaryValues, n_time: int):
    for t in np.linspace(0.0, spec.horizon_T, n_time + 1):
        t = float(t)
        yield (
            t, float(bvals.wbar(t)), float(bvals.wunder(t)),
            float(bvals.screening_upper(0, t)),
            float(bvals.screening_lower(0, t)),
            float(bvals.screening_upper(1, t)),
            float(bvals.screening_lower(1, t)),
        )


def field_rows(field: ValueField, policy: PolicyField):
    for k, t in enumerate(field.t_grid):
        y_nodes = field.y_nodes(k)
        for i, s in enumerate(field.s_grid):
            for j, p in enumerate(field.p_grid):
                yield (
                    float(t), float(s), float(p), float(y_nodes[i]),
                    float(field.values[k, i, j]),
                    float(policy.z0_star[k, i, j]),
                    float(policy.z1_star[k, i, j]),
                    int(policy.boundary_flag[k, i, j]),
                )


def values_rows(reports):
    """Rows from principal reports ordered as given."""
    for rep in reports:
        y0c, y1c = rep.argmax_conditional
        y0u, y1u = rep.argmax_unconditional
        yield (
            rep.prior_p0, rep.v_conditional, y0c, y1c,
            rep.v_unconditional, y0u, y1u,
        )


def screen_rows(reports):
    for rep in reports:
        y0, y1c, y0c, y1 = rep.argmax_quad
        yield rep.prior_p0, rep.v_screening, y0, y1c, y0c, y1


def compare_rows(priors, v_c, v_s, v_uc):
    for row in zip(priors, v_c, v_s, v_uc):
        yield row


def trajectory_rows(records: dict):
    cols = [records[name] for name in TRAJECTORY_HEADER]
    for row in zip(*cols):
        yield (int(row[0]), *map(float, row[1:-1]), int(row[-1]))


# ---------------------------------------------------------------------------
# solved-field archive


def save_field(path, spec: ModelSpec, field: ValueField,
               policy: PolicyField) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = field.grid
    grid_doc = {
        "n_time": grid.n_time,
        "n_gap": grid.n_gap,
        "n_belief": grid.n_belief,
        "control_trunc_K": grid.control_trunc_K,
        "n_control": grid.n_control,
        "terminal_layer_eps": grid.terminal_layer_eps,
        "cfl_safety": grid.cfl_safety,
    }
    np.savez_compressed(
        path,
        values=field.values,
        t_grid=field.t_grid,
        s_grid=field.s_grid,
        p_grid=field.p_grid,
        in_layer=field.in_layer,
        t_star=np.float64(field.t_star),
        z0_star=policy.z0_star,
        z1_star=policy.z1_star,
        boundary_flag=policy.boundary_flag,
        rep_lower=np.float64(policy.rep_lower),
        rep_upper=np.float64(policy.rep_upper),
        grid_json=np.bytes_(json.dumps(grid_doc).encode()),
        info_json=np.bytes_(json.dumps(field.info, default=float).encode()),
        band_edges=np.array([
            field.band.lower(0.0), field.band.upper(0.0),
            field.band.kappa, float(field.t_grid[-1]),
        ]),
    )
    return path


def load_field(path, spec: ModelSpec) -> tuple[ValueField, PolicyField]:
    path = Path(path)
    if not path.exists():
        raise SolverError(
            f"no solved-field archive at {path}; run `ashjb solve` first"
        )
    with np.load(path) as data:
        edges = data["band_edges"]
        bd = band_mod.build(spec)
        matches = (
            abs(edges[2] - spec.kappa) <= 1e-12
            and abs(edges[3] - spec.horizon_T) <= 1e-12
            and abs(edges[0] - bd.lower(0.0)) <= 1e-9
            and abs(edges[1] - bd.upper(0.0)) <= 1e-9
        )
        if not matches:
            raise ConfigError(
                f"archive {path} was solved for a different model",
                field="field",
            )
        grid = GridSpec(**json.loads(bytes(data["grid_json"]).decode()))
        field = ValueField(
            values=data["values"],
            t_grid=data["t_grid"],
            s_grid=data["s_grid"],
            p_grid=data["p_grid"],
            in_layer=data["in_layer"],
            grid=grid,
            band=bd,
            t_star=float(data["t_star"]),
            info=json.loads(bytes(data["info_json"]).decode()),
        )
        policy = PolicyField(
            z0_star=data["z0_star"],
            z1_star=data["z1_star"],
            boundary_flag=data["boundary_flag"],
            in_layer=data["in_layer"],
            rep_lower=float(data["rep_lower"]),
            rep_upper=float(data["rep_upper"]),
        )
    return field, policy
