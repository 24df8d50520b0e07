"""Menu of two contracts with self-selection.

Once the agent picks a menu item the type is revealed, so each item's
continuation problem carries a known type theta and no belief state. The
same sum/gap extraction that produced the interior equation leaves a
1+1-D value v_theta(t, g) on the credible band:

    full value  V_theta(t, x, y_theta) = x - e^{kappa*(T-t)} * y_theta
                                           + v_theta(t, g),

where g is the spread between the promise made to type 0's slot and type
1's slot within that item. The gap dynamics keep the interior drift
-H_0(z_0) + H_1(z_1) + kappa*g + zeta * A_theta(z_theta) and volatility
zeta = z_0 - z_1 (the intensity is the known type's best response), and
the running reward is

    rho_theta(t, z_theta) = A_theta(z_theta)
        + e^{kappa*(T-t)} * (H_theta(z_theta) - z_theta * A_theta(z_theta)),

whose discounted part is -e^{kappa*(T-t)} * c(theta, A_theta(z_theta)).
The march reuses the interior's semi-Lagrangian probe scheme and exact
band geometry; walls carry the known-type Dirichlet data (closed form for
the named presets, a cumulative quadrature table otherwise), and the
terminal layer starts from 0 (the extraction removed the terminal
payment).

The menu itself is a static program over the promise quadruple
(y_0, y_1^c, y_0^c, y_1) — the diagonal entries are the promises kept on
the equilibrium path, the crossed ones the off-menu temptations:

    sup  p0 * V_0(0, 0, y_0) + (1 - p0) * V_1(0, 0, y_1)
    s.t. max{y_0^c, R, y_1^c + W_lower(0)} <= y_0 <= y_1^c + W_upper(0),
         max{y_1^c, R, y_0^c - W_upper(0)} <= y_1 <= y_0^c - W_lower(0),

with gaps g_0 = y_0 - y_1^c and g_1 = y_0^c - y_1. The objective strictly
decreases in y_0 and y_1, so both lower constraints bind and a 2-D search
over (y_0^c, y_1^c) remains; a 4-D lattice brute force serves as the test
oracle. ``reservation_mode`` switches the floor between the pooled R
(default) and the per-type R_theta.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.optimize import minimize_scalar

from . import band as band_mod
from . import boundary as boundary_mod
from . import model as model_mod
from .band import CredibleBand
from .errors import ConfigError, SolverError
from .hjb import GridSpec, band_geometry
from .model import ModelSpec

_WALL_TABLE_N = 4001
_REFINE_ITERS = 16
_LATTICE_N = 241
_LATTICE_PAD = 0.5


@dataclass
class TypeValueField:
    """v_theta(t, g) on the rescaled band, plus the argmax controls at
    stored slices (lattice maximizer polished by coordinate descent)."""

    theta: int
    values: np.ndarray  # (n_time+1, n_gap+1)
    z0_star: np.ndarray
    z1_star: np.ndarray
    t_grid: np.ndarray
    s_grid: np.ndarray
    in_layer: np.ndarray
    grid: GridSpec
    band: CredibleBand
    t_star: float
    info: dict = dc_field(default_factory=dict)

    def v_at(self, k: int, g):
        """Linear interpolation at physical spread g on slice k."""
        t = float(self.t_grid[k])
        h = self.band.width(t)
        lo = self.band.lower(t)
        g = np.asarray(g, dtype=float)
        slack = 1e-9 * max(1.0, h)
        if np.any(g < lo - slack) or np.any(g > lo + h + slack):
            raise ConfigError(f"spread outside the credible band at t={t}")
        if h <= slack:
            s = np.zeros_like(g)
        else:
            s = np.clip((g - lo) / h, 0.0, 1.0)
        out = np.interp(s, self.s_grid, self.values[k])
        return out if np.ndim(out) else float(out)


@dataclass
class ScreeningSolution:
    v0_field: TypeValueField
    v1_field: TypeValueField


@dataclass(frozen=True)
class ScreenReport:
    """Static-program outcome at one prior."""

    prior_p0: float
    v_screening: float
    argmax_quad: tuple[float, float, float, float]  # (y0, y1c, y0c, y1)
    reservation_mode: str


def value_theta(field: TypeValueField, t: float, x: float, y_theta: float, g):
    """Full known-type value from the extraction ansatz at a stored slice."""
    k = int(np.argmin(np.abs(field.t_grid - t)))
    if abs(float(field.t_grid[k]) - t) > 1e-9 * max(1.0, float(field.t_grid[-1])):
        raise ConfigError(f"t={t} is not a stored time slice")
    T = float(field.t_grid[-1])
    disc = math.exp(field.band.kappa * (T - float(field.t_grid[k])))
    out = x - disc * y_theta + field.v_at(k, g)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# known-type wall data


def wall_values(spec: ModelSpec, theta: int, band=None):
    """(v_upper(t), v_lower(t)) callables for the known-type walls.

    Preset families integrate in closed form (the extremal level sets
    saturate at a common action); custom families get a dense cumulative
    trapezoid table of the scanned level-set reward.
    """
    bd = band_mod.build(spec) if band is None else band
    T = spec.horizon_T
    kappa = spec.kappa
    if spec.cost_kind in ("dominated", "nondominated"):
        rep_lo, rep_up = band_mod.representative_controls(bd)
        out = []
        for rep in (rep_up, rep_lo):
            a = float(model_mod.optimal_action(spec, theta, rep))
            ca = float(model_mod.cost(spec, theta, a))

            def v(t, a=a, ca=ca):
                tau = T - np.asarray(t, dtype=float)
                val = a * tau - ca * np.expm1(kappa * tau) / kappa
                return val if np.ndim(val) else float(val)

            out.append(v)
        return out[0], out[1]
    # custom family: cumulative table of the scanned supremum
    t_f = np.linspace(0.0, T, _WALL_TABLE_N)
    closures = []
    for intervals in (bd.level_upper, bd.level_lower):
        r = boundary_mod._sup_reward_on(spec, theta, intervals, t_f)
        seg = 0.5 * (r[1:] + r[:-1]) * np.diff(t_f)
        tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])

        def v(t, tail=tail):
            val = np.interp(np.asarray(t, dtype=float), t_f, tail)
            return val if np.ndim(val) else float(val)

        closures.append(v)
    return closures[0], closures[1]


# ---------------------------------------------------------------------------
# 1+1-D solver


class _TypeStepper:
    def __init__(self, spec: ModelSpec, grid: GridSpec, theta: int, walls):
        grid.validate_for(spec)
        self.spec = spec
        self.grid = grid
        self.theta = theta
        self.bd = band_mod.build(spec)
        self.K = grid.resolve_K(spec)
        self.n_s = grid.n_gap
        self.s_grid = np.linspace(0.0, 1.0, self.n_s + 1)
        self.v_up, self.v_lo = walls
        z = np.linspace(-self.K, self.K, grid.n_control)
        self.z_grid = z
        Z0 = np.repeat(z, len(z))
        Z1 = np.tile(z, len(z))
        self.Z0, self.Z1 = Z0, Z1
        a0 = model_mod.optimal_action(spec, 0, Z0)
        a1 = model_mod.optimal_action(spec, 1, Z1)
        h0 = model_mod.hamiltonian(spec, 0, Z0)
        h1 = model_mod.hamiltonian(spec, 1, Z1)
        z_th = Z0 if theta == 0 else Z1
        a_th = a0 if theta == 0 else a1
        h_th = h0 if theta == 0 else h1
        self.zeta = Z0 - Z1
        self.D = -h0 + h1 + self.zeta * a_th
        self.rew0 = a_th                      # undiscounted reward part
        self.rew1 = h_th - z_th * a_th        # discounted part: -c(theta, a)
        self.dt_target = grid.cfl_safety / self.n_s
        self.substeps_done = 0

    def _probe_eval(self, u, s_hi, t_hi):
        val = np.interp(np.clip(s_hi, 0.0, 1.0), self.s_grid, u)
        lo_v = float(self.v_lo(t_hi))
        up_v = float(self.v_up(t_hi))
        val = np.where(s_hi <= 0.0, lo_v, val)
        val = np.where(s_hi >= 1.0, up_v, val)
        return val

    def substep(self, u, t_lo, t_hi, want_argmax):
        dt, sqdt, h_hi, slope, base, disc = band_geometry(
            self.bd, self.spec.kappa, self.spec.horizon_T, t_lo, t_hi
        )
        s_row = slope * self.s_grid[None, :]
        acc = None
        for sign in (1.0, -1.0):
            off = base + (self.D * dt + sign * self.zeta * sqdt) / h_hi
            val = self._probe_eval(u, s_row + off[:, None], t_hi)
            acc = val if acc is None else acc + val
        ell = self.rew0 + disc * self.rew1
        G = dt * ell[:, None] + 0.5 * acc
        best = np.max(G, axis=0)
        arg = np.argmax(G, axis=0) if want_argmax else None
        best[0] = float(self.v_lo(t_lo))
        best[-1] = float(self.v_up(t_lo))
        self.substeps_done += 1
        return best, arg

    def eval_nodes(self, z0f, z1f, si, u, t_lo, t_hi):
        dt, sqdt, h_hi, slope, base, disc = band_geometry(
            self.bd, self.spec.kappa, self.spec.horizon_T, t_lo, t_hi
        )
        spec = self.spec
        a0 = model_mod.optimal_action(spec, 0, z0f)
        a1 = model_mod.optimal_action(spec, 1, z1f)
        h0 = model_mod.hamiltonian(spec, 0, z0f)
        h1 = model_mod.hamiltonian(spec, 1, z1f)
        z_th = z0f if self.theta == 0 else z1f
        a_th = a0 if self.theta == 0 else a1
        h_th = h0 if self.theta == 0 else h1
        zeta = z0f - z1f
        D = -h0 + h1 + zeta * a_th
        acc = 0.0
        for sign in (1.0, -1.0):
            s_hi = slope * si + base + (D * dt + sign * zeta * sqdt) / h_hi
            acc = acc + self._probe_eval(u, s_hi, t_hi)
        return dt * (a_th + disc * (h_th - z_th * a_th)) + 0.5 * acc

    def refine(self, arg_idx, u_prev, t_lo, t_hi):
        si = self.s_grid[1:-1]
        z0 = self.Z0[arg_idx[1:-1]].copy()
        z1 = self.Z1[arg_idx[1:-1]].copy()
        best = self.eval_nodes(z0, z1, si, u_prev, t_lo, t_hi)
        dz = (self.z_grid[1] - self.z_grid[0]) * 0.5
        for _ in range(_REFINE_ITERS):
            for arr in (z0, z1):
                for sgn in (1.0, -1.0):
                    old = arr.copy()
                    np.clip(arr + sgn * dz, -self.K, self.K, out=arr)
                    trial = self.eval_nodes(z0, z1, si, u_prev, t_lo, t_hi)
                    worse = trial <= best
                    arr[worse] = old[worse]
                    np.maximum(best, trial, out=best)
            dz *= 0.6
        return z0, z1, best


def solve_v_theta(
    spec: ModelSpec, grid: GridSpec, theta: int, walls=None
) -> TypeValueField:
    """Backward march for the known-type value on the band."""
    if theta not in (0, 1):
        raise ConfigError("theta must be 0 or 1", field="theta")
    t_begin = time.perf_counter()
    est_total = int(
        (spec.horizon_T - grid.terminal_layer_eps) * grid.n_gap / grid.cfl_safety
    ) + grid.n_time + 2
    if est_total > 2_000_000:
        raise SolverError(f"known-type march would need ~{est_total} substeps")
    if walls is None:
        walls = wall_values(spec, theta)
    st = _TypeStepper(spec, grid, theta, walls)
    bd = st.bd
    T = spec.horizon_T
    eps = grid.terminal_layer_eps
    t_star = T - eps
    n_t = grid.n_time
    n_s = st.n_s
    t_grid = np.linspace(0.0, T, n_t + 1)
    in_layer = t_grid > t_star + 1e-12 * T
    rep_lo, rep_up = band_mod.representative_controls(bd)

    def layer_profile(t):
        out = np.zeros(n_s + 1)
        out[0] = float(st.v_lo(t))
        out[-1] = float(st.v_up(t))
        return out

    values = np.empty((n_t + 1, n_s + 1))
    z0_star = np.empty_like(values)
    z1_star = np.empty_like(values)
    for k in range(n_t + 1):
        if in_layer[k]:
            values[k] = layer_profile(float(t_grid[k]))
    k_star = int(np.max(np.nonzero(~in_layer)[0]))

    u = layer_profile(t_star)
    t_cur = t_star
    for k in range(k_star, -1, -1):
        t_to = float(t_grid[k])
        if t_to >= t_cur - 1e-13:
            values[k] = u
            z0_star[k] = np.full(n_s + 1, rep_lo)
            z1_star[k] = np.full(n_s + 1, rep_lo)
            z0_star[k][-1] = rep_up
            z1_star[k][-1] = rep_up
            continue
        span = t_cur - t_to
        n_sub = max(1, math.ceil(span / st.dt_target - 1e-12))
        arg = None
        u_before = None
        t_hi_last = t_cur
        for j in range(n_sub):
            t_hi = t_cur - span * j / n_sub
            t_lo = t_cur - span * (j + 1) / n_sub if j < n_sub - 1 else t_to
            last = j == n_sub - 1
            if last:
                u_before = u
                t_hi_last = t_hi
            u, arg = st.substep(u, t_lo, t_hi, want_argmax=last)
        z0f, z1f, vref = st.refine(arg, u_before, t_to, t_hi_last)
        u[1:-1] = np.maximum(u[1:-1], vref)
        values[k] = u
        z0_star[k, 1:-1] = z0f
        z1_star[k, 1:-1] = z1f
        z0_star[k, 0] = rep_lo
        z1_star[k, 0] = rep_lo
        z0_star[k, -1] = rep_up
        z1_star[k, -1] = rep_up
        t_cur = t_to
    for k in range(n_t + 1):
        if in_layer[k]:
            z0_star[k] = z0_star[k_star]
            z1_star[k] = z1_star[k_star]

    info = {
        "runtime_seconds": time.perf_counter() - t_begin,
        "substeps": st.substeps_done,
        "theta": theta,
        "control_trunc_K": st.K,
        "terminal_layer_eps": eps,
    }
    return TypeValueField(
        theta=theta, values=values, z0_star=z0_star, z1_star=z1_star,
        t_grid=t_grid, s_grid=st.s_grid, in_layer=in_layer, grid=grid,
        band=bd, t_star=t_star, info=info,
    )


def solve_screening(spec: ModelSpec, grid: GridSpec) -> ScreeningSolution:
    """Both known-type fields on a shared grid."""
    return ScreeningSolution(
        v0_field=solve_v_theta(spec, grid, 0),
        v1_field=solve_v_theta(spec, grid, 1),
    )


# ---------------------------------------------------------------------------
# static menu program


def _floors(spec: ModelSpec, reservation_mode: str) -> tuple[float, float]:
    if reservation_mode == "pooled":
        return spec.r_pooled, spec.r_pooled
    if reservation_mode == "per-type":
        return spec.r_type
    raise ConfigError(
        "reservation_mode must be 'pooled' or 'per-type'",
        field="reservation_mode",
    )


def _menu_objective(sol: ScreeningSolution, spec: ModelSpec, p0: float,
                    floors, y0c, y1c):
    """Objective at bound promises; -inf where the upper constraints fail.
    Inputs broadcast; returns (value, y0, y1)."""
    bd = sol.v0_field.band
    w_lo = bd.lower(0.0)
    w_up = bd.upper(0.0)
    f0, f1 = floors
    y0c = np.asarray(y0c, dtype=float)
    y1c = np.asarray(y1c, dtype=float)
    y0 = np.maximum(np.maximum(y0c, f0), y1c + w_lo)
    y1 = np.maximum(np.maximum(y1c, f1), y0c - w_up)
    ok = (y0 <= y1c + w_up + 1e-12) & (y1 <= y0c - w_lo + 1e-12)
    g0 = np.clip(y0 - y1c, w_lo, w_up)
    g1 = np.clip(y0c - y1, w_lo, w_up)
    disc = math.exp(spec.kappa * spec.horizon_T)
    v0 = -disc * y0 + sol.v0_field.v_at(0, g0)
    v1 = -disc * y1 + sol.v1_field.v_at(0, g1)
    val = np.where(ok, p0 * v0 + (1.0 - p0) * v1, -np.inf)
    return val, y0, y1


def v_screening(
    spec: ModelSpec,
    sol: ScreeningSolution,
    p0: float,
    reservation_mode: str = "pooled",
    n_lattice: int = _LATTICE_N,
) -> ScreenReport:
    """Menu value at one prior: lattice over the off-menu promises
    (y0c, y1c) with bound diagonal promises, then coordinate polish."""
    floors = _floors(spec, reservation_mode)
    bd = sol.v0_field.band
    span = bd.upper(0.0) - bd.lower(0.0)
    center = max(floors)
    lo = center - span - _LATTICE_PAD
    hi = center + span + _LATTICE_PAD
    ys = np.linspace(lo, hi, n_lattice)
    Y0C, Y1C = np.meshgrid(ys, ys, indexing="ij")
    vals, _, _ = _menu_objective(sol, spec, p0, floors, Y0C, Y1C)
    if not np.any(np.isfinite(vals)):
        raise SolverError("no feasible menu quadruple found")
    i, j = np.unravel_index(np.argmax(vals), vals.shape)
    best = (float(ys[i]), float(ys[j]))
    step = float(ys[1] - ys[0])

    def scalar_obj(y0c, y1c):
        v, _, _ = _menu_objective(
            sol, spec, p0, floors, np.asarray([y0c]), np.asarray([y1c])
        )
        v = float(v[0])
        return v if np.isfinite(v) else -1e30  # keep the polish arithmetic finite

    cur = scalar_obj(*best)
    for _ in range(3):
        for coord in (0, 1):
            fixed = best[1 - coord]

            def line(y):
                pt = (y, fixed) if coord == 0 else (fixed, y)
                return -scalar_obj(*pt)

            res = minimize_scalar(
                line,
                bounds=(best[coord] - 2 * step, best[coord] + 2 * step),
                method="bounded",
                options={"xatol": 1e-10},
            )
            if -res.fun > cur:
                cur = float(-res.fun)
                best = (float(res.x), fixed) if coord == 0 \
                    else (fixed, float(res.x))
    _, y0, y1 = _menu_objective(
        sol, spec, p0, floors, np.asarray([best[0]]), np.asarray([best[1]])
    )
    return ScreenReport(
        prior_p0=float(p0),
        v_screening=cur,
        argmax_quad=(float(y0[0]), float(best[1]), float(best[0]),
                     float(y1[0])),
        reservation_mode=reservation_mode,
    )


def sweep_screening(
    spec: ModelSpec,
    sol: ScreeningSolution,
    p0_list,
    reservation_mode: str = "pooled",
) -> list[ScreenReport]:
    return [
        v_screening(spec, sol, float(p0), reservation_mode) for p0 in p0_list
    ]
