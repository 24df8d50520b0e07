"""Dirichlet data on the credible band's walls.

While the spread rides a wall, the contract must hold the agent to an
extremal level set of the gap, so the remaining freedom is the common
sensitivity z inside that set. Writing w for the reduced value (the
interior solver's unknown) the wall data solve a 1-D problem on the belief
line p in [0, 1]:

    -d/dt omega + inf_{z in level set} { -[ 0.5 * sigma(z, p)^2 *
        d^2/dp^2 omega + ell(t, z, p) ] } = 0,      omega(T, p) = 0,

    sigma(z, p) = p * (1 - p) * (A_0(z) - A_1(z)),
    ell(t, z, p) = lam + 0.5 * exp(kappa * (T - t)) *
                   (H_0(z) + H_1(z) - 2 * z * lam),
    lam = p * A_0(z) + (1 - p) * A_1(z).

For the named preset families both best responses coincide on the extremal
level sets (saturation half-lines with common action a), so sigma vanishes,
ell is z- and p-free, and the wall data integrate in closed form:

    w(t) = a * (T - t) - (c(0, a) + c(1, a)) / (2 * kappa) *
           (exp(kappa * (T - t)) - 1),

with a = action_max on the upper wall and action_min on the lower. The
belief-diffusion term is nonetheless carried by the PDE path for custom
families whose level sets are not saturation half-lines.

Screening variants: when the principal will serve a known type theta, the
wall data become plain integrals of the best constant-control reward

    v_theta(t) = integral_t^T sup_{z in level set}
                 [ A_theta(z) - exp(kappa * (T - s)) * c(theta, A_theta(z)) ] ds,

evaluated by composite Simpson over a fixed candidate scan of the level
set (the integrand is piecewise quadratic in z on each level interval, so
a dense candidate table is exact up to O(dz^2) and exact on plateaus).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import band as band_mod
from . import model as model_mod
from .band import CredibleBand
from .errors import CflError, ConfigError
from .model import ModelSpec

_N_SCAN = 1025  # candidates per level-set interval
_MAX_SUBSTEPS = 200_000


# ---------------------------------------------------------------------------
# level-set candidate tables


def _level_candidates(intervals, n_scan: int = _N_SCAN) -> np.ndarray:
    """Dense z-candidates across an interval union; degenerate intervals
    contribute their single point."""
    zs = []
    for (l, r) in intervals:
        if r - l < 1e-14:
            zs.append(np.array([l]))
        else:
            zs.append(np.linspace(l, r, n_scan))
    return np.concatenate(zs)


def _wall_tables(spec: ModelSpec, zc: np.ndarray):
    """Per-candidate data for the wall generator: best responses, action
    mismatch, Hamiltonian sum."""
    a0 = model_mod.optimal_action(spec, 0, zc)
    a1 = model_mod.optimal_action(spec, 1, zc)
    h0 = model_mod.hamiltonian(spec, 0, zc)
    h1 = model_mod.hamiltonian(spec, 1, zc)
    return a0, a1, h0, h1


# ---------------------------------------------------------------------------
# closed forms (named presets)


def closed_form_values(spec: ModelSpec, t):
    """(wbar, wunder) on the walls for the named preset families.

    Valid exactly when the extremal level sets are saturation half-lines
    with matched best responses, which holds for 'dominated' and
    'nondominated'; custom families must use the PDE path.
    """
    if spec.cost_kind not in ("dominated", "nondominated"):
        raise ConfigError(
            "closed-form wall data exist only for the named preset families; "
            f"got cost_kind={spec.cost_kind!r} (use the PDE mode)",
            field="model.cost_kind",
        )
    t = np.asarray(t, dtype=float)
    tau = spec.horizon_T - t
    out = []
    for a in (spec.action_max, spec.action_min):
        csum = model_mod.cost(spec, 0, a) + model_mod.cost(spec, 1, a)
        w = a * tau - csum / (2.0 * spec.kappa) * np.expm1(spec.kappa * tau)
        out.append(w if w.ndim else float(w))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# BoundaryValues container


@dataclass
class BoundaryValues:
    """Wall data handed to the interior solver.

    ``wbar(t, p)`` / ``wunder(t, p)`` evaluate the upper / lower wall value
    (p may be an array; closed-form data are p-free and broadcast).
    ``screening_upper(theta, t)`` / ``screening_lower(theta, t)`` are the
    known-type wall values. ``mode`` is 'closed-form' or 'pde'.
    """

    mode: str
    band: CredibleBand
    wbar: Callable
    wunder: Callable
    screening_upper: Callable
    screening_lower: Callable
    # populated by the PDE path for inspection / convergence tests
    t_grid: np.ndarray | None = None
    p_grid: np.ndarray | None = None
    wbar_table: np.ndarray | None = None
    wunder_table: np.ndarray | None = None


def make_boundary(spec: ModelSpec, mode: str = "auto", grid=None) -> BoundaryValues:
    """Build wall data. mode: 'closed-form', 'pde', or 'auto' (closed form
    for the named presets, PDE otherwise; 'pde' requires a grid)."""
    if mode == "auto":
        mode = "closed-form" if spec.cost_kind in ("dominated", "nondominated") else "pde"
    if mode == "closed-form":
        bd = band_mod.build(spec)

        def wbar(t, p=None):
            v, _ = closed_form_values(spec, t)
            if p is None:
                return v
            return np.broadcast_to(np.asarray(v), np.shape(p)).copy() if np.ndim(p) else v

        def wunder(t, p=None):
            _, v = closed_form_values(spec, t)
            if p is None:
                return v
            return np.broadcast_to(np.asarray(v), np.shape(p)).copy() if np.ndim(p) else v

        def s_up(theta, t):
            return screening_boundary_values(spec, theta, t)[0]

        def s_lo(theta, t):
            return screening_boundary_values(spec, theta, t)[1]

        return BoundaryValues(
            mode="closed-form", band=bd, wbar=wbar, wunder=wunder,
            screening_upper=s_up, screening_lower=s_lo,
        )
    if mode == "pde":
        if grid is None:
            raise ConfigError("PDE wall mode needs a grid", field="grid")
        return boundary_pde_solve(spec, grid)
    raise ConfigError(f"unknown wall mode {mode!r}", field="boundary.mode")


# ---------------------------------------------------------------------------
# PDE path


def boundary_pde_solve(spec: ModelSpec, grid, n_scan: int = _N_SCAN) -> BoundaryValues:
    """Explicit monotone march of the wall problem on a (t, p) grid.

    Central second difference in p (the diffusion degenerates at both
    endpoints, so no lateral data are needed); the z-supremum is a max over
    the fixed candidate table; reward evaluated at the substep midpoint
    (the only time dependence is the smooth discount factor, so this lifts
    the time error to second order without touching monotonicity). The CFL
    bound dt <= dp^2 / max sigma^2 is enforced by substepping.
    """
    bd = band_mod.build(spec, z_window=getattr(grid, "control_trunc_K", None))
    n_t = int(grid.n_time)
    n_p = int(grid.n_belief)
    T = spec.horizon_T
    t_grid = np.linspace(0.0, T, n_t + 1)
    p_grid = np.linspace(0.0, 1.0, n_p + 1)
    dp = 1.0 / n_p

    tables = {}
    for name, intervals in (("upper", bd.level_upper), ("lower", bd.level_lower)):
        zc = _level_candidates(intervals, n_scan)
        a0, a1, h0, h1 = _wall_tables(spec, zc)
        lam = a0[:, None] * p_grid[None, :] + a1[:, None] * (1.0 - p_grid[None, :])
        s_part = (h0 + h1)[:, None] - 2.0 * zc[:, None] * lam
        dalpha = a0 - a1
        half_sig2 = 0.5 * (dalpha[:, None] * p_grid[None, :] * (1.0 - p_grid[None, :])) ** 2
        tables[name] = (lam, s_part, half_sig2)

    max_sig2 = max(
        float(np.max(2.0 * tab[2])) for tab in tables.values()
    )
    cfl_dt = dp * dp / max_sig2 if max_sig2 > 0.0 else math.inf
    safety = float(getattr(grid, "cfl_safety", 0.5))

    out = {}
    for name, (lam, s_part, half_sig2) in tables.items():
        u = np.zeros((n_t + 1, n_p + 1))
        for n in range(n_t, 0, -1):
            t_hi, t_lo = t_grid[n], t_grid[n - 1]
            span = t_hi - t_lo
            n_sub = max(1, math.ceil(span / (safety * cfl_dt))) if math.isfinite(cfl_dt) else 1
            if n_sub > _MAX_SUBSTEPS:
                raise CflError(
                    f"wall solve needs {n_sub} substeps per slice at "
                    f"n_belief={n_p}",
                    suggested_dt=cfl_dt,
                )
            dt = span / n_sub
            cur = u[n].copy()
            t_cur = t_hi
            for _ in range(n_sub):
                d2 = np.zeros_like(cur)
                d2[1:-1] = (cur[2:] - 2.0 * cur[1:-1] + cur[:-2]) / (dp * dp)
                disc = math.exp(spec.kappa * (T - (t_cur - 0.5 * dt)))
                gen = half_sig2 * d2[None, :] + lam + 0.5 * disc * s_part
                cur = cur + dt * np.max(gen, axis=0)
                t_cur -= dt
            u[n - 1] = cur
        out[name] = u

    wbar_t, wunder_t = out["upper"], out["lower"]

    def make_interp(table):
        def f(t, p=None):
            tq = float(t)
            k = np.searchsorted(t_grid, tq) - 1
            k = min(max(k, 0), n_t - 1)
            wgt = (tq - t_grid[k]) / (t_grid[k + 1] - t_grid[k])
            wgt = min(max(wgt, 0.0), 1.0)
            line = (1.0 - wgt) * table[k] + wgt * table[k + 1]
            if p is None:
                return line
            return np.interp(np.asarray(p, dtype=float), p_grid, line)
        return f

    def s_up(theta, t):
        return screening_boundary_values(spec, theta, t)[0]

    def s_lo(theta, t):
        return screening_boundary_values(spec, theta, t)[1]

    return BoundaryValues(
        mode="pde", band=bd,
        wbar=make_interp(wbar_t), wunder=make_interp(wunder_t),
        screening_upper=s_up, screening_lower=s_lo,
        t_grid=t_grid, p_grid=p_grid,
        wbar_table=wbar_t, wunder_table=wunder_t,
    )


# ---------------------------------------------------------------------------
# screening wall data


def _sup_reward_on(spec: ModelSpec, theta, intervals, s, n_scan: int = _N_SCAN):
    """sup over the level-set candidates of the known-type reward
    A_theta(z) - exp(kappa*(T-s)) * c(theta, A_theta(z)), vectorized in s."""
    zc = _level_candidates(intervals, n_scan)
    a = model_mod.optimal_action(spec, theta, zc)
    ca = 0.5 * spec.curvature[theta] * a * a + spec.linear[theta] * a
    disc = np.exp(spec.kappa * (spec.horizon_T - np.asarray(s, dtype=float)))
    vals = a[:, None] - disc[None, :] * ca[:, None] if np.ndim(disc) else a - disc * ca
    return np.max(vals, axis=0)


def screening_boundary_values(
    spec: ModelSpec, theta, t, n_quad: int = 400, n_scan: int = _N_SCAN
):
    """(v_upper, v_lower): known-type wall values at time t.

    Composite Simpson of the best level-set reward over [t, T]; the
    subinterval count is held even and scales with the remaining horizon.
    """
    bd = band_mod.build(spec)
    t = float(t)
    if t >= spec.horizon_T:
        return 0.0, 0.0
    n = max(2, 2 * math.ceil(n_quad * (spec.horizon_T - t) / spec.horizon_T / 2))
    s = np.linspace(t, spec.horizon_T, n + 1)
    h = (spec.horizon_T - t) / n
    weights = np.ones(n + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    out = []
    for intervals in (bd.level_upper, bd.level_lower):
        f = _sup_reward_on(spec, theta, intervals, s, n_scan)
        out.append(float(h / 3.0 * np.dot(weights, f)))
    return out[0], out[1]
