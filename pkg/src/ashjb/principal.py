"""Principal's problem over the initial promise pair.

The solved gap field w(t, g, p) turns the full value into the ansatz

    V_sc(t, x, y0, y1, p) = x - (e^{kappa*(T-t)}/2) * (y0 + y1)
                              + w(t, y0 - y1, p),

so choosing the initial promises reduces to a one-dimensional search over
the gap g = y0 - y1 inside the time-zero band:

* conditional participation (y0 >= R0, y1 >= R1): at fixed g the
  sum-minimizing feasible pair is y0 = max(R0, R1 + g), y1 = y0 - g,
  leaving  f_c(g) = -(e^{kappa*T}/2)*(2*max(R0, R1+g) - g) + w(0, g, p0);

* unconditional participation (p0*y0 + (1-p0)*y1 >= R): the pooled
  constraint binds, y0 = R + (1-p0)*g, y1 = R - p0*g, leaving
  f_uc(g) = -(e^{kappa*T}/2)*(2R + (1-2p0)*g) + w(0, g, p0).

Both objectives are strictly decreasing in the promise sum, so the
eliminated coordinates bind and no tie-breaking between promise pairs is
needed. The g-search runs a dense grid plus a bounded golden-section
polish; when the objective is flat within 1e-8 * scale the report keeps
the smallest maximizing gap and flags the plateau width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError
from .hjb import ValueField
from .model import ModelSpec

_N_GRID = 2001
_PLATEAU_RTOL = 1e-8


@dataclass(frozen=True)
class PrincipalReport:
    """Values and maximizing promises at one prior (X0 = 0 convention)."""

    prior_p0: float
    v_conditional: float
    v_unconditional: float
    argmax_conditional: tuple[float, float]  # (y0, y1)
    argmax_unconditional: tuple[float, float]
    plateau_conditional: float  # width of the near-flat g-argmax set
    plateau_unconditional: float
    x0_offset_convention: float = 0.0


def value_sc(field: ValueField, t: float, x: float, y0, y1, p):
    """Full value from the ansatz at a stored time slice.

    Requires the spread y0 - y1 inside the band at t and p in [0, 1];
    interpolates w bilinearly on that slice.
    """
    t_grid = field.t_grid
    k = int(np.argmin(np.abs(t_grid - t)))
    if abs(float(t_grid[k]) - t) > 1e-9 * max(1.0, float(t_grid[-1])):
        raise DomainError(f"t={t} is not a stored time slice")
    p = np.asarray(p, dtype=float)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise DomainError("belief must lie in [0, 1]")
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    T = float(t_grid[-1])
    disc = math.exp(field.band.kappa * (T - float(t_grid[k])))
    w = field.w_at(k, y0 - y1, p)
    out = x - 0.5 * disc * (y0 + y1) + w
    return out if np.ndim(out) else float(out)


def _maximize_over_gap(field: ValueField, objective):
    """Dense-grid maximum of objective(g) over the time-zero band with a
    golden polish; returns (g*, value, plateau width). Flat stretches
    resolve to the smallest maximizing gap."""
    bd = field.band
    g_lo = bd.lower(0.0)
    g_hi = bd.upper(0.0)
    gs = np.linspace(g_lo, g_hi, _N_GRID)
    vals = objective(gs)
    best = float(np.max(vals))
    tol = _PLATEAU_RTOL * max(1.0, abs(best))
    plateau = np.nonzero(vals >= best - tol)[0]
    width = float(gs[plateau[-1]] - gs[plateau[0]])
    i = int(plateau[0])
    lo = gs[max(i - 1, 0)]
    hi = gs[min(i + 1, _N_GRID - 1)]
    res = minimize_scalar(
        lambda g: -float(objective(np.asarray([g]))[0]),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-10},
    )
    g_star, v_star = float(gs[i]), float(vals[i])
    if -res.fun > v_star:
        g_star, v_star = float(res.x), float(-res.fun)
    return g_star, v_star, width


def v_conditional(
    spec: ModelSpec, field: ValueField, p0: float
) -> tuple[float, tuple[float, float], float]:
    """Best value under per-type participation; returns
    (value, (y0, y1), plateau width)."""
    r0, r1 = spec.r_type
    disc = math.exp(spec.kappa * spec.horizon_T)

    def objective(g):
        y0 = np.maximum(r0, r1 + g)
        return -0.5 * disc * (2.0 * y0 - g) + field.w_at(0, g, p0)

    g_star, value, width = _maximize_over_gap(field, objective)
    y0 = max(r0, r1 + g_star)
    return value, (y0, y0 - g_star), width


def v_unconditional(
    spec: ModelSpec, field: ValueField, p0: float
) -> tuple[float, tuple[float, float], float]:
    """Best value under the pooled participation constraint."""
    r = spec.r_pooled
    disc = math.exp(spec.kappa * spec.horizon_T)

    def objective(g):
        return -0.5 * disc * (2.0 * r + (1.0 - 2.0 * p0) * g) \
            + field.w_at(0, g, p0)

    g_star, value, width = _maximize_over_gap(field, objective)
    return value, (r + (1.0 - p0) * g_star, r - p0 * g_star), width


def sweep_prior(
    spec: ModelSpec, field: ValueField, p0_list
) -> list[PrincipalReport]:
    """One report per prior (the field's belief axis serves all priors)."""
    out = []
    for p0 in p0_list:
        p0 = float(p0)
        vc, yc, wc = v_conditional(spec, field, p0)
        vu, yu, wu = v_unconditional(spec, field, p0)
        out.append(
            PrincipalReport(
                prior_p0=p0,
                v_conditional=vc,
                v_unconditional=vu,
                argmax_conditional=yc,
                argmax_unconditional=yu,
                plateau_conditional=wc,
                plateau_unconditional=wu,
            )
        )
    return out


def default_prior_sweep() -> np.ndarray:
    """The 19-point prior grid 0.05, 0.10, ..., 0.95."""
    return np.round(np.arange(1, 20) * 0.05, 10)
