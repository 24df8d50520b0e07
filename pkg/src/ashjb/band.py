"""Credible band of continuation-value spreads.

Write g = y_0 - y_1 for the spread between the two types' continuation
values. A contract is credible only while g stays inside the moving strip

    W_lower(t) <= g <= W_upper(t),
    W(t; a) = (a / kappa) * (1 - exp(-kappa * (T - t))),

driven by the extremal gap values a_lower = inf gap, a_upper = sup gap.
Both walls solve the linear ODE kappa * W - W' = a with W(T) = 0, collapse
at the horizon, and satisfy the width identity

    kappa * h - h' = a_upper - a_lower,   h = W_upper - W_lower,

which the interior solver leans on when it rescales the strip to [0, 1].

The extremal level sets {z : gap(z) = a_upper} and {z : gap(z) = a_lower},
intersected with a finite control window, are the admissible boundary
controls: on them the two types' best responses agree for the parametric
families, so the belief is frozen while the spread rides a wall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model as _model
from .errors import DomainError
from .model import ModelSpec


@dataclass(frozen=True)
class CredibleBand:
    """Band data: extremal gaps, dynamics constants, boundary level sets.

    ``level_lower`` / ``level_upper`` are interval unions (lists of
    (z_lo, z_hi) pairs, possibly degenerate points) inside the window
    [-z_window, z_window] used to build them.
    """

    a_lower: float
    a_upper: float
    kappa: float
    horizon_T: float
    level_lower: tuple[tuple[float, float], ...]
    level_upper: tuple[tuple[float, float], ...]
    z_window: float

    # -- wall evaluation -------------------------------------------------

    def _check_t(self, t):
        t = np.asarray(t, dtype=float)
        tol = 1e-9 * max(1.0, self.horizon_T)
        if np.any(t < -tol) or np.any(t > self.horizon_T + tol):
            raise DomainError(f"time outside [0, {self.horizon_T}]")
        return np.clip(t, 0.0, self.horizon_T)

    def lower(self, t):
        t = self._check_t(t)
        out = (self.a_lower / self.kappa) * (-np.expm1(-self.kappa * (self.horizon_T - t)))
        return out if out.ndim else float(out)

    def upper(self, t):
        t = self._check_t(t)
        out = (self.a_upper / self.kappa) * (-np.expm1(-self.kappa * (self.horizon_T - t)))
        return out if out.ndim else float(out)

    def width(self, t):
        t = self._check_t(t)
        out = ((self.a_upper - self.a_lower) / self.kappa) * (
            -np.expm1(-self.kappa * (self.horizon_T - t))
        )
        return out if out.ndim else float(out)

    def lower_rate(self, t):
        """d/dt W_lower = kappa * W_lower - a_lower."""
        t = self._check_t(t)
        out = -self.a_lower * np.exp(-self.kappa * (self.horizon_T - t))
        return out if out.ndim else float(out)

    def upper_rate(self, t):
        t = self._check_t(t)
        out = -self.a_upper * np.exp(-self.kappa * (self.horizon_T - t))
        return out if out.ndim else float(out)

    def contains(self, t, g, slack: float = 0.0):
        """Membership of a spread g in the band at time t (with slack)."""
        lo = self.lower(t)
        hi = self.upper(t)
        g = np.asarray(g, dtype=float)
        out = (g >= lo - slack) & (g <= hi + slack)
        return out if out.ndim else bool(out)


def extremal_gaps(spec: ModelSpec) -> tuple[float, float]:
    """(a_lower, a_upper): exact range of the gap over all sensitivities."""
    return _model._extremal_gap_values(spec)


def level_sets(
    spec: ModelSpec, z_window: float | None = None
) -> tuple[tuple[tuple[float, float], ...], tuple[tuple[float, float], ...], float]:
    """Extremal level sets of the gap inside [-z_window, z_window].

    Defaults the window to twice the saturation threshold, which always
    contains a stretch of both saturation half-lines. Returns
    (level_lower, level_upper, z_window_used).
    """
    if z_window is None:
        z_window = 2.0 * _model.saturation_threshold(spec)
    lo, hi = _model._extremal_gap_values(spec)
    win = (-float(z_window), float(z_window))
    low = _model.gap_level_set(spec, lo, win)
    up = _model.gap_level_set(spec, hi, win)
    if not low or not up:
        raise DomainError(
            f"control window [-{z_window}, {z_window}] misses an extremal "
            "level set; widen it beyond the saturation threshold "
            f"{_model.saturation_threshold(spec)}"
        )
    return tuple(low), tuple(up), float(z_window)


def build(spec: ModelSpec, z_window: float | None = None) -> CredibleBand:
    """Assemble the credible band for a model."""
    a_lo, a_hi = extremal_gaps(spec)
    low, up, win = level_sets(spec, z_window)
    return CredibleBand(
        a_lower=a_lo,
        a_upper=a_hi,
        kappa=spec.kappa,
        horizon_T=spec.horizon_T,
        level_lower=low,
        level_upper=up,
        z_window=win,
    )


def representative_controls(band: CredibleBand) -> tuple[float, float]:
    """Canonical boundary controls (z_low, z_up): the least-|z| point of
    each extremal level set. Ties inside an interval resolve toward the
    smallest |z|, then the smallest z — the least volatile representative,
    used when a simulated path is frozen on a wall."""

    def pick(intervals):
        best = None
        for (l, r) in intervals:
            z = l if l > 0.0 else (r if r < 0.0 else 0.0)
            if best is None or (abs(z), z) < (abs(best), best):
                best = z
        return best

    return pick(band.level_lower), pick(band.level_upper)
