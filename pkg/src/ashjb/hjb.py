"""Reduced state-constrained HJB on the credible strip.

After stripping the principal's cash account and the discounted sum of
promises, the remaining unknown is w(t, g, p): g = y_0 - y_1 the spread
inside the credible band, p the posterior weight on type 0. With controls
(z_0, z_1) in a truncation square [-K, K]^2 the generator acting on a test
function (gradient q in g, Hessian N over (g, p)) is

    L(t, g, p; q, N; z_0, z_1) =
        [ -H_0(z_0) + H_1(z_1) + kappa*g + lam*zeta ] * q
        + 0.5 * ( zeta^2 * N_gg + 2*zeta*mu*N_gp + mu^2 * N_pp )
        + ell(t, z_0, z_1, p),

    zeta = z_0 - z_1,     mu = p*(1-p)*(A_0(z_0) - A_1(z_1)),
    lam  = p*A_0(z_0) + (1-p)*A_1(z_1),
    ell  = lam + 0.5*exp(kappa*(T-t)) * (H_0(z_0) + H_1(z_1) - lam*(z_0+z_1)),

and w solves -dw/dt + inf_z { -L } = 0 with Dirichlet wall data and the
terminal collapse w(T, 0, p) = 0. The noise is rank one: a single Brownian
shock moves (g, p) along Sigma = (zeta, mu).

Discretization. The strip is rescaled to s = (g - W_lower(t)) / width(t)
in [0, 1] and marched backward with a semi-Lagrangian monotone update:

    u(t-dt, node) = max over the control lattice of
        dt * ell + 0.5 * [ U(probe+) + U(probe-) ],

where the probes displace the node along the exact characteristic by
drift*dt +- Sigma*sqrt(dt) (both coordinates share the sign — the noise is
one-dimensional) and U evaluates the t-slice by bilinear interpolation,
extended by the wall data wherever a probe leaves the strip — the exit
semantics of the absorbed diffusion. All weights are nonnegative and sum
to one, so the scheme is monotone for every dt; the substep size
cfl_safety * min(ds, dp) is an accuracy knob, not a stability bound. The
probe displacement sqrt(dt)*|Sigma| is exactly the widest stencil a
CFL-stable explicit second difference could use; a fixed-width stencil
would force dt ~ (width(t)*ds/K)^2 near the collapse, which is
unworkable.

Band geometry is applied exactly: with nodes at t-dt and probes at t,

    s_probe = s * [h(t-dt)*(1+kappa*dt) / h(t)]
              + [ W_lower(t-dt)*(1+kappa*dt) - W_lower(t)
                  + D*dt +- zeta*sqrt(dt) ] / h(t),
    D = -H_0(z_0) + H_1(z_1) + lam*zeta,

using closed-form wall curves, so no geometric drift error accumulates.

Tilted unknown. The march itself runs in

    w_hat(t, s, p) = w + (p - 1/2) * exp(kappa*(T-t)) * g(t, s),

whose running reward collapses to lam - exp(kappa*(T-t)) * [p*c_0(A_0(z_0))
+ (1-p)*c_1(A_1(z_1))]: payout rate minus the discounted mixture of
realized action costs, O(1) uniformly over the control lattice. In the raw
unknown the reward carries a large control-linear term that cancels
against the transport of the tilt only in the continuum; interpolation and
wall substitution break the cancellation, and the remainder decays like
sqrt(dt) with a constant proportional to that term. The tilt is bilinear
in (g, p) with closed-form wall and terminal data, so marching w_hat and
subtracting the tilt on stored slices changes the limit by nothing while
removing the error channel; at p = 1 (resp. p = 0) the tilted reward,
drift, and wall data coincide with the single-known-type problem.

Terminal layer: the strip degenerates at T, so the march starts at
t* = T - terminal_layer_eps from the a-priori profile u = -g^2 (accurate
to O(eps) by the envelope below); slices beyond t* are filled with that
profile and flagged. The induced bias is certified by
max(|C_upper|, |C_lower|) * eps, reported in the solve info.

A-priori envelope: with B = |a_lower| + |a_upper| and C, N_0 the growth
constants of the cost family,

    phi = C_upper*(T-t) - g^2   is a strict supersolution (margin >= 1),
    psi = C_lower*(T-t) - g^2   a strict subsolution   (margin <= -1),

on |g| <= B*(T-t), where C_upper / C_lower follow the explicit recipe in
``apriori_constants`` (the supersolution coefficient keeps the
conservative quadratic-completion form, so the margin bound is uniform in
the control). ``check_apriori`` verifies the solved field sits inside the
envelope; ``residual_probe`` evaluates the generator exactly on those test
functions at random nodes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import band as band_mod
from . import model as model_mod
from .band import CredibleBand
from .boundary import BoundaryValues
from .errors import CflError, ConfigError, DomainError, SolverError
from .model import ModelSpec

_MAX_TOTAL_SUBSTEPS = 2_000_000
_PAIR_CHUNK = 256
_REFINE_ITERS = 20


@dataclass(frozen=True)
class GridSpec:
    """Discretization parameters for the interior solve.

    ``control_trunc_K = None`` derives K = saturation threshold + 1 from
    the model at solve time. ``terminal_layer_eps`` is the width of the
    unsolved layer below the horizon; ``cfl_safety`` scales the substep
    target cfl_safety * min(ds, dp).
    """

    n_time: int = 100
    n_gap: int = 80
    n_belief: int = 40
    control_trunc_K: float | None = None
    n_control: int = 41
    terminal_layer_eps: float = 0.005
    cfl_safety: float = 0.5

    def __post_init__(self):
        if self.n_time < 1:
            raise ConfigError("n_time must be >= 1", field="grid.n_time")
        if self.n_gap < 8:
            raise ConfigError("n_gap must be >= 8", field="grid.n_gap")
        if self.n_belief < 8:
            raise ConfigError("n_belief must be >= 8", field="grid.n_belief")
        if self.n_control < 3:
            raise ConfigError("n_control must be >= 3", field="grid.n_control")
        if self.control_trunc_K is not None and not (self.control_trunc_K > 0):
            raise ConfigError(
                "control_trunc_K must be positive", field="grid.control_trunc_K"
            )
        if not (self.terminal_layer_eps > 0):
            raise ConfigError(
                "terminal_layer_eps must be positive", field="grid.terminal_layer_eps"
            )
        if not (0.0 < self.cfl_safety <= 1.0):
            raise ConfigError("cfl_safety must lie in (0, 1]", field="grid.cfl_safety")

    def substep_target(self) -> float:
        """Target substep length cfl_safety * min(ds, dp)."""
        return self.cfl_safety * min(1.0 / self.n_gap, 1.0 / self.n_belief)

    def resolve_K(self, spec: ModelSpec) -> float:
        c0 = model_mod.saturation_threshold(spec)
        K = self.control_trunc_K if self.control_trunc_K is not None else c0 + 1.0
        if not K > c0:
            raise ConfigError(
                f"control_trunc_K={K} must exceed the saturation threshold {c0:.6g}",
                field="grid.control_trunc_K",
            )
        return float(K)

    def validate_for(self, spec: ModelSpec) -> None:
        self.resolve_K(spec)
        if not (self.terminal_layer_eps < spec.horizon_T / 10.0):
            raise ConfigError(
                f"terminal_layer_eps={self.terminal_layer_eps} must be below "
                f"horizon_T/10 = {spec.horizon_T / 10.0}",
                field="grid.terminal_layer_eps",
            )


@dataclass
class ValueField:
    """Solved reduced value on the rescaled grid.

    ``values[k, i, j]`` is w at (t_k, s_i, p_j); lateral rows i = 0 and
    i = n_gap hold the Dirichlet wall data exactly. Slices with
    ``in_layer[k]`` true lie inside the terminal layer and carry the
    profile -g^2 instead of solved values.
    """

    values: np.ndarray  # (n_time+1, n_gap+1, n_belief+1)
    t_grid: np.ndarray
    s_grid: np.ndarray
    p_grid: np.ndarray
    in_layer: np.ndarray  # (n_time+1,) bool
    grid: GridSpec
    band: CredibleBand
    t_star: float
    info: dict = dc_field(default_factory=dict)

    def y_nodes(self, k: int) -> np.ndarray:
        """Physical spread coordinates of slice k."""
        t = float(self.t_grid[k])
        return self.band.lower(t) + self.s_grid * self.band.width(t)

    def slice_interp(self, k: int, s, p):
        """Bilinear interpolation of slice k at rescaled coordinates."""
        u = self.values[k]
        s = np.asarray(s, dtype=float)
        p = np.asarray(p, dtype=float)
        n_s = len(self.s_grid) - 1
        n_p = len(self.p_grid) - 1
        x = np.clip(s, 0.0, 1.0) * n_s
        ypos = np.clip(p, 0.0, 1.0) * n_p
        i0 = np.clip(np.floor(x).astype(np.int64), 0, n_s - 1)
        j0 = np.clip(np.floor(ypos).astype(np.int64), 0, n_p - 1)
        ws = x - i0
        wp = ypos - j0
        v = (
            (1 - ws) * (1 - wp) * u[i0, j0]
            + ws * (1 - wp) * u[i0 + 1, j0]
            + (1 - ws) * wp * u[i0, j0 + 1]
            + ws * wp * u[i0 + 1, j0 + 1]
        )
        return v if v.ndim else float(v)

    def w_at(self, k: int, g, p):
        """w at physical spread g (must lie in the band at t_k)."""
        t = float(self.t_grid[k])
        g = np.asarray(g, dtype=float)
        h = self.band.width(t)
        lo = self.band.lower(t)
        slack = 1e-9 * max(1.0, h)
        if np.any(g < lo - slack) or np.any(g > lo + h + slack):
            raise DomainError(f"spread outside the credible band at t={t}")
        if h <= slack:  # collapsed band at the horizon
            return self.slice_interp(k, np.zeros_like(g), p)
        return self.slice_interp(k, (g - lo) / h, p)


@dataclass
class PolicyField:
    """Argmax controls per node; ``boundary_flag`` is 0 interior, 1 lower
    wall, 2 upper wall. In-layer slices copy the first solved slice."""

    z0_star: np.ndarray
    z1_star: np.ndarray
    boundary_flag: np.ndarray  # int8, same shape as the value array
    in_layer: np.ndarray
    rep_lower: float
    rep_upper: float


@dataclass
class AprioriReport:
    passed: bool
    worst_below: float  # most negative (w - lower envelope); >= -slack to pass
    worst_above: float  # most positive (w - upper envelope); <= slack to pass
    slack_interior: float
    slack_layer: float
    c_upper: float
    c_lower: float


@dataclass
class ResidualReport:
    which: str
    passed: bool
    worst_margin: float
    margins: np.ndarray
    nodes: np.ndarray  # (n, 3) rows of (t, g, p)
    threshold: float


# ---------------------------------------------------------------------------
# generator


def _as_hessian(N):
    if np.ndim(N) == 0:
        return float(N), 0.0, 0.0
    N = np.asarray(N, dtype=float)
    return float(N[0, 0]), float(N[0, 1]), float(N[1, 1])


def generator_eval(spec: ModelSpec, t, y, p, q, N, z0, z1):
    """L applied to a test function with spread-gradient q and Hessian N
    over (spread, belief) at controls (z0, z1); scalar N is read as the
    pure spread entry."""
    n_gg, n_gp, n_pp = _as_hessian(N)
    a0 = model_mod.optimal_action(spec, 0, z0)
    a1 = model_mod.optimal_action(spec, 1, z1)
    h0 = model_mod.hamiltonian(spec, 0, z0)
    h1 = model_mod.hamiltonian(spec, 1, z1)
    z0 = np.asarray(z0, dtype=float)
    z1 = np.asarray(z1, dtype=float)
    zeta = z0 - z1
    lam = p * a0 + (1.0 - p) * a1
    mu = p * (1.0 - p) * (a0 - a1)
    drift = -h0 + h1 + spec.kappa * y + lam * zeta
    quad = 0.5 * (zeta * zeta * n_gg + 2.0 * zeta * mu * n_gp + mu * mu * n_pp)
    disc = np.exp(spec.kappa * (spec.horizon_T - t))
    ell = lam + 0.5 * disc * (h0 + h1 - lam * (z0 + z1))
    out = drift * q + quad + ell
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# a-priori envelope


def apriori_constants(spec: ModelSpec) -> tuple[float, float, float]:
    """(C_upper, C_lower, B) for the envelope test functions.

    B = |a_lower| + |a_upper| bounds |g| / (T-t) on the band. C_upper uses
    the conservative quadratic completion (no curvature credit), making
    the supersolution margin >= 1 uniform over all controls; C_lower
    delivers margin <= -1 at the zero control pair.
    """
    sc = model_mod.structural_constants(spec)
    B = abs(sc.gap_lower) + abs(sc.gap_upper)
    C = sc.c_growth
    N0 = sc.n0_growth
    T = spec.horizon_T
    e = math.exp(spec.kappa * T)
    c_up = (
        (C + N0) ** 2 * B * B * T * T
        + (2.0 * C + 0.5 * (C + N0) * C * e) * B * T
        + 0.5 * C * e
        + (C * C / 16.0) * e * e
        + N0
        + 1.0
    )
    c_lo = -(
        2.0 * spec.kappa * B * B * T * T
        + 2.0 * C * B * T
        + 0.5 * e * C
        + N0
        + 1.0
    )
    return c_up, c_lo, B


# ---------------------------------------------------------------------------
# interior solver internals


def _control_tables(spec: ModelSpec, z_grid: np.ndarray, p_grid: np.ndarray):
    """Time-independent coefficient tables over (pair, belief)."""
    a0 = model_mod.optimal_action(spec, 0, z_grid)
    a1 = model_mod.optimal_action(spec, 1, z_grid)
    h0 = model_mod.hamiltonian(spec, 0, z_grid)
    h1 = model_mod.hamiltonian(spec, 1, z_grid)
    n = len(z_grid)
    Z0 = np.repeat(z_grid, n)
    Z1 = np.tile(z_grid, n)
    A0 = np.repeat(a0, n)
    A1 = np.tile(a1, n)
    H0 = np.repeat(h0, n)
    H1 = np.tile(h1, n)
    zeta = Z0 - Z1
    p = p_grid[None, :]
    lam = A0[:, None] * p + A1[:, None] * (1.0 - p)  # (M, J)
    D = (-H0 + H1)[:, None] + lam * zeta[:, None]
    # z*A - H = c(theta, A(z)), the realized cost of the induced action
    cost = (Z0 * A0 - H0)[:, None] * p + (Z1 * A1 - H1)[:, None] * (1.0 - p)
    mu = (A0 - A1)[:, None] * (p * (1.0 - p))
    return {"Z0": Z0, "Z1": Z1, "zeta": zeta, "lam": lam, "D": D,
            "cost": cost, "mu": mu}


def _wall_values(bvals: BoundaryValues, t: float, p_pr):
    """Wall data at probe beliefs; scalars in closed-form mode."""
    if bvals.mode == "closed-form":
        return float(bvals.wunder(t)), float(bvals.wbar(t))
    return bvals.wunder(t, p_pr), bvals.wbar(t, p_pr)


def band_geometry(band: CredibleBand, kappa: float, T: float,
                  t_lo: float, t_hi: float):
    """Exact discrete band map for one backward substep: probes sit at
    t_hi, nodes at t_lo, and

        s_probe = slope * s_node + base + (displacement at t_hi) / h_hi

    with slope/base built from the closed-form wall curves so the strip
    rescaling accumulates no geometric drift error. Returns
    (dt, sqrt(dt), h_hi, slope, base, midpoint discount)."""
    dt = t_hi - t_lo
    h_hi = band.width(t_hi)
    slope = band.width(t_lo) * (1.0 + kappa * dt) / h_hi
    base = (band.lower(t_lo) * (1.0 + kappa * dt) - band.lower(t_hi)) / h_hi
    disc = math.exp(kappa * (T - 0.5 * (t_hi + t_lo)))
    return dt, math.sqrt(dt), h_hi, slope, base, disc


def _extended_eval(u, s_hi, p_pr, wu_val, wb_val, n_s, n_p):
    """Evaluate the belief-major slice ``u`` (shape (n_p+1, n_s+1))
    bilinearly at (s_hi, p_pr); probes outside [0, 1] in s read the wall
    data instead. ``wu_val`` / ``wb_val`` broadcast against
    s_hi[..., drop last axis]."""
    x = np.clip(s_hi, 0.0, 1.0) * n_s
    i0 = np.clip(np.floor(x).astype(np.int64), 0, n_s - 1)
    ws = x - i0
    ypos = p_pr * n_p
    j0 = np.clip(np.floor(ypos).astype(np.int64), 0, n_p - 1)
    wp = (ypos - j0)[..., None]
    line = u[j0]  # (..., n_s+1)
    line = line + wp * (u[j0 + 1] - line)
    v0 = np.take_along_axis(line, i0, axis=-1)
    v1 = np.take_along_axis(line, i0 + 1, axis=-1)
    val = v0 + ws * (v1 - v0)
    wu_b = np.asarray(wu_val)[..., None] if np.ndim(wu_val) else wu_val
    wb_b = np.asarray(wb_val)[..., None] if np.ndim(wb_val) else wb_val
    val = np.where(s_hi <= 0.0, wu_b, val)
    val = np.where(s_hi >= 1.0, wb_b, val)
    return val


class _Stepper:
    """One backward march of the interior problem in the tilted unknown
    (module notes); holds the geometry, control tables, wall data, and a
    preallocated buffer pool (the probe sweep is memory-bound, so every
    (chunk, belief, gap) temporary is reused across substeps)."""

    def __init__(self, spec: ModelSpec, grid: GridSpec, bvals: BoundaryValues):
        grid.validate_for(spec)
        self.spec = spec
        self.grid = grid
        self.bvals = bvals
        self.bd = bvals.band
        self.K = grid.resolve_K(spec)
        self.n_s = grid.n_gap
        self.n_p = grid.n_belief
        self.s_grid = np.linspace(0.0, 1.0, self.n_s + 1)
        self.p_grid = np.linspace(0.0, 1.0, self.n_p + 1)
        self.z_grid = np.linspace(-self.K, self.K, grid.n_control)
        self.tab = _control_tables(spec, self.z_grid, self.p_grid)
        self.M = len(self.tab["Z0"])
        self.dt_target = grid.substep_target()
        self.substeps_done = 0
        mc = min(_PAIR_CHUNK, self.M)
        shape = (mc, self.n_p + 1, self.n_s + 1)
        self._bs = np.empty(shape)
        self._bw = np.empty(shape)
        self._v0 = np.empty(shape)
        self._v1 = np.empty(shape)
        self._acc = np.empty(shape)
        self._i0 = np.empty(shape, dtype=np.int64)
        self._flat = np.empty(shape, dtype=np.int64)
        self._mlo = np.empty(shape, dtype=bool)
        self._mhi = np.empty(shape, dtype=bool)

    def _geometry(self, t_lo: float, t_hi: float):
        return band_geometry(
            self.bd, self.spec.kappa, self.spec.horizon_T, t_lo, t_hi
        )

    def tilt(self, t: float) -> np.ndarray:
        """(p - 1/2) * exp(kappa*(T-t)) * g(t, s), belief-major (J, I)."""
        g = self.bd.lower(t) + self.s_grid * self.bd.width(t)
        d = math.exp(self.spec.kappa * (self.spec.horizon_T - t))
        return (self.p_grid[:, None] - 0.5) * (d * g)[None, :]

    def _wall_tilt(self, t: float, p_pr):
        """Tilt values on the two walls at probe beliefs: (lower, upper)."""
        shift = (np.asarray(p_pr) - 0.5) * math.exp(
            self.spec.kappa * (self.spec.horizon_T - t)
        )
        return shift * self.bd.lower(t), shift * self.bd.upper(t)

    def substep(self, u, t_lo: float, t_hi: float, want_argmax: bool):
        """One monotone update of the tilted unknown from the slice u at
        t_hi down to t_lo. Returns (u_new, argmax pair index or None),
        belief-major arrays."""
        dt, sqdt, h_hi, slope, base, disc = self._geometry(t_lo, t_hi)
        tab = self.tab
        n_s, n_p = self.n_s, self.n_p
        row_len = n_s + 1
        u = np.ascontiguousarray(u)
        u_flat = u.ravel()
        best = np.full((n_p + 1, n_s + 1), -np.inf)
        best_idx = (
            np.zeros((n_p + 1, n_s + 1), dtype=np.int64) if want_argmax else None
        )
        for c0 in range(0, self.M, _PAIR_CHUNK):
            c1 = min(c0 + _PAIR_CHUNK, self.M)
            n = c1 - c0
            D = tab["D"][c0:c1]
            zeta = tab["zeta"][c0:c1]
            mu = tab["mu"][c0:c1]
            bs = self._bs[:n]
            bw = self._bw[:n]
            v0 = self._v0[:n]
            v1 = self._v1[:n]
            acc = self._acc[:n]
            i0 = self._i0[:n]
            flat = self._flat[:n]
            mlo = self._mlo[:n]
            mhi = self._mhi[:n]
            for sign in (1.0, -1.0):
                off = base + (D * dt + sign * zeta[:, None] * sqdt) / h_hi
                np.multiply(self.s_grid[None, None, :], slope, out=bs)
                bs += off[:, :, None]
                np.less_equal(bs, 0.0, out=mlo)
                np.greater_equal(bs, 1.0, out=mhi)
                np.clip(bs, 0.0, 1.0, out=bs)
                bs *= n_s
                np.floor(bs, out=bw)
                np.copyto(i0, bw, casting="unsafe")
                np.minimum(i0, n_s - 1, out=i0)
                np.subtract(bs, i0, out=bw)  # ws
                p_pr = np.clip(self.p_grid[None, :] + sign * mu * sqdt, 0.0, 1.0)
                pj = p_pr * n_p
                j0 = np.minimum(pj.astype(np.int64), n_p - 1)
                wp = pj - j0
                np.multiply(j0[:, :, None], row_len, out=flat)
                flat += i0
                np.take(u_flat, flat, out=v0, mode="clip")
                flat += 1
                np.take(u_flat, flat, out=v1, mode="clip")
                v1 -= v0
                v1 *= bw
                v0 += v1  # row j0, s-blended
                flat += row_len - 1
                np.take(u_flat, flat, out=v1, mode="clip")
                flat += 1
                np.take(u_flat, flat, out=bs, mode="clip")  # bs free: reuse
                bs -= v1
                bs *= bw
                v1 += bs  # row j0+1, s-blended
                v1 -= v0
                v1 *= wp[:, :, None]
                v0 += v1  # p-blended value
                wu_v, wb_v = _wall_values(self.bvals, t_hi, p_pr)
                tu, tb = self._wall_tilt(t_hi, p_pr)
                np.copyto(v0, (wu_v + tu)[:, :, None], where=mlo)
                np.copyto(v0, (wb_v + tb)[:, :, None], where=mhi)
                if sign > 0:
                    np.copyto(acc, v0)
                else:
                    acc += v0
            acc *= 0.5
            ell = tab["lam"][c0:c1] - disc * tab["cost"][c0:c1]
            np.add(acc, (dt * ell)[:, :, None], out=acc)
            if want_argmax:
                idx = np.argmax(acc, axis=0)  # (J, I)
                cmax = np.take_along_axis(acc, idx[None], axis=0)[0]
                upd = cmax > best
                best_idx = np.where(upd, idx + c0, best_idx)
                best = np.where(upd, cmax, best)
            else:
                np.maximum(best, acc.max(axis=0), out=best)
        wu_v, wb_v = _wall_values(self.bvals, t_lo, self.p_grid)
        tu, tb = self._wall_tilt(t_lo, self.p_grid)
        best[:, 0] = wu_v + tu
        best[:, -1] = wb_v + tb
        self.substeps_done += 1
        return best, best_idx

    def eval_nodes(self, z0f, z1f, pj, si, u, t_lo: float, t_hi: float):
        """The same update value for per-node control pairs (flat arrays)."""
        dt, sqdt, h_hi, slope, base, disc = self._geometry(t_lo, t_hi)
        spec = self.spec
        a0 = model_mod.optimal_action(spec, 0, z0f)
        a1 = model_mod.optimal_action(spec, 1, z1f)
        h0 = model_mod.hamiltonian(spec, 0, z0f)
        h1 = model_mod.hamiltonian(spec, 1, z1f)
        zeta = z0f - z1f
        lam = pj * a0 + (1.0 - pj) * a1
        mu = pj * (1.0 - pj) * (a0 - a1)
        D = -h0 + h1 + lam * zeta
        ell = lam - disc * (
            pj * (z0f * a0 - h0) + (1.0 - pj) * (z1f * a1 - h1)
        )
        acc = 0.0
        for sign in (1.0, -1.0):
            s_hi = slope * si + base + (D * dt + sign * zeta * sqdt) / h_hi
            p_pr = np.clip(pj + sign * mu * sqdt, 0.0, 1.0)
            x = np.clip(s_hi, 0.0, 1.0) * self.n_s
            i0 = np.clip(np.floor(x).astype(np.int64), 0, self.n_s - 1)
            ws = x - i0
            ypos = p_pr * self.n_p
            j0 = np.clip(np.floor(ypos).astype(np.int64), 0, self.n_p - 1)
            wp = ypos - j0
            v = (
                (1 - ws) * (1 - wp) * u[j0, i0]
                + ws * (1 - wp) * u[j0, i0 + 1]
                + (1 - ws) * wp * u[j0 + 1, i0]
                + ws * wp * u[j0 + 1, i0 + 1]
            )
            wu_v, wb_v = _wall_values(self.bvals, t_hi, p_pr)
            tu, tb = self._wall_tilt(t_hi, p_pr)
            v = np.where(s_hi <= 0.0, wu_v + tu, v)
            v = np.where(s_hi >= 1.0, wb_v + tb, v)
            acc = acc + v
        return dt * ell + 0.5 * acc

    def refine(self, arg_idx, u_prev, t_lo: float, t_hi: float):
        """Coordinate-descent polish of the lattice argmax on interior
        nodes. Returns (z0, z1, value) arrays over flat interior nodes,
        ordered belief-major (j outer, i inner over 1..n_s-1)."""
        jj, ii = np.meshgrid(
            np.arange(self.n_p + 1), np.arange(1, self.n_s), indexing="ij"
        )
        jj = jj.ravel()
        ii = ii.ravel()
        pj = self.p_grid[jj]
        si = self.s_grid[ii]
        flat = arg_idx[:, 1:-1].ravel()
        z0 = self.tab["Z0"][flat].copy()
        z1 = self.tab["Z1"][flat].copy()
        best = self.eval_nodes(z0, z1, pj, si, u_prev, t_lo, t_hi)
        dz = (self.z_grid[1] - self.z_grid[0]) * 0.5
        for _ in range(_REFINE_ITERS):
            for arr in (z0, z1):
                for sgn in (1.0, -1.0):
                    old = arr.copy()
                    np.clip(arr + sgn * dz, -self.K, self.K, out=arr)
                    trial = self.eval_nodes(z0, z1, pj, si, u_prev, t_lo, t_hi)
                    worse = trial <= best
                    arr[worse] = old[worse]
                    np.maximum(best, trial, out=best)
            dz *= 0.6
        return z0, z1, best


def solve_interior(
    spec: ModelSpec, grid: GridSpec, bvals: BoundaryValues
) -> tuple[ValueField, PolicyField]:
    """Backward march from the terminal layer to t = 0.

    The march advances the tilted unknown (module notes) and subtracts
    the tilt on stored slices, so the returned field holds w itself.
    Returns the value field and the policy (lattice argmax polished by
    coordinate descent at each stored slice; wall rows carry the
    representative level-set controls)."""
    t_begin = time.perf_counter()
    grid.validate_for(spec)
    T = spec.horizon_T
    eps = grid.terminal_layer_eps
    t_star = T - eps
    n_t = grid.n_time

    est_total = int(t_star / grid.substep_target()) + n_t + 2
    if est_total > _MAX_TOTAL_SUBSTEPS:
        raise CflError(
            f"interior march would need ~{est_total} substeps",
            suggested_dt=grid.substep_target(),
        )

    st = _Stepper(spec, grid, bvals)
    bd = st.bd
    t_grid = np.linspace(0.0, T, n_t + 1)

    n_s, n_p = st.n_s, st.n_p
    rep_lo, rep_up = band_mod.representative_controls(bd)

    values = np.empty((n_t + 1, n_s + 1, n_p + 1))
    z0_star = np.empty_like(values)
    z1_star = np.empty_like(values)
    bflag = np.zeros(values.shape, dtype=np.int8)
    bflag[:, 0, :] = 1
    bflag[:, -1, :] = 2
    in_layer = t_grid > t_star + 1e-12 * T

    def layer_profile(t):
        y = bd.lower(t) + st.s_grid * bd.width(t)
        out = np.tile(-(y * y)[:, None], (1, n_p + 1))
        wu, wb = _wall_values(bvals, float(t), st.p_grid)
        out[0, :] = wu
        out[-1, :] = wb
        return out

    for k in range(n_t + 1):
        if in_layer[k]:
            values[k] = layer_profile(t_grid[k])

    k_star = int(np.max(np.nonzero(~in_layer)[0]))

    # march state: tilted unknown, belief-major (J, I); stored slices
    # subtract the tilt so the field holds w itself
    u_cur = layer_profile(t_star).T + st.tilt(t_star)
    t_cur = t_star

    for k in range(k_star, -1, -1):
        t_to = float(t_grid[k])
        if t_to >= t_cur - 1e-13:
            # slice coincides with the layer start: store as-is
            values[k] = (u_cur - st.tilt(t_to)).T
            z0k = np.full((n_s + 1, n_p + 1), rep_lo)
            z1k = np.full((n_s + 1, n_p + 1), rep_lo)
            z0k[-1, :] = rep_up
            z1k[-1, :] = rep_up
            z0_star[k] = z0k
            z1_star[k] = z1k
            continue
        span = t_cur - t_to
        n_sub = max(1, math.ceil(span / st.dt_target - 1e-12))
        u = u_cur
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
        # polish the slice's argmax and lift the value where it improves
        z0f, z1f, vref = st.refine(arg, u_before, t_to, t_hi_last)
        interior = vref.reshape(n_p + 1, n_s - 1)
        u[:, 1:-1] = np.maximum(u[:, 1:-1], interior)
        z0k = np.empty((n_s + 1, n_p + 1))
        z1k = np.empty((n_s + 1, n_p + 1))
        z0k[1:-1, :] = z0f.reshape(n_p + 1, n_s - 1).T
        z1k[1:-1, :] = z1f.reshape(n_p + 1, n_s - 1).T
        z0k[0, :] = rep_lo
        z1k[0, :] = rep_lo
        z0k[-1, :] = rep_up
        z1k[-1, :] = rep_up
        values[k] = (u - st.tilt(t_to)).T
        z0_star[k] = z0k
        z1_star[k] = z1k
        u_cur = u
        t_cur = t_to

    # layer slices inherit the first solved policy
    for k in range(n_t + 1):
        if in_layer[k]:
            z0_star[k] = z0_star[k_star]
            z1_star[k] = z1_star[k_star]

    c_up, c_lo, _ = apriori_constants(spec)
    sc = model_mod.structural_constants(spec)
    runtime = time.perf_counter() - t_begin
    info = {
        "runtime_seconds": runtime,
        "substeps": st.substeps_done,
        "dt_substep_target": st.dt_target,
        "control_trunc_K": st.K,
        "n_control": grid.n_control,
        "terminal_layer_eps": eps,
        "layer_bias_certificate": max(abs(c_up), abs(c_lo)) * eps,
        "c_upper": c_up,
        "c_lower": c_lo,
        "saturation_threshold": sc.c0_saturation,
        "n0_growth": sc.n0_growth,
        "c_growth": sc.c_growth,
        "gap_range": [sc.gap_lower, sc.gap_upper],
        "boundary_mode": bvals.mode,
    }
    field = ValueField(
        values=values, t_grid=t_grid, s_grid=st.s_grid, p_grid=st.p_grid,
        in_layer=in_layer, grid=grid, band=bd, t_star=t_star, info=info,
    )
    policy = PolicyField(
        z0_star=z0_star, z1_star=z1_star, boundary_flag=bflag,
        in_layer=in_layer, rep_lower=rep_lo, rep_upper=rep_up,
    )
    return field, policy


# ---------------------------------------------------------------------------
# verification gates


def check_apriori(spec: ModelSpec, field: ValueField) -> AprioriReport:
    """Nodewise envelope sandwich

        C_lower*(T-t) - g^2 - slack <= w <= C_upper*(T-t) - g^2 + slack

    with slack = 10*(dt + ds^2 + dp^2)*scale on solved slices; layer
    slices get the certified bias added on top."""
    c_up, c_lo, _ = apriori_constants(spec)
    T = spec.horizon_T
    grid = field.grid
    scale = max(1.0, float(np.max(np.abs(field.values))))
    slack = 10.0 * (
        T / grid.n_time + 1.0 / grid.n_gap**2 + 1.0 / grid.n_belief**2
    ) * scale
    layer_extra = max(abs(c_up), abs(c_lo)) * grid.terminal_layer_eps
    worst_below = 0.0
    worst_above = 0.0
    passed = True
    for k, t in enumerate(field.t_grid):
        y = field.y_nodes(k)
        tau = T - float(t)
        env_up = c_up * tau - y * y
        env_lo = c_lo * tau - y * y
        u = field.values[k]
        below = float(np.min(u - env_lo[:, None]))
        above = float(np.max(u - env_up[:, None]))
        worst_below = min(worst_below, below)
        worst_above = max(worst_above, above)
        allow = slack + (layer_extra if field.in_layer[k] else 0.0)
        if below < -allow or above > allow:
            passed = False
    return AprioriReport(
        passed=passed, worst_below=worst_below, worst_above=worst_above,
        slack_interior=slack, slack_layer=slack + layer_extra,
        c_upper=c_up, c_lower=c_lo,
    )


def residual_probe(
    spec: ModelSpec,
    which: str = "phi",
    n_nodes: int = 100,
    seed: int = 20240,
    K: float | None = None,
    n_control: int = 41,
    tol: float = 1e-9,
) -> ResidualReport:
    """Exact generator margins of the envelope test functions at random
    nodes of the proof region |g| <= B*(T-t).

    phi = C_upper*(T-t) - g^2: margin(z) = -d/dt phi - L(z) >= 1 must hold
    for every control, so the minimum over the lattice stays >= 1 - tol.
    psi = C_lower*(T-t) - g^2: the zero pair certifies margin <= -1, and
    the lattice contains it, so the lattice minimum stays <= -1 + tol.
    Derivatives are exact: q = -2g, N = diag(-2, 0), d/dt = -C.
    """
    if which not in ("phi", "psi"):
        raise ConfigError("which must be 'phi' or 'psi'", field="which")
    c_up, c_lo, B = apriori_constants(spec)
    C = c_up if which == "phi" else c_lo
    if K is None:
        K = model_mod.saturation_threshold(spec) + 1.0
    if n_control % 2 == 0:
        n_control += 1  # keep 0 on the lattice for the psi certificate
    z_grid = np.linspace(-K, K, n_control)
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, spec.horizon_T * 0.999, n_nodes)
    g = rng.uniform(-1.0, 1.0, n_nodes) * B * (spec.horizon_T - t)
    p = rng.uniform(0.0, 1.0, n_nodes)
    Z0 = np.repeat(z_grid, n_control)
    Z1 = np.tile(z_grid, n_control)
    margins = np.empty(n_nodes)
    for i in range(n_nodes):
        L = generator_eval(
            spec, float(t[i]), float(g[i]), float(p[i]),
            q=-2.0 * g[i], N=np.array([[-2.0, 0.0], [0.0, 0.0]]),
            z0=Z0, z1=Z1,
        )
        margins[i] = C + np.min(-np.asarray(L))
    if which == "phi":
        worst = float(np.min(margins))
        passed = worst >= 1.0 - tol
    else:
        worst = float(np.max(margins))
        passed = worst <= -1.0 + tol
    return ResidualReport(
        which=which, passed=passed, worst_margin=worst, margins=margins,
        nodes=np.stack([t, g, p], axis=1), threshold=tol,
    )
