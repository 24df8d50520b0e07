"""Monte Carlo rollout of feedback policies under the innovation dynamics.

The controlled system is simulated in the principal's observation
filtration: one innovation increment dB per step drives every component,

    dX       = lam dt + dB,
    dY^theta = (-H^theta(z^theta) + kappa Y^theta + lam z^theta) dt
               + z^theta dB,
    dp       = p (1 - p) (A^0(z^0) - A^1(z^1)) dB,

with lam = p A^0(z^0) + (1 - p) A^1(z^1). The belief is marched in
log-odds coordinates, dl = da dB - (1/2)(1 - 2p) da^2 dt, which keeps it
strictly inside (0, 1) with no projection. For controls held constant
over a step that update telescopes to the likelihood-ratio formula, so
``filter_error`` (the gap against an independently accumulated
likelihood-ratio posterior) measures accumulated float noise and clamp
events, not a scheme error; the genuine discretization study lives in
``filter_oracle_check``, which draws the type, integrates X under the
true-type action, and compares exact Bayes against a direct
Euler--Maruyama march of the belief equation driven by the innovation
increments.

Controls come from the solved policy by nearest-time-slice bilinear
interpolation in (s, p). The first time the spread leaves the band the
path switches to the matched representative control of the wall it
crossed and is re-projected onto the moving wall every step after,
mirroring the Dirichlet reformulation of the interior problem. The
projection splits the correction evenly between the two promises, which
leaves the promise sum -- the part of the state the value ansatz prices
-- untouched. Hit times use linear crossing interpolation, and outward
excursions are measured before the projection so the violation
statistics see the raw scheme error.

Paths draw from counter-based streams keyed (seed, path index): any
chunk partition and any thread count reproduce the same numbers path by
path, and statistics reduce in fixed path order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import band as band_mod
from . import model as model_mod
from .errors import ConfigError
from .hjb import PolicyField, ValueField
from .model import ModelSpec

_CHUNK = 2048


@dataclass(frozen=True)
class SimConfig:
    """Rollout parameters; ``initial`` is (x0, y0, y1, p0)."""

    n_paths: int
    dt: float
    seed: int
    clamp_eps: float = 1e-12
    initial: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.5)

    def __post_init__(self):
        if self.n_paths < 100:
            raise ConfigError("n_paths must be >= 100", field="sim.n_paths")
        if not self.dt > 0.0:
            raise ConfigError("dt must be positive", field="sim.dt")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in 64 bits", field="sim.seed")
        if not 0.0 < self.clamp_eps < 0.5:
            raise ConfigError(
                "clamp_eps must lie in (0, 1/2)", field="sim.clamp_eps"
            )
        if len(self.initial) != 4:
            raise ConfigError(
                "initial must be (x0, y0, y1, p0)", field="sim.initial"
            )
        if not 0.0 < self.initial[3] < 1.0:
            raise ConfigError(
                "initial belief must lie strictly in (0, 1)",
                field="sim.initial",
            )

    def log_odds_bound(self) -> float:
        """Clamp radius in log-odds units implied by ``clamp_eps``."""
        return float(math.log((1.0 - self.clamp_eps) / self.clamp_eps))


@dataclass
class PathBundle:
    """Rollout estimates and diagnostics, reduced in fixed path order."""

    payoff_mean: float
    payoff_se: float
    violation_stats: dict
    terminal_gap_stats: dict
    filter_error: float
    hit_stats: dict
    payoffs: np.ndarray
    n_steps: int
    dt: float


@dataclass
class FilterReport:
    """Exact-Bayes vs Euler-marched belief along shared noise."""

    max_dev: float
    dev_mean: float  # mean over paths of the per-path max deviation
    dev_q95: float
    terminal_dev_max: float
    terminal_dev_mean: float
    bayes_terminal_mean: float
    bayes_terminal_se: float
    euler_terminal_mean: float
    prior_p0: float
    n_paths: int
    dt: float


# ---------------------------------------------------------------------------
# shared plumbing


def _time_knots(horizon: float, dt: float) -> np.ndarray:
    n = max(1, int(math.ceil(horizon / dt - 1e-9)))
    knots = np.minimum(np.arange(n + 1) * dt, horizon)
    knots[-1] = horizon
    return knots


def _stream(seed: int, idx: int) -> np.random.Generator:
    key = np.array([seed, idx], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _prepare(spec: ModelSpec, field: ValueField, sim: SimConfig):
    """Validate the spec/field/sim triple; return (band, knots, k_slice)."""
    bd = band_mod.build(spec)
    matches = (
        abs(field.band.kappa - spec.kappa) <= 1e-12
        and abs(float(field.t_grid[-1]) - spec.horizon_T) <= 1e-12
        and abs(field.band.lower(0.0) - bd.lower(0.0)) <= 1e-9
        and abs(field.band.upper(0.0) - bd.upper(0.0)) <= 1e-9
    )
    if not matches:
        raise ConfigError(
            "field was solved for a different model", field="field"
        )
    slice_dt = float(field.t_grid[1] - field.t_grid[0])
    if sim.dt > slice_dt + 1e-12:
        raise ConfigError(
            f"dt={sim.dt} exceeds the field's slice spacing {slice_dt:.6g}",
            field="sim.dt",
        )
    g0 = sim.initial[1] - sim.initial[2]
    if not bd.lower(0.0) - 1e-9 <= g0 <= bd.upper(0.0) + 1e-9:
        raise ConfigError(
            "initial spread lies outside the band", field="sim.initial"
        )
    knots = _time_knots(spec.horizon_T, sim.dt)
    t_grid = np.asarray(field.t_grid)
    k_slice = np.abs(t_grid[None, :] - knots[:-1, None]).argmin(axis=1)
    return bd, knots, k_slice


def _bilinear(u: np.ndarray, s, p):
    """u on uniform unit-square nodes, sampled at clipped (s, p)."""
    n_s = u.shape[0] - 1
    n_p = u.shape[1] - 1
    x = np.clip(s, 0.0, 1.0) * n_s
    y = np.clip(p, 0.0, 1.0) * n_p
    i0 = np.clip(np.floor(x).astype(np.int64), 0, n_s - 1)
    j0 = np.clip(np.floor(y).astype(np.int64), 0, n_p - 1)
    ws = x - i0
    wp = y - j0
    return (
        (1 - ws) * (1 - wp) * u[i0, j0]
        + ws * (1 - wp) * u[i0 + 1, j0]
        + (1 - ws) * wp * u[i0, j0 + 1]
        + ws * wp * u[i0 + 1, j0 + 1]
    )


# ---------------------------------------------------------------------------
# rollout engine


def _roll_chunk(spec, bd, policy, sim, knots, k_slice, lo_idx, hi_idx,
                z_override, threshold, record):
    n = hi_idx - lo_idx
    n_steps = len(knots) - 1
    xi = np.empty((n, n_steps))
    for r, idx in enumerate(range(lo_idx, hi_idx)):
        xi[r] = _stream(sim.seed, idx).standard_normal(n_steps)

    x0, y0_init, y1_init, p0 = sim.initial
    kappa = spec.kappa
    l_cap = sim.log_odds_bound()
    l0 = math.log(p0 / (1.0 - p0))
    X = np.full(n, float(x0))
    Y0 = np.full(n, float(y0_init))
    Y1 = np.full(n, float(y1_init))
    logodds = np.full(n, l0)
    logodds_lr = np.full(n, l0)  # likelihood-ratio shadow accumulator
    wall = np.zeros(n, dtype=np.int8)
    hit_t = np.full(n, np.nan)
    viol_max = 0.0
    viol_n = 0
    ferr = 0.0

    rec = None
    if record:
        rec = {
            name: np.empty((n, n_steps + 1))
            for name in ("X", "p", "Y0", "Y1", "z0", "z1")
        }
        rec["flag"] = np.zeros((n, n_steps + 1), dtype=np.int8)
        rec["X"][:, 0] = X
        rec["p"][:, 0] = expit(logodds)
        rec["Y0"][:, 0] = Y0
        rec["Y1"][:, 0] = Y1

    z0 = np.zeros(n)
    z1 = np.zeros(n)
    for k in range(n_steps):
        t_k = float(knots[k])
        t_n = float(knots[k + 1])
        dtk = t_n - t_k
        p = expit(logodds)
        g = Y0 - Y1
        lo_k = bd.lower(t_k)
        up_k = bd.upper(t_k)
        wd_k = up_k - lo_k
        if z_override is not None:
            z0.fill(z_override[0])
            z1.fill(z_override[1])
        else:
            if wd_k > 1e-12:
                s = (g - lo_k) / wd_k
            else:
                s = np.full(n, 0.5)
            z0 = _bilinear(policy.z0_star[k_slice[k]], s, p)
            z1 = _bilinear(policy.z1_star[k_slice[k]], s, p)
            on_lo = wall == 1
            on_up = wall == 2
            z0 = np.where(on_lo, policy.rep_lower,
                          np.where(on_up, policy.rep_upper, z0))
            z1 = np.where(on_lo, policy.rep_lower,
                          np.where(on_up, policy.rep_upper, z1))
        if record:
            rec["z0"][:, k] = z0
            rec["z1"][:, k] = z1

        a0 = model_mod.optimal_action(spec, 0, z0)
        a1 = model_mod.optimal_action(spec, 1, z1)
        h0 = model_mod.hamiltonian(spec, 0, z0)
        h1 = model_mod.hamiltonian(spec, 1, z1)
        lam = p * a0 + (1.0 - p) * a1
        da = a0 - a1
        dB = math.sqrt(dtk) * xi[:, k]
        dX = lam * dtk + dB
        X = X + dX
        Y0 = Y0 + (-h0 + kappa * Y0 + lam * z0) * dtk + z0 * dB
        Y1 = Y1 + (-h1 + kappa * Y1 + lam * z1) * dtk + z1 * dB
        logodds = logodds + da * dB - 0.5 * (1.0 - 2.0 * p) * da * da * dtk
        np.clip(logodds, -l_cap, l_cap, out=logodds)
        logodds_lr = logodds_lr + da * dX - 0.5 * (a0 * a0 - a1 * a1) * dtk
        ferr = max(
            ferr, float(np.max(np.abs(expit(logodds) - expit(logodds_lr))))
        )

        g_new = Y0 - Y1
        lo_n = bd.lower(t_n)
        up_n = bd.upper(t_n)
        exc = np.maximum(np.maximum(g_new - up_n, lo_n - g_new), 0.0)
        viol_max = max(viol_max, float(exc.max()))
        viol_n += int(np.count_nonzero(exc > threshold))
        if z_override is None:
            fresh_up = (wall == 0) & (g_new >= up_n)
            if fresh_up.any():
                phi0 = g[fresh_up] - up_k          # <= 0 at the step start
                phi1 = g_new[fresh_up] - up_n
                den = phi1 - phi0
                frac = np.divide(-phi0, den, out=np.zeros_like(den),
                                 where=den > 1e-300)
                hit_t[fresh_up] = t_k + frac * dtk
                wall[fresh_up] = 2
            fresh_lo = (wall == 0) & (g_new <= lo_n)
            if fresh_lo.any():
                psi0 = lo_k - g[fresh_lo]
                psi1 = lo_n - g_new[fresh_lo]
                den = psi1 - psi0
                frac = np.divide(-psi0, den, out=np.zeros_like(den),
                                 where=den > 1e-300)
                hit_t[fresh_lo] = t_k + frac * dtk
                wall[fresh_lo] = 1
            pinned = wall > 0
            if pinned.any():
                target = np.where(wall == 2, up_n, lo_n)
                d = (g_new - target)[pinned]
                Y0[pinned] -= 0.5 * d
                Y1[pinned] += 0.5 * d
        if record:
            rec["X"][:, k + 1] = X
            rec["p"][:, k + 1] = expit(logodds)
            rec["Y0"][:, k + 1] = Y0
            rec["Y1"][:, k + 1] = Y1
            rec["flag"][:, k + 1] = wall
    if record:
        rec["z0"][:, n_steps] = np.where(
            wall == 2, policy.rep_upper,
            np.where(wall == 1, policy.rep_lower, z0),
        )
        rec["z1"][:, n_steps] = rec["z0"][:, n_steps].copy()
        interior = wall == 0
        rec["z0"][interior, n_steps] = z0[interior]
        rec["z1"][interior, n_steps] = z1[interior]

    return {
        "payoffs": X - Y0,
        "gaps": np.abs(Y0 - Y1),
        "hit_t": hit_t,
        "viol_max": viol_max,
        "viol_n": viol_n,
        "ferr": ferr,
        "rec": rec,
    }


def _violation_threshold(policy, z_override, dt: float) -> float:
    if z_override is not None:
        zeta_max = abs(float(z_override[0]) - float(z_override[1]))
    else:
        zeta_max = float(np.max(np.abs(policy.z0_star - policy.z1_star)))
    return 5.0 * math.sqrt(dt) * zeta_max


def rollout_policy(
    spec: ModelSpec,
    field: ValueField,
    policy: PolicyField,
    sim: SimConfig,
    *,
    z_override: tuple[float, float] | None = None,
    n_threads: int = 1,
) -> PathBundle:
    """Estimate E[X_T - Y0_T] under the interpolated feedback policy.

    ``z_override`` replaces the policy with a constant control pair and
    disables wall switching and projection -- a diagnostic mode whose
    payoff has closed forms for degenerate controls. Thread count only
    partitions work; results are bitwise independent of it.
    """
    bd, knots, k_slice = _prepare(spec, field, sim)
    n_steps = len(knots) - 1
    threshold = _violation_threshold(policy, z_override, sim.dt)
    spans = [
        (a, min(a + _CHUNK, sim.n_paths))
        for a in range(0, sim.n_paths, _CHUNK)
    ]

    def run(span):
        return _roll_chunk(
            spec, bd, policy, sim, knots, k_slice, span[0], span[1],
            z_override, threshold, False,
        )

    if n_threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = list(pool.map(run, spans))
    else:
        parts = [run(span) for span in spans]

    payoffs = np.concatenate([part["payoffs"] for part in parts])
    gaps = np.concatenate([part["gaps"] for part in parts])
    hit_t = np.concatenate([part["hit_t"] for part in parts])
    n = sim.n_paths
    payoff_mean = float(payoffs.mean())
    payoff_se = float(payoffs.std(ddof=1) / math.sqrt(n))
    hit_mask = ~np.isnan(hit_t)
    return PathBundle(
        payoff_mean=payoff_mean,
        payoff_se=payoff_se,
        violation_stats={
            "max_excursion": max(part["viol_max"] for part in parts),
            "violating_fraction": sum(part["viol_n"] for part in parts)
            / (n * n_steps),
            "threshold": threshold,
        },
        terminal_gap_stats={
            "mean": float(gaps.mean()),
            "max": float(gaps.max()),
            "quantile_95": float(np.quantile(gaps, 0.95)),
        },
        filter_error=max(part["ferr"] for part in parts),
        hit_stats={
            "fraction": float(hit_mask.mean()),
            "first_time_mean": float(hit_t[hit_mask].mean())
            if hit_mask.any() else float("nan"),
        },
        payoffs=payoffs,
        n_steps=n_steps,
        dt=sim.dt,
    )


def trajectory_export(
    spec: ModelSpec,
    field: ValueField,
    policy: PolicyField,
    sim: SimConfig,
    n_export: int,
    *,
    z_override: tuple[float, float] | None = None,
) -> dict:
    """Per-step records of the first ``n_export`` paths (same streams as
    the rollout), as flat columns keyed like the trajectory CSV."""
    if not 1 <= n_export <= sim.n_paths:
        raise ConfigError(
            "n_export must lie in [1, n_paths]", field="n_export"
        )
    bd, knots, k_slice = _prepare(spec, field, sim)
    threshold = _violation_threshold(policy, z_override, sim.dt)
    part = _roll_chunk(
        spec, bd, policy, sim, knots, k_slice, 0, n_export,
        z_override, threshold, True,
    )
    rec = part["rec"]
    n_rows = n_export * len(knots)
    w_lo = np.array([bd.lower(float(t)) for t in knots])
    w_up = np.array([bd.upper(float(t)) for t in knots])
    return {
        "path": np.repeat(np.arange(n_export), len(knots)),
        "t": np.tile(knots, n_export),
        "X": rec["X"].reshape(n_rows),
        "p": rec["p"].reshape(n_rows),
        "Y0": rec["Y0"].reshape(n_rows),
        "Y1": rec["Y1"].reshape(n_rows),
        "W_lower": np.tile(w_lo, n_export),
        "W_upper": np.tile(w_up, n_export),
        "z0": rec["z0"].reshape(n_rows),
        "z1": rec["z1"].reshape(n_rows),
        "boundary_flag": rec["flag"].reshape(n_rows),
    }


# ---------------------------------------------------------------------------
# filter validation against exact Bayes


def _filter_chunk(sim, a0_steps, a1_steps, knots, lo_idx, hi_idx):
    n = hi_idx - lo_idx
    n_steps = len(knots) - 1
    p0 = sim.initial[3]
    theta_is0 = np.empty(n, dtype=bool)
    xi = np.empty((n, n_steps))
    for r, idx in enumerate(range(lo_idx, hi_idx)):
        gen = _stream(sim.seed, idx)
        theta_is0[r] = gen.random() < p0
        xi[r] = gen.standard_normal(n_steps)

    l_bayes = np.full(n, math.log(p0 / (1.0 - p0)))
    p_euler = np.full(n, p0)
    dev_path = np.zeros(n)
    for k in range(n_steps):
        dtk = float(knots[k + 1] - knots[k])
        a0k = float(a0_steps[k])
        a1k = float(a1_steps[k])
        dak = a0k - a1k
        a_true = np.where(theta_is0, a0k, a1k)
        dX = a_true * dtk + math.sqrt(dtk) * xi[:, k]
        # exact for per-step-constant actions: the likelihood integrals
        # are finite sums
        l_bayes = l_bayes + dak * dX - 0.5 * (a0k**2 - a1k**2) * dtk
        lam = p_euler * a0k + (1.0 - p_euler) * a1k
        dB = dX - lam * dtk
        p_euler = p_euler + p_euler * (1.0 - p_euler) * dak * dB
        np.clip(p_euler, sim.clamp_eps, 1.0 - sim.clamp_eps, out=p_euler)
        np.maximum(dev_path, np.abs(expit(l_bayes) - p_euler), out=dev_path)
    return {
        "dev_path": dev_path,
        "term_dev": np.abs(expit(l_bayes) - p_euler),
        "p_bayes": expit(l_bayes),
        "p_euler": p_euler,
    }


def filter_oracle_check(spec: ModelSpec, controls, sim: SimConfig,
                        n_threads: int = 1) -> FilterReport:
    """Draw the type from the prior, integrate X under the true-type
    action for the control path ``controls = (z0, z1)`` (scalars or
    per-step arrays), and compare the exact Bayes posterior with a
    direct Euler--Maruyama march of the belief driven by the innovation
    increments of its own path. Both use the same underlying noise."""
    knots = _time_knots(spec.horizon_T, sim.dt)
    n_steps = len(knots) - 1
    z0, z1 = controls
    z0_steps = np.broadcast_to(np.asarray(z0, dtype=float), (n_steps,))
    z1_steps = np.broadcast_to(np.asarray(z1, dtype=float), (n_steps,))
    a0_steps = np.asarray(model_mod.optimal_action(spec, 0, z0_steps))
    a1_steps = np.asarray(model_mod.optimal_action(spec, 1, z1_steps))
    spans = [
        (a, min(a + _CHUNK, sim.n_paths))
        for a in range(0, sim.n_paths, _CHUNK)
    ]

    def run(span):
        return _filter_chunk(sim, a0_steps, a1_steps, knots, span[0], span[1])

    if n_threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = list(pool.map(run, spans))
    else:
        parts = [run(span) for span in spans]

    dev_path = np.concatenate([part["dev_path"] for part in parts])
    term_dev = np.concatenate([part["term_dev"] for part in parts])
    p_bayes = np.concatenate([part["p_bayes"] for part in parts])
    p_euler = np.concatenate([part["p_euler"] for part in parts])
    n = sim.n_paths
    return FilterReport(
        max_dev=float(dev_path.max()),
        dev_mean=float(dev_path.mean()),
        dev_q95=float(np.quantile(dev_path, 0.95)),
        terminal_dev_max=float(term_dev.max()),
        terminal_dev_mean=float(term_dev.mean()),
        bayes_terminal_mean=float(p_bayes.mean()),
        bayes_terminal_se=float(p_bayes.std(ddof=1) / math.sqrt(n)),
        euler_terminal_mean=float(p_euler.mean()),
        prior_p0=float(sim.initial[3]),
        n_paths=n,
        dt=sim.dt,
    )
