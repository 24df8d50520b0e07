"""Two-type effort model with quadratic costs.

The agent is one of two types theta in {0, 1} and chooses effort alpha from
a compact interval A = [action_min, action_max]. Costs are a quadratic
family

    c(theta, alpha) = 0.5 * j_theta * alpha^2 + b_theta * alpha,

strongly convex (j_theta > 0). Facing a contract with sensitivity z the
type-theta agent plays the clamped best response

    A_theta(z) = clip((z - b_theta) / j_theta, action_min, action_max),

with indirect utility flow (the Hamiltonian of the agent's problem)

    H_theta(z) = z * A_theta(z) - c(theta, A_theta(z)).

The informational content of a contract is the gap H_0(z) - H_1(z): its
range over z determines the credible band of continuation-value spreads,
and its extremal level sets supply the boundary controls.

Two named presets pin the parametric families used throughout:

* dominated(abar): j = (1, 2), b = (0, 0), A = [0, sqrt(2*abar)].
  Type 0 produces any effort at half the marginal cost, the gap is
  nonnegative and increasing, and its range is [0, abar].
* nondominated(abar, aunder): j = (1, 1), b = (-1, +1),
  A = [aunder/2, abar/2]. Same curvature, opposite linear tilts: each type
  is cheaper on one side, the gap ranges over [aunder, abar] with
  aunder < 0 < abar.

Everything downstream works off the generic quadratic data, so a
custom-quadratic kind with explicit (j, b, interval) is accepted as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DegenerateModelError, DomainError

TypeId = Literal[0, 1]
THETAS: tuple[TypeId, TypeId] = (0, 1)

COST_KINDS = ("dominated", "nondominated", "custom-quadratic")

# Tolerance for treating two gap values as the same level (float equality
# in the level-set extraction and preset self-consistency checks).
_LEVEL_TOL = 1e-9


@dataclass(frozen=True)
class ModelSpec:
    """Full problem data: cost family, discount rate, horizon, reservations.

    ``cost_params`` carries ``curvature`` (j_0, j_1) and ``linear``
    (b_0, b_1). ``r_pooled`` is the reservation value R used by the pooled
    participation constraint; ``r_type`` the per-type pair (R_0, R_1) used
    by the conditional problem. ``prior_p0`` is the principal's prior
    probability of type 0.
    """

    kappa: float
    horizon_T: float
    action_min: float
    action_max: float
    cost_kind: str
    cost_params: Mapping[str, Sequence[float]]
    r_pooled: float = 0.0
    r_type: tuple[float, float] = (0.0, 0.0)
    prior_p0: float = 0.5

    def __post_init__(self):
        _validate(self)

    # -- cost family accessors ------------------------------------------

    @property
    def curvature(self) -> tuple[float, float]:
        j = self.cost_params["curvature"]
        return (float(j[0]), float(j[1]))

    @property
    def linear(self) -> tuple[float, float]:
        b = self.cost_params["linear"]
        return (float(b[0]), float(b[1]))

    def with_prior(self, p0: float) -> "ModelSpec":
        return replace(self, prior_p0=p0)


@dataclass(frozen=True)
class StructuralConstants:
    """Constants extracted from the cost family that the solver and the
    verification gates rely on.

    * ``c0_saturation``: max_theta |dc/dalpha| at the action endpoints;
      beyond +-c0_saturation every best response is saturated and the gap
      is constant.
    * ``n0_growth``: max over theta and endpoint actions of |dc/dalpha| +
      |alpha|; bounds both |A_theta| and the Lipschitz constant of
      H_theta.
    * ``rho_convexity``: min curvature, the strong-convexity modulus; its
      reciprocal is the Lipschitz constant of A_theta.
    * ``c_growth``: the comparison constant max(1, n0, max(|a_lower|,
      |a_upper|), 2*c0, 2*sup|c|) controlling the generator's growth and
      the a-priori envelope.
    * ``sup_cost``: sup over theta, alpha in A of |c(theta, alpha)|.
    """

    c0_saturation: float
    n0_growth: float
    rho_convexity: float
    c_growth: float
    sup_cost: float
    gap_lower: float
    gap_upper: float


def _validate(spec: ModelSpec) -> None:
    if not (spec.kappa > 0.0) or not math.isfinite(spec.kappa):
        raise ConfigError("must be a positive finite number", field="model.kappa")
    if not (spec.horizon_T > 0.0) or not math.isfinite(spec.horizon_T):
        raise ConfigError("must be a positive finite number", field="model.horizon_T")
    if not math.isfinite(spec.action_min) or not math.isfinite(spec.action_max):
        raise ConfigError("action interval must be finite", field="model.action_min")
    if not spec.action_min < spec.action_max:
        raise ConfigError(
            f"need action_min < action_max, got [{spec.action_min}, {spec.action_max}]",
            field="model.action_min",
        )
    if spec.cost_kind not in COST_KINDS:
        raise ConfigError(
            f"unknown cost_kind {spec.cost_kind!r}, expected one of {COST_KINDS}",
            field="model.cost_kind",
        )
    try:
        j = spec.cost_params["curvature"]
        b = spec.cost_params["linear"]
    except (KeyError, TypeError):
        raise ConfigError(
            "cost_params must supply 'curvature' and 'linear' pairs",
            field="model.cost_params",
        ) from None
    if len(j) != 2 or len(b) != 2:
        raise ConfigError(
            "curvature and linear must each hold one value per type",
            field="model.cost_params",
        )
    if not all(math.isfinite(float(x)) for x in (*j, *b)):
        raise ConfigError("cost coefficients must be finite", field="model.cost_params")
    if not (float(j[0]) > 0.0 and float(j[1]) > 0.0):
        raise ConfigError(
            "curvature must be strictly positive for both types",
            field="model.cost_params.curvature",
        )
    if spec.cost_kind == "dominated":
        if abs(spec.action_min) > 1e-12:
            raise ConfigError(
                "dominated family requires action_min = 0",
                field="model.action_min",
            )
        if not (float(j[0]) < float(j[1])):
            raise ConfigError(
                "dominated family requires strictly smaller curvature for type 0",
                field="model.cost_params.curvature",
            )
        if abs(float(b[0])) > 1e-12 or abs(float(b[1])) > 1e-12:
            raise ConfigError(
                "dominated family has no linear cost terms",
                field="model.cost_params.linear",
            )
    if spec.cost_kind == "nondominated":
        if abs(float(j[0]) - float(j[1])) > 1e-12:
            raise ConfigError(
                "nondominated family requires equal curvatures",
                field="model.cost_params.curvature",
            )
        if not (float(b[0]) < 0.0 < float(b[1])):
            raise ConfigError(
                "nondominated family requires linear tilts b_0 < 0 < b_1",
                field="model.cost_params.linear",
            )
    if len(spec.r_type) != 2 or not all(math.isfinite(float(r)) for r in spec.r_type):
        raise ConfigError("r_type must be a finite pair", field="model.r_type")
    if not math.isfinite(spec.r_pooled):
        raise ConfigError("must be finite", field="model.r_pooled")
    if not (0.0 <= spec.prior_p0 <= 1.0):
        raise ConfigError("must lie in [0, 1]", field="model.prior_p0")
    # Separation: the gap must have a nondegenerate range.
    lo, hi = _extremal_gap_values(spec)
    if not (hi - lo > 1e-10):
        raise DegenerateModelError(
            "gap range is degenerate: the types are observationally "
            f"indistinguishable (range width {hi - lo:.3e})",
            field="model.cost_params",
        )


# ---------------------------------------------------------------------------
# preset constructors


def dominated_spec(
    abar: float = 1.0,
    *,
    kappa: float = 0.1,
    horizon_T: float = 2.0,
    r_pooled: float = 0.0,
    r_type: tuple[float, float] = (0.0, 0.0),
    prior_p0: float = 0.5,
) -> ModelSpec:
    """Dominated family with gap range [0, abar].

    Self-consistency: A = [0, sqrt(2*abar)] makes the derived upper
    extremal gap equal abar exactly (checked below), so abar never lives
    on the spec as an independent field.
    """
    if not (abar > 0.0):
        raise ConfigError("abar must be positive", field="model.cost_params")
    spec = ModelSpec(
        kappa=kappa,
        horizon_T=horizon_T,
        action_min=0.0,
        action_max=math.sqrt(2.0 * abar),
        cost_kind="dominated",
        cost_params={"curvature": (1.0, 2.0), "linear": (0.0, 0.0)},
        r_pooled=r_pooled,
        r_type=r_type,
        prior_p0=prior_p0,
    )
    lo, hi = _extremal_gap_values(spec)
    if abs(hi - abar) > 1e-9 * max(1.0, abar) or abs(lo) > 1e-12:
        raise ConfigError(
            f"derived gap range [{lo}, {hi}] does not match requested [0, {abar}]",
            field="model.cost_params",
        )
    return spec


def nondominated_spec(
    abar: float = 1.0,
    aunder: float = -1.0,
    *,
    kappa: float = 0.1,
    horizon_T: float = 2.0,
    r_pooled: float = 0.0,
    r_type: tuple[float, float] = (0.0, 0.0),
    prior_p0: float = 0.5,
) -> ModelSpec:
    """Nondominated family with gap range [aunder, abar], aunder < 0 < abar."""
    if not (aunder < 0.0 < abar):
        raise ConfigError(
            "need aunder < 0 < abar for the nondominated family",
            field="model.cost_params",
        )
    spec = ModelSpec(
        kappa=kappa,
        horizon_T=horizon_T,
        action_min=aunder / 2.0,
        action_max=abar / 2.0,
        cost_kind="nondominated",
        cost_params={"curvature": (1.0, 1.0), "linear": (-1.0, 1.0)},
        r_pooled=r_pooled,
        r_type=r_type,
        prior_p0=prior_p0,
    )
    lo, hi = _extremal_gap_values(spec)
    if abs(hi - abar) > 1e-9 * max(1.0, abar) or abs(lo - aunder) > 1e-9 * max(1.0, -aunder):
        raise ConfigError(
            f"derived gap range [{lo}, {hi}] does not match requested [{aunder}, {abar}]",
            field="model.cost_params",
        )
    return spec


# ---------------------------------------------------------------------------
# pointwise operations (all accept scalars or arrays in z / alpha)


def cost(spec: ModelSpec, theta: TypeId, alpha):
    """c(theta, alpha); raises DomainError off the action interval."""
    alpha = np.asarray(alpha, dtype=float)
    tol = 1e-12 * max(1.0, abs(spec.action_min), abs(spec.action_max))
    if np.any(alpha < spec.action_min - tol) or np.any(alpha > spec.action_max + tol):
        raise DomainError(
            f"effort outside A = [{spec.action_min}, {spec.action_max}]"
        )
    j = spec.curvature[theta]
    b = spec.linear[theta]
    out = 0.5 * j * alpha * alpha + b * alpha
    return out if out.ndim else float(out)


def marginal_cost(spec: ModelSpec, theta: TypeId, alpha):
    j = spec.curvature[theta]
    b = spec.linear[theta]
    out = j * np.asarray(alpha, dtype=float) + b
    return out if out.ndim else float(out)


def optimal_action(spec: ModelSpec, theta: TypeId, z):
    """Clamped best response A_theta(z) = clip((z - b)/j, action interval)."""
    j = spec.curvature[theta]
    b = spec.linear[theta]
    z = np.asarray(z, dtype=float)
    out = np.clip((z - b) / j, spec.action_min, spec.action_max)
    return out if out.ndim else float(out)


def hamiltonian(spec: ModelSpec, theta: TypeId, z):
    """H_theta(z) = z*A_theta(z) - c(theta, A_theta(z)). Convex, monotone
    wherever the best response is positive/negative, and affine beyond the
    saturation thresholds."""
    z = np.asarray(z, dtype=float)
    a = np.clip((z - spec.linear[theta]) / spec.curvature[theta],
                spec.action_min, spec.action_max)
    j = spec.curvature[theta]
    b = spec.linear[theta]
    out = z * a - (0.5 * j * a * a + b * a)
    return out if out.ndim else float(out)


def gap_function(spec: ModelSpec, z):
    """gap(z) = H_0(z) - H_1(z): informational rent flow of a sensitivity z."""
    return hamiltonian(spec, 0, z) - hamiltonian(spec, 1, z)


def saturation_threshold(spec: ModelSpec) -> float:
    """C_0 = max_theta max(|c'(theta, a_min)|, |c'(theta, a_max)|).

    For |z| >= C_0 both best responses are saturated, so the gap is
    constant on each side.
    """
    vals = []
    for theta in THETAS:
        vals.append(abs(marginal_cost(spec, theta, spec.action_min)))
        vals.append(abs(marginal_cost(spec, theta, spec.action_max)))
    return max(vals)


def _sup_abs_cost(spec: ModelSpec) -> float:
    """sup_{theta, alpha in A} |c(theta, alpha)| — candidates are the two
    endpoints and the interior vertex of each parabola."""
    best = 0.0
    for theta in THETAS:
        j = spec.curvature[theta]
        b = spec.linear[theta]
        cands = [spec.action_min, spec.action_max]
        vertex = -b / j
        if spec.action_min < vertex < spec.action_max:
            cands.append(vertex)
        for a in cands:
            best = max(best, abs(0.5 * j * a * a + b * a))
    return best


def structural_constants(spec: ModelSpec) -> StructuralConstants:
    c0 = saturation_threshold(spec)
    n0 = 0.0
    for theta in THETAS:
        for a in (spec.action_min, spec.action_max):
            n0 = max(n0, abs(marginal_cost(spec, theta, a)) + abs(a))
    rho = min(spec.curvature)
    supc = _sup_abs_cost(spec)
    lo, hi = _extremal_gap_values(spec)
    c_growth = max(1.0, n0, max(abs(lo), abs(hi)), 2.0 * c0, 2.0 * supc)
    return StructuralConstants(
        c0_saturation=c0,
        n0_growth=n0,
        rho_convexity=rho,
        c_growth=c_growth,
        sup_cost=supc,
        gap_lower=lo,
        gap_upper=hi,
    )


# ---------------------------------------------------------------------------
# exact piecewise analysis of the gap
#
# gap'(z) = A_0(z) - A_1(z) is continuous piecewise affine with breakpoints
# where either best response saturates: z = j_theta * a + b_theta for
# a in {action_min, action_max}. On each piece the gap is an explicit
# quadratic, so its range and level sets are computed exactly.


def _breakpoints(spec: ModelSpec) -> list[float]:
    pts = set()
    for theta in THETAS:
        j = spec.curvature[theta]
        b = spec.linear[theta]
        pts.add(j * spec.action_min + b)
        pts.add(j * spec.action_max + b)
    return sorted(pts)


def _gap_slope_coeffs(spec: ModelSpec, z_mid: float) -> tuple[float, float]:
    """Affine coefficients (g1, g0) of gap'(z) = g1*z + g0 on the piece
    containing z_mid (probed at the midpoint to classify each ramp)."""
    g1 = 0.0
    g0 = 0.0
    for sign, theta in ((1.0, 0), (-1.0, 1)):
        j = spec.curvature[theta]
        b = spec.linear[theta]
        raw = (z_mid - b) / j
        if raw <= spec.action_min:
            g0 += sign * spec.action_min
        elif raw >= spec.action_max:
            g0 += sign * spec.action_max
        else:
            g1 += sign / j
            g0 += sign * (-b / j)
    return g1, g0


def _pieces(spec: ModelSpec, window: tuple[float, float]) -> list[tuple[float, float]]:
    """Partition of the window into maximal intervals on which the gap is a
    single quadratic."""
    lo, hi = window
    cuts = [lo] + [b for b in _breakpoints(spec) if lo < b < hi] + [hi]
    return [(cuts[i], cuts[i + 1]) for i in range(len(cuts) - 1) if cuts[i + 1] > cuts[i]]


def _extremal_gap_values(spec: ModelSpec) -> tuple[float, float]:
    """(a_lower, a_upper) = (inf, sup) of the gap over all of R, exactly.

    The gap is constant beyond the outermost breakpoints, so the search
    window [min break - 1, max break + 1] captures the full range; interior
    candidates are piece endpoints plus stationary points of each quadratic
    piece.
    """
    brk = _breakpoints(spec)
    window = (brk[0] - 1.0, brk[-1] + 1.0)
    cands = set()
    for (l, r) in _pieces(spec, window):
        cands.add(l)
        cands.add(r)
        g1, g0 = _gap_slope_coeffs(spec, 0.5 * (l + r))
        if g1 != 0.0:
            z0 = -g0 / g1
            if l < z0 < r:
                cands.add(z0)
    vals = [float(gap_function(spec, z)) for z in sorted(cands)]
    return (min(vals), max(vals))


def gap_level_set(
    spec: ModelSpec,
    level: float,
    window: tuple[float, float],
    tol: float = _LEVEL_TOL,
) -> list[tuple[float, float]]:
    """Interval union {z in window : gap(z) = level} (within tol).

    Pieces where the gap is identically the level contribute whole
    subintervals (the saturation half-lines of the parametric families);
    strictly quadratic pieces contribute their root points. Touching
    intervals are merged.
    """
    out: list[tuple[float, float]] = []
    scale = max(1.0, abs(level))
    for (l, r) in _pieces(spec, window):
        g1, g0 = _gap_slope_coeffs(spec, 0.5 * (l + r))
        gl = float(gap_function(spec, l))
        # gap(z) = gl + g0*(z-l) + g1*(z^2-l^2)/2 on the piece
        if abs(g1) < 1e-15 and abs(g0) < 1e-15:
            if abs(gl - level) <= tol * scale:
                out.append((l, r))
            continue
        # roots of 0.5*g1*z^2 + g0*z + (gl - g0*l - 0.5*g1*l^2 - level) = 0
        c2 = 0.5 * g1
        c1 = g0
        c0 = gl - g0 * l - 0.5 * g1 * l * l - level
        if abs(c2) < 1e-15:
            roots = [-c0 / c1] if abs(c1) > 1e-15 else []
        else:
            disc = c1 * c1 - 4.0 * c2 * c0
            if disc < -tol * scale:
                roots = []
            elif disc <= 0.0:
                roots = [-c1 / (2.0 * c2)]
            else:
                sq = math.sqrt(disc)
                roots = [(-c1 - sq) / (2.0 * c2), (-c1 + sq) / (2.0 * c2)]
        for z0 in roots:
            if l - tol <= z0 <= r + tol:
                z0 = min(max(z0, l), r)
                if abs(float(gap_function(spec, z0)) - level) <= math.sqrt(tol) * scale:
                    out.append((z0, z0))
    if not out:
        return []
    out.sort()
    merged = [list(out[0])]
    for (l, r) in out[1:]:
        if l <= merged[-1][1] + tol:
            merged[-1][1] = max(merged[-1][1], r)
        else:
            merged.append([l, r])
    return [(a, b) for a, b in merged]
