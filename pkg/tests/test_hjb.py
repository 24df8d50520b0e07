"""Interior solver: generator algebra, envelope gates, and the backward
march on small grids."""

import math

import numpy as np
import pytest

from ashjb import boundary, hjb, model
from ashjb.errors import CflError, ConfigError, DomainError


class TestGenerator:
    def test_worked_example_dominated(self, dom_spec):
        # t=0, g=0, p=1, q=1, N=0, z=(1,0): drift term H1(0)-H0(1)+lam*zeta
        # with a0=1, lam=1, plus ell = 1 + 0.5*e^{0.2}*(0.5 - 1) on the
        # dominated family; collapses to 1.5 - 0.25*e^{0.2}.
        got = hjb.generator_eval(
            dom_spec, 0.0, 0.0, 1.0, q=1.0, N=0.0, z0=1.0, z1=0.0
        )
        want = 1.5 - 0.25 * math.exp(0.2)
        assert got == pytest.approx(want, rel=1e-14)
        assert got == pytest.approx(1.1946493104599576, rel=1e-14)

    def test_worked_example_nondominated(self, ndom_spec):
        # both actions saturate (a0=0.5, a1=-0.5); all terms evaluated by
        # hand give 0.256585 + 0.715*e^{0.15}.
        N = np.array([[0.2, 0.1], [0.1, -0.3]])
        got = hjb.generator_eval(
            ndom_spec, 0.5, 0.2, 0.3, q=-0.7, N=N, z0=0.8, z1=-0.4
        )
        want = 0.256585 + 0.715 * math.exp(0.15)
        assert got == pytest.approx(want, rel=1e-14)
        assert got == pytest.approx(1.0872964835507224, rel=1e-14)

    def test_scalar_hessian_reads_as_spread_entry(self, dom_spec):
        full = hjb.generator_eval(
            dom_spec, 0.3, 0.4, 0.6, q=0.2,
            N=np.array([[1.7, 0.0], [0.0, 0.0]]), z0=1.1, z1=-0.2,
        )
        scal = hjb.generator_eval(
            dom_spec, 0.3, 0.4, 0.6, q=0.2, N=1.7, z0=1.1, z1=-0.2
        )
        assert scal == pytest.approx(full, rel=1e-15)

    def test_vectorized_controls_match_scalar(self, ndom_spec):
        rng = np.random.default_rng(5)
        z0 = rng.uniform(-3, 3, 17)
        z1 = rng.uniform(-3, 3, 17)
        N = np.array([[0.4, -0.2], [-0.2, 0.9]])
        vec = hjb.generator_eval(ndom_spec, 0.7, -0.3, 0.45, 0.8, N, z0, z1)
        for i in range(17):
            one = hjb.generator_eval(
                ndom_spec, 0.7, -0.3, 0.45, 0.8, N, float(z0[i]), float(z1[i])
            )
            assert vec[i] == pytest.approx(one, rel=1e-14)

    def test_recomposition_from_primitives(self, dom_spec):
        # assemble L directly from best responses and Hamiltonians
        rng = np.random.default_rng(11)
        for _ in range(50):
            t = rng.uniform(0, 2)
            g = rng.uniform(-1, 1)
            p = rng.uniform(0, 1)
            q = rng.uniform(-2, 2)
            N = rng.uniform(-1, 1, (2, 2))
            N[1, 0] = N[0, 1]
            z0, z1 = rng.uniform(-4, 4, 2)
            a0 = model.optimal_action(dom_spec, 0, z0)
            a1 = model.optimal_action(dom_spec, 1, z1)
            h0 = model.hamiltonian(dom_spec, 0, z0)
            h1 = model.hamiltonian(dom_spec, 1, z1)
            zeta = z0 - z1
            lam = p * a0 + (1 - p) * a1
            mu = p * (1 - p) * (a0 - a1)
            want = (
                (-h0 + h1 + dom_spec.kappa * g + lam * zeta) * q
                + 0.5 * (zeta**2 * N[0, 0] + 2 * zeta * mu * N[0, 1]
                         + mu**2 * N[1, 1])
                + lam
                + 0.5 * math.exp(dom_spec.kappa * (2.0 - t))
                * (h0 + h1 - lam * (z0 + z1))
            )
            got = hjb.generator_eval(dom_spec, t, g, p, q, N, z0, z1)
            assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


class TestEnvelope:
    @pytest.mark.parametrize("family", ["dom", "ndom"])
    @pytest.mark.parametrize("which", ["phi", "psi"])
    def test_residual_probe_passes(self, family, which, dom_spec, ndom_spec):
        spec = dom_spec if family == "dom" else ndom_spec
        rep = hjb.residual_probe(spec, which=which, n_nodes=100)
        assert rep.passed, f"worst margin {rep.worst_margin}"
        assert rep.margins.shape == (100,)
        if which == "phi":
            assert rep.worst_margin >= 1.0 - 1e-9
        else:
            assert rep.worst_margin <= -1.0 + 1e-9

    def test_probe_nodes_inside_proof_region(self, dom_spec):
        rep = hjb.residual_probe(dom_spec, "phi", n_nodes=64)
        _, _, B = hjb.apriori_constants(dom_spec)
        t, g, _ = rep.nodes.T
        assert np.all(np.abs(g) <= B * (dom_spec.horizon_T - t) + 1e-12)

    def test_probe_deterministic(self, dom_spec):
        a = hjb.residual_probe(dom_spec, "psi", seed=99)
        b = hjb.residual_probe(dom_spec, "psi", seed=99)
        assert np.array_equal(a.margins, b.margins)

    def test_probe_rejects_unknown_kind(self, dom_spec):
        with pytest.raises(ConfigError):
            hjb.residual_probe(dom_spec, which="chi")

    def test_constants_order(self, dom_spec, ndom_spec):
        for spec in (dom_spec, ndom_spec):
            c_up, c_lo, B = hjb.apriori_constants(spec)
            assert c_up > 0 > c_lo
            assert B > 0


class TestGridSpec:
    def test_rejects_tiny_axes(self):
        with pytest.raises(ConfigError, match="grid.n_gap"):
            hjb.GridSpec(n_gap=4)
        with pytest.raises(ConfigError, match="grid.n_belief"):
            hjb.GridSpec(n_belief=2)
        with pytest.raises(ConfigError, match="grid.cfl_safety"):
            hjb.GridSpec(cfl_safety=0.0)

    def test_truncation_must_cover_saturation(self, dom_spec):
        grid = hjb.GridSpec(control_trunc_K=1.0)  # below 2*sqrt(2)
        with pytest.raises(ConfigError, match="saturation"):
            grid.resolve_K(dom_spec)

    def test_default_truncation(self, dom_spec):
        grid = hjb.GridSpec()
        want = model.saturation_threshold(dom_spec) + 1.0
        assert grid.resolve_K(dom_spec) == pytest.approx(want)

    def test_layer_width_bounded_by_horizon(self, dom_spec):
        grid = hjb.GridSpec(terminal_layer_eps=0.5)
        with pytest.raises(ConfigError, match="terminal_layer_eps"):
            grid.validate_for(dom_spec)

    def test_absurd_resolution_raises_before_allocating(self, dom_spec):
        grid = hjb.GridSpec(n_gap=3_000_000, n_belief=8)
        bvals = boundary.make_boundary(dom_spec)
        with pytest.raises(CflError) as err:
            hjb.solve_interior(dom_spec, grid, bvals)
        assert err.value.suggested_dt is not None


class TestSolveInterior:
    def test_walls_hold_dirichlet_data_exactly(self, dom_field, dom_spec):
        field, _ = dom_field
        for k, t in enumerate(field.t_grid):
            wbar, wunder = boundary.closed_form_values(dom_spec, float(t))
            np.testing.assert_allclose(field.values[k, 0, :], wunder, atol=1e-12)
            np.testing.assert_allclose(field.values[k, -1, :], wbar, atol=1e-12)

    def test_walls_hold_for_nondominated(self, ndom_field, ndom_spec):
        field, _ = ndom_field
        for k in (0, 7, 19):
            t = float(field.t_grid[k])
            wbar, wunder = boundary.closed_form_values(ndom_spec, t)
            np.testing.assert_allclose(field.values[k, 0, :], wunder, atol=1e-12)
            np.testing.assert_allclose(field.values[k, -1, :], wbar, atol=1e-12)

    def test_layer_slices_carry_terminal_profile(self, dom_spec):
        bvals = boundary.make_boundary(dom_spec)
        grid = hjb.GridSpec(
            n_time=12, n_gap=12, n_belief=8, terminal_layer_eps=0.15
        )
        field, policy = hjb.solve_interior(dom_spec, grid, bvals)
        t_star = dom_spec.horizon_T - 0.15
        expect_layer = field.t_grid > t_star + 1e-12
        assert np.array_equal(field.in_layer, expect_layer)
        assert field.in_layer.sum() >= 1
        for k in np.nonzero(field.in_layer)[0]:
            t = float(field.t_grid[k])
            y = field.y_nodes(k)
            wbar, wunder = boundary.closed_form_values(dom_spec, t)
            want = -(y * y)[:, None] * np.ones((1, len(field.p_grid)))
            want[0, :] = wunder
            want[-1, :] = wbar
            np.testing.assert_allclose(field.values[k], want, atol=1e-12)
            # layer policy copies the first solved slice
            k_star = int(np.max(np.nonzero(~field.in_layer)[0]))
            np.testing.assert_array_equal(
                policy.z0_star[k], policy.z0_star[k_star]
            )

    def test_policy_wall_rows_are_representative_controls(self, dom_field):
        _, policy = dom_field
        assert np.all(policy.z0_star[:, 0, :] == policy.rep_lower)
        assert np.all(policy.z1_star[:, 0, :] == policy.rep_lower)
        assert np.all(policy.z0_star[:, -1, :] == policy.rep_upper)
        assert np.all(policy.z1_star[:, -1, :] == policy.rep_upper)
        assert policy.rep_lower == pytest.approx(0.0)
        assert policy.rep_upper == pytest.approx(2.0 * math.sqrt(2.0))

    def test_interior_policy_within_truncation(self, dom_field, dom_spec):
        field, policy = dom_field
        K = field.grid.resolve_K(dom_spec)
        assert np.all(np.abs(policy.z0_star) <= K + 1e-12)
        assert np.all(np.abs(policy.z1_star) <= K + 1e-12)

    def test_boundary_flags(self, dom_field):
        _, policy = dom_field
        assert np.all(policy.boundary_flag[:, 0, :] == 1)
        assert np.all(policy.boundary_flag[:, -1, :] == 2)
        assert np.all(policy.boundary_flag[:, 1:-1, :] == 0)

    def test_deterministic_rerun(self, dom_field, dom_spec):
        field, policy = dom_field
        bvals = boundary.make_boundary(dom_spec)
        again, pol2 = hjb.solve_interior(dom_spec, field.grid, bvals)
        assert np.array_equal(field.values, again.values)
        assert np.array_equal(policy.z0_star, pol2.z0_star)
        assert np.array_equal(policy.z1_star, pol2.z1_star)

    def test_frozen_midpoint_regression(self, dom_field):
        field, _ = dom_field
        assert field.values[0, 10, 5] == pytest.approx(
            0.5495383898942505, abs=1e-12
        )

    def test_envelope_sandwich(self, dom_field, ndom_field, dom_spec,
                               ndom_spec):
        for spec, pair in ((dom_spec, dom_field), (ndom_spec, ndom_field)):
            report = hjb.check_apriori(spec, pair[0])
            assert report.passed
            assert report.worst_below >= -report.slack_layer
            assert report.worst_above <= report.slack_layer

    def test_corrupted_node_fails_sandwich(self, dom_field, dom_spec):
        # the slack scales with max|u|, so the breach must outrun its own
        # inflation: corrupt near the horizon, where the upper envelope
        # c_up*(T-t) leaves the least headroom
        field, _ = dom_field
        bad = np.array(field.values)
        c_up = field.info["c_upper"]
        bad[24, 7, 4] += 4.0 * abs(c_up) * dom_spec.horizon_T
        broken = hjb.ValueField(
            values=bad, t_grid=field.t_grid, s_grid=field.s_grid,
            p_grid=field.p_grid, in_layer=field.in_layer, grid=field.grid,
            band=field.band, t_star=field.t_star, info=field.info,
        )
        assert not hjb.check_apriori(dom_spec, broken).passed

    def test_solve_info_records_certificate(self, dom_field):
        field, _ = dom_field
        info = field.info
        cert = max(abs(info["c_upper"]), abs(info["c_lower"]))
        cert *= info["terminal_layer_eps"]
        assert info["layer_bias_certificate"] == pytest.approx(cert)
        assert info["substeps"] > 0
        assert info["boundary_mode"] == "closed-form"

    def test_slice_interp_matches_nodes(self, dom_field):
        field, _ = dom_field
        for k in (0, 11):
            for i in (0, 5, 20):
                for j in (0, 4, 10):
                    got = field.slice_interp(
                        k, float(field.s_grid[i]), float(field.p_grid[j])
                    )
                    assert got == pytest.approx(
                        field.values[k, i, j], rel=1e-14, abs=1e-14
                    )

    def test_w_at_rejects_points_off_band(self, dom_field):
        field, _ = dom_field
        with pytest.raises(DomainError):
            field.w_at(0, 5.0, 0.5)
        with pytest.raises(DomainError):
            field.w_at(0, -1.0, 0.5)
        inside = field.w_at(0, 0.9, 0.5)
        assert math.isfinite(float(inside))

    def test_values_increase_toward_collapse(self, dom_field):
        # the payout-rate term is positive, so along the lower wall the
        # principal's remaining value shrinks as the horizon approaches
        field, _ = dom_field
        mid = field.values[:, 10, 5]
        assert float(mid[0]) > float(mid[-1])


class TestSchemeStructure:
    def test_update_monotone_in_data(self, dom_spec):
        # raising the previous slice anywhere never lowers the update
        bvals = boundary.make_boundary(dom_spec)
        grid = hjb.GridSpec(n_time=12, n_gap=12, n_belief=8)
        st = hjb._Stepper(dom_spec, grid, bvals)
        rng = np.random.default_rng(3)
        u = rng.normal(size=(grid.n_belief + 1, grid.n_gap + 1))
        bump = np.abs(rng.normal(size=u.shape))
        t_lo = 0.9
        t_hi = t_lo + st.dt_target
        lo, _ = st.substep(u, t_lo, t_hi, False)
        hi, _ = st.substep(u + bump, t_lo, t_hi, False)
        assert np.all(hi >= lo - 1e-12)

    def test_comparison_under_shifted_wall_data(self, dom_spec):
        # Dirichlet data shifted up by delta > 0 produce a field nowhere
        # smaller (discrete comparison principle)
        base = boundary.make_boundary(dom_spec)
        delta = 0.35
        shifted = boundary.BoundaryValues(
            mode="closed-form",
            band=base.band,
            wbar=lambda t: base.wbar(t) + delta,
            wunder=lambda t: base.wunder(t) + delta,
            screening_upper=base.screening_upper,
            screening_lower=base.screening_lower,
        )
        grid = hjb.GridSpec(n_time=12, n_gap=8, n_belief=8)
        f0, _ = hjb.solve_interior(dom_spec, grid, base)
        f1, _ = hjb.solve_interior(dom_spec, grid, shifted)
        assert np.all(f1.values >= f0.values - 1e-12)
