"""Tests for weylgauge.paths_action: paths, potentials, actions and extremals."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from weylgauge.errors import ConvergenceError, InvalidPathError
from weylgauge.metric_catalog import sphere
from weylgauge.paths_action import (
    LagrangianSpec,
    Path,
    action,
    action_gradient,
    action_parts,
    arc_length,
    el_residual,
    find_extremal,
    gradient_potential,
    hamilton_principal_function,
    homogeneous_action,
    line_integral,
    polygon_path,
    resolve_potential,
    shoot_geodesic,
    smooth_perturbation,
    solenoid,
    straight_path,
    uniform_potential,
)
from weylgauge.utils import fitted_order
from weylgauge.weyl_gauge import continuing_union


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------


class TestPath:
    def test_zero_increment_is_invalid(self):
        with pytest.raises(InvalidPathError, match="zero"):
            Path([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], [0.0, 0.5, 0.5])

    def test_param_count_must_match(self):
        with pytest.raises(InvalidPathError):
            Path([[0.0], [1.0]], [0.0, 0.5, 1.0])

    def test_single_node_is_invalid(self):
        with pytest.raises(InvalidPathError):
            Path([[0.0, 0.0]], [0.0])

    def test_one_dimensional_nodes_are_promoted(self):
        assert Path([0.0, 1.0, 3.0], [0.0, 1.0, 2.0]).dim == 1

    def test_inverted_negates_increments(self):
        path = straight_path([0.0, 0.0], [1.0, 2.0], 2.0, 4)
        inv = path.inverted()
        assert np.allclose(inv.start, path.end)
        assert np.all(inv.increments < 0.0)
        assert inv.duration == pytest.approx(path.duration)

    def test_retraced_keeps_increasing_parameter(self):
        path = straight_path([0.0, 0.0], [1.0, 2.0], 2.0, 4)
        back = path.retraced()
        assert np.all(back.increments > 0.0)
        assert np.allclose(back.nodes, path.nodes[::-1])

    def test_nodes_are_read_only(self):
        path = straight_path([0.0], [1.0], 1.0, 2)
        with pytest.raises(ValueError):
            path.nodes[0, 0] = 5.0

    def test_polygon_closes(self):
        square = polygon_path([[0, 0], [1, 0], [1, 1], [0, 1]], per_edge=3)
        assert square.is_closed()
        assert square.n_segments == 12


# ---------------------------------------------------------------------------
# Potentials and line integrals
# ---------------------------------------------------------------------------


class TestLineIntegral:
    def test_uniform_potential_midpoint_is_exact(self):
        pot = uniform_potential([0.5, -2.0])
        path = straight_path([0.0, 0.0], [2.0, 1.0], 1.0, 5)
        assert line_integral(path, pot) == pytest.approx(0.5 * 2.0 - 2.0 * 1.0)
        assert line_integral(path, pot, exact=True) == pytest.approx(-1.0)

    def test_solenoid_loop_encloses_flux(self):
        loop = polygon_path([[1, -1], [1, 1], [-1, 1], [-1, -1]])
        assert line_integral(loop, solenoid(2.5), exact=True) == pytest.approx(2.5, rel=1e-12)

    def test_solenoid_midpoint_rule_converges(self):
        loop = polygon_path([[1, -1], [1, 1], [-1, 1], [-1, -1]], per_edge=200)
        assert line_integral(loop, solenoid(2.5)) == pytest.approx(2.5, rel=1e-4)

    def test_loop_missing_the_puncture_has_no_phase(self):
        loop = polygon_path([[2, -1], [3, -1], [3, 1], [2, 1]])
        assert line_integral(loop, solenoid(2.5), exact=True) == pytest.approx(0.0, abs=1e-14)

    def test_inverse_path_negates_integral(self):
        path = straight_path([1.0, -1.0], [0.5, 2.0], 1.0, 7)
        pot = solenoid(1.3)
        assert line_integral(path.inverted(), pot, exact=True) == pytest.approx(
            -line_integral(path, pot, exact=True)
        )

    def test_segment_through_puncture_is_rejected(self):
        with pytest.raises(InvalidPathError, match="puncture"):
            line_integral(straight_path([-1.0, 0.0], [1.0, 0.0], 1.0, 1), solenoid(1.0))

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidPathError):
            line_integral(straight_path([0.0], [1.0], 1.0, 2), solenoid(1.0))

    @settings(max_examples=30, deadline=None)
    @given(nodes=arrays(np.float64, (6, 2), elements=st.floats(-3, 3)))
    def test_gradient_potential_integral_depends_on_endpoints_only(self, nodes):
        def scalar(x):
            return np.sin(x[..., 0]) * x[..., 1] + 0.3 * x[..., 1] ** 2

        pot = gradient_potential(scalar, 2)
        path = Path(nodes, np.arange(6.0))
        expected = float(scalar(nodes[-1]) - scalar(nodes[0]))
        assert line_integral(path, pot, exact=True) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("potential_id", ["solenoid:2", "uniform:1,2"])
    def test_resolve_potential(self, potential_id):
        assert resolve_potential(potential_id).dim == 2

    def test_unknown_potential(self):
        with pytest.raises(InvalidPathError):
            resolve_potential("monopole:1")


# ---------------------------------------------------------------------------
# Actions
# ---------------------------------------------------------------------------


class TestAction:
    def test_lagrangian_needs_positive_mass(self, plane):
        with pytest.raises(InvalidPathError):
            LagrangianSpec(plane, 0.0)

    def test_charged_lagrangian_needs_potential(self, plane):
        with pytest.raises(InvalidPathError):
            LagrangianSpec(plane, 1.0, kind="charged", e=1.0)

    def test_straight_line_closed_form(self, plane):
        lag = LagrangianSpec(plane, 2.0)
        path = straight_path([0.0, 0.0], [3.0, 4.0], 2.5, 10)
        assert action(path, lag) == pytest.approx(0.5 * 2.0 * (25.0 / 2.5 + 2.5))

    def test_charged_action_splits(self, plane):
        lag = LagrangianSpec(plane, 1.0, kind="charged", e=0.5, potential=uniform_potential([1.0, 0.0]))
        path = straight_path([0.0, 0.0], [2.0, 0.0], 1.0, 4)
        mass, pot = action_parts(path, lag)
        assert pot == pytest.approx(1.0)
        assert action(path, lag) == pytest.approx(mass + pot)

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_action_is_additive_over_continuing_union(self, sphere2, seed):
        rng = np.random.default_rng(seed)
        lag = LagrangianSpec(sphere2, 1.3, kind="charged", e=0.8, potential=uniform_potential([0.4, -0.2]))
        first = smooth_perturbation(straight_path([1.0, 0.2], [1.3, 0.6], 1.0, 8), 0.05, rng)
        second = smooth_perturbation(straight_path([1.3, 0.6], [1.1, 1.2], 0.7, 5, tau0=3.0), 0.05, rng)
        joined = continuing_union(first, second)
        assert action(joined, lag) == pytest.approx(action(first, lag) + action(second, lag), abs=1e-12)

    def test_retracing_keeps_mass_part_and_flips_potential_part(self, plane, rng):
        lag = LagrangianSpec(plane, 1.0, kind="charged", e=1.5, potential=solenoid(2.0, center=(3.0, 3.0)))
        path = smooth_perturbation(straight_path([0.0, 0.0], [1.0, 2.0], 1.0, 12), 0.1, rng)
        mass, pot = action_parts(path, lag)
        back_mass, back_pot = action_parts(path.retraced(), lag)
        assert pot != 0.0
        assert back_mass == pytest.approx(mass, rel=1e-13)
        assert back_pot == pytest.approx(-pot, rel=1e-13)

    def test_meridian_arc_length(self, sphere2):
        path = straight_path([0.5, 1.0], [1.5, 1.0], 1.0, 8)
        assert arc_length(path, sphere2) == pytest.approx(2.0)

    def test_gradient_matches_finite_differences(self, sphere2, rng):
        lag = LagrangianSpec(sphere2, 1.3)
        path = smooth_perturbation(straight_path([1.0, 0.2], [1.4, 0.9], 1.0, 6), 0.05, rng)
        grad = action_gradient(path, lag)
        h = 1e-6
        for i, d in [(2, 0), (3, 1), (0, 1)]:
            up, down = np.array(path.nodes), np.array(path.nodes)
            up[i, d] += h
            down[i, d] -= h
            numeric = (action(path.with_nodes(up), lag) - action(path.with_nodes(down), lag)) / (2 * h)
            assert grad[i, d] == pytest.approx(numeric, rel=1e-6, abs=1e-8)


# ---------------------------------------------------------------------------
# Extremals
# ---------------------------------------------------------------------------


class TestExtremal:
    def test_flat_extremal_is_straight(self, plane, rng):
        lag = LagrangianSpec(plane, 1.0)
        x, y = np.array([0.0, 0.0]), np.array([1.0, 2.0])
        start = smooth_perturbation(straight_path(x, y, 1.0, 16), 0.1, rng)
        path = find_extremal(lag, x, y, 1.0, 16, init=start)
        assert np.allclose(path.nodes, straight_path(x, y, 1.0, 16).nodes, atol=1e-9)
        assert el_residual(path, lag) < 1e-10

    def test_sphere_extremal_matches_shooting(self, sphere2):
        lag = LagrangianSpec(sphere2, 1.0)
        x, y = [1.0, 0.2], [1.4, 0.9]
        path = find_extremal(lag, x, y, 1.0, 128)
        oracle = shoot_geodesic(sphere2, x, y, 1.0, params=path.params)
        assert np.max(np.abs(path.nodes - oracle.nodes)) < 1e-4

    def test_action_is_stationary_to_second_order(self, sphere2):
        lag = LagrangianSpec(sphere2, 1.0)
        path = find_extremal(lag, [1.0, 0.2], [1.4, 0.9], 1.0, 64)
        base = action(path, lag)
        changes = [
            abs(action(smooth_perturbation(path, s, np.random.default_rng(5)), lag) - base)
            for s in (1e-2, 5e-3)
        ]
        assert changes[0] / changes[1] == pytest.approx(4.0, rel=0.05)

    def test_uniform_potential_does_not_bend_paths(self, sphere2):
        plain = LagrangianSpec(sphere2, 1.0)
        charged = LagrangianSpec(sphere2, 1.0, kind="charged", e=2.0, potential=uniform_potential([0.3, -0.7]))
        a = find_extremal(plain, [1.0, 0.2], [1.4, 0.9], 1.0, 32)
        b = find_extremal(charged, [1.0, 0.2], [1.4, 0.9], 1.0, 32)
        assert np.allclose(a.nodes, b.nodes, atol=1e-8)

    def test_sphere_action_converges_at_second_order(self, sphere2):
        lag = LagrangianSpec(sphere2, 1.0)
        (t1, p1), (t2, p2) = (1.0, 0.2), (1.4, 0.9)
        chord = math.cos(t1) * math.cos(t2) + math.sin(t1) * math.sin(t2) * math.cos(p2 - p1)
        length = 2.0 * math.acos(chord)
        exact = 0.5 * (length**2 + 1.0)
        levels = [8, 16, 32, 64]
        errors = [abs(action(find_extremal(lag, [t1, p1], [t2, p2], 1.0, n), lag) - exact) for n in levels]
        assert fitted_order([1.0 / n for n in levels], errors) >= 1.8

    def test_flat_charged_action_converges_at_second_order(self, plane):
        potential = solenoid(2.0)
        lag = LagrangianSpec(plane, 1.0, kind="charged", e=1.0, potential=potential)
        x, y = np.array([1.0, 0.5]), np.array([-0.5, 1.5])
        chord = straight_path(x, y, 1.0, 1)
        exact = 0.5 * (float(np.sum((y - x) ** 2)) + 1.0) + line_integral(chord, potential, exact=True)
        levels = [8, 16, 32, 64]
        errors = [abs(action(find_extremal(lag, x, y, 1.0, n), lag) - exact) for n in levels]
        assert fitted_order([1.0 / n for n in levels], errors) >= 1.8

    def test_iteration_budget_exhausted(self, sphere2):
        lag = LagrangianSpec(sphere2, 1.0)
        with pytest.raises(ConvergenceError) as exc:
            find_extremal(lag, [1.0, 0.2], [1.4, 0.9], 1.0, 32, max_iterations=0)
        assert exc.value.residual > 0.0

    def test_too_few_segments(self, plane):
        with pytest.raises(InvalidPathError):
            find_extremal(LagrangianSpec(plane, 1.0), [0, 0], [1, 1], 1.0, 2)


class TestPrincipalFunction:
    def test_flat_closed_form(self, plane):
        lag = LagrangianSpec(plane, 1.5)
        eps, length = 0.7, math.hypot(1.0, 2.0)
        value = hamilton_principal_function(lag, [0, 0], [1, 2], eps, segments=8)
        assert value == pytest.approx(0.75 * (length**2 / eps + eps), rel=1e-10)

    def test_homogeneous_action_is_mass_times_length(self, plane):
        lag = LagrangianSpec(plane, 1.5)
        assert homogeneous_action(lag, [0, 0], [1, 2], segments=8) == pytest.approx(
            1.5 * math.hypot(1.0, 2.0), rel=1e-8
        )

    def test_homogeneous_action_on_sphere(self):
        metric = sphere(1.0)
        lag = LagrangianSpec(metric, 1.0)
        # along a meridian the geodesic length is the colatitude difference
        assert homogeneous_action(lag, [0.5, 0.3], [1.3, 0.3]) == pytest.approx(0.8, rel=1e-6)


class TestSmoothPerturbation:
    def test_endpoints_fixed(self, rng):
        path = straight_path([0.0, 0.0], [1.0, 1.0], 1.0, 10)
        moved = smooth_perturbation(path, 0.3, rng)
        assert np.array_equal(moved.start, path.start)
        assert np.array_equal(moved.end, path.end)
        assert not np.allclose(moved.nodes, path.nodes)
