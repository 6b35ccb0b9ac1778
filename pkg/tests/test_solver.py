"""Tests for box projection, the three solvers, and their certificates."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from paraconvex.exceptions import DimensionMismatch, UnsupportedNetwork
from paraconvex.networks import (
    FeedforwardNet,
    MlpParams,
    ParamLogSumExpNet,
    ParamMaxAffineNet,
    forward,
    forward_batch,
    smooth_twin,
    u_bank,
)
from paraconvex.numerics import BoxDomain, Rng, grid_minimize
from paraconvex.solver import (
    SolveOptions,
    SolveResult,
    first_order_gap,
    minimize,
    minimize_fnn,
    minimize_pma,
    minimize_smooth_convex,
    project_box,
)
from paraconvex.training import init_network


def _grid_value(net, x, domain, points):
    _, gval = grid_minimize(
        lambda Ug: forward_batch(net, np.tile(x, (Ug.shape[0], 1)), Ug),
        domain,
        points,
        vectorized=True,
    )
    return gval


def _single_plane_plse(slope, offset, T=0.1):
    embed = MlpParams(
        weights=[np.zeros((2, 1))], biases=[np.array([slope, offset])]
    )
    return ParamLogSumExpNet(n=1, m=1, I=1, embed=embed, T=T)


def _symmetric_embed():
    # planes u and -u for every x
    return MlpParams(weights=[np.zeros((4, 1))], biases=[np.array([1.0, -1.0, 0.0, 0.0])])


class TestProjectBox:
    def test_inside_unchanged(self):
        dom = BoxDomain.symmetric(2)
        u = np.array([0.3, -0.7])
        assert_array_equal(project_box(u, dom), u)

    def test_clamp(self):
        dom = BoxDomain.symmetric(2)
        assert_array_equal(project_box(np.array([2.0, -3.0]), dom), [1.0, -1.0])

    def test_idempotent(self):
        dom = BoxDomain(np.array([-0.5, 0.0]), np.array([0.5, 2.0]))
        u = np.array([9.0, -9.0])
        once = project_box(u, dom)
        assert_array_equal(project_box(once, dom), once)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            project_box(np.array([0.0, 0.0]), BoxDomain.symmetric(1))


class TestSolveOptions:
    def test_defaults(self):
        o = SolveOptions()
        assert o.max_iters == 500 and o.restarts == 16
        assert o.homotopy_schedule == (0.1, 0.01, 1e-3, 1e-4)

    @pytest.mark.parametrize(
        "bad",
        [
            {"max_iters": 0},
            {"grad_tolerance": 0.0},
            {"initial_step": -1.0},
            {"backtrack": 1.0},
            {"armijo": 0.0},
            {"homotopy_schedule": ()},
            {"homotopy_schedule": (0.1, 0.1)},
            {"homotopy_schedule": (0.01, 0.1)},
            {"homotopy_schedule": (0.1, -0.01)},
            {"restarts": 0},
        ],
    )
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            SolveOptions(**bad)


class TestFirstOrderGap:
    def test_nonnegative_and_zero_at_zero_gradient(self):
        dom = BoxDomain.symmetric(3)
        assert first_order_gap(np.zeros(3), np.array([0.5, -0.5, 0.0]), dom) == 0.0

    def test_linear_exactness(self):
        # for f(u) = g.u the gap at u equals f(u) - min f exactly
        dom = BoxDomain.symmetric(2)
        g = np.array([2.0, -3.0])
        u = np.array([0.5, 0.25])
        want = g @ u - (-abs(g[0]) - abs(g[1]))
        assert_allclose(first_order_gap(g, u, dom), want)


class TestMinimizeSmoothConvex:
    def test_single_plane_hits_corner(self):
        net = _single_plane_plse(1.0, 0.0)
        res = minimize_smooth_convex(net, np.array([0.0]), BoxDomain.symmetric(1))
        assert_array_equal(res.u_star, [-1.0])
        assert_allclose(res.value, -1.0)
        assert res.certificate <= 1e-9

    def test_symmetric_planes_center(self):
        net = ParamLogSumExpNet(n=1, m=1, I=2, embed=_symmetric_embed(), T=0.1)
        res = minimize_smooth_convex(net, np.array([0.0]), BoxDomain.symmetric(1))
        assert abs(res.u_star[0]) <= 1e-6
        assert_allclose(res.value, 0.1 * np.log(2.0), atol=1e-9)

    def test_matches_grid_oracle(self):
        for trial in range(12):
            m = 1 + trial % 2
            net = init_network("plse", 2, m, seed=5000 + trial, I=8, hidden=(12, 10))
            x = Rng(6000 + trial).uniform_in(-1.0, 1.0, 2)
            dom = BoxDomain.symmetric(m)
            res = minimize_smooth_convex(net, x, dom)
            gval = _grid_value(net, x, dom, 4001 if m == 1 else 401)
            assert res.value <= gval + 1e-4
            # certified interval contains the oracle value
            assert res.value - res.certificate <= gval + 1e-12

    def test_feasibility_exact(self):
        net = init_network("plse", 1, 2, seed=31, I=6, hidden=(8,))
        dom = BoxDomain(np.array([-0.25, 0.1]), np.array([0.25, 0.9]))
        res = minimize_smooth_convex(net, np.array([0.6]), dom)
        assert dom.contains(res.u_star)

    def test_monotone_descent(self):
        net = init_network("plse", 2, 2, seed=33, I=8, hidden=(12, 10))
        res = minimize_smooth_convex(
            net, np.array([0.2, -0.8]), BoxDomain.symmetric(2),
            SolveOptions(keep_trace=True),
        )
        diffs = np.diff(res.trace)
        assert np.all(diffs <= 1e-15)

    def test_wrong_kind_rejected(self):
        net = init_network("pma", 1, 1, seed=0, I=3)
        with pytest.raises(UnsupportedNetwork):
            minimize_smooth_convex(net, np.array([0.0]), BoxDomain.symmetric(1))

    def test_result_invariants(self):
        net = init_network("plse", 1, 1, seed=8, I=5)
        x = np.array([0.1])
        res = minimize_smooth_convex(net, x, BoxDomain.symmetric(1))
        assert res.value == forward(net, x, res.u_star)
        assert res.certificate >= 0.0
        assert res.wall_time_s >= 0.0


class TestMinimizePma:
    def test_single_plane_corner(self):
        embed = MlpParams(weights=[np.zeros((2, 1))], biases=[np.array([2.0, 0.5])])
        net = ParamMaxAffineNet(n=1, m=1, I=1, embed=embed)
        res = minimize_pma(net, np.array([0.0]), BoxDomain.symmetric(1))
        assert_allclose(res.u_star, [-1.0], atol=1e-9)
        assert_allclose(res.value, -1.5, atol=1e-9)

    def test_symmetric_planes(self):
        net = ParamMaxAffineNet(n=1, m=1, I=2, embed=_symmetric_embed())
        res = minimize_pma(net, np.array([0.0]), BoxDomain.symmetric(1))
        assert abs(res.u_star[0]) <= 1e-4
        assert abs(res.value) <= 1e-4 * np.log(2.0) + 1e-9
        # certificate carries the final-temperature sandwich term
        assert res.certificate >= 1e-4 * np.log(2.0) - 1e-15

    def test_certified_interval_contains_oracle(self):
        for trial in range(8):
            net = init_network("pma", 2, 2, seed=7000 + trial, I=8, hidden=(12, 10))
            x = Rng(8000 + trial).uniform_in(-1.0, 1.0, 2)
            dom = BoxDomain.symmetric(2)
            res = minimize_pma(net, x, dom)
            gval = _grid_value(net, x, dom, 401)
            assert res.value - res.certificate <= gval + 1e-12
            # the solver may legitimately beat the lattice by its
            # discretization error: Lipschitz constant times half-diagonal
            A_u, _ = u_bank(net, x)
            lip = np.linalg.norm(A_u, axis=1).max()
            slack = lip * (2.0 / 400 / 2) * np.sqrt(2)
            assert gval <= res.value + slack + 1e-12

    def test_homotopy_consistency_with_twin(self):
        net = init_network("pma", 1, 1, seed=71, I=10)
        x = np.array([0.35])
        opts = SolveOptions()
        res = minimize_pma(net, x, BoxDomain.symmetric(1), opts)
        T_final = opts.homotopy_schedule[-1]
        twin = smooth_twin(net, T_final)
        gap = forward(twin, x, res.u_star) - res.value
        assert -1e-9 <= gap <= T_final * np.log(net.I) + 1e-9

    def test_wrong_kind_rejected(self):
        net = init_network("lse", 1, 1, seed=0, I=3)
        with pytest.raises(UnsupportedNetwork):
            minimize_pma(net, np.array([0.0]), BoxDomain.symmetric(1))


def _abs_value_fnn():
    # lrelu(u) + lrelu(-u) = 0.99|u|: unique minimum 0 at u = 0
    W1 = np.array([[0.0, 1.0], [0.0, -1.0]])
    W2 = np.array([[1.0, 1.0]])
    return FeedforwardNet(
        n=1, m=1,
        mlp=MlpParams(weights=[W1, W2], biases=[np.zeros(2), np.zeros(1)]),
    )


class TestMinimizeFnn:
    def test_known_landscape(self):
        res = minimize_fnn(
            _abs_value_fnn(), np.array([0.3]), BoxDomain.symmetric(1),
            SolveOptions(seed=1),
        )
        assert abs(res.u_star[0]) <= 1e-6
        assert abs(res.value) <= 1e-6
        assert res.certificate == np.inf

    def test_more_restarts_never_worse(self):
        for trial in range(5):
            net = init_network("fnn", 1, 1, seed=100 + trial, hidden=(8, 8))
            x = Rng(200 + trial).uniform_in(-1.0, 1.0, 1)
            v1 = minimize_fnn(net, x, BoxDomain.symmetric(1),
                              SolveOptions(seed=trial, restarts=1)).value
            v16 = minimize_fnn(net, x, BoxDomain.symmetric(1),
                               SolveOptions(seed=trial, restarts=16)).value
            assert v16 <= v1 + 1e-12

    def test_matches_grid_oracle(self):
        for trial in range(8):
            net = init_network("fnn", 1, 1, seed=300 + trial, hidden=(8, 8))
            x = Rng(400 + trial).uniform_in(-1.0, 1.0, 1)
            dom = BoxDomain.symmetric(1)
            res = minimize_fnn(net, x, dom, SolveOptions(seed=trial))
            gval = _grid_value(net, x, dom, 4001)
            assert res.value <= gval + 1e-3

    def test_deterministic_given_seed(self):
        net = init_network("fnn", 1, 2, seed=55, hidden=(8, 8))
        x = np.array([0.2])
        dom = BoxDomain.symmetric(2)
        a = minimize_fnn(net, x, dom, SolveOptions(seed=9))
        b = minimize_fnn(net, x, dom, SolveOptions(seed=9))
        assert_array_equal(a.u_star, b.u_star)
        assert a.value == b.value

    def test_monotone_best_value(self):
        net = init_network("fnn", 1, 2, seed=56, hidden=(8, 8))
        res = minimize_fnn(net, np.array([0.4]), BoxDomain.symmetric(2),
                           SolveOptions(seed=3, keep_trace=True))
        assert np.all(np.diff(res.trace) <= 1e-15)

    def test_feasibility(self):
        net = init_network("fnn", 1, 2, seed=57, hidden=(8,))
        dom = BoxDomain(np.array([0.0, -2.0]), np.array([0.5, -1.0]))
        res = minimize_fnn(net, np.array([0.9]), dom, SolveOptions(seed=2))
        assert dom.contains(res.u_star)

    def test_wrong_kind_rejected(self):
        net = init_network("plse", 1, 1, seed=0, I=3)
        with pytest.raises(UnsupportedNetwork):
            minimize_fnn(net, np.array([0.0]), BoxDomain.symmetric(1))


class TestDispatch:
    @pytest.mark.parametrize("kind", ["fnn", "ma", "lse", "pma", "plse"])
    def test_routes_by_kind(self, kind):
        net = init_network(kind, 1, 1, seed=60, I=4, hidden=(6,))
        res = minimize(net, np.array([0.2]), BoxDomain.symmetric(1),
                       SolveOptions(seed=1))
        assert isinstance(res, SolveResult)
        assert BoxDomain.symmetric(1).contains(res.u_star)
        assert res.value == forward(net, np.array([0.2]), res.u_star)

    def test_json_shape(self):
        net = init_network("fnn", 1, 1, seed=61, hidden=(6,))
        res = minimize(net, np.array([0.1]), BoxDomain.symmetric(1))
        doc = res.to_json()
        assert doc["certified"] is False and doc["certificate"] is None
        net2 = init_network("plse", 1, 1, seed=62, I=4, hidden=(6,))
        doc2 = minimize(net2, np.array([0.1]), BoxDomain.symmetric(1)).to_json()
        assert doc2["certified"] is True and doc2["certificate"] >= 0.0
        assert isinstance(doc2["u_star"], list)
