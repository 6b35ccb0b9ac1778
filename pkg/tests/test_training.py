"""Tests for datasets, config parsing, init, gradients, Adam, and training."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from paraconvex.exceptions import ConfigError, DimensionMismatch, TrainingDiverged
from paraconvex.networks import forward_batch, model_to_json
from paraconvex.numerics import BoxDomain, Rng, sample_uniform_box
from paraconvex.training import (
    AdamState,
    Dataset,
    TrainConfig,
    adam_step,
    init_network,
    load_dataset,
    mse_loss,
    parameters,
    parse_train_config,
    save_dataset,
    split_dataset,
    train,
    weight_gradients,
    xavier_init,
)


def _quadratic_dataset(n, m, count, seed):
    pts = sample_uniform_box(BoxDomain.symmetric(n + m), count, Rng(seed))
    X, U = pts[:, :n], pts[:, n:]
    y = -np.sum(X * X, axis=1) / (2 * n) + np.sum(U * U, axis=1) / (2 * m)
    return Dataset(n=n, m=m, X=X, U=U, y=y)


class TestDataset:
    def test_shape_validation(self):
        with pytest.raises(DimensionMismatch):
            Dataset(n=2, m=1, X=np.zeros((3, 1)), U=np.zeros((3, 1)), y=np.zeros(3))
        with pytest.raises(DimensionMismatch):
            Dataset(n=1, m=1, X=np.zeros((3, 1)), U=np.zeros((2, 1)), y=np.zeros(3))

    def test_finite_validation(self):
        with pytest.raises(ValueError):
            Dataset(n=1, m=1, X=np.array([[np.nan]]), U=np.zeros((1, 1)),
                    y=np.zeros(1))

    def test_points_view(self):
        ds = _quadratic_dataset(1, 1, 4, 0)
        pts = ds.points
        assert len(pts) == 4
        x, u, y = pts[2]
        assert x.shape == (1,) and u.shape == (1,) and isinstance(y, float)

    def test_csv_round_trip(self, tmp_path):
        ds = _quadratic_dataset(2, 3, 25, 9)
        path = tmp_path / "data.csv"
        save_dataset(ds, path)
        header = path.read_text().splitlines()[0]
        assert header == "x_1,x_2,u_1,u_2,u_3,y"
        back = load_dataset(path)
        assert back.n == 2 and back.m == 3
        assert_array_equal(back.X, ds.X)
        assert_array_equal(back.U, ds.U)
        assert_array_equal(back.y, ds.y)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ConfigError):
            load_dataset(path)


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.epochs == 100
        assert cfg.learning_rate == 1e-3
        assert cfg.batch_size == 64
        assert cfg.split_ratio == 0.9
        assert (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps) == (0.9, 0.999, 1e-8)

    @pytest.mark.parametrize(
        "bad",
        [
            {"epochs": 0},
            {"split_ratio": 0.0},
            {"split_ratio": 1.0},
            {"learning_rate": 0.0},
            {"batch_size": 0},
            {"adam_eps": 0.0},
        ],
    )
    def test_validation(self, bad):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)

    def test_parse_key_value_text(self):
        cfg = parse_train_config(
            """
            # protocol
            epochs = 25
            learning_rate = 5e-4
            batch_size=32
            seed = 9   # trailing comment
            """
        )
        assert cfg.epochs == 25 and cfg.learning_rate == 5e-4
        assert cfg.batch_size == 32 and cfg.seed == 9
        assert cfg.split_ratio == 0.9  # untouched default

    def test_parse_rejects_unknown_key(self):
        with pytest.raises(ConfigError):
            parse_train_config("momentum = 0.9")

    def test_parse_rejects_bad_value(self):
        with pytest.raises(ConfigError):
            parse_train_config("epochs = many")

    def test_parse_rejects_bare_line(self):
        with pytest.raises(ConfigError):
            parse_train_config("epochs")


class TestXavierInit:
    def test_scalar_bound(self):
        W = xavier_init(1, 1, Rng(0))
        assert W.shape == (1, 1)
        assert abs(W[0, 0]) <= np.sqrt(3.0)

    def test_wide_layer_bound(self):
        W = xavier_init(64, 64, Rng(1))
        bound = np.sqrt(6.0) / np.sqrt(128.0)
        assert W.shape == (64, 64)
        assert np.all(np.abs(W) <= bound)
        assert abs(W.mean()) < 0.02  # centered

    def test_determinism(self):
        assert_array_equal(xavier_init(8, 4, Rng(3)), xavier_init(8, 4, Rng(3)))


class TestInitNetwork:
    def test_mlp_kinds_shapes_and_zero_biases(self):
        fnn = init_network("fnn", 2, 3, seed=1, hidden=(16, 8))
        assert fnn.mlp.layer_widths == [5, 16, 8, 1]
        assert all(np.all(b == 0.0) for b in fnn.mlp.biases)
        plse = init_network("plse", 2, 3, seed=2, I=7, T=0.1, hidden=(16, 8))
        assert plse.embed.layer_widths == [2, 16, 8, (3 + 1) * 7]
        assert plse.T == 0.1 and plse.I == 7

    def test_bank_kinds_scalar_xavier_bound(self):
        lse = init_network("lse", 2, 1, seed=3, I=30, T=0.1)
        assert lse.A.shape == (30, 3) and lse.b.shape == (30,)
        assert np.all(np.abs(lse.A) <= np.sqrt(3.0))
        assert np.all(np.abs(lse.b) <= np.sqrt(3.0))

    def test_determinism_and_seed_field(self):
        a = init_network("pma", 1, 1, seed=5, I=4)
        b = init_network("pma", 1, 1, seed=5, I=4)
        assert a.seed == 5
        for p, q in zip(parameters(a), parameters(b)):
            assert_array_equal(p, q)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            init_network("rbf", 1, 1, seed=0)


class TestSplitDataset:
    def test_floor_sizes(self):
        ds = _quadratic_dataset(1, 1, 10, 4)
        tr, te = split_dataset(ds, 0.9, Rng(0))
        assert (tr.size, te.size) == (9, 1)

    def test_benchmark_scale_sizes(self):
        ds = _quadratic_dataset(1, 1, 5000, 4)
        tr, te = split_dataset(ds, 0.9, Rng(0))
        assert (tr.size, te.size) == (4500, 500)

    def test_disjoint_union(self):
        ds = _quadratic_dataset(1, 2, 40, 8)
        tr, te = split_dataset(ds, 0.7, Rng(1))
        joined = np.vstack([np.hstack([tr.X, tr.U]), np.hstack([te.X, te.U])])
        original = np.hstack([ds.X, ds.U])
        assert_array_equal(
            joined[np.lexsort(joined.T)], original[np.lexsort(original.T)]
        )

    def test_determinism(self):
        ds = _quadratic_dataset(1, 1, 30, 2)
        a_tr, _ = split_dataset(ds, 0.5, Rng(6))
        b_tr, _ = split_dataset(ds, 0.5, Rng(6))
        assert_array_equal(a_tr.X, b_tr.X)

    def test_bad_ratio(self):
        ds = _quadratic_dataset(1, 1, 10, 2)
        with pytest.raises(ConfigError):
            split_dataset(ds, 1.0, Rng(0))


class TestMseLoss:
    def test_perfect_fit_zero(self):
        # one affine plane fitting an affine target exactly
        net = init_network("ma", 1, 1, seed=0, I=1)
        X = np.array([[0.5], [-0.5]])
        U = np.array([[0.1], [0.9]])
        y = forward_batch(net, X, U)
        assert mse_loss(net, X, U, y) == 0.0

    def test_single_point(self):
        net = init_network("ma", 1, 1, seed=0, I=1)
        X, U = np.array([[0.2]]), np.array([[0.3]])
        y = forward_batch(net, X, U) - 1.0  # off by exactly one
        assert_allclose(mse_loss(net, X, U, y), 1.0)

    def test_two_point_average(self):
        net = init_network("ma", 1, 1, seed=0, I=1)
        X, U = np.array([[0.2], [0.4]]), np.array([[0.3], [0.5]])
        y = forward_batch(net, X, U) - np.array([1.0, 3.0])
        assert_allclose(mse_loss(net, X, U, y), 5.0)


class TestWeightGradients:
    def test_zero_residual_gives_zero_gradient(self):
        net = init_network("plse", 1, 1, seed=13, I=3, hidden=(4,))
        X, U = np.array([[0.2], [-0.7]]), np.array([[0.5], [0.1]])
        y = forward_batch(net, X, U)
        for g in weight_gradients(net, X, U, y):
            assert_allclose(g, np.zeros_like(g), atol=1e-15)

    def test_plse_offset_bias_chain(self):
        # single plane, single point: the embed output bias feeding b_1(x)
        # receives exactly 2 * residual
        net = init_network("plse", 1, 1, seed=17, I=1, hidden=(4,))
        X, U = np.array([[0.3]]), np.array([[-0.4]])
        resid = 0.25
        y = forward_batch(net, X, U) - resid
        grads = weight_gradients(net, X, U, y)
        out_bias_grad = grads[-1]  # embed final-layer bias, length (m+1)*I = 2
        assert_allclose(out_bias_grad[1], 2 * resid, rtol=1e-12)

    @pytest.mark.parametrize("kind", ["fnn", "ma", "lse", "pma", "plse"])
    def test_matches_finite_differences(self, kind):
        h = 1e-6
        for trial in range(3):
            net = init_network(kind, 2, 2, seed=900 + trial, I=4, hidden=(6, 5))
            rng = np.random.default_rng(800 + trial)
            X = rng.uniform(-1, 1, (7, 2))
            U = rng.uniform(-1, 1, (7, 2))
            y = rng.uniform(-1, 1, 7)
            grads = weight_gradients(net, X, U, y)
            for p, g in zip(parameters(net), grads):
                fd = np.zeros_like(p)
                it = np.nditer(p, flags=["multi_index"])
                for _ in it:
                    ix = it.multi_index
                    old = p[ix]
                    p[ix] = old + h
                    lp = mse_loss(net, X, U, y)
                    p[ix] = old - h
                    lm = mse_loss(net, X, U, y)
                    p[ix] = old
                    fd[ix] = (lp - lm) / (2 * h)
                rel = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1.0)
                assert rel < 1e-6


class TestAdam:
    def test_zero_gradient_no_move(self):
        p = [np.array([1.0, -2.0])]
        st = AdamState.for_params(p)
        new = adam_step(st, p, [np.zeros(2)], lr=1e-3)
        assert_array_equal(new[0], p[0])
        assert st.t == 1

    def test_first_step_magnitude(self):
        g = 0.5
        lr = 1e-3
        p = [np.array([1.0])]
        st = AdamState.for_params(p)
        new = adam_step(st, p, [np.array([g])], lr=lr)
        # bias correction makes m_hat = g and v_hat = g^2 at t=1
        expected = lr * g / (np.sqrt(g * g) + 1e-8)
        assert_allclose(p[0][0] - new[0][0], expected, rtol=1e-12)

    def test_sign_symmetry(self):
        p = [np.array([1.0])]
        st_pos = AdamState.for_params(p)
        st_neg = AdamState.for_params(p)
        up = adam_step(st_pos, p, [np.array([0.5])], lr=1e-3)
        down = adam_step(st_neg, p, [np.array([-0.5])], lr=1e-3)
        assert_allclose(1.0 - up[0][0], down[0][0] - 1.0, rtol=1e-12)

    def test_shape_mismatch(self):
        p = [np.zeros(2)]
        st = AdamState.for_params(p)
        with pytest.raises(DimensionMismatch):
            adam_step(st, p, [np.zeros(3)], lr=1e-3)


class TestTrain:
    def test_constant_labels_fit(self):
        ds = Dataset(
            n=1,
            m=1,
            X=sample_uniform_box(BoxDomain.symmetric(1), 300, Rng(5)),
            U=sample_uniform_box(BoxDomain.symmetric(1), 300, Rng(6)),
            y=np.full(300, 0.7),
        )
        net0 = init_network("fnn", 1, 1, seed=42)
        _, report = train(net0, ds, TrainConfig(epochs=100, seed=3))
        assert report.final_test_mse < 1e-3

    def test_deterministic_given_seed(self):
        ds = _quadratic_dataset(1, 1, 200, 12)
        cfg = TrainConfig(epochs=3, seed=11)
        net0 = init_network("plse", 1, 1, seed=1, I=5, hidden=(8,))
        net_a, rep_a = train(net0, ds, cfg)
        net_b, rep_b = train(net0, ds, cfg)
        assert rep_a.train_losses == rep_b.train_losses
        assert rep_a.test_losses == rep_b.test_losses
        assert model_to_json(net_a) == model_to_json(net_b)

    def test_input_net_untouched(self):
        ds = _quadratic_dataset(1, 1, 100, 13)
        net0 = init_network("lse", 1, 1, seed=2, I=4)
        before = [p.copy() for p in parameters(net0)]
        train(net0, ds, TrainConfig(epochs=2, seed=0))
        for p, q in zip(parameters(net0), before):
            assert_array_equal(p, q)

    def test_report_lengths(self):
        ds = _quadratic_dataset(1, 1, 100, 14)
        _, rep = train(
            init_network("ma", 1, 1, seed=3, I=4), ds, TrainConfig(epochs=5, seed=1)
        )
        assert len(rep.train_losses) == 5
        assert len(rep.test_losses) == 5
        assert rep.final_test_mse == rep.test_losses[-1]
        assert rep.wall_time_s > 0
        assert all(np.isfinite(v) for v in rep.train_losses)

    def test_split_is_recoverable(self):
        # callers can re-derive the internal split from the config seed
        ds = _quadratic_dataset(1, 1, 100, 15)
        cfg = TrainConfig(epochs=1, seed=21)
        net, _ = train(init_network("ma", 1, 1, seed=4, I=3), ds, cfg)
        tr, te = split_dataset(ds, cfg.split_ratio, Rng(cfg.seed))
        assert tr.size == 90 and te.size == 10

    def test_divergence_detected(self):
        ds = _quadratic_dataset(1, 1, 64, 16)
        cfg = TrainConfig(epochs=2, seed=0, learning_rate=1e200)
        with pytest.raises(TrainingDiverged):
            train(init_network("fnn", 1, 1, seed=5), ds, cfg)

    def test_dims_checked(self):
        ds = _quadratic_dataset(2, 1, 50, 17)
        with pytest.raises(DimensionMismatch):
            train(init_network("fnn", 1, 1, seed=6), ds, TrainConfig(epochs=1))
