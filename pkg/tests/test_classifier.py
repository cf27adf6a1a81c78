"""Classifier: preprocessing, layers, forward contracts, gradients, training."""

import hashlib
import math

import numpy as np
import pytest

from gaittrack.classifier import (
    FeatureStats,
    TcpcnModel,
    TrainConfig,
    TrainingCorpus,
    compute_feature_stats,
    evaluate_model,
    grad_check,
    load_model,
    loss,
    preprocess,
    quantize,
    quantize_tensor,
    save_model,
    train,
)
from gaittrack.classifier.layers import DilatedCausalConv
from gaittrack.classifier.preprocess import sparse_window


@pytest.fixture(scope="module")
def stats():
    return FeatureStats(mean=np.zeros(5), std=np.ones(5))


def random_clouds(rng, k, lo, hi):
    return [rng.standard_normal((int(rng.integers(lo, hi)), 5))
            for _ in range(k)]


class TestPreprocess:
    def test_exact_size_identity(self, stats):
        rng = np.random.default_rng(0)
        raw = [rng.standard_normal((100, 5))]
        out = preprocess(raw, stats, n_max=100, rng=rng, dtype=np.float64)
        assert np.array_equal(out[0], raw[0])

    def test_standardization_applied(self):
        rng = np.random.default_rng(1)
        st = FeatureStats(mean=np.arange(5.0), std=np.full(5, 2.0))
        raw = [rng.standard_normal((10, 5))]
        out = preprocess(raw, st, n_max=10, rng=rng, dtype=np.float64)
        assert np.allclose(out[0], (raw[0] - st.mean) / st.std)

    def test_oversize_subsampled_without_replacement(self, stats):
        rng = np.random.default_rng(2)
        raw = [np.arange(150 * 5, dtype=float).reshape(150, 5)]
        out = preprocess(raw, stats, n_max=100, rng=rng, dtype=np.float64)
        rows = {tuple(r) for r in out[0]}
        assert len(rows) == 100  # 100 distinct originals

    def test_undersize_keeps_every_original(self, stats):
        rng = np.random.default_rng(3)
        raw = [np.arange(30 * 5, dtype=float).reshape(30, 5)]
        out = preprocess(raw, stats, n_max=100, rng=rng, dtype=np.float64)
        assert out[0].shape == (100, 5)
        originals = {tuple(r) for r in raw[0]}
        emitted = [tuple(r) for r in out[0]]
        assert originals <= set(emitted)  # each original appears >= once
        assert set(emitted) <= originals

    def test_empty_cloud_rejected(self, stats):
        with pytest.raises(ValueError, match="empty"):
            preprocess([np.empty((0, 5))], stats, n_max=10,
                       rng=np.random.default_rng(0))

    def test_sparse_window_multiplicities(self, stats):
        rng = np.random.default_rng(4)
        raw = [rng.standard_normal((30, 5)), rng.standard_normal((140, 5))]
        pts, mult, counts = sparse_window(raw, stats, 100, rng,
                                          dtype=np.float64)
        assert counts.tolist() == [30, 100]
        assert mult[:30].sum() == 100       # padded copies sum to n_max
        assert np.all(mult[30:] == 1.0)     # subsampled side has no repeats

    def test_feature_stats(self):
        rng = np.random.default_rng(5)
        clouds = [rng.normal(3.0, 2.0, (50, 5)) for _ in range(20)]
        st = compute_feature_stats(clouds)
        stacked = np.concatenate(clouds)
        assert np.allclose(st.mean, stacked.mean(axis=0))
        assert np.allclose(st.std, stacked.std(axis=0))


class TestPcBlock:
    def test_permutation_invariance_exact(self):
        model = TcpcnModel(4, seed=0)
        rng = np.random.default_rng(1)
        cloud = rng.standard_normal((60, 5)).astype(np.float32)
        base = model.pc_features(cloud)
        for _ in range(10):
            assert np.array_equal(base,
                                  model.pc_features(cloud[rng.permutation(60)]))

    def test_identical_points_pool_to_single_branch(self):
        model = TcpcnModel(4, seed=2)
        point = np.random.default_rng(3).standard_normal(5).astype(np.float32)
        cloud = np.tile(point, (32, 1))
        pooled = model.pc_features(cloud)
        single = model.pc_features(point[None, :])
        assert np.allclose(pooled, single, atol=1e-6)

    def test_matches_per_point_loop_oracle(self):
        model = TcpcnModel(3, seed=4, dtype=np.float64)
        rng = np.random.default_rng(5)
        # non-trivial inference statistics
        for _, bn, _ in model.pc_blocks:
            bn.running_mean = rng.normal(0, 0.5, bn.n)
            bn.running_var = rng.uniform(0.5, 2.0, bn.n)
        cloud = rng.standard_normal((12, 5))

        outputs = []
        for point in cloud:  # explicit per-point loop
            h = point.copy()
            for lin, bn, _ in model.pc_blocks:
                h = h @ lin.params["W"] + lin.params["b"]
                h = (h - bn.running_mean) / np.sqrt(bn.running_var + 1e-5)
                h = bn.params["gamma"] * h + bn.params["beta"]
                h = np.where(h > 0, h, np.expm1(np.minimum(h, 0)))
            outputs.append(h)
        want = np.mean(outputs, axis=0)
        assert np.allclose(model.pc_features(cloud), want, atol=1e-9)


class TestDilatedConv:
    def naive(self, x, W, b, dilation):
        n_t, c_in = x.shape
        c_out = W.shape[2]
        out = np.tile(b, (n_t, 1))
        for s in range(n_t):
            for j in range(3):
                i = s - dilation * (2 - j)
                if i >= 0:
                    for ci in range(c_in):
                        out[s] += x[i, ci] * W[j, ci]
        return out

    def test_current_tap_identity(self):
        for dilation in (1, 2, 4):
            conv = DilatedCausalConv(1, 1, dilation,
                                     np.random.default_rng(0), np.float64)
            conv.params["W"][:] = 0
            conv.params["W"][2, 0, 0] = 1.0
            conv.params["b"][:] = 0
            x = np.random.default_rng(1).standard_normal((1, 16, 1))
            assert np.allclose(conv.forward(x), x)

    def test_impulse_response(self):
        conv = DilatedCausalConv(1, 1, 1, np.random.default_rng(0), np.float64)
        conv.params["W"][:, 0, 0] = [3.0, 5.0, 7.0]
        conv.params["b"][:] = 0
        x = np.zeros((1, 10, 1))
        x[0, 4, 0] = 1.0
        out = conv.forward(x)[0, :, 0]
        want = np.zeros(10)
        want[4], want[5], want[6] = 7.0, 5.0, 3.0  # kernel reversed-copied
        assert np.allclose(out, want)
        assert np.all(out[:4] == 0)  # no leakage to earlier times

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(7)
        for dilation in (1, 2, 4):
            conv = DilatedCausalConv(4, 3, dilation, rng, np.float64)
            x = rng.standard_normal((2, 15, 4))
            out = conv.forward(x)
            for b_idx in range(2):
                want = self.naive(x[b_idx], conv.params["W"],
                                  conv.params["b"], dilation)
                assert np.allclose(out[b_idx], want, atol=1e-9)

    def test_empty_time_axis_rejected(self):
        conv = DilatedCausalConv(2, 2, 1, np.random.default_rng(0))
        with pytest.raises(ValueError):
            conv.forward(np.zeros((1, 0, 2), dtype=np.float32))


class TestForward:
    def test_zero_head_gives_uniform(self):
        model = TcpcnModel(8, seed=1)
        model.head.params["W"][:] = 0
        model.head.params["b"][:] = 0
        probs = model.forward(
            np.random.default_rng(0).standard_normal((6, 10, 5)), mode="eval")
        assert np.allclose(probs, 1.0 / 8)

    def test_eval_deterministic(self):
        model = TcpcnModel(4, seed=2)
        seq = np.random.default_rng(1).standard_normal((8, 20, 5))
        assert np.array_equal(model.forward(seq, mode="eval"),
                              model.forward(seq, mode="eval"))

    def test_probabilities_valid(self):
        model = TcpcnModel(5, seed=3)
        seq = np.random.default_rng(2).standard_normal((3, 10, 12, 5))
        probs = model.forward(seq, mode="eval")
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)
        assert np.all(probs > 0)

    def test_causality_probe(self):
        # changing the last step must not move any earlier pre-pool activation
        model = TcpcnModel(4, seed=4)
        rng = np.random.default_rng(3)
        seq = rng.standard_normal((12, 16, 5)).astype(np.float32)
        _, temporal = model.forward(seq, mode="eval", return_temporal=True)
        bumped = seq.copy()
        bumped[-1] += rng.standard_normal((16, 5)).astype(np.float32)
        _, temporal2 = model.forward(bumped, mode="eval", return_temporal=True)
        assert np.array_equal(temporal[:-1], temporal2[:-1])
        assert not np.array_equal(temporal[-1], temporal2[-1])

    def test_train_mode_needs_rng(self):
        model = TcpcnModel(4, seed=5)
        with pytest.raises(ValueError, match="random generator"):
            model.forward(np.zeros((2, 4, 6, 5), dtype=np.float32),
                          mode="train")

    def test_unknown_mode(self):
        model = TcpcnModel(4, seed=5)
        with pytest.raises(ValueError, match="mode"):
            model.forward(np.zeros((2, 4, 6, 5), dtype=np.float32),
                          mode="predict")


class TestLoss:
    def test_perfect_prediction_zero(self):
        y = np.array([0.0, 1.0, 0.0])
        assert loss(y, y) == pytest.approx(0.0, abs=1e-9)

    def test_uniform_eight_way(self):
        y_hat = np.full(8, 1.0 / 8)
        y = np.eye(8)[3]
        assert loss(y_hat, y) == pytest.approx(math.log(8), rel=1e-9)

    def test_matches_scalar_computation(self):
        rng = np.random.default_rng(6)
        model = TcpcnModel(4, seed=6, dtype=np.float64)
        for _ in range(10):
            probs = rng.dirichlet(np.ones(4), size=3)
            labels = rng.integers(0, 4, size=3)
            y = np.eye(4)[labels]
            want = -np.mean([math.log(probs[i, labels[i]]) for i in range(3)])
            want += 1e-4 * sum(float((w ** 2).sum())
                               for w in model.weight_arrays())
            assert loss(probs, y, model, 1e-4) == pytest.approx(want,
                                                                rel=1e-9)

    def test_zero_probability_clamped(self):
        y_hat = np.array([1.0, 0.0])
        y = np.array([0.0, 1.0])
        assert loss(y_hat, y) == pytest.approx(-math.log(1e-12))


@pytest.fixture(scope="module")
def small():
    model = TcpcnModel(4, seed=7, dtype=np.float64, p_drop=0.0)
    rng = np.random.default_rng(8)
    seq = rng.standard_normal((2, 6, 8, 5))
    y = np.eye(4)[[0, 2]]
    return model, seq, y


class TestGradients:
    def test_batch_stats_path(self, small):
        model, seq, y = small
        err = grad_check(model, seq, y, n_samples=200,
                         rng=np.random.default_rng(1))
        assert err <= 1e-3

    def test_running_stats_path(self, small):
        model, seq, y = small
        err = grad_check(model, seq, y, n_samples=120, stats="running",
                         rng=np.random.default_rng(2))
        assert err <= 1e-3

    def test_zero_input_sequence_bias_gradients(self):
        # a zero sequence batched with a live one: bias gradients at the
        # input layer stay well-defined and must match finite differences
        model = TcpcnModel(3, seed=9, dtype=np.float64, p_drop=0.0)
        rng = np.random.default_rng(3)
        seq = np.stack([np.zeros((4, 6, 5)),
                        rng.standard_normal((4, 6, 5))])
        y = np.eye(3)[[1, 2]]

        def f():
            probs, _ = model._forward_full(
                seq, cache=False, stats="batch", update_running=False,
                dropout_rng=None, sorted_pool=False)
            return loss(probs, y, model, 0.0)

        model.zero_grads()
        probs = model.forward_train(seq, dropout_rng=None,
                                    update_running=False)
        model.backward(probs, y, l2=0.0)
        bias = model.pc_blocks[0][0].params["b"]
        grad = model.pc_blocks[0][0].grads["b"]
        worst = 0.0
        for i in range(len(bias)):
            orig = bias[i]
            bias[i] = orig + 1e-4
            hi = f()
            bias[i] = orig - 1e-4
            lo = f()
            bias[i] = orig
            numeric = (hi - lo) / 2e-4
            worst = max(worst, abs(numeric - grad[i])
                        / max(abs(numeric), abs(grad[i]), 1e-8))
        assert worst <= 1e-3

    def test_train_mode_rejected(self, small):
        model, seq, y = small
        with pytest.raises(ValueError, match="meaningless"):
            grad_check(model, seq, y, stats="train")

    def test_active_dropout_rejected(self, small):
        _, seq, y = small
        model = TcpcnModel(4, seed=7, dtype=np.float64, p_drop=0.5)
        with pytest.raises(ValueError, match="dropout"):
            grad_check(model, seq, y)

    def test_sparse_path_with_multiplicities(self, stats):
        # finite differences over the deduplicated forward
        model = TcpcnModel(3, seed=10, dtype=np.float64, p_drop=0.0)
        rng = np.random.default_rng(11)
        raw = random_clouds(rng, 8, 3, 7)  # 2 windows x 4 steps, tiny clouds
        pts_l, mult_l, counts = [], [], []
        srng = np.random.default_rng(12)
        for cloud in raw:
            p, m, c = sparse_window([cloud], stats, 10, srng,
                                    dtype=np.float64)
            pts_l.append(p)
            mult_l.append(m)
            counts.append(c[0])
        pts = np.concatenate(pts_l)
        mult = np.concatenate(mult_l)
        counts = np.array(counts)
        assert mult.max() > 1  # padding produced real multiplicities
        y = np.eye(3)[[0, 2]]

        def f():
            probs = model.forward_train_sparse(
                pts, mult, counts, 2, 4, dropout_rng=None,
                update_running=False)
            return loss(probs, y, model, 1e-4)

        model.zero_grads()
        probs = model.forward_train_sparse(pts, mult, counts, 2, 4,
                                           dropout_rng=None,
                                           update_running=False)
        model.backward(probs, y, l2=1e-4)
        worst = 0.0
        pick = np.random.default_rng(13)
        for layer, name, arr in model.parameters():
            flat = arr.reshape(-1)
            grad = layer.grads[name].reshape(-1)
            for i in pick.choice(flat.size, size=min(3, flat.size),
                                 replace=False):
                orig = flat[i]
                flat[i] = orig + 1e-4
                hi = f()
                flat[i] = orig - 1e-4
                lo = f()
                flat[i] = orig
                numeric = (hi - lo) / 2e-4
                denom = max(abs(numeric), abs(grad[i]), 1e-8)
                worst = max(worst, abs(numeric - grad[i]) / denom)
        assert worst <= 1e-3

    def test_sparse_equals_dense_forward(self, stats):
        model = TcpcnModel(3, seed=14, dtype=np.float64, p_drop=0.0)
        rng = np.random.default_rng(15)
        raw = random_clouds(rng, 4, 3, 6)
        dense = preprocess(raw, stats, 8, np.random.default_rng(16),
                           dtype=np.float64)
        probs_dense = model.forward_train(dense[None], dropout_rng=None,
                                          update_running=False)
        pts_l, mult_l, counts = [], [], []
        for step in dense:
            uniq, cnt = np.unique(step, axis=0, return_counts=True)
            pts_l.append(uniq)
            mult_l.append(cnt.astype(float))
            counts.append(len(uniq))
        probs_sparse = model.forward_train_sparse(
            np.concatenate(pts_l), np.concatenate(mult_l), np.array(counts),
            1, 4, dropout_rng=None, update_running=False)
        assert np.allclose(probs_dense, probs_sparse, atol=1e-12)


@pytest.fixture(scope="module")
def toy_corpus():
    # two classes separated by a velocity offset
    rng = np.random.default_rng(20)
    windows, labels = [], []
    for cls in (0, 1):
        for _ in range(60):
            win = [np.column_stack([
                rng.normal(0, 1, (12, 3)),
                rng.normal(2 * cls - 1, 0.3, (12, 1)),
                rng.uniform(0.5, 1.0, (12, 1))]) for _ in range(6)]
            windows.append(win)
            labels.append(cls)
    return TrainingCorpus(windows, np.array(labels), 2)


@pytest.fixture(scope="module")
def toy_model(toy_corpus):
    cfg = TrainConfig(learning_rate=5e-4, batch_size=8, max_epochs=50,
                      patience=8, n_max=16, seed=1)
    return train(toy_corpus, cfg)


def corpus_tensors(corpus, model, n_max=16):
    stats = FeatureStats(model.feature_mean.astype(float),
                         model.feature_std.astype(float))
    rng = np.random.default_rng(99)
    tensors = np.stack([preprocess(w, stats, n_max, rng) for w in
                        corpus.windows])
    return tensors, corpus.labels


class TestTraining:
    def test_toy_task_learned(self, toy_corpus, toy_model):
        model, logbook = toy_model
        assert len(logbook.epochs) <= 50
        tensors, labels = corpus_tensors(toy_corpus, model)
        _, acc = evaluate_model(model, tensors, labels)
        assert acc >= 0.99

    def test_seed_determinism(self, toy_corpus):
        cfg = TrainConfig(learning_rate=5e-4, batch_size=8, max_epochs=2,
                          patience=5, n_max=16, seed=7)

        def digest(model):
            h = hashlib.sha256()
            for _, _, arr in model.parameters():
                h.update(arr.tobytes())
            return h.hexdigest()

        m1, _ = train(toy_corpus, cfg)
        m2, _ = train(toy_corpus, cfg)
        assert digest(m1) == digest(m2)

    def test_l2_shrinks_weights(self, toy_corpus):
        base = TrainConfig(learning_rate=5e-4, batch_size=8, max_epochs=3,
                           patience=5, n_max=16, seed=3, l2=0.0)
        heavy = TrainConfig(learning_rate=5e-4, batch_size=8, max_epochs=3,
                            patience=5, n_max=16, seed=3, l2=1e3)
        m_free, _ = train(toy_corpus, base)
        m_reg, _ = train(toy_corpus, heavy)
        norm_free = sum(float((w ** 2).sum()) for w in m_free.weight_arrays())
        norm_reg = sum(float((w ** 2).sum()) for w in m_reg.weight_arrays())
        assert norm_reg < norm_free

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts(self, toy_corpus):
        cfg = TrainConfig(learning_rate=1e30, batch_size=8, max_epochs=3,
                          patience=5, n_max=16, seed=3)
        with pytest.raises(RuntimeError, match="diverged"):
            train(toy_corpus, cfg)

    def test_needs_two_classes(self, toy_corpus):
        solo = TrainingCorpus(toy_corpus.windows[:5], np.zeros(5, dtype=int),
                              2)
        with pytest.raises(ValueError):
            train(solo, TrainConfig())


class TestQuantize:
    def test_all_zero_tensor(self):
        codes, scale = quantize_tensor(np.zeros((4, 4), dtype=np.float32))
        assert scale == 1.0
        assert np.all(codes == 0)

    def test_roundtrip_error_bound(self):
        rng = np.random.default_rng(30)
        w = rng.normal(0, 0.2, (64, 32)).astype(np.float32)
        codes, scale = quantize_tensor(w)
        assert np.max(np.abs(codes.astype(np.float64) * scale - w)) \
            <= scale / 2 + 1e-12

    def test_quantized_model_accuracy(self, toy_corpus, toy_model):
        model, _ = toy_model
        tensors, labels = corpus_tensors(toy_corpus, model)
        _, acc = evaluate_model(model, tensors, labels)
        q = quantize(model)
        _, qacc = evaluate_model(q, tensors, labels)
        assert acc - qacc <= 0.02

    def test_quantized_refuses_training(self, toy_model):
        model, _ = toy_model
        q = quantize(model)
        with pytest.raises(RuntimeError, match="quantized"):
            q.forward_train(np.zeros((1, 4, 6, 5), dtype=np.float32),
                            dropout_rng=np.random.default_rng(0))


class TestSerialization:
    def test_roundtrip_bit_exact(self, toy_model, tmp_path):
        model, _ = toy_model
        path = tmp_path / "model.bin"
        save_model(model, path)
        loaded = load_model(path)
        seq = np.random.default_rng(0).standard_normal((3, 6, 16, 5))
        assert np.array_equal(model.forward(seq, mode="eval"),
                              loaded.forward(seq, mode="eval"))
        assert loaded.parameter_count == model.parameter_count
        assert np.array_equal(loaded.feature_mean, model.feature_mean)

    def test_quantized_roundtrip(self, toy_model, tmp_path):
        model, _ = toy_model
        q = quantize(model)
        path = tmp_path / "q.bin"
        save_model(q, path)
        loaded = load_model(path)
        assert loaded.quantized
        seq = np.random.default_rng(1).standard_normal((2, 6, 16, 5))
        assert np.array_equal(q.forward(seq, mode="eval"),
                              loaded.forward(seq, mode="eval"))

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ValueError, match="container"):
            load_model(path)


class TestParameterCount:
    def test_pure_function_of_classes(self):
        a = TcpcnModel(8, seed=0)
        b = TcpcnModel(8, seed=123)
        assert a.parameter_count == b.parameter_count == 128_680
        assert TcpcnModel(2, seed=0).parameter_count == 126_370

    def test_reported_structure(self):
        model = TcpcnModel(8, seed=0)
        # widths exactly as designed
        assert [lin.params["W"].shape for lin, _, _ in model.pc_blocks] == \
            [(5, 96), (96, 96), (96, 96), (96, 192), (192, 192)]
        assert [c.params["W"].shape for c in model.tc_convs] == \
            [(3, 192, 32), (3, 32, 64), (3, 64, 128)]
        assert [c.dilation for c in model.tc_convs] == [1, 2, 4]
        assert model.head.params["W"].shape == (3, 128, 8)
