"""The point-cloud / temporal-convolution classifier.

Architecture
------------
Per time step, every point of the (n_points, 5) cloud runs through a shared
five-layer MLP (widths 96, 96, 96, 192, 192; each layer linear -> batch norm
-> ELU) and the per-point outputs are average-pooled into one 192-feature
vector, making the extractor invariant to point order.  The sequence of
pooled vectors then passes a stack of causal dilated temporal convolutions
(32, 64, 128 maps at dilations 1, 2, 4, kernel 3, ELU in between), a causal
head convolution onto one map per class, global average pooling over time and
a softmax.

The eval path pools points in a canonically sorted order so that the output
is bit-identical under any permutation of the input points, not merely equal
up to rounding.

Training support (analytic backprop, dropout on the pooled features, L2) and
gradient verification live here as well; the optimization loop is in
``training.py``.
"""

from __future__ import annotations

import numpy as np

from gaittrack.classifier.layers import (
    BatchNorm,
    DilatedCausalConv,
    Dropout,
    Elu,
    Linear,
)

PC_WIDTHS = (5, 96, 96, 96, 192, 192)
TC_CHANNELS = (32, 64, 128)
TC_DILATIONS = (1, 2, 4)
HEAD_DILATION = 1
LOG_CLAMP = 1e-12


class TcpcnModel:
    """Point-cloud sequence classifier over ``n_subjects`` classes."""

    def __init__(self, n_subjects: int, seed: int = 0, dtype=np.float32,
                 p_drop: float = 0.5,
                 rng: np.random.Generator | None = None):
        if n_subjects < 2:
            raise ValueError("need at least two classes")
        if rng is None:
            rng = np.random.default_rng(seed)
        self.n_subjects = n_subjects
        self.dtype = np.dtype(dtype).type
        self.pc_blocks = []
        for n_in, n_out in zip(PC_WIDTHS[:-1], PC_WIDTHS[1:]):
            self.pc_blocks.append((Linear(n_in, n_out, rng, dtype),
                                   BatchNorm(n_out, dtype),
                                   Elu()))
        self.dropout = Dropout(p_drop)
        self.tc_convs = []
        c_in = PC_WIDTHS[-1]
        for c_out, dil in zip(TC_CHANNELS, TC_DILATIONS):
            self.tc_convs.append(DilatedCausalConv(c_in, c_out, dil, rng, dtype))
            c_in = c_out
        self.tc_elus = [Elu() for _ in self.tc_convs]
        self.head = DilatedCausalConv(c_in, n_subjects, HEAD_DILATION, rng, dtype)
        # per-feature standardization statistics, filled in by training
        self.feature_mean = np.zeros(5, dtype=dtype)
        self.feature_std = np.ones(5, dtype=dtype)
        self.quantized = False
        self._pool_shape = None

    # ------------------------------------------------------------------ #
    # bookkeeping

    def layers(self) -> list:
        out = []
        for lin, bn, elu in self.pc_blocks:
            out += [lin, bn, elu]
        out.append(self.dropout)
        for conv, elu in zip(self.tc_convs, self.tc_elus):
            out += [conv, elu]
        out.append(self.head)
        return out

    def parameters(self) -> list[tuple[object, str, np.ndarray]]:
        """Stable (layer, name, array) list over all trainable parameters."""
        out = []
        for layer in self.layers():
            for name, arr in layer.param_items():
                out.append((layer, name, arr))
        return out

    def weight_arrays(self) -> list[np.ndarray]:
        """Weight tensors subject to L2 regularization (no biases, no BN)."""
        out = []
        for layer in self.layers():
            for key in layer.weight_keys():
                out.append(layer.params[key])
        return out

    @property
    def parameter_count(self) -> int:
        return sum(arr.size for _, _, arr in self.parameters())

    def zero_grads(self):
        for layer in self.layers():
            layer.zero_grads()

    # ------------------------------------------------------------------ #
    # forward

    def _pc_forward(self, pts: np.ndarray, cache: bool, stats: str,
                    update_running: bool,
                    weights: np.ndarray | None = None) -> np.ndarray:
        h = pts
        for lin, bn, elu in self.pc_blocks:
            h = lin.forward(h, train=cache)
            h = bn.forward(h, train=cache, stats=stats,
                           update_running=update_running, weights=weights)
            h = elu.forward(h, train=cache)
        return h

    def pc_features(self, points: np.ndarray, sorted_pool: bool = True
                    ) -> np.ndarray:
        """Order-invariant per-cloud feature vectors (inference path).

        ``points`` is (..., n_points, 5); returns (..., 192).
        """
        points = np.asarray(points, dtype=self.dtype)
        lead = points.shape[:-2]
        n = points.shape[-2]
        flat = points.reshape(-1, 5)
        feats = self._pc_forward(flat, cache=False, stats="running",
                                 update_running=False)
        feats = feats.reshape(-1, n, feats.shape[-1])
        if sorted_pool:
            feats = np.sort(feats, axis=1)
        pooled = feats.mean(axis=1)
        return pooled.reshape(*lead, -1)

    def _tc_forward(self, feats: np.ndarray, cache: bool) -> np.ndarray:
        h = feats
        for conv, elu in zip(self.tc_convs, self.tc_elus):
            h = conv.forward(h, train=cache)
            h = elu.forward(h, train=cache)
        return self.head.forward(h, train=cache)

    def classify_features(self, feats: np.ndarray) -> np.ndarray:
        """Eval-mode classification from precomputed per-step features.

        ``feats`` is (batch, K, 192) or (K, 192); returns class probabilities.
        """
        feats = np.asarray(feats, dtype=self.dtype)
        squeeze = feats.ndim == 2
        if squeeze:
            feats = feats[None]
        temporal = self._tc_forward(feats, cache=False)
        probs = softmax(temporal.mean(axis=1))
        return probs[0] if squeeze else probs

    def _forward_full(self, seq: np.ndarray, cache: bool, stats: str,
                      update_running: bool,
                      dropout_rng: np.random.Generator | None,
                      sorted_pool: bool) -> tuple[np.ndarray, np.ndarray]:
        """Dense path over a padded (B, K, n, 5) tensor."""
        n_b, n_t, n_pts, _ = seq.shape
        flat = np.ascontiguousarray(seq.reshape(-1, 5), dtype=self.dtype)
        if cache:
            counts = np.full(n_b * n_t, n_pts)
            probs, temporal = self._train_core(
                flat, None, counts, n_b, n_t, stats, update_running,
                dropout_rng)
            return probs, temporal
        h = self._pc_forward(flat, cache=False, stats=stats,
                             update_running=update_running)
        n_feat = h.shape[-1]
        h = h.reshape(n_b * n_t, n_pts, n_feat)
        if sorted_pool:
            h = np.sort(h, axis=1)
        pooled = h.mean(axis=1)
        feats = pooled.reshape(n_b, n_t, n_feat)
        temporal = self._tc_forward(feats, cache=False)
        logits = temporal.mean(axis=1)
        return softmax(logits), temporal

    def _train_core(self, points: np.ndarray, mult: np.ndarray | None,
                    counts: np.ndarray, n_b: int, n_t: int, stats: str,
                    update_running: bool,
                    dropout_rng: np.random.Generator | None
                    ) -> tuple[np.ndarray, np.ndarray]:
        """Caching forward over flattened clouds.

        ``points`` stacks the clouds of all (batch, step) frames; ``counts``
        gives each frame's row count and ``mult`` optional per-row
        multiplicities (deduplicated padding).  Pooling divides by the total
        weight per frame, so the result matches the padded dense pass.
        """
        offsets = np.zeros(len(counts), dtype=np.intp)
        np.cumsum(counts[:-1], out=offsets[1:])
        h = self._pc_forward(points, cache=True, stats=stats,
                             update_running=update_running, weights=mult)
        n_feat = h.shape[-1]
        if mult is None:
            weighted = h
            totals = counts.astype(self.dtype)
        else:
            weighted = h * mult[:, None]
            totals = np.add.reduceat(mult, offsets)
        pooled = np.add.reduceat(weighted, offsets, axis=0)
        pooled /= totals[:, None].astype(self.dtype)
        self._pool_ctx = (mult, counts, offsets, totals, n_feat)
        pooled = self.dropout.forward(pooled, train=True, rng=dropout_rng)
        feats = pooled.reshape(n_b, n_t, n_feat)
        temporal = self._tc_forward(feats, cache=True)
        logits = temporal.mean(axis=1)
        return softmax(logits), temporal

    def forward(self, seq: np.ndarray, mode: str = "eval",
                rng: np.random.Generator | None = None,
                return_temporal: bool = False):
        """Classify one sequence (K, n, 5) or a batch (B, K, n, 5).

        ``mode="eval"`` uses running batch-norm statistics, no dropout, and
        canonically sorted pooling (bit-identical under point permutations).
        ``mode="train"`` uses batch statistics, updates the running ones and
        applies dropout (requires ``rng`` when the drop probability is > 0).
        """
        seq = np.asarray(seq, dtype=self.dtype)
        squeeze = seq.ndim == 3
        if squeeze:
            seq = seq[None]
        if seq.ndim != 4 or seq.shape[-1] != 5:
            raise ValueError("expected (batch, K, n_points, 5) input")
        if mode == "eval":
            probs, temporal = self._forward_full(
                seq, cache=False, stats="running", update_running=False,
                dropout_rng=None, sorted_pool=True)
        elif mode == "train":
            if self.dropout.p > 0 and rng is None:
                raise ValueError("train mode needs a random generator")
            probs, temporal = self._forward_full(
                seq, cache=True, stats="batch", update_running=True,
                dropout_rng=rng, sorted_pool=False)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        if squeeze:
            probs, temporal = probs[0], temporal[0]
        return (probs, temporal) if return_temporal else probs

    # ------------------------------------------------------------------ #
    # training-path forward/backward

    def forward_train(self, seq: np.ndarray,
                      dropout_rng: np.random.Generator | None,
                      stats: str = "batch",
                      update_running: bool = True) -> np.ndarray:
        """Caching forward pass used by the optimizer and gradient checks."""
        seq = np.asarray(seq, dtype=self.dtype)
        if seq.ndim == 3:
            seq = seq[None]
        probs, _ = self._forward_full(seq, cache=True, stats=stats,
                                      update_running=update_running,
                                      dropout_rng=dropout_rng,
                                      sorted_pool=False)
        return probs

    def forward_train_sparse(self, points: np.ndarray, mult: np.ndarray,
                             counts: np.ndarray, n_b: int, n_t: int,
                             dropout_rng: np.random.Generator | None,
                             stats: str = "batch",
                             update_running: bool = True) -> np.ndarray:
        """Caching forward over deduplicated clouds.

        Each frame's padded cloud is represented by its unique points plus
        integer multiplicities (summing to the padded size), which cuts the
        point-block work roughly by the duplication factor while computing
        the same function.
        """
        points = np.ascontiguousarray(points, dtype=self.dtype)
        mult = np.ascontiguousarray(mult, dtype=self.dtype)
        probs, _ = self._train_core(points, mult, counts, n_b, n_t, stats,
                                    update_running, dropout_rng)
        return probs

    def backward(self, probs: np.ndarray, y_onehot: np.ndarray,
                 l2: float = 0.0) -> None:
        """Accumulate gradients of mean cross-entropy + L2 into the layers."""
        mult, counts, offsets, totals, n_feat = self._pool_ctx
        n_b = len(probs)
        n_t = len(counts) // n_b
        g = (probs - y_onehot).astype(self.dtype) / self.dtype(len(probs))
        # head pool over time: logits = temporal.mean(axis=1)
        g = np.broadcast_to(g[:, None, :] / self.dtype(n_t),
                            (n_b, n_t, g.shape[-1])).copy()
        g = self.head.backward(g)
        for conv, elu in zip(reversed(self.tc_convs), reversed(self.tc_elus)):
            g = elu.backward(g)
            g = conv.backward(g)
        g = g.reshape(n_b * n_t, n_feat)
        g = self.dropout.backward(g)
        # weighted-mean pooling: each row gets its frame gradient times
        # multiplicity over total weight
        g = np.repeat(g, counts, axis=0)
        if mult is None:
            g /= np.repeat(totals, counts)[:, None].astype(self.dtype)
        else:
            g *= (mult / np.repeat(totals, counts))[:, None].astype(self.dtype)
        for lin, bn, elu in reversed(self.pc_blocks):
            g = elu.backward(g)
            g = bn.backward(g)
            g = lin.backward(g)
        if l2:
            for layer in self.layers():
                for key in layer.weight_keys():
                    layer.grads[key] += (2.0 * l2) * layer.params[key]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, numerically shifted."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss(y_hat: np.ndarray, y_onehot: np.ndarray, model: TcpcnModel | None = None,
         l2: float = 0.0) -> float:
    """Categorical cross-entropy plus optional L2 penalty on model weights.

    Accepts a single probability vector or a batch (mean cross-entropy).
    Probabilities are clamped at 1e-12 before the log.
    """
    y_hat = np.atleast_2d(y_hat)
    y_onehot = np.atleast_2d(y_onehot)
    ce = -np.sum(y_onehot * np.log(np.clip(y_hat, LOG_CLAMP, None)), axis=1)
    value = float(ce.mean())
    if l2 and model is not None:
        value += l2 * float(sum(np.sum(w.astype(np.float64) ** 2)
                                for w in model.weight_arrays()))
    return value


def grad_check(model: TcpcnModel, seq: np.ndarray, y_onehot: np.ndarray,
               n_samples: int = 200, step: float = 1e-4,
               l2: float = 1e-4, stats: str = "batch",
               rng: np.random.Generator | None = None) -> float:
    """Max relative error of analytic gradients vs central finite differences.

    Samples at least ``n_samples`` parameters spread over every layer, so all
    layer types (linear, batch norm, ELU path, dilated conv, softmax/CE) are
    covered.  Runs a deterministic forward: batch ``stats`` exercise the
    batch-norm statistics path, ``stats="running"`` the inference affine path;
    dropout must be off -- a stochastic train-mode check is rejected.

    Use a float64 model; float32 arithmetic drowns the differences.
    """
    if stats == "train":
        raise ValueError(
            "gradient checking a stochastic train-mode forward (dropout "
            "active) is meaningless; use stats='batch' or 'running'")
    if model.dropout.p != 0.0:
        raise ValueError(
            "disable dropout for gradient checks (model.dropout.p = 0); "
            "a randomly masked forward cannot match finite differences")
    if rng is None:
        rng = np.random.default_rng(0)
    seq = np.asarray(seq, dtype=model.dtype)
    if seq.ndim == 3:
        seq = seq[None]
    y_onehot = np.atleast_2d(y_onehot)

    def loss_value() -> float:
        probs, _ = model._forward_full(seq, cache=False, stats=stats,
                                       update_running=False, dropout_rng=None,
                                       sorted_pool=False)
        return loss(probs, y_onehot, model, l2)

    model.zero_grads()
    probs = model.forward_train(seq, dropout_rng=None, stats=stats,
                                update_running=False)
    model.backward(probs, y_onehot, l2=l2)

    params = model.parameters()
    per_array = max(2, int(np.ceil(n_samples / len(params))))
    worst = 0.0
    for layer, name, arr in params:
        flat = arr.reshape(-1)
        grad = layer.grads[name].reshape(-1)
        idx = rng.choice(flat.size, size=min(per_array, flat.size),
                         replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_value()
            flat[i] = orig - step
            lo = loss_value()
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * step)
            denom = max(abs(numeric), abs(grad[i]), 1e-8)
            worst = max(worst, abs(numeric - grad[i]) / denom)
    return worst
