"""Neural network layers with explicit forward/backward passes.

Every layer follows the same protocol: ``forward(x, train=...)`` caches what
backward needs on the layer itself (training is single-threaded), while
eval-mode forwards never write layer state and are safe to run concurrently.
``backward(g)`` accumulates parameter gradients into ``layer.grads`` and
returns the gradient with respect to the layer input.

Weight tensors may be stored 8-bit quantized (int8 codes plus a per-tensor
scale); ``weight()`` dequantizes on the fly and such layers refuse to train.
"""

from __future__ import annotations

import numpy as np

from gaittrack.classifier import kernels

BN_EPS = 1e-5
BN_MOMENTUM = 0.9  # running = momentum * running + (1 - momentum) * batch


class Layer:
    """Shared parameter bookkeeping."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def zero_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def param_items(self):
        return list(self.params.items())

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def weight_keys(self) -> list[str]:
        """Parameter names subject to L2 regularization and quantization."""
        return []


class Linear(Layer):
    """Dense map y = x W + b, shared across all point branches."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 dtype=np.float32):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        scale = np.sqrt(2.0 / n_in)
        self.params = {
            "W": (rng.standard_normal((n_in, n_out)) * scale).astype(dtype),
            "b": np.zeros(n_out, dtype=dtype),
        }
        self.quantized: dict[str, tuple[np.ndarray, float]] = {}

    def weight_keys(self):
        return ["W"]

    def weight(self) -> np.ndarray:
        if "W" in self.quantized:
            codes, scale = self.quantized["W"]
            return (codes.astype(self.params["b"].dtype) * scale)
        return self.params["W"]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        y = x @ self.weight()
        y += self.params["b"]
        if train:
            if self.quantized:
                raise RuntimeError("quantized layers cannot be trained")
            self._cache = x
        return y

    def backward(self, g: np.ndarray) -> np.ndarray:
        x = self._cache
        self.grads["W"] += x.T @ g
        self.grads["b"] += g.sum(axis=0)
        return g @ self.params["W"].T


class BatchNorm(Layer):
    """Batch normalization over axis 0 with exponential running statistics.

    ``stats="batch"`` normalizes with the current batch moments (training
    path, gradient flows through the statistics); ``stats="running"`` applies
    the stored affine map (inference path).
    """

    def __init__(self, n: int, dtype=np.float32):
        super().__init__()
        self.n = n
        self.params = {
            "gamma": np.ones(n, dtype=dtype),
            "beta": np.zeros(n, dtype=dtype),
        }
        self.running_mean = np.zeros(n, dtype=dtype)
        self.running_var = np.ones(n, dtype=dtype)

    def forward(self, x: np.ndarray, train: bool = False,
                stats: str | None = None, update_running: bool | None = None,
                weights: np.ndarray | None = None) -> np.ndarray:
        """Normalize rows; ``weights`` are per-row multiplicities.

        With batch statistics, weighted moments make a deduplicated batch
        (unique rows plus multiplicities) behave exactly like the expanded
        one.  Passing no weights is equivalent to all-ones.
        """
        if stats is None:
            stats = "batch" if train else "running"
        if update_running is None:
            update_running = train
        gamma, beta = self.params["gamma"], self.params["beta"]
        if stats == "running":
            mu = self.running_mean.astype(x.dtype)
            var = self.running_var.astype(x.dtype)
            weights = None
        else:
            if weights is None:
                mu = x.mean(axis=0)
                sq = np.einsum("nc,nc->c", x, x) / len(x)
                var = np.maximum(sq - mu * mu, 0.0)
            else:
                mu, var = kernels.weighted_stats(x, weights)
            if update_running:
                self.running_mean = (BN_MOMENTUM * self.running_mean
                                     + (1.0 - BN_MOMENTUM) * mu).astype(x.dtype)
                self.running_var = (BN_MOMENTUM * self.running_var
                                    + (1.0 - BN_MOMENTUM) * var).astype(x.dtype)
        istd = (1.0 / np.sqrt(var + BN_EPS)).astype(x.dtype)
        if not train:
            # single fused affine pass, no caching: y = x * a + b
            a = gamma * istd
            b = beta - mu.astype(x.dtype) * a
            return kernels.scale_shift(x, a.astype(x.dtype), b.astype(x.dtype))
        xhat = x  # centered in place; callers pass a dedicated array
        kernels.center_scale_(xhat, mu.astype(x.dtype), istd)
        self._cache = (xhat, istd, stats, weights)
        return kernels.scale_shift(xhat, gamma, beta)

    def backward(self, g: np.ndarray) -> np.ndarray:
        xhat, istd, stats, weights = self._cache
        gamma = self.params["gamma"]
        s_g, s_gx = kernels.column_sums(g, xhat)
        self.grads["beta"] += s_g
        self.grads["gamma"] += s_gx
        if stats == "running":
            # statistics are constants: plain affine gradient
            g *= gamma * istd
            return g
        s1 = gamma * s_g
        s2 = gamma * s_gx
        if weights is None:
            weights = np.ones(len(g), dtype=g.dtype)
            total = float(len(g))
        else:
            total = float(weights.sum())
        kernels.bn_backward_weighted_(g, xhat, istd, gamma, s1, s2, weights,
                                      g.dtype.type(1.0 / total))
        return g


class Elu(Layer):
    """Exponential linear unit, alpha = 1.  Operates in place.

    Forward is staged through numpy so the expm1 runs vectorized; backward
    reuses the stored output (dELU/dx = 1 for y > 0 and y + 1 otherwise).
    """

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x = np.ascontiguousarray(x)
        neg = np.minimum(x, 0.0, dtype=x.dtype)
        np.expm1(neg, out=neg)
        np.maximum(x, 0.0, out=x)
        x += neg
        if train:
            self._cache = x
        return x

    def backward(self, g: np.ndarray) -> np.ndarray:
        g = np.ascontiguousarray(g)
        kernels.elu_backward_(g.reshape(-1, g.shape[-1]),
                              self._cache.reshape(-1, g.shape[-1]))
        return g


class Dropout(Layer):
    """Inverted dropout on feature vectors; identity when p == 0 or in eval."""

    def __init__(self, p: float):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must lie in [0, 1)")
        self.p = p

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        if not train or self.p == 0.0:
            return x
        if rng is None:
            raise ValueError("training-mode dropout needs a random generator")
        keep = (rng.random(x.shape, dtype=np.float32) >= self.p)
        mask = keep.astype(x.dtype) / x.dtype.type(1.0 - self.p)
        self._cache = mask
        x *= mask
        return x

    def backward(self, g: np.ndarray) -> np.ndarray:
        if self.p == 0.0 or self._cache is None:
            return g
        g *= self._cache
        return g


class DilatedCausalConv(Layer):
    """1D convolution over time with left zero-padding and dilation.

    Input is (batch, T, C_in), output (batch, T, C_out).  With kernel taps
    k[0..2], output at time s is sum_j k[j] applied to the input at time
    s - dilation * (2 - j): the last tap reads the current step, earlier taps
    reach back, so no output ever depends on future steps.
    """

    KERNEL = 3

    def __init__(self, c_in: int, c_out: int, dilation: int,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        if dilation < 1:
            raise ValueError("dilation must be >= 1")
        self.c_in, self.c_out, self.dilation = c_in, c_out, dilation
        scale = np.sqrt(2.0 / (self.KERNEL * c_in))
        self.params = {
            "W": (rng.standard_normal((self.KERNEL, c_in, c_out)) * scale
                  ).astype(dtype),
            "b": np.zeros(c_out, dtype=dtype),
        }
        self.quantized: dict[str, tuple[np.ndarray, float]] = {}

    def weight_keys(self):
        return ["W"]

    def weight(self) -> np.ndarray:
        if "W" in self.quantized:
            codes, scale = self.quantized["W"]
            return codes.astype(self.params["b"].dtype) * scale
        return self.params["W"]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 3:
            raise ValueError("expected (batch, time, channels)")
        n_b, n_t, _ = x.shape
        if n_t < 1:
            raise ValueError("need at least one time step")
        pad = 2 * self.dilation
        xp = np.zeros((n_b, n_t + pad, self.c_in), dtype=x.dtype)
        xp[:, pad:, :] = x
        W = self.weight()
        out = np.empty((n_b, n_t, self.c_out), dtype=x.dtype)
        out[:] = self.params["b"]
        for j in range(self.KERNEL):
            off = j * self.dilation
            out += xp[:, off:off + n_t, :] @ W[j]
        if train:
            if self.quantized:
                raise RuntimeError("quantized layers cannot be trained")
            self._cache = xp
        return out

    def backward(self, g: np.ndarray) -> np.ndarray:
        xp = self._cache
        n_b, n_t, _ = g.shape
        pad = 2 * self.dilation
        W = self.params["W"]
        gxp = np.zeros_like(xp)
        g_flat = g.reshape(-1, self.c_out)
        for j in range(self.KERNEL):
            off = j * self.dilation
            xs = np.ascontiguousarray(xp[:, off:off + n_t, :]).reshape(-1, self.c_in)
            self.grads["W"][j] += xs.T @ g_flat
            gxp[:, off:off + n_t, :] += g @ W[j].T
        self.grads["b"] += g_flat.sum(axis=0)
        return gxp[:, pad:, :]
