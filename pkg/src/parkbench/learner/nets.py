"""Small dense networks with hand-written forward/backward passes.

Fixed architectures keep the reverse-mode code short and auditable; the
test suite validates every gradient against central finite differences.
All math is float64.
"""

from __future__ import annotations

import math

import numpy as np

LN_EPS = 1e-5


def layer_norm(h: np.ndarray, gain: np.ndarray | None = None,
               offset: np.ndarray | None = None) -> np.ndarray:
    """Per-vector normalization to zero mean and unit variance.

    Works on a single vector or a batch of row vectors. ``gain`` and
    ``offset`` default to 1 and 0.
    """
    h = np.asarray(h, dtype=float)
    single = h.ndim == 1
    x = np.atleast_2d(h)
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    xhat = (x - mu) / np.sqrt(var + LN_EPS)
    out = xhat if gain is None else xhat * gain
    if offset is not None:
        out = out + offset
    return out[0] if single else out


def _layer_norm_forward(x, gain, offset):
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return xhat * gain + offset, (xhat, inv)


def _layer_norm_backward(cache, gain, dout):
    xhat, inv = cache
    dgain = (dout * xhat).sum(axis=0)
    doffset = dout.sum(axis=0)
    dxhat = dout * gain
    dx = inv * (dxhat - dxhat.mean(axis=1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
    return dx, dgain, doffset


class Mlp:
    """Dense ReLU network, optionally layer-normalized before the last layer.

    Parameter list order: w0, b0, w1, b1, ..., then ln_gain, ln_offset
    when the final layer norm is enabled.
    """

    def __init__(self, sizes, rng: np.random.Generator, final_layer_norm: bool = False):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.final_layer_norm = final_layer_norm
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            # nonzero bias init keeps preactivations off the exact ReLU kink
            blim = 1.0 / math.sqrt(fan_in)
            self.biases.append(rng.uniform(-blim, blim, size=fan_out))
        if final_layer_norm:
            d = sizes[-2]
            self.ln_gain = np.ones(d)
            self.ln_offset = np.zeros(d)

    # ------------------------------------------------------------------

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        if self.final_layer_norm:
            out.append(self.ln_gain)
            out.append(self.ln_offset)
        return out

    def param_names(self) -> list[str]:
        names = []
        for i in range(len(self.weights)):
            names.append(f"w{i}")
            names.append(f"b{i}")
        if self.final_layer_norm:
            names.append("ln_gain")
            names.append("ln_offset")
        return names

    def set_params(self, arrays) -> None:
        mine = self.params()
        if len(arrays) != len(mine):
            raise ValueError("parameter count mismatch")
        for dst, src in zip(mine, arrays):
            if dst.shape != src.shape:
                raise ValueError(f"shape mismatch {dst.shape} vs {src.shape}")
            dst[...] = src

    def clone(self) -> "Mlp":
        twin = Mlp.__new__(Mlp)
        twin.sizes = self.sizes
        twin.final_layer_norm = self.final_layer_norm
        twin.weights = [w.copy() for w in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        if self.final_layer_norm:
            twin.ln_gain = self.ln_gain.copy()
            twin.ln_offset = self.ln_offset.copy()
        return twin

    def rebind_to(self, flat: np.ndarray, offset: int) -> int:
        """Move parameter storage into views of ``flat`` (values preserved).

        Lets an optimizer treat a whole module group as one contiguous
        vector, which is much cheaper than updating many small arrays.
        """
        current = self.params()
        views = []
        for p in current:
            view = flat[offset:offset + p.size].reshape(p.shape)
            view[...] = p
            views.append(view)
            offset += p.size
        n_layers = len(self.weights)
        self.weights = [views[2 * i] for i in range(n_layers)]
        self.biases = [views[2 * i + 1] for i in range(n_layers)]
        if self.final_layer_norm:
            self.ln_gain = views[-2]
            self.ln_offset = views[-1]
        return offset

    # ------------------------------------------------------------------

    def forward(self, x: np.ndarray):
        """Returns (output, cache); accepts a vector or a batch of rows."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = np.atleast_2d(x)
        inputs = []   # input to every linear layer
        masks = []    # relu masks for the hidden layers
        n = len(self.weights)
        for i in range(n - 1):
            inputs.append(h)
            z = h @ self.weights[i] + self.biases[i]
            mask = z > 0
            h = z * mask
            masks.append(mask)
        ln_cache = None
        if self.final_layer_norm:
            h, ln_cache = _layer_norm_forward(h, self.ln_gain, self.ln_offset)
        inputs.append(h)
        y = h @ self.weights[-1] + self.biases[-1]
        cache = (inputs, masks, ln_cache, single)
        return (y[0] if single else y), cache

    def backward(self, cache, dy: np.ndarray):
        """Gradients for ``params()`` order plus the input gradient."""
        inputs, masks, ln_cache, single = cache
        dy = np.atleast_2d(np.asarray(dy, dtype=float))
        n = len(self.weights)
        dws = [None] * n
        dbs = [None] * n
        dws[-1] = inputs[-1].T @ dy
        dbs[-1] = dy.sum(axis=0)
        dh = dy @ self.weights[-1].T
        dgain = doffset = None
        if self.final_layer_norm:
            dh, dgain, doffset = _layer_norm_backward(ln_cache, self.ln_gain, dh)
        for i in range(n - 2, -1, -1):
            dz = dh * masks[i]
            dws[i] = inputs[i].T @ dz
            dbs[i] = dz.sum(axis=0)
            dh = dz @ self.weights[i].T
        grads = []
        for w, b in zip(dws, dbs):
            grads.append(w)
            grads.append(b)
        if self.final_layer_norm:
            grads.append(dgain)
            grads.append(doffset)
        dx = dh[0] if single else dh
        return grads, dx


class Adam:
    """Adaptive moment estimation over one list of parameter arrays.

    In-place ufuncs and a scratch buffer per parameter keep the hot loop
    allocation-free; callers that rebind a whole module group into one
    flat array get a single-vector update.
    """

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self._tmp = [np.empty_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        scale = self.lr / b1c
        for p, g, m, v, tmp in zip(self.params, grads, self.m, self.v, self._tmp):
            m *= self.beta1
            np.multiply(g, 1 - self.beta1, out=tmp)
            m += tmp
            v *= self.beta2
            np.square(g, out=tmp)
            tmp *= 1 - self.beta2
            v += tmp
            np.divide(v, b2c, out=tmp)
            np.sqrt(tmp, out=tmp)
            tmp += self.eps
            np.divide(m, tmp, out=tmp)
            tmp *= scale
            p -= tmp


def flatten_grads(grads: list[np.ndarray], out: np.ndarray) -> np.ndarray:
    """Pack a gradient list into one preallocated flat vector."""
    offset = 0
    for g in grads:
        out[offset:offset + g.size] = g.ravel()
        offset += g.size
    return out


def log_cosh(u: np.ndarray) -> np.ndarray:
    """Numerically stable log(cosh(u))."""
    au = np.abs(u)
    return au + np.log1p(np.exp(-2.0 * au)) - math.log(2.0)
