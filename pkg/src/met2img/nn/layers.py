"""Layers with explicit forward/backward passes.

Convolution, ReLU and pooling layers operate on ``(channels, batch, height,
width)`` activations; Flatten converts back to ``(batch, features)`` with
features ordered ``(channel, row, col)``. 1D signals are carried as height-1
images, so a 3-wide 1D kernel is a 1x3 kernel and a 1D pool is a 1x2 pool.
"""

import numpy as np

from met2img import _kernels


class Layer:
    params = ()

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    @property
    def grads(self):
        return ()


class Conv(Layer):
    def __init__(self, in_channels, out_channels, kernel, padding, rng, dtype, need_dx=True):
        kh, kw = kernel
        fan_in = in_channels * kh * kw
        self.W = (rng.standard_normal((out_channels, in_channels, kh, kw)) * np.sqrt(2.0 / fan_in)).astype(dtype)
        self.b = np.zeros(out_channels, dtype=dtype)
        self.kernel = (kh, kw)
        self.padding = tuple(padding)
        self.need_dx = need_dx
        self.params = (self.W, self.b)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._buffers = {}

    @property
    def grads(self):
        return (self.dW, self.db)

    def _buffer(self, name, shape):
        buf = self._buffers.get(name)
        if buf is None or buf.shape != shape:
            buf = np.empty(shape, dtype=self.W.dtype)
            self._buffers[name] = buf
        return buf

    def forward(self, x):
        ph, pw = self.padding
        if ph or pw:
            x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        kh, kw = self.kernel
        C, B, H, W = x.shape
        Ho, Wo = H - kh + 1, W - kw + 1
        F = self.W.shape[0]
        cols = _kernels.im2col(x, kh, kw, out=self._buffer("cols", (C * kh * kw, B * Ho * Wo)))
        # (N, K) @ (K, F) runs noticeably faster in BLAS than (F, K) @ (K, N) here
        out = (cols.T @ self.W.reshape(F, -1).T).T
        out += self.b[:, None]
        self._cache = (cols, x.shape)
        return np.ascontiguousarray(out).reshape(F, B, Ho, Wo)

    def backward(self, dy):
        cols, xshape = self._cache
        F = self.W.shape[0]
        g = np.ascontiguousarray(dy).reshape(F, -1)
        self.dW[...] = (g @ cols.T).reshape(self.W.shape)
        self.db[...] = g.sum(axis=1)
        if not self.need_dx:
            return None
        # cols is no longer needed, so its buffer receives the patch gradients
        dcols = np.matmul(self.W.reshape(F, -1).T, g, out=cols)
        kh, kw = self.kernel
        dx = _kernels.col2im(dcols, self._buffer("dx", xshape), kh, kw)
        ph, pw = self.padding
        C, B, H, W = xshape
        return dx[:, :, ph:H - ph, pw:W - pw]


class ReLU(Layer):
    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, dy):
        return dy * self._mask


class MaxPool(Layer):
    def __init__(self, window):
        self.window = tuple(window)

    def forward(self, x):
        ph, pw = self.window
        out, arg = _kernels.maxpool_forward(np.ascontiguousarray(x), ph, pw)
        self._cache = (arg, x.shape)
        return out

    def backward(self, dy):
        arg, (B, C, H, W) = self._cache
        ph, pw = self.window
        return _kernels.maxpool_backward(np.ascontiguousarray(dy), arg, H, W, ph, pw)


class Flatten(Layer):
    def __init__(self, channels_first=True):
        self.channels_first = channels_first

    def forward(self, x):
        self._shape = x.shape
        if self.channels_first:
            x = x.transpose(1, 0, *range(2, x.ndim))
        return np.ascontiguousarray(x).reshape(x.shape[0], -1)

    def backward(self, dy):
        if not self.channels_first:
            return dy.reshape(self._shape)
        C, B = self._shape[:2]
        dy = dy.reshape(B, C, *self._shape[2:])
        return np.ascontiguousarray(dy.transpose(1, 0, *range(2, dy.ndim)))


class Dense(Layer):
    def __init__(self, n_in, n_out, rng, dtype, need_dx=True):
        self.W = (rng.standard_normal((n_out, n_in)) * np.sqrt(2.0 / n_in)).astype(dtype)
        self.b = np.zeros(n_out, dtype=dtype)
        self.need_dx = need_dx
        self.params = (self.W, self.b)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)

    @property
    def grads(self):
        return (self.dW, self.db)

    def forward(self, x):
        self._x = x
        return x @ self.W.T + self.b

    def backward(self, dy):
        self.dW[...] = dy.T @ self._x
        self.db[...] = dy.sum(axis=0)
        if not self.need_dx:
            return None
        return dy @ self.W


class LogSoftmax(Layer):
    def forward(self, x):
        z = x - x.max(axis=1, keepdims=True)
        out = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        self._out = out
        return out

    def backward(self, dy):
        return dy - np.exp(self._out) * dy.sum(axis=1, keepdims=True)


class Sigmoid(Layer):
    def forward(self, x):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self._out = out
        return out

    def backward(self, dy):
        return dy * self._out * (1.0 - self._out)
