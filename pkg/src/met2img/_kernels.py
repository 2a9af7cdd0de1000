"""Hot numeric kernels with a numba path and a pure-numpy path.

The numba path is used when numba imports and ``MET2IMG_NUMBA`` is not set
to ``0``. Both paths are always importable (``*_numpy`` / ``*_numba``) so the
benchmark and the parity tests can compare them directly; the unsuffixed
names are the dispatch selected at import time. Kernels that take ``out``
write into caller-owned buffers so training does not re-fault large arrays
every minibatch.

Conventions shared by both paths:

* convolution activations are laid out ``(channels, batch, height, width)``
  and are already zero-padded, so im2col is always VALID;
* im2col rows are ordered ``(c, u, v)`` and columns ``(b, i, j)``, which makes
  every row a run of contiguous copies and the layer a single
  ``(F, C*kh*kw) @ (C*kh*kw, B*Ho*Wo)`` product;
* max-pool windows are non-overlapping, trailing rows/cols that do not fill
  a window are dropped, and ties go to the first element in row-major order.
"""

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("MET2IMG_NUMBA", "1") != "0"


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def im2col(xp, kh, kw, out=None):
    """Unfold VALID ``kh x kw`` patches into ``out`` (shared by both paths).

    This is a strided copy that numpy already does at memory speed, so there
    is no separate numba version.
    """
    C, B, H, W = xp.shape
    Ho, Wo = H - kh + 1, W - kw + 1
    if out is None:
        out = np.empty((C * kh * kw, B * Ho * Wo), dtype=xp.dtype)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # C,B,Ho,Wo,kh,kw
    out.reshape(C, kh, kw, B, Ho, Wo)[...] = win.transpose(0, 4, 5, 1, 2, 3)
    return out


def col2im_numpy(cols, out, kh, kw):
    C, B, H, W = out.shape
    Ho, Wo = H - kh + 1, W - kw + 1
    c6 = cols.reshape(C, kh, kw, B, Ho, Wo)
    out[...] = 0
    for u in range(kh):
        for v in range(kw):
            out[:, :, u:u + Ho, v:v + Wo] += c6[:, u, v]
    return out


def maxpool_forward_numpy(x, ph, pw):
    B, C, H, W = x.shape
    Ho, Wo = H // ph, W // pw
    xc = x[:, :, :Ho * ph, :Wo * pw].reshape(B, C, Ho, ph, Wo, pw)
    win = xc.transpose(0, 1, 2, 4, 3, 5).reshape(B, C, Ho, Wo, ph * pw)
    arg = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg.astype(np.int64)


def maxpool_backward_numpy(dout, arg, H, W, ph, pw):
    B, C, Ho, Wo = dout.shape
    win = np.zeros((B, C, Ho, Wo, ph * pw), dtype=dout.dtype)
    np.put_along_axis(win, arg[..., None], dout[..., None], axis=-1)
    win = win.reshape(B, C, Ho, Wo, ph, pw).transpose(0, 1, 2, 4, 3, 5)
    dx = np.zeros((B, C, H, W), dtype=dout.dtype)
    dx[:, :, :Ho * ph, :Wo * pw] = win.reshape(B, C, Ho * ph, Wo * pw)
    return dx


def tsne_grad_numpy(Y, P):
    """KL(P||Q) and its gradient for a Student-t (1 dof) embedding."""
    sq = np.sum(Y * Y, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (Y @ Y.T), 0.0)
    num = 1.0 / (1.0 + d2)
    np.fill_diagonal(num, 0.0)
    Q = num / num.sum()
    PQ = (P - Q) * num
    grad = 4.0 * (PQ.sum(axis=1)[:, None] * Y - PQ @ Y)
    mask = P > 0
    kl = float(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-300))))
    return kl, grad


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def col2im_numba(cols, out, kh, kw):
        C, B, H, W = out.shape
        Ho = H - kh + 1
        Wo = W - kw + 1
        out[...] = 0
        for c in range(C):
            for u in range(kh):
                for v in range(kw):
                    row = cols[(c * kh + u) * kw + v]
                    for b in range(B):
                        for i in range(Ho):
                            dst = out[c, b, i + u]
                            base = (b * Ho + i) * Wo
                            for j in range(Wo):
                                dst[j + v] += row[base + j]
        return out

    @njit(cache=True)
    def maxpool_forward_numba(x, ph, pw):
        B, C, H, W = x.shape
        Ho = H // ph
        Wo = W // pw
        out = np.empty((B, C, Ho, Wo), dtype=x.dtype)
        arg = np.empty((B, C, Ho, Wo), dtype=np.int64)
        for b in range(B):
            for c in range(C):
                for i in range(Ho):
                    for j in range(Wo):
                        best = x[b, c, i * ph, j * pw]
                        bi = 0
                        for u in range(ph):
                            for v in range(pw):
                                val = x[b, c, i * ph + u, j * pw + v]
                                if val > best:
                                    best = val
                                    bi = u * pw + v
                        out[b, c, i, j] = best
                        arg[b, c, i, j] = bi
        return out, arg

    @njit(cache=True)
    def maxpool_backward_numba(dout, arg, H, W, ph, pw):
        B, C, Ho, Wo = dout.shape
        dx = np.zeros((B, C, H, W), dtype=dout.dtype)
        for b in range(B):
            for c in range(C):
                for i in range(Ho):
                    for j in range(Wo):
                        a = arg[b, c, i, j]
                        dx[b, c, i * ph + a // pw, j * pw + a % pw] += dout[b, c, i, j]
        return dx

    @njit(cache=True)
    def tsne_grad_numba(Y, P):
        n, m = Y.shape
        num = np.zeros((n, n))
        total = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                d2 = 0.0
                for k in range(m):
                    diff = Y[i, k] - Y[j, k]
                    d2 += diff * diff
                t = 1.0 / (1.0 + d2)
                num[i, j] = t
                num[j, i] = t
                total += 2.0 * t
        grad = np.zeros((n, m))
        kl = 0.0
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                q = num[i, j] / total
                p = P[i, j]
                if p > 0.0:
                    kl += p * np.log(p / max(q, 1e-300))
                w = (p - q) * num[i, j]
                for k in range(m):
                    grad[i, k] += 4.0 * w * (Y[i, k] - Y[j, k])
        return kl, grad

else:  # pragma: no cover
    col2im_numba = col2im_numpy
    maxpool_forward_numba = maxpool_forward_numpy
    maxpool_backward_numba = maxpool_backward_numpy
    tsne_grad_numba = tsne_grad_numpy


if USE_NUMBA:
    col2im = col2im_numba
    maxpool_forward = maxpool_forward_numba
    maxpool_backward = maxpool_backward_numba
    tsne_grad = tsne_grad_numba
else:
    col2im = col2im_numpy
    maxpool_forward = maxpool_forward_numpy
    maxpool_backward = maxpool_backward_numpy
    tsne_grad = tsne_grad_numpy
