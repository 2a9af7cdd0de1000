"""Exact t-SNE over species and per-sample rasterisation of the global map.

Each species is a point whose coordinates are its abundances across the
training samples. The 2D layout is fitted once per training split and then
reused to draw both training and test images.
"""

import logging
from dataclasses import dataclass

import numpy as np

from met2img import _kernels
from met2img.binning import bin_indices, colors
from met2img.ingest import ABD

log = logging.getLogger(__name__)


class EmbeddingError(ValueError):
    pass


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 10.0
    epochs: int = 500
    learning_rate: float = 200.0
    early_exaggeration: float = 4.0
    exaggeration_epochs: int = 100
    momentum_initial: float = 0.5
    momentum_final: float = 0.8
    momentum_switch_epoch: int = 250
    seed: int = 0
    min_gain: float = 0.01
    init_scale: float = 1e-4

    def __post_init__(self):
        if not self.epochs >= self.exaggeration_epochs >= 0:
            raise EmbeddingError("need epochs >= exaggeration_epochs >= 0")

    def check_points(self, n):
        # perplexity == n-1 is reachable (uniform conditionals), so it is allowed
        if not 1 < self.perplexity <= n - 1:
            raise EmbeddingError(f"perplexity {self.perplexity} out of range for {n} points (need 1 < p <= {n - 1})")


def _row_entropy(dist, beta):
    """Natural-log entropy and normalised conditionals for one row of distances."""
    p = np.exp(-beta * dist)
    total = p.sum()
    h = np.log(total) + beta * np.dot(dist, p) / total
    return h, p / total


def conditional_probabilities(points, perplexity, tol=1e-5, max_iter=50):
    """Row-stochastic P_{j|i} with a per-row bandwidth found by bisection.

    Bisection is on the Gaussian precision ``beta = 1 / (2 sigma^2)`` until
    ``|exp(H_i) - perplexity| < tol`` or ``max_iter`` evaluations. Returns
    ``(P_cond, betas)``.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise EmbeddingError("points must be a 2D array")
    n = X.shape[0]
    if n < 3:
        raise EmbeddingError("need at least 3 points")
    TsneConfig(perplexity=perplexity).check_points(n)
    sq = np.sum(X * X, axis=1)
    D = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (X @ X.T), 0.0)
    np.fill_diagonal(D, 0.0)
    if not np.any(D > 0):
        raise EmbeddingError("all points are identical")

    target = np.log(perplexity)
    P = np.zeros((n, n))
    betas = np.empty(n)
    for i in range(n):
        d = np.delete(D[i], i)
        d = d - d.min()
        spread = d.mean()
        beta = 1.0 / spread if spread > 0 else 1.0
        lo, hi = 0.0, np.inf
        h, p = _row_entropy(d, beta)
        for _ in range(max_iter - 1):
            if abs(np.exp(h) - perplexity) < tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if np.isinf(hi) else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
            h, p = _row_entropy(d, beta)
        P[i, np.arange(n) != i] = p
        betas[i] = beta
    return P, betas


def achieved_perplexity(P_cond):
    """``2**H`` per row (H in bits), recomputed from conditionals."""
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(P_cond > 0, np.log2(P_cond), 0.0)
    return 2.0 ** (-(P_cond * logs).sum(axis=1))


def pairwise_affinities(points, perplexity, tol=1e-5, max_iter=50):
    """Symmetric joint probabilities ``(P_{j|i} + P_{i|j}) / 2n``."""
    cond, _ = conditional_probabilities(points, perplexity, tol, max_iter)
    n = cond.shape[0]
    P = (cond + cond.T) / (2.0 * n)
    np.fill_diagonal(P, 0.0)
    return P


def kl_and_gradient(Y, P):
    return _kernels.tsne_grad(np.ascontiguousarray(Y, dtype=np.float64), np.ascontiguousarray(P, dtype=np.float64))


def fit_tsne(points, config=TsneConfig(), kl_trace=None):
    """Gradient descent on KL(P||Q) with a Student-t low-dimensional kernel.

    Uses momentum, per-coordinate gains and early exaggeration, and performs
    exactly ``config.epochs`` updates. If ``kl_trace`` is a list it receives
    the (unexaggerated) KL divergence at the start of every epoch.
    """
    X = np.asarray(points, dtype=np.float64)
    config.check_points(X.shape[0])
    P = pairwise_affinities(X, config.perplexity)
    P = np.maximum(P, 1e-12)
    np.fill_diagonal(P, 0.0)
    P /= P.sum()
    n = X.shape[0]

    rng = np.random.default_rng(config.seed)
    Y = rng.standard_normal((n, 2)) * config.init_scale
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    alpha = config.early_exaggeration
    for epoch in range(config.epochs):
        exaggerate = epoch < config.exaggeration_epochs
        kl, grad = kl_and_gradient(Y, P * alpha if exaggerate else P)
        if kl_trace is not None:
            kl_trace.append(kl / alpha - np.log(alpha) if exaggerate else kl)
        momentum = config.momentum_initial if epoch < config.momentum_switch_epoch else config.momentum_final
        same_sign = (grad > 0) == (update > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, config.min_gain, out=gains)
        update = momentum * update - config.learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
    return Y


@dataclass(frozen=True, eq=False)
class GlobalMap:
    coords: np.ndarray  # d x 2
    pixels: np.ndarray  # d x 2 integer (row, col)
    bounds: tuple  # (min_x, max_x, min_y, max_y)
    target: int
    taxa: tuple = ()

    def pixel_of(self, i):
        return tuple(int(v) for v in self.pixels[i])


def _scale_axis(v, target):
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return np.zeros(len(v), dtype=np.int64), lo, hi
    return np.rint((v - lo) / (hi - lo) * (target - 1)).astype(np.int64), lo, hi


def map_from_coords(coords, target, taxa=()):
    cols, min_x, max_x = _scale_axis(coords[:, 0], target)
    rows, min_y, max_y = _scale_axis(coords[:, 1], target)
    return GlobalMap(coords, np.stack([rows, cols], axis=1), (min_x, max_x, min_y, max_y), target, tuple(taxa))


def build_global_map(train, config=TsneConfig(), target=64):
    """Fit t-SNE on the training split's species profiles and rasterise to pixels.

    ``train`` is a FeatureMatrix (samples x species) holding training samples
    only; coordinates are min-max scaled to [0, target-1] and rounded.
    """
    if target < 8:
        raise EmbeddingError("target raster must be at least 8 pixels")
    values = np.asarray(train.values, dtype=np.float64)
    if values.shape[1] < 3:
        raise EmbeddingError("need at least 3 features to embed")
    coords = fit_tsne(values.T, config)
    return map_from_coords(coords, target, getattr(train, "taxa", ()))


def render_tsne(sample, gmap, scheme, kind=ABD, target=None, point_size=1):
    """Paint every present species at its map pixel on a white canvas.

    Overlapping species keep the color of the higher bin; equal bins keep
    the lower feature index.
    """
    target = gmap.target if target is None else target
    if target != gmap.target:
        raise EmbeddingError(f"map raster is {gmap.target}, requested {target}")
    sample = np.asarray(sample, dtype=np.float64)
    img = np.ones((3, target, target))
    present = np.flatnonzero(sample > 0)
    if present.size == 0:
        return img
    bins = bin_indices(sample[present], scheme)
    # paint low priority first: ascending bin, then descending index
    order = np.lexsort((-present, bins))
    feats = present[order]
    rgb = colors(sample[feats], kind, scheme)
    lo = point_size // 2
    hi = point_size - lo
    for f, c in zip(feats, rgb):
        r, col = gmap.pixels[f]
        img[:, max(r - lo, 0):min(r + hi, target), max(col - lo, 0):min(col + hi, target)] = c[:, None, None]
    return img


def write_map(gmap, path):
    with open(path, "w", encoding="utf-8") as fh:
        for i, (x, y) in enumerate(gmap.coords):
            taxon = gmap.taxa[i] if gmap.taxa else f"feature{i}"
            r, c = gmap.pixels[i]
            fh.write(f"{taxon}\t{float(x)!r}\t{float(y)!r}\t{r}\t{c}\n")
