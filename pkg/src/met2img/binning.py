"""Abundance -> discrete color bins, presence -> black/white."""

from dataclasses import dataclass

import numpy as np

LOG = "log"
LINEAR = "linear"
WHITE = (1.0, 1.0, 1.0)
BLACK = (0.0, 0.0, 0.0)

# heat gradient anchors (position, rgb), linearly interpolated
GRADIENT = (
    (0.00, (0.0, 0.0, 0.55)),
    (0.25, (0.0, 0.45, 1.0)),
    (0.50, (0.0, 1.0, 0.65)),
    (0.75, (1.0, 0.85, 0.0)),
    (1.00, (0.8, 0.0, 0.0)),
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BinningScheme:
    """k bins between ``lo`` and ``hi`` on a log or linear scale.

    ``edges`` optionally replaces the evenly spaced break-points with k-1
    explicit interior edges (the quantile variant).
    """

    scale: str
    k: int
    lo: float
    hi: float
    palette: np.ndarray
    edges: np.ndarray | None = None

    def __post_init__(self):
        palette = np.asarray(self.palette, dtype=np.float64)
        object.__setattr__(self, "palette", palette)
        if self.scale not in (LOG, LINEAR):
            raise ConfigError(f"unknown scale {self.scale!r}")
        if self.k < 1:
            raise ConfigError("k must be positive")
        if self.scale == LOG and not 0 < self.lo < self.hi <= 1:
            raise ConfigError("log scale requires 0 < lo < hi <= 1")
        if self.scale == LINEAR and not 0 <= self.lo < self.hi:
            raise ConfigError("linear scale requires 0 <= lo < hi")
        if palette.shape != (self.k, 3) or palette.min() < 0 or palette.max() > 1:
            raise ConfigError("palette must be k RGB triples with channels in [0, 1]")
        if len({tuple(c) for c in palette}) != self.k:
            raise ConfigError("palette colors must be pairwise distinct")
        if np.any(np.all(palette == 1.0, axis=1)):
            raise ConfigError("white is reserved for absent values")
        if self.edges is not None:
            edges = np.asarray(self.edges, dtype=np.float64)
            if edges.shape != (self.k - 1,) or np.any(np.diff(edges) < 0):
                raise ConfigError("edges must be k-1 non-decreasing break-points")
            object.__setattr__(self, "edges", edges)


def gradient_color(t):
    t = min(max(float(t), 0.0), 1.0)
    for (p0, c0), (p1, c1) in zip(GRADIENT, GRADIENT[1:]):
        if t <= p1:
            w = (t - p0) / (p1 - p0)
            return tuple((1 - w) * a + w * b for a, b in zip(c0, c1))
    return GRADIENT[-1][1]


def gradient_palette(k):
    if k == 1:
        return np.array([gradient_color(0.0)])
    return np.array([gradient_color(i / (k - 1)) for i in range(k)])


def default_log_scheme(k=10, lo=1e-7, hi=1.0):
    if k < 2:
        raise ConfigError(f"need at least 2 bins, got {k}")
    return BinningScheme(LOG, k, lo, hi, gradient_palette(k))


def default_linear_scheme(k=10, lo=0.0, hi=1.0):
    if k < 2:
        raise ConfigError(f"need at least 2 bins, got {k}")
    return BinningScheme(LINEAR, k, lo, hi, gradient_palette(k))


def quantile_scheme(train_values, k=10, scale=LOG):
    """Break-points at quantiles of the strictly positive training abundances.

    Only training data may be passed here; test encodings reuse the result.
    """
    if k < 2:
        raise ConfigError(f"need at least 2 bins, got {k}")
    v = np.asarray(train_values, dtype=np.float64).ravel()
    v = v[v > 0]
    if v.size == 0:
        raise ConfigError("no positive abundances to fit quantiles on")
    lo = float(v.min())
    hi = 1.0 if scale == LOG else max(float(v.max()), lo * 2)
    if lo >= hi:
        raise ConfigError("training abundances leave no room for bins below 1")
    edges = np.quantile(v, np.arange(1, k) / k)
    return BinningScheme(scale, k, lo, hi, gradient_palette(k), edges)


def bin_indices(values, scheme):
    """Vectorised bin_index: -1 for absent (v == 0 or v < lo), else 0..k-1."""
    v = np.asarray(values, dtype=np.float64)
    absent = (v <= 0) | (v < scheme.lo)
    if scheme.edges is not None:
        idx = np.searchsorted(scheme.edges, v, side="right")
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            if scheme.scale == LOG:
                pos = (np.log10(np.where(absent, scheme.lo, v)) - np.log10(scheme.lo)) / (
                    np.log10(scheme.hi) - np.log10(scheme.lo))
            else:
                pos = (v - scheme.lo) / (scheme.hi - scheme.lo)
        idx = np.floor(scheme.k * pos)
        idx = np.where(v >= scheme.hi, scheme.k - 1, idx)
    idx = np.clip(idx, 0, scheme.k - 1).astype(np.int64)
    return np.where(absent, -1, idx)


def bin_index(v, scheme):
    return int(bin_indices(np.array([v]), scheme)[0])


def colors(values, kind, scheme):
    """RGB per value: (n, 3). Presence is black/white, abundance uses the palette."""
    v = np.asarray(values, dtype=np.float64)
    out = np.ones(v.shape + (3,), dtype=np.float64)
    if kind == "PRE":
        out[v > 0] = BLACK
        return out
    idx = bin_indices(v, scheme)
    present = idx >= 0
    out[present] = scheme.palette[idx[present]]
    return out


def color_of(v, kind, scheme):
    return tuple(float(c) for c in colors(np.array([v]), kind, scheme)[0])


def write_palette(scheme, path):
    with open(path, "w", encoding="utf-8") as fh:
        for i, (r, g, b) in enumerate(scheme.palette):
            fh.write(f"{i}\t{r:.6f}\t{g:.6f}\t{b:.6f}\n")
