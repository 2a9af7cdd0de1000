"""Row-major "fill-up" images and the raw 1D control signal."""

import math
from dataclasses import dataclass

import numpy as np

from met2img.binning import colors
from met2img.ingest import ABD

PAD = "pad"
SCALE = "scale"
WHITE_BG = "white"
ZERO_BG = "zero"


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class GridLayout:
    side: int
    d: int

    @property
    def n_empty(self):
        return self.side * self.side - self.d

    def cell_of(self, i):
        if not 0 <= i < self.d:
            raise IndexError(f"feature index {i} out of range for d={self.d}")
        return divmod(i, self.side)

    def cells(self):
        """``(rows, cols)`` arrays for features 0..d-1."""
        idx = np.arange(self.d)
        return idx // self.side, idx % self.side


def layout_for(d):
    if d < 1:
        raise LayoutError("need at least one feature")
    side = math.isqrt(d)
    if side * side < d:
        side += 1
    return GridLayout(side, d)


def render_grid(sample, scheme, kind=ABD):
    """``3 x side x side`` grid, one cell per feature, trailing cells white."""
    sample = np.asarray(sample, dtype=np.float64)
    layout = layout_for(sample.size)
    grid = np.ones((layout.side * layout.side, 3))
    grid[:layout.d] = colors(sample, kind, scheme)
    return grid.reshape(layout.side, layout.side, 3).transpose(2, 0, 1)


def render_fillup(sample, scheme, kind=ABD, target=32, mode=PAD, background=WHITE_BG):
    """Render one sample as a ``3 x target x target`` image.

    ``mode="pad"`` places the grid at the top-left of a white canvas (one pixel
    per feature); ``mode="scale"`` upsamples it with nearest neighbour.
    ``background="zero"`` inverts the image so empty/absent pixels are 0.
    """
    grid = render_grid(sample, scheme, kind)
    side = grid.shape[1]
    if target < side:
        raise LayoutError(f"target {target} is smaller than the {side}x{side} grid")
    if mode == PAD:
        img = np.ones((3, target, target))
        img[:, :side, :side] = grid
    elif mode == SCALE:
        src = np.arange(target) * side // target
        img = grid[:, src][:, :, src]
    else:
        raise LayoutError(f"unknown fill-up mode {mode!r}")
    if background == ZERO_BG:
        img = 1.0 - img
    elif background != WHITE_BG:
        raise LayoutError(f"unknown background {background!r}")
    return img


def render_raw_1d(sample):
    """Abundances unchanged, as a single-channel ``1 x d`` signal."""
    return np.asarray(sample, dtype=np.float64).reshape(1, -1).copy()
