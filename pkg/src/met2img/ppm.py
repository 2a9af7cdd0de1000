"""Minimal binary PPM (P6) / PGM (P5) reading and writing, maxval 255."""

import numpy as np


def quantize(channel_values):
    return np.clip(np.round(np.asarray(channel_values, dtype=np.float64) * 255), 0, 255).astype(np.uint8)


def write_ppm(path, image):
    """Write a ``3 x H x W`` image with channels in [0, 1] as binary P6."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected a 3 x H x W image, got shape {image.shape}")
    _, h, w = image.shape
    pixels = quantize(image).transpose(1, 2, 0)
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(pixels.tobytes())


def write_pgm(path, image):
    """Write an ``H x W`` single-channel image in [0, 1] as binary P5."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"expected an H x W image, got shape {image.shape}")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(quantize(image).tobytes())


def _header(data):
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pnm(path):
    """Read P5/P6 back as uint8: ``H x W`` for P5, ``3 x H x W`` for P6."""
    with open(path, "rb") as fh:
        data = fh.read()
    (magic, w, h, maxval), pos = _header(data)
    w, h = int(w), int(h)
    if int(maxval) != 255:
        raise ValueError("only maxval 255 is supported")
    if magic == b"P6":
        return np.frombuffer(data, np.uint8, 3 * w * h, pos).reshape(h, w, 3).transpose(2, 0, 1)
    if magic == b"P5":
        return np.frombuffer(data, np.uint8, w * h, pos).reshape(h, w)
    raise ValueError(f"unsupported magic {magic!r}")
