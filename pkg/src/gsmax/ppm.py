"""Binary PPM (P6) export of first-layer filters arranged by group.

Groups become columns and group members stack vertically inside their
column, so filters competing in the same pool sit next to each other.
Every filter is min-max normalized on its own; a 1-pixel black frame
separates tiles and borders the grid.
"""

import numpy as np

from .errors import ShapeError
from .groups import GroupSpec

GRAY_FILL = 128


def filter_tiles(weights):
    """Reshape a filter bank into RGB tiles of shape (count, k, k, 3).

    Accepts a dense weight matrix (fan_in, channels), one filter per
    column, or a conv filter bank (out, in, kh, kw).  Dense fan-in is
    read as 3*k*k (color) or k*k (grayscale); the two never collide
    because 3*k*k is not a perfect square.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim == 2:
        fan_in, count = w.shape
        side = round((fan_in / 3) ** 0.5)
        if 3 * side * side == fan_in:
            tiles = w.T.reshape(count, 3, side, side).transpose(0, 2, 3, 1)
        else:
            side = round(fan_in ** 0.5)
            if side * side != fan_in:
                raise ShapeError(
                    f"fan-in {fan_in} is neither 3*k*k nor k*k; cannot tile")
            gray = w.T.reshape(count, side, side)
            tiles = np.repeat(gray[..., None], 3, axis=3)
        return tiles
    if w.ndim == 4:
        count, in_channels, kh, kw = w.shape
        if in_channels == 3:
            return w.transpose(0, 2, 3, 1).copy()
        if in_channels == 1:
            return np.repeat(w[:, 0, :, :, None], 3, axis=3)
        raise ShapeError(
            f"conv filters with {in_channels} input channels have no "
            "direct color rendering")
    raise ShapeError(f"expected rank-2 or rank-4 filter bank, got rank {w.ndim}")


def normalize_tile(tile):
    """Map one tile to uint8 via min-max scaling; flat tiles go mid-gray."""
    lo = tile.min()
    hi = tile.max()
    if hi == lo:
        return np.full(tile.shape, GRAY_FILL, dtype=np.uint8)
    scaled = (tile - lo) / (hi - lo) * 255.0
    return np.rint(scaled).astype(np.uint8)


def render_filter_grid(weights, spec):
    """Compose the full grid image as a (height, width, 3) uint8 array."""
    if not isinstance(spec, GroupSpec):
        raise TypeError("spec must be a GroupSpec")
    tiles = filter_tiles(weights)
    if tiles.shape[0] != spec.n_channels:
        raise ShapeError(
            f"{tiles.shape[0]} filters but the grouping covers "
            f"{spec.n_channels} channels")
    th, tw = tiles.shape[1], tiles.shape[2]
    n_cols = spec.n_groups
    n_rows = max(spec.sizes)
    height = n_rows * th + (n_rows + 1)
    width = n_cols * tw + (n_cols + 1)
    image = np.zeros((height, width, 3), dtype=np.uint8)
    for col, members in enumerate(spec.groups):
        x = 1 + col * (tw + 1)
        for row, channel in enumerate(members):
            y = 1 + row * (th + 1)
            image[y:y + th, x:x + tw] = normalize_tile(tiles[channel])
    return image


def write_ppm(path, image):
    """Write an RGB uint8 array as a binary PPM (P6) file."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ShapeError("PPM writer expects a (height, width, 3) uint8 array")
    header = f"P6\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def read_ppm(path):
    """Parse a binary PPM written by write_ppm back into an array."""
    from .errors import FormatError

    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P6":
        raise FormatError(f"{path}: not a P6 PPM file")
    try:
        width, height = (int(tok) for tok in parts[1].split())
        maxval = int(parts[2])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PPM header") from exc
    if maxval != 255:
        raise FormatError(f"{path}: unsupported max value {maxval}")
    payload = parts[3]
    if len(payload) != width * height * 3:
        raise FormatError(f"{path}: payload size does not match header")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)


def write_filter_grid(path, weights, spec):
    """Render and write the grouped filter grid in one call."""
    write_ppm(path, render_filter_grid(weights, spec))
