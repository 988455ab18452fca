"""Plain-file exports for inspecting trained networks."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .activations import kumaraswamy, noisy_relu_mean, relu, sigmoid

__all__ = [
    "tile_weights",
    "export_weight_tiles",
    "write_pgm",
    "read_pgm",
    "activation_curves",
    "write_curves",
]

TILE = 28
GRID = 10
GUTTER = 2


def _normalize_tile(w: np.ndarray) -> np.ndarray:
    lo, hi = w.min(), w.max()
    if hi == lo:
        return np.full(w.shape, 128, dtype=np.uint8)
    return np.rint((w - lo) / (hi - lo) * 255.0).astype(np.uint8)


def tile_weights(W: np.ndarray, grid: int = GRID, tile: int = TILE, gutter: int = GUTTER) -> np.ndarray:
    """Lay the first ``grid*grid`` rows of ``W`` out as ``tile x tile`` images.

    Each tile is min-max scaled on its own; a constant row becomes mid-gray.
    Gutters and missing tiles (fewer rows than cells) stay black.
    """
    side = grid * tile + (grid - 1) * gutter
    img = np.zeros((side, side), dtype=np.uint8)
    for i in range(min(W.shape[0], grid * grid)):
        r, c = divmod(i, grid)
        y, x = r * (tile + gutter), c * (tile + gutter)
        img[y : y + tile, x : x + tile] = _normalize_tile(W[i].reshape(tile, tile))
    return img


def write_pgm(path, img: np.ndarray) -> None:
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.astype(np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None:
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    return np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=m.end()).reshape(h, w)


def export_weight_tiles(params, path) -> None:
    """Write the first 100 input-to-hidden filters as a 298x298 PGM."""
    write_pgm(path, tile_weights(params.W))


CURVE_COLUMNS = ("x", "sigmoid", "relu", "noisy_relu_mean", "kum_5_6", "kum_8_30")


def activation_curves(lo: float = -6.0, hi: float = 6.0, step: float = 0.01) -> dict[str, np.ndarray]:
    """The compared units sampled on a regular grid (Noisy ReLU as its mean, v = 1)."""
    per_unit = round(1.0 / step)
    x = np.arange(round(lo * per_unit), round(hi * per_unit) + 1) / per_unit
    return {
        "x": x,
        "sigmoid": sigmoid(x),
        "relu": relu(x),
        "noisy_relu_mean": noisy_relu_mean(x, 1.0),
        "kum_5_6": kumaraswamy(x, 5.0, 6.0),
        "kum_8_30": kumaraswamy(x, 8.0, 30.0),
    }


def write_curves(path) -> None:
    cols = activation_curves()
    lines = [",".join(CURVE_COLUMNS)]
    for i in range(cols["x"].shape[0]):
        lines.append(f"{cols['x'][i]:.2f}," + ",".join(repr(float(cols[c][i])) for c in CURVE_COLUMNS[1:]))
    Path(path).write_text("\n".join(lines) + "\n")
