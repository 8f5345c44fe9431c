"""Dependency-free portable pixmap rendering of fields and detections."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _diverging_rgb(grid: np.ndarray) -> np.ndarray:
    """Blue-white-red map of a signed grid, symmetric about zero."""
    peak = np.max(np.abs(grid))
    t = grid / peak if peak > 0 else np.zeros_like(grid)
    rgb = np.empty(grid.shape + (3,), dtype=np.float64)
    pos = np.clip(t, 0, 1)
    neg = np.clip(-t, 0, 1)
    rgb[..., 0] = 1.0 - neg          # red fades where field is negative
    rgb[..., 1] = 1.0 - pos - neg + pos * neg
    rgb[..., 2] = 1.0 - pos
    return np.clip(rgb, 0, 1)


def _draw_circle(rgb: np.ndarray, cx: float, cy: float, radius: float,
                 color: tuple[float, float, float]) -> None:
    h, w = rgb.shape[:2]
    n = max(32, int(8 * radius))
    theta = 2 * np.pi * np.arange(n) / n
    xs = np.rint(cx + radius * np.cos(theta)).astype(int)
    ys = np.rint(cy + radius * np.sin(theta)).astype(int)
    ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    rgb[ys[ok], xs[ok]] = color


def write_ppm(rgb: np.ndarray, path: str | Path) -> None:
    h, w = rgb.shape[:2]
    data = (np.clip(rgb, 0, 1) * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def render_detections(grid: np.ndarray, raw_centers, unique_centers,
                      radius: float, path: str | Path) -> None:
    """Field heatmap with raw detections in black and unique centers in green."""
    rgb = _diverging_rgb(np.asarray(grid, dtype=np.float64))
    for x, y in raw_centers:
        _draw_circle(rgb, x, y, radius, (0.0, 0.0, 0.0))
    for x, y in unique_centers:
        _draw_circle(rgb, x, y, 1.5 * radius, (0.0, 0.8, 0.0))
    write_ppm(rgb, path)
