"""Sequential sliding-window vortex detection.

A window is selected from the encoded flow by per-register cyclic shifts
followed by a permutation that packs the window pixels into the top qubits;
a second permutation packs an anticlockwise circular contour into the top
contour register, and a QFT turns the contour into its frequency spectrum.
A window scores a hit when the low-frequency band of the contour power
spectrum peaks above the threshold; overlapping hits are merged by
connected-component centroid averaging.

Detection spectra are expressed in *field units* (the grid is max-abs
normalized upstream), not in global L2-normalized amplitude units: the two
differ by the documented factor ``norm**2`` where ``norm`` is the L2 norm of
the encoded grid, carried on :attr:`StateVector.scale`.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .qstate import (
    PermutationSpec,
    RegisterLayout,
    StateVector,
    apply_permutation,
    apply_qft,
    apply_shift,
    encode_flow,
)


class InfeasibleContourError(ValueError):
    """Requested contour cannot be realized as a bijective pixel selection."""


@dataclass(frozen=True)
class DetectionParams:
    """The trainable triple: window step, inverse contour radius, peak threshold."""

    alpha: int     # window step, pixels
    beta: float    # inverse contour radius; contour radius = window/(2*beta)
    gamma: float   # low-band peak threshold, field units

    def __post_init__(self):
        if int(self.alpha) != self.alpha or self.alpha < 1:
            raise ValueError("alpha must be a positive integer")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")


@dataclass(frozen=True)
class ContourTemplate:
    """Ring of 2^n_c pixel offsets from the window center, anticlockwise from angle 0."""

    window_side: int
    radius: float
    points: tuple[tuple[int, int], ...]

    @classmethod
    def from_beta(cls, window_side: int, beta: float, n_c: int) -> "ContourTemplate":
        n_points = 1 << n_c
        radius = window_side / (2.0 * beta)
        guard = n_points / (2.0 * np.pi)
        if radius < guard:
            raise InfeasibleContourError(
                f"contour radius {radius:.2f} below distinctness guard {guard:.2f} "
                f"for {n_points} points"
            )
        theta = 2.0 * np.pi * np.arange(n_points) / n_points
        dx = np.rint(radius * np.cos(theta)).astype(int)
        dy = np.rint(radius * np.sin(theta)).astype(int)
        center = window_side // 2
        if (center + dx).min() < 0 or (center + dx).max() >= window_side \
                or (center + dy).min() < 0 or (center + dy).max() >= window_side:
            raise InfeasibleContourError(
                f"contour radius {radius:.2f} leaves the {window_side}px window"
            )
        points = tuple(zip(dx.tolist(), dy.tolist()))
        if len(set(points)) != n_points:
            raise InfeasibleContourError("contour points collide after pixel rounding")
        return cls(window_side=window_side, radius=radius, points=points)

    @property
    def n_points(self) -> int:
        return len(self.points)

    def offsets(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.int64)


@dataclass(frozen=True)
class PowerSpectrum:
    """|DFT(c)|^2 / N over all contour frequencies, with a low-band view."""

    values: np.ndarray
    n_lfps: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if np.any(values < 0):
            raise ValueError("power spectrum entries must be nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def low_band(self) -> np.ndarray:
        return self.values[: 1 << self.n_lfps]


@dataclass(frozen=True)
class Detection:
    center: tuple[float, float]   # window center, pixels (x, y)
    peak_value: float
    peak_frequency: int


@dataclass(frozen=True)
class DetectionReport:
    raw: tuple[Detection, ...]
    unique_centers: tuple[tuple[float, float], ...]
    count: int


def window_positions(width: int, height: int, alpha: int, window_side: int) -> list[tuple[int, int]]:
    """Raster-order window origins spaced alpha apart, snapped to the far edge."""
    if window_side > width or window_side > height:
        raise ValueError(f"{window_side}px window exceeds {width}x{height} field")

    def axis(dim: int) -> list[int]:
        last = dim - window_side
        ticks = list(range(0, last + 1, int(alpha)))
        if ticks[-1] != last:
            ticks.append(last)
        return ticks

    return [(x, y) for y in axis(height) for x in axis(width)]


def contour_values(grid: np.ndarray, origin: tuple[int, int],
                   template: ContourTemplate) -> np.ndarray:
    """Contour pixel values read directly from the grid, anticlockwise order."""
    x0, y0 = origin
    c = template.window_side // 2
    off = template.offsets()
    return np.asarray(grid, dtype=np.float64)[y0 + c + off[:, 1], x0 + c + off[:, 0]]


def build_window_permutation(layout: RegisterLayout) -> PermutationSpec:
    """Pack the window at the grid origin into the top window register.

    Window pixel (i, j) with i, j < W lands on basis index
    ``(i*W + j) << (n_f - n_w)``; everything else is completed bijectively in
    increasing index order.
    """
    w = layout.window_side
    i, j = np.divmod(np.arange(w * w), w)
    sources = (i << layout.y_bits) | j
    targets = np.arange(w * w) << (layout.n_f - layout.n_w)
    return PermutationSpec.from_partial(sources, targets, 1 << layout.n_f)


def build_contour_permutation(layout: RegisterLayout,
                              template: ContourTemplate) -> PermutationSpec:
    """Pack the contour ring into the top contour register of the window."""
    w = template.window_side
    if w != layout.window_side:
        raise ValueError("template window side does not match layout")
    c = w // 2
    off = template.offsets()
    sources = (c + off[:, 0]) * w + (c + off[:, 1])
    targets = np.arange(template.n_points) << (layout.n_w - layout.n_c)
    return PermutationSpec.from_partial(sources, targets, 1 << layout.n_w)


def apply_detection_circuit(state: StateVector, origin: tuple[int, int],
                            template: ContourTemplate, layout: RegisterLayout,
                            qft: bool = True) -> StateVector:
    """Shift + window/contour permutations (+ contour QFT) at one window origin."""
    x0, y0 = origin
    s = apply_shift(state, -x0, layout.x_register)
    s = apply_shift(s, -y0, layout.y_register)
    s = apply_permutation(s, build_window_permutation(layout))
    s = apply_permutation(s, build_contour_permutation(layout, template),
                          layout.window_register)
    if qft:
        s = apply_qft(s, layout.contour_register)
    return s


def extract_contour_state(state: StateVector, origin: tuple[int, int],
                          template: ContourTemplate,
                          layout: RegisterLayout) -> tuple[np.ndarray, StateVector]:
    """Contour values (field units) plus the post-QFT statevector at one window.

    The values are read from the pre-QFT top-register amplitudes rescaled by
    the encoding norm, so the two paths agree by construction; the direct
    pixel path is :func:`contour_values`.
    """
    pre = apply_detection_circuit(state, origin, template, layout, qft=False)
    stride = 1 << (layout.n_f - layout.n_c)
    idx = np.arange(template.n_points) * stride
    values = (pre.amplitudes[idx] * pre.scale).real
    return values, apply_qft(pre, layout.contour_register)


def power_spectrum(values: np.ndarray, n_lfps: int) -> PowerSpectrum:
    """values[k] = |sum_m c_m exp(-2*pi*i*k*m/N)|^2 / N with N = len(c)."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    if n == 0 or (n & (n - 1)):
        raise ValueError("contour length must be a power of two")
    if (1 << n_lfps) > n:
        raise ValueError("low band wider than the spectrum")
    spectrum = np.abs(np.fft.fft(values)) ** 2 / n
    return PowerSpectrum(values=spectrum, n_lfps=n_lfps)


def spectrum_from_state(psi_ps: StateVector, layout: RegisterLayout) -> PowerSpectrum:
    """Field-unit contour spectrum read off the circuit state.

    Picks the contour-register amplitudes with all lower registers at |0>
    (the post-selected branch) and converts L2-normalized probabilities to
    field units with the documented ``scale**2`` factor.
    """
    stride = 1 << (psi_ps.n_qubits - layout.n_c)
    idx = np.arange(1 << layout.n_c) * stride
    amps = psi_ps.amplitudes[idx] * psi_ps.scale
    return PowerSpectrum(values=np.abs(amps) ** 2, n_lfps=layout.n_lfps)


def detect_window(spectrum: PowerSpectrum, gamma: float,
                  center: tuple[float, float]) -> Detection | None:
    """Hit iff the low-band peak reaches gamma."""
    band = spectrum.low_band
    k = int(np.argmax(band))
    peak = float(band[k])
    if peak >= gamma:
        return Detection(center=center, peak_value=peak, peak_frequency=k)
    return None


def dedup(raw, merge_radius: float) -> tuple[tuple[tuple[float, float], ...], int]:
    """Merge detections into connected components under center distance.

    Components are chains of detections no further than ``merge_radius``
    apart; each contributes its centroid.
    """
    if merge_radius <= 0:
        raise ValueError("merge_radius must be > 0")
    centers = np.asarray([d.center if isinstance(d, Detection) else d for d in raw],
                         dtype=np.float64)
    n = centers.shape[0]
    if n == 0:
        return (), 0
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    d2 = np.sum((centers[:, None, :] - centers[None, :, :]) ** 2, axis=-1)
    close = d2 <= merge_radius ** 2
    for a in range(n):
        for b in range(a + 1, n):
            if close[a, b]:
                parent[find(a)] = find(b)

    groups: dict[int, list[int]] = {}
    for a in range(n):
        groups.setdefault(find(a), []).append(a)
    # deterministic output order: by first member index
    comps = sorted(groups.values(), key=lambda g: g[0])
    uniques = tuple(tuple(centers[g].mean(axis=0)) for g in comps)
    return uniques, len(uniques)


def _window_spectra_direct(grid: np.ndarray, positions, template: ContourTemplate,
                           n_lfps: int) -> np.ndarray:
    """Low-band spectra for all windows at once via gathered contour pixels."""
    pos = np.asarray(positions, dtype=np.int64)
    off = template.offsets()
    c = template.window_side // 2
    xs = pos[:, 0, None] + c + off[None, :, 0]
    ys = pos[:, 1, None] + c + off[None, :, 1]
    values = np.asarray(grid, dtype=np.float64)[ys, xs]       # (P, N)
    n = values.shape[1]
    coeffs = np.fft.rfft(values, axis=1)
    spectra = np.abs(coeffs) ** 2 / n
    return spectra[:, : 1 << n_lfps]


def detect_field(field, params: DetectionParams, layout: RegisterLayout,
                 merge_radius: float | None = None, path: str = "direct") -> DetectionReport:
    """Full per-field pipeline: windows -> spectra -> threshold -> dedup.

    ``path='direct'`` evaluates spectra from contour pixels; ``path='circuit'``
    encodes the field once and runs the statevector circuit per window. The
    two agree to float precision and tests cross-check them.
    """
    grid = np.asarray(getattr(field, "vorticity", field), dtype=np.float64)
    height, width = grid.shape
    template = ContourTemplate.from_beta(layout.window_side, params.beta, layout.n_c)
    positions = window_positions(width, height, params.alpha, layout.window_side)
    half = layout.window_side // 2
    centers = [(float(x + half), float(y + half)) for x, y in positions]

    raw: list[Detection] = []
    if path == "direct":
        low = _window_spectra_direct(grid, positions, template, layout.n_lfps)
        ks = np.argmax(low, axis=1)
        peaks = low[np.arange(low.shape[0]), ks]
        for center, peak, k in zip(centers, peaks, ks):
            if peak >= params.gamma:
                raw.append(Detection(center=center, peak_value=float(peak),
                                     peak_frequency=int(k)))
    elif path == "circuit":
        state = encode_flow(grid, layout)
        for origin, center in zip(positions, centers):
            psi_ps = apply_detection_circuit(state, origin, template, layout)
            hit = detect_window(spectrum_from_state(psi_ps, layout), params.gamma, center)
            if hit is not None:
                raw.append(hit)
    else:
        raise ValueError(f"unknown path {path!r}")

    if merge_radius is None:
        merge_radius = 2.0 * template.radius
    uniques, count = dedup(raw, merge_radius)
    return DetectionReport(raw=tuple(raw), unique_centers=uniques, count=count)


def window_peaks(field, params: DetectionParams,
                 layout: RegisterLayout) -> list[tuple[int, int, float, int]]:
    """(x0, y0, low-band peak, argmax k) for every window; used for CSV export."""
    grid = np.asarray(getattr(field, "vorticity", field), dtype=np.float64)
    height, width = grid.shape
    template = ContourTemplate.from_beta(layout.window_side, params.beta, layout.n_c)
    positions = window_positions(width, height, params.alpha, layout.window_side)
    low = _window_spectra_direct(grid, positions, template, layout.n_lfps)
    ks = np.argmax(low, axis=1)
    peaks = low[np.arange(low.shape[0]), ks]
    return [(x, y, float(p), int(k)) for (x, y), p, k in zip(positions, peaks, ks)]


def report_to_dict(report: DetectionReport, field_id, params: DetectionParams) -> dict:
    return {
        "field_id": field_id,
        "params": {"alpha": params.alpha, "beta": params.beta, "gamma": params.gamma},
        "raw": [
            {"x": d.center[0], "y": d.center[1], "peak": d.peak_value, "k": d.peak_frequency}
            for d in report.raw
        ],
        "unique": [{"x": x, "y": y} for x, y in report.unique_centers],
        "count": report.count,
    }


def write_report_json(report: DetectionReport, field_id, params: DetectionParams,
                      path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report, field_id, params), indent=2, sort_keys=True) + "\n"
    )


def write_peaks_csv(rows, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x0", "y0", "peak", "k"])
        writer.writerows(rows)
