"""Parallel vortex detection: coherent superposition over window positions.

Window positions live on a coarse 2^n_a grid indexed by an ancilla register
(most significant qubits, row-major position order). Conditioned on each
ancilla state the detection circuit runs at the matching position; a rank-1
projector keeps one contour frequency k* with every other flow qubit at |0>,
which leaves the ancilla holding the per-position response amplitudes a_x.
A final ancilla QFT turns those into the *density spectrum*: the
probability distribution over ancilla frequencies, truncated to the first
2^n_t bins and renormalized.

The production path computes a_x per position without materializing the
(n_f + n_a)-qubit state; :func:`full_circuit_density_spectrum` simulates the
explicit controlled-shift circuit and is kept as the reference oracle.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .qstate import ProjectionEmptyError, RegisterLayout, encode_flow
from .seqqvd import ContourTemplate, DetectionParams, apply_detection_circuit, contour_values

NON_VORTICAL, VORTICAL = 0, 1


@dataclass(frozen=True)
class ParallelConfig:
    """Ancilla size, the coarse position grid, selected contour frequency, truncation."""

    n_a: int
    positions: tuple[tuple[int, int], ...]
    selected_k: int = 0
    truncate_qubits: int | None = None   # defaults to n_a (no truncation)

    def __post_init__(self):
        if self.truncate_qubits is None:
            object.__setattr__(self, "truncate_qubits", self.n_a)
        if len(self.positions) != (1 << self.n_a):
            raise ValueError(
                f"{len(self.positions)} positions for a {self.n_a}-qubit ancilla"
            )
        if not (0 <= self.truncate_qubits <= self.n_a):
            raise ValueError("truncate_qubits must lie in [0, n_a]")
        if self.selected_k < 0:
            raise ValueError("selected_k must be >= 0")


@dataclass(frozen=True)
class DensitySpectrum:
    """Truncated ancilla-frequency distribution plus the post-selection probability."""

    probs: np.ndarray
    success_probability: float

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("probs must be a probability vector")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Shot histogram over density-spectrum bins with a class tag."""

    counts: np.ndarray
    shots: int
    label: int | None = None   # NON_VORTICAL / VORTICAL

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.sum() != self.shots:
            raise ValueError("counts must sum to shots")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    def normalized(self) -> np.ndarray:
        if self.shots == 0:
            return np.zeros(self.counts.shape)
        return self.counts / self.shots


def coarse_position_grid(width: int, height: int, window_side: int, n_a: int
                         ) -> tuple[tuple[int, int], ...]:
    """Row-major 2^(n_a/2) x 2^(n_a/2) grid of window origins covering the field."""
    if n_a % 2:
        raise ValueError("square coarse grids need an even ancilla register")
    per_axis = 1 << (n_a // 2)

    def axis(dim: int) -> np.ndarray:
        return np.rint(np.linspace(0, dim - window_side, per_axis)).astype(int)

    xs, ys = axis(width), axis(height)
    return tuple((int(x), int(y)) for y in ys for x in xs)


def default_parallel_config(width: int, height: int, layout: RegisterLayout,
                            n_a: int = 8, selected_k: int = 0,
                            truncate_qubits: int | None = None) -> ParallelConfig:
    positions = coarse_position_grid(width, height, layout.window_side, n_a)
    return ParallelConfig(n_a=n_a, positions=positions, selected_k=selected_k,
                          truncate_qubits=truncate_qubits)


def _position_amplitudes(grid: np.ndarray, template: ContourTemplate,
                         cfg: ParallelConfig) -> np.ndarray:
    """a_x: selected contour-frequency amplitude per window position (field units)."""
    pos = np.asarray(cfg.positions, dtype=np.int64)
    off = template.offsets()
    c = template.window_side // 2
    xs = pos[:, 0, None] + c + off[None, :, 0]
    ys = pos[:, 1, None] + c + off[None, :, 1]
    values = np.asarray(grid, dtype=np.float64)[ys, xs]          # (2^n_a, 2^n_c)
    n = values.shape[1]
    coeffs = np.fft.fft(values, axis=1) / np.sqrt(n)
    return coeffs[:, cfg.selected_k]


def density_spectrum(field, params: DetectionParams, cfg: ParallelConfig,
                     layout: RegisterLayout) -> DensitySpectrum:
    """Ancilla-frequency distribution of the parallel circuit for one field."""
    grid = np.asarray(getattr(field, "vorticity", field), dtype=np.float64)
    template = ContourTemplate.from_beta(layout.window_side, params.beta, layout.n_c)
    if cfg.selected_k >= (1 << layout.n_c):
        raise ValueError("selected_k outside the contour register")
    a = _position_amplitudes(grid, template, cfg)
    norm = float(np.linalg.norm(grid))
    if norm == 0 or not np.any(a):
        raise ProjectionEmptyError("all position amplitudes are zero")
    dim = 1 << cfg.n_a
    # uniform 1/sqrt(2^n_a) ancilla weight, then the ancilla QFT
    b = np.fft.fft(a) / dim
    probs_full = np.abs(b) ** 2
    success = float(np.sum(np.abs(a / norm) ** 2) / dim)
    kept = probs_full[: 1 << cfg.truncate_qubits]
    total = kept.sum()
    if total == 0:
        raise ProjectionEmptyError("no probability mass below the truncation")
    return DensitySpectrum(probs=kept / total, success_probability=success)


def full_circuit_density_spectrum(field, params: DetectionParams, cfg: ParallelConfig,
                                  layout: RegisterLayout) -> DensitySpectrum:
    """Explicit (n_a + n_f)-qubit simulation of the controlled-shift circuit.

    Test oracle only: O(2^(n_a + n_f)) memory. The joint state is held as a
    (2^n_a, 2^n_f) matrix with the ancilla on the most significant qubits;
    row x carries the branch conditioned on ancilla |x>.
    """
    psi_f = encode_flow(field, layout)
    template = ContourTemplate.from_beta(layout.window_side, params.beta, layout.n_c)
    dim_a = 1 << cfg.n_a
    joint = np.empty((dim_a, 1 << layout.n_f), dtype=np.complex128)
    for x, origin in enumerate(cfg.positions):
        branch = apply_detection_circuit(psi_f, origin, template, layout)
        joint[x] = branch.amplitudes
    joint /= np.sqrt(dim_a)

    # rank-1 projector: contour register = selected_k, all lower flow qubits = 0
    target = cfg.selected_k << (layout.n_f - layout.n_c)
    kept = joint[:, target].copy()
    success = float(np.sum(np.abs(kept) ** 2))
    if success == 0:
        raise ProjectionEmptyError("projector removed all amplitude")
    kept /= np.sqrt(success)

    ancilla_freq = np.fft.fft(kept) / np.sqrt(dim_a)
    probs_full = np.abs(ancilla_freq) ** 2
    kept_band = probs_full[: 1 << cfg.truncate_qubits]
    total = kept_band.sum()
    if total == 0:
        raise ProjectionEmptyError("no probability mass below the truncation")
    return DensitySpectrum(probs=kept_band / total, success_probability=success)


def contour_response(field, params: DetectionParams, cfg: ParallelConfig,
                     layout: RegisterLayout, position_index: int) -> np.ndarray:
    """Contour values at one coarse-grid position; convenience for inspection."""
    grid = np.asarray(getattr(field, "vorticity", field), dtype=np.float64)
    template = ContourTemplate.from_beta(layout.window_side, params.beta, layout.n_c)
    return contour_values(grid, cfg.positions[position_index], template)


def representative_distribution(fields, params: DetectionParams, cfg: ParallelConfig,
                                layout: RegisterLayout, shots_per_field: int, seed,
                                label: int | None = None) -> EmpiricalDistribution:
    """Class-level histogram: sample every field's density spectrum and concatenate."""
    if not fields:
        raise ValueError("need at least one field")
    if shots_per_field <= 0:
        raise ValueError("shots_per_field must be > 0")
    n_bins = 1 << cfg.truncate_qubits
    counts = np.zeros(n_bins, dtype=np.int64)
    for i, f in enumerate(fields):
        spec = density_spectrum(f, params, cfg, layout)
        rng = np.random.default_rng([_seed_entropy(seed), i])
        counts += rng.multinomial(shots_per_field, spec.probs)
    return EmpiricalDistribution(counts=counts, shots=shots_per_field * len(fields),
                                 label=label)


def sample_empirical(rep: EmpiricalDistribution, shots: int, n_repeats: int,
                     seed) -> list[EmpiricalDistribution]:
    """n_repeats independent multinomial histograms of the normalized representative."""
    if shots <= 0:
        raise ValueError("shots must be a positive integer")
    if n_repeats <= 0:
        raise ValueError("n_repeats must be a positive integer")
    total = rep.counts.sum()
    if total == 0:
        raise ValueError("representative distribution is empty")
    p = rep.counts / total
    rng = np.random.default_rng(seed)
    draws = rng.multinomial(shots, p, size=n_repeats)
    return [EmpiricalDistribution(counts=d, shots=shots, label=rep.label) for d in draws]


def _seed_entropy(seed) -> int:
    if isinstance(seed, (list, tuple)):
        mixed = 0
        for part in seed:
            mixed = mixed * 1_000_003 + int(part)
        return mixed
    return int(seed)


def write_distribution_csv(bins_values, path: str | Path, header=("bin", "value")) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for b, v in enumerate(np.asarray(bins_values).tolist()):
            writer.writerow([b, v])


def write_distribution_json(dist: EmpiricalDistribution | DensitySpectrum,
                            path: str | Path, config_echo: dict | None = None) -> None:
    if isinstance(dist, EmpiricalDistribution):
        payload = {"counts": dist.counts.tolist(), "shots": dist.shots, "label": dist.label}
    else:
        payload = {"probs": dist.probs.tolist(),
                   "success_probability": dist.success_probability}
    if config_echo is not None:
        payload["config"] = config_echo
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
