"""Synthetic Lamb-Oseen flow fields: velocity synthesis, vorticity, seeded datasets.

Fields are 2D scalar vorticity grids stored row-major as ``grid[y, x]``.
Every field produced by :func:`generate_dataset` is reproducible from
``(spec.seed, field_index)`` alone; randomness comes from numpy's PCG64
generator seeded through ``SeedSequence`` entropy lists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

FIELD_MAGIC = "QVDF1"

# deterministic scalar mixing of (dataset seed, field index)
_SEED_STRIDE = 1_000_003


class PlacementError(RuntimeError):
    """Rejection sampling could not place vortices at the requested separation."""


@dataclass(frozen=True)
class VortexParams:
    """One Lamb-Oseen vortex: center in pixels, profile shape, orientation."""

    center_x: float
    center_y: float
    delta: float          # vorticity diffusion parameter
    v_max: float          # peak tangential velocity, field units
    core_radius: float    # pixels
    circulation_sign: int  # +1 anticlockwise, -1 clockwise

    def __post_init__(self):
        if self.delta <= 0 or self.v_max <= 0 or self.core_radius <= 0:
            raise ValueError("delta, v_max and core_radius must be positive")
        if self.circulation_sign not in (-1, 1):
            raise ValueError("circulation_sign must be -1 or +1")


@dataclass
class FlowField:
    """Dense vorticity grid plus the ground truth that generated it."""

    width: int
    height: int
    vorticity: np.ndarray                 # shape (height, width), float64
    vortices: list[VortexParams]
    true_count: int
    seed: int

    def __post_init__(self):
        self.vorticity = np.asarray(self.vorticity, dtype=np.float64)
        if self.vorticity.shape != (self.height, self.width):
            raise ValueError("vorticity grid shape does not match declared dims")
        if not np.all(np.isfinite(self.vorticity)):
            raise ValueError("vorticity grid contains non-finite entries")
        if self.true_count != len(self.vortices):
            raise ValueError("true_count must equal the number of vortices")


@dataclass(frozen=True)
class NoiseConfig:
    """Smoothed-Gaussian velocity noise: std = amplitude * mean vortex v_max."""

    amplitude: float = 0.1     # fraction of mean v_max
    kernel_sigma: float = 5.0  # pixels
    seed: int = 0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("noise amplitude must be >= 0")
        if self.kernel_sigma <= 0:
            raise ValueError("kernel_sigma must be > 0")


@dataclass(frozen=True)
class ParamRanges:
    """Uniform sampling intervals for the per-vortex profile parameters."""

    delta: tuple[float, float] = (0.5, 2.0)
    v_max: tuple[float, float] = (0.5, 1.5)
    core_radius: tuple[float, float] = (6.0, 14.0)

    def __post_init__(self):
        for name in ("delta", "v_max", "core_radius"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"invalid {name} range ({lo}, {hi})")


@dataclass(frozen=True)
class DatasetSpec:
    n_fields: int
    grid: tuple[int, int] = (200, 200)               # (width, height)
    vortex_count_range: tuple[int, int] = (4, 8)     # inclusive
    param_ranges: ParamRanges = field(default_factory=ParamRanges)
    min_separation: float = 40.0                     # pixels, center to center
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.vortex_count_range
        if not (0 <= lo <= hi <= 8):
            raise ValueError("vortex_count_range must lie within [0, 8]")
        if self.min_separation <= 0:
            raise ValueError("min_separation must be > 0")
        if self.n_fields < 0 or self.grid[0] <= 0 or self.grid[1] <= 0:
            raise ValueError("n_fields and grid dims must be positive")


def eval_lamb_oseen(p: VortexParams, R):
    """Tangential speed at radial distance R (pixels); 0 at R = 0 (limit value)."""
    R = np.asarray(R, dtype=np.float64)
    out = np.zeros_like(R)
    nz = R > 0
    rho2 = (R[nz] / p.core_radius) ** 2
    # -expm1(-x) = 1 - exp(-x), accurate for small arguments
    out[nz] = (
        p.v_max
        * (1.0 + 1.0 / (2.0 * p.delta))
        * (p.core_radius / R[nz])
        * (-np.expm1(-p.delta * rho2))
    )
    return float(out) if out.ndim == 0 else out


def _place_centers(rng: np.random.Generator, m: int, width: int, height: int,
                   min_separation: float, max_tries: int = 10_000) -> list[tuple[float, float]]:
    # keep cores away from the boundary so profiles are not badly clipped
    margin = min(min_separation / 2.0, width / 4.0, height / 4.0)
    centers: list[tuple[float, float]] = []
    tries = 0
    while len(centers) < m:
        if tries >= max_tries:
            raise PlacementError(
                f"could not place {m} centers >= {min_separation}px apart "
                f"on a {width}x{height} grid after {max_tries} draws"
            )
        tries += 1
        cx = rng.uniform(margin, width - 1 - margin)
        cy = rng.uniform(margin, height - 1 - margin)
        if all(np.hypot(cx - ox, cy - oy) >= min_separation for ox, oy in centers):
            centers.append((cx, cy))
    return centers


def _smoothed_noise(rng: np.random.Generator, shape: tuple[int, int],
                    sigma: float, std: float) -> np.ndarray:
    white = rng.standard_normal(shape)
    smooth = gaussian_filter(white, sigma=sigma, mode="nearest", truncate=3.0)
    s = smooth.std()
    if s == 0 or std == 0:
        return np.zeros(shape)
    return smooth * (std / s)


def synthesize_velocity(spec: DatasetSpec, seed: int):
    """Superpose randomly-placed Lamb-Oseen vortices plus smoothed noise.

    Returns ``(v_x, v_y, vortices)`` with velocity grids shaped (height, width).
    """
    width, height = spec.grid
    rng = np.random.default_rng(int(seed))
    lo, hi = spec.vortex_count_range
    m = int(rng.integers(lo, hi + 1))
    centers = _place_centers(rng, m, width, height, spec.min_separation)

    vortices = []
    for cx, cy in centers:
        vortices.append(VortexParams(
            center_x=cx,
            center_y=cy,
            delta=rng.uniform(*spec.param_ranges.delta),
            v_max=rng.uniform(*spec.param_ranges.v_max),
            core_radius=rng.uniform(*spec.param_ranges.core_radius),
            circulation_sign=int(rng.choice((-1, 1))),
        ))

    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    v_x = np.zeros((height, width))
    v_y = np.zeros((height, width))
    for v in vortices:
        dx = xs - v.center_x
        dy = ys - v.center_y
        R = np.hypot(dx, dy)
        vt = eval_lamb_oseen(v, R)
        inv_r = np.where(R > 0, 1.0 / np.where(R > 0, R, 1.0), 0.0)
        # anticlockwise unit tangent is (-dy, dx)/R; sign flips it
        v_x += v.circulation_sign * vt * (-dy) * inv_r
        v_y += v.circulation_sign * vt * dx * inv_r

    if spec.noise.amplitude > 0:
        if vortices:
            ref = float(np.mean([v.v_max for v in vortices]))
        else:
            ref = 0.5 * (spec.param_ranges.v_max[0] + spec.param_ranges.v_max[1])
        std = spec.noise.amplitude * ref
        noise_rng = np.random.default_rng([int(seed), int(spec.noise.seed)])
        v_x = v_x + _smoothed_noise(noise_rng, (height, width), spec.noise.kernel_sigma, std)
        v_y = v_y + _smoothed_noise(noise_rng, (height, width), spec.noise.kernel_sigma, std)

    return v_x, v_y, vortices


def curl2d(v_x: np.ndarray, v_y: np.ndarray) -> np.ndarray:
    """Vorticity dv_y/dx - dv_x/dy at unit pixel spacing.

    Central differences in the interior, one-sided at the boundary rows/cols.
    """
    v_x = np.asarray(v_x, dtype=np.float64)
    v_y = np.asarray(v_y, dtype=np.float64)
    if v_x.shape != v_y.shape:
        raise ValueError(f"velocity grids differ in shape: {v_x.shape} vs {v_y.shape}")
    dvy_dx = np.gradient(v_y, axis=1)
    dvx_dy = np.gradient(v_x, axis=0)
    return dvy_dx - dvx_dy


def field_seed(dataset_seed: int, index: int) -> int:
    """Scalar per-field seed derived from the dataset seed and field index."""
    return int(dataset_seed) * _SEED_STRIDE + int(index)


def make_field(spec: DatasetSpec, index: int) -> FlowField:
    """Build field ``index`` of the dataset described by ``spec``."""
    seed = field_seed(spec.seed, index)
    v_x, v_y, vortices = synthesize_velocity(spec, seed)
    psi = curl2d(v_x, v_y)
    peak = np.max(np.abs(psi))
    if peak > 0:
        psi = psi / peak
    width, height = spec.grid
    return FlowField(
        width=width,
        height=height,
        vorticity=psi,
        vortices=vortices,
        true_count=len(vortices),
        seed=seed,
    )


def generate_dataset(spec: DatasetSpec) -> list[FlowField]:
    """N seeded fields, vorticity max-abs normalized to 1 (unless identically zero)."""
    return [make_field(spec, i) for i in range(spec.n_fields)]


# ---------------------------------------------------------------------------
# Field files: text header + raw little-endian float64 payload, plus a JSON
# ground-truth sidecar. Format mirrors the NetPBM idea so files stay
# self-describing without any binary framing library.
# ---------------------------------------------------------------------------

def write_field_file(field: FlowField, path: str | Path) -> None:
    path = Path(path)
    header = (
        f"{FIELD_MAGIC}\n"
        f"width={field.width} height={field.height} "
        f"count={field.true_count} seed={field.seed}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(field.vorticity.astype("<f8").tobytes())


def ground_truth_dict(field: FlowField) -> dict:
    return {
        "width": field.width,
        "height": field.height,
        "true_count": field.true_count,
        "seed": field.seed,
        "vortices": [asdict(v) for v in field.vortices],
    }


def write_ground_truth(field: FlowField, path: str | Path) -> None:
    Path(path).write_text(json.dumps(ground_truth_dict(field), indent=2, sort_keys=True) + "\n")


def read_field_file(path: str | Path, sidecar: str | Path | None = None) -> FlowField:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.readline().decode("ascii").strip()
        if magic != FIELD_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        meta = dict(kv.split("=") for kv in fh.readline().decode("ascii").split())
        width, height = int(meta["width"]), int(meta["height"])
        count, seed = int(meta["count"]), int(meta["seed"])
        payload = fh.read(width * height * 8)
        if len(payload) != width * height * 8:
            raise ValueError(f"{path}: truncated payload")
        grid = np.frombuffer(payload, dtype="<f8").reshape(height, width).copy()

    vortices: list[VortexParams] = []
    if sidecar is None:
        candidate = path.with_suffix(".json")
        sidecar = candidate if candidate.exists() else None
    if sidecar is not None:
        gt = json.loads(Path(sidecar).read_text())
        vortices = [VortexParams(**v) for v in gt["vortices"]]
        count = gt["true_count"]
    elif count > 0:
        raise ValueError(f"{path}: ground-truth sidecar required for a field "
                         f"with {count} vortices")
    return FlowField(width=width, height=height, vorticity=grid,
                     vortices=vortices, true_count=count, seed=seed)


def save_dataset(fields: list[FlowField], out_dir: str | Path,
                 spec: DatasetSpec | None = None) -> Path:
    """Write field files + sidecars + manifest.json; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, f in enumerate(fields):
        stem = f"field_{i:03d}"
        write_field_file(f, out_dir / f"{stem}.psi")
        write_ground_truth(f, out_dir / f"{stem}.json")
        entries.append({"field": f"{stem}.psi", "ground_truth": f"{stem}.json",
                        "true_count": f.true_count})
    manifest = {"n_fields": len(fields), "fields": entries}
    if spec is not None:
        d = asdict(spec)
        manifest["spec"] = d
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def load_dataset(data_dir: str | Path) -> list[FlowField]:
    data_dir = Path(data_dir)
    manifest = json.loads((data_dir / "manifest.json").read_text())
    fields = []
    for entry in manifest["fields"]:
        fields.append(read_field_file(data_dir / entry["field"],
                                      data_dir / entry["ground_truth"]))
    return fields
