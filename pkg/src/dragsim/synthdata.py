"""Synthetic parametric "simulation", renderer, and dataset manifests.

The analytic field family is a background plane plus two isotropic Gaussian
bumps. Horizontal center, amplitude, and width of both bumps are affine in
the three simulation parameters (coefficients below in ``FieldFamily``), so
the parameter-to-image map is smooth and each parameter has a visible,
monotone effect. The single visualization parameter offsets the field value
before the colormap is applied.

Dataset layout on disk::

    out_dir/
      manifest.json
      images/img_000000.png ...

Manifest schema (exact):
``{"spec": {"sim": [{"name","min","max"}...], "vis": [...]},
"entries": [{"sim": [...], "vis": [...], "image": "rel/path", "split": "train"|"test"}]}``
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    ArgumentError,
    DanglingImageError,
    DataError,
    ManifestSchemaError,
    RangeError,
)
from .imageio import load_png, save_png


@dataclass(frozen=True)
class ParameterSpec:
    """Declares the simulation and visualization parameters and their ranges."""

    sim_names: tuple
    sim_ranges: tuple
    vis_names: tuple
    vis_ranges: tuple

    def __post_init__(self):
        object.__setattr__(self, "sim_names", tuple(self.sim_names))
        object.__setattr__(self, "sim_ranges", tuple(tuple(r) for r in self.sim_ranges))
        object.__setattr__(self, "vis_names", tuple(self.vis_names))
        object.__setattr__(self, "vis_ranges", tuple(tuple(r) for r in self.vis_ranges))
        if len(self.sim_names) < 1 or len(self.vis_names) < 1:
            raise ArgumentError("need at least one simulation and one visualization parameter")
        if len(self.sim_names) != len(self.sim_ranges):
            raise ArgumentError("sim_names and sim_ranges length mismatch")
        if len(self.vis_names) != len(self.vis_ranges):
            raise ArgumentError("vis_names and vis_ranges length mismatch")
        names = self.sim_names + self.vis_names
        if len(set(names)) != len(names):
            raise ArgumentError(f"parameter names not unique: {names}")
        for name, (lo, hi) in zip(names, self.sim_ranges + self.vis_ranges):
            if not (lo < hi):
                raise ArgumentError(f"range for '{name}' must have min < max, got [{lo}, {hi}]")

    @property
    def m(self) -> int:
        return len(self.sim_names)

    @property
    def n(self) -> int:
        return len(self.vis_names)

    def validate(self, params: "ParameterVector") -> None:
        """Raise RangeError naming the first out-of-range parameter."""
        if len(params.sim_values) != self.m or len(params.vis_values) != self.n:
            raise ArgumentError(
                f"parameter vector arity ({len(params.sim_values)}, {len(params.vis_values)}) "
                f"does not match spec ({self.m}, {self.n})"
            )
        for name, (lo, hi), v in zip(
            self.sim_names + self.vis_names,
            self.sim_ranges + self.vis_ranges,
            tuple(params.sim_values) + tuple(params.vis_values),
        ):
            if not np.isfinite(v):
                raise DataError(f"parameter '{name}' is not finite: {v}")
            if v < lo or v > hi:
                raise RangeError(name, v, lo, hi)

    def normalize(self, params: "ParameterVector"):
        """Affine map of each value to [0,1] by its declared range.

        Out-of-range values map outside [0,1]; callers that require in-range
        inputs must call validate() first.
        """
        sim = np.array(
            [(v - lo) / (hi - lo) for v, (lo, hi) in zip(params.sim_values, self.sim_ranges)],
            dtype=np.float64,
        )
        vis = np.array(
            [(v - lo) / (hi - lo) for v, (lo, hi) in zip(params.vis_values, self.vis_ranges)],
            dtype=np.float64,
        )
        return sim, vis

    def denormalize(self, sim_t: Sequence[float], vis_t: Sequence[float]) -> "ParameterVector":
        sim = tuple(lo + float(t) * (hi - lo) for t, (lo, hi) in zip(sim_t, self.sim_ranges))
        vis = tuple(lo + float(t) * (hi - lo) for t, (lo, hi) in zip(vis_t, self.vis_ranges))
        return ParameterVector(sim, vis)

    def to_json_dict(self) -> dict:
        return {
            "sim": [
                {"name": n, "min": lo, "max": hi}
                for n, (lo, hi) in zip(self.sim_names, self.sim_ranges)
            ],
            "vis": [
                {"name": n, "min": lo, "max": hi}
                for n, (lo, hi) in zip(self.vis_names, self.vis_ranges)
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ParameterSpec":
        try:
            return cls(
                sim_names=tuple(p["name"] for p in d["sim"]),
                sim_ranges=tuple((p["min"], p["max"]) for p in d["sim"]),
                vis_names=tuple(p["name"] for p in d["vis"]),
                vis_ranges=tuple((p["min"], p["max"]) for p in d["vis"]),
            )
        except (KeyError, TypeError) as e:
            raise ManifestSchemaError(f"malformed parameter spec: {e!r}") from e


@dataclass(frozen=True)
class ParameterVector:
    """One point in parameter space, in physical units."""

    sim_values: tuple
    vis_values: tuple

    def __post_init__(self):
        object.__setattr__(self, "sim_values", tuple(float(v) for v in self.sim_values))
        object.__setattr__(self, "vis_values", tuple(float(v) for v in self.vis_values))


@dataclass(frozen=True)
class ScalarField:
    """A single H×W scalar field sampled on the unit square."""

    values: np.ndarray
    extent: tuple = (0.0, 0.0, 1.0, 1.0)


def default_spec() -> ParameterSpec:
    """Desk-scale parameter spec: three simulation parameters, one vis offset."""
    return ParameterSpec(
        sim_names=("center", "amplitude", "width"),
        sim_ranges=((-1.0, 1.0), (0.0, 2.0), (0.5, 3.0)),
        vis_names=("offset",),
        vis_ranges=((-0.2, 0.2),),
    )


@dataclass(frozen=True)
class FieldFamily:
    """Affine coefficients of the analytic field family.

    Each coefficient pair (a, b) maps a normalized parameter t in [0,1] to
    a + b*t. Positions are fractions of the image extent, widths fractions of
    the image width, so the family is resolution independent.
    """

    # background plane value = plane_base + plane_dx * x + plane_dy * y (x, y in [0,1])
    plane_base: float = 0.10
    plane_dx: float = 0.05
    plane_dy: float = 0.25
    # bump 1: horizontal center fraction, amplitude, width fraction vs (t_center, t_amp, t_width)
    b1_cx: tuple = (0.10, 0.80)
    b1_cy: float = 0.35
    b1_amp: tuple = (0.0, 0.55)
    b1_sigma: tuple = (0.05, 0.07)
    # bump 2 mirrors bump 1 horizontally and sits lower, at half amplitude
    b2_cx: tuple = (0.90, -0.80)
    b2_cy: float = 0.70
    b2_amp: tuple = (0.0, 0.30)
    b2_sigma: tuple = (0.08, 0.05)

    def bump_centers_px(self, params: ParameterVector, resolution: int,
                        spec: ParameterSpec | None = None):
        """Pixel-space (x, y) centers of both bumps; handy for drag oracles."""
        spec = spec or default_spec()
        (tc, _, _), _ = spec.normalize(params)
        w = resolution - 1
        return (
            ((self.b1_cx[0] + self.b1_cx[1] * tc) * w, self.b1_cy * w),
            ((self.b2_cx[0] + self.b2_cx[1] * tc) * w, self.b2_cy * w),
        )


DEFAULT_FAMILY = FieldFamily()


def check_resolution(resolution: int) -> int:
    """Resolutions must be 4 * 2**b for integer b >= 1 (synthesis subnet law)."""
    r = int(resolution)
    if r < 8 or r % 4 != 0 or (r // 4) & (r // 4 - 1) != 0:
        raise ArgumentError(f"resolution must be 4*2^b with b >= 1, got {resolution}")
    return r


def synth_field(
    params: ParameterVector,
    resolution: int,
    spec: ParameterSpec | None = None,
    family: FieldFamily = DEFAULT_FAMILY,
) -> ScalarField:
    """Evaluate the analytic field for in-range parameters."""
    spec = spec or default_spec()
    resolution = check_resolution(resolution)
    if spec.m != 3:
        raise ArgumentError(f"the analytic family needs exactly 3 sim parameters, spec has {spec.m}")
    spec.validate(params)
    (tc, ta, tw), _ = spec.normalize(params)

    n = resolution
    # pixel centers on a [0,1] grid; x is the column axis
    coord = np.arange(n, dtype=np.float64) / (n - 1)
    x, y = np.meshgrid(coord, coord)

    out = family.plane_base + family.plane_dx * x + family.plane_dy * y
    for cx_ab, cy, amp_ab, sig_ab in (
        (family.b1_cx, family.b1_cy, family.b1_amp, family.b1_sigma),
        (family.b2_cx, family.b2_cy, family.b2_amp, family.b2_sigma),
    ):
        cx = cx_ab[0] + cx_ab[1] * tc
        amp = amp_ab[0] + amp_ab[1] * ta
        sigma = sig_ab[0] + sig_ab[1] * tw
        out = out + amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sigma**2))
    return ScalarField(values=out)


# Colormap stops (position, (r, g, b)); piecewise linear between stops.
COLORMAP_STOPS = (
    (0.0, (0.050, 0.030, 0.530)),
    (0.5, (0.020, 0.720, 0.580)),
    (1.0, (0.990, 0.910, 0.150)),
)


def apply_colormap(u: np.ndarray) -> np.ndarray:
    """Map values in [0,1] through the fixed colormap. Returns (..., 3)."""
    u = np.clip(np.asarray(u, dtype=np.float64), 0.0, 1.0)
    out = np.empty(u.shape + (3,), dtype=np.float64)
    positions = [p for p, _ in COLORMAP_STOPS]
    colors = np.array([c for _, c in COLORMAP_STOPS])
    for ch in range(3):
        out[..., ch] = np.interp(u, positions, colors[:, ch])
    return out


def render(
    field: ScalarField,
    vis_values: Sequence[float],
    spec: ParameterSpec | None = None,
) -> np.ndarray:
    """Transfer-function mapping of field value to RGB.

    The single vis parameter offsets the field value before the colormap;
    the shifted value is clamped to [0,1]. Returns an (H, W, 3) float32
    image in [0,1].
    """
    values = np.asarray(field.values, dtype=np.float64)
    if not np.isfinite(values).all():
        raise DataError("field contains non-finite values")
    vis_values = tuple(float(v) for v in vis_values)
    if spec is not None:
        for name, (lo, hi), v in zip(spec.vis_names, spec.vis_ranges, vis_values):
            if v < lo or v > hi:
                raise RangeError(name, v, lo, hi)
    offset = vis_values[0] if vis_values else 0.0
    rgb = apply_colormap(values + offset)
    return rgb.astype(np.float32)


def generate_image(
    params: ParameterVector,
    resolution: int,
    spec: ParameterSpec | None = None,
    family: FieldFamily = DEFAULT_FAMILY,
) -> np.ndarray:
    """Ground-truth image for a parameter vector: synth_field + render."""
    spec = spec or default_spec()
    f = synth_field(params, resolution, spec=spec, family=family)
    return render(f, params.vis_values, spec=spec)


# ---------------------------------------------------------------------------
# Dataset construction


@dataclass(frozen=True)
class GridSampling:
    """Uniform grid over the sim parameters; vis gridded too or fixed at midpoint."""

    sim_counts: tuple
    vis_counts: tuple | None = None

    def points(self, spec: "ParameterSpec", rng: np.random.Generator) -> list:
        return _sample_parameters(spec, self, rng)


@dataclass(frozen=True)
class RandomSampling:
    """Uniform random sampling of every parameter (sim and vis)."""

    count: int

    def points(self, spec: "ParameterSpec", rng: np.random.Generator) -> list:
        return _sample_parameters(spec, self, rng)


@dataclass(frozen=True)
class ManifestEntry:
    sim_values: tuple
    vis_values: tuple
    image_path: str
    split: str

    @property
    def params(self) -> "ParameterVector":
        return ParameterVector(self.sim_values, self.vis_values)


@dataclass
class DatasetManifest:
    spec: ParameterSpec
    entries: list
    root: Path | None = field(default=None, compare=False)

    def split_entries(self, split: str) -> list:
        return [e for e in self.entries if e.split == split]

    def resolve_image(self, entry: ManifestEntry) -> Path:
        base = self.root if self.root is not None else Path(".")
        return Path(base) / entry.image_path

    def load_image(self, entry: ManifestEntry) -> np.ndarray:
        return load_png(self.resolve_image(entry))


def _grid_values(lo: float, hi: float, count: int) -> np.ndarray:
    if count == 1:
        return np.array([(lo + hi) / 2.0])
    return np.linspace(lo, hi, count)


def _sample_parameters(spec: ParameterSpec, sampling, rng: np.random.Generator):
    if isinstance(sampling, GridSampling):
        sim_counts = tuple(int(c) for c in sampling.sim_counts)
        if len(sim_counts) != spec.m:
            raise ArgumentError(f"need {spec.m} sim counts, got {len(sim_counts)}")
        vis_counts = sampling.vis_counts
        if vis_counts is None:
            vis_counts = (1,) * spec.n
        vis_counts = tuple(int(c) for c in vis_counts)
        if len(vis_counts) != spec.n:
            raise ArgumentError(f"need {spec.n} vis counts, got {len(vis_counts)}")
        if any(c < 1 for c in sim_counts + vis_counts):
            raise ArgumentError("sampling counts must be >= 1")
        axes = [
            _grid_values(lo, hi, c) for (lo, hi), c in zip(spec.sim_ranges, sim_counts)
        ] + [
            _grid_values(lo, hi, c) for (lo, hi), c in zip(spec.vis_ranges, vis_counts)
        ]
        grids = np.meshgrid(*axes, indexing="ij")
        flat = np.stack([g.ravel() for g in grids], axis=1)
        return [
            ParameterVector(tuple(row[: spec.m]), tuple(row[spec.m :])) for row in flat
        ]
    if isinstance(sampling, RandomSampling):
        if sampling.count < 1:
            raise ArgumentError("sampling count must be >= 1")
        lows = np.array([lo for lo, _ in spec.sim_ranges + spec.vis_ranges])
        highs = np.array([hi for _, hi in spec.sim_ranges + spec.vis_ranges])
        draws = rng.uniform(lows, highs, size=(sampling.count, spec.m + spec.n))
        return [
            ParameterVector(tuple(row[: spec.m]), tuple(row[spec.m :])) for row in draws
        ]
    raise ArgumentError(f"unknown sampling plan: {sampling!r}")


def build_dataset(
    spec: ParameterSpec,
    sampling,
    out_dir,
    seed: int,
    resolution: int = 64,
    split: tuple | None = None,
    family: FieldFamily = DEFAULT_FAMILY,
) -> DatasetManifest:
    """Render the sampled parameter set to PNGs and write manifest.json.

    split is (train_count, test_count); counts must sum to the sample total.
    With split=None every entry lands in the train split. Rerunning with
    identical arguments reproduces identical files.
    """
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    points = _sample_parameters(spec, sampling, rng)
    total = len(points)

    if split is None:
        split_labels = ["train"] * total
    else:
        train_count, test_count = int(split[0]), int(split[1])
        if train_count < 1 or test_count < 0:
            raise ArgumentError("train split must be non-empty and test count >= 0")
        if train_count + test_count != total:
            raise ArgumentError(
                f"split {train_count}+{test_count} does not cover {total} samples"
            )
        order = rng.permutation(total)
        split_labels = [""] * total
        for rank, idx in enumerate(order):
            split_labels[idx] = "train" if rank < train_count else "test"

    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, params in enumerate(points):
        rel = f"images/img_{i:06d}.png"
        image = generate_image(params, resolution, spec=spec, family=family)
        save_png(image, out_dir / rel)
        entries.append(
            ManifestEntry(
                sim_values=params.sim_values,
                vis_values=params.vis_values,
                image_path=rel,
                split=split_labels[i],
            )
        )
    manifest = DatasetManifest(spec=spec, entries=entries, root=out_dir)
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "spec": manifest.spec.to_json_dict(),
        "entries": [
            {
                "sim": list(e.sim_values),
                "vis": list(e.vis_values),
                "image": e.image_path,
                "split": e.split,
            }
            for e in manifest.entries
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_manifest(path, check_images: bool = True) -> DatasetManifest:
    """Parse a manifest; load(write(M)) is structurally equal to M.

    Raises FileNotFoundError for a missing manifest, ManifestSchemaError for
    malformed JSON, and DanglingImageError (naming the entry index) when a
    referenced image is absent.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestSchemaError(f"manifest is not valid JSON: {e}") from e
    if not isinstance(doc, dict) or "spec" not in doc or "entries" not in doc:
        raise ManifestSchemaError("manifest must have 'spec' and 'entries' fields")
    spec = ParameterSpec.from_json_dict(doc["spec"])
    raw_entries = doc["entries"]
    if not isinstance(raw_entries, list) or not raw_entries:
        raise ManifestSchemaError("entries must be a non-empty list")
    entries = []
    for i, e in enumerate(raw_entries):
        try:
            entry = ManifestEntry(
                sim_values=tuple(float(v) for v in e["sim"]),
                vis_values=tuple(float(v) for v in e["vis"]),
                image_path=str(e["image"]),
                split=str(e["split"]),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ManifestSchemaError(f"entry {i} malformed: {err!r}") from err
        if entry.split not in ("train", "test"):
            raise ManifestSchemaError(f"entry {i} has unknown split '{entry.split}'")
        if len(entry.sim_values) != spec.m or len(entry.vis_values) != spec.n:
            raise ManifestSchemaError(f"entry {i} arity does not match spec")
        entries.append(entry)
    if not any(e.split == "train" for e in entries):
        raise ManifestSchemaError("train split is empty")
    root = path.parent
    if check_images:
        for i, entry in enumerate(entries):
            if not (root / entry.image_path).is_file():
                raise DanglingImageError(i, str(root / entry.image_path))
    return DatasetManifest(spec=spec, entries=entries, root=root)


def desk_dataset(out_dir, seed: int = 0) -> DatasetManifest:
    """Build the default desk-scale dataset: 64x64, 2000 train / 200 test."""
    return build_dataset(
        default_spec(),
        RandomSampling(2200),
        out_dir,
        seed=seed,
        resolution=64,
        split=(2000, 200),
    )
