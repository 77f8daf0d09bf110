"""Latent-space diagnostics: where do parameter points land in w space?

Collects the 512-D latent vectors for labeled parameter groups, embeds
them in 2-D with classical (Torgerson) metric MDS, and measures how far
each group sits from the training group in the original space. The
out_of_range label is the single sanctioned way to push parameters beyond
their declared ranges, used to probe how the mapping treats invalid
inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError
from .model import Generator
from .synthdata import ParameterVector

GROUP_LABELS = ("train", "test", "in_range", "out_of_range")


@dataclass
class LatentGroup:
    label: str
    vectors: np.ndarray  # (k, latent_dim)
    params: list  # ParameterVector per row

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] == 0:
            raise ArgumentError("latent group needs a non-empty (k, dim) matrix")
        if self.label not in GROUP_LABELS:
            raise ArgumentError(f"label must be one of {GROUP_LABELS}, got '{self.label}'")


def collect_latents(gen: Generator, params: list, label: str) -> LatentGroup:
    """Latent vector per parameter point; out_of_range skips range checks."""
    if not params:
        raise ArgumentError("params list is empty")
    allow = label == "out_of_range"
    vecs = np.stack([gen.latent(p, allow_out_of_range=allow) for p in params])
    return LatentGroup(label=label, vectors=vecs, params=list(params))


@dataclass
class EmbeddingReport:
    labels: list  # group label per embedded point
    coords: np.ndarray  # (N, 2)
    stress: float
    nn_stats: dict = field(default_factory=dict)  # label -> {mean, median, count}

    def to_json_dict(self) -> dict:
        return {
            "points": [
                {"label": lab, "x": float(x), "y": float(y)}
                for lab, (x, y) in zip(self.labels, self.coords)
            ],
            "stress": self.stress,
            "nearest_train_distance": self.nn_stats,
        }


def classical_mds(dist: np.ndarray, out_dim: int = 2) -> np.ndarray:
    """Torgerson embedding of a symmetric distance matrix.

    Double-centers the squared distances, takes the top eigenpairs
    (eigenvalues clamped at zero), and canonicalizes each axis's sign so
    the first point's coordinate on it is non-negative.
    """
    n = dist.shape[0]
    j = np.eye(n) - np.ones((n, n)) / n
    b = -0.5 * j @ (dist**2) @ j
    vals, vecs = np.linalg.eigh(b)
    order = np.argsort(vals)[::-1][:out_dim]
    lam = np.clip(vals[order], 0.0, None)
    coords = vecs[:, order] * np.sqrt(lam)[None, :]
    if coords.shape[1] < out_dim:
        coords = np.pad(coords, ((0, 0), (0, out_dim - coords.shape[1])))
    for a in range(coords.shape[1]):
        if coords[0, a] < 0:
            coords[:, a] = -coords[:, a]
    return coords


def kruskal_stress(dist: np.ndarray, coords: np.ndarray) -> float:
    """sqrt(sum (d_emb - d_in)^2 / sum d_in^2) over unordered pairs; 0 for
    an all-zero input matrix."""
    iu = np.triu_indices(dist.shape[0], k=1)
    d_in = dist[iu]
    diff = coords[:, None, :] - coords[None, :, :]
    d_emb = np.sqrt((diff**2).sum(axis=2))[iu]
    denom = float((d_in**2).sum())
    if denom == 0.0:
        return 0.0
    return float(np.sqrt(((d_emb - d_in) ** 2).sum() / denom))


def _stack_groups(groups: list):
    labels = []
    rows = []
    for g in groups:
        labels.extend([g.label] * g.vectors.shape[0])
        rows.append(g.vectors)
    return labels, np.concatenate(rows, axis=0)


def _pairwise(x: np.ndarray) -> np.ndarray:
    sq = (x**2).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    return np.sqrt(np.clip(d2, 0.0, None))


def nearest_train_stats(groups: list) -> dict:
    """Per non-train group: mean/median distance to the closest train
    vector, measured in the original latent space."""
    train = [g for g in groups if g.label == "train"]
    if not train:
        raise ArgumentError("no train group present")
    tv = np.concatenate([g.vectors for g in train], axis=0)
    stats = {}
    for g in groups:
        if g.label == "train":
            continue
        d2 = ((g.vectors[:, None, :] - tv[None, :, :]) ** 2).sum(axis=2)
        nn = np.sqrt(d2.min(axis=1))
        stats[g.label] = {
            "mean": float(nn.mean()),
            "median": float(np.median(nn)),
            "count": int(nn.shape[0]),
        }
    return stats


def mds_embed(groups: list) -> EmbeddingReport:
    """2-D embedding of all group vectors; includes NN statistics when a
    train group is present."""
    labels, x = _stack_groups(groups)
    if x.shape[0] < 3:
        raise ArgumentError(f"need at least 3 vectors to embed, got {x.shape[0]}")
    dist = _pairwise(x)
    coords = classical_mds(dist)
    stress = kruskal_stress(dist, coords)
    stats = nearest_train_stats(groups) if any(g.label == "train" for g in groups) else {}
    return EmbeddingReport(labels=labels, coords=coords, stress=stress, nn_stats=stats)


def validity_report(groups: list) -> EmbeddingReport:
    """Embedding plus mandatory distance-to-train statistics."""
    if not any(g.label == "train" for g in groups):
        raise ArgumentError("validity report requires a train group")
    return mds_embed(groups)


def sample_in_range(spec, count: int, rng: np.random.Generator) -> list:
    """Uniform parameter draws inside every declared range."""
    if count < 1:
        raise ArgumentError("count must be >= 1")
    out = []
    for _ in range(count):
        sim = tuple(rng.uniform(lo, hi) for lo, hi in spec.sim_ranges)
        vis = tuple(rng.uniform(lo, hi) for lo, hi in spec.vis_ranges)
        out.append(ParameterVector(sim, vis))
    return out


def sample_out_of_range(spec, count: int, rng: np.random.Generator,
                        margin: float = 0.5) -> list:
    """Draws with exactly one simulation parameter pushed past its range.

    The violating value lands in a band of width margin*span beyond the
    low or high end (never on the boundary); everything else stays valid.
    """
    if count < 1:
        raise ArgumentError("count must be >= 1")
    if margin <= 0:
        raise ArgumentError("margin must be > 0")
    out = []
    for _ in range(count):
        sim = [rng.uniform(lo, hi) for lo, hi in spec.sim_ranges]
        j = int(rng.integers(spec.m))
        lo, hi = spec.sim_ranges[j]
        span = hi - lo
        off = span * margin * rng.uniform(0.05, 1.0)
        sim[j] = lo - off if rng.integers(2) == 0 else hi + off
        vis = tuple(rng.uniform(lo_, hi_) for lo_, hi_ in spec.vis_ranges)
        out.append(ParameterVector(tuple(sim), vis))
    return out


def manifest_groups(gen: Generator, manifest, probe_count: int = 50,
                    max_per_split: int = 200, seed: int = 0) -> list:
    """The four standard latent groups for one dataset + generator.

    train/test come from the manifest entries (capped at max_per_split
    each); in_range and out_of_range are probe_count fresh seeded draws.
    """
    if probe_count < 1:
        raise ArgumentError("probe_count must be >= 1")
    if max_per_split < 1:
        raise ArgumentError("max_per_split must be >= 1")
    rng = np.random.default_rng(seed)
    spec = manifest.spec
    groups = []
    for split in ("train", "test"):
        entries = manifest.split_entries(split)[:max_per_split]
        if entries:
            groups.append(collect_latents(gen, [e.params for e in entries], split))
    groups.append(collect_latents(gen, sample_in_range(spec, probe_count, rng), "in_range"))
    groups.append(
        collect_latents(gen, sample_out_of_range(spec, probe_count, rng), "out_of_range")
    )
    return groups
