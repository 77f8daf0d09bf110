"""Structure selection: flood-fill a connected same-color region from a click.

A click picks a seed pixel; breadth-first search grows the patch outward,
accepting any pixel within Euclidean distance r of an already-accepted
pixel whose HSV similarity to the seed COLOR (the color under the original
click, never a running mean) is at least d. r > 1 therefore bridges small
gaps inside a structure.

Pixel coordinates are (x, y) = (column, row) integers.
"""

from __future__ import annotations

import colorsys
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DataError, EmptyPatchError

HSV_WEIGHTS = (0.5, 0.25, 0.25)  # hue, saturation, value


def hsv_similarity(c1, c2) -> float:
    """Similarity in [0,1] of two RGB colors under the HSV metric.

    1 - (0.5*dh + 0.25*ds + 0.25*dv) where dh is the circular hue distance
    rescaled to [0,1]; clamped into [0,1].
    """
    c1 = np.asarray(c1, dtype=np.float64)
    c2 = np.asarray(c2, dtype=np.float64)
    for c in (c1, c2):
        if c.shape != (3,):
            raise DataError(f"colors must be 3-vectors, got shape {c.shape}")
        if np.any(c < 0) or np.any(c > 1):
            raise DataError(f"color channels must lie in [0,1], got {c.tolist()}")
    h1, s1, v1 = colorsys.rgb_to_hsv(*c1)
    h2, s2, v2 = colorsys.rgb_to_hsv(*c2)
    dh = abs(h1 - h2)
    dh = 2.0 * min(dh, 1.0 - dh)
    wh, ws, wv = HSV_WEIGHTS
    sim = 1.0 - (wh * dh + ws * abs(s1 - s2) + wv * abs(v1 - v2))
    return float(min(1.0, max(0.0, sim)))


@dataclass
class PatchSelection:
    """One selected structure: its handle point, drag target, and pixel set.

    seed is the current handle position (updated by tracking during a
    drag); initial_seed stays frozen at the click. active turns False when
    the tracked structure's appearance diverges too far from the original.
    """

    seed: tuple
    target: tuple
    pixels: frozenset
    active: bool = True
    initial_seed: tuple = None

    def __post_init__(self):
        self.seed = (int(self.seed[0]), int(self.seed[1]))
        self.target = (int(self.target[0]), int(self.target[1]))
        self.pixels = frozenset((int(x), int(y)) for x, y in self.pixels)
        if not self.pixels:
            raise EmptyPatchError("selection has no pixels")
        if self.initial_seed is None:
            self.initial_seed = self.seed
        else:
            self.initial_seed = (int(self.initial_seed[0]), int(self.initial_seed[1]))

    def to_json_dict(self) -> dict:
        return {
            "seed": list(self.seed),
            "target": list(self.target),
            "pixels": sorted([x, y] for x, y in self.pixels),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "PatchSelection":
        return cls(
            seed=tuple(d["seed"]),
            target=tuple(d["target"]),
            pixels=frozenset(tuple(p) for p in d["pixels"]),
        )


def _disc_offsets(r: float) -> list:
    rr = int(np.floor(r))
    out = []
    for dy in range(-rr, rr + 1):
        for dx in range(-rr, rr + 1):
            if dx == 0 and dy == 0:
                continue
            if dx * dx + dy * dy <= r * r:
                out.append((dx, dy))
    return out


def select_patch(image: np.ndarray, p: tuple, d: float = 0.95, r: float = 3.0,
                 cap_radius: float | None = None) -> PatchSelection:
    """Flood-fill selection of the structure under click point p = (x, y).

    d is the minimum HSV similarity to the seed color; r the BFS expansion
    radius in pixels (Euclidean). cap_radius, when set, additionally limits
    the patch to pixels within that distance of the click (the alternative
    bounded-extent reading).
    """
    image = np.asarray(image)
    h, w = image.shape[:2]
    x0, y0 = int(p[0]), int(p[1])
    if not (0 <= x0 < w and 0 <= y0 < h):
        raise ArgumentError(f"click point {p} outside {w}x{h} image")
    if not (0.0 < d <= 1.0):
        raise ArgumentError(f"similarity threshold d must lie in (0, 1], got {d}")
    if r < 1:
        raise ArgumentError(f"radius r must be >= 1, got {r}")

    seed_color = image[y0, x0]
    offsets = _disc_offsets(r)
    accepted = {(x0, y0)}
    visited = {(x0, y0)}
    queue = deque([(x0, y0)])
    while queue:
        cx, cy = queue.popleft()
        for dx, dy in offsets:
            q = (cx + dx, cy + dy)
            if q in visited:
                continue
            visited.add(q)
            qx, qy = q
            if not (0 <= qx < w and 0 <= qy < h):
                continue
            if cap_radius is not None:
                if (qx - x0) ** 2 + (qy - y0) ** 2 > cap_radius**2:
                    continue
            if hsv_similarity(image[qy, qx], seed_color) >= d:
                accepted.add(q)
                queue.append(q)
    return PatchSelection(seed=(x0, y0), target=(x0, y0), pixels=frozenset(accepted))
