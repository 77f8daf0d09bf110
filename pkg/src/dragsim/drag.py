"""Drag-based editing: move selected structures by inverting the generator.

One drag session loops three stages until a termination condition:

1. feature supervision — a loss that compares the current feature map
   (gradient-blocked) at each patch pixel against the map one small step
   toward the target, so descending it pulls the structure that way;
2. parameter inversion — one clamped gradient-descent step on the free
   simulation parameters in normalized [0,1] space (visualization
   parameters are never touched, and the latent vector w is never edited
   directly: every frame is generate(theta) for some in-range theta);
3. feature tracking — relocating each handle point by nearest-neighbor
   search in feature space around its previous position, then checking
   whether the structure's color has drifted so far from the original that
   it should count as disappeared.

Terminal statuses: "reached" (every still-active handle within r_m pixels
of its target), "disappeared" (no active handles left),
"max_iters_exhausted", or "aborted" (non-finite gradient; diagnostic in
session.error).

Each trajectory record stores the loss value that drove the step leading
to that state; the step-0 record stores the loss at the starting state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import ArgumentError, DataError
from .model import Generator, resize_feature
from .patch import PatchSelection
from .synthdata import ParameterVector

RUNNING = "running"
REACHED = "reached"
DISAPPEARED = "disappeared"
EXHAUSTED = "max_iters_exhausted"
ABORTED = "aborted"
TERMINAL = (REACHED, DISAPPEARED, EXHAUSTED, ABORTED)


@dataclass(frozen=True)
class DragConfig:
    r_m: float = 2.0
    d_threshold: float = 0.95
    max_iters: int = 200
    step_size: float = 2e-3
    free_mask: tuple = None  # per-sim-parameter booleans; None = all free
    feature_layer: str = None  # None = the generator's middle block
    disappearance_window: str = "mean3"  # "mean3" | "point"

    def __post_init__(self):
        if self.r_m < 1:
            raise ArgumentError("r_m must be >= 1")
        if not (0.0 < self.d_threshold <= 1.0):
            raise ArgumentError("d_threshold must lie in (0, 1]")
        if self.max_iters < 1:
            raise ArgumentError("max_iters must be >= 1")
        if self.step_size < 0:
            raise ArgumentError("step_size must be >= 0")
        if self.disappearance_window not in ("mean3", "point"):
            raise ArgumentError(f"unknown disappearance_window '{self.disappearance_window}'")
        if self.free_mask is not None:
            fm = tuple(bool(b) for b in self.free_mask)
            object.__setattr__(self, "free_mask", fm)
            if not any(fm):
                raise ArgumentError("free_mask must leave at least one parameter free")


@dataclass
class TrajectoryRecord:
    step: int
    theta: ParameterVector
    points: list  # current handle point per selection, (x, y)
    loss: float
    status: str
    image: np.ndarray  # (H, W, 3) float32, exactly generate(theta)

    def to_json_dict(self, image_name: str) -> dict:
        return {
            "step": self.step,
            "theta": list(self.theta.sim_values) + list(self.theta.vis_values),
            "points": [list(p) for p in self.points],
            "loss": self.loss,
            "status": self.status,
            "image": image_name,
        }


@dataclass
class DragSession:
    generator: Generator
    config: DragConfig
    theta_initial: ParameterVector
    theta_current: ParameterVector
    selections: list
    image_initial: np.ndarray
    step: int = 0
    status: str = RUNNING
    trajectory: list = field(default_factory=list)
    error: str = None
    # engine internals
    sim_norm: torch.Tensor = None  # leaf tensor, requires_grad
    vis_norm: torch.Tensor = None
    feature_layer: str = None
    feature_initial: torch.Tensor = None  # (C, H, W) resized view at start
    feature_current: torch.Tensor = None
    image_current: np.ndarray = None
    last_loss: float = 0.0
    _norm_snapshot: np.ndarray = None  # sim_norm values at the last theta rebuild


def direction(p, g) -> np.ndarray:
    """L1-normalized vector from handle p to target g; requires p != g."""
    v = np.asarray([g[0] - p[0], g[1] - p[1]], dtype=np.float64)
    n = np.abs(v).sum()
    if n == 0:
        raise ArgumentError("direction undefined for p == g (target already reached)")
    return v / n


def bilinear_sample(fmap: torch.Tensor, x: float, y: float) -> torch.Tensor:
    """Channel vector of a (C, H, W) map at real-valued (x, y); differentiable.

    Returns None when the point falls outside [0, W-1] x [0, H-1].
    """
    _, h, w = fmap.shape
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        return None
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = fmap[:, y0, x0] * (1 - fx) + fmap[:, y0, x1] * fx
    bot = fmap[:, y1, x0] * (1 - fx) + fmap[:, y1, x1] * fx
    return top * (1 - fy) + bot * fy


def feature_supervision_loss(feature: torch.Tensor, selections) -> torch.Tensor:
    """Sum over active selections and their patch pixels of the L1 gap
    between the gradient-blocked feature here and the feature one
    direction-step away.

    The patch pixel set rides along with its handle: each stored pixel is
    shifted by (current seed - initial seed). Terms whose source or shifted
    sample point leaves the map are dropped. Selections already at their
    target contribute zero.
    """
    detached = feature.detach()
    _, h, w = feature.shape
    total = torch.zeros((), dtype=feature.dtype)
    for sel in selections:
        if not sel.active:
            continue
        if sel.seed == sel.target:
            continue
        v = direction(sel.seed, sel.target)
        ox = sel.seed[0] - sel.initial_seed[0]
        oy = sel.seed[1] - sel.initial_seed[1]
        for px, py in sel.pixels:
            qx, qy = px + ox, py + oy
            if not (0 <= qx < w and 0 <= qy < h):
                continue
            moved = bilinear_sample(feature, qx + v[0], qy + v[1])
            if moved is None:
                continue
            total = total + (detached[:, qy, qx] - moved).abs().sum()
    return total


def track(feature_initial: torch.Tensor, feature_current: torch.Tensor,
          selections, r_m: float) -> list:
    """Relocate each active handle to the nearest-feature point.

    Candidates are the integer offsets within +/- floor(r_m/2) of the
    current handle (the square of side r_m, discretized symmetrically).
    The reference is the initial map's vector at the initial seed. Ties go
    to the candidate closest to the previous handle, then row-major order.
    A handle whose whole square falls outside the image goes inactive.
    Returns the new handle point per selection (unchanged for inactive).
    """
    _, h, w = feature_current.shape
    half = int(np.floor(r_m / 2.0))
    out = []
    for sel in selections:
        if not sel.active:
            out.append(sel.seed)
            continue
        ref = feature_initial[:, sel.initial_seed[1], sel.initial_seed[0]]
        px, py = sel.seed
        best = None
        for dy in range(-half, half + 1):
            for dx in range(-half, half + 1):
                qx, qy = px + dx, py + dy
                if not (0 <= qx < w and 0 <= qy < h):
                    continue
                dist = float((feature_current[:, qy, qx] - ref).abs().sum())
                eucl = (qx - px) ** 2 + (qy - py) ** 2
                key = (dist, eucl, qy, qx)
                if best is None or key < best:
                    best = key
        if best is None:
            sel.active = False
            out.append(sel.seed)
        else:
            out.append((best[3], best[2]))
    return out


def _window_color(image: np.ndarray, p, kind: str) -> np.ndarray:
    x, y = p
    h, w = image.shape[:2]
    if kind == "point":
        return np.asarray(image[y, x], dtype=np.float64)
    y0, y1 = max(0, y - 1), min(h, y + 2)
    x0, x1 = max(0, x - 1), min(w, x + 2)
    return np.asarray(image[y0:y1, x0:x1].reshape(-1, 3).mean(axis=0), dtype=np.float64)


def disappearance(image_initial: np.ndarray, image_current: np.ndarray,
                  selections, window: str = "mean3") -> list:
    """Squared color distance D per selection between the tracked point now
    and the initial seed at start; 0 <= D <= 3 on RGB."""
    out = []
    for sel in selections:
        c0 = _window_color(image_initial, sel.initial_seed, window)
        c1 = _window_color(image_current, sel.seed, window)
        out.append(float(np.sum((c1 - c0) ** 2)))
    return out


def _forward(session: DragSession):
    """Image + resized feature at the current normalized parameters."""
    gen = session.generator
    img_t, feats = gen.normalized_forward(
        session.sim_norm[None], session.vis_norm[None], want_features=True
    )
    feature = resize_feature(feats[session.feature_layer], gen.config.resolution)[0]
    image = img_t[0].detach().permute(1, 2, 0).contiguous().numpy().astype(np.float32, copy=False)
    return image, feature


def _update_theta(session: DragSession) -> ParameterVector:
    """Rebuild theta_current from the normalized leaf tensor.

    A parameter whose normalized float32 value did not move keeps its
    previous physical value bit-exactly, so frozen or untouched parameters
    never pick up normalize/denormalize rounding. Visualization parameters
    are carried through verbatim.
    """
    spec = session.generator.spec
    new_norm = session.sim_norm.detach().numpy().copy()
    phys = list(session.theta_current.sim_values)
    for k in range(spec.m):
        if new_norm[k] != session._norm_snapshot[k]:
            lo, hi = spec.sim_ranges[k]
            phys[k] = float(lo + float(new_norm[k]) * (hi - lo))
    session._norm_snapshot = new_norm
    return ParameterVector(tuple(phys), session.theta_initial.vis_values)


def _record(session: DragSession, loss: float):
    session.trajectory.append(
        TrajectoryRecord(
            step=session.step,
            theta=session.theta_current,
            points=[sel.seed for sel in session.selections],
            loss=loss,
            status=session.status,
            image=session.image_current,
        )
    )


def start_session(generator: Generator, theta_start: ParameterVector,
                  selections, config: DragConfig = None) -> DragSession:
    """Build a session at step 0 and append the initial trajectory record.

    Handles the already-at-target fixed point: if every selection starts
    within r_m of its target, the session is terminal immediately and
    theta is left bit-identical to theta_start.
    """
    config = config or DragConfig()
    if not selections:
        raise ArgumentError("need at least one selection")
    generator.spec.validate(theta_start)
    m = generator.spec.m
    free = config.free_mask if config.free_mask is not None else (True,) * m
    if len(free) != m:
        raise ArgumentError(f"free_mask needs {m} entries, got {len(free)}")

    layer = config.feature_layer
    ids = generator.layer_ids
    if layer is None:
        layer = ids[len(ids) // 2]
    elif layer not in ids:
        raise ArgumentError(f"unknown feature layer '{layer}', have {ids}")

    res = generator.config.resolution
    selections = [
        PatchSelection(seed=s.seed, target=s.target, pixels=s.pixels,
                       active=s.active, initial_seed=s.initial_seed)
        for s in selections
    ]
    for sel in selections:
        for pt_name, pt in (("seed", sel.seed), ("target", sel.target)):
            if not (0 <= pt[0] < res and 0 <= pt[1] < res):
                raise ArgumentError(f"selection {pt_name} {pt} outside {res}x{res} image")

    sim_n, vis_n = generator.spec.normalize(theta_start)
    sim_norm = torch.tensor(sim_n, dtype=torch.float32, requires_grad=True)
    vis_norm = torch.tensor(vis_n, dtype=torch.float32)

    session = DragSession(
        generator=generator,
        config=config,
        theta_initial=theta_start,
        theta_current=theta_start,
        selections=selections,
        image_initial=None,
        sim_norm=sim_norm,
        vis_norm=vis_norm,
        feature_layer=layer,
    )
    session._norm_snapshot = sim_norm.detach().numpy().copy()
    with torch.no_grad():
        image, feature = _forward(session)
    session.image_initial = image
    session.image_current = image
    session.feature_initial = feature
    session.feature_current = feature

    start_loss = float(feature_supervision_loss(feature, selections).detach())
    session.last_loss = start_loss
    if _all_reached(session):
        session.status = REACHED
    _record(session, start_loss)
    return session


def _all_reached(session: DragSession) -> bool:
    active = [s for s in session.selections if s.active]
    if not active:
        return False
    r = session.config.r_m
    return all(
        (s.seed[0] - s.target[0]) ** 2 + (s.seed[1] - s.target[1]) ** 2 <= r * r
        for s in active
    )


def inversion_step(session: DragSession) -> ParameterVector:
    """One supervision + descent + clamp + regenerate cycle.

    Only free-mask simulation parameters move, in normalized space with
    clamping to [0,1]; visualization parameters stay untouched. The new
    image and feature map replace the session's current ones.
    """
    if session.status != RUNNING:
        raise ArgumentError(f"session is {session.status}, not running")
    cfg = session.config
    free = cfg.free_mask if cfg.free_mask is not None else (True,) * session.generator.spec.m

    if session.sim_norm.grad is not None:
        session.sim_norm.grad = None
    image, feature = _forward(session)
    loss = feature_supervision_loss(feature, session.selections)
    session.last_loss = float(loss.detach())
    if loss.requires_grad:
        loss.backward()
        grad = session.sim_norm.grad
        if grad is None:
            grad = torch.zeros_like(session.sim_norm)
    else:
        grad = torch.zeros_like(session.sim_norm)
    if not torch.isfinite(grad).all():
        session.status = ABORTED
        session.error = "non-finite gradient in inversion step"
        return session.theta_current

    mask = torch.tensor(free, dtype=torch.bool)
    with torch.no_grad():
        update = torch.where(mask, grad, torch.zeros_like(grad))
        session.sim_norm -= cfg.step_size * update
        session.sim_norm.clamp_(0.0, 1.0)

    with torch.no_grad():
        image, feature = _forward(session)
    session.image_current = image
    session.feature_current = feature
    session.theta_current = _update_theta(session)
    return session.theta_current


def _advance(session: DragSession):
    """track + disappearance + status update after an inversion step."""
    cfg = session.config
    new_points = track(session.feature_initial, session.feature_current,
                       session.selections, cfg.r_m)
    for sel, p in zip(session.selections, new_points):
        if sel.active:
            sel.seed = p
    dists = disappearance(session.image_initial, session.image_current,
                          session.selections, cfg.disappearance_window)
    for sel, d in zip(session.selections, dists):
        if sel.active and 1.0 - np.sqrt(d / 3.0) < cfg.d_threshold:
            sel.active = False
    if all(not s.active for s in session.selections):
        session.status = DISAPPEARED
    elif _all_reached(session):
        session.status = REACHED


def run_drag(generator: Generator, theta_start: ParameterVector, selections,
             config: DragConfig = None, on_step=None, should_stop=None) -> DragSession:
    """Run a full drag to a terminal status; deterministic given inputs.

    on_step(record) fires after every appended trajectory record (the
    step-0 record included); should_stop() is polled each iteration and a
    truthy value ends the loop early with status max_iters_exhausted.
    """
    session = start_session(generator, theta_start, selections, config)
    if on_step is not None:
        on_step(session.trajectory[0])
    cfg = session.config
    while session.status == RUNNING and session.step < cfg.max_iters:
        if should_stop is not None and should_stop():
            session.status = EXHAUSTED
            session.trajectory[-1].status = session.status
            break
        inversion_step(session)
        step_loss = session.last_loss
        if session.status == RUNNING:
            _advance(session)
        session.step += 1
        if session.status == RUNNING and session.step >= cfg.max_iters:
            session.status = EXHAUSTED
        _record(session, step_loss)
        if on_step is not None:
            on_step(session.trajectory[-1])
    return session


def export_trajectory(session: DragSession, out_dir) -> Path:
    """Write frames + trajectory.ndjson; returns the NDJSON path."""
    from .imageio import save_png

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "trajectory.ndjson"
    with open(path, "w") as f:
        for rec in session.trajectory:
            name = f"frame_{rec.step:04d}.png"
            save_png(rec.image, out_dir / name)
            f.write(json.dumps(rec.to_json_dict(name)) + "\n")
    return path
