"""Training losses: pixel content, deep-feature, and Sobel-edge terms.

All three accept either (H, W, 3) numpy images in [0,1] or (B, 3, H, W)
torch tensors and return 0-dim tensors, so they can sit directly in a
training graph. Conventions:

* content: mean absolute difference over every pixel-channel value;
* feature: sum over configured extractor layers of
  lambda_j * ||phi_j(target) - phi_j(pred)||_2^2, where phi_j is the
  extractor's (already scaled) activation map;
* edge: squared L2 distance between the Sobel responses of the two
  luminance images, where the response is the (horizontal, vertical)
  filter pair computed with replicate padding. Replicate padding keeps
  constant images at exactly zero response, so two flat images always
  compare equal.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ArgumentError, AssetError, ShapeError
from .imageio import image_to_tensor

# Sobel pair; horizontal kernel responds to vertical edges.
SOBEL_X = torch.tensor(
    [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]
)
SOBEL_Y = SOBEL_X.t().contiguous()

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# relu-stage outputs following convolutions 2, 7, and 12 of the 19-layer
# pretrained stack (its module list interleaves conv/relu/pool).
VGG_RELU_INDICES = (3, 8, 13)


@dataclass(frozen=True)
class LossWeights:
    content: float = 1.0
    feature: float = 1.0
    edge: float = 0.01

    def __post_init__(self):
        for name in ("content", "feature", "edge"):
            v = float(getattr(self, name))
            if v < 0:
                raise ArgumentError(f"{name} must be non-negative")
            object.__setattr__(self, name, v)  # canonical type for metadata
        if self.content == 0 and self.feature == 0 and self.edge == 0:
            raise ArgumentError("at least one loss weight must be positive")


def _as_batch(img) -> torch.Tensor:
    if isinstance(img, torch.Tensor):
        if img.ndim == 3:
            img = img[None]
        if img.ndim != 4 or img.shape[1] != 3:
            raise ShapeError(f"expected (B, 3, H, W) tensor, got {tuple(img.shape)}")
        return img
    return image_to_tensor(np.asarray(img))


def _check_same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")


def content_loss(target, pred) -> torch.Tensor:
    """Mean |target - pred| over all pixel-channel values."""
    t, p = _as_batch(target), _as_batch(pred)
    _check_same_shape(t, p)
    return (t - p).abs().mean()


def luminance(img: torch.Tensor) -> torch.Tensor:
    """(B, 3, H, W) -> (B, 1, H, W) rec.601 luma."""
    r, g, b = img[:, 0:1], img[:, 1:2], img[:, 2:3]
    wr, wg, wb = LUMA_WEIGHTS
    return wr * r + wg * g + wb * b


def sobel_response(img) -> torch.Tensor:
    """Horizontal and vertical Sobel maps of the luminance, shape (B, 2, H, W).

    Replicate padding, so a constant image has an identically zero response.
    """
    t = _as_batch(img)
    y = luminance(t)
    kernel = torch.stack([SOBEL_X, SOBEL_Y])[:, None].to(y.dtype)
    padded = F.pad(y, (1, 1, 1, 1), mode="replicate")
    return F.conv2d(padded, kernel)


def edge_loss(target, pred) -> torch.Tensor:
    """Squared L2 distance between Sobel responses."""
    t, p = _as_batch(target), _as_batch(pred)
    _check_same_shape(t, p)
    return (sobel_response(t) - sobel_response(p)).square().sum()


class FeatureExtractor(nn.Module):
    """Frozen convolutional pyramid exposing a list of activation maps.

    Input contract: (B, 3, H, W) in [0,1]. Each returned layer is scaled by
    1/sqrt(elements per sample) so squared norms of different layers are
    commensurable; the feature-distance losses apply to the scaled maps
    directly.

    tag is "vgg19" when backed by the pretrained classifier weights and
    "fallback-perceptual" for the fixed-seed random pyramid used when that
    asset is absent.
    """

    IMAGENET_MEAN = (0.485, 0.456, 0.406)
    IMAGENET_STD = (0.229, 0.224, 0.225)

    def __init__(self, stack: nn.Sequential, capture_indices: tuple, tag: str,
                 normalize_input: bool):
        super().__init__()
        self.stack = stack
        self.capture_indices = tuple(capture_indices)
        self.tag = tag
        self.normalize_input = normalize_input
        self.eval()
        for p_ in self.parameters():
            p_.requires_grad_(False)

    @property
    def num_layers(self) -> int:
        return len(self.capture_indices)

    def features(self, img) -> list:
        t = _as_batch(img)
        if self.normalize_input:
            mean = torch.tensor(self.IMAGENET_MEAN, dtype=t.dtype).view(1, 3, 1, 1)
            std = torch.tensor(self.IMAGENET_STD, dtype=t.dtype).view(1, 3, 1, 1)
            t = (t - mean) / std
        out = []
        x = t
        last = max(self.capture_indices)
        for i, module in enumerate(self.stack):
            x = module(x)
            if i in self.capture_indices:
                scale = 1.0 / float(np.sqrt(x[0].numel()))
                out.append(x * scale)
            if i == last:
                break
        return out

    forward = features


def _fallback_stack(seed: int = 0) -> nn.Sequential:
    g = torch.Generator().manual_seed(seed)
    layers = []
    chans = [(3, 16), (16, 32), (32, 64)]
    for i, (cin, cout) in enumerate(chans):
        conv = nn.Conv2d(cin, cout, 3, padding=1)
        with torch.no_grad():
            w = torch.randn(conv.weight.shape, generator=g)
            conv.weight.copy_(w * (2.0 / np.sqrt(cin * 9)))
            conv.bias.zero_()
        layers.append(conv)
        layers.append(nn.ReLU(inplace=False))
        if i < len(chans) - 1:
            layers.append(nn.AvgPool2d(2))
    return nn.Sequential(*layers)

# capture the ReLU outputs of the fallback stack: indices of its ReLU modules
FALLBACK_RELU_INDICES = (1, 4, 7)


def _find_vgg_weights(weights_path=None) -> Path | None:
    if weights_path is not None:
        p = Path(weights_path)
        return p if p.is_file() else None
    hub = Path(os.environ.get("TORCH_HOME", Path.home() / ".cache" / "torch"))
    for cand in sorted((hub / "hub" / "checkpoints").glob("vgg19-*.pth")):
        return cand
    return None


def build_extractor(kind: str = "auto", weights_path=None,
                    capture_indices: tuple | None = None, seed: int = 0) -> FeatureExtractor:
    """Construct the perceptual-feature extractor.

    kind: "vgg19" requires the pretrained weight file (local cache or
    weights_path) and raises AssetError when missing; "fallback" builds the
    deterministic random pyramid; "auto" prefers vgg19 and degrades to the
    fallback when the asset is absent.
    """
    if kind not in ("auto", "vgg19", "fallback"):
        raise ArgumentError(f"unknown extractor kind '{kind}'")
    if kind in ("auto", "vgg19"):
        found = _find_vgg_weights(weights_path)
        if found is None:
            if kind == "vgg19":
                raise AssetError(
                    "pretrained vgg19 weights not found; place the .pth file in "
                    "$TORCH_HOME/hub/checkpoints or pass weights_path, or use "
                    "kind='fallback' for the hermetic random-pyramid extractor"
                )
        else:
            import torchvision.models as tvm

            net = tvm.vgg19(weights=None)
            state = torch.load(found, map_location="cpu", weights_only=True)
            net.load_state_dict(state)
            idx = tuple(capture_indices) if capture_indices is not None else VGG_RELU_INDICES
            stack = nn.Sequential(*list(net.features.children())[: max(idx) + 1])
            return FeatureExtractor(stack, idx, tag="vgg19", normalize_input=True)
    idx = tuple(capture_indices) if capture_indices is not None else FALLBACK_RELU_INDICES
    return FeatureExtractor(_fallback_stack(seed), idx, tag="fallback-perceptual",
                            normalize_input=False)


def perceptual_loss(target, pred, extractor: FeatureExtractor,
                    layer_weights=None) -> torch.Tensor:
    """Sum of lambda_j * ||phi_j(target) - phi_j(pred)||_2^2."""
    t, p = _as_batch(target), _as_batch(pred)
    _check_same_shape(t, p)
    if layer_weights is None:
        layer_weights = (1.0,) * extractor.num_layers
    if len(layer_weights) != extractor.num_layers:
        raise ArgumentError(
            f"need {extractor.num_layers} layer weights, got {len(layer_weights)}"
        )
    if all(lw == 0 for lw in layer_weights):
        return torch.zeros((), dtype=t.dtype)
    ft = extractor.features(t)
    fp = extractor.features(p)
    total = torch.zeros((), dtype=t.dtype)
    for lw, a, b in zip(layer_weights, ft, fp):
        if lw == 0:
            continue
        total = total + lw * (a - b).square().sum()
    return total


def total_loss(target, pred, weights: LossWeights, extractor: FeatureExtractor | None,
               layer_weights=None):
    """Weighted sum with a per-term breakdown dict (floats) for logging."""
    t, p = _as_batch(target), _as_batch(pred)
    _check_same_shape(t, p)
    c = content_loss(t, p) if weights.content != 0 else torch.zeros((), dtype=t.dtype)
    if weights.feature != 0:
        if extractor is None:
            raise ArgumentError("a positive feature weight needs a feature extractor")
        f = perceptual_loss(t, p, extractor, layer_weights)
    else:
        f = torch.zeros((), dtype=t.dtype)
    e = edge_loss(t, p) if weights.edge != 0 else torch.zeros((), dtype=t.dtype)
    total = weights.content * c + weights.feature * f + weights.edge * e
    breakdown = {
        "content": float(c.detach()),
        "feature": float(f.detach()),
        "edge": float(e.detach()),
        "total": float(total.detach()),
    }
    return total, breakdown
