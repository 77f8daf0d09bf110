"""Parameter-conditioned image generator.

Three sub-networks, run strictly in sequence with no stochastic path:

* param subnet — two FC+ReLU branches FC(m,512) and FC(n,512) over the
  normalized simulation / visualization parameters, concatenated and fused
  by FC(1024,512)+ReLU;
* mapping subnet — a stack of FC(512,512)+ReLU layers producing the latent
  vector w;
* synthesis subnet — a learned 4x4 constant followed by doubling blocks of
  bilinear upsample + two modulated/demodulated 3x3 convolutions driven by
  w, then a 1x1 convolution to RGB and a sigmoid into [0,1].

There is deliberately no noise injection anywhere: one parameter vector maps
to exactly one image, and gradients flow from the image back to the
(normalized) input parameters.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import (
    ArgumentError,
    CheckpointCorruptError,
    CheckpointVersionError,
    DataError,
    ShapeError,
)
from .imageio import tensor_to_image
from .synthdata import ParameterSpec, ParameterVector, check_resolution

CHECKPOINT_MAGIC = b"DSGCKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class GeneratorConfig:
    """Architecture hyperparameters.

    channels, when given, lists the output channel count of every synthesis
    block explicitly; otherwise base_channels is halved per block with a
    floor of min_channels.
    """

    m: int
    n: int
    resolution: int = 64
    hidden: int = 512
    mapping_depth: int = 4
    base_channels: int = 256
    min_channels: int = 64
    channels: tuple | None = None

    def __post_init__(self):
        check_resolution(self.resolution)
        if self.m < 1 or self.n < 1:
            raise ArgumentError("m and n must both be >= 1")
        if self.mapping_depth < 1:
            raise ArgumentError("mapping_depth must be >= 1")
        if self.channels is not None:
            object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
            if len(self.channels) != self.num_blocks:
                raise ArgumentError(
                    f"channels must list {self.num_blocks} blocks, got {len(self.channels)}"
                )

    @property
    def num_blocks(self) -> int:
        return int(math.log2(self.resolution // 4))

    def block_channels(self) -> tuple:
        if self.channels is not None:
            return self.channels
        return tuple(
            max(self.base_channels >> (k + 1), self.min_channels)
            for k in range(self.num_blocks)
        )

    def block_resolutions(self) -> tuple:
        return tuple(4 * 2 ** (k + 1) for k in range(self.num_blocks))

    def to_json_dict(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "resolution": self.resolution,
            "hidden": self.hidden,
            "mapping_depth": self.mapping_depth,
            "base_channels": self.base_channels,
            "min_channels": self.min_channels,
            "channels": list(self.channels) if self.channels is not None else None,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "GeneratorConfig":
        channels = d.get("channels")
        return cls(
            m=d["m"],
            n=d["n"],
            resolution=d["resolution"],
            hidden=d["hidden"],
            mapping_depth=d["mapping_depth"],
            base_channels=d["base_channels"],
            min_channels=d["min_channels"],
            channels=tuple(channels) if channels is not None else None,
        )


@dataclass
class FeatureMap:
    """Activations of one synthesis block plus a bilinear view at output size."""

    layer_id: str
    grid: np.ndarray  # (C, h, w)
    resized: np.ndarray  # (C, H, W)

    @property
    def channels(self) -> int:
        return self.grid.shape[0]


class ModulatedConv2d(nn.Module):
    """3x3 (or 1x1) convolution with per-sample weight modulation.

    The per-sample style s = affine(w) scales the kernel's input channels;
    demodulation then rescales every output channel of the modulated kernel
    to unit L2 norm (eps 1e-8). Implemented as a grouped convolution so each
    batch element gets its own kernel.
    """

    def __init__(self, in_channels, out_channels, kernel_size, w_dim, demodulate=True):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.demodulate = demodulate
        self.padding = kernel_size // 2
        self.weight = nn.Parameter(
            torch.empty(out_channels, in_channels, kernel_size, kernel_size)
        )
        nn.init.kaiming_normal_(self.weight, a=0.2)
        self.affine = nn.Linear(w_dim, in_channels)
        nn.init.normal_(self.affine.weight, 0.0, 0.02)
        nn.init.ones_(self.affine.bias)
        self.bias = nn.Parameter(torch.zeros(out_channels))

    def modulated_weight(self, w: torch.Tensor) -> torch.Tensor:
        """Per-sample kernels, shape (B, out, in, k, k)."""
        styles = self.affine(w)  # (B, in)
        weight = self.weight[None] * styles[:, None, :, None, None]
        if self.demodulate:
            dcoef = torch.rsqrt(weight.square().sum(dim=[2, 3, 4]) + 1e-8)
            weight = weight * dcoef[:, :, None, None, None]
        return weight

    def forward(self, x: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
        b, c, h, wd = x.shape
        weight = self.modulated_weight(w)
        weight = weight.reshape(b * self.out_channels, self.in_channels, self.kernel_size, self.kernel_size)
        x = x.reshape(1, b * c, h, wd)
        out = F.conv2d(x, weight, padding=self.padding, groups=b)
        out = out.reshape(b, self.out_channels, h, wd)
        return out + self.bias[None, :, None, None]


class SynthesisBlock(nn.Module):
    """Bilinear x2 upsample followed by two modulated convolutions."""

    def __init__(self, in_channels, out_channels, w_dim):
        super().__init__()
        self.conv0 = ModulatedConv2d(in_channels, out_channels, 3, w_dim)
        self.conv1 = ModulatedConv2d(out_channels, out_channels, 3, w_dim)

    def forward(self, x, w):
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        x = F.leaky_relu(self.conv0(x, w), 0.2)
        x = F.leaky_relu(self.conv1(x, w), 0.2)
        return x


class Generator(nn.Module):
    """The full parameter-to-image network; holds its ParameterSpec."""

    def __init__(self, config: GeneratorConfig, spec: ParameterSpec):
        super().__init__()
        if config.m != spec.m or config.n != spec.n:
            raise ArgumentError(
                f"config dims ({config.m}, {config.n}) do not match spec ({spec.m}, {spec.n})"
            )
        self.config = config
        self.spec = spec
        hidden = config.hidden

        self.fc_sim = nn.Linear(config.m, hidden)
        self.fc_vis = nn.Linear(config.n, hidden)
        self.fc_fuse = nn.Linear(2 * hidden, hidden)
        self.mapping = nn.ModuleList(
            nn.Linear(hidden, hidden) for _ in range(config.mapping_depth)
        )

        channels = config.block_channels()
        self.const = nn.Parameter(torch.randn(config.base_channels, 4, 4))
        blocks = []
        in_ch = config.base_channels
        for out_ch in channels:
            blocks.append(SynthesisBlock(in_ch, out_ch, hidden))
            in_ch = out_ch
        self.blocks = nn.ModuleList(blocks)
        self.to_rgb = nn.Conv2d(in_ch, 3, 1)

        # normalization constants, stored as buffers so checkpoints carry them
        lo = torch.tensor([r[0] for r in spec.sim_ranges + spec.vis_ranges], dtype=torch.float32)
        hi = torch.tensor([r[1] for r in spec.sim_ranges + spec.vis_ranges], dtype=torch.float32)
        self.register_buffer("range_lo", lo)
        self.register_buffer("range_hi", hi)

    # ----- subnet forwards -------------------------------------------------

    @property
    def layer_ids(self) -> tuple:
        return tuple(f"block_{r}" for r in self.config.block_resolutions())

    def param_subnet_forward(self, sim_t: torch.Tensor, vis_t: torch.Tensor) -> torch.Tensor:
        if sim_t.ndim != 2 or sim_t.shape[1] != self.config.m:
            raise ShapeError(f"sim input must be (B, {self.config.m}), got {tuple(sim_t.shape)}")
        if vis_t.ndim != 2 or vis_t.shape[1] != self.config.n:
            raise ShapeError(f"vis input must be (B, {self.config.n}), got {tuple(vis_t.shape)}")
        a = F.relu(self.fc_sim(sim_t))
        b = F.relu(self.fc_vis(vis_t))
        return F.relu(self.fc_fuse(torch.cat([a, b], dim=1)))

    def mapping_forward(self, fused: torch.Tensor) -> torch.Tensor:
        if not torch.isfinite(fused).all():
            raise DataError("mapping input contains non-finite values")
        w = fused
        for layer in self.mapping:
            w = F.relu(layer(w))
        return w

    def synthesis_forward(self, w: torch.Tensor, want_features: bool = True):
        """Returns (image tensor (B,3,H,W) in [0,1], {layer_id: feature tensor})."""
        if not torch.isfinite(w).all():
            raise DataError("latent vector contains non-finite values")
        b = w.shape[0]
        x = self.const[None].expand(b, -1, -1, -1)
        features = {}
        for layer_id, block in zip(self.layer_ids, self.blocks):
            x = block(x, w)
            if want_features:
                features[layer_id] = x
        img = torch.sigmoid(self.to_rgb(x))
        return img, features

    def normalized_forward(self, sim_t: torch.Tensor, vis_t: torch.Tensor, want_features: bool = True):
        """Forward pass from normalized parameter tensors; the differentiable path."""
        fused = self.param_subnet_forward(sim_t, vis_t)
        w = self.mapping_forward(fused)
        return self.synthesis_forward(w, want_features=want_features)

    # ----- parameter-space entry points ------------------------------------

    def normalize_params(self, params: ParameterVector, allow_out_of_range: bool = False):
        if not allow_out_of_range:
            self.spec.validate(params)
        sim_t, vis_t = self.spec.normalize(params)
        dtype = self.range_lo.dtype
        return (
            torch.tensor(sim_t, dtype=dtype)[None],
            torch.tensor(vis_t, dtype=dtype)[None],
        )

    def latent(self, params: ParameterVector, allow_out_of_range: bool = False) -> np.ndarray:
        """The latent vector w for one parameter point, as a numpy array."""
        sim_t, vis_t = self.normalize_params(params, allow_out_of_range)
        with torch.no_grad():
            w = self.mapping_forward(self.param_subnet_forward(sim_t, vis_t))
        return w[0].cpu().numpy()

    def generate(self, params: ParameterVector, allow_out_of_range: bool = False) -> np.ndarray:
        """Predicted (H, W, 3) image in [0,1] for one parameter point."""
        sim_t, vis_t = self.normalize_params(params, allow_out_of_range)
        with torch.no_grad():
            img, _ = self.normalized_forward(sim_t, vis_t, want_features=False)
        return tensor_to_image(img)

    def feature_map(self, params: ParameterVector, layer_id: str,
                    allow_out_of_range: bool = False) -> FeatureMap:
        if layer_id not in self.layer_ids:
            raise ArgumentError(f"unknown layer '{layer_id}', have {self.layer_ids}")
        sim_t, vis_t = self.normalize_params(params, allow_out_of_range)
        with torch.no_grad():
            _, feats = self.normalized_forward(sim_t, vis_t)
            grid = feats[layer_id]
            resized = resize_feature(grid, self.config.resolution)
        return FeatureMap(
            layer_id=layer_id,
            grid=grid[0].cpu().numpy(),
            resized=resized[0].cpu().numpy(),
        )


def resize_feature(grid: torch.Tensor, resolution: int) -> torch.Tensor:
    """Bilinear view of a (B, C, h, w) feature tensor at the output resolution."""
    if grid.shape[-1] == resolution and grid.shape[-2] == resolution:
        return grid
    return F.interpolate(grid, size=(resolution, resolution), mode="bilinear", align_corners=False)


# ---------------------------------------------------------------------------
# Checkpoint container
#
# Layout: 7-byte magic + 1-byte version digit, u64 little-endian header
# length, canonical-JSON header, then raw little-endian float32 tensor bytes
# in the order listed by the header. Writing the same generator twice
# produces byte-identical files.


@dataclass
class Checkpoint:
    config: GeneratorConfig
    spec: ParameterSpec
    state: dict
    metadata: dict = field(default_factory=dict)

    def to_generator(self) -> Generator:
        gen = Generator(self.config, self.spec)
        tensors = {k: torch.from_numpy(v.copy()) for k, v in self.state.items()}
        gen.load_state_dict(tensors)
        gen.eval()
        for p in gen.parameters():
            p.requires_grad_(False)
        return gen


def save_checkpoint(gen: Generator, path, metadata: dict | None = None) -> None:
    state = {k: v.detach().cpu().numpy().astype(np.float32) for k, v in gen.state_dict().items()}
    _write_checkpoint_file(path, gen.config, gen.spec, state, metadata or {})


def _write_checkpoint_file(path, config, spec, state, metadata) -> None:
    keys = sorted(state.keys())
    tensors = []
    offset = 0
    for k in keys:
        arr = np.ascontiguousarray(state[k], dtype=np.float32)
        tensors.append({"key": k, "shape": list(arr.shape), "dtype": "float32",
                        "offset": offset, "nbytes": arr.nbytes})
        offset += arr.nbytes
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": config.to_json_dict(),
        "spec": spec.to_json_dict(),
        "normalization": {
            "sim_lo": [r[0] for r in spec.sim_ranges],
            "sim_hi": [r[1] for r in spec.sim_ranges],
            "vis_lo": [r[0] for r in spec.vis_ranges],
            "vis_hi": [r[1] for r in spec.vis_ranges],
        },
        "metadata": metadata,
        "tensors": tensors,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC + str(CHECKPOINT_VERSION).encode("ascii"))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for k in keys:
            f.write(np.ascontiguousarray(state[k], dtype=np.float32).tobytes())


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise
    if len(data) < 16:
        raise CheckpointCorruptError(f"{path}: file too short to be a checkpoint")
    magic, version_byte = data[:7], data[7:8]
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointCorruptError(f"{path}: bad magic {magic!r}")
    if version_byte != str(CHECKPOINT_VERSION).encode("ascii"):
        raise CheckpointVersionError(
            f"{path}: format version {version_byte!r} unsupported (expected {CHECKPOINT_VERSION})"
        )
    (header_len,) = struct.unpack("<Q", data[8:16])
    if len(data) < 16 + header_len:
        raise CheckpointCorruptError(f"{path}: truncated header")
    try:
        header = json.loads(data[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointCorruptError(f"{path}: unreadable header: {e}") from e
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: header format_version {header.get('format_version')} unsupported"
        )
    body = data[16 + header_len :]
    state = {}
    for t in header["tensors"]:
        start, nbytes = t["offset"], t["nbytes"]
        if start + nbytes > len(body):
            raise CheckpointCorruptError(f"{path}: truncated tensor data for '{t['key']}'")
        arr = np.frombuffer(body[start : start + nbytes], dtype=np.float32).reshape(t["shape"])
        state[t["key"]] = arr.copy()
    config = GeneratorConfig.from_json_dict(header["config"])
    spec = ParameterSpec.from_json_dict(header["spec"])
    return Checkpoint(config=config, spec=spec, state=state, metadata=header.get("metadata", {}))


def load_generator(path) -> Generator:
    return load_checkpoint(path).to_generator()
