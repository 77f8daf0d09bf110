"""Image array helpers: [0,1] float H×W×3 arrays <-> 8-bit PNG files and torch tensors.

The whole package represents a rendered image as a float32 numpy array of
shape (H, W, 3) with channels in [0, 1]. PNG files store the 8-bit
quantisation; loading divides by 255.
"""

from __future__ import annotations

import io

import numpy as np
import torch
from PIL import Image

from .errors import DataError, ShapeError


def check_image(pixels: np.ndarray) -> np.ndarray:
    """Validate an (H, W, 3) float image in [0,1] and return it as float32."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"expected (H, W, 3) image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise DataError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise DataError(
            f"image channels outside [0,1]: min={arr.min():.4g} max={arr.max():.4g}"
        )
    return arr.astype(np.float32, copy=False)


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)


def save_png(pixels: np.ndarray, path) -> None:
    Image.fromarray(to_uint8(check_image(pixels))).save(path, format="PNG")


def png_bytes(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(to_uint8(check_image(pixels))).save(buf, format="PNG")
    return buf.getvalue()


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def image_to_tensor(pixels: np.ndarray) -> torch.Tensor:
    """(H, W, 3) numpy -> (1, 3, H, W) float32 tensor."""
    arr = check_image(pixels)
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))[None]


def tensor_to_image(t: torch.Tensor) -> np.ndarray:
    """(1, 3, H, W) or (3, H, W) tensor -> (H, W, 3) float32 numpy."""
    if t.ndim == 4:
        if t.shape[0] != 1:
            raise ShapeError(f"expected batch of 1, got {t.shape[0]}")
        t = t[0]
    if t.ndim != 3 or t.shape[0] != 3:
        raise ShapeError(f"expected (3, H, W) tensor, got shape {tuple(t.shape)}")
    return t.detach().cpu().numpy().transpose(1, 2, 0).astype(np.float32)
