"""Training and evaluation of the generator against a dataset manifest.

The loop minimizes the weighted loss (content + feature + edge) over the
train split with adaptive-moment gradient descent. Each optimizer step
appends one machine-readable record to an NDJSON log:

    {"epoch": E, "step": S, "content": c, "feature": f, "edge": e, "total": t}

where feature and edge are per-sample means over the batch so their scale
does not depend on batch size. Runs are deterministic for a fixed seed on a
single device. A non-finite loss aborts the run, keeping the last
checkpoint written by the epoch cadence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import ArgumentError, DataError, TrainingDiverged
from .imageio import image_to_tensor
from .losses import FeatureExtractor, LossWeights, build_extractor, content_loss, edge_loss, perceptual_loss
from .metrics import psnr, ssim
from .model import Checkpoint, Generator, GeneratorConfig, load_checkpoint, save_checkpoint
from .synthdata import DatasetManifest

CHECKPOINT_NAME = "generator.ckpt"
LOG_NAME = "train_log.ndjson"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 16
    lr: float = 2e-4
    optimizer: str = "adam"
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    checkpoint_every: int = 5
    device: str = "cpu"
    extractor_kind: str = "auto"

    def __post_init__(self):
        if self.epochs < 1:
            raise ArgumentError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ArgumentError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ArgumentError("lr must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ArgumentError(f"unknown optimizer '{self.optimizer}'")
        if self.checkpoint_every < 1:
            raise ArgumentError("checkpoint_every must be >= 1")


def _load_split(manifest: DatasetManifest, split: str):
    """Stacked image and normalized-parameter tensors for one split."""
    entries = manifest.split_entries(split)
    images = []
    sims = []
    viss = []
    for e in entries:
        img = manifest.load_image(e)
        images.append(image_to_tensor(img)[0])
        sim_n, vis_n = manifest.spec.normalize(e.params)
        sims.append(sim_n)
        viss.append(vis_n)
    return (
        torch.stack(images),
        torch.tensor(np.asarray(sims), dtype=torch.float32),
        torch.tensor(np.asarray(viss), dtype=torch.float32),
    )


def _batch_terms(gen, extractor, weights, imgs, sim_t, vis_t):
    pred, _ = gen.normalized_forward(sim_t, vis_t, want_features=False)
    b = imgs.shape[0]
    zero = torch.zeros((), dtype=pred.dtype)
    c = content_loss(imgs, pred) if weights.content != 0 else zero
    f = perceptual_loss(imgs, pred, extractor) / b if weights.feature != 0 else zero
    e = edge_loss(imgs, pred) / b if weights.edge != 0 else zero
    total = weights.content * c + weights.feature * f + weights.edge * e
    return total, c, f, e


def train(manifest: DatasetManifest, gen_config: GeneratorConfig, cfg: TrainConfig,
          out_dir, extractor: FeatureExtractor | None = None,
          on_epoch=None) -> Checkpoint:
    """Train a fresh generator; returns the final checkpoint (also on disk).

    Writes out_dir/generator.ckpt (refreshed every cfg.checkpoint_every
    epochs and at the end) and out_dir/train_log.ndjson. on_epoch, when
    given, is called as on_epoch(epoch, mean_total) after each epoch.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / CHECKPOINT_NAME
    log_path = out_dir / LOG_NAME

    if not manifest.split_entries("train"):
        raise ArgumentError("manifest has no train entries")
    if cfg.weights.feature != 0 and extractor is None:
        extractor = build_extractor(cfg.extractor_kind)

    torch.manual_seed(cfg.seed)
    gen = Generator(gen_config, manifest.spec)
    gen.train()

    imgs, sim_t, vis_t = _load_split(manifest, "train")
    n = imgs.shape[0]

    if cfg.optimizer == "adam":
        opt = torch.optim.Adam(gen.parameters(), lr=cfg.lr)
    else:
        opt = torch.optim.SGD(gen.parameters(), lr=cfg.lr)

    rng = np.random.default_rng(cfg.seed)
    last_good = None
    global_step = 0
    meta_base = {
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "lr": cfg.lr,
        "optimizer": cfg.optimizer,
        "loss_weights": [cfg.weights.content, cfg.weights.feature, cfg.weights.edge],
        "extractor": extractor.tag if extractor is not None else None,
        "train_entries": n,
    }

    with open(log_path, "w") as log:
        for epoch in range(1, cfg.epochs + 1):
            perm = rng.permutation(n)
            epoch_totals = []
            for start in range(0, n, cfg.batch_size):
                idx = torch.from_numpy(perm[start : start + cfg.batch_size].copy())
                try:
                    total, c, f, e = _batch_terms(
                        gen, extractor, cfg.weights, imgs[idx], sim_t[idx], vis_t[idx]
                    )
                except DataError as exc:
                    # The generator refuses non-finite internal state; during
                    # training that is a diverged run, not bad input.
                    raise TrainingDiverged(
                        f"non-finite forward at epoch {epoch} after step {global_step}: {exc}",
                        last_good_path=last_good,
                    ) from exc
                if not torch.isfinite(total):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch} step {global_step}",
                        last_good_path=last_good,
                    )
                opt.zero_grad()
                total.backward()
                opt.step()
                global_step += 1
                record = {
                    "epoch": epoch,
                    "step": global_step,
                    "content": float(c.detach()),
                    "feature": float(f.detach()),
                    "edge": float(e.detach()),
                    "total": float(total.detach()),
                }
                log.write(json.dumps(record) + "\n")
                epoch_totals.append(record["total"])
            log.flush()
            if epoch % cfg.checkpoint_every == 0:
                save_checkpoint(gen, ckpt_path, {**meta_base, "completed_epochs": epoch})
                last_good = ckpt_path
            if on_epoch is not None:
                on_epoch(epoch, float(np.mean(epoch_totals)))

    save_checkpoint(gen, ckpt_path, {**meta_base, "completed_epochs": cfg.epochs})
    return load_checkpoint(ckpt_path)


@dataclass
class MetricsReport:
    dataset: str
    split: str
    checkpoint_id: str
    psnr_values: list
    ssim_values: list
    perceptual_values: list

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr_values))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim_values))

    @property
    def mean_perceptual(self) -> float:
        return float(np.mean(self.perceptual_values))

    @property
    def mean_mse(self) -> float:
        # PSNR = 10 log10(1/MSE) inverted; inf PSNR contributes zero MSE
        vals = [0.0 if v == float("inf") else 10 ** (-v / 10.0) for v in self.psnr_values]
        return float(np.mean(vals))

    def to_json_dict(self) -> dict:
        enc = lambda v: "inf" if v == float("inf") else v
        return {
            "dataset": self.dataset,
            "split": self.split,
            "checkpoint": self.checkpoint_id,
            "mean": {
                "psnr_db": enc(self.mean_psnr),
                "ssim": self.mean_ssim,
                "perceptual_distance": self.mean_perceptual,
                "mse": self.mean_mse,
            },
            "per_image": {
                "psnr_db": [enc(v) for v in self.psnr_values],
                "ssim": self.ssim_values,
                "perceptual_distance": self.perceptual_values,
            },
        }


def evaluate(gen: Generator, manifest: DatasetManifest, split: str = "test",
             extractor: FeatureExtractor | None = None,
             checkpoint_id: str = "", batch_size: int = 32) -> MetricsReport:
    """PSNR / SSIM / perceptual distance of generated vs stored images.

    The perceptual column uses the losses-module extractor as a stand-in
    for a learned perceptual metric; the report records which extractor
    produced it.
    """
    entries = manifest.split_entries(split)
    if not entries:
        raise ArgumentError(f"split '{split}' is empty")
    if extractor is None:
        extractor = build_extractor("auto")
    imgs, sim_t, vis_t = _load_split(manifest, split)

    psnrs, ssims, percs = [], [], []
    gen.eval()
    with torch.no_grad():
        for start in range(0, imgs.shape[0], batch_size):
            sl = slice(start, start + batch_size)
            pred, _ = gen.normalized_forward(sim_t[sl], vis_t[sl], want_features=False)
            for k in range(pred.shape[0]):
                target_t = imgs[sl][k : k + 1]
                pred_t = pred[k : k + 1]
                target = target_t[0].permute(1, 2, 0).numpy()
                out = pred_t[0].permute(1, 2, 0).numpy()
                psnrs.append(psnr(target, out))
                ssims.append(ssim(target, out))
                percs.append(float(perceptual_loss(target_t, pred_t, extractor)))
    return MetricsReport(
        dataset=str(manifest.root),
        split=split,
        checkpoint_id=checkpoint_id or f"extractor={extractor.tag}",
        psnr_values=psnrs,
        ssim_values=ssims,
        perceptual_values=percs,
    )
