"""Command-line front end for the whole pipeline.

Every command is a thin shell over the library: parse flags, merge them
with an optional YAML config file (flags win over the file, the file wins
over built-in defaults), call the library, write its output unmodified.
Exit codes: 0 success, 2 for bad input (usage, files, schemas, ranges),
1 for runtime failures such as a diverged training run.

The config file holds one section per command, named after the first
command word (`dataset`, `train`, `evaluate`, `predict`, `drag`,
`diagnose`, `serve`); keys match the flag names with underscores.
"""

import functools
import json
import sys
from pathlib import Path

import click
import yaml
from click.core import ParameterSource

from .diagnostics import manifest_groups, validity_report
from .drag import DragConfig, export_trajectory, run_drag
from .errors import (
    ArgumentError,
    AssetError,
    CheckpointCorruptError,
    CheckpointVersionError,
    DataError,
    DragsimError,
    EmptyPatchError,
    ManifestError,
    RangeError,
    ShapeError,
)
from .imageio import save_png
from .losses import LossWeights, build_extractor
from .model import GeneratorConfig, load_checkpoint, load_generator
from .patch import select_patch
from .synthdata import (
    GridSampling,
    ParameterVector,
    RandomSampling,
    build_dataset,
    default_spec,
    load_manifest,
)
from .training import TrainConfig, evaluate, train

_VALIDATION = (
    ArgumentError,
    AssetError,
    CheckpointCorruptError,
    CheckpointVersionError,
    DataError,
    EmptyPatchError,
    ManifestError,
    RangeError,
    ShapeError,
    FileNotFoundError,
)


def _guard(f):
    """Map library errors onto the exit-code contract."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except _VALIDATION as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except DragsimError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _load_section(path, section: str) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ArgumentError(f"config file not found: {p}")
    doc = yaml.safe_load(p.read_text()) or {}
    if not isinstance(doc, dict):
        raise ArgumentError("config file root must be a mapping")
    sect = doc.get(section) or {}
    if not isinstance(sect, dict):
        raise ArgumentError(f"config section '{section}' must be a mapping")
    return sect


def _merge(ctx: click.Context, section: str, defaults: dict) -> dict:
    """flags > config file > defaults, with unknown config keys rejected."""
    cfg = _load_section(ctx.params.get("config"), section)
    unknown = sorted(set(cfg) - set(defaults))
    if unknown:
        raise ArgumentError(f"unknown keys in config section '{section}': {unknown}")
    out = {}
    for key, dflt in defaults.items():
        if key in ctx.params and ctx.get_parameter_source(key) == ParameterSource.COMMANDLINE:
            out[key] = ctx.params[key]
        elif key in cfg:
            out[key] = cfg[key]
        else:
            out[key] = dflt
    return out


def _require(opts: dict, *keys):
    for k in keys:
        if opts[k] is None:
            flag = "--" + k.replace("_", "-")
            raise ArgumentError(f"{flag} is required (flag or config file)")


def _dump_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write_or_echo(text: str, out):
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def _parse_theta(spec, text) -> ParameterVector:
    """Comma-separated physical values, simulation parameters first."""
    if isinstance(text, (list, tuple)):
        vals = [float(v) for v in text]
    else:
        try:
            vals = [float(v) for v in str(text).split(",") if v.strip()]
        except ValueError as exc:
            raise ArgumentError(f"cannot parse theta '{text}': {exc}") from exc
    want = spec.m + spec.n
    if len(vals) != want:
        raise ArgumentError(
            f"theta needs {want} values ({spec.m} simulation + {spec.n} visualization), "
            f"got {len(vals)}"
        )
    return ParameterVector(tuple(vals[: spec.m]), tuple(vals[spec.m :]))


def _parse_pixel(text, flag: str) -> tuple:
    try:
        x, y = (int(v) for v in str(text).split(","))
    except ValueError as exc:
        raise ArgumentError(f"{flag} must be 'x,y' integers, got '{text}'") from exc
    return (x, y)


def _parse_pair(value, flag: str) -> tuple:
    if isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        parts = [v.strip() for v in str(value).split(",") if v.strip()]
    if len(parts) != 2:
        raise ArgumentError(f"{flag} must be two comma-separated integers, got '{value}'")
    return (int(parts[0]), int(parts[1]))


def _parse_counts(value) -> tuple:
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    return tuple(int(v) for v in str(value).split(",") if v.strip())


def _free_mask(spec, value):
    """Names of the parameters allowed to move -> per-parameter booleans."""
    if value is None:
        return None
    names = value if isinstance(value, (list, tuple)) else [
        v.strip() for v in str(value).split(",") if v.strip()
    ]
    mask = [False] * spec.m
    for name in names:
        if name not in spec.sim_names:
            raise ArgumentError(
                f"unknown simulation parameter '{name}'; choose from {list(spec.sim_names)}"
            )
        mask[spec.sim_names.index(name)] = True
    return tuple(mask)


def _manifest_path(dataset) -> Path:
    p = Path(dataset)
    return p / "manifest.json" if p.is_dir() else p


_config_option = click.option(
    "--config", type=click.Path(), default=None,
    help="YAML config file; flags override its values.",
)


@click.group()
@click.version_option(package_name="dragsim")
def main():
    """Train, evaluate, and drag-edit a parameter-to-image generator."""


# ------------------------------------------------------------ dataset


@main.group()
def dataset():
    """Synthetic dataset commands."""


@dataset.command("build")
@_config_option
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
@click.option("--count", type=int, default=None, help="Random draws (default 2200).")
@click.option("--resolution", type=int, default=None, help="Image size (default 64).")
@click.option("--split", default=None, help="train,test counts (default 2000,200).")
@click.option("--sampling", type=click.Choice(["random", "grid"]), default=None,
              help="Sampling plan (default random).")
@click.option("--grid-counts", default=None,
              help="Per-parameter grid counts, e.g. 4,30,50 (grid sampling only).")
@click.option("--seed", type=int, default=None, help="RNG seed (default 0).")
@click.pass_context
@_guard
def dataset_build(ctx, **_):
    opts = _merge(ctx, "dataset", {
        "out": None, "count": 2200, "resolution": 64, "split": "2000,200",
        "sampling": "random", "grid_counts": None, "seed": 0, "config": None,
    })
    _require(opts, "out")
    spec = default_spec()
    if opts["sampling"] == "grid":
        if opts["grid_counts"] is None:
            raise ArgumentError("--grid-counts is required for grid sampling")
        plan = GridSampling(sim_counts=_parse_counts(opts["grid_counts"]))
    else:
        plan = RandomSampling(int(opts["count"]))
    split = _parse_pair(opts["split"], "--split")
    build_dataset(spec, plan, opts["out"], seed=int(opts["seed"]),
                  resolution=int(opts["resolution"]), split=split)
    click.echo(str(Path(opts["out"]) / "manifest.json"))


# -------------------------------------------------------------- train


@main.command("train")
@_config_option
@click.option("--dataset", "dataset_", type=click.Path(), default=None,
              help="Dataset directory or manifest path.")
@click.option("--out", type=click.Path(), default=None, help="Run directory.")
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--optimizer", type=click.Choice(["adam", "sgd"]), default=None)
@click.option("--content-weight", type=float, default=None, help="Pixel-difference weight.")
@click.option("--feature-weight", type=float, default=None, help="Feature-distance weight.")
@click.option("--edge-weight", type=float, default=None, help="Edge-response weight.")
@click.option("--checkpoint-every", type=int, default=None)
@click.option("--extractor", type=click.Choice(["auto", "vgg19", "fallback"]), default=None)
@click.option("--base-channels", type=int, default=None)
@click.option("--min-channels", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
@_guard
def train_cmd(ctx, **_):
    opts = _merge(ctx, "train", {
        "dataset_": None, "out": None, "epochs": 40, "batch_size": 16,
        "lr": 2e-4, "optimizer": "adam", "content_weight": 1.0, "feature_weight": 1.0,
        "edge_weight": 0.01, "checkpoint_every": 5, "extractor": "auto",
        "base_channels": 256, "min_channels": 64, "seed": 0, "config": None,
    })
    _require(opts, "dataset_", "out")
    manifest = load_manifest(_manifest_path(opts["dataset_"]))
    first = manifest.entries[0]
    resolution = manifest.load_image(first).shape[0]
    gen_config = GeneratorConfig(
        m=manifest.spec.m, n=manifest.spec.n, resolution=resolution,
        base_channels=int(opts["base_channels"]), min_channels=int(opts["min_channels"]),
    )
    cfg = TrainConfig(
        epochs=int(opts["epochs"]), batch_size=int(opts["batch_size"]),
        lr=float(opts["lr"]), optimizer=opts["optimizer"],
        weights=LossWeights(float(opts["content_weight"]), float(opts["feature_weight"]),
                            float(opts["edge_weight"])),
        seed=int(opts["seed"]), checkpoint_every=int(opts["checkpoint_every"]),
        extractor_kind=opts["extractor"],
    )
    train(manifest, gen_config, cfg, opts["out"])
    click.echo(str(Path(opts["out"]) / "generator.ckpt"))


# ----------------------------------------------------------- evaluate


@main.command("evaluate")
@_config_option
@click.option("--checkpoint", type=click.Path(), default=None)
@click.option("--dataset", "dataset_", type=click.Path(), default=None)
@click.option("--split", default=None, help="Manifest split to score (default test).")
@click.option("--extractor", type=click.Choice(["auto", "vgg19", "fallback"]), default=None)
@click.option("--out", type=click.Path(), default=None,
              help="Report JSON path; stdout when omitted.")
@click.option("--seed", type=int, default=None, help="Accepted for uniformity; unused.")
@click.pass_context
@_guard
def evaluate_cmd(ctx, **_):
    opts = _merge(ctx, "evaluate", {
        "checkpoint": None, "dataset_": None, "split": "test",
        "extractor": "auto", "out": None, "seed": 0, "config": None,
    })
    _require(opts, "checkpoint", "dataset_")
    ck = load_checkpoint(opts["checkpoint"])
    manifest = load_manifest(_manifest_path(opts["dataset_"]))
    report = evaluate(
        ck.to_generator(), manifest, split=opts["split"],
        extractor=build_extractor(opts["extractor"]),
        checkpoint_id=str(opts["checkpoint"]),
    )
    _write_or_echo(_dump_json(report.to_json_dict()), opts["out"])


# ------------------------------------------------------------ predict


@main.command("predict")
@_config_option
@click.option("--checkpoint", type=click.Path(), default=None)
@click.option("--theta", default=None,
              help="Comma-separated physical values, simulation parameters first.")
@click.option("--out", type=click.Path(), default=None, help="PNG path.")
@click.option("--allow-out-of-range", is_flag=True, default=False,
              help="Skip the range check on theta.")
@click.option("--seed", type=int, default=None, help="Accepted for uniformity; unused.")
@click.pass_context
@_guard
def predict_cmd(ctx, **_):
    opts = _merge(ctx, "predict", {
        "checkpoint": None, "theta": None, "out": None,
        "allow_out_of_range": False, "seed": 0, "config": None,
    })
    _require(opts, "checkpoint", "theta", "out")
    gen = load_generator(opts["checkpoint"])
    theta = _parse_theta(gen.spec, opts["theta"])
    img = gen.generate(theta, allow_out_of_range=bool(opts["allow_out_of_range"]))
    Path(opts["out"]).parent.mkdir(parents=True, exist_ok=True)
    save_png(img, opts["out"])
    click.echo(str(opts["out"]))


# --------------------------------------------------------------- drag


@main.command("drag")
@_config_option
@click.option("--checkpoint", type=click.Path(), default=None)
@click.option("--theta", default=None,
              help="Starting physical values, simulation parameters first.")
@click.option("--select", "select_", default=None, help="Structure click 'x,y'.")
@click.option("--target", default=None, help="Goal pixel 'x,y'.")
@click.option("--out", type=click.Path(), default=None, help="Trajectory directory.")
@click.option("--patch-threshold", type=float, default=None,
              help="Minimum color similarity to the clicked pixel (default 0.95).")
@click.option("--patch-radius", type=float, default=None,
              help="Flood-fill expansion radius in pixels (default 3).")
@click.option("--cap-radius", type=float, default=None,
              help="Optional hard cap on patch extent around the click.")
@click.option("--reach-radius", type=float, default=None,
              help="Distance at which the handle counts as arrived (default 2).")
@click.option("--disappear-threshold", type=float, default=None,
              help="Similarity floor before the structure counts as gone (default 0.95).")
@click.option("--max-iters", type=int, default=None)
@click.option("--step-size", type=float, default=None)
@click.option("--free", default=None,
              help="Comma-separated simulation parameters allowed to move; default all.")
@click.option("--feature-layer", default=None,
              help="Generator block supplying guidance features; default middle block.")
@click.option("--seed", type=int, default=None, help="Accepted for uniformity; unused.")
@click.pass_context
@_guard
def drag_cmd(ctx, **_):
    opts = _merge(ctx, "drag", {
        "checkpoint": None, "theta": None, "select_": None, "target": None,
        "out": None, "patch_threshold": 0.95, "patch_radius": 3.0,
        "cap_radius": None, "reach_radius": 2.0, "disappear_threshold": 0.95,
        "max_iters": 200, "step_size": 2e-3, "free": None,
        "feature_layer": None, "seed": 0, "config": None,
    })
    _require(opts, "checkpoint", "theta", "select_", "target", "out")
    gen = load_generator(opts["checkpoint"])
    theta = _parse_theta(gen.spec, opts["theta"])
    img = gen.generate(theta)
    sel = select_patch(
        img, _parse_pixel(opts["select_"], "--select"),
        d=float(opts["patch_threshold"]), r=float(opts["patch_radius"]),
        cap_radius=None if opts["cap_radius"] is None else float(opts["cap_radius"]),
    )
    sel.target = _parse_pixel(opts["target"], "--target")
    config = DragConfig(
        r_m=float(opts["reach_radius"]),
        d_threshold=float(opts["disappear_threshold"]),
        max_iters=int(opts["max_iters"]), step_size=float(opts["step_size"]),
        free_mask=_free_mask(gen.spec, opts["free"]),
        feature_layer=opts["feature_layer"],
    )
    session = run_drag(gen, theta, [sel], config)
    path = export_trajectory(session, opts["out"])
    click.echo(f"{session.status} after {session.trajectory[-1].step} steps")
    click.echo(str(path))


# ----------------------------------------------------------- diagnose


@main.group()
def diagnose():
    """Health checks on a trained generator."""


@diagnose.command("latents")
@_config_option
@click.option("--checkpoint", type=click.Path(), default=None)
@click.option("--dataset", "dataset_", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None,
              help="Report JSON path; stdout when omitted.")
@click.option("--probe-count", type=int, default=None,
              help="Fresh in-range / out-of-range draws (default 50).")
@click.option("--max-per-split", type=int, default=None,
              help="Cap on train/test points embedded (default 200).")
@click.option("--seed", type=int, default=None)
@click.pass_context
@_guard
def diagnose_latents(ctx, **_):
    opts = _merge(ctx, "diagnose", {
        "checkpoint": None, "dataset_": None, "out": None,
        "probe_count": 50, "max_per_split": 200, "seed": 0, "config": None,
    })
    _require(opts, "checkpoint", "dataset_")
    gen = load_generator(opts["checkpoint"])
    manifest = load_manifest(_manifest_path(opts["dataset_"]))
    groups = manifest_groups(
        gen, manifest, probe_count=int(opts["probe_count"]),
        max_per_split=int(opts["max_per_split"]), seed=int(opts["seed"]),
    )
    report = validity_report(groups)
    _write_or_echo(_dump_json(report.to_json_dict()), opts["out"])


# -------------------------------------------------------------- serve


@main.command("serve")
@_config_option
@click.option("--host", default=None, help="Bind address (default 127.0.0.1).")
@click.option("--port", type=int, default=None, help="Port (default 8765).")
@click.option("--checkpoint-dir", type=click.Path(), default=None,
              help="Directory scanned for checkpoints (default cwd).")
@click.option("--idle-timeout", type=float, default=None,
              help="Seconds before an untouched session is evicted (default 1800).")
@click.option("--seed", type=int, default=None, help="Accepted for uniformity; unused.")
@click.pass_context
@_guard
def serve_cmd(ctx, **_):
    from .service import resolve_config, run_server

    overrides = {}
    for key in ("host", "port", "checkpoint_dir", "idle_timeout"):
        if ctx.get_parameter_source(key) == ParameterSource.COMMANDLINE:
            overrides[key] = ctx.params[key]
    cfg = resolve_config(overrides, ctx.params.get("config"))
    run_server(cfg)


if __name__ == "__main__":
    main()
