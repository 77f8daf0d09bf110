"""Build the desk dataset and train the cached runs the slow tests reuse.

Run from the repository root:

    python3 scripts/train_desk.py          # full loss weights
    python3 scripts/train_desk.py content  # pixel-difference term only

Artifacts land under the cache directory described in tests/deskcache.py.
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import deskcache  # noqa: E402
from dragsim import evaluate, load_checkpoint  # noqa: E402


def main(argv):
    if argv and argv[0] == "content":
        cfg = deskcache.desk_train_config(deskcache.content_weights())
        label = "content-only"
    elif argv:
        print(f"unknown mode {argv[0]!r}; expected nothing or 'content'", file=sys.stderr)
        return 2
    else:
        cfg = deskcache.desk_train_config()
        label = "full"

    manifest = deskcache.ensure_dataset()
    print(f"[{label}] dataset ready: {len(manifest.entries)} entries", flush=True)

    ckpt_path, out = deskcache.ensure_run(cfg)
    meta = deskcache.run_meta(out)
    print(f"[{label}] trained in {meta['train_seconds']:.0f}s -> {ckpt_path}", flush=True)

    gen = load_checkpoint(ckpt_path).to_generator()
    report = evaluate(gen, manifest, split="test")
    summary = {
        "mean_psnr": report.mean_psnr,
        "mean_ssim": report.mean_ssim,
        "mean_mse": sum(10 ** (-p / 10) for p in report.psnr_values) / len(report.psnr_values),
    }
    (out / "eval.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"[{label}] test PSNR {summary['mean_psnr']:.2f} dB  "
          f"SSIM {summary['mean_ssim']:.4f}  MSE {summary['mean_mse']:.3e}", flush=True)
    return 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
