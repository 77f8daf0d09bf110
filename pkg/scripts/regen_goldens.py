#!/usr/bin/env python3
"""Regenerate the frozen reference outputs under tests/goldens/.

Run from the repo root after any intentional change to the synthetic
family, the generator architecture, or the embedding code, then review the
diff before committing. Tests compare against these files at tolerance, so
refreshing them is an explicit, reviewed act.
"""

import json
from pathlib import Path

import numpy as np
import torch

from dragsim import (
    Generator,
    ParameterVector,
    classical_mds,
    default_spec,
    generate_image,
    save_png,
    synth_field,
)
from dragsim.diagnostics import _pairwise
from dragsim.model import GeneratorConfig

GOLDENS = Path(__file__).resolve().parent.parent / "tests" / "goldens"

PINNED_PARAMS = ParameterVector((0.25, 1.3, 1.8), (0.05,))


def main():
    GOLDENS.mkdir(parents=True, exist_ok=True)

    field = synth_field(PINNED_PARAMS, 32)
    np.save(GOLDENS / "field_32.npy", field.values)

    img = generate_image(PINNED_PARAMS, 32)
    save_png(img, GOLDENS / "render_32.png")

    torch.manual_seed(0)
    gen = Generator(GeneratorConfig(m=3, n=1, resolution=16, base_channels=32, min_channels=8),
                    default_spec())
    fm = gen.feature_map(PINNED_PARAMS, "block_8")
    stats = {
        "layer": fm.layer_id,
        "mean": [float(v) for v in fm.grid.mean(axis=(1, 2))],
        "var": [float(v) for v in fm.grid.var(axis=(1, 2))],
    }
    (GOLDENS / "feature_stats.json").write_text(json.dumps(stats, indent=1))

    rng = np.random.default_rng(42)
    mat = rng.standard_normal((5, 512))
    coords = classical_mds(_pairwise(mat))
    (GOLDENS / "mds_coords.json").write_text(
        json.dumps({"seed": 42, "coords": coords.tolist()}, indent=1)
    )

    print(f"wrote goldens to {GOLDENS}")


if __name__ == "__main__":
    main()
