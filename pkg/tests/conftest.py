import numpy as np
import pytest
import torch

from dragsim import (
    Generator,
    GeneratorConfig,
    ParameterVector,
    RandomSampling,
    build_dataset,
    default_spec,
    load_manifest,
    save_checkpoint,
)

TINY_CONFIG = GeneratorConfig(m=3, n=1, resolution=16, base_channels=32, min_channels=8)


@pytest.fixture(scope="session")
def spec():
    return default_spec()


@pytest.fixture()
def tiny_generator(spec):
    torch.manual_seed(0)
    gen = Generator(TINY_CONFIG, spec)
    gen.eval()
    for p in gen.parameters():
        p.requires_grad_(False)
    return gen


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory, spec):
    """12-image 16x16 dataset, 10 train / 2 test."""
    root = tmp_path_factory.mktemp("tinyds")
    build_dataset(spec, RandomSampling(12), root, seed=7, resolution=16, split=(10, 2))
    return load_manifest(root / "manifest.json")


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory, spec):
    """Untrained seed-0 tiny generator saved to disk; path to the file."""
    path = tmp_path_factory.mktemp("ckpt") / "tiny.ckpt"
    torch.manual_seed(0)
    gen = Generator(TINY_CONFIG, spec)
    save_checkpoint(gen, path, {"purpose": "contract tests"})
    return path


def random_params(spec, rng: np.random.Generator) -> ParameterVector:
    sim = tuple(rng.uniform(lo, hi) for lo, hi in spec.sim_ranges)
    vis = tuple(rng.uniform(lo, hi) for lo, hi in spec.vis_ranges)
    return ParameterVector(sim, vis)


# Acceptance criteria report one PASS/FAIL line each at the end of the run;
# test_acceptance.py appends (number, title, ok) tuples here.
CRITERIA_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok in sorted(CRITERIA_RESULTS):
        word = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{word} criterion {number}: {title}")
