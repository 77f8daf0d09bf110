"""Loss terms against naive oracles, plus extractor behavior."""

import numpy as np
import pytest
import torch

from dragsim import (
    ArgumentError,
    AssetError,
    LossWeights,
    ShapeError,
    build_extractor,
    content_loss,
    edge_loss,
    perceptual_loss,
    total_loss,
)
from dragsim.losses import sobel_response


# ----- oracles --------------------------------------------------------------

def content_oracle(a: np.ndarray, b: np.ndarray) -> float:
    total = 0.0
    count = 0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            for c in range(3):
                total += abs(float(a[i, j, c]) - float(b[i, j, c]))
                count += 1
    return total / count


def sobel_oracle(img: np.ndarray):
    """Replicate-padded double-loop Sobel pair on luminance."""
    y = 0.299 * img[:, :, 0] + 0.587 * img[:, :, 1] + 0.114 * img[:, :, 2]
    h, w = y.shape
    kx = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    ky = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]]
    gx = np.zeros_like(y)
    gy = np.zeros_like(y)
    for i in range(h):
        for j in range(w):
            sx = sy = 0.0
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    ii = min(max(i + di, 0), h - 1)
                    jj = min(max(j + dj, 0), w - 1)
                    sx += kx[di + 1][dj + 1] * y[ii, jj]
                    sy += ky[di + 1][dj + 1] * y[ii, jj]
            gx[i, j] = sx
            gy[i, j] = sy
    return gx, gy


def edge_oracle(a: np.ndarray, b: np.ndarray) -> float:
    ax, ay = sobel_oracle(a)
    bx, by = sobel_oracle(b)
    return float(((ax - bx) ** 2).sum() + ((ay - by) ** 2).sum())


# ----- content --------------------------------------------------------------

def test_content_identity():
    img = np.random.default_rng(0).random((6, 6, 3)).astype(np.float32)
    assert float(content_loss(img, img)) == 0.0


def test_content_zeros_vs_ones():
    a = np.zeros((4, 4, 3), dtype=np.float32)
    b = np.ones((4, 4, 3), dtype=np.float32)
    assert float(content_loss(a, b)) == pytest.approx(1.0, abs=1e-7)


def test_content_matches_double_loop_oracle():
    rng = np.random.default_rng(1)
    a = rng.random((7, 5, 3)).astype(np.float32)
    b = rng.random((7, 5, 3)).astype(np.float32)
    assert float(content_loss(a, b)) == pytest.approx(content_oracle(a, b), abs=1e-7)


def test_content_symmetry():
    rng = np.random.default_rng(2)
    a = rng.random((5, 5, 3)).astype(np.float32)
    b = rng.random((5, 5, 3)).astype(np.float32)
    assert float(content_loss(a, b)) == float(content_loss(b, a))


def test_content_shape_mismatch():
    with pytest.raises(ShapeError):
        content_loss(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


# ----- edge -----------------------------------------------------------------

def test_edge_constant_pairs_zero():
    a = np.full((8, 8, 3), 0.2, dtype=np.float32)
    b = np.full((8, 8, 3), 0.9, dtype=np.float32)
    assert float(edge_loss(a, b)) == pytest.approx(0.0, abs=1e-6)
    assert float(edge_loss(a, a)) == pytest.approx(0.0, abs=1e-12)


def test_edge_step_vs_flat_matches_naive_conv_oracle():
    a = np.zeros((8, 8, 3), dtype=np.float32)
    a[:, 4:] = 1.0  # vertical step edge
    b = np.full((8, 8, 3), 0.5, dtype=np.float32)
    assert float(edge_loss(a, b)) == pytest.approx(edge_oracle(a, b), rel=1e-4)


def test_edge_random_pair_matches_oracle():
    rng = np.random.default_rng(3)
    a = rng.random((6, 9, 3)).astype(np.float32)
    b = rng.random((6, 9, 3)).astype(np.float32)
    assert float(edge_loss(a, b)) == pytest.approx(edge_oracle(a, b), rel=1e-4)


def test_edge_symmetry():
    rng = np.random.default_rng(4)
    a = rng.random((6, 6, 3)).astype(np.float32)
    b = rng.random((6, 6, 3)).astype(np.float32)
    assert float(edge_loss(a, b)) == float(edge_loss(b, a))


def test_sobel_response_shape():
    img = np.random.default_rng(5).random((10, 12, 3)).astype(np.float32)
    resp = sobel_response(img)
    assert tuple(resp.shape) == (1, 2, 10, 12)


# ----- perceptual -----------------------------------------------------------

@pytest.fixture(scope="module")
def extractor():
    return build_extractor("fallback")


def test_perceptual_identity(extractor):
    img = np.random.default_rng(6).random((16, 16, 3)).astype(np.float32)
    assert float(perceptual_loss(img, img, extractor)) == 0.0


def test_perceptual_zero_weights(extractor):
    rng = np.random.default_rng(7)
    a = rng.random((16, 16, 3)).astype(np.float32)
    b = rng.random((16, 16, 3)).astype(np.float32)
    zero = (0.0,) * extractor.num_layers
    assert float(perceptual_loss(a, b, extractor, zero)) == 0.0


def test_perceptual_single_layer_matches_direct_norm(extractor):
    rng = np.random.default_rng(8)
    a = torch.tensor(rng.random((1, 3, 16, 16)), dtype=torch.float32)
    b = torch.tensor(rng.random((1, 3, 16, 16)), dtype=torch.float32)
    lw = [0.0] * extractor.num_layers
    lw[1] = 1.0
    got = float(perceptual_loss(a, b, extractor, tuple(lw)))
    fa = extractor.features(a)[1]
    fb = extractor.features(b)[1]
    want = float(((fa - fb) ** 2).sum())
    assert got == pytest.approx(want, abs=1e-5)


def test_fallback_extractor_deterministic():
    e1 = build_extractor("fallback")
    e2 = build_extractor("fallback")
    img = torch.rand(1, 3, 16, 16, generator=torch.Generator().manual_seed(9))
    f1 = e1.features(img)
    f2 = e2.features(img)
    assert all(torch.equal(x, y) for x, y in zip(f1, f2))
    assert e1.tag == "fallback-perceptual"


def test_vgg_kind_without_asset_raises(tmp_path, monkeypatch):
    monkeypatch.setenv("TORCH_HOME", str(tmp_path))
    with pytest.raises(AssetError):
        build_extractor("vgg19")


def test_bad_layer_weight_count(extractor):
    a = np.zeros((16, 16, 3), dtype=np.float32)
    with pytest.raises(ArgumentError):
        perceptual_loss(a, a, extractor, (1.0,))


# ----- weights + total ------------------------------------------------------

def test_loss_weights_validation():
    with pytest.raises(ArgumentError):
        LossWeights(content=-1)
    with pytest.raises(ArgumentError):
        LossWeights(content=0, feature=0, edge=0)
    assert LossWeights().edge == 0.01


def test_total_degenerate_weights_equals_content(extractor):
    rng = np.random.default_rng(10)
    a = rng.random((8, 8, 3)).astype(np.float32)
    b = rng.random((8, 8, 3)).astype(np.float32)
    tot, br = total_loss(a, b, LossWeights(1, 0, 0), extractor)
    assert float(tot) == float(content_loss(a, b))
    assert br["feature"] == 0.0 and br["edge"] == 0.0


def test_total_default_weights_combination(extractor):
    rng = np.random.default_rng(11)
    a = rng.random((8, 8, 3)).astype(np.float32)
    b = rng.random((8, 8, 3)).astype(np.float32)
    w = LossWeights()
    tot, br = total_loss(a, b, w, extractor)
    want = (
        w.content * float(content_loss(a, b))
        + w.feature * float(perceptual_loss(a, b, extractor))
        + w.edge * float(edge_loss(a, b))
    )
    assert float(tot) == pytest.approx(want, rel=1e-6)
    assert br["total"] == pytest.approx(want, rel=1e-6)


def test_total_identity_all_zero(extractor):
    img = np.random.default_rng(12).random((8, 8, 3)).astype(np.float32)
    tot, br = total_loss(img, img, LossWeights(), extractor)
    assert float(tot) == 0.0
    assert br == {"content": 0.0, "feature": 0.0, "edge": 0.0, "total": 0.0}


def test_total_without_extractor_needs_zero_feature_weight():
    a = np.zeros((8, 8, 3), dtype=np.float32)
    with pytest.raises(ArgumentError):
        total_loss(a, a, LossWeights(), None)
    tot, _ = total_loss(a, a, LossWeights(1, 0, 0.01), None)
    assert float(tot) == 0.0


# ----- gradient checks ------------------------------------------------------

def _fd_check(loss_fn, rel_tol=1e-3):
    """Central differences on an 8x8 image in float64."""
    rng = np.random.default_rng(13)
    target = torch.tensor(rng.random((1, 3, 8, 8)), dtype=torch.float64)
    pred = torch.tensor(rng.random((1, 3, 8, 8)), dtype=torch.float64, requires_grad=True)
    loss_fn(target, pred).backward()
    grad = pred.grad.clone()
    h = 1e-6
    checks = 0
    for idx in [(0, 0, 2, 3), (0, 1, 5, 5), (0, 2, 7, 0), (0, 0, 4, 6), (0, 2, 1, 1)]:
        with torch.no_grad():
            p_plus = pred.detach().clone()
            p_plus[idx] += h
            p_minus = pred.detach().clone()
            p_minus[idx] -= h
            fd = (float(loss_fn(target, p_plus)) - float(loss_fn(target, p_minus))) / (2 * h)
        denom = max(abs(fd), abs(float(grad[idx])), 1e-9)
        assert abs(fd - float(grad[idx])) / denom < rel_tol
        checks += 1
    assert checks == 5


def test_content_gradient_fd():
    _fd_check(content_loss)


def test_edge_gradient_fd():
    _fd_check(edge_loss)


def test_perceptual_gradient_fd():
    ex = build_extractor("fallback").double()
    _fd_check(lambda t, p: perceptual_loss(t, p, ex))


def test_total_gradient_fd():
    ex = build_extractor("fallback").double()
    _fd_check(lambda t, p: total_loss(t, p, LossWeights(), ex)[0])
