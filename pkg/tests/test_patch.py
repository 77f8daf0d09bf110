"""Flood-fill structure selection + HSV similarity."""

import colorsys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dragsim import ArgumentError, DataError, PatchSelection, hsv_similarity, select_patch


# ----- hsv similarity -------------------------------------------------------

def test_identical_colors():
    assert hsv_similarity((0.3, 0.6, 0.9), (0.3, 0.6, 0.9)) == 1.0


def test_hue_wraparound_red():
    c_lo = colorsys.hsv_to_rgb(0.0, 0.8, 0.7)
    c_hi = colorsys.hsv_to_rgb(1.0, 0.8, 0.7)
    assert hsv_similarity(c_lo, c_hi) == pytest.approx(1.0, abs=1e-12)


def test_near_wraparound_hues():
    a = colorsys.hsv_to_rgb(0.01, 0.5, 0.5)
    b = colorsys.hsv_to_rgb(0.99, 0.5, 0.5)
    # circular distance 0.02, doubled to 0.04, weighted by 0.5
    assert hsv_similarity(a, b) == pytest.approx(1.0 - 0.5 * 0.04, abs=1e-9)


def test_pinned_pair_hand_computed():
    c1 = (0.8, 0.2, 0.2)
    c2 = (0.2, 0.2, 0.8)
    h1, s1, v1 = colorsys.rgb_to_hsv(*c1)
    h2, s2, v2 = colorsys.rgb_to_hsv(*c2)
    dh = 2 * min(abs(h1 - h2), 1 - abs(h1 - h2))
    want = 1.0 - (0.5 * dh + 0.25 * abs(s1 - s2) + 0.25 * abs(v1 - v2))
    assert hsv_similarity(c1, c2) == pytest.approx(want, abs=1e-6)


def test_out_of_range_channel():
    with pytest.raises(DataError):
        hsv_similarity((1.2, 0, 0), (0, 0, 0))
    with pytest.raises(DataError):
        hsv_similarity((0.5, 0.5, 0.5), (-0.1, 0, 0))


@settings(max_examples=50, deadline=None)
@given(st.tuples(*[st.floats(0, 1) for _ in range(6)]))
def test_similarity_bounds_and_symmetry(vals):
    c1, c2 = vals[:3], vals[3:]
    s = hsv_similarity(c1, c2)
    assert 0.0 <= s <= 1.0
    assert s == hsv_similarity(c2, c1)


# ----- select_patch ---------------------------------------------------------

def two_tone():
    img = np.zeros((10, 10, 3), dtype=np.float32)
    img[:, :5] = (1.0, 0.0, 0.0)
    img[:, 5:] = (0.0, 0.0, 1.0)
    return img


def test_uniform_image_selects_everything():
    img = np.full((8, 8, 3), 0.4, dtype=np.float32)
    sel = select_patch(img, (3, 3), d=0.95, r=1)
    assert len(sel.pixels) == 64


def test_two_tone_selects_exact_half():
    sel = select_patch(two_tone(), (2, 4), d=0.95, r=1)
    want = {(x, y) for x in range(5) for y in range(10)}
    assert sel.pixels == frozenset(want)


def test_seed_membership_and_initial_seed():
    sel = select_patch(two_tone(), (1, 1), d=0.95, r=1)
    assert (1, 1) in sel.pixels
    assert sel.initial_seed == (1, 1)
    assert sel.target == (1, 1)
    assert sel.active


def test_gap_bridging_needs_radius():
    img = np.zeros((5, 9, 3), dtype=np.float32)
    img[:, :4] = (1.0, 0.0, 0.0)
    img[:, 5:] = (1.0, 0.0, 0.0)
    img[:, 4] = (0.0, 1.0, 0.0)  # 1px dissimilar gap
    near = select_patch(img, (0, 2), d=0.95, r=1)
    far = select_patch(img, (0, 2), d=0.95, r=2)
    assert all(x < 4 for x, _ in near.pixels)
    assert any(x > 4 for x, _ in far.pixels)


def test_cap_radius_bounds_extent():
    img = np.full((20, 20, 3), 0.4, dtype=np.float32)
    sel = select_patch(img, (10, 10), d=0.95, r=1, cap_radius=3.0)
    for x, y in sel.pixels:
        assert (x - 10) ** 2 + (y - 10) ** 2 <= 9.0 + 1e-9


def test_strictest_threshold_on_noise_single_pixel():
    rng = np.random.default_rng(0)
    img = rng.random((12, 12, 3)).astype(np.float32)
    sel = select_patch(img, (6, 6), d=1.0, r=1)
    assert sel.pixels == frozenset({(6, 6)})


def test_click_out_of_bounds():
    with pytest.raises(ArgumentError):
        select_patch(two_tone(), (-1, 0), d=0.95, r=1)
    with pytest.raises(ArgumentError):
        select_patch(two_tone(), (0, 10), d=0.95, r=1)


def test_bad_threshold_and_radius():
    img = two_tone()
    with pytest.raises(ArgumentError):
        select_patch(img, (0, 0), d=0.0, r=1)
    with pytest.raises(ArgumentError):
        select_patch(img, (0, 0), d=1.5, r=1)
    with pytest.raises(ArgumentError):
        select_patch(img, (0, 0), d=0.95, r=0)


def test_purity():
    img = np.random.default_rng(1).random((10, 10, 3)).astype(np.float32)
    a = select_patch(img, (4, 4), d=0.8, r=2)
    b = select_patch(img, (4, 4), d=0.8, r=2)
    assert a.pixels == b.pixels


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_monotone_in_threshold(seed):
    img = np.random.default_rng(seed).random((8, 8, 3)).astype(np.float32)
    loose = select_patch(img, (4, 4), d=0.7, r=1)
    strict = select_patch(img, (4, 4), d=0.9, r=1)
    assert strict.pixels <= loose.pixels


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_monotone_in_radius(seed):
    img = np.random.default_rng(seed).random((8, 8, 3)).astype(np.float32)
    small = select_patch(img, (4, 4), d=0.8, r=1)
    big = select_patch(img, (4, 4), d=0.8, r=2)
    assert small.pixels <= big.pixels


def test_selection_json_roundtrip():
    sel = select_patch(two_tone(), (2, 3), d=0.95, r=1)
    sel.target = (7, 3)
    d = sel.to_json_dict()
    assert d["seed"] == [2, 3] and d["target"] == [7, 3]
    back = PatchSelection.from_json_dict(d)
    assert back.pixels == sel.pixels
    assert back.seed == sel.seed and back.target == sel.target
