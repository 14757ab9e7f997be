import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_box
from sightline.augment import (
    AugmentationSpec,
    ImageBuffer,
    color_jitter,
    compose,
    hflip,
    rotate,
    rotate_box_hull,
    sample_theta,
    scale,
)
from sightline.geometry import BoundingBox, GroundTruthBox, iou


def rand_image(rng, w, h, c=3):
    return ImageBuffer(rng.integers(0, 256, size=(h, w, c)) / 255.0)


def gt(cx, cy, w, h, c=0):
    return GroundTruthBox(c, BoundingBox(cx, cy, w, h))


# -- rotation ---------------------------------------------------------------


def test_rotate_zero_is_identity(rng):
    img = rand_image(rng, 7, 5)
    boxes = [gt(0.3, 0.4, 0.2, 0.1)]
    out, out_boxes = rotate(img, boxes, 0.0)
    assert out == img
    assert out_boxes == boxes


def test_rotate_quarter_turn_swaps_box_extent(rng):
    img = rand_image(rng, 8, 8)
    _, (b,) = rotate(img, [gt(0.5, 0.5, 0.4, 0.2)], math.pi / 2)
    assert (b.box.cx, b.box.cy, b.box.w, b.box.h) == pytest.approx((0.5, 0.5, 0.2, 0.4), abs=1e-12)


@pytest.mark.parametrize("size", [1, 2, 5, 8, 13])
def test_four_quarter_turns_restore_pixels(rng, size):
    img = rand_image(rng, size, size)
    out = img
    for _ in range(4):
        out, _ = rotate(out, [], math.pi / 2)
    assert np.array_equal(out.pixels, img.pixels)


def test_quarter_turn_is_a_pixel_permutation(rng):
    img = rand_image(rng, 6, 6, c=1)
    out, _ = rotate(img, [], math.pi / 2)
    assert sorted(out.pixels.ravel()) == sorted(img.pixels.ravel())
    # y-down quarter turn: destination (x, y) pulls source (y, W-1-x)
    assert out.pixels[0, 0, 0] == img.pixels[5, 0, 0]


def test_rotate_fills_outside_with_zero():
    img = ImageBuffer(np.ones((10, 10, 3)))
    out, _ = rotate(img, [], math.pi / 4)
    assert out.pixels[0, 0, 0] == 0.0
    assert out.pixels[5, 5, 0] == 1.0


def test_rotate_drops_boxes_below_retention():
    img = ImageBuffer(np.zeros((10, 10, 3)))
    corner_box = gt(0.05, 0.05, 0.1, 0.1)
    centre_box = gt(0.5, 0.5, 0.1, 0.1)
    _, kept = rotate(img, [corner_box, centre_box], math.pi / 4, min_box_retention=0.25)
    assert len(kept) == 1
    assert kept[0].box.cx == pytest.approx(0.5)


def _reference_hull(box, theta, w, h):
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    corners = np.array(
        [[box.cx - box.w / 2, box.cy - box.h / 2], [box.cx + box.w / 2, box.cy - box.h / 2],
         [box.cx + box.w / 2, box.cy + box.h / 2], [box.cx - box.w / 2, box.cy + box.h / 2]]
    ) * [w, h]
    centre = np.array([w / 2, h / 2])
    pts = (corners - centre) @ rot.T + centre
    return pts.min(axis=0), pts.max(axis=0)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.floats(-math.pi, math.pi), st.floats(0.05, 1.0))
def test_retention_drops_exactly_the_heavily_clipped(seed, theta, retention):
    rng = np.random.default_rng(seed)
    w, h = int(rng.integers(4, 40)), int(rng.integers(4, 40))
    boxes = [GroundTruthBox(0, random_box(rng, 0.05, 0.9)) for _ in range(6)]
    _, kept = rotate(ImageBuffer(np.zeros((h, w, 1))), boxes, theta, retention)
    expected = 0
    for b in boxes:
        lo, hi = _reference_hull(b.box, theta, w, h)
        lo = np.clip(lo, 0, [w, h])
        hi = np.clip(hi, 0, [w, h])
        area = np.prod(np.maximum(hi - lo, 0))
        original = b.box.w * w * b.box.h * h
        # skip razor-edge cases where rounding could flip the decision
        if abs(area - retention * original) < 1e-9:
            return
        expected += area >= retention * original
    assert len(kept) == expected <= len(boxes)


def _hull_contains(outer, inner, tol):
    return (outer[0] <= inner[0] + tol and outer[1] <= inner[1] + tol
            and outer[2] >= inner[2] - tol and outer[3] >= inner[3] - tol)


def test_rotate_back_hull_contains_original(rng):
    size = 100
    for _ in range(500):
        box = random_box(rng, 0.02, 0.25)
        # keep boxes near the centre so neither rotation clips
        box = BoundingBox(0.5 + (box.cx - 0.5) * 0.3, 0.5 + (box.cy - 0.5) * 0.3, box.w, box.h)
        theta = rng.uniform(-math.pi / 6, math.pi / 6)
        x1, y1, x2, y2 = rotate_box_hull(box, theta, size, size)
        hull = BoundingBox((x1 + x2) / 2 / size, (y1 + y2) / 2 / size, (x2 - x1) / size, (y2 - y1) / size)
        back = rotate_box_hull(hull, -theta, size, size)
        orig = tuple(v * size for v in (box.cx - box.w / 2, box.cy - box.h / 2, box.cx + box.w / 2, box.cy + box.h / 2))
        assert _hull_contains(back, orig, 1e-9)


def test_hull_matches_matrix_reference(rng):
    for _ in range(50):
        box = random_box(rng)
        theta = rng.uniform(-math.pi, math.pi)
        lo, hi = _reference_hull(box, theta, 30, 20)
        assert rotate_box_hull(box, theta, 30, 20) == pytest.approx((*lo, *hi), abs=1e-9)


def test_sample_theta_in_range():
    rng = np.random.default_rng(0)
    draws = [sample_theta(rng) for _ in range(1000)]
    assert all(-math.pi / 6 <= t <= math.pi / 6 for t in draws)


# -- scale ------------------------------------------------------------------


def test_scale_one_is_identity(rng):
    img = rand_image(rng, 5, 3)
    boxes = [gt(0.2, 0.3, 0.1, 0.1)]
    out, out_boxes = scale(img, boxes, 1.0)
    assert out == img and out_boxes == boxes


def test_scale_two_replicates_blocks():
    px = np.array([[0.0, 0.2], [0.4, 0.6]])
    out, _ = scale(ImageBuffer(px), [], 2.0)
    expected = np.array(
        [[0.0, 0.0, 0.2, 0.2], [0.0, 0.0, 0.2, 0.2], [0.4, 0.4, 0.6, 0.6], [0.4, 0.4, 0.6, 0.6]]
    )
    assert np.array_equal(out.pixels[:, :, 0], expected)


@given(st.floats(0.1, 4.0))
def test_scale_keeps_normalized_boxes(s):
    boxes = [gt(0.2, 0.3, 0.1, 0.15), gt(0.7, 0.6, 0.3, 0.2, 1)]
    out, out_boxes = scale(ImageBuffer(np.zeros((10, 12, 3))), boxes, s)
    assert out_boxes == boxes
    assert (out.width, out.height) == (math.floor(12 * s + 0.5), math.floor(10 * s + 0.5))


def test_scale_rejects_zero_size():
    with pytest.raises(ValueError):
        scale(ImageBuffer(np.zeros((2, 2, 3))), [], 0.1)


# -- flip -------------------------------------------------------------------


def test_hflip_involution_on_pixels(rng):
    for _ in range(20):
        img = rand_image(rng, int(rng.integers(1, 20)), int(rng.integers(1, 20)))
        twice, _ = hflip(*hflip(img, []))
        assert twice.pixels.tobytes() == img.pixels.tobytes()


def test_hflip_box_examples():
    _, (a, b) = hflip(ImageBuffer(np.zeros((2, 2, 3))), [gt(0.5, 0.4, 0.2, 0.2), gt(0.2, 0.4, 0.1, 0.1)])
    assert a.box.cx == 0.5
    assert b.box.cx == 0.8
    assert (b.box.cy, b.box.w, b.box.h) == (0.4, 0.1, 0.1)


def test_hflip_mirrors_columns():
    px = np.arange(6, dtype=float).reshape(1, 6) / 10
    out, _ = hflip(ImageBuffer(px), [])
    assert np.array_equal(out.pixels[0, :, 0], px[0, ::-1])


@given(st.integers(0, 64), st.integers(0, 64), st.integers(0, 64), st.integers(0, 64))
def test_hflip_box_involution_exact_on_lattice(a, b, c, d):
    box = gt(a / 64, b / 64, c / 64, d / 64)
    _, (once,) = hflip(ImageBuffer(np.zeros((1, 1, 1))), [box])
    _, (twice,) = hflip(ImageBuffer(np.zeros((1, 1, 1))), [once])
    assert twice == box


def test_hflip_box_involution_close_for_arbitrary(rng):
    for _ in range(200):
        box = GroundTruthBox(0, random_box(rng))
        _, (once,) = hflip(ImageBuffer(np.zeros((1, 1, 1))), [box])
        _, (twice,) = hflip(ImageBuffer(np.zeros((1, 1, 1))), [once])
        assert twice.box.cx == pytest.approx(box.box.cx, abs=1e-15)


def test_iou_invariant_under_hflip(rng):
    blank = ImageBuffer(np.zeros((1, 1, 1)))
    for _ in range(200):
        a, b = GroundTruthBox(0, random_box(rng)), GroundTruthBox(0, random_box(rng))
        _, (fa, fb) = hflip(blank, [a, b])
        assert iou(fa.box, fb.box) == pytest.approx(iou(a.box, b.box), abs=1e-12)


# -- colour -----------------------------------------------------------------


def test_jitter_identity(rng):
    img = rand_image(rng, 4, 4)
    assert color_jitter(img, 1.0, 1.0, 1.0) == img


@given(st.floats(0, 1), st.floats(0.1, 5))
def test_contrast_fixed_point_on_uniform_image(v, c):
    img = ImageBuffer(np.full((3, 4, 3), v))
    assert color_jitter(img, 1.0, c, 1.0) == img


def test_brightness_single_pixel():
    out = color_jitter(ImageBuffer(np.array([[0.5]])), 1.5, 1.0, 1.0)
    assert out.pixels[0, 0, 0] == 0.75


def test_contrast_about_mean():
    px = np.array([[0.2, 0.6]])
    out = color_jitter(ImageBuffer(px), 1.0, 2.0, 1.0)
    assert out.pixels[0, :, 0] == pytest.approx([0.0, 0.8])


def test_saturation_zero_gives_luma_gray():
    px = np.array([[[1.0, 0.0, 0.0]]])
    out = color_jitter(ImageBuffer(px), 1.0, 1.0, 0.0)
    assert out.pixels[0, 0] == pytest.approx([0.299] * 3)


def test_saturation_ignored_for_single_channel(rng):
    img = rand_image(rng, 3, 3, c=1)
    assert color_jitter(img, 1.0, 1.0, 0.0) == img


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 3), st.floats(0.1, 3), st.floats(0, 3))
def test_jitter_stays_in_unit_range(seed, b, c, s):
    img = rand_image(np.random.default_rng(seed), 5, 4)
    out = color_jitter(img, b, c, s)
    assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0


# -- composition ------------------------------------------------------------


def test_compose_identity(rng):
    img = rand_image(rng, 6, 6)
    boxes = [gt(0.4, 0.4, 0.2, 0.2)]
    out, out_boxes = compose(img, boxes, AugmentationSpec())
    assert out == img and out_boxes == boxes


def test_compose_flip_only_equals_hflip(rng):
    img = rand_image(rng, 6, 4)
    boxes = [gt(0.3, 0.4, 0.2, 0.2)]
    assert compose(img, boxes, AugmentationSpec(hflip=True)) == hflip(img, boxes)


def test_compose_equals_manual_chain(rng):
    for _ in range(25):
        img = rand_image(rng, int(rng.integers(4, 16)), int(rng.integers(4, 16)))
        boxes = [GroundTruthBox(0, random_box(rng)) for _ in range(3)]
        spec = AugmentationSpec(
            theta=float(rng.uniform(-math.pi / 6, math.pi / 6)),
            scale=float(rng.uniform(0.5, 2.0)),
            hflip=bool(rng.integers(2)),
            brightness=float(rng.uniform(0.5, 1.5)),
            contrast=float(rng.uniform(0.5, 1.5)),
            saturation=float(rng.uniform(0.0, 2.0)),
        )
        i = color_jitter(img, spec.brightness, spec.contrast, spec.saturation)
        b = boxes
        if spec.hflip:
            i, b = hflip(i, b)
        i, b = scale(i, b, spec.scale)
        i, b = rotate(i, b, spec.theta, spec.min_box_retention)
        out, out_boxes = compose(img, boxes, spec)
        assert out == i
        assert out_boxes == b
        assert len(out_boxes) <= len(boxes)
        assert 0.0 <= out.pixels.min() and out.pixels.max() <= 1.0


def test_spec_validation():
    with pytest.raises(ValueError):
        AugmentationSpec(scale=0)
    with pytest.raises(ValueError):
        AugmentationSpec(brightness=0)
    with pytest.raises(ValueError):
        AugmentationSpec(min_box_retention=0)


def test_image_buffer_validates():
    with pytest.raises(ValueError):
        ImageBuffer(np.full((2, 2, 3), 1.5))
    with pytest.raises(ValueError):
        ImageBuffer(np.zeros((2, 2, 2)))
