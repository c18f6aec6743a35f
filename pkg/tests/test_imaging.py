import colorsys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flsimco.imaging import (AugmentationPolicy, CameraParams, adjust_brightness,
                             adjust_contrast, adjust_saturation, apply_motion_blur,
                             augment, augment_pi1, augment_pi2, blur_batch, blur_level,
                             hflip, hsv_to_rgb, rgb_to_hsv, shift_hue, to_grayscale)

CAM = CameraParams(exposure_time=0.012, focal_length=0.03, pixel_unit=0.001)  # constant 0.36


class ScriptedRng:
    """Stand-in generator yielding a fixed sequence of draws."""

    def __init__(self, randoms, uniforms=()):
        self.randoms = list(randoms)
        self.uniforms = list(uniforms)

    def random(self):
        return self.randoms.pop(0)

    def uniform(self, lo, hi):
        frac = self.uniforms.pop(0)
        return lo + frac * (hi - lo)


def rand_image(seed, h=8, w=8, c=3):
    return np.random.default_rng(seed).uniform(0, 1, size=(h, w, c))


def test_blur_level_zero_velocity():
    assert blur_level(0.0, CAM) == 0.0


def test_blur_level_known_constant():
    assert CAM.constant == pytest.approx(0.36, rel=1e-12)
    assert blur_level(27.78, CAM) == pytest.approx(10.0008, rel=1e-9)


def test_blur_level_linear():
    for v in (1.0, 5.5, 27.78, 41.67):
        assert blur_level(2 * v, CAM) == pytest.approx(2 * blur_level(v, CAM), rel=1e-12)


def test_blur_level_negative_velocity_rejected():
    with pytest.raises(ValueError, match="velocity"):
        blur_level(-1.0, CAM)


def test_camera_params_validated():
    with pytest.raises(ValueError):
        CameraParams(exposure_time=0.0)


def test_blur_identity_below_half_pixel():
    img = rand_image(0)
    for level in (0.0, 0.3, 0.5):
        assert np.array_equal(apply_motion_blur(img, level), img)


def test_blur_constant_image_unchanged():
    img = np.full((6, 10, 3), 0.37)
    for level in (2.0, 5.0, 9.0):
        assert np.allclose(apply_motion_blur(img, level), img, atol=1e-12)


def test_blur_impulse_spreads_to_thirds():
    img = np.zeros((5, 11, 1))
    img[2, 5, 0] = 1.0
    out = apply_motion_blur(img, 3.0)
    expected = np.zeros_like(img)
    expected[2, 4:7, 0] = 1.0 / 3.0
    assert np.allclose(out, expected, atol=1e-12)


def test_blur_preserves_interior_mean():
    # constant-padded interior content; clamped boundary equals the pad value
    img = np.full((8, 16, 3), 0.25)
    img[2:6, 5:11] = rand_image(3, 4, 6, 3) * 0.5 + 0.25
    for level in (2.0, 4.6):
        out = apply_motion_blur(img, level)
        for ch in range(3):
            # varying content sits far enough from the clamped columns
            assert out[:, :, ch].mean() == pytest.approx(img[:, :, ch].mean(), abs=1e-9)


def test_blur_batch_matches_single():
    batch = np.stack([rand_image(i) for i in range(3)])
    out = blur_batch(batch, 4.0)
    for i in range(3):
        assert np.allclose(out[i], apply_motion_blur(batch[i], 4.0), atol=0)


def test_pi1_flip_mapping():
    img = rand_image(1)
    rng = ScriptedRng(randoms=[0.0, 0.9])  # flip yes, grayscale no
    out = augment_pi1(img, rng)
    assert np.array_equal(out, img[:, ::-1, :])


def test_pi1_grayscale_red_pixel():
    img = np.zeros((2, 2, 3))
    img[..., 0] = 1.0  # pure red
    rng = ScriptedRng(randoms=[0.9, 0.0])  # no flip, grayscale yes
    out = augment_pi1(img, rng)
    assert np.allclose(out, 0.299, atol=1e-12)


def test_pi1_noop_path():
    img = rand_image(2)
    rng = ScriptedRng(randoms=[0.9, 0.9])
    assert np.array_equal(augment_pi1(img, rng), img)


def test_pi2_noop_path():
    img = rand_image(4)
    rng = ScriptedRng(randoms=[0.9, 0.9])  # no jitter, no grayscale
    assert np.array_equal(augment_pi2(img, rng), img)


def test_pi2_brightness_only():
    img = np.full((3, 3, 3), 0.5)
    # jitter yes; brightness 1.4; contrast 1.0; saturation 1.0; hue 0; grayscale no
    rng = ScriptedRng(randoms=[0.0, 0.9], uniforms=[1.0, 0.5, 0.5, 0.5])
    out = augment_pi2(img, rng)
    assert np.allclose(out, 0.7, atol=1e-12)


def test_pi2_unit_factors_identity():
    img = rand_image(5)
    rng = ScriptedRng(randoms=[0.0, 0.9], uniforms=[0.5, 0.5, 0.5, 0.5])
    out = augment_pi2(img, rng)
    assert np.allclose(out, img, atol=1e-9)


def test_augment_deterministic_given_seed():
    img = rand_image(6)
    a = augment_pi2(img, np.random.default_rng(33))
    b = augment_pi2(img, np.random.default_rng(33))
    assert np.array_equal(a, b)


def test_grayscale_weights():
    img = np.zeros((1, 1, 3))
    img[0, 0] = [1.0, 1.0, 1.0]
    assert np.allclose(to_grayscale(img), 0.299 + 0.587 + 0.114, atol=1e-12)


def test_brightness_contrast_saturation_basics():
    img = np.full((2, 2, 3), 0.5)
    assert np.allclose(adjust_brightness(img, 1.4), 0.7)
    assert np.allclose(adjust_contrast(img, 2.0), 0.5)  # constant image has no contrast
    assert np.allclose(adjust_saturation(img, 0.0), 0.5)  # gray image stays gray


def test_hue_shift_full_circle_identity():
    img = rand_image(7)
    assert np.allclose(shift_hue(img, 1.0), img, atol=1e-9)


def test_saturation_and_hue_noop_on_single_channel():
    img = rand_image(8, c=1)
    assert np.array_equal(adjust_saturation(img, 1.7), img)
    assert np.array_equal(shift_hue(img, 0.3), img)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_hsv_round_trip_matches_colorsys(seed):
    rgb = np.random.default_rng(seed).uniform(0, 1, size=3)
    ours = rgb_to_hsv(rgb.reshape(1, 1, 3))[0, 0]
    ref = colorsys.rgb_to_hsv(*rgb)
    assert np.allclose(ours, ref, atol=1e-12)
    back = hsv_to_rgb(ours.reshape(1, 1, 3))[0, 0]
    assert np.allclose(back, rgb, atol=1e-9)


def test_policy_validation():
    with pytest.raises(ValueError):
        AugmentationPolicy(name="bad", flip_prob=1.5)
    with pytest.raises(ValueError):
        AugmentationPolicy(name="bad", hue_range=-0.1)


def test_policies_share_source_image():
    img = rand_image(9)
    rng = np.random.default_rng(11)
    view1 = augment_pi1(img, rng)
    view2 = augment_pi2(img, rng)
    # independent draws, same underlying image left untouched
    assert view1.shape == view2.shape == img.shape
    assert np.array_equal(img, rand_image(9))
