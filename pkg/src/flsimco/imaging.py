"""Motion blur from vehicle speed, plus the two contrastive view pipelines.

Images are float64 arrays of shape (H, W, C) with values in [0, 1],
channels interleaved. Blur is a horizontal box smear whose length grows
linearly with speed through the camera constant; the two augmentation
pipelines produce the anchor and positive views of the same source image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] < 1 or img.shape[1] < 1 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W, C) image with C in {{1, 3}}, got shape {img.shape}")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("pixel values must lie in [0, 1]")
    return img


@dataclass(frozen=True)
class CameraParams:
    """Camera constant pieces: blur pixels = (exposure * focal / pixel_unit) * speed."""

    exposure_time: float = 0.012   # s
    focal_length: float = 0.03    # m
    pixel_unit: float = 0.001     # m*s per pixel

    def __post_init__(self):
        if min(self.exposure_time, self.focal_length, self.pixel_unit) <= 0:
            raise ValueError("camera parameters must be positive")

    @property
    def constant(self) -> float:
        """px per (m/s)."""
        return self.exposure_time * self.focal_length / self.pixel_unit


def blur_level(velocity: float, cam: CameraParams) -> float:
    """Pixels of horizontal smear for a vehicle moving at `velocity` m/s."""
    if velocity < 0:
        raise ValueError(f"velocity must be nonnegative, got {velocity}")
    return cam.constant * velocity


def _box_kernel_span(level: float) -> tuple[int, int, int]:
    """(length, taps left, taps right) of the centered box kernel for a blur level."""
    n = max(1, int(round(level)))
    left = (n - 1) // 2
    right = n // 2  # even lengths take the extra tap on the right
    return n, left, right


def apply_motion_blur(img: np.ndarray, level: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """Horizontal box convolution of length max(1, round(level)), edge-clamped.

    Deterministic; the rng parameter exists for interface symmetry with the
    augmentations and is unused.
    """
    img = check_image(img)
    return _blur_along_width(img, level)


def blur_batch(batch: np.ndarray, level: float) -> np.ndarray:
    """Same blur applied to a (N, H, W, C) stack."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 4:
        raise ValueError(f"expected (N, H, W, C) batch, got shape {batch.shape}")
    return _blur_along_width(batch, level)


def _blur_along_width(arr: np.ndarray, level: float) -> np.ndarray:
    n, left, right = _box_kernel_span(level)
    if n == 1:
        return arr.copy()
    axis = arr.ndim - 2  # width axis for (..., H, W, C)
    padded = np.pad(arr, [(left, right) if a == axis else (0, 0) for a in range(arr.ndim)], mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, n, axis=axis)
    out = windows.sum(axis=-1) / n
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class AugmentationPolicy:
    """Probabilities and ranges for one view pipeline."""

    name: str
    flip_prob: float = 0.0
    jitter_prob: float = 0.0
    grayscale_prob: float = 0.0
    brightness_range: float = 0.0
    contrast_range: float = 0.0
    saturation_range: float = 0.0
    hue_range: float = 0.0

    def __post_init__(self):
        for prob in (self.flip_prob, self.jitter_prob, self.grayscale_prob):
            if not 0.0 <= prob <= 1.0:
                raise ValueError(f"probabilities must lie in [0, 1], got {prob}")
        for rng_ in (self.brightness_range, self.contrast_range, self.saturation_range, self.hue_range):
            if rng_ < 0:
                raise ValueError("jitter ranges must be nonnegative")

    @classmethod
    def pi1(cls) -> "AugmentationPolicy":
        return cls(name="pi1", flip_prob=0.5, grayscale_prob=0.2)

    @classmethod
    def pi2(cls) -> "AugmentationPolicy":
        return cls(name="pi2", jitter_prob=0.8, grayscale_prob=0.4,
                   brightness_range=0.4, contrast_range=0.4,
                   saturation_range=0.4, hue_range=0.4)


def hflip(img: np.ndarray) -> np.ndarray:
    return img[:, ::-1, :].copy()


def luminance(img: np.ndarray) -> np.ndarray:
    if img.shape[2] == 1:
        return img[:, :, 0]
    return img @ LUMA_WEIGHTS


def to_grayscale(img: np.ndarray) -> np.ndarray:
    if img.shape[2] == 1:
        return img.copy()
    luma = luminance(img)
    return np.repeat(luma[:, :, None], img.shape[2], axis=2)


def adjust_brightness(img: np.ndarray, factor: float) -> np.ndarray:
    return np.clip(img * factor, 0.0, 1.0)


def adjust_contrast(img: np.ndarray, factor: float) -> np.ndarray:
    mean = luminance(img).mean()
    return np.clip(mean + factor * (img - mean), 0.0, 1.0)


def adjust_saturation(img: np.ndarray, factor: float) -> np.ndarray:
    if img.shape[2] == 1:
        return img.copy()
    gray = luminance(img)[:, :, None]
    return np.clip(gray + factor * (img - gray), 0.0, 1.0)


def rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    maxc = img.max(axis=-1)
    minc = img.min(axis=-1)
    delta = maxc - minc
    v = maxc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(int) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def shift_hue(img: np.ndarray, shift: float) -> np.ndarray:
    if img.shape[2] == 1:
        return img.copy()
    hsv = rgb_to_hsv(np.clip(img, 0.0, 1.0))
    hsv[..., 0] = (hsv[..., 0] + shift) % 1.0
    return np.clip(hsv_to_rgb(hsv), 0.0, 1.0)


def augment(img: np.ndarray, policy: AugmentationPolicy, rng: np.random.Generator) -> np.ndarray:
    """Apply one view pipeline. Deterministic given (image, rng state).

    Jitter factors are drawn in a fixed order (brightness, contrast,
    saturation, hue) because the operations do not commute.
    """
    img = check_image(img)
    out = img
    if policy.flip_prob > 0 and rng.random() < policy.flip_prob:
        out = hflip(out)
    if policy.jitter_prob > 0 and rng.random() < policy.jitter_prob:
        b = rng.uniform(1.0 - policy.brightness_range, 1.0 + policy.brightness_range)
        c = rng.uniform(1.0 - policy.contrast_range, 1.0 + policy.contrast_range)
        s = rng.uniform(1.0 - policy.saturation_range, 1.0 + policy.saturation_range)
        h = rng.uniform(-policy.hue_range, policy.hue_range)
        out = adjust_brightness(out, b)
        out = adjust_contrast(out, c)
        out = adjust_saturation(out, s)
        out = shift_hue(out, h)
    if policy.grayscale_prob > 0 and rng.random() < policy.grayscale_prob:
        out = to_grayscale(out)
    return np.clip(out, 0.0, 1.0)


def augment_pi1(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return augment(img, AugmentationPolicy.pi1(), rng)


def augment_pi2(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return augment(img, AugmentationPolicy.pi2(), rng)
