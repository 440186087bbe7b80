"""Microfacet shading of crack segments and compositing onto images.

Glass emits nothing, so the outgoing radiance of a crack is its reflected
part only.  Each crack segment is a single microfacet whose in-plane normal
is lit from an azimuth and a zenith direction; the mean of the two cosine
terms is the segment's incident energy and the light colour is shared out
between segments in proportion to that energy.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .crack_raster import BinaryMask, CrackImage
from .errors import InvalidArgumentError
from .stress_sim import CrackPattern

log = logging.getLogger(__name__)

FAR_FOCUS = "far_focus"
SHORT_FOCUS = "short_focus"
FOCUS_MODES = (FAR_FOCUS, SHORT_FOCUS)
DEFAULT_BLUR = {FAR_FOCUS: 2.0, SHORT_FOCUS: 4.0}
TRUNCATE = 4.0

# glass does not emit light
EMITTED_RADIANCE = 0.0


def _check_unit(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size not in (2, 3):
        raise InvalidArgumentError(f"{name} must be a 2D or 3D vector")
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise InvalidArgumentError(f"{name} must be unit length, got norm {np.linalg.norm(v)}")
    return v


def _in_plane(v: np.ndarray) -> np.ndarray:
    """Project onto the image plane and renormalise; zero if perpendicular to it."""
    p = v[:2]
    n = math.hypot(p[0], p[1])
    return p / n if n > 1e-12 else np.zeros(2)


@dataclass(frozen=True)
class LightSource:
    mean_intensity: tuple[float, float, float] = (255.0, 255.0, 255.0)
    azimuth_dir: tuple = (1.0, 0.0)
    zenith_dir: tuple = (0.0, 1.0)

    def __post_init__(self):
        rgb = tuple(float(c) for c in self.mean_intensity)
        if len(rgb) != 3 or any(c < 0 or c > 255 for c in rgb):
            raise InvalidArgumentError(f"light intensity channels must lie in [0, 255], got {rgb}")
        object.__setattr__(self, "mean_intensity", rgb)
        object.__setattr__(self, "azimuth_dir", tuple(_check_unit(self.azimuth_dir, "azimuth_dir")))
        object.__setattr__(self, "zenith_dir", tuple(_check_unit(self.zenith_dir, "zenith_dir")))


@dataclass(frozen=True)
class RenderConfig:
    light: LightSource = field(default_factory=LightSource)
    focus_mode: str = FAR_FOCUS
    blur_sigma: float | None = None  # None picks the per-mode default
    alpha: float = 0.65
    stroke_width: float = 2.0
    dilation: int = 3

    def __post_init__(self):
        if self.focus_mode not in FOCUS_MODES:
            raise InvalidArgumentError(f"focus_mode must be one of {FOCUS_MODES}")
        if self.blur_sigma is not None and self.blur_sigma < 0:
            raise InvalidArgumentError("blur_sigma must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgumentError("alpha must lie in [0, 1]")

    @property
    def sigma(self) -> float:
        return DEFAULT_BLUR[self.focus_mode] if self.blur_sigma is None else float(self.blur_sigma)


@dataclass(eq=False)
class OverlayResult:
    image: np.ndarray  # (h, w, 3) uint8
    mask: BinaryMask
    crack_intensities: list[tuple[float, float, float]]

    def shading_dict(self, pattern: CrackPattern) -> dict:
        return {
            "edges": [
                [int(p), int(c), [float(x) for x in rgb]]
                for (p, c, _), rgb in zip(pattern.edges, self.crack_intensities)
            ]
        }

    def save(self, image_path, mask_path=None, shading_path=None, pattern=None) -> None:
        from PIL import Image

        Image.fromarray(self.image, mode="RGB").save(Path(image_path))
        if mask_path is not None:
            self.mask.save_png(mask_path)
        if shading_path is not None and pattern is not None:
            Path(shading_path).write_text(json.dumps(self.shading_dict(pattern)))


def mean_incident_energy(crack_normal, light: LightSource) -> float:
    """Mean of ``|azimuth . n|`` and ``|zenith . n|``, in [0, 1]."""
    n = _check_unit(crack_normal, "crack_normal")
    n2 = _in_plane(n)
    a = _in_plane(np.asarray(light.azimuth_dir))
    z = _in_plane(np.asarray(light.zenith_dir))
    e = 0.5 * (abs(float(a @ n2)) + abs(float(z @ n2)))
    return min(1.0, max(0.0, e))


def crack_intensity(light: LightSource, energy: float, total_reflected: float) -> tuple[float, float, float]:
    if total_reflected <= 0:
        raise InvalidArgumentError("total_reflected must be positive")
    if energy < 0:
        raise InvalidArgumentError("energy must be non-negative")
    ratio = energy / total_reflected
    return tuple(min(255.0, max(0.0, c * ratio)) for c in light.mean_intensity)


def shade_pattern(pattern: CrackPattern, light: LightSource) -> list[tuple[float, float, float]]:
    """Per-edge RGB intensity; degenerate edges are skipped and left black."""
    energies: list[float | None] = []
    for p, c, _ in pattern.edges:
        d = np.asarray(pattern.nodes[c], dtype=np.float64) - np.asarray(pattern.nodes[p], dtype=np.float64)
        length = math.hypot(d[0], d[1])
        if length == 0.0:
            warnings.warn(f"zero-length crack edge ({p}, {c}) skipped", RuntimeWarning, stacklevel=2)
            energies.append(None)
            continue
        normal = np.array([-d[1], d[0]]) / length
        energies.append(mean_incident_energy(normal, light))
    total = math.fsum(e for e in energies if e is not None)
    if total <= 0:
        return [(0.0, 0.0, 0.0)] * len(energies)
    return [(0.0, 0.0, 0.0) if e is None else crack_intensity(light, e, total) for e in energies]


def _blur(img: np.ndarray, sigma: float) -> np.ndarray:
    return ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0), mode="reflect", truncate=TRUNCATE)


def _masked_blur(img: np.ndarray, bits: np.ndarray, sigma: float) -> np.ndarray:
    """Replace masked pixels of float ``img`` by their Gaussian-blurred value.

    Only the mask's bounding box, padded by the kernel radius, is filtered.
    The padded window holds the full kernel support of every masked pixel
    (or reaches the image border, where reflection is the same), so the
    result equals blurring the whole image.
    """
    from .crack_raster import _padded_bbox

    radius = int(TRUNCATE * sigma + 0.5)
    (r0, r1), (c0, c1) = _padded_bbox(bits, radius)
    out = img.copy()
    win = _blur(img[r0:r1, c0:c1], sigma)
    m = bits[r0:r1, c0:c1]
    out[r0:r1, c0:c1][m] = win[m]
    return out


def _to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def apply_focus(image: np.ndarray, mask: BinaryMask, mode: str, blur_sigma: float) -> np.ndarray:
    """Gaussian blur inside the mask (far focus) or everywhere (short focus)."""
    if blur_sigma < 0:
        raise InvalidArgumentError("blur_sigma must be >= 0")
    if mode not in FOCUS_MODES:
        raise InvalidArgumentError(f"unknown focus mode {mode!r}")
    src_dtype = image.dtype
    if blur_sigma == 0:
        return image.copy()
    if mode == FAR_FOCUS:
        if not mask.bits.any():
            return image.copy()
        blurred = _masked_blur(image.astype(np.float64), mask.bits, blur_sigma)
        return _to_uint8(blurred) if src_dtype == np.uint8 else blurred
    blurred = _blur(image.astype(np.float64), blur_sigma)
    return _to_uint8(blurred) if src_dtype == np.uint8 else blurred


def _crack_layer(crack_img: CrackImage, shading) -> np.ndarray:
    colors = np.zeros((len(shading) + 1, 3))
    if shading:
        colors[:-1] = np.asarray(shading, dtype=np.float64)
    # index -1 maps to the trailing black row
    return colors[crack_img.edge_index]


def composite(
    source: np.ndarray,
    crack_img: CrackImage,
    shading,
    mask: BinaryMask,
    cfg: RenderConfig,
) -> OverlayResult:
    """Blend the shaded crack over ``source`` and apply the focus blur.

    Far focus blends, then blurs inside the mask only; pixels outside the
    mask are copied from the source.  Short focus blurs the whole source
    first and lays the sharp crack on top.
    """
    src = np.asarray(source)
    if src.ndim != 3 or src.shape[2] != 3:
        raise InvalidArgumentError("source must be an (h, w, 3) RGB image")
    h, w = src.shape[:2]
    if crack_img.intensity.shape != (h, w) or mask.bits.shape != (h, w):
        raise InvalidArgumentError(
            f"dims mismatch: source {(w, h)}, crack {crack_img.intensity.shape[::-1]}, mask {mask.bits.shape[::-1]}"
        )
    sigma = cfg.sigma
    a = (cfg.alpha * crack_img.intensity)[..., None]
    layer = _crack_layer(crack_img, shading)

    if cfg.focus_mode == FAR_FOCUS:
        blended = src.astype(np.float64) * (1.0 - a) + layer * a
        if sigma > 0 and mask.bits.any():
            blended = _masked_blur(blended, mask.bits, sigma)
        out = _to_uint8(blended)
        out[~mask.bits] = src[~mask.bits]
    else:
        base = src.astype(np.float64)
        if sigma > 0:
            base = _blur(base, sigma)
        out = _to_uint8(base * (1.0 - a) + layer * a)
    return OverlayResult(out, mask, list(shading))
