"""Rasterize crack patterns into anti-aliased intensity images and masks."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import InvalidArgumentError
from .stress_sim import CrackPattern

DEFAULT_STROKE = 2.0
DEFAULT_DILATION = 3

# Full width of the linear coverage ramp straddling the stroke boundary.
AA_RAMP = 0.3


def _draw_segments(intensity: np.ndarray, edge_index: np.ndarray, seg: np.ndarray) -> None:
    """Accumulate anti-aliased segments into ``intensity`` (max-union) in place.

    ``seg`` rows are ``x0, y0, x1, y1, w0, w1`` with the stroke width
    interpolated linearly along the segment.  ``edge_index`` records which
    segment owns each pixel.
    """
    h, w = intensity.shape
    for k in range(len(seg)):
        x0, y0, x1, y1, w0, w1 = seg[k]
        reach = 0.5 * max(w0, w1) + AA_RAMP
        c0 = max(int(np.floor(min(x0, x1) - reach)), 0)
        c1 = min(int(np.ceil(max(x0, x1) + reach)), w - 1)
        r0 = max(int(np.floor(min(y0, y1) - reach)), 0)
        r1 = min(int(np.ceil(max(y0, y1) + reach)), h - 1)
        if c0 > c1 or r0 > r1:
            continue
        yy, xx = np.mgrid[r0 : r1 + 1, c0 : c1 + 1].astype(np.float64)
        dx, dy = x1 - x0, y1 - y0
        ll = dx * dx + dy * dy
        if ll > 0:
            t = np.clip(((xx - x0) * dx + (yy - y0) * dy) / ll, 0.0, 1.0)
        else:
            t = np.zeros_like(xx)
        px = x0 + t * dx - xx
        py = y0 + t * dy - yy
        d = np.sqrt(px * px + py * py)
        half = 0.5 * (w0 + t * (w1 - w0))
        cov = np.clip((half - d) / AA_RAMP + 0.5, 0.0, 1.0)
        win = intensity[r0 : r1 + 1, c0 : c1 + 1]
        own = edge_index[r0 : r1 + 1, c0 : c1 + 1]
        better = cov > win
        win[better] = cov[better]
        own[better] = k


@dataclass(eq=False)
class CrackImage:
    intensity: np.ndarray  # (h, w) float64 in [0, 1]
    stroke_width: float
    edge_index: np.ndarray | None = None  # (h, w) int32, edge drawn at each pixel or -1

    @property
    def height(self) -> int:
        return self.intensity.shape[0]

    @property
    def width(self) -> int:
        return self.intensity.shape[1]

    def to_uint8(self) -> np.ndarray:
        return np.rint(np.clip(self.intensity, 0.0, 1.0) * 255.0).astype(np.uint8)

    def save_png(self, path) -> None:
        Image.fromarray(self.to_uint8(), mode="L").save(Path(path))


@dataclass(eq=False)
class BinaryMask:
    bits: np.ndarray  # (h, w) bool

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def to_uint8(self) -> np.ndarray:
        return self.bits.astype(np.uint8) * 255

    def save_png(self, path) -> None:
        Image.fromarray(self.to_uint8(), mode="L").save(Path(path))

    @classmethod
    def load_png(cls, path) -> "BinaryMask":
        return cls(np.asarray(Image.open(path).convert("L")) > 0)


def node_widths(pattern: CrackPattern, stroke_width: float, taper: bool = True) -> np.ndarray:
    """Per-node stroke width: ``stroke_width`` at the root down to 1 px at leaves.

    Width is interpolated on the height of the subtree below each node.
    """
    n = len(pattern.nodes)
    if not taper or n == 0 or stroke_width <= 1.0:
        return np.full(n, float(stroke_width))
    height = np.zeros(n)
    # edges are stored parents-first, so a reverse sweep sees children first
    for p, c, _ in reversed(pattern.edges):
        height[p] = max(height[p], height[c] + 1)
    top = height.max()
    if top == 0:
        return np.full(n, float(stroke_width))
    return 1.0 + (stroke_width - 1.0) * height / top


def rasterize(
    pattern: CrackPattern,
    dims: tuple[int, int],
    stroke_width: float = DEFAULT_STROKE,
    taper: bool = True,
) -> CrackImage:
    """Draw every pattern edge as an anti-aliased round-capped segment.

    ``dims`` is ``(width, height)``.  Pixel ``(col, row)`` is centred on the
    integer coordinate ``(col, row)``; coordinates outside the image are
    clipped.
    """
    width, height = int(dims[0]), int(dims[1])
    if width <= 0 or height <= 0:
        raise InvalidArgumentError(f"dims must be positive, got {dims}")
    if stroke_width < 1:
        raise InvalidArgumentError("stroke_width must be >= 1")
    intensity = np.zeros((height, width), dtype=np.float64)
    edge_index = np.full((height, width), -1, dtype=np.int32)
    if pattern.edges:
        widths = node_widths(pattern, stroke_width, taper)
        nodes = np.asarray(pattern.nodes, dtype=np.float64)
        seg = np.array(
            [
                [nodes[p, 0], nodes[p, 1], nodes[c, 0], nodes[c, 1], widths[p], widths[c]]
                for p, c, _ in pattern.edges
            ],
            dtype=np.float64,
        )
        _draw_segments(intensity, edge_index, seg)
    return CrackImage(intensity, float(stroke_width), edge_index)


def disk(radius: int) -> np.ndarray:
    r = int(radius)
    y, x = np.mgrid[-r : r + 1, -r : r + 1]
    return x * x + y * y <= r * r


def crack_mask(img: CrackImage, dilation: int = DEFAULT_DILATION) -> BinaryMask:
    """Pixels with non-zero crack intensity, dilated by a disk of ``dilation`` px."""
    if dilation < 0:
        raise InvalidArgumentError("dilation must be >= 0")
    bits = img.intensity > 0
    if dilation > 0 and bits.any():
        # dilate only the padded bounding box of the crack
        (r0, r1), (c0, c1) = _padded_bbox(bits, dilation)
        bits[r0:r1, c0:c1] = ndimage.binary_dilation(bits[r0:r1, c0:c1], structure=disk(dilation))
    return BinaryMask(bits)


def _padded_bbox(bits: np.ndarray, pad: int) -> tuple[tuple[int, int], tuple[int, int]]:
    rows = np.flatnonzero(bits.any(axis=1))
    cols = np.flatnonzero(bits.any(axis=0))
    h, w = bits.shape
    return (
        (max(rows[0] - pad, 0), min(rows[-1] + pad + 1, h)),
        (max(cols[0] - pad, 0), min(cols[-1] + pad + 1, w)),
    )
