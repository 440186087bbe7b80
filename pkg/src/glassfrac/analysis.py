"""Distribution comparison between image sets and per-stage timing statistics.

Image sets are compared through pooled 256-bin grayscale histograms with
additive smoothing of the bin frequencies; the divergence uses the natural logarithm.
"""
from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidArgumentError

BINS = 256
DEFAULT_EPSILON = 1e-6
STAGES = ("simulate", "rasterize", "render")


@dataclass(frozen=True, eq=False)
class IntensityDistribution:
    bins: np.ndarray
    sample_count: int
    smoothing_epsilon: float


def to_gray(img: np.ndarray) -> np.ndarray:
    """8-bit luma (ITU-R 601 weights, as PIL's ``L`` mode)."""
    img = np.asarray(img)
    if img.ndim == 2:
        return img.astype(np.uint8, copy=False)
    return np.asarray(Image.fromarray(img[..., :3].astype(np.uint8), mode="RGB").convert("L"))


def load_gray_dir(path) -> list[np.ndarray]:
    from .pipeline import list_images

    out = []
    for p in list_images(path):
        with Image.open(p) as im:
            out.append(np.asarray(im.convert("L")))
    return out


def intensity_histogram(images, epsilon: float = DEFAULT_EPSILON) -> IntensityDistribution:
    images = list(images)
    if not images:
        raise InvalidArgumentError("need at least one image")
    if epsilon <= 0:
        raise InvalidArgumentError("epsilon must be positive")
    counts = np.zeros(BINS, dtype=np.int64)
    for img in images:
        counts += np.bincount(to_gray(img).ravel(), minlength=BINS)[:BINS]
    n = int(counts.sum())
    # smoothing on frequencies, not counts, so pooling copies of a set is exact
    probs = (counts / n + epsilon) / (1.0 + BINS * epsilon)
    return IntensityDistribution(probs, n, epsilon)


def kl_divergence(p: IntensityDistribution, q: IntensityDistribution) -> float:
    """``sum p_i ln(p_i / q_i)`` in nats."""
    pb = np.asarray(getattr(p, "bins", p), dtype=np.float64)
    qb = np.asarray(getattr(q, "bins", q), dtype=np.float64)
    if pb.shape != qb.shape:
        raise InvalidArgumentError(f"bin count mismatch: {pb.shape} vs {qb.shape}")
    if (pb <= 0).any() or (qb <= 0).any():
        raise InvalidArgumentError("distributions must be strictly positive (smoothed)")
    return max(0.0, math.fsum(pb * np.log(pb / qb)))


def compare_sets(set_a, set_b, epsilon: float = DEFAULT_EPSILON) -> dict:
    p = intensity_histogram(set_a, epsilon)
    q = intensity_histogram(set_b, epsilon)
    return {"kl_ab": kl_divergence(p, q), "kl_ba": kl_divergence(q, p), "bins": BINS, "epsilon": epsilon, "log_base": "e"}


@dataclass
class StageStats:
    min: float
    max: float
    mean: float


@dataclass
class TimingReport:
    particle_count: int
    runs: int
    stages: dict[str, StageStats]

    def to_dict(self) -> dict:
        return {"particle_count": self.particle_count, "runs": self.runs,
                "stages": {k: asdict(v) for k, v in self.stages.items()}, "unit": "ms"}

    def table(self) -> str:
        lines = [f"particles={self.particle_count} runs={self.runs} (ms)",
                 f"{'stage':<10}{'min':>10}{'mean':>10}{'max':>10}"]
        for k, s in self.stages.items():
            lines.append(f"{k:<10}{s.min:>10.2f}{s.mean:>10.2f}{s.max:>10.2f}")
        return "\n".join(lines)


def synthetic_source(width: int = 1242, height: int = 375) -> np.ndarray:
    """Deterministic road-like gradient used when no image is supplied."""
    y, x = np.mgrid[0:height, 0:width]
    r = (60 + 120 * y / max(height - 1, 1)).astype(np.uint8)
    g = (80 + 100 * x / max(width - 1, 1)).astype(np.uint8)
    b = ((x // 32 + y // 32) % 2 * 40 + 100).astype(np.uint8)
    return np.dstack([r, g, b])


def timing_report(cfg, runs: int, source: np.ndarray | None = None) -> TimingReport:
    """Time the pipeline stages over ``runs`` seeds after one discarded warm-up."""
    from .pipeline import process_image

    if runs < 1:
        raise InvalidArgumentError("runs must be >= 1")
    src = synthetic_source() if source is None else source
    process_image(src, cfg, cfg.seed)  # warm-up
    samples: dict[str, list[float]] = {k: [] for k in STAGES}
    for r in range(runs):
        _, _, t = process_image(src, cfg, cfg.seed + r)
        for k in STAGES:
            samples[k].append(t[k])
    stages = {k: StageStats(min(v), max(v), min(max(v), max(min(v), statistics.fmean(v)))) for k, v in samples.items()}
    return TimingReport(cfg.particle_count, runs, stages)


def particle_sweep(cfg, counts, runs: int = 5, source: np.ndarray | None = None) -> dict[int, TimingReport]:
    return {n: timing_report(cfg.replace(particle_count=n), runs, source) for n in counts}

