"""Batch engine: mesh -> stress -> raster -> overlay for every input image."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from PIL import Image, UnidentifiedImageError

from .crack_raster import BinaryMask, crack_mask, rasterize
from .errors import AnnotationParseError, InvalidArgumentError
from .mesh_gen import build_neighbor_index, default_radius, sample_particles, triangulate
from .pbr_overlay import LightSource, OverlayResult, RenderConfig, composite, shade_pattern
from .stress_sim import CrackPattern, ImpactSpec, StressField, extract_crack_pattern, propagate, simulate_timesteps

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}
THREADS_ENV = "GLASSFRAC_THREADS"
DEFAULT_OVERLAP = 0.1


@dataclass
class PipelineConfig:
    particle_count: int = 10_000
    force: float = 500.0
    stop_threshold: float = 300.0
    critical_stress: float | None = None  # defaults to stop_threshold
    safety_factor: float = 1.0
    radius_R: float | None = None  # defaults to 1.5x expected spacing
    branch_k: int = 3
    render: RenderConfig = field(default_factory=RenderConfig)
    seed: int = 0
    input_dir: str | None = None
    annotation_dir: str | None = None
    output_dir: str = "out"
    frame_count: int | None = None
    workers: int = 1
    overlap_threshold: float = DEFAULT_OVERLAP

    def __post_init__(self):
        if self.particle_count < 3:
            raise InvalidArgumentError("particle_count must be >= 3")
        if self.force < 0 or self.stop_threshold < 0:
            raise InvalidArgumentError("force and stop_threshold must be non-negative")
        if self.radius_R is not None and self.radius_R <= 0:
            raise InvalidArgumentError("radius_R must be positive")
        if self.branch_k < 1:
            raise InvalidArgumentError("branch_k must be >= 1")
        if self.seed < 0:
            raise InvalidArgumentError("seed must be non-negative")
        if self.frame_count is not None and self.frame_count < 1:
            raise InvalidArgumentError("frame_count must be >= 1")
        if self.workers < 1:
            raise InvalidArgumentError("workers must be >= 1")
        if not 0.0 <= self.overlap_threshold <= 1.0:
            raise InvalidArgumentError("overlap_threshold must lie in [0, 1]")

    def radius_for(self, width: float, height: float) -> float:
        if self.radius_R is not None:
            return float(self.radius_R)
        return default_radius(self.particle_count, width, height)

    @property
    def sigma_c(self) -> float:
        return self.stop_threshold if self.critical_stress is None else self.critical_stress

    def replace(self, **changes) -> "PipelineConfig":
        render_keys = {f.name for f in dataclasses.fields(RenderConfig)}
        render_changes = {k: changes.pop(k) for k in list(changes) if k in render_keys}
        light = render_changes.pop("light", None)
        render = self.render
        if light is not None:
            render = dataclasses.replace(render, light=light if isinstance(light, LightSource) else LightSource(**light))
        if render_changes:
            render = dataclasses.replace(render, **render_changes)
        return dataclasses.replace(self, render=render, **changes)

    @classmethod
    def from_mapping(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        render = data.pop("render", None) or {}
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names - {f.name for f in dataclasses.fields(RenderConfig)}
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls()
        return cfg.replace(**render, **data)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        """Load a YAML (or JSON) mapping of config fields."""
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except yaml.YAMLError as exc:
            raise InvalidArgumentError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidArgumentError(f"{path}: config must be a mapping")
        return cls.from_mapping(data)


@dataclass(frozen=True)
class BoundingBox:
    class_label: str
    left: float
    top: float
    right: float
    bottom: float

    def __post_init__(self):
        if not (self.left < self.right and self.top < self.bottom):
            raise InvalidArgumentError(f"degenerate box {self}")

    def clipped(self, width: int, height: int) -> tuple[int, int, int, int]:
        """Integer pixel window ``[c0, c1) x [r0, r1)`` covered by the box."""
        c0 = min(max(int(math.floor(self.left)), 0), width)
        c1 = min(max(int(math.ceil(self.right)), 0), width)
        r0 = min(max(int(math.floor(self.top)), 0), height)
        r1 = min(max(int(math.ceil(self.bottom)), 0), height)
        return c0, c1, r0, r1


def load_annotations(path) -> list[BoundingBox]:
    """Parse a KITTI label file: class at field 0, box at fields 4-7."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"label file not found: {path}")
    boxes, bad = [], []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        tok = line.split()
        if not tok:
            continue
        try:
            if len(tok) < 8:
                raise ValueError("too few fields")
            boxes.append(BoundingBox(tok[0], *(float(t) for t in tok[4:8])))
        except ValueError:
            bad.append(lineno)
    if bad:
        raise AnnotationParseError(path, bad)
    return boxes


def objects_in_crack(boxes, mask: BinaryMask, overlap_threshold: float = DEFAULT_OVERLAP) -> list[BoundingBox]:
    """Boxes whose fraction of mask-covered pixels is at least ``overlap_threshold``.

    Zero-area boxes after clipping are never selected.
    """
    if not 0.0 <= overlap_threshold <= 1.0:
        raise InvalidArgumentError("overlap_threshold must lie in [0, 1]")
    h, w = mask.bits.shape
    out = []
    for box in boxes:
        c0, c1, r0, r1 = box.clipped(w, h)
        area = (c1 - c0) * (r1 - r0)
        if area <= 0:
            continue
        frac = np.count_nonzero(mask.bits[r0:r1, c0:c1]) / area
        if frac >= overlap_threshold:
            out.append(box)
    return out


def derive_seed(base_seed: int, index: int) -> int:
    return base_seed + index


def draw_impact(seed: int, width: float, height: float) -> tuple[tuple[float, float], tuple[float, float]]:
    """Random impact point and unit impact vector for one image."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    x = float(rng.uniform(0.0, width))
    y = float(rng.uniform(0.0, height))
    angle = float(rng.uniform(0.0, 2.0 * math.pi))
    return (x, y), (math.cos(angle), math.sin(angle))


@dataclass
class Simulation:
    pattern: CrackPattern
    impact: ImpactSpec
    radius: float
    seconds: float
    field: StressField | None = None


def simulate(cfg: PipelineConfig, width: int, height: int, seed: int, frames: int | None = None):
    """Run mesh + propagation for one seed.

    Returns a :class:`Simulation`; with ``frames`` set, also the growth frames.
    """
    t0 = time.perf_counter()
    ps = sample_particles(cfg.particle_count, (width, height), seed)
    idx = build_neighbor_index(ps)
    mesh = triangulate(ps, frame=True)
    radius = cfg.radius_for(width, height)
    point, vector = draw_impact(seed, width, height)
    impact = ImpactSpec(
        point,
        force=cfg.force,
        impact_vector=vector,
        critical_stress=cfg.sigma_c,
        safety_factor=cfg.safety_factor,
        stop_threshold=cfg.stop_threshold,
    )
    if frames:
        seq = simulate_timesteps(mesh, idx, impact, radius, cfg.branch_k, frames)
        return Simulation(seq[-1], impact, radius, time.perf_counter() - t0), seq
    field_ = propagate(mesh, idx, impact, radius, cfg.branch_k)
    pattern = extract_crack_pattern(field_, ps, impact, radius)
    return Simulation(pattern, impact, radius, time.perf_counter() - t0, field_)


def render_overlay(source: np.ndarray, pattern: CrackPattern, render: RenderConfig):
    """Raster + shade + composite; returns (result, crack image, stage seconds)."""
    h, w = source.shape[:2]
    t0 = time.perf_counter()
    crack_img = rasterize(pattern, (w, h), render.stroke_width)
    mask = crack_mask(crack_img, render.dilation)
    t1 = time.perf_counter()
    shading = shade_pattern(pattern, render.light) if pattern.edges else []
    result = composite(source, crack_img, shading, mask, render)
    t2 = time.perf_counter()
    return result, crack_img, {"rasterize": t1 - t0, "render": t2 - t1}


def process_image(source: np.ndarray, cfg: PipelineConfig, seed: int):
    """Full single-image pipeline; returns (OverlayResult, Simulation, timings_ms)."""
    h, w = source.shape[:2]
    sim = simulate(cfg, w, h, seed)
    result, _, stages = render_overlay(source, sim.pattern, cfg.render)
    timings = {"simulate": sim.seconds * 1e3, "rasterize": stages["rasterize"] * 1e3, "render": stages["render"] * 1e3}
    return result, sim, timings


def list_images(input_dir) -> list[Path]:
    d = Path(input_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"input directory not found: {d}")
    return sorted((p for p in d.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES), key=lambda p: p.name)


def load_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def resolve_workers(requested: int) -> int:
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            return max(1, min(requested, int(cap)))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", THREADS_ENV, cap)
    return max(1, requested)


def _run_one(path: Path, index: int, cfg: PipelineConfig, out_dir: Path) -> dict:
    seed = derive_seed(cfg.seed, index)
    entry = {"input": path.name, "seed": seed}
    try:
        source = load_rgb(path)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        log.warning("skipping unreadable image %s: %s", path, exc)
        entry.update(status="skipped", reason=f"unreadable: {exc.__class__.__name__}")
        return entry

    result, sim, timings = process_image(source, cfg, seed)
    stem = path.stem
    names = {
        "output": f"{stem}_adv.png",
        "mask": f"{stem}_mask.png",
        "pattern": f"{stem}_pattern.json",
        "shading": f"{stem}_shading.json",
    }
    result.save(out_dir / names["output"], out_dir / names["mask"], out_dir / names["shading"], sim.pattern)
    sim.pattern.to_json(out_dir / names["pattern"])
    entry.update(status="ok", **names)
    entry["impact"] = {"point": list(sim.impact.impact_point), "vector": list(sim.impact.impact_vector)}
    entry["crack_edges"] = len(sim.pattern.edges)

    if cfg.annotation_dir:
        label = Path(cfg.annotation_dir) / f"{stem}.txt"
        if label.is_file():
            boxes = load_annotations(label)
            hits = objects_in_crack(boxes, result.mask, cfg.overlap_threshold)
            entry["objects_in_crack"] = [dataclasses.asdict(b) for b in hits]
            entry["objects_total"] = len(boxes)
        else:
            entry["objects_in_crack"] = None
    entry["timings_ms"] = {k: round(v, 3) for k, v in timings.items()}
    return entry


def run_batch(cfg: PipelineConfig) -> dict:
    """Process every image of ``cfg.input_dir`` and write ``manifest.json``.

    Inputs are taken in lexicographic filename order and image ``i`` uses
    seed ``cfg.seed + i``, so results do not depend on the worker count.
    """
    if not cfg.input_dir:
        raise InvalidArgumentError("input_dir is required")
    paths = list_images(cfg.input_dir)
    if not paths:
        raise InvalidArgumentError(f"no images found in {cfg.input_dir}")
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    workers = resolve_workers(cfg.workers)
    if workers == 1:
        entries = [_run_one(p, i, cfg, out_dir) for i, p in enumerate(paths)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(lambda a: _run_one(a[1], a[0], cfg, out_dir), enumerate(paths)))

    manifest = {"base_seed": cfg.seed, "particle_count": cfg.particle_count, "images": entries}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def animate(cfg: PipelineConfig, out_dir, source: np.ndarray | None = None, size=(1242, 375), frames: int = 10) -> list[Path]:
    """Write the growth of one fracture as numbered PNG frames.

    With a ``source`` image each frame is a full overlay, otherwise the bare
    crack intensity image of the given ``size`` (width, height).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if source is not None:
        h, w = source.shape[:2]
    else:
        w, h = size
    sim, seq = simulate(cfg, w, h, cfg.seed, frames=frames)
    written = []
    for t, pattern in enumerate(seq):
        path = out_dir / f"frame_{t:03d}.png"
        if source is not None:
            result, _, _ = render_overlay(source, pattern, cfg.render)
            Image.fromarray(result.image, mode="RGB").save(path)
        else:
            rasterize(pattern, (w, h), cfg.render.stroke_width).save_png(path)
        written.append(path)
    sim.pattern.to_json(out_dir / "pattern.json")
    return written


def overlay_result_for(source: np.ndarray, cfg: PipelineConfig, seed: int) -> OverlayResult:
    return process_image(source, cfg, seed)[0]
