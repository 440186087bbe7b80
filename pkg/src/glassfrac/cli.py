"""Command-line entry point: ``glassfrac <simulate|overlay|animate|analyze|bench>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analysis
from .crack_raster import BinaryMask, rasterize
from .errors import GlassFracError
from .pbr_overlay import FOCUS_MODES
from .pipeline import (
    PipelineConfig,
    animate,
    load_annotations,
    load_rgb,
    objects_in_crack,
    run_batch,
    simulate,
)

log = logging.getLogger("glassfrac")

# flag dest -> PipelineConfig / RenderConfig field
_OVERRIDES = {
    "particles": "particle_count",
    "force": "force",
    "threshold": "stop_threshold",
    "critical_stress": "critical_stress",
    "safety_factor": "safety_factor",
    "radius": "radius_R",
    "branch_k": "branch_k",
    "seed": "seed",
    "threads": "workers",
    "stroke_width": "stroke_width",
    "dilation": "dilation",
    "alpha": "alpha",
    "blur_sigma": "blur_sigma",
    "focus": "focus_mode",
    "overlap": "overlap_threshold",
    "labels": "annotation_dir",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML/JSON file with pipeline settings")
    p.add_argument("--seed", type=int)
    p.add_argument("--particles", type=int)
    p.add_argument("--force", type=float)
    p.add_argument("--threshold", type=float, help="stop threshold")
    p.add_argument("--critical-stress", type=float)
    p.add_argument("--safety-factor", type=float)
    p.add_argument("--radius", type=float, help="neighbour radius in px")
    p.add_argument("--branch-k", type=int)


def _render_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--stroke-width", type=float)
    p.add_argument("--dilation", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--blur-sigma", type=float)
    p.add_argument("--focus", choices=FOCUS_MODES)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="glassfrac", description="Glass-fracture corruptions for image datasets.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="crack pattern JSON and crack PNG")
    _sim_flags(p)
    p.add_argument("--width", type=int, default=1242)
    p.add_argument("--height", type=int, default=375)
    p.add_argument("--stroke-width", type=float)
    p.add_argument("--out", required=True, help="pattern JSON path")
    p.add_argument("--png", help="crack image path (default: next to --out)")
    p.add_argument("--mesh-json", help="also export the triangulated mesh")

    p = sub.add_parser("overlay", help="composite cracks onto an image or a directory")
    _sim_flags(p)
    _render_flags(p)
    p.add_argument("--in", dest="input", required=True, help="image file or directory")
    p.add_argument("--out", dest="output", default="out")
    p.add_argument("--labels", help="directory of KITTI label files")
    p.add_argument("--overlap", type=float)
    p.add_argument("--threads", type=int)

    p = sub.add_parser("animate", help="frame sequence of a growing fracture")
    _sim_flags(p)
    _render_flags(p)
    p.add_argument("--in", dest="input", help="optional background image")
    p.add_argument("--width", type=int, default=1242)
    p.add_argument("--height", type=int, default=375)
    p.add_argument("--frames", type=int)
    p.add_argument("--out", dest="output", default="frames")

    p = sub.add_parser("analyze", help="distribution and mask analyses")
    asub = p.add_subparsers(dest="analysis", parser_class=_Parser)
    k = asub.add_parser("kl", help="K-L divergence of grayscale histograms between two folders")
    k.add_argument("--set-a", required=True)
    k.add_argument("--set-b", required=True)
    k.add_argument("--epsilon", type=float, default=analysis.DEFAULT_EPSILON)
    k.add_argument("--json", dest="json_out")
    o = asub.add_parser("objects", help="labelled objects lying inside a crack mask")
    o.add_argument("--labels", required=True, help="KITTI label file")
    o.add_argument("--mask", required=True, help="mask PNG")
    o.add_argument("--overlap", type=float, default=0.1)

    p = sub.add_parser("bench", help="per-stage timing report")
    p.add_argument("--config")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--particles", dest="sweep", type=int, nargs="+", default=[10_000])
    p.add_argument("--seed", type=int)
    p.add_argument("--in", dest="input", help="source image (default: synthetic 1242x375)")
    p.add_argument("--json", dest="json_out")
    return parser


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if getattr(args, "config", None) else PipelineConfig()
    changes = {}
    for flag, name in _OVERRIDES.items():
        val = getattr(args, flag, None)
        if val is not None:
            changes[name] = val
    return cfg.replace(**changes) if changes else cfg


def _cmd_simulate(args) -> int:
    cfg = _config(args)
    sim = simulate(cfg, args.width, args.height, cfg.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    sim.pattern.to_json(out)
    png = Path(args.png) if args.png else out.with_suffix(".png")
    rasterize(sim.pattern, (args.width, args.height), cfg.render.stroke_width).save_png(png)
    if args.mesh_json:
        from .mesh_gen import sample_particles, triangulate

        ps = sample_particles(cfg.particle_count, (args.width, args.height), cfg.seed)
        triangulate(ps, frame=True).to_json(args.mesh_json)
    print(json.dumps({"pattern": str(out), "png": str(png), "edges": len(sim.pattern.edges)}))
    return 0


def _cmd_overlay(args) -> int:
    cfg = _config(args)
    src = Path(args.input)
    if src.is_file():
        # single image: run the batch engine on a one-file view of its folder
        import shutil
        import tempfile

        with tempfile.TemporaryDirectory() as tmp:
            shutil.copy(src, Path(tmp) / src.name)
            manifest = run_batch(cfg.replace(input_dir=tmp, output_dir=args.output))
    else:
        manifest = run_batch(cfg.replace(input_dir=str(src), output_dir=args.output))
    ok = sum(e["status"] == "ok" for e in manifest["images"])
    print(f"processed {ok}/{len(manifest['images'])} images -> {args.output}/manifest.json")
    return 0 if ok else 1


def _cmd_animate(args) -> int:
    cfg = _config(args)
    frames = args.frames or cfg.frame_count or 10
    source = load_rgb(args.input) if args.input else None
    paths = animate(cfg, args.output, source, (args.width, args.height), frames)
    print(f"wrote {len(paths)} frames to {args.output}")
    return 0


def _cmd_analyze(args) -> int:
    if args.analysis == "kl":
        a = analysis.load_gray_dir(args.set_a)
        b = analysis.load_gray_dir(args.set_b)
        if not a or not b:
            raise GlassFracError("both sets need at least one image")
        res = analysis.compare_sets(a, b, args.epsilon)
        text = json.dumps(res, indent=2)
        if args.json_out:
            Path(args.json_out).write_text(text + "\n")
        print(text)
        print(f"{'direction':<10}{'KL (nats)':>12}\n{'A||B':<10}{res['kl_ab']:>12.6f}\n{'B||A':<10}{res['kl_ba']:>12.6f}")
        return 0
    if args.analysis == "objects":
        boxes = load_annotations(args.labels)
        hits = objects_in_crack(boxes, BinaryMask.load_png(args.mask), args.overlap)
        for b in hits:
            print(f"{b.class_label} {b.left:.2f} {b.top:.2f} {b.right:.2f} {b.bottom:.2f}")
        return 0
    build_parser().parse_args(["analyze", "--help"])
    return 2


def _cmd_bench(args) -> int:
    cfg = _config(args)
    source = load_rgb(args.input) if args.input else None
    reports = analysis.particle_sweep(cfg, args.sweep, args.runs, source)
    payload = [r.to_dict() for r in reports.values()]
    text = json.dumps(payload if len(payload) > 1 else payload[0], indent=2)
    if args.json_out:
        Path(args.json_out).write_text(text + "\n")
    print(text)
    for r in reports.values():
        print(r.table())
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "overlay": _cmd_overlay,
    "animate": _cmd_animate,
    "analyze": _cmd_analyze,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (GlassFracError, FileNotFoundError) as exc:
        print(f"glassfrac: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
