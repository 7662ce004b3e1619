"""Command-line entry point.

Exit codes: 0 success, 1 usage, 2 I/O failure, 3 malformed data or invalid
geometry, 4 numeric failure (training divergence).

Images are read as binary PGM/PPM only; convert aerial TIFF/PNG tiles with
any external tool (for example ``convert in.png out.ppm``) before ``split``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (DOTA_CLASSES, merge_patch_detections, parse_annotations, read_manifest, remap_annotations,
                   split_patches, write_annotations, write_manifest)
from .errors import DivergenceError, GeometryError, ParseError, QuadDetError
from .evaluation import GroundTruth, collect_heatmap, evaluate
from .geometry import Quad
from .postprocess import (CONF_THRESHOLD, NMS_THRESHOLD, TOP_K, parse_detections, postprocess,
                          write_detections)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4
PNM_SUFFIXES = (".pgm", ".ppm", ".pnm")
STRATEGY_CHOICES = ("direct", "offset", "iterative", "center-to-corner")
MODE_CHOICES = ("none", "axis-aligned", "oriented")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _categories(arg) -> tuple:
    if arg is None:
        return DOTA_CLASSES
    if arg == "toy":
        from .toy import TOY_CLASSES
        return TOY_CLASSES
    path = Path(arg)
    if path.is_file():
        return tuple(line.strip() for line in path.read_text().splitlines() if line.strip())
    return tuple(s for s in arg.split(",") if s)


def _name_list(arg: str, choices) -> tuple:
    if arg == "all":
        return tuple(choices)
    names = tuple(s.strip() for s in arg.split(",") if s.strip())
    if not names:
        raise UsageError(f"empty list {arg!r}")
    return names


def _int_list(arg: str) -> tuple:
    out = []
    for part in arg.split(","):
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part.strip():
            out.append(int(part))
    return tuple(out)


def _emit(lines, out=None) -> None:
    text = "".join(line + "\n" for line in lines)
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# -- data commands ---------------------------------------------------------------

def _image_size(image_dir, image_id, default):
    from .raster import read_pnm_size

    if image_dir is not None:
        for suffix in PNM_SUFFIXES:
            p = Path(image_dir) / f"{image_id}{suffix}"
            if p.exists():
                return read_pnm_size(p)
    if default is None:
        raise ParseError(f"no PNM image for {image_id!r} and no --image-size given")
    return tuple(default)


def cmd_split(args) -> int:
    from .raster import read_pnm, write_pnm

    categories = _categories(args.categories)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for label in sorted(Path(args.labels).glob("*.txt")):
        image_id = label.stem
        w, h = _image_size(args.images, image_id, args.image_size)
        ann = parse_annotations(label.read_text(), image_id, categories, (w, h))
        image = None
        for p in split_patches(w, h, args.size, args.overlap):
            pid = p.patch_id(image_id)
            (out / f"{pid}.txt").write_text(write_annotations(remap_annotations(ann, p, pid)))
            if args.images is not None:
                src = next((Path(args.images) / f"{image_id}{s}" for s in PNM_SUFFIXES
                            if (Path(args.images) / f"{image_id}{s}").exists()), None)
                if src is not None:
                    image = read_pnm(src) if image is None else image
                    write_pnm(out / f"{pid}{src.suffix}", image[p.y:p.y + p.height, p.x:p.x + p.width])
            rows.append((image_id, p))
    Path(args.manifest).write_text(write_manifest(rows))
    _emit([f"# split size={args.size} overlap={args.overlap}", "image_id,patches"]
          + [f"{iid},{sum(1 for r in rows if r[0] == iid)}" for iid in dict.fromkeys(r[0] for r in rows)])
    return EXIT_OK


def cmd_remap(args) -> int:
    categories = _categories(args.categories)
    manifest = read_manifest(Path(args.manifest).read_text())
    by_patch = {p.patch_id(iid): (iid, p) for iid, p in manifest}
    dets = parse_detections(Path(args.dets).read_text(), categories)
    grouped: dict = {}
    for d in dets:
        if d.image_id not in by_patch:
            raise ParseError(f"detection for unknown patch {d.image_id!r}")
        grouped.setdefault(d.image_id, []).append(d)
    merged = []
    for iid in dict.fromkeys(i for i, _ in manifest):
        pids = [pid for pid, (img, _) in by_patch.items() if img == iid and pid in grouped]
        per_patch = [[_with_image(d, iid) for d in grouped[pid]] for pid in pids]
        merged.extend(merge_patch_detections(per_patch, [by_patch[pid][1] for pid in pids], args.t_nms))
    Path(args.out).write_text(write_detections(merged, categories))
    _emit([f"# remap t_nms={args.t_nms}", "detections_in,detections_out", f"{len(dets)},{len(merged)}"])
    return EXIT_OK


def _with_image(d, image_id):
    from dataclasses import replace
    return replace(d, image_id=image_id)


def cmd_nms(args) -> int:
    categories = _categories(args.categories)
    dets = parse_detections(Path(args.dets).read_text(), categories)
    if args.rescore:
        dets = [d.adjusted() for d in dets]
    grouped: dict = {}
    for d in dets:
        grouped.setdefault(d.image_id, []).append(d)
    kept = []
    for iid in grouped:
        kept.extend(postprocess(grouped[iid], args.threshold, args.top_k, args.t_nms))
    Path(args.out).write_text(write_detections(kept, categories))
    _emit([f"# nms threshold={args.threshold} top_k={args.top_k} t_nms={args.t_nms}",
           "detections_in,detections_out", f"{len(dets)},{len(kept)}"])
    return EXIT_OK


def _load_eval_inputs(args):
    categories = _categories(args.categories)
    dets = parse_detections(Path(args.dets).read_text(), categories)
    gt_dir = Path(args.gt)
    if not gt_dir.is_dir():
        raise FileNotFoundError(f"ground-truth directory not found: {gt_dir}")
    gts = {}
    for f in sorted(gt_dir.glob("*.txt")):
        try:
            ann = parse_annotations(f.read_text(), f.stem, categories)
        except ParseError as exc:
            raise ParseError(f"{f.name}: {exc}") from None
        gts[f.stem] = [GroundTruth(o.quad, ann.class_id(o.class_name), o.difficult) for o in ann.objects]
    by_image: dict = {}
    for d in dets:
        by_image.setdefault(d.image_id, []).append(d)
    return categories, by_image, gts


def _write_heatmaps(matches, categories, out_dir, per_class: bool):
    from .plotting import heatmap_figure
    from .raster import to_bytes, write_pnm

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grids = collect_heatmap(matches, per_class=per_class)
    if not per_class:
        grids = {"all": grids}
    for key, grid in grids.items():
        name = categories[key] if key != "all" else "all"
        stem = out / f"heatmap_{name}"
        Path(f"{stem}.txt").write_text(grid.to_text())
        write_pnm(f"{stem}.pgm", to_bytes(grid.counts[::-1].astype(np.float64), 0.0,
                                          max(1.0, float(grid.counts.max()))))
        heatmap_figure(grid.counts, f"{stem}.png", name)
    return grids


def cmd_eval(args) -> int:
    categories, dets, gts = _load_eval_inputs(args)
    aps, m, pooled = evaluate(dets, gts, args.iou)
    lines = [f"# eval iou={args.iou}", "class,ap"]
    lines += [f"{categories[c]},{aps[c]:.6f}" for c in sorted(aps)]
    lines.append(f"mAP,{m:.6f}")
    if args.heatmap:
        _write_heatmaps(pooled, categories, args.heatmap, per_class=True)
    _emit(lines)
    return EXIT_OK


def cmd_heatmap(args) -> int:
    categories, dets, gts = _load_eval_inputs(args)
    _, _, pooled = evaluate(dets, gts, args.iou)
    grids = _write_heatmaps(pooled, categories, args.out, per_class=args.per_class)
    lines = [f"# heatmap iou={args.iou}", "class,true_positives"]
    lines += [f"{categories[k] if k != 'all' else 'all'},{g.total}" for k, g in grids.items()]
    _emit(lines)
    return EXIT_OK


def cmd_centerness_render(args) -> int:
    from .plotting import centerness_figure
    from .raster import to_bytes, write_pnm
    from .render import centerness_grid

    quad = Quad.from_flat(args.quad)
    values, extent = centerness_grid(quad, args.mode, args.alpha, args.pixel)
    write_pnm(args.out, to_bytes(values, 0.0, 1.0))
    png = Path(args.out).with_suffix(".png")
    centerness_figure(values, extent, png, f"{args.mode}, alpha={args.alpha:g}")
    r, c = np.unravel_index(int(np.argmax(values)), values.shape)
    x = extent[0] + (c + 0.5) * args.pixel
    y = extent[2] + (r + 0.5) * args.pixel
    _emit([f"# centerness-render mode={args.mode} alpha={args.alpha:g}", "rows,cols,max,argmax_x,argmax_y",
           f"{values.shape[0]},{values.shape[1]},{values.max():.6f},{x:g},{y:g}"])
    return EXIT_OK


# -- toy commands ------------------------------------------------------------------

def _toy_base(args):
    from .toy import TrainConfig

    kw = {"iterations": args.iterations, "train_scenes": args.train_scenes, "val_scenes": args.val_scenes,
          "alpha": args.alpha, "width": args.width}
    return TrainConfig(**kw)


def _seeds(args) -> tuple:
    return tuple(range(args.seed, args.seed + args.n_seeds))


def _progress(rec):
    c = rec.config
    print(f"# done strategy={c.strategy} mode={c.centerness} depth={c.tower_layers} seed={c.seed} "
          f"map={rec.map:.4f}", file=sys.stderr)


def cmd_toytrain(args) -> int:
    from .toy.experiments import run_comparison
    from .toy.train import save_checkpoint

    strategies = _name_list(args.strategies, STRATEGY_CHOICES)
    modes = _name_list(args.modes, MODE_CHOICES)
    for m in modes:
        if m not in MODE_CHOICES:
            raise UsageError(f"unknown center-ness mode {m!r}")
    seeds = _seeds(args)
    report = run_comparison(strategies, modes, seeds, _toy_base(args), progress=_progress if args.verbose else None)
    if args.out:
        report.write(args.out)
    if args.checkpoint:
        if len(report.rows) != 1:
            raise UsageError("--checkpoint needs exactly one (strategy, mode, seed) run")
        from .toy.experiments import run_config
        from dataclasses import replace
        r = report.rows[0]
        rec = run_config(replace(report.base, strategy=r["strategy"], centerness=r["mode"], seed=r["seed"]))
        save_checkpoint(rec.model, args.checkpoint)
    sys.stdout.write(f"# toytrain seed={args.seed}\n" + report.to_csv())
    return EXIT_OK


def cmd_capacity_sweep(args) -> int:
    from .toy.experiments import capacity_sweep

    report = capacity_sweep(_int_list(args.depths), _seeds(args), _toy_base(args),
                            progress=_progress if args.verbose else None)
    if args.out:
        report.write(args.out)
    sys.stdout.write(f"# capacity-sweep seed={args.seed}\n" + report.to_csv())
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def _toy_flags(p):
    p.add_argument("--seed", type=int, default=0, help="first seed (default 0)")
    p.add_argument("--n-seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--iterations", type=int, default=6000)
    p.add_argument("--train-scenes", type=int, default=200)
    p.add_argument("--val-scenes", type=int, default=48)
    p.add_argument("--alpha", type=float, default=4.0)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--out", help="directory for CSV reports and figures")
    p.add_argument("--verbose", action="store_true", help="log each finished run to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quaddet", description="Oriented-quadrilateral detection toolkit.")
    parser.add_argument("--version", action="version", version=f"quaddet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    cats = {"help": "category names: comma list, a file with one per line, or 'toy' (default: DOTA 1.0)"}

    p = sub.add_parser("split", help="tile annotated images into overlapping patches")
    p.add_argument("--labels", required=True, help="directory of <image_id>.txt annotation files")
    p.add_argument("--images", help="directory of <image_id>.pgm/.ppm rasters (sizes and crops)")
    p.add_argument("--image-size", type=int, nargs=2, metavar=("W", "H"), help="size when no raster exists")
    p.add_argument("--size", type=int, default=1024)
    p.add_argument("--overlap", type=int, default=200)
    p.add_argument("--out", required=True, help="output directory for per-patch files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--categories", **cats)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("remap", help="merge per-patch detections back into image coordinates")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dets", required=True, help="detection dump keyed by patch id")
    p.add_argument("--out", required=True)
    p.add_argument("--t-nms", type=float, default=NMS_THRESHOLD)
    p.add_argument("--categories", **cats)
    p.set_defaults(func=cmd_remap)

    p = sub.add_parser("eval", help="per-class AP and mAP")
    p.add_argument("--dets", required=True)
    p.add_argument("--gt", required=True, help="directory of <image_id>.txt annotation files")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--heatmap", help="directory for per-class confidence-vs-IoU heatmaps")
    p.add_argument("--categories", **cats)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("nms", help="threshold, top-k and rotated NMS per image")
    p.add_argument("--dets", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=CONF_THRESHOLD)
    p.add_argument("--top-k", type=int, default=TOP_K)
    p.add_argument("--t-nms", type=float, default=NMS_THRESHOLD)
    p.add_argument("--rescore", action="store_true", help="recompute s = sqrt(p * o) before ranking")
    p.add_argument("--categories", **cats)
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("centerness-render", help="grey map of center-ness over a quad's hull")
    p.add_argument("--quad", type=float, nargs=8, required=True, metavar="V")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--mode", choices=("oriented", "axis"), default="oriented")
    p.add_argument("--pixel", type=float, default=1.0)
    p.add_argument("--out", required=True, help="PGM path; a PNG figure is written next to it")
    p.set_defaults(func=cmd_centerness_render)

    p = sub.add_parser("heatmap", help="confidence-vs-IoU heatmap of true positives")
    p.add_argument("--dets", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--per-class", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--categories", **cats)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("toytrain", help="train the toy detector over strategies x center-ness modes x seeds")
    _toy_flags(p)
    p.add_argument("--strategies", default="direct", help=f"comma list or 'all' of {', '.join(STRATEGY_CHOICES)}")
    p.add_argument("--modes", default="oriented", help=f"comma list or 'all' of {', '.join(MODE_CHOICES)}")
    p.add_argument("--checkpoint", help="save the trained parameters (single run only)")
    p.set_defaults(func=cmd_toytrain)

    p = sub.add_parser("capacity-sweep", help="toy mAP against tower depth (direct strategy)")
    _toy_flags(p)
    p.add_argument("--depths", default="1..8", help="comma list and/or ranges, e.g. 1..3,8")
    p.set_defaults(func=cmd_capacity_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParseError, GeometryError, QuadDetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
