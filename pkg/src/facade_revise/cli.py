"""Command-line front end.

    facade-revise detect-lines IMAGE --out lines.json
    facade-revise revise IMAGE MASK --palette palette.json --out revised.png
    facade-revise eval PRED_DIR GT_DIR --palette palette.json --out metrics.json
    facade-revise synth --out DIR --count 10 --seed 0
    facade-revise segment-toy IMAGE --out mask.png
    facade-revise pipeline config.json

Exit codes: 0 success, 2 I/O failure, 3 malformed or mismatched input,
4 unknown window class.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import lafr, metrics, raster, render, synth, vit
from .lsd import LsdParams, save_segments

log = logging.getLogger("facade_revise")

EXIT_IO = 2
EXIT_INPUT = 3
EXIT_CLASS = 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code

    def __reduce__(self):
        return (CliError, (self.code, str(self)))


def _write_json(path, doc) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _read_image(path) -> np.ndarray:
    try:
        return raster.load_png(path)
    except FileNotFoundError:
        raise CliError(EXIT_IO, f"no such file: {path}")
    except raster.RasterError as exc:
        raise CliError(EXIT_INPUT, str(exc))


def _read_mask(path, num_classes=None) -> np.ndarray:
    try:
        return raster.load_mask(path, num_classes)
    except FileNotFoundError:
        raise CliError(EXIT_IO, f"no such file: {path}")
    except raster.RasterError as exc:
        raise CliError(EXIT_INPUT, f"{path}: {exc}")


def _read_palette(path) -> dict:
    if path is None:
        return {name: i for i, name in enumerate(synth.FACADE_CLASSES)}
    try:
        return raster.load_palette(path)
    except FileNotFoundError:
        raise CliError(EXIT_IO, f"no such file: {path}")
    except (raster.RasterError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_INPUT, f"bad palette {path}: {exc}")


def _class_names(palette: dict) -> list:
    return [name for name, _ in sorted(palette.items(), key=lambda kv: kv[1])]


def _window_index(palette: dict, name: str) -> int:
    if name not in palette:
        raise CliError(EXIT_CLASS, f"window class {name!r} not in palette")
    return palette[name]


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise CliError(EXIT_IO, f"no such file: {path}")
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_INPUT, f"bad config {path}: {exc}")
    if not isinstance(doc, dict):
        raise CliError(EXIT_INPUT, f"config {path} must be a flat JSON object")
    return doc


def _merged(config: dict, args, keys) -> dict:
    """Config values overridden by any flag the user actually passed."""
    out = dict(config)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _lafr_params(cfg: dict, window_class: int) -> lafr.LafrParams:
    try:
        return lafr.LafrParams(
            delta=float(cfg.get("delta", 20.0)),
            theta=float(cfg.get("theta", 0.1)),
            window_class=window_class,
            min_component_area=int(cfg.get("min_component_area", 30)),
            overlap_ratio=float(cfg.get("overlap_ratio", 0.3)),
            morphology_radius=int(cfg.get("morph_radius", 1)),
            morphology_iterations=int(cfg.get("morph_iterations", 2)),
        )
    except lafr.LafrError as exc:
        raise CliError(EXIT_INPUT, str(exc))


def _lsd_params(cfg: dict) -> LsdParams:
    return LsdParams(scale=float(cfg.get("lsd_scale", 0.8)), nfa_epsilon=float(cfg.get("nfa_epsilon", 1.0)))


# -- commands ---------------------------------------------------------------

def cmd_detect_lines(args) -> int:
    img = _read_image(args.image)
    cfg = _merged({}, args, ("lsd_scale", "nfa_epsilon"))
    params = lafr.LafrParams()
    try:
        segs = lafr.acquire_lines(img, params, _lsd_params(cfg))
    except raster.RasterError as exc:
        raise CliError(EXIT_INPUT, str(exc))
    save_segments(args.out, segs)
    log.info("%d segments -> %s", len(segs), args.out)
    return 0


def cmd_revise(args) -> int:
    cfg = _merged(_load_config(args.config), args,
                  ("delta", "theta", "window_class", "min_component_area", "overlap_ratio",
                   "lsd_scale", "nfa_epsilon"))
    palette = _read_palette(args.palette or cfg.get("palette"))
    k = len(palette)
    window = _window_index(palette, cfg.get("window_class", "window"))
    img = _read_image(args.image)
    mask = _read_mask(args.mask, k)
    if img.shape[:2] != mask.shape:
        raise CliError(EXIT_INPUT, f"image {img.shape[:2]} and mask {mask.shape} differ in size")
    segments = None
    if args.lines:
        try:
            from .lsd import load_segments
            segments = load_segments(args.lines)
        except FileNotFoundError:
            raise CliError(EXIT_IO, f"no such file: {args.lines}")
        except (raster.RasterError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_INPUT, str(exc))
    params = _lafr_params(cfg, window)
    result = lafr.run_lafr(img, mask, params, _lsd_params(cfg), segments=segments, num_classes=k)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    raster.save_mask(out, result.revised)
    report_path = Path(args.report) if args.report else out.with_suffix(".json")
    _write_json(report_path, result.to_report())
    if args.debug:
        write_debug(args.debug, img, mask, result, params, float(cfg.get("overlay_alpha", 0.5)))
    s = result.stats
    print(f"anchors {s['total']}  revised {s['revised']}  discarded {s['discarded']}")
    return 0


def write_debug(folder, img, mask, result, params, alpha=0.5) -> None:
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    raster.save_png(folder / "1_window_mask.png", (mask == params.window_class).astype(np.uint8) * 255)
    raster.save_png(folder / "2_lines_all.png", render.draw_segments(img, result.segments))
    chosen = sorted({a.segment_index(e) for a in result.assignments for e in lafr.EDGES
                     if a.integrated is not None})
    canvas = render.draw_segments(img, [result.segments[i] for i in chosen], color=(255, 255, 0))
    canvas = render.draw_rectangles(canvas, [a.integrated for a in result.assignments if a.integrated])
    raster.save_png(folder / "3_lines_integrated.png", canvas)
    raster.save_png(folder / "4_revised.png", render.overlay(img, result.revised, alpha))


def _pair_dirs(pred_dir, gt_dir, pred_prefix="", gt_prefix=""):
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise CliError(EXIT_IO, f"not a directory: {d}")

    def keyed(d, prefix):
        return {p.name[len(prefix):]: p for p in sorted(d.glob(f"{prefix}*.png"))}
    preds = keyed(pred_dir, pred_prefix)
    gts = keyed(gt_dir, gt_prefix)
    if not preds and not gts:
        raise CliError(EXIT_INPUT, "no PNG files to evaluate")
    unpaired = sorted(set(preds) ^ set(gts))
    if unpaired:
        raise CliError(EXIT_INPUT, f"unpaired files: {', '.join(unpaired[:5])}")
    return [(k, preds[k], gts[k]) for k in sorted(preds)]


def print_metrics(rep: metrics.MetricsReport, stream=None) -> None:
    stream = stream or sys.stdout
    print(f"{'Acc':>10}{'Class_avg':>12}{'F1-score':>12}{'mIoU':>10}", file=stream)
    print(f"{100 * rep.acc:>10.2f}{100 * rep.class_avg:>12.2f}{100 * rep.f1_macro:>12.2f}"
          f"{100 * rep.miou:>10.2f}", file=stream)


def cmd_eval(args) -> int:
    palette = _read_palette(args.palette)
    k = len(palette)
    cm = metrics.ConfusionMatrix(k)
    for _, pred_path, gt_path in _pair_dirs(args.pred_dir, args.gt_dir, args.pred_prefix, args.gt_prefix):
        pred = _read_mask(pred_path, k)
        gt = _read_mask(gt_path, k)
        if pred.shape != gt.shape:
            raise CliError(EXIT_INPUT, f"dimension mismatch: {pred_path.name} {pred.shape} vs {gt.shape}")
        cm.accumulate(gt, pred)
    rep = metrics.report(cm, _class_names(palette))
    if args.out:
        _write_json(args.out, rep.to_dict())
    print_metrics(rep)
    return 0


def cmd_synth(args) -> int:
    spec_fields = {f: getattr(args, f) for f in ("width", "height", "rows", "cols", "window_w",
                                                 "window_h", "noise_sigma", "shear") if getattr(args, f) is not None}
    try:
        spec = replace(synth.FacadeSpec(), **spec_fields)
        spec.validate()
        corruption = synth.CorruptionParams(amplitude=args.amplitude, dropout=args.dropout,
                                            blob_count=args.blobs, blob_radius=args.blob_radius)
        corruption.validate()
    except synth.SynthError as exc:
        raise CliError(EXIT_INPUT, str(exc))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = []
    for i in range(args.count):
        seed = args.seed + i
        img, gt = synth.generate(spec, seed)
        pred = synth.corrupt(gt, replace(corruption, seed=seed))
        raster.save_png(out / f"img_{i:04d}.png", img)
        raster.save_mask(out / f"gt_{i:04d}.png", gt)
        raster.save_mask(out / f"pred_{i:04d}.png", pred)
        seeds.append(seed)
    raster.save_palette(out / "palette.json", synth.FACADE_CLASSES)
    manifest = {
        "spec": synth.spec_to_dict(spec),
        "corruption": {k: v for k, v in asdict(corruption).items() if k != "seed"},
        "seeds": seeds,
        "classes": list(synth.FACADE_CLASSES),
    }
    _write_json(out / "manifest.json", manifest)
    print(f"wrote {args.count} facades to {out}")
    return 0


def _vit_config(cfg: dict, num_classes: int) -> vit.VitConfig:
    try:
        return vit.VitConfig(patch=int(cfg.get("patch", 16)), dim=int(cfg.get("dim", 64)),
                             layers=int(cfg.get("layers", 2)), heads=int(cfg.get("heads", 4)),
                             num_classes=int(num_classes), seed=int(cfg.get("seed", 0)))
    except vit.VitError as exc:
        raise CliError(EXIT_INPUT, str(exc))


def toy_segment(img: np.ndarray, config: vit.VitConfig) -> np.ndarray:
    """Run the toy segmenter, padding by edge replication to a multiple of the patch size."""
    h, w = img.shape[:2]
    p = config.patch
    ph, pw = (-h) % p, (-w) % p
    pad = ((0, ph), (0, pw)) + (((0, 0),) if img.ndim == 3 else ())
    padded = np.pad(img, pad, mode="edge")
    return vit.segment_forward(padded, config)[:h, :w]


def cmd_segment_toy(args) -> int:
    img = _read_image(args.image)
    cfg = {k: getattr(args, k) for k in ("patch", "dim", "layers", "heads", "seed")}
    config = _vit_config(cfg, args.classes)
    mask = toy_segment(img, config)
    raster.save_mask(args.out, mask)
    print(f"mask {mask.shape[1]}x{mask.shape[0]} -> {args.out}")
    return 0


# -- pipeline ---------------------------------------------------------------

def collect_fixtures(cfg: dict, base: Path) -> list:
    """(key, image, gt or None, pred or None) tuples ordered by key."""
    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p
    if "input_dir" in cfg:
        d = resolve(cfg["input_dir"])
        if not d.is_dir():
            raise CliError(EXIT_IO, f"not a directory: {d}")
        items = []
        for img in sorted(d.glob("img_*.png")):
            key = img.stem[len("img_"):]
            gt = d / f"gt_{key}.png"
            pred = d / f"pred_{key}.png"
            items.append((key, img, gt if gt.exists() else None, pred if pred.exists() else None))
        return items
    if "images_dir" not in cfg:
        raise CliError(EXIT_INPUT, "config needs input_dir or images_dir")
    images = resolve(cfg["images_dir"])
    if not images.is_dir():
        raise CliError(EXIT_IO, f"not a directory: {images}")
    gt_dir = resolve(cfg["gt_dir"]) if "gt_dir" in cfg else None
    pred_dir = resolve(cfg["pred_dir"]) if "pred_dir" in cfg else None
    items = []
    for img in sorted(images.glob("*.png")):
        gt = gt_dir / img.name if gt_dir else None
        pred = pred_dir / img.name if pred_dir else None
        items.append((img.stem, img, gt if gt and gt.exists() else None, pred if pred and pred.exists() else None))
    return items


def _pipeline_item(job):
    key, img_path, gt_path, pred_path, cfg, out_dir, k, window, names = job
    out_dir = Path(out_dir)
    stage = "load"
    try:
        img = raster.load_png(img_path)
        if pred_path is not None and cfg.get("segmenter", "given") == "given":
            pred = raster.load_mask(pred_path, k)
        else:
            stage = "segment"
            pred = toy_segment(img, _vit_config(cfg, k))
            raster.save_mask(out_dir / "preliminary" / f"{key}.png", pred)
        stage = "revise"
        params = _lafr_params(cfg, window)
        result = lafr.run_lafr(img, pred, params, _lsd_params(cfg), num_classes=k)
        raster.save_mask(out_dir / "revised" / f"{key}.png", result.revised)
        _write_json(out_dir / "reports" / f"{key}.json", result.to_report())
        raster.save_png(out_dir / "overlays" / f"{key}.png",
                        render.overlay(img, result.revised, float(cfg.get("overlay_alpha", 0.5))))
        row = {"image": key, **{s: result.stats[s] for s in ("total", "revised", "discarded")}}
        before = after = None
        if gt_path is not None:
            stage = "eval"
            gt = raster.load_mask(gt_path, k)
            before = metrics.confusion_matrix(gt, pred, k).counts
            after = metrics.confusion_matrix(gt, result.revised, k).counts
            row["window_iou_before"] = synth.window_iou(gt, pred, window)
            row["window_iou_after"] = synth.window_iou(gt, result.revised, window)
        return row, before, after
    except CliError:
        raise
    except FileNotFoundError as exc:
        raise CliError(EXIT_IO, f"[{stage}] {key}: {exc}")
    except (raster.RasterError, lafr.LafrError, vit.VitError, metrics.MetricsError) as exc:
        raise CliError(EXIT_INPUT, f"[{stage}] {key}: {exc}")


def cmd_pipeline(args) -> int:
    cfg = _merged(_load_config(args.config), args, ("jobs", "out_dir", "delta", "theta"))
    base = Path(args.config).resolve().parent
    palette = _read_palette(Path(base, cfg["palette"]) if "palette" in cfg else None)
    k = len(palette)
    names = _class_names(palette)
    window = _window_index(palette, cfg.get("window_class", "window"))
    out_dir = Path(cfg.get("out_dir", "pipeline_out"))
    if not out_dir.is_absolute() and args.out_dir is None:
        out_dir = base / out_dir
    for sub in ("revised", "reports", "overlays", "preliminary"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    items = collect_fixtures(cfg, base)
    if not items:
        raise CliError(EXIT_INPUT, "no input images found")
    jobs = [(key, str(i), g and str(g), p and str(p), cfg, str(out_dir), k, window, names)
            for key, i, g, p in items]
    n_jobs = int(cfg.get("jobs", 1))
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_pipeline_item, jobs))
    else:
        results = [_pipeline_item(j) for j in jobs]
    rows = [r for r, _, _ in results]
    summary = {"images": rows, "config": {k_: cfg[k_] for k_ in sorted(cfg) if k_ not in ("jobs", "out_dir")}}
    evaluated = [(b, a) for _, b, a in results if b is not None]
    if evaluated:
        cm_before = metrics.ConfusionMatrix(k, sum(b for b, _ in evaluated))
        cm_after = metrics.ConfusionMatrix(k, sum(a for _, a in evaluated))
        rep_b = metrics.report(cm_before, names)
        rep_a = metrics.report(cm_after, names)
        table = []
        for i, name in enumerate(names):
            b = rep_b.per_class[i]["iou"]
            a = rep_a.per_class[i]["iou"]
            table.append({"class": name, "before": b, "after": a,
                          "delta": None if a is None or b is None else a - b,
                          "highlight": name in ("window", "building")})
        summary["before"] = rep_b.to_dict()
        summary["after"] = rep_a.to_dict()
        summary["per_class_iou"] = table
        print(f"{'class':<10}{'before':>10}{'after':>10}{'delta':>10}")
        for row in table:
            if row["before"] is None and row["after"] is None:
                continue
            mark = " *" if row["highlight"] else ""
            fmt = lambda v: "     -" if v is None else f"{100 * v:10.2f}"
            print(f"{row['class']:<10}{fmt(row['before'])}{fmt(row['after'])}{fmt(row['delta'])}{mark}")
        print("before:")
        print_metrics(rep_b)
        print("after:")
        print_metrics(rep_a)
    _write_json(out_dir / "summary.json", summary)
    return 0


# -- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="facade-revise", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect-lines", help="blur an image and write detected segments as JSON")
    p.add_argument("image")
    p.add_argument("--out", required=True)
    p.add_argument("--lsd-scale", type=float)
    p.add_argument("--nfa-epsilon", type=float)
    p.set_defaults(func=cmd_detect_lines)

    p = sub.add_parser("revise", help="revise window regions of a predicted mask")
    p.add_argument("image")
    p.add_argument("mask")
    p.add_argument("--palette")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--lines", help="precomputed segment JSON")
    p.add_argument("--debug", help="directory for intermediate images")
    p.add_argument("--config")
    p.add_argument("--delta", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--window-class")
    p.add_argument("--min-component-area", type=int)
    p.add_argument("--overlap-ratio", type=float)
    p.add_argument("--lsd-scale", type=float)
    p.add_argument("--nfa-epsilon", type=float)
    p.set_defaults(func=cmd_revise)

    p = sub.add_parser("eval", help="Acc / Class_avg / F1 / mIoU over paired mask directories")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("--palette")
    p.add_argument("--out")
    p.add_argument("--pred-prefix", default="")
    p.add_argument("--gt-prefix", default="")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write synthetic facade fixtures")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    for name in ("width", "height", "rows", "cols", "window-w", "window-h"):
        p.add_argument(f"--{name}", type=int)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--shear", type=float)
    p.add_argument("--amplitude", type=int, default=3)
    p.add_argument("--dropout", type=float, default=0.05)
    p.add_argument("--blobs", type=int, default=2)
    p.add_argument("--blob-radius", type=int, default=4)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("segment-toy", help="seeded toy ViT segmentation of one image")
    p.add_argument("image")
    p.add_argument("--out", required=True)
    p.add_argument("--patch", type=int, default=16)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--classes", type=int, default=len(synth.FACADE_CLASSES))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_segment_toy)

    p = sub.add_parser("pipeline", help="segment (optional), revise and evaluate a batch from a JSON config")
    p.add_argument("config")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--delta", type=float)
    p.add_argument("--theta", type=float)
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
