"""``rainbench`` command line: metrics | synth | calibrate | eval | sweep.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 external detector failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import calibrate as cal
from . import deteval, pipeline, quality
from .errors import DetectorFailed, MissingDetections, RainbenchError
from .imaging import load_image, save_image
from .rainsim import (DropletStyle, RainMapping, derive_seed, load_style, rainfall_to_droplets,
                      synthesize)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DETECTOR = 0, 1, 2, 3
IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _rainfall(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(v) or v < 0:
        raise argparse.ArgumentTypeError(f"rainfall must be finite and >= 0, got {text}")
    return v


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _fmt(v):
    if v is None:
        return "-"
    return "inf" if math.isinf(v) else f"{v:.6f}"


def _ssim_params(args):
    return quality.SsimParams(k1=args.k1, k2=args.k2, dynamic_range=args.max_i,
                              window_radius=args.window_radius, window_sigma=args.window_sigma)


def _mapping(args):
    m = RainMapping.from_fit_file(args.mapping) if args.mapping else RainMapping()
    if args.slope is not None or args.intercept is not None:
        m = RainMapping(args.slope if args.slope is not None else m.slope,
                        args.intercept if args.intercept is not None else m.intercept)
    return m


# -- subcommands ----------------------------------------------------------------

def cmd_metrics(args, out):
    a, b = load_image(args.a), load_image(args.b)
    out.write(quality.score(a, b, _ssim_params(args), args.max_i).format() + "\n")
    return EXIT_OK


def _inputs(path: Path):
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise FileNotFoundError(f"no images in {path}")
        return files
    if not path.is_file():
        raise FileNotFoundError(f"no such file or directory: {path}")
    return [path]


def cmd_synth(args, out):
    style = load_style(args.style) if args.style else DropletStyle()
    mapping = _mapping(args)
    files = _inputs(Path(args.input))
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    rainfall_to_droplets(args.rain, mapping)  # surfaces the out-of-domain warning once

    def work(src):
        img = load_image(src)
        seed = derive_seed(args.seed, src.stem, args.rain)
        rainy, n = synthesize(img, args.rain, seed, style, mapping)
        save_image(rainy, dest / src.name)
        return f"{src.name} rain={args.rain:.6f} droplets={n} seed={seed}"

    for line in pipeline._map(work, files, args.jobs):
        out.write(line + "\n")
    return EXIT_OK


def cmd_calibrate(args, out):
    groups = (args.clean, args.reference, args.rain)
    if not all(groups) or len({len(g) for g in groups}) != 1:
        raise UsageError("calibrate: give --clean, --reference and --rain the same number of times")
    style = load_style(args.style) if args.style else DropletStyle()
    rng = cal.SweepRange(args.n_min, args.n_max, args.step)
    band = cal.AcceptanceBand(args.ssim_lo, args.ssim_hi, args.psnr_min)
    pts = []
    for clean_path, ref_path, rain in zip(*groups):
        clean, ref = load_image(clean_path), load_image(ref_path)
        accepted = cal.sweep_band(clean, ref, rng, band, style, args.seed, jobs=args.jobs)
        chosen = cal.choose_count(accepted, rng, args.choose)
        out.write(f"rain={rain:.6f} accepted={len(accepted)} "
                  f"range=[{accepted[0][0]},{accepted[-1][0]}] chosen={chosen}\n")
        if args.all_accepted:
            pts.extend((n, rain) for n, _, _ in accepted)
        else:
            pts.append((chosen, rain))
    fit = cal.fit_linear(pts)
    cal.write_fit(fit, args.out)
    out.write(f"slope={fit.slope:.6f} intercept={fit.intercept:.6f} r2={fit.r_squared:.6f} "
              f"slope_ci=[{fit.slope_ci95[0]:.6f},{fit.slope_ci95[1]:.6f}] "
              f"intercept_ci=[{fit.intercept_ci95[0]:.6f},{fit.intercept_ci95[1]:.6f}] "
              f"n={fit.n_points}\n")
    return EXIT_OK


def cmd_eval(args, out):
    dets, gts = deteval.load_records(args.manifest, args.det_dir, args.gt_root)
    classes = args.classes or sorted({g.class_id for g in gts})
    reports = deteval.evaluate(dets, gts, classes, args.conf_thr, args.iou_thr,
                               "max" if args.max_f1 else "threshold")
    for r in reports:
        out.write(f"class={r.class_id} ap={_fmt(r.ap)} f1={_fmt(r.f1)} "
                  f"tp={r.tp} fp={r.fp} fn={r.fn} n_gt={r.n_gt}\n")
    out.write(f"mean_ap={_fmt(deteval.macro_average(reports, 'ap'))} "
              f"mean_f1={_fmt(deteval.macro_average(reports, 'f1'))}"
              f"{' f1_mode=max' if args.max_f1 else ''}\n")
    return EXIT_OK


_SWEEP_FLAGS = ("dataset_root", "levels", "global_seed", "detector_cmd", "slope", "intercept",
                "mapping_file", "style_file", "conf_thr", "iou_thr", "classes", "f1_mode", "jobs")


def cmd_sweep(args, out):
    overrides = {k: getattr(args, k) for k in _SWEEP_FLAGS}
    if args.parallel_levels:
        overrides["parallel_levels"] = "true"
    plan = pipeline.plan_sweep(args.config, overrides)
    report = pipeline.run_sweep(plan)
    for (level, cls), (ap, f1, deg) in sorted(report.table().items()):
        out.write(f"level={pipeline.level_tag(level)} class={cls} ap={_fmt(ap)} "
                  f"f1={_fmt(f1)} degradation_pct={_fmt(deg)}\n")
    out.write(f"report={plan.report_dir}\n")
    if report.failures:
        for level, reason in sorted(report.failures.items()):
            sys.stderr.write(f"error: {reason}\n")
        return EXIT_DETECTOR
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="rainbench", description="Calibrated synthetic rain and detector degradation sweeps.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    m = sub.add_parser("metrics", help="SSIM / PSNR / MSE between two images")
    m.add_argument("--a", required=True, help="first image")
    m.add_argument("--b", required=True, help="second image")
    m.add_argument("--max-i", type=float, default=255.0, help="peak value for PSNR and SSIM range")
    m.add_argument("--k1", type=float, default=0.01)
    m.add_argument("--k2", type=float, default=0.03)
    m.add_argument("--window-radius", type=int, default=5)
    m.add_argument("--window-sigma", type=float, default=1.5)
    m.set_defaults(func=cmd_metrics)

    def mapping_flags(sp):
        sp.add_argument("--mapping", help="calibration fit file overriding slope/intercept")
        sp.add_argument("--slope", type=float)
        sp.add_argument("--intercept", type=float)

    s = sub.add_parser("synth", help="composite rain for one rainfall rate")
    s.add_argument("--in", dest="input", required=True, help="image file or directory")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--rain", type=_rainfall, required=True, help="rainfall rate in mm/h")
    s.add_argument("--seed", type=_seed, required=True, help="unsigned 64-bit seed")
    s.add_argument("--style", help="droplet style file (key = value)")
    s.add_argument("--jobs", type=_positive_int, default=1)
    mapping_flags(s)
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("calibrate", help="fit the rainfall/droplet law from reference images")
    c.add_argument("--clean", action="append", help="clean image (repeat per condition)")
    c.add_argument("--reference", action="append", help="real-rain reference image")
    c.add_argument("--rain", action="append", type=_rainfall, help="measured rainfall, mm/h")
    c.add_argument("--out", required=True, help="fit file to write")
    c.add_argument("--style")
    c.add_argument("--seed", type=_seed, default=0)
    c.add_argument("--n-min", type=int, default=10)
    c.add_argument("--n-max", type=int, default=5000)
    c.add_argument("--step", type=int, default=10)
    c.add_argument("--ssim-lo", type=float, default=0.9500)
    c.add_argument("--ssim-hi", type=float, default=0.9510)
    c.add_argument("--psnr-min", type=float, default=41.50)
    c.add_argument("--choose", choices=("midpoint", "first", "last"), default="midpoint")
    c.add_argument("--all-accepted", action="store_true",
                   help="regress on every accepted count instead of one per condition")
    c.add_argument("--jobs", type=_positive_int, default=1)
    c.set_defaults(func=cmd_calibrate)

    e = sub.add_parser("eval", help="per-class AP and F1 of detector output")
    e.add_argument("--manifest", required=True)
    e.add_argument("--det-dir", help="folder holding det_path files (default: manifest folder)")
    e.add_argument("--gt-root", help="folder gt_path is relative to (default: manifest folder)")
    e.add_argument("--classes", type=lambda t: [int(v) for v in t.split(",") if v.strip()])
    e.add_argument("--conf-thr", type=float, default=0.25)
    e.add_argument("--iou-thr", type=float, default=0.5)
    e.add_argument("--max-f1", action="store_true", help="report best F1 over all thresholds")
    e.set_defaults(func=cmd_eval)

    w = sub.add_parser("sweep", help="run the full rainfall sweep")
    w.add_argument("--config", help="key = value config file")
    w.add_argument("--dataset-root")
    w.add_argument("--levels", help="comma-separated mm/h values")
    w.add_argument("--global-seed")
    w.add_argument("--detector-cmd")
    w.add_argument("--slope")
    w.add_argument("--intercept")
    w.add_argument("--mapping-file")
    w.add_argument("--style-file")
    w.add_argument("--conf-thr")
    w.add_argument("--iou-thr")
    w.add_argument("--classes")
    w.add_argument("--f1-mode", choices=("threshold", "max"))
    w.add_argument("--jobs", type=_positive_int)
    w.add_argument("--parallel-levels", action="store_true")
    w.set_defaults(func=cmd_sweep)
    return p


def run(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verbose:
            logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
        return args.func(args, out)
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (DetectorFailed, MissingDetections) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DETECTOR
    except (RainbenchError, OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA


def main():
    sys.exit(run())
