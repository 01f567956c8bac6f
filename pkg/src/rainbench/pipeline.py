"""Rainfall sweep orchestration over a dataset directory.

Layout::

    <root>/clean/<image_id>.png      clean frames
    <root>/labels/*.txt              ground truth (shared by every level)
    <root>/manifest.txt              image_id width height gt_path det_path
    <root>/rain_<level>/             synthesised frames per level
    <root>/detections/<level>/       detector output per level
    <root>/report/                   report.csv, ap.svg, f1.svg, metadata.txt
"""
from __future__ import annotations

import logging
import math
import os
import shlex
import shutil
import subprocess
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import deteval
from .errors import (BadConfig, DetectorFailed, MissingDataset, MissingDetections,
                     OutOfModelDomain, RainbenchError, ZeroBaseline)
from .imaging import load_image, save_image
from .rainsim import (STYLE_KEYS, DropletStyle, RainMapping, composite, derive_seed,
                      generate_field, load_style, parse_key_values, rainfall_to_droplets,
                      style_from_mapping)

log = logging.getLogger(__name__)

SEED_ENV = "RAINBENCH_SEED"
DEFAULT_LEVELS = tuple(float(v) for v in range(0, 101, 10))

CONFIG_KEYS = frozenset({
    "dataset_root", "levels", "global_seed", "detector_cmd", "slope", "intercept",
    "mapping_file", "style_file", "conf_thr", "iou_thr", "classes", "f1_mode", "jobs",
    "parallel_levels", "detector_timeout",
}) | frozenset(STYLE_KEYS)


def level_tag(level: float) -> str:
    level = float(level)
    return str(int(level)) if level.is_integer() else repr(level)


@dataclass(frozen=True)
class SweepPlan:
    dataset_root: Path
    levels: tuple = DEFAULT_LEVELS
    global_seed: int = 0
    detector_cmd: str | None = None
    mapping: RainMapping = RainMapping()
    style: DropletStyle = DropletStyle()
    conf_thr: float = 0.25
    iou_thr: float = 0.5
    classes: tuple = (0,)
    f1_mode: str = "threshold"
    jobs: int = 1
    parallel_levels: bool = False
    detector_timeout: float | None = None

    def __post_init__(self):
        if not self.levels:
            raise BadConfig("levels must not be empty")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise BadConfig(f"levels must be strictly increasing: {list(self.levels)}")
        if any(lv < 0 or not math.isfinite(lv) for lv in self.levels):
            raise BadConfig("levels must be finite and >= 0")
        if self.jobs < 1:
            raise BadConfig("jobs must be >= 1")
        if self.f1_mode not in ("threshold", "max"):
            raise BadConfig(f"f1_mode must be 'threshold' or 'max', got {self.f1_mode!r}")

    @property
    def manifest_path(self) -> Path:
        return self.dataset_root / "manifest.txt"

    def rain_dir(self, level) -> Path:
        return self.dataset_root / f"rain_{level_tag(level)}"

    def detection_dir(self, level) -> Path:
        return self.dataset_root / "detections" / level_tag(level)

    @property
    def report_dir(self) -> Path:
        return self.dataset_root / "report"


def _parse_levels(raw: str):
    try:
        return tuple(float(v) for v in raw.replace(" ", "").split(",") if v)
    except ValueError:
        raise BadConfig(f"bad levels list {raw!r}") from None


def _parse_seed(raw, source):
    try:
        seed = int(str(raw), 0)
    except ValueError:
        raise BadConfig(f"{source}: seed must be an integer, got {raw!r}") from None
    if not 0 <= seed < 1 << 64:
        raise BadConfig(f"{source}: seed must fit in 64 unsigned bits")
    return seed


def _infer_classes(root: Path):
    found = set()
    for e in deteval.read_manifest(root / "manifest.txt"):
        for line in (root / e.gt_path).read_text().splitlines():
            if line.strip():
                found.add(int(line.split()[0]))
    return tuple(sorted(found)) or (0,)


def plan_sweep(config=None, overrides: dict | None = None, env=None) -> SweepPlan:
    """Build a validated plan from a ``key = value`` file plus overrides.

    Precedence, lowest first: config file, ``RAINBENCH_SEED``, ``overrides``
    (the CLI flags). Relative paths in the file resolve against its folder.
    """
    env = os.environ if env is None else env
    values, base = {}, Path.cwd()
    if config is not None:
        config = Path(config)
        if not config.is_file():
            raise BadConfig(f"config file not found: {config}")
        values = parse_key_values(config.read_text(), str(config))
        base = config.resolve().parent
    if env.get(SEED_ENV):
        values["global_seed"] = env[SEED_ENV]
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    unknown = set(values) - CONFIG_KEYS
    if unknown:
        raise BadConfig(f"unknown config key(s): {', '.join(sorted(unknown))}")

    if "dataset_root" not in values:
        raise BadConfig("dataset_root is required")
    root = Path(str(values["dataset_root"]))
    if not root.is_absolute():
        root = base / root
    for need in ("clean", "labels"):
        if not (root / need).is_dir():
            raise MissingDataset(f"dataset is missing {root / need}/")
    if not (root / "manifest.txt").is_file():
        raise MissingDataset(f"dataset is missing {root / 'manifest.txt'}")

    def path_value(key):
        p = Path(str(values[key]))
        return p if p.is_absolute() else base / p

    try:
        mapping = RainMapping()
        if "mapping_file" in values:
            mapping = RainMapping.from_fit_file(path_value("mapping_file"))
        if "slope" in values or "intercept" in values:
            mapping = RainMapping(float(values.get("slope", mapping.slope)),
                                  float(values.get("intercept", mapping.intercept)))
        style = load_style(path_value("style_file")) if "style_file" in values else DropletStyle()
        inline = {k: values[k] for k in STYLE_KEYS if k in values}
        if inline:
            style = style_from_mapping(inline, style)
        if "classes" in values:
            classes = tuple(int(c) for c in str(values["classes"]).split(",") if c.strip())
        else:
            classes = _infer_classes(root)
        timeout = values.get("detector_timeout")
        parallel = str(values.get("parallel_levels", "false")).strip().lower()
        return SweepPlan(
            dataset_root=root,
            levels=_parse_levels(str(values["levels"])) if "levels" in values else DEFAULT_LEVELS,
            global_seed=_parse_seed(values.get("global_seed", 0), "global_seed"),
            detector_cmd=str(values["detector_cmd"]) if values.get("detector_cmd") else None,
            mapping=mapping,
            style=style,
            conf_thr=float(values.get("conf_thr", 0.25)),
            iou_thr=float(values.get("iou_thr", 0.5)),
            classes=classes,
            f1_mode=str(values.get("f1_mode", "threshold")),
            jobs=int(values.get("jobs", 1)),
            parallel_levels=parallel in ("1", "true", "yes", "on"),
            detector_timeout=float(timeout) if timeout else None,
        )
    except (ValueError, OSError) as exc:
        if isinstance(exc, RainbenchError):
            raise
        raise BadConfig(str(exc)) from None


def droplet_count(level: float, mapping: RainMapping) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", OutOfModelDomain)
        n = rainfall_to_droplets(level, mapping)
    if caught and level > 0:
        log.warning("%s mm/h is below the mapping intercept; frames are left clean", level_tag(level))
    return n


def _map(fn, items, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def synthesize_level(plan: SweepPlan, level: float, jobs: int | None = None) -> Path:
    """Write the rainy copy of every manifest image for one level."""
    if level not in plan.levels:
        raise BadConfig(f"level {level} is not part of the plan")
    out_dir = plan.rain_dir(level)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = droplet_count(level, plan.mapping)
    entries = deteval.read_manifest(plan.manifest_path)

    def work(entry):
        src = plan.dataset_root / "clean" / f"{entry.image_id}.png"
        dst = out_dir / src.name
        if n == 0:
            shutil.copyfile(src, dst)
            return
        img = load_image(src)
        seed = derive_seed(plan.global_seed, entry.image_id, level)
        fld = generate_field(n, seed, plan.style, img.width, img.height)
        save_image(composite(img, fld, plan.style), dst, "PNG")

    _map(work, entries, jobs or plan.jobs)
    log.info("level %s: %d image(s), %d droplets each", level_tag(level), len(entries), n)
    return out_dir


def _missing_detections(plan: SweepPlan, level):
    det_dir = plan.detection_dir(level)
    return [e.det_path for e in deteval.read_manifest(plan.manifest_path)
            if not (det_dir / e.det_path).is_file()]


def detector_argv(template: str, input_dir, output_dir, level) -> list:
    subs = {"input_dir": str(input_dir), "output_dir": str(output_dir),
            "level": level_tag(level), "python": sys.executable}
    try:
        return [tok.format(**subs) for tok in shlex.split(template)]
    except (KeyError, IndexError) as exc:
        raise BadConfig(f"detector_cmd has an unknown placeholder: {exc}") from None


def run_detector(plan: SweepPlan, level: float) -> Path:
    """Run the external detector once for ``level`` and check its output.

    The command runs with the dataset root as working directory. Placeholders
    ``{input_dir}``, ``{output_dir}``, ``{level}`` and ``{python}`` are
    substituted per token after shell-style splitting.
    """
    if not plan.detector_cmd:
        raise BadConfig("detector_cmd is not set")
    if "{input_dir}" not in plan.detector_cmd or "{output_dir}" not in plan.detector_cmd:
        raise BadConfig("detector_cmd needs {input_dir} and {output_dir} placeholders")
    out_dir = plan.detection_dir(level)
    if out_dir.exists():
        shutil.rmtree(out_dir)
    out_dir.mkdir(parents=True)
    argv = detector_argv(plan.detector_cmd, plan.rain_dir(level), out_dir, level)
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, cwd=plan.dataset_root,
                              timeout=plan.detector_timeout)
    except FileNotFoundError as exc:
        raise DetectorFailed(level, 127, str(exc)) from None
    except subprocess.TimeoutExpired:
        raise DetectorFailed(level, -1, "timed out") from None
    if proc.returncode != 0:
        tail = proc.stderr.strip().splitlines()[-1:] if proc.stderr else []
        raise DetectorFailed(level, proc.returncode, tail[0] if tail else "")
    missing = _missing_detections(plan, level)
    if missing:
        raise MissingDetections(level, missing)
    return out_dir


def evaluate_level(plan: SweepPlan, level: float):
    missing = _missing_detections(plan, level)
    if missing:
        raise MissingDetections(level, missing)
    dets, gts = deteval.load_records(plan.manifest_path, plan.detection_dir(level), plan.dataset_root)
    return deteval.evaluate(dets, gts, plan.classes, plan.conf_thr, plan.iou_thr, plan.f1_mode)


def relative_degradation(normal: float, degraded: float) -> float:
    """Percentage drop from ``normal`` to ``degraded``."""
    if not normal > 0:
        raise ZeroBaseline(f"baseline metric must be positive, got {normal}")
    return 100.0 * (normal - degraded) / normal


@dataclass(frozen=True)
class SweepReport:
    """Per-level class reports; ``None`` marks a level that failed."""

    levels: tuple
    classes: tuple
    results: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def cell(self, level, class_id):
        reports = self.results.get(float(level))
        if reports is None:
            return None
        for r in reports:
            if r.class_id == class_id:
                return r
        return None

    def metric(self, level, class_id, metric: str = "ap"):
        r = self.cell(level, class_id)
        return None if r is None else getattr(r, metric)

    def degradation_pct(self, level, class_id, metric: str = "ap"):
        base = self.metric(0.0, class_id, metric)
        cur = self.metric(level, class_id, metric)
        if base is None or cur is None or not base > 0:
            return None
        return relative_degradation(base, cur)

    def table(self):
        """Dense ``(level, class) -> (ap, f1, degradation_pct)`` mapping."""
        return {
            (lv, c): (self.metric(lv, c, "ap"), self.metric(lv, c, "f1"), self.degradation_pct(lv, c))
            for lv in self.levels for c in self.classes
        }

    def merge(self, other: "SweepReport") -> "SweepReport":
        overlap = (set(self.results) | set(self.failures)) & (set(other.results) | set(other.failures))
        if overlap:
            raise ValueError(f"reports overlap at levels {sorted(overlap)}")
        meta = dict(sorted({**other.metadata, **self.metadata}.items()))
        return SweepReport(
            levels=tuple(sorted(set(self.levels) | set(other.levels))),
            classes=tuple(sorted(set(self.classes) | set(other.classes))),
            results=dict(sorted({**self.results, **other.results}.items())),
            failures=dict(sorted({**self.failures, **other.failures}.items())),
            metadata=meta,
        )


def plan_metadata(plan: SweepPlan) -> dict:
    return {
        "global_seed": str(plan.global_seed),
        "mapping": f"slope={plan.mapping.slope!r} intercept={plan.mapping.intercept!r}",
        "style_digest": plan.style.digest(),
        "conf_thr": repr(plan.conf_thr),
        "iou_thr": repr(plan.iou_thr),
        "f1_mode": plan.f1_mode,
    }


def aggregate_report(plan: SweepPlan, per_level: dict) -> SweepReport:
    """Collect per-level outcomes; values are report lists or the exception raised."""
    if not per_level:
        raise ValueError("no level was evaluated")
    results, failures = {}, {}
    for level, outcome in sorted(per_level.items()):
        if isinstance(outcome, BaseException):
            failures[float(level)] = str(outcome)
        else:
            results[float(level)] = list(outcome)
    return SweepReport(
        levels=tuple(sorted({float(lv) for lv in plan.levels} | set(results) | set(failures))),
        classes=tuple(plan.classes),
        results=results,
        failures=failures,
        metadata=plan_metadata(plan),
    )


def run_level(plan: SweepPlan, level: float, jobs: int | None = None):
    """Synthesise, detect and evaluate one level; returns reports or the failure."""
    synthesize_level(plan, level, jobs)
    try:
        if plan.detector_cmd:
            run_detector(plan, level)
        return evaluate_level(plan, level)
    except (DetectorFailed, MissingDetections) as exc:
        log.error("%s", exc)
        return exc


def run_sweep(plan: SweepPlan) -> SweepReport:
    from .report import write_reports

    if plan.parallel_levels:
        outcomes = _map(lambda lv: run_level(plan, lv, 1), plan.levels, plan.jobs)
    else:
        outcomes = [run_level(plan, lv) for lv in plan.levels]
    report = aggregate_report(plan, dict(zip(plan.levels, outcomes)))
    write_reports(report, plan.report_dir)
    return report
