import filecmp
import sys

import pytest

from rainbench import pipeline
from rainbench.deteval import ClassReport
from rainbench.errors import BadConfig, DetectorFailed, MissingDataset, MissingDetections, ZeroBaseline
from rainbench.pipeline import (SweepReport, aggregate_report, plan_sweep, relative_degradation,
                                run_detector, run_sweep, synthesize_level)
from rainbench.report import csv_text, svg_text
from rainbench.toy import build_toy_dataset


def test_default_plan(toy_root):
    plan = plan_sweep(toy_root / "sweep.cfg", env={})
    assert plan.levels == tuple(float(v) for v in range(0, 101, 10)) and len(plan.levels) == 11
    assert plan.classes == (0, 1)
    assert plan.dataset_root == toy_root.resolve()


def test_plan_overrides_and_env(toy_root):
    cfg = toy_root / "sweep.cfg"
    assert plan_sweep(cfg, {"levels": "0,50,100"}, env={}).levels == (0.0, 50.0, 100.0)
    assert plan_sweep(cfg, env={"RAINBENCH_SEED": "99"}).global_seed == 99
    assert plan_sweep(cfg, {"global_seed": "5"}, env={"RAINBENCH_SEED": "99"}).global_seed == 5
    assert plan_sweep(cfg, {"slope": "0.05"}, env={}).mapping.slope == 0.05
    assert plan_sweep(cfg, {"opacity": "0.5"}, env={}).style.opacity == 0.5


@pytest.mark.parametrize("override", [{"levels": "10,0"}, {"levels": "0,0"}, {"levels": "a"},
                                      {"jobs": "0"}, {"global_seed": "-3"}, {"colour": "red"},
                                      {"f1_mode": "best"}, {"opacity": "7"}])
def test_bad_config(toy_root, override):
    with pytest.raises(BadConfig):
        plan_sweep(toy_root / "sweep.cfg", override, env={})


def test_missing_dataset(tmp_path):
    (tmp_path / "c.cfg").write_text("dataset_root = nowhere\n")
    with pytest.raises(MissingDataset):
        plan_sweep(tmp_path / "c.cfg", env={})


def test_synthesize_levels(toy_root):
    plan = plan_sweep(toy_root / "sweep.cfg", env={})
    out0 = synthesize_level(plan, 0.0)
    for f in (toy_root / "clean").iterdir():
        assert (out0 / f.name).read_bytes() == f.read_bytes()
    out100 = synthesize_level(plan, 100.0)
    first = {f.name: f.read_bytes() for f in out100.iterdir()}
    assert all(first[f.name] != f.read_bytes() for f in (toy_root / "clean").iterdir())
    synthesize_level(plan, 100.0, jobs=4)
    assert {f.name: f.read_bytes() for f in out100.iterdir()} == first
    with pytest.raises(BadConfig):
        synthesize_level(plan, 15.0)


def test_level_100_uses_3204_droplets(toy_root, monkeypatch):
    plan = plan_sweep(toy_root / "sweep.cfg", env={})
    seen = []
    real = pipeline.generate_field

    def spy(count, *a, **k):
        seen.append(count)
        return real(count, *a, **k)

    monkeypatch.setattr(pipeline, "generate_field", spy)
    synthesize_level(plan, 100.0)
    assert seen == [3204] * 4


def test_detector_failure_and_missing(toy_root):
    fail = f"{sys.executable} -c \"import sys; sys.exit(1)\" {{input_dir}} {{output_dir}}"
    plan = plan_sweep(toy_root / "sweep.cfg", {"detector_cmd": fail, "levels": "0"}, env={})
    synthesize_level(plan, 0.0)
    with pytest.raises(DetectorFailed) as err:
        run_detector(plan, 0.0)
    assert err.value.exit_code == 1

    partial = "{python} -m rainbench.toy detect {input_dir} {output_dir} --dataset . --withhold frame_002"
    plan = plan_sweep(toy_root / "sweep.cfg", {"detector_cmd": partial, "levels": "0"}, env={})
    with pytest.raises(MissingDetections) as err:
        run_detector(plan, 0.0)
    assert err.value.missing == ["frame_002.txt"]


def test_failed_level_does_not_hide_others(toy_root):
    script = toy_root / "flaky.py"
    script.write_text(
        "import subprocess, sys\n"
        "if sys.argv[3] == '50':\n    sys.exit(4)\n"
        "sys.exit(subprocess.call([sys.executable, '-m', 'rainbench.toy', 'detect', sys.argv[1], sys.argv[2],"
        " '--dataset', '.']))\n")
    cmd = "{python} flaky.py {input_dir} {output_dir} {level}"
    plan = plan_sweep(toy_root / "sweep.cfg", {"detector_cmd": cmd, "levels": "0,50,100"}, env={})
    report = run_sweep(plan)
    assert set(report.failures) == {50.0}
    assert report.metric(100.0, 0) is not None and report.metric(50.0, 0) is None
    rows = csv_text(report).splitlines()
    assert "50,0,,," in rows and "nan" not in csv_text(report).lower()


def test_prebaked_detections_without_command(toy_root):
    cfg = toy_root / "sweep.cfg"
    plan = plan_sweep(cfg, {"levels": "0"}, env={})
    synthesize_level(plan, 0.0)
    run_detector(plan, 0.0)
    bare = plan_sweep(cfg, {"levels": "0", "detector_cmd": ""}, env={})
    assert bare.detector_cmd is None
    report = run_sweep(bare)
    assert report.metric(0.0, 0) == 1.0


@pytest.mark.parametrize("normal, degraded, want", [(0.669, 0.46, 31.24), (0.64, 0.424, 33.75),
                                                    (0.652, 0.452, 30.67), (0.5, 0.5, 0.0)])
def test_relative_degradation(normal, degraded, want):
    assert relative_degradation(normal, degraded) == pytest.approx(want, abs=0.01)


def test_zero_baseline():
    with pytest.raises(ZeroBaseline):
        relative_degradation(0.0, 0.1)


def _reports(level_ap):
    return [ClassReport(c, ap, ap, 1, 0, 0, 1) if ap is not None else ClassReport(c, None, None, 0, 0, 0, 0)
            for c, ap in enumerate(level_ap)]


def _plan(tmp_path, levels, classes=(0, 1, 2, 3)):
    root = build_toy_dataset(tmp_path / "d", detector=False)
    return plan_sweep(root / "sweep.cfg", {"levels": ",".join(map(str, levels)),
                                           "classes": ",".join(map(str, classes))}, env={})


def test_aggregate_dense_table(tmp_path):
    levels = list(range(0, 101, 10))
    plan = _plan(tmp_path, levels)
    per = {lv: _reports([0.8 - lv / 500, 0.5, None, 0.0]) for lv in levels}
    report = aggregate_report(plan, per)
    table = report.table()
    assert len(table) == 44
    assert report.degradation_pct(100, 0) == pytest.approx(25.0)
    assert report.degradation_pct(100, 2) is None and report.degradation_pct(100, 3) is None
    assert len(csv_text(report).splitlines()) == 45


def test_single_level_no_baseline(tmp_path):
    plan = _plan(tmp_path, [50])
    report = aggregate_report(plan, {50: _reports([0.5, 0.5, 0.5, 0.5])})
    assert report.degradation_pct(50, 0) is None


def test_merge_associative_commutative(tmp_path):
    plan = _plan(tmp_path, [0, 10, 20])
    parts = [aggregate_report(_plan(tmp_path / str(lv), [lv]), {lv: _reports([0.9 - lv / 100] * 4)})
             for lv in (0, 10, 20)]
    a, b, c = parts
    left = a.merge(b).merge(c)
    right = a.merge(b.merge(c))
    assert left == right == c.merge(a).merge(b)
    whole = aggregate_report(plan, {lv: _reports([0.9 - lv / 100] * 4) for lv in (0, 10, 20)})
    assert csv_text(left) == csv_text(whole)
    with pytest.raises(ValueError):
        a.merge(a)


def test_svg_deterministic_with_gaps(tmp_path):
    plan = _plan(tmp_path, [0, 10, 20], classes=(0, 1))
    per = {0: _reports([0.9, 0.5]), 10: DetectorFailed(10, 1), 20: _reports([0.7, 0.4])}
    report = aggregate_report(plan, per)
    svg = svg_text(report, "ap")
    assert svg == svg_text(aggregate_report(plan, dict(per)), "ap")
    assert svg.startswith("<svg") and "<polyline" not in svg  # every run is a single point
    assert svg.count("<circle") == 4
    with pytest.raises(ValueError):
        svg_text(report, "map")


def test_sweep_deterministic_across_runs(tmp_path):
    roots = [build_toy_dataset(tmp_path / name, levels="0,50,100") for name in ("a", "b")]
    run_sweep(plan_sweep(roots[0] / "sweep.cfg", env={}))
    run_sweep(plan_sweep(roots[1] / "sweep.cfg", {"jobs": "4", "parallel_levels": "true"}, env={}))
    for sub in ("rain_0", "rain_50", "rain_100", "report"):
        cmp = filecmp.dircmp(roots[0] / sub, roots[1] / sub)
        assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
        for f in cmp.common_files:
            assert (roots[0] / sub / f).read_bytes() == (roots[1] / sub / f).read_bytes()
