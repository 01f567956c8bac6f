import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rainbench.imaging import Image  # noqa: E402

_CRITERIA = {}
_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number and summary")


def pytest_runtest_logreport(report):
    if report.when != "call" and report.outcome == "passed":
        return
    marker = _CRITERIA.get(report.nodeid)
    if marker is None:
        return
    n, text = marker
    entry = _RESULTS.setdefault(n, [text, True])
    entry[1] = entry[1] and report.outcome == "passed"


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _CRITERIA[item.nodeid] = m.args


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        text, ok = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_image(rng, h, w, c=3):
    return Image(rng.integers(0, 256, size=(h, w, c), dtype=np.uint8))


def textured_image(h, w):
    """Smooth gradient with stripes: structure for SSIM to respond to."""
    yy, xx = np.mgrid[0:h, 0:w]
    r = 60 + 120 * xx / max(w - 1, 1)
    g = 80 + 60 * np.sin(yy / 5.0)
    b = 40 + 100 * ((xx // 6 + yy // 6) % 2)
    return Image(np.clip(np.stack([r, g, b], -1), 0, 255).astype(np.uint8))


@pytest.fixture
def toy_root(tmp_path):
    from rainbench.toy import build_toy_dataset

    return build_toy_dataset(tmp_path / "toy")
