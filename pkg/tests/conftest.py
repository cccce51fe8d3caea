import numpy as np
import pytest

from rrvqa.video_io import sequence_from_arrays, uniform_chroma

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = _criterion_of.get(report.nodeid)
    if marker is None:
        return
    number, text = marker
    ok = report.outcome == "passed"
    prev = _criteria.get(number, (text, True))
    _criteria[number] = (text, prev[1] and ok)


_criterion_of = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _criterion_of[item.nodeid] = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        text, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {text}")


def make_sequence(lumas, chroma_value=128):
    lumas = [np.asarray(y) for y in lumas]
    h, w = lumas[0].shape
    dtype = lumas[0].dtype
    u = [uniform_chroma(w, h, chroma_value, dtype) for _ in lumas]
    return sequence_from_arrays(lumas, u, [c.copy() for c in u])


def textured(rng, h=64, w=64, lo=20, hi=200):
    return rng.integers(lo, hi, size=(h, w)).astype(np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
