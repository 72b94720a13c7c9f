import numpy as np
import pytest

from eegbilstm.ingest import ChannelLayout, LabelSpan, Recording


def f32_exact(rng, shape, scale=50.0):
    """Random samples that survive the float32 on-disk encoding unchanged."""
    return (rng.standard_normal(shape) * scale).astype(np.float32).astype(np.float64)


def make_recording(n_channels=4, n_samples=1000, rate=250.0, seed=0, spans=(),
                   subject="s01", names=None):
    rng = np.random.default_rng(seed)
    names = names or tuple(f"C{i}" for i in range(n_channels))
    return Recording(rate, ChannelLayout(names), f32_exact(rng, (n_channels, n_samples)),
                     subject, spans)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def recording():
    spans = (LabelSpan(0.0, 2.0, {"audio_type": "M"}), LabelSpan(2.0, 4.0, {"audio_type": "V"}))
    return make_recording(4, 1000, 250.0, seed=7, spans=spans)


ACCEPTANCE_RESULTS = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the assertion still decides the test outcome."""

    def record(number, title, passed, detail=""):
        ACCEPTANCE_RESULTS.append((number, title, bool(passed), detail))
        assert passed, f"criterion {number} ({title}) failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        mark = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{mark}] {number:>2}. {title}: {detail}")
