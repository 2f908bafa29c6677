import json
from importlib import resources

import numpy as np
import pytest

from photonstat.core import PhotonStream

S = 10**12  # ps per second
MS = 10**9

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def make_stream(channels, times, rep_period_ps=400_000, duration_ps=None, n_channels=2):
    times = np.asarray(times, dtype=np.int64)
    if duration_ps is None:
        duration_ps = int(times.max()) if times.size else 0
    return PhotonStream(
        channels=np.asarray(channels, dtype=np.uint8),
        times=times,
        rep_period_ps=rep_period_ps,
        duration_ps=duration_ps,
        meta={},
        n_channels=n_channels,
    )


def random_stream(rng, n, span_ps, rep_period_ps=400_000):
    times = np.sort(rng.integers(0, span_ps, n))
    channels = rng.integers(0, 2, n)
    return make_stream(channels, times, rep_period_ps, duration_ps=span_ps)


def load_schema(name):
    return json.loads((resources.files("photonstat") / "schemas" / f"{name}.json").read_text())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
