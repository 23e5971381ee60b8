import numpy as np
import pytest

from botforecast import synth
from botforecast.events import DEFAULT_ALPHABET, HostTrace, TraceEvent

E, B, C, A = range(4)

# published matrices (rows: Exploit, BinaryDownload, CncCommunication, Attack)
PUBLISHED_T = np.array(
    [
        [0.682, 0.030, 0.033, 0.254],
        [0.035, 0.426, 0.527, 0.012],
        [0.0001, 0.001, 0.926, 0.073],
        [0.001, 0.00001, 0.099, 0.899],
    ]
)
PUBLISHED_T_NOSELF = np.array(
    [
        [0, 0.0938, 0.1042, 0.8021],
        [0.0619, 0, 0.9175, 0.0206],
        [0.0018, 0.0178, 0, 0.9804],
        [0.0154, 0.0002, 0.9844, 0],
    ]
)
PUBLISHED_P = (0.0025, 0.0015, 0.5739, 0.4222)

_acceptance_results: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    num = getattr(report, "acceptance", None)
    if num is not None:
        _acceptance_results[num] = (report.outcome.upper(), report.nodeid.split("::")[-1])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        outcome.get_result().acceptance = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_acceptance_results):
        status, name = _acceptance_results[num]
        status = "PASS" if status == "PASSED" else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {name}")


def make_trace(host, items):
    """``items`` are (t, state) pairs."""
    return HostTrace(host, [TraceEvent(float(t), s) for t, s in items])


def random_spec(rng, n_hosts=5, events_per_host=200, seed=0, self_loops=False, n=4):
    """Random irreducible embedded chain with random interval masses."""
    emb = rng.random((n, n)) + 0.05
    if not self_loops:
        np.fill_diagonal(emb, 0.0)
    emb /= emb.sum(axis=1, keepdims=True)
    w = rng.random((8, n, n)) ** 3
    w /= w.sum(axis=0, keepdims=True)
    q = w * emb[None]
    q[:, np.arange(n), np.arange(n)] = 0.0
    if self_loops:
        q[0, np.arange(n), np.arange(n)] = np.diag(emb)
    # exact partition of the embedded matrix
    q[-1] += emb - q.sum(axis=0)
    q = np.clip(q, 0, None)
    emb = q.sum(axis=0)
    return synth.GeneratorSpec(
        emb, q, DEFAULT_ALPHABET, n_hosts=n_hosts, events_per_host=events_per_host, seed=seed
    )


@pytest.fixture
def alphabet():
    return DEFAULT_ALPHABET
