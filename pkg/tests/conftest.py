import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from ilptemper import _backend  # noqa: E402
from ilptemper.core import build_instance  # noqa: E402

from oracles import triplets_of  # noqa: E402

BACKENDS = _backend.available()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def ref3():
    """min x0 - 2 x1 + 3 x2  s.t.  x0 + x1 <= 1,  x1 + x2 <= 1."""
    return build_instance(3, 2, [1, -2, 3], [(0, 0, 1), (0, 1, 1), (1, 1, 1), (1, 2, 1)],
                          [1, 1], name="ref3")


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def from_dense(A, b, c, name="dense"):
    A = np.asarray(A, dtype=np.float64).reshape(len(b), len(c))
    return build_instance(len(c), len(b), c, triplets_of(A), b, name=name)


def drive(backend, inst, s, uniforms, K, tau, kind="mlbp", L=1, joint=False,
          log_gamma=0.0, refresh_every=None):
    """Advance ``s`` in place with the named kernel; returns (accepted, energies)."""
    from ilptemper.core import REFRESH_EVERY
    kern = _backend.get(backend)
    energies = np.empty(K)
    ev_step = np.empty(K, dtype=np.int64)
    ev_obj = np.empty(K)
    best_x = np.zeros(inst.n, dtype=np.int8)
    best = np.zeros(2)
    acc, _ = kern.run_chain(_backend.arrays(inst, backend), s, np.asarray(uniforms, dtype=np.float64),
                            0, K, float(np.log(tau)), log_gamma, 0, 0 if kind == "mlbp" else 1,
                            L, joint, refresh_every or REFRESH_EVERY, energies, ev_step, ev_obj,
                            best_x, best)
    return acc, energies


# ---- acceptance report ------------------------------------------------------------

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _RESULTS[num] = (title, rep.passed, detail if rep.passed else _first_line(rep))


def _first_line(rep):
    text = str(rep.longrepr) if rep.longrepr else "failed"
    for line in text.splitlines():
        if line.startswith("E "):
            return line[1:].strip()
    return text.splitlines()[-1] if text else "failed"


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        title, ok, detail = _RESULTS[num]
        line = f"criterion {num:>2} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
