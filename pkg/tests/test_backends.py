import os
import subprocess
import sys

import numpy as np
import pytest

import ilptemper
from ilptemper import _backend
from ilptemper.core import EnergyParams, init_state

from conftest import drive


def test_python_backend_always_available():
    assert "python" in _backend.available()
    assert _backend.get("python").__name__.endswith("_pykernels")
    with pytest.raises(ValueError):
        _backend.get("fortran")


def test_default_backend_prefers_compiled():
    want = "cython" if "cython" in _backend.available() else "python"
    if os.environ.get("ILPTEMPER_BACKEND", "").lower() == "python":
        want = "python"
    assert ilptemper.BACKEND == want


def test_environment_forces_fallback():
    env = dict(os.environ, ILPTEMPER_BACKEND="python")
    r = subprocess.run([sys.executable, "-c", "import ilptemper; print(ilptemper.BACKEND)"],
                       env=env, capture_output=True, text=True, check=True)
    assert r.stdout.strip() == "python"


def test_arrays_are_cached_per_backend(ref3, backend):
    a = _backend.arrays(ref3, backend)
    assert _backend.arrays(ref3, backend) is a


def test_refresh_reconciles_caches(ref3, backend):
    # a tiny refresh period exercises the full recompute path inside the kernel
    p = EnergyParams(5.0, 2)
    s = init_state(ref3, [1, 1, 1], p)
    u = np.random.default_rng(0).random(2 * 500)
    drive(backend, ref3, s, u, 500, 1.0, "rwm", refresh_every=3)
    fresh = init_state(ref3, s.x, p)
    assert s.act.tolist() == fresh.act.tolist()
    assert s.energy == fresh.energy
    assert s.flips[0] < 3
