import os
import subprocess
import sys

import numpy as np
import pytest

from sealmr import kernels


def _case(n, k, seed):
    rng = np.random.default_rng(seed)
    pts = np.round(rng.uniform(0, 100, (n, 2)), 3)
    # some exact ties: centers duplicated
    centers = np.round(rng.uniform(0, 100, (k, 2)), 3)
    centers[-1] = centers[0]
    return pts, centers


@pytest.mark.skipif(kernels.assign_accumulate_numba is None, reason="numba unavailable")
@pytest.mark.parametrize("n,k,seed", [(1, 1, 0), (100, 3, 1), (20000, 10, 2), (9000, 50, 3)])
def test_numba_matches_numpy(n, k, seed):
    pts, centers = _case(n, k, seed)
    la, sa, ca = kernels.assign_accumulate_numpy(pts, centers)
    lb, sb, cb = kernels.assign_accumulate_numba(pts, centers)
    assert np.array_equal(la, lb)
    assert np.array_equal(ca, cb)
    assert np.array_equal(sa, sb)  # same summation order, so bit-identical
    if k > 1:
        assert not (la == k - 1).any()  # duplicate center never wins a tie


def _backend_with(env_value):
    env = dict(os.environ)
    if env_value is None:
        env.pop("SEALMR_DISABLE_NUMBA", None)
    else:
        env["SEALMR_DISABLE_NUMBA"] = env_value
    out = subprocess.run([sys.executable, "-c", "from sealmr import kernels; print(kernels.backend())"], env=env, capture_output=True, text=True, check=True)
    return out.stdout.strip()


def test_env_flag_selects_backend():
    assert _backend_with("1") == "numpy"
    assert _backend_with(None) == ("numba" if kernels.HAVE_NUMBA or kernels._DISABLED else "numpy")
