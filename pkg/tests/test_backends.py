import json
import os
import subprocess
import sys

import numpy as np
import pytest

from qcilab import _accel

compiled = _accel.compiled_backend()
needs_numba = pytest.mark.skipif(compiled is None, reason="numba unavailable")

PROBE = """
import json, numpy as np
import qcilab
from qcilab import kernels
from qcilab.mollifiers import make_mollifier
from qcilab.regions import SpectralRegion
from qcilab.cutoffs import identity_cutoff
from qcilab.spectrum import torus_box_spectrum
spec = torus_box_spectrum(2, (40, 40))
reg = SpectralRegion.box(30.5, (0.6, 0.8))
k = kernels.projector_kernel(spec, reg, identity_cutoff(), [0.3, 1.1], [0.35, 1.0])
mol = make_mollifier(0.75)
sv = kernels.smoothed_measure_kernel(spec, np.array([12.0, 16.0]), mol, identity_cutoff(),
                                     [0.3, 1.1], [0.3, 1.1])
print(json.dumps({"backend": qcilab.BACKEND, "k": [k.real, k.imag], "s": complex(sv.value).real,
                  "rho": mol.rho(np.linspace(-40, 40, 101)).tolist()}))
"""


def _probe(disable: bool) -> dict:
    env = dict(os.environ)
    env.pop("QCI_DISABLE_NUMBA", None)
    if disable:
        env["QCI_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", PROBE], env=env, capture_output=True, text=True,
                         check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


@needs_numba
def test_compensated_sum_parity(rng):
    ref = _accel.reference_backend()["compensated_sum"]
    for size in (1, 7, 1000, 100_000):
        v = rng.normal(size=size) * np.exp(rng.uniform(-20, 20, size))
        a, b = ref(v), compiled["compensated_sum"](v)
        # Neumaier error bound: 2u|sum| + O(n u^2) sum|v|; fsum is exactly rounded
        eps = np.finfo(float).eps
        assert abs(a - b) <= 2 * eps * abs(a) + size * eps**2 * np.sum(np.abs(v))


@needs_numba
def test_hermite_eval_parity(rng):
    ref = _accel.reference_backend()["hermite_eval"]
    x = np.linspace(0, 10, 1001)
    f, df = np.exp(-x) * np.cos(x), -np.exp(-x) * (np.cos(x) + np.sin(x))
    s = rng.uniform(-12, 12, 5000)
    # the two evaluate the cubic in a different order; allow a few ulps of the table scale
    scale = np.max(np.abs(f))
    for parity in (1, -1):
        np.testing.assert_allclose(compiled["hermite_eval"](f, df, 0.01, s, parity),
                                   ref(f, df, 0.01, s, parity), rtol=0, atol=8 * np.spacing(scale))


@needs_numba
def test_numpy_fallback_matches_numba_end_to_end():
    fast, slow = _probe(False), _probe(True)
    assert fast["backend"] == "numba" and slow["backend"] == "numpy"
    np.testing.assert_allclose(slow["k"], fast["k"], rtol=1e-12, atol=1e-14)
    assert slow["s"] == pytest.approx(fast["s"], rel=1e-12)
    np.testing.assert_allclose(slow["rho"], fast["rho"], rtol=1e-13, atol=1e-18)
