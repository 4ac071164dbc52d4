import os
import subprocess
import sys

import numpy as np
import pytest

from harqerr import _pykernels, kernels
from harqerr.phy_sim import CodeSpec

try:
    from harqerr import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")


@needs_ext
def test_encode_backends_identical():
    code = CodeSpec(n_bits=96)
    tr = code.trellis
    msgs = np.random.default_rng(0).integers(0, 2, (300, 96), dtype=np.uint8)
    a = _pykernels.encode_batch(msgs, tr["next_state"], tr["parity"], tr["tail_u"], code.memory)
    b = _ckernels.encode_batch(msgs, tr["next_state"], tr["parity"], tr["tail_u"], code.memory)
    assert np.array_equal(a, b)


@needs_ext
@pytest.mark.parametrize("scale", [0.0, 0.7, 3.0])
def test_viterbi_backends_identical(scale):
    code = CodeSpec(n_bits=96)
    tr = code.trellis
    rng = np.random.default_rng(1)
    msgs = rng.integers(0, 2, (300, 96), dtype=np.uint8)
    x = 1.0 - 2.0 * _pykernels.encode_batch(msgs, tr["next_state"], tr["parity"], tr["tail_u"], code.memory)
    y = scale * x + rng.standard_normal(x.shape)
    y[:50] = np.round(y[:50])  # exact ties
    args = (tr["pred"], tr["pred_u"], tr["pred_par"], tr["tail_ok"], code.n_bits, code.memory)
    assert np.array_equal(_pykernels.viterbi_batch(y, *args), _ckernels.viterbi_batch(y, *args))


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")
    if _ckernels is not None and not os.environ.get("HARQERR_PURE_PYTHON"):
        assert kernels.BACKEND == "cython"


def test_pure_python_env_forces_fallback():
    env = dict(os.environ, HARQERR_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from harqerr import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
