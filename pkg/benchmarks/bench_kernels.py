"""Compare the compiled and numpy trellis kernels.

Usage: python3 benchmarks/bench_kernels.py [--batch 2000] [--n-bits 128] [--repeat 5]

Both backends run on the same inputs; the script checks that their outputs
agree before timing them.
"""

import argparse
import time

import numpy as np

from harqerr import _pykernels
from harqerr.phy_sim import CodeSpec

try:
    from harqerr import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=2000)
    ap.add_argument("--n-bits", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--snr-db", type=float, default=2.0)
    args = ap.parse_args()

    code = CodeSpec(n_bits=args.n_bits)
    tr = code.trellis
    rng = np.random.default_rng(0)
    msgs = rng.integers(0, 2, (args.batch, args.n_bits), dtype=np.uint8)
    enc_args = (tr["next_state"], tr["parity"], tr["tail_u"], code.memory)
    dec_args = (tr["pred"], tr["pred_u"], tr["pred_par"], tr["tail_ok"], code.n_bits, code.memory)
    x = 1.0 - 2.0 * _pykernels.encode_batch(msgs, *enc_args)
    y = np.sqrt(10 ** (args.snr_db / 10)) * x + rng.standard_normal(x.shape)

    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
        assert np.array_equal(_ckernels.encode_batch(msgs, *enc_args), _pykernels.encode_batch(msgs, *enc_args))
        assert np.array_equal(_ckernels.viterbi_batch(y, *dec_args), _pykernels.viterbi_batch(y, *dec_args))
    else:
        print("compiled extension not built; timing the numpy backend only")

    print(f"batch={args.batch} n_bits={args.n_bits} snr={args.snr_db} dB, best of {args.repeat}")
    print(f"{'backend':8s} {'encode ms':>10s} {'viterbi ms':>11s} {'decodes/s':>11s}")
    results = {}
    for name, mod in backends.items():
        t_enc = best_of(lambda: mod.encode_batch(msgs, *enc_args), args.repeat)
        t_dec = best_of(lambda: mod.viterbi_batch(y, *dec_args), args.repeat)
        results[name] = t_dec
        print(f"{name:8s} {1e3 * t_enc:10.2f} {1e3 * t_dec:11.2f} {args.batch / t_dec:11.0f}")
    if len(results) == 2:
        print(f"viterbi speedup: {results['python'] / results['cython']:.1f}x")


if __name__ == "__main__":
    main()
