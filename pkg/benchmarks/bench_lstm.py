"""Time the compiled LSTM kernels against the numpy fallback.

    python3 benchmarks/bench_lstm.py --hidden 128 --steps 300 --repeat 20
"""

import argparse
import timeit

import numpy as np

from para_rank._kernels import BACKEND, fallback

try:
    from para_rank._kernels import _lstm as compiled
except ImportError:
    compiled = None


def inputs(steps, hidden, seed):
    rng = np.random.default_rng(seed)
    xw = rng.normal(scale=0.5, size=(steps, 4 * hidden))
    U = rng.normal(scale=1 / np.sqrt(hidden), size=(4 * hidden, hidden))
    dh = rng.normal(size=(steps, hidden))
    return xw, U, dh


def bench(kernel, xw, U, dh, repeat):
    gates, c, h = kernel.lstm_forward(xw, U)
    fwd = min(timeit.repeat(lambda: kernel.lstm_forward(xw, U), number=1, repeat=repeat))
    bwd = min(timeit.repeat(lambda: kernel.lstm_backward(gates, c, h, U, dh), number=1, repeat=repeat))
    return fwd, bwd, h


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hidden", type=int, nargs="+", default=[16, 128])
    ap.add_argument("--steps", type=int, nargs="+", default=[50, 300])
    ap.add_argument("--repeat", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    print(f"active backend: {BACKEND}")
    if compiled is None:
        print("compiled extension not built; timing the fallback only")
    print(f"{'hidden':>6} {'steps':>5} {'kernel':>8} {'forward ms':>11} {'backward ms':>12} {'speedup':>8}")
    for hidden in args.hidden:
        for steps in args.steps:
            xw, U, dh = inputs(steps, hidden, args.seed)
            f_py, b_py, h_py = bench(fallback, xw, U, dh, args.repeat)
            print(f"{hidden:>6} {steps:>5} {'python':>8} {f_py * 1e3:>11.3f} {b_py * 1e3:>12.3f} {'':>8}")
            if compiled is not None:
                f_c, b_c, h_c = bench(compiled, xw, U, dh, args.repeat)
                diff = float(np.max(np.abs(h_c - h_py)))
                speed = (f_py + b_py) / (f_c + b_c)
                print(f"{hidden:>6} {steps:>5} {'compiled':>8} {f_c * 1e3:>11.3f} {b_c * 1e3:>12.3f} {speed:>7.1f}x  max|h_c - h_py|={diff:.1e}")


if __name__ == "__main__":
    main()
