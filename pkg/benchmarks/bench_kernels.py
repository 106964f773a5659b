"""Compare the numba and numpy kernel backends.

Times im2col, col2im and the z-buffer scatter on shapes from the default
network and view grid, plus one full forward pass at 120x120, and checks
that both backends return identical arrays.

    python benchmarks/bench_kernels.py [--repeat 20] [--json out.json]
"""

import argparse
import json
import time

import numpy as np

from mvgrasp import _kernels
from mvgrasp.network import build_network
from mvgrasp.train import calibrate_batchnorm


def _time(fn, repeat):
    fn()  # warmup (and numba compilation)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return 1000.0 * best


def cases(rng):
    x1 = rng.standard_normal((1, 1, 128, 128)).astype(np.float32)  # first conv, 120 + pad
    x2 = rng.standard_normal((8, 16, 14, 14)).astype(np.float32)
    cols = rng.standard_normal((1, 32, 9, 9, 40, 40)).astype(np.float32)  # last tconv backward shape
    flat = rng.integers(0, 120 * 120, 20000)
    depth = rng.uniform(-0.3, 0.3, 20000)
    net = build_network(seed=0)
    calibrate_batchnorm(net, rng.standard_normal((2, 1, 120, 120)))
    img = rng.standard_normal((1, 1, 120, 120)).astype(np.float32)
    return {
        "im2col 9x9/s3 on 128x128": lambda: _kernels.im2col(x1, 9, 9, 3, 40, 40),
        "im2col 3x3/s1 batch 8x16ch": lambda: _kernels.im2col(x2, 3, 3, 1, 12, 12),
        "col2im 9x9/s3 32ch": lambda: _kernels.col2im(cols, 129, 129, 3),
        "zbuffer 20k points 120x120": lambda: _kernels.zbuffer(flat, depth, 120 * 120),
        "network forward 120x120": lambda: net.forward(img),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    backends = [b for b in _kernels.BACKENDS if b != "numba" or _kernels.HAVE_NUMBA]
    initial = _kernels.get_backend()
    results = {}
    outputs = {}
    try:
        for b in backends:
            _kernels.set_backend(b)
            for name, fn in cases(np.random.default_rng(0)).items():
                results.setdefault(name, {})[b] = _time(fn, args.repeat)
                outputs.setdefault(name, {})[b] = fn()
    finally:
        _kernels.set_backend(initial)
    print(f"{'case':<30}" + "".join(f"{b + ' ms':>12}" for b in backends) + f"{'speedup':>10}{'equal':>7}")
    for name, t in results.items():
        outs = list(outputs[name].values())
        same = all(np.array_equal(outs[0], o) for o in outs[1:])
        speed = t["numpy"] / t["numba"] if "numba" in t else float("nan")
        print(f"{name:<30}" + "".join(f"{t[b]:>12.3f}" for b in backends) + f"{speed:>9.2f}x{str(same):>7}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
