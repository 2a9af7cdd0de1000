"""Compare the numba and pure-numpy kernel paths.

    python3 benchmarks/bench_kernels.py            # kernels + one training epoch per path
    python3 benchmarks/bench_kernels.py --no-epoch # kernels only

Kernel timings call both implementations directly. The epoch timing runs a
child process per path, since the dispatch is fixed at import time by
MET2IMG_NUMBA.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from met2img import _kernels
from met2img.embedding import pairwise_affinities

EPOCH_SNIPPET = """
import time, numpy as np
from met2img import _kernels
from met2img.nn import NetworkSpec, TrainingConfig, build, train
rng = np.random.default_rng(0)
X = rng.random((180, 3, {side}, {side})).astype(np.float32)
y = np.arange(180) % 2
net = build(NetworkSpec().with_input(X.shape[1:]))
train(net, X[:32], y[:32], TrainingConfig(epochs=1))
t = time.perf_counter()
train(net, X, y, TrainingConfig(epochs={epochs}))
print(_kernels.USE_NUMBA, (time.perf_counter() - t) / {epochs})
"""


def best_of(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases():
    rng = np.random.default_rng(0)
    x = rng.random((20, 16, 34, 34)).astype(np.float32)
    cols = _kernels.im2col(x, 3, 3)
    dx = np.empty_like(x)
    act = rng.random((20, 16, 56, 56)).astype(np.float32)
    pooled, arg = _kernels.maxpool_forward_numpy(act, 2, 2)
    dpool = rng.random(pooled.shape).astype(np.float32)
    P = pairwise_affinities(rng.random((100, 180)), 10.0)
    Y = rng.normal(0, 1e-4, (100, 2))
    P542 = pairwise_affinities(rng.random((542, 180)), 10.0)
    Y542 = rng.normal(0, 1e-4, (542, 2))
    return [
        ("col2im 20x16x34x34", lambda: _kernels.col2im_numpy(cols, dx, 3, 3),
         lambda: _kernels.col2im_numba(cols, dx, 3, 3)),
        ("maxpool fwd 20x16x56x56", lambda: _kernels.maxpool_forward_numpy(act, 2, 2),
         lambda: _kernels.maxpool_forward_numba(act, 2, 2)),
        ("maxpool bwd 20x16x56x56", lambda: _kernels.maxpool_backward_numpy(dpool, arg, 56, 56, 2, 2),
         lambda: _kernels.maxpool_backward_numba(dpool, arg, 56, 56, 2, 2)),
        ("tsne grad n=100", lambda: _kernels.tsne_grad_numpy(Y, P), lambda: _kernels.tsne_grad_numba(Y, P)),
        ("tsne grad n=542", lambda: _kernels.tsne_grad_numpy(Y542, P542),
         lambda: _kernels.tsne_grad_numba(Y542, P542)),
    ]


def epoch_time(use_numba, side, epochs):
    env = dict(os.environ, MET2IMG_NUMBA="1" if use_numba else "0")
    code = EPOCH_SNIPPET.format(side=side, epochs=epochs)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    flag, seconds = out.stdout.split()
    assert flag == str(use_numba)
    return float(seconds)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--no-epoch", action="store_true")
    ap.add_argument("--epochs", type=int, default=2)
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")

    print(f"{'kernel':<26} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, np_fn, nb_fn in kernel_cases():
        a, b = best_of(np_fn, args.repeat), best_of(nb_fn, args.repeat)
        print(f"{name:<26} {a * 1e3:10.2f} {b * 1e3:10.2f} {a / b:8.2f}")

    if not args.no_epoch:
        print(f"\n{'train epoch, 180 samples':<26} {'numpy s':>10} {'numba s':>10} {'speedup':>8}")
        for side in (32, 64):
            a = epoch_time(False, side, args.epochs)
            b = epoch_time(True, side, args.epochs)
            print(f"{f'conv2d:5:20 {side}x{side}':<26} {a:10.2f} {b:10.2f} {a / b:8.2f}")


if __name__ == "__main__":
    main()
