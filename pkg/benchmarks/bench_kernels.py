"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]

Prints one row per kernel with the median time of each backend and the
speedup, then the same for a full training step of a 2D->3D pair.
"""

import argparse
import statistics
import time

import numpy as np

from xmvae import kernels
from xmvae.models import ModelSet
from xmvae.optim import adam_step
from xmvae.tensor import GradientTape, backward
from xmvae.vae import elbo_terms


def _median_time(fn, repeat):
    fn()  # warm-up
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times)


def kernel_cases(rng):
    n = 512 * 512
    value, grad = rng.normal(size=n), rng.normal(size=n)
    m, v = np.zeros(n), np.zeros(n)
    act = rng.normal(size=(64, 512))
    g_act = rng.normal(size=(64, 512))
    pred, gt = rng.normal(size=(1000, 63)), rng.normal(size=(1000, 63))
    errs = np.abs(rng.normal(size=21000))
    grid = np.linspace(0, 3, 51)
    return {
        "adam_update 512x512": lambda: kernels.adam_update(value, grad, m, v, 1e-4, 0.9, 0.999, 1e-8, 0.1, 0.001),
        "relu_forward 64x512": lambda: kernels.relu_forward(act),
        "relu_backward 64x512": lambda: kernels.relu_backward(act, g_act),
        "joint_errors 1000x21x3": lambda: kernels.joint_errors(pred, gt, 3),
        "fraction_at_most 21000x51": lambda: kernels.fraction_at_most(errs, grid),
    }


def train_step_case(rng):
    models = ModelSet.build(["2d"], ["3d"], seed=0)
    enc, dec = models.encoders["2d"], models.decoders["3d"]
    params = enc.parameters + dec.parameters
    x, y = rng.normal(size=(64, 42)), rng.normal(size=(64, 63))
    hand = np.ones(64)
    step_rng = np.random.default_rng(0)

    def step():
        with GradientTape() as tape:
            total, _, _ = elbo_terms(x, y, enc, dec, step_rng, handedness=hand)
        backward(total, tape)
        adam_step(params, 1e-4)

    return {"train step (batch 64, 5x512)": step}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the numpy fallback is available")
    rng = np.random.default_rng(0)
    cases = {**kernel_cases(rng), **train_step_case(rng)}
    print(f"{'case':32s}" + "".join(f"{b:>14s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases.items():
        row = []
        for b in backends:
            kernels.set_backend(b)
            row.append(_median_time(fn, args.repeat))
        line = f"{name:32s}" + "".join(f"{t * 1e3:12.3f}ms" for t in row)
        if len(row) > 1:
            line += f"{row[1] / row[0]:11.2f}x"
        print(line)
    kernels.set_backend(backends[0])


if __name__ == "__main__":
    main()
