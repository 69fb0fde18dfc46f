"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is checked for agreement between the two paths before timing.
"""

import argparse
import timeit

import numpy as np

from privrl import _accel


def spd(rng, d, n=None):
    shape = (d, d) if n is None else (n, d, d)
    g = rng.standard_normal(shape)
    return g @ np.swapaxes(g, -1, -2) + d * np.eye(d)


def cases(rng):
    # mixture planning for S=4, A=2, H=3 (d = 32)
    S, A, H = 4, 2, 3
    d = S * S * A
    rewards = rng.uniform(size=(H, S, A))
    mix = (rewards, spd(rng, d, H), rng.standard_normal((H, d)) * 0.1, 2.0, 0.5, float(H))
    # linear Q table for S=20, A=4, d=16
    phi = rng.uniform(size=(20, 4, 16))
    lin = (phi, spd(rng, 16), rng.standard_normal(16), 1.5, 5.0)
    a64 = spd(rng, 64)
    low = np.linalg.cholesky(a64)
    xs = rng.standard_normal((256, 64))
    return {
        "mixture_plan": ("mixture_plan", mix),
        "linear_q_table": ("linear_q_table", lin),
        "cholesky d=64": ("cholesky", (a64,)),
        "inv_norms 256x64": ("inv_norms", (low, xs)),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.allclose(a, b, rtol=1e-10, atol=1e-12)
    return a == b


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=2000)
    args = parser.parse_args(argv)
    if _accel.numba_impl is None:
        print("numba is unavailable; nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}{'numpy us':>12}{'numba us':>12}{'speedup':>10}")
    for label, (name, call_args) in cases(rng).items():
        fast, slow = getattr(_accel.numba_impl, name), getattr(_accel.numpy_impl, name)
        if not same(fast(*call_args), slow(*call_args)):  # also triggers compilation
            raise SystemExit(f"{label}: backends disagree")
        t_np = min(timeit.repeat(lambda: slow(*call_args), number=args.repeat, repeat=3)) / args.repeat
        t_nb = min(timeit.repeat(lambda: fast(*call_args), number=args.repeat, repeat=3)) / args.repeat
        print(f"{label:<20}{t_np * 1e6:>12.1f}{t_nb * 1e6:>12.1f}{t_np / t_nb:>9.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
