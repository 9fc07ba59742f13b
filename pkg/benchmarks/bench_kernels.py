"""Time the compiled rollout kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py --batch 1000 --repeat 5
"""

import argparse
import timeit

import numpy as np

from compgrad import kernels
from compgrad.envs import make_env


def bench(task, batch, repeat, seed):
    env = make_env(task)
    rng = np.random.default_rng(seed)
    U = env.initial_controls() + (2.0 if task == "pushing" else 0.0) + 0.1 * rng.standard_normal((batch, env.dim))
    rows = []
    backends = [("python", kernels.python_backend)]
    if kernels.compiled_backend is not None:
        backends.append(("cython", kernels.compiled_backend))
    ref = None
    for name, backend in backends:
        out = env._kernel(U, backend=backend)
        if ref is None:
            ref = out
        else:
            err = max(float(np.max(np.abs(a - b))) for a, b in zip(out, ref))
            assert err < 1e-9, f"{task}: backends disagree by {err}"
        t = min(timeit.repeat(lambda: env._kernel(U, backend=backend), number=1, repeat=repeat))
        rows.append((name, t))
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=1000)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    print(f"compiled backend available: {kernels.compiled_backend is not None}")
    print(f"{'task':<10} {'backend':<8} {'seconds':>10} {'speedup':>8}")
    for task in ("pushing", "friction"):
        rows = bench(task, args.batch, args.repeat, args.seed)
        base = rows[0][1]
        for name, t in rows:
            print(f"{task:<10} {name:<8} {t:>10.4f} {base / t:>7.1f}x")


if __name__ == "__main__":
    main()
