"""Compare the numba and numpy kernels, in-process and end to end.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The in-process part times each kernel pair directly and checks that they
agree.  The end-to-end part runs the same channel application in two
subprocesses, one with GAUSSADD_DISABLE_NUMBA=1.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from gaussadd import _kernels

END_TO_END = """
import time
import numpy as np
from gaussadd import apply_classical_noise, vacuum, _kernels
rho = vacuum(40).density()
apply_classical_noise(0.3, rho)
t = time.perf_counter()
for _ in range(3):
    apply_classical_noise(0.3, rho)
print(_kernels.backend(), (time.perf_counter() - t) / 3)
"""


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def in_process(repeat):
    if not _kernels.HAS_NUMBA:
        print("numba unavailable or disabled; in-process comparison skipped")
        return
    rng = np.random.default_rng(0)
    nus = rng.normal(size=768) + 1j * rng.normal(size=768)
    cases = [
        ("displacement d=60", lambda: _kernels._displacement_numba(0.7 + 0.2j, 60),
         lambda: _kernels._displacement_numpy(0.7 + 0.2j, 60)),
        ("displacement batch 768 x d=40", lambda: _kernels._displacement_batch_numba(nus, 40),
         lambda: _kernels._displacement_batch_numpy(nus, 40)),
    ]
    print(f"{'kernel':32s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speedup':>8s} {'max diff':>9s}")
    for name, fast, slow in cases:
        diff = float(np.abs(fast() - slow()).max())  # also triggers compilation
        t_fast, t_slow = best_of(fast, repeat), best_of(slow, repeat)
        print(f"{name:32s} {1e3 * t_fast:11.3f} {1e3 * t_slow:11.3f} {t_slow / t_fast:8.1f} {diff:9.1e}")


def end_to_end():
    print("\nnoise channel on vacuum, d=40 (per call, after warm-up)")
    for flag in ("0", "1"):
        env = dict(os.environ, GAUSSADD_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
        backend, seconds = out.stdout.split()
        print(f"  {backend:6s} {float(seconds):.3f} s")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    in_process(args.repeat)
    end_to_end()


if __name__ == "__main__":
    main()
