"""Compare the numba kernels against their numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py``. Each kernel is checked for
agreement first, then timed with the best of several repeats (the numba
path is warmed up so compile time is excluded).
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from vemspaces import _kernels as K
from vemspaces.polycalc import exponents


def _cases(rng: np.random.Generator, size: int) -> dict[str, tuple]:
    xi = rng.uniform(-1.0, 1.0, (size, 2))
    exps = exponents(6, 2)
    left = rng.standard_normal((size // 64, 64, 28, 2))
    right = rng.standard_normal((size // 64, 64, 15, 2))
    weights = rng.uniform(0.0, 1.0, (size // 64, 64))
    corners = rng.uniform(0.0, 1.0, (256, 1, 2)) + rng.uniform(0.0, 0.1, (256, 3, 2))
    points = rng.uniform(0.0, 1.1, (size, 2))
    return {
        "vandermonde": (xi, exps),
        "element_gram": (left, right, weights),
        "locate_points": (points, corners),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=20000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not K._HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}  agree")
    for name, call_args in _cases(rng, args.size).items():
        fast = getattr(K, f"{name}_numba")
        slow = getattr(K, f"{name}_numpy")
        ref = slow(*call_args)
        got = fast(*call_args)
        agree = np.allclose(ref, got, rtol=1e-12, atol=1e-12) if ref.dtype.kind == "f" else bool(np.all(ref == got))
        t_slow = min(timeit.repeat(lambda: slow(*call_args), number=1, repeat=args.repeat))
        t_fast = min(timeit.repeat(lambda: fast(*call_args), number=1, repeat=args.repeat))
        print(f"{name:<16}{1e3 * t_slow:>12.3f}{1e3 * t_fast:>12.3f}{t_slow / t_fast:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
