"""Compiled vs pure-Python element kernels.

    python3 benchmarks/bench_backends.py [--repeats N] [--elements T] [--mesh N]
"""

import argparse

from erflow.cli import bench


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--elements", type=int, default=4096)
    ap.add_argument("--mesh", type=int, default=32, help="cells per side for the assembly case")
    args = ap.parse_args()
    rows = bench.bench_kernels(args.repeats, args.elements)
    rows += bench.bench_tangent(args.mesh, args.repeats)
    print(bench.format_rows(rows))


if __name__ == "__main__":
    main()
