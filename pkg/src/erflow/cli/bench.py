"""Timing of the element kernels under both backends."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import kernels


@dataclass
class BenchRow:
    name: str
    backend: str
    seconds: float
    repeats: int
    max_diff: float = 0.0


def _best_of(fn: Callable, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def kernel_cases(n_elements: int = 4096, seed: int = 42):
    """Random inputs shaped like P2 vector data on a crossed mesh with the nonlinear rule."""
    rng = np.random.default_rng(seed)
    T, Q, m, n = n_elements, 12, 3, 12
    B = rng.standard_normal((T, Q, m, n))
    D = rng.standard_normal((T, Q, m, m))
    w = rng.random((T, Q))
    L = rng.standard_normal((T, Q, n))
    s = rng.standard_normal((T, Q, m))
    return {
        "weighted_gram": lambda k: k.weighted_gram(B, D, w),
        "weighted_outer": lambda k: k.weighted_outer(L, L, w),
        "weighted_apply": lambda k: k.weighted_apply(B, s, w),
    }


def available_backends() -> list[str]:
    return ["compiled", "python"] if kernels.compiled is not None else ["python"]


def bench_kernels(repeats: int = 5, n_elements: int = 4096, seed: int = 42) -> list[BenchRow]:
    rows = []
    for name, case in kernel_cases(n_elements, seed).items():
        ref = case(kernels.python)
        for b in available_backends():
            mod = kernels.backend(b)
            diff = float(np.max(np.abs(case(mod) - ref)))
            rows.append(BenchRow(name, b, _best_of(lambda: case(mod), repeats), repeats, diff))
    return rows


def bench_callable(name: str, fn: Callable, repeats: int = 3) -> list[BenchRow]:
    """Time ``fn()`` with the global kernel backend switched to each available one."""
    rows = []
    for b in available_backends():
        with kernels.use_backend(b):
            rows.append(BenchRow(name, b, _best_of(fn, repeats), repeats))
    return rows


def bench_tangent(nx: int = 32, repeats: int = 3) -> list[BenchRow]:
    from ..mesh import build_rectangle_mesh
    from ..stokes_solvers import FlowProblem
    from ..viscosity import acceptance_model

    prob = FlowProblem(build_rectangle_mesh(1.0, 1.0, nx, nx), acceptance_model(), E=(1.0, 0.5))
    v = np.random.default_rng(0).standard_normal(prob.vspace.ndof)
    v[prob.vspace.dirichlet_dofs] = 0.0
    return bench_callable(f"tangent assembly {nx}x{nx}", lambda: prob.ctx.tangent(v), repeats)


def format_rows(rows: list[BenchRow]) -> str:
    lines = [f"{'case':<28} {'backend':<9} {'best [ms]':>10} {'speedup':>8} {'max diff':>9}"]
    base = {r.name: r.seconds for r in rows if r.backend == "python"}
    for r in rows:
        speed = base.get(r.name, np.nan) / r.seconds if r.seconds > 0 else np.nan
        lines.append(f"{r.name:<28} {r.backend:<9} {1e3 * r.seconds:>10.2f} {speed:>8.2f} {r.max_diff:>9.1e}")
    return "\n".join(lines)


def rows_to_csv(rows: list[BenchRow]) -> str:
    out = ["case,backend,seconds,repeats,max_diff"]
    out += [f"{r.name},{r.backend},{r.seconds!r},{r.repeats},{r.max_diff!r}" for r in rows]
    return "\n".join(out) + "\n"
