"""Command line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..mesh import MeshError, build_rectangle_mesh, check_mesh, load_mesh, rectangle_tagging, refine_uniform, save_mesh
from . import bench, validation
from .config import ConfigSyntaxError, load_config
from .scenario import EXIT_CODES, ScenarioError, build_scenario, parse_side, run_scenario
from .writers import FORMATS

EXIT_FAILED_CHECK = 1


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output-dir", default=".", help="directory for output files (default: current)")
    p.add_argument("--format", choices=FORMATS, default=None, help="field output format")
    p.add_argument("--seed", type=int, default=None, help="seed for sampling diagnostics (default 42)")
    p.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="erflow", description="Stationary electrorheological flow solver")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run a scenario file")
    p.add_argument("config", type=Path)
    _common(p)

    p = sub.add_parser("validate", help="run an acceptance suite")
    p.add_argument("suite", choices=list(validation.SUITES) + ["all"])
    _common(p)

    p = sub.add_parser("infsup", help="discrete inf-sup constants over a refinement sequence")
    p.add_argument("sizes", type=int, nargs="*", default=[8, 16, 32], help="cells per side (default 8 16 32)")
    p.add_argument("--width", type=float, default=1.0)
    p.add_argument("--height", type=float, default=1.0)
    p.add_argument("--pair", choices=["taylor-hood", "p1p1"], default="taylor-hood")
    _common(p)

    p = sub.add_parser("mesh", help="mesh utilities")
    msub = p.add_subparsers(dest="mesh_command", required=True)
    g = msub.add_parser("gen", help="structured rectangle mesh")
    g.add_argument("output", type=Path)
    g.add_argument("--width", type=float, default=1.0)
    g.add_argument("--height", type=float, default=1.0)
    g.add_argument("--nx", type=int, default=8)
    g.add_argument("--ny", type=int, default=8)
    g.add_argument("--diagonal", action="store_true", help="two triangles per cell instead of four")
    for side in ("left", "right", "bottom", "top"):
        g.add_argument(f"--{side}", default="DIRICHLET", help="tags, e.g. 'DIRICHLET; ELECTRODE 1'")
    r = msub.add_parser("refine", help="uniform red refinement")
    r.add_argument("input", type=Path)
    r.add_argument("output", type=Path)
    r.add_argument("--levels", type=int, default=1)
    c = msub.add_parser("check", help="validate a mesh file and print statistics")
    c.add_argument("input", type=Path)
    for q in (g, r, c):
        q.add_argument("--verbose", "-v", action="store_true")

    p = sub.add_parser("bench", help="compare compiled and pure-Python kernels")
    p.add_argument("config", type=Path, nargs="?", help="optional scenario to time end to end")
    p.add_argument("--repeats", type=int, default=3)
    _common(p)
    return ap


def _cmd_solve(args) -> int:
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"error: [config] cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]
    except ConfigSyntaxError as exc:
        print(f"error: [config] {exc}", file=sys.stderr)
        return EXIT_CODES["config"]
    try:
        sc = build_scenario(cfg)
        if args.seed is not None:
            sc.seed = args.seed
        res = run_scenario(sc, args.output_dir, args.format)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    if res.report is not None:
        print(res.report.summary())
    if res.diagnostics is not None:
        print(res.diagnostics.summary())
    for f in res.files:
        print(f"wrote {f}")
    return 0


def _cmd_validate(args) -> int:
    suites = list(validation.SUITES) if args.suite == "all" else [args.suite]
    seed = 42 if args.seed is None else args.seed
    results = []
    for s in suites:
        results += validation.run_suite(s, seed, echo=print)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"validation_{args.suite}.csv"
    lines = ["criterion,name,passed,runtime_s,detail"]
    for r in results:
        detail = r.detail.replace('"', "'")
        lines.append(f'{r.number},{r.name},{int(r.passed)},{r.runtime:.3f},"{detail}"')
    path.write_text("\n".join(lines) + "\n")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed; table in {path}")
    return EXIT_FAILED_CHECK if failed else 0


def _cmd_infsup(args) -> int:
    from ..fem_core.infsup import estimate_discrete_infsup
    from ..fem_core.space import FeSpace

    vdeg = 2 if args.pair == "taylor-hood" else 1
    print(f"{'mesh':>9} {'beta':>12} {'spurious':>9}")
    betas = []
    for n in args.sizes:
        ny = max(1, round(n * args.height / args.width))
        mesh = build_rectangle_mesh(args.width, args.height, n, ny)
        res = estimate_discrete_infsup(FeSpace(mesh, vdeg, 2), FeSpace(mesh, 1, 1, constrained=()))
        betas.append(res.beta)
        print(f"{n:>4}x{ny:<4} {res.beta:>12.6f} {res.spurious_modes:>9d}")
    print(f"min beta = {min(betas):.6f}")
    return 0


def _cmd_mesh(args) -> int:
    try:
        if args.mesh_command == "gen":
            tags = rectangle_tagging(**{s: parse_side(getattr(args, s)) for s in ("left", "right", "bottom", "top")})
            mesh = build_rectangle_mesh(args.width, args.height, args.nx, args.ny, tagging=tags,
                                        crossed=not args.diagonal)
            args.output.write_text(save_mesh(mesh))
        elif args.mesh_command == "refine":
            mesh = load_mesh(args.input.read_text())
            for _ in range(args.levels):
                mesh = refine_uniform(mesh)
            args.output.write_text(save_mesh(mesh))
        else:
            mesh = load_mesh(args.input.read_text())
        for k, v in check_mesh(mesh).items():
            print(f"{k}: {v}")
    except (MeshError, ConfigSyntaxError, OSError) as exc:
        print(f"error: [mesh] {exc}", file=sys.stderr)
        return EXIT_CODES["mesh"]
    return 0


def _cmd_bench(args) -> int:
    rows = bench.bench_kernels(repeats=args.repeats) + bench.bench_tangent(repeats=args.repeats)
    if args.config is not None:
        try:
            sc = build_scenario(load_config(args.config))
        except (ScenarioError, ConfigSyntaxError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CODES["config"]
        out = Path(args.output_dir) / "bench_run"
        rows += bench.bench_callable(f"scenario {args.config.name}", lambda: run_scenario(sc, out), args.repeats)
    print(bench.format_rows(rows))
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.csv").write_text(bench.rows_to_csv(rows))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"solve": _cmd_solve, "validate": _cmd_validate, "infsup": _cmd_infsup,
               "mesh": _cmd_mesh, "bench": _cmd_bench}[args.command]
    return handler(args)
