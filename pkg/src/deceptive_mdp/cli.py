"""Command-line entry point: train, run, batch, gen-map, render."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import harness
from .layouts import load_layout_spec, generate_layout, parse_token
from .mdp import format_map, load_map
from .render import render_svg
from .solver import SolverConfig

EXIT_OK, EXIT_SCENARIO, EXIT_USAGE = 0, 1, 2


def _write_text(path, text: str) -> None:
    """Atomic write so an interrupted run never leaves a half-written file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _emit(text: str, out) -> None:
    if out:
        _write_text(out, text)
    else:
        sys.stdout.write(text)


def cmd_train(args) -> int:
    sc = harness.load_scenario(args.scenario)
    mdp = sc.mdp()
    tables = harness.ensure_qtables(mdp, SolverConfig(sc.tolerance))
    for q in tables:
        print(f"reward {q.reward_index}: goal {q.goal} residual {q.converged_residual:.3g}")
    return EXIT_OK


def cmd_run(args) -> int:
    sc = harness.load_scenario(args.scenario)
    res = harness.run_scenario(sc)
    header = harness.csv_header(sc.checkpoints)
    _emit(harness.format_rows(header, [harness.result_row("r0001", sc, res.metrics)]), args.output)
    if args.trace:
        import io

        buf = io.StringIO()
        harness.write_trace(buf, res.episode.trace, res.snapshots, res.mdp.true_index)
        _write_text(args.trace, buf.getvalue())
    if args.svg:
        _write_text(args.svg, render_svg(res.mdp.map, res.episode.trace, res.snapshots, res.mdp.true_index))
    return EXIT_OK


def cmd_batch(args) -> int:
    scenarios = harness.load_sweep(args.sweep)
    header, rows, metrics = harness.run_batch(scenarios, workers=args.workers)
    _write_text(args.output, harness.format_rows(header, rows))
    failed = sum(m is None for m in metrics)
    if failed:
        print(f"{failed} of {len(metrics)} runs failed", file=sys.stderr)
    return EXIT_OK


def cmd_gen_map(args) -> int:
    src = args.layout_spec
    spec = load_layout_spec(src) if Path(src).is_file() else parse_token(src)
    _write_text(args.output, format_map(generate_layout(spec)))
    return EXIT_OK


def cmd_render(args) -> int:
    grid = load_map(args.map)
    trace, snaps, true_index = harness.read_trace(args.trace)
    svg = render_svg(grid, trace, snaps or None, 0 if true_index is None else true_index)
    _write_text(args.output, svg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deceptive-mdp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("train", help="solve and cache the Q-tables of a scenario")
    sp.add_argument("scenario")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("run", help="run one scenario and print its CSV row")
    sp.add_argument("scenario")
    sp.add_argument("-o", "--output", help="CSV file (default: stdout)")
    sp.add_argument("--svg")
    sp.add_argument("--trace")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("batch", help="run a sweep file")
    sp.add_argument("sweep")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_batch)

    sp = sub.add_parser("gen-map", help="generate a layout from a layout file or token")
    sp.add_argument("layout_spec")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_gen_map)

    sp = sub.add_parser("render", help="draw a map and a trace CSV as SVG")
    sp.add_argument("map")
    sp.add_argument("trace")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if getattr(args, "workers", 1) < 1:
        print("deceptive-mdp: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"deceptive-mdp: error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO


if __name__ == "__main__":
    sys.exit(main())
