"""Command-line driver: ``fsconsg analyze | diff | corpus``.

Exit codes: 0 success, 1 unreadable or invalid input, 2 internal solver
error, 3 flow-sensitive result disagrees with the dense oracle.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .andersen import SolverError, build_ficonsg, wave_solve
from .consgraph import ConstraintGraphError
from .fsconsg import FsConsGError
from .fssolver import run_pipeline
from .genprog import GenConfig, generate, shrink
from .ir import IRError, Program, build_cfg, format_program, parse_program
from .oracle import DenseState, OracleError, compare, dense_fs_solve

log = logging.getLogger("flowcg")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_MISMATCH = 0, 1, 2, 3
SOLVER_ERRORS = (SolverError, OracleError, ConstraintGraphError, FsConsGError)

CSV_COLUMNS = ["seed", "stmts", "fsconsg_edges", "fsconsg_nodes", "versions", "fs_ptsets",
               "dense_ptsets", "su_count", "diff_ok", "reduction_pct"]


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def digest(obj) -> str:
    return hashlib.sha256(canonical(obj).encode()).hexdigest()


@dataclass
class RunReport:
    mode: str
    stats: dict = field(default_factory=dict)
    iterations: int = 0
    fallbacks: int = 0
    su_count: int = 0
    seconds: float = 0.0
    digest: str = ""

    def to_json(self) -> dict:
        # wall time varies run to run, so it stays out of emitted artifacts
        out = asdict(self)
        del out["seconds"]
        return out


# -- analysis runners ----------------------------------------------------------

def _run(p: Program, mode: str, *, simplify: bool, iter_cap: int | None,
         strong_updates: bool = True):
    """Return ``(result json, dot text, report)`` for one mode."""
    t0 = time.perf_counter()
    if mode == "fi":
        g = build_ficonsg(p)
        r = wave_solve(g, p, simplify=simplify, iter_cap=iter_cap)
        body = r.to_json()
        report = RunReport("fi", g.count_constraints().as_dict(), r.iterations)
        dot = g.to_dot()
    elif mode == "fs":
        pl = run_pipeline(p, simplify=simplify, iter_cap=iter_cap, strong_updates=strong_updates)
        r = pl.result
        body = r.to_json()
        report = RunReport("fs", r.stats.as_dict(), r.iterations, r.fallbacks, len(r.su_labels))
        dot = pl.fsconsg.graph.to_dot()
    else:
        d = dense_fs_solve(build_cfg(p), p, round_cap=iter_cap)
        body = d.to_json()
        report = RunReport("dense", {"ptsets": d.distinct_sets()}, d.rounds, 0,
                           len(d.strong_labels))
        dot = _dense_dot(p, d)
    report.seconds = time.perf_counter() - t0
    report.digest = digest(body)
    return body, dot, report


def _dense_dot(p: Program, d: DenseState) -> str:
    cfg = build_cfg(p).with_bindings(d.callgraph)
    lines = ["digraph dense {"]
    for lab in cfg.nodes:
        facts = "; ".join(f"{o}={{{','.join(sorted(s))}}}"
                          for o, s in sorted(d.out_map[lab].items()))
        text = str(p.statements[lab]).replace('"', "'")
        lines.append(f'  "{lab}" [label="{text}\\n{facts}", shape=box];')
    for lab in cfg.nodes:
        for s in cfg.successors(lab):
            lines.append(f'  "{lab}" -> "{s}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _load(path: str, strict: bool) -> Program:
    return parse_program(Path(path).read_text(), strict=strict)


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _guarded(fn):
    """Map library exceptions onto exit codes with a one-line diagnostic."""

    def run(args) -> int:
        try:
            return fn(args)
        except (OSError, IRError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
        except SOLVER_ERRORS as exc:
            print(f"solver error: {exc}", file=sys.stderr)
            return EXIT_SOLVER

    return run


# -- commands ------------------------------------------------------------------

@_guarded
def cmd_analyze(args) -> int:
    p = _load(args.file, args.strict)
    body, dot, report = _run(p, args.mode, simplify=args.simplify, iter_cap=args.iter_cap)
    if args.emit == "json":
        text = json.dumps(body, sort_keys=True, indent=2) + "\n"
    elif args.emit == "dot":
        text = dot
    else:
        text = json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n"
    _write(text, args.out)
    print(f"{report.mode}: {report.seconds:.3f}s", file=sys.stderr)
    return EXIT_OK


def diff_program(p: Program, *, simplify: bool = True, iter_cap: int | None = None,
                 strong_updates: bool = True):
    """Mismatches between the flow-sensitive solver and the dense oracle."""
    fs = run_pipeline(p, simplify=simplify, iter_cap=iter_cap,
                      strong_updates=strong_updates).result
    dense = dense_fs_solve(build_cfg(p), p)
    return compare(fs, dense), fs, dense


@_guarded
def cmd_diff(args) -> int:
    p = _load(args.file, args.strict)
    mismatches, _, _ = diff_program(p, simplify=args.simplify, iter_cap=args.iter_cap,
                                    strong_updates=not args.no_strong_updates)
    if mismatches:
        m = mismatches[0]
        print(f"mismatch at {m.key}: expected {sorted(m.expected)}, got {sorted(m.got)}")
        print(f"{len(mismatches)} differing queries", file=sys.stderr)
        return EXIT_MISMATCH
    print("ok: flow-sensitive result matches the dense oracle")
    return EXIT_OK


def corpus_row(seed: int, c: GenConfig, *, simplify: bool = True,
               iter_cap: int | None = None) -> tuple[dict, Program, bool]:
    p = generate(c)
    mismatches, fs, dense = diff_program(p, simplify=simplify, iter_cap=iter_cap)
    fs_sets, dense_sets = fs.stats.ptsets, dense.distinct_sets()
    reduction = 100.0 * (dense_sets - fs_sets) / dense_sets if dense_sets else 0.0
    row = {
        "seed": seed,
        "stmts": len(p.statements),
        "fsconsg_edges": fs.stats.edges,
        "fsconsg_nodes": fs.stats.nodes,
        "versions": fs.stats.versioned,
        "fs_ptsets": fs_sets,
        "dense_ptsets": dense_sets,
        "su_count": len(fs.su_labels),
        "diff_ok": int(not mismatches),
        "reduction_pct": f"{reduction:.2f}",
    }
    return row, p, not mismatches


def corpus_config(args, seed: int) -> GenConfig:
    return GenConfig(seed=seed, max_stmts=args.max_stmts, max_objects=args.max_objects,
                     max_funcs=args.max_funcs, branch_prob=args.branch_prob,
                     loop_prob=args.loop_prob, indirect_call_prob=args.indirect_call_prob,
                     summary_prob=args.summary_prob)


@_guarded
def cmd_corpus(args) -> int:
    try:
        configs = [corpus_config(args, (args.seed + i) % 2 ** 64) for i in range(max(args.n, 0))]
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    rows = []
    for c in configs:
        seed = c.seed
        row, p, ok = corpus_row(seed, c, simplify=args.simplify, iter_cap=args.iter_cap)
        if not ok:
            small = shrink(p, lambda q: bool(diff_program(q, simplify=args.simplify)[0]))
            where = Path(f"{args.out or 'corpus'}.fail-{seed}.ir")
            where.write_text(format_program(small))
            print(f"seed {seed}: mismatch against the dense oracle; shrunk program saved to "
                  f"{where}", file=sys.stderr)
            return EXIT_MISMATCH
        rows.append(row)
    rows.sort(key=lambda r: r["seed"])
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    _write(buf.getvalue(), args.out)
    if rows:
        fs_total = sum(r["fs_ptsets"] for r in rows)
        dense_total = sum(r["dense_ptsets"] for r in rows)
        share = 100.0 * (dense_total - fs_total) / dense_total if dense_total else 0.0
        print(f"{len(rows)} programs, all match the oracle; points-to sets {fs_total} vs "
              f"{dense_total} dense ({share:.2f}% fewer)", file=sys.stderr)
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fsconsg",
                                 description="Flow-sensitive points-to analysis on a "
                                             "constraint graph.")
    common = argparse.ArgumentParser(add_help=False)
    strict = common.add_mutually_exclusive_group()
    strict.add_argument("--strict", dest="strict", action="store_true", default=True,
                        help="reject reads of never-assigned variables (default)")
    strict.add_argument("--lenient", dest="strict", action="store_false",
                        help="auto-declare never-assigned variables")
    common.add_argument("--no-simplify", dest="simplify", action="store_false",
                        help="disable cycle collapsing and copy-chain folding")
    common.add_argument("--iter-cap", type=int, default=None,
                        help="solver iteration cap (default 10 x labels)")
    common.add_argument("--out", default=None, help="output file (default stdout)")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="run one analysis")
    a.add_argument("file")
    a.add_argument("--mode", choices=("fi", "fs", "dense"), default="fs")
    a.add_argument("--emit", choices=("json", "dot", "stats"), default="json")
    a.set_defaults(func=cmd_analyze)

    d = sub.add_parser("diff", parents=[common], help="compare fs against the dense oracle")
    d.add_argument("file")
    # fault injection for testing the checker itself
    d.add_argument("--no-strong-updates", action="store_true", help=argparse.SUPPRESS)
    d.set_defaults(func=cmd_diff)

    c = sub.add_parser("corpus", parents=[common], help="differential run over generated programs")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--n", type=int, default=100)
    c.add_argument("--max-stmts", type=int, default=30)
    c.add_argument("--max-objects", type=int, default=6)
    c.add_argument("--max-funcs", type=int, default=1)
    c.add_argument("--branch-prob", type=float, default=0.25)
    c.add_argument("--loop-prob", type=float, default=0.15)
    c.add_argument("--indirect-call-prob", type=float, default=0.0)
    c.add_argument("--summary-prob", type=float, default=0.3)
    c.set_defaults(func=cmd_corpus)
    return ap


def configure_logging() -> None:
    level = os.environ.get("FSCONSG_LOG", "").strip().lower()
    if level == "off":
        logging.disable(logging.CRITICAL)
        return
    logging.disable(logging.NOTSET)
    logging.basicConfig(
        level={"info": logging.INFO, "debug": logging.DEBUG}.get(level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
