"""Command-line interface.

One subcommand per pipeline stage plus ``run`` (the whole pipeline with
caching), ``graph`` (debug dump of one segment's dependency graph) and
``gen-synthetic`` (labeled demo corpus).  Exit codes: 0 success, 1 bad
arguments or configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
import traceback

from . import __version__
from .ddg_builder import DEFAULT_INSTRUCTION_FILTER, build_graph
from .fingerprint_store import HeaderMismatch
from .listing_parser import parse_listing
from .pipeline import (
    PipelineConfig,
    PipelineError,
    ValidationError,
    parse_ks,
    run_distances,
    run_encode,
    run_fingerprint,
    run_freq,
    run_knn,
    run_metrics,
    run_pipeline,
    run_segment_sidecars,
    run_sweep,
)
from .segmenter import TerminatorSet, segment
from .synthetic import gen_synthetic_corpus

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    """Argument errors become validation errors (exit code 1, not 2)."""

    def error(self, message):
        raise ValidationError(message)


def _seed(args) -> int:
    return args.seed if args.seed is not None else 0


def _jobs(args) -> int:
    return args.jobs if args.jobs is not None else 1


def _filter(text: str) -> frozenset[str]:
    terms = frozenset(t.strip().lower() for t in text.split(",") if t.strip())
    if not terms:
        raise ValidationError(f"empty instruction filter: {text!r}")
    return terms


# ---------------------------------------------------------------------------
# Handlers


def _cmd_freq(args) -> None:
    d = run_freq(args.input, args.dict, args.out, args.fig)
    print(f"{d.total()} dictionary terms counted -> {args.out}")


def _cmd_segment(args) -> None:
    n = run_segment_sidecars(
        args.input, args.terminators, args.out, not args.no_split_functions
    )
    print(f"{n} segments -> {args.out}")


def _cmd_graph(args) -> None:
    from pathlib import Path

    path = Path(args.input) / f"{args.sample}.asm"
    if not path.is_file():
        raise ValidationError(f"sample not found: {path}")
    instructions = parse_listing(path.read_text(encoding="latin-1"), args.sample)
    terms = TerminatorSet.load(args.terminators)
    segs = list(segment(instructions, terms, not args.no_split_functions))
    if not 0 <= args.segment < len(segs):
        raise ValidationError(
            f"segment index {args.segment} out of range (sample has {len(segs)})"
        )
    seg = segs[args.segment]
    g = build_graph(seg, _filter(args.filter))
    print(
        f"sample {args.sample} segment {seg.index}: "
        f"{len(seg)} instructions, {g.node_count} nodes, {g.edge_count} edges"
    )
    for i, label in enumerate(g.labels):
        print(f"node {i}: {label}")
    for src, dst in g.edges:
        print(f"edge {g.labels[src]} -> {g.labels[dst]}")


def _cmd_fingerprint(args) -> None:
    _, corpus = run_fingerprint(
        args.input,
        args.labels,
        args.out,
        instruction_filter=_filter(args.filter),
        iterations=args.iterations,
        terminators_path=args.terminators,
        split_at_functions=not args.no_split_functions,
        jobs=_jobs(args),
    )
    labeled = sum(1 for fp in corpus if fp.label is not None)
    print(f"{len(corpus)} fingerprints ({labeled} labeled) -> {args.out}")


def _cmd_encode(args) -> None:
    enc = run_encode(args.fingerprints, args.matrix, args.vocab)
    print(
        f"{len(enc.sample_ids)} rows x {enc.n_cols} columns "
        f"-> {args.matrix}, {args.vocab}"
    )


def _cmd_distances(args) -> None:
    run_distances(args.matrix, args.out)
    print(f"pairwise distances -> {args.out}")


def _cmd_knn(args) -> None:
    n_train, n_test = run_knn(
        args.matrix,
        args.labels,
        args.out,
        k=args.k,
        seed=_seed(args),
        train_fraction=args.train_fraction,
        stratified=args.stratified,
    )
    print(f"k={args.k}: {n_train} train / {n_test} test -> {args.out}")


def _cmd_metrics(args) -> None:
    cm = run_metrics(args.pred, args.out, args.cm, args.fig)
    from .eval_metrics import total_accuracy

    print(f"total accuracy {total_accuracy(cm):.4f} -> {args.out}")


def _cmd_sweep(args) -> None:
    rows = run_sweep(
        args.matrix,
        args.labels,
        args.out,
        ks=parse_ks(args.ks),
        seed=_seed(args),
        train_fraction=args.train_fraction,
        stratified=args.stratified,
        fig_path=args.fig,
    )
    best = max(rows, key=lambda r: r.accuracy)
    print(f"{len(rows)} k values, best k={best.k} accuracy {best.accuracy:.4f} -> {args.out}")


def _cmd_run(args) -> None:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    cfg = cfg.override(
        input_dir=args.input,
        labels=args.labels,
        out_dir=args.out,
        seed=args.seed,
        jobs=args.jobs,
    )
    manifest = run_pipeline(cfg)
    c = manifest["corpus"]
    print(
        f"{c['samples']} samples, vocabulary {c['vocabulary_dimension']}, "
        f"k={c['k']} accuracy {c['total_accuracy']:.4f} -> {cfg.out_dir}"
    )


def _cmd_gen_synthetic(args) -> None:
    manifest = gen_synthetic_corpus(args.out, args.per_class, _seed(args))
    classes = len({cls for _, cls in manifest})
    print(f"{len(manifest)} samples across {classes} classes -> {args.out}")


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="ddgf",
        description="Data-dependency-graph fingerprints for malware family classification.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--seed", type=int, default=None, help="seed for splits and generators")
    p.add_argument("--jobs", type=int, default=None, help="worker processes for per-sample stages")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.set_defaults(func=func)
        return sp

    # Accepted both before and after the subcommand; SUPPRESS keeps an unset
    # subcommand flag from clobbering a value parsed at the top level.
    def add_seed(sp):
        sp.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="seed for splits and generators")

    def add_jobs(sp):
        sp.add_argument("--jobs", type=int, default=argparse.SUPPRESS,
                        help="worker processes for per-sample stages")

    sp = add("freq", _cmd_freq, "count opcode terms over a corpus directory")
    sp.add_argument("--input", required=True, help="directory of .asm listings")
    sp.add_argument("--dict", default=None, help="term dictionary file (default: bundled)")
    sp.add_argument("--out", required=True, help="output CSV path")
    sp.add_argument("--fig", default=None, help="optional histogram PNG path")

    sp = add("segment", _cmd_segment, "write per-sample segment-span sidecar files")
    sp.add_argument("--input", required=True, help="directory of .asm listings")
    sp.add_argument("--terminators", default=None, help="terminator set file (default: bundled)")
    sp.add_argument("--out", required=True, help="output directory for .jsonl sidecars")
    sp.add_argument("--no-split-functions", action="store_true",
                    help="do not close segments at function starts")

    sp = add("graph", _cmd_graph, "print one segment's dependency graph")
    sp.add_argument("--input", required=True, help="directory of .asm listings")
    sp.add_argument("--sample", required=True, help="sample id (file stem)")
    sp.add_argument("--segment", type=int, required=True, help="segment index")
    sp.add_argument("--filter", default=",".join(sorted(DEFAULT_INSTRUCTION_FILTER)),
                    help="comma-separated mnemonics to keep")
    sp.add_argument("--terminators", default=None)
    sp.add_argument("--no-split-functions", action="store_true")

    sp = add("fingerprint", _cmd_fingerprint, "extract one fingerprint per sample")
    sp.add_argument("--input", required=True, help="directory of .asm listings")
    sp.add_argument("--labels", default=None, help="CSV of sample_id,class labels")
    sp.add_argument("--out", required=True, help="output fingerprint file (.jsonl)")
    sp.add_argument("--filter", default=",".join(sorted(DEFAULT_INSTRUCTION_FILTER)),
                    help="comma-separated mnemonics to keep")
    sp.add_argument("--iterations", type=int, default=3, help="hash refinement rounds")
    sp.add_argument("--terminators", default=None)
    sp.add_argument("--no-split-functions", action="store_true")
    add_jobs(sp)

    sp = add("encode", _cmd_encode, "build the vocabulary and packed bit matrix")
    sp.add_argument("--fingerprints", required=True, help="fingerprint file from 'fingerprint'")
    sp.add_argument("--matrix", required=True, help="output packed matrix path")
    sp.add_argument("--vocab", required=True, help="output vocabulary path")

    sp = add("distances", _cmd_distances, "export the full pairwise distance matrix")
    sp.add_argument("--matrix", required=True)
    sp.add_argument("--out", required=True, help="output CSV path")

    sp = add("knn", _cmd_knn, "split, classify held-out rows, write predictions")
    sp.add_argument("--matrix", required=True)
    sp.add_argument("--labels", default=None, help="CSV overriding labels stored in the matrix")
    sp.add_argument("--k", type=int, required=True, help="number of neighbors")
    sp.add_argument("--train-fraction", type=float, default=0.75)
    sp.add_argument("--stratified", action="store_true", help="split per class")
    sp.add_argument("--out", required=True, help="output predictions CSV")
    add_seed(sp)

    sp = add("metrics", _cmd_metrics, "score a predictions file")
    sp.add_argument("--pred", required=True, help="predictions CSV from 'knn'")
    sp.add_argument("--out", required=True, help="output metrics CSV")
    sp.add_argument("--cm", default=None, help="optional confusion matrix CSV path")
    sp.add_argument("--fig", default=None, help="optional confusion heatmap PNG path")

    sp = add("sweep", _cmd_sweep, "re-evaluate across a range of k values")
    sp.add_argument("--matrix", required=True)
    sp.add_argument("--labels", default=None)
    sp.add_argument("--ks", default="2:19", help="k range 'lo:hi' or comma list")
    sp.add_argument("--train-fraction", type=float, default=0.75)
    sp.add_argument("--stratified", action="store_true")
    sp.add_argument("--out", required=True, help="output sweep CSV")
    sp.add_argument("--fig", default=None, help="optional accuracy-vs-k PNG path")
    add_seed(sp)

    sp = add("run", _cmd_run, "run every stage with caching; write manifest.json")
    sp.add_argument("--config", default=None, help="TOML config file")
    sp.add_argument("--input", default=None, help="override corpus directory")
    sp.add_argument("--labels", default=None, help="override labels CSV")
    sp.add_argument("--out", default=None, help="override output directory")
    add_seed(sp)
    add_jobs(sp)

    sp = add("gen-synthetic", _cmd_gen_synthetic, "generate a labeled synthetic corpus")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--per-class", type=int, default=50, help="samples per class")
    add_seed(sp)

    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            parser.print_help()
            return 1
        args.func(args)
        return 0
    except (ValidationError, HeaderMismatch, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (PipelineError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
