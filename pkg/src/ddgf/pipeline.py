"""Pipeline orchestration: config, stage caching, and the full run.

Stages run in order freq -> segment -> fingerprint -> encode -> knn ->
metrics -> sweep.  Each stage's cache key hashes the config fields and input
digests that feed it, chained through its upstream stage keys, so changing
anything invalidates exactly the affected suffix of the pipeline.  Feature
extraction is the expensive stage and must never rerun needlessly; a rerun
with an unchanged config reports every stage as cached.

All delimited outputs use '\\n' endings and fixed column order; rows follow
sorted sample_id order regardless of worker completion order, so identical
configs produce byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import figures
from .eval_metrics import ConfusionMatrix, k_sweep, metrics_csv_rows, sweep_csv_rows, total_accuracy
from .fingerprint_store import (
    CorpusHeader,
    EncodedCorpus,
    Fingerprint,
    build_fingerprint,
    build_vocabulary,
    encode_corpus,
    load_fingerprints,
    load_labels,
    load_matrix,
    save_fingerprints,
    save_matrix,
    save_vocabulary,
)
from .hamming_knn import KnnModel, SplitSpec, pairwise_distances, predict_batch, split
from .listing_parser import ParseDiagnostics, TermDictionary, count_terms, emit_histogram, parse_listing
from .segmenter import TerminatorSet, segment

__all__ = [
    "ValidationError",
    "PipelineError",
    "PipelineConfig",
    "parse_ks",
    "iter_corpus",
    "run_freq",
    "run_segment_sidecars",
    "run_fingerprint",
    "run_encode",
    "run_distances",
    "run_knn",
    "run_metrics",
    "run_sweep",
    "run_pipeline",
]


class ValidationError(Exception):
    """Bad configuration or arguments; nothing was run."""


class PipelineError(Exception):
    """A stage failed at runtime."""


def parse_ks(text: str) -> list[int]:
    """Parse a k list: '2:19' (inclusive range) or '2,3,5'."""
    text = text.strip()
    try:
        if ":" in text:
            lo, hi = text.split(":")
            ks = list(range(int(lo), int(hi) + 1))
        else:
            ks = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise ValidationError(f"bad k list {text!r}: {e}") from e
    if not ks or any(k < 1 for k in ks):
        raise ValidationError(f"bad k list {text!r}: needs positive integers")
    return ks


@dataclass
class PipelineConfig:
    """Everything a run needs; serialized whole into the run manifest."""

    input_dir: str = ""
    labels: str = ""
    out_dir: str = "out"
    dictionary: str = ""  # empty -> bundled opcode list
    terminators: str = ""  # empty -> bundled terminator set
    instruction_filter: list[str] = field(default_factory=lambda: ["mov"])
    wl_iterations: int = 3
    seed: int = 0
    train_fraction: float = 0.75
    k: int = 2
    ks: list[int] = field(default_factory=lambda: list(range(2, 20)))
    stratified: bool = False
    split_at_functions: bool = True
    jobs: int = 1

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except OSError as e:
            raise ValidationError(f"cannot read config {path}: {e}") from e
        except tomllib.TOMLDecodeError as e:
            raise ValidationError(f"bad config {path}: {e}") from e
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if isinstance(data.get("ks"), str):
            data["ks"] = parse_ks(data["ks"])
        cfg = cls(**data)
        # Relative paths resolve against the config file's directory.
        base = Path(path).parent
        for name in ("input_dir", "labels", "out_dir", "dictionary", "terminators"):
            value = getattr(cfg, name)
            if value and not Path(value).is_absolute():
                setattr(cfg, name, str(base / value))
        return cfg

    def override(self, **kwargs) -> "PipelineConfig":
        provided = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **provided)

    def validate(self) -> None:
        if not self.input_dir:
            raise ValidationError("input_dir is required")
        if not Path(self.input_dir).is_dir():
            raise ValidationError(f"input_dir not found: {self.input_dir}")
        if not self.labels:
            raise ValidationError("labels file is required")
        if not Path(self.labels).is_file():
            raise ValidationError(f"labels file not found: {self.labels}")
        for name in ("dictionary", "terminators"):
            value = getattr(self, name)
            if value and not Path(value).is_file():
                raise ValidationError(f"{name} file not found: {value}")
        if self.wl_iterations < 1:
            raise ValidationError(f"wl_iterations must be >= 1: {self.wl_iterations}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValidationError(f"train_fraction must be in (0,1): {self.train_fraction}")
        if self.k < 1 or not self.ks or any(k < 1 for k in self.ks):
            raise ValidationError("k values must be positive")
        if self.jobs < 1:
            raise ValidationError(f"jobs must be >= 1: {self.jobs}")

    def to_dict(self) -> dict:
        return {
            "input_dir": self.input_dir,
            "labels": self.labels,
            "out_dir": self.out_dir,
            "dictionary": self.dictionary,
            "terminators": self.terminators,
            "instruction_filter": sorted(self.instruction_filter),
            "wl_iterations": self.wl_iterations,
            "seed": self.seed,
            "train_fraction": self.train_fraction,
            "k": self.k,
            "ks": list(self.ks),
            "stratified": self.stratified,
            "split_at_functions": self.split_at_functions,
            "jobs": self.jobs,
        }

    def config_hash(self) -> str:
        # jobs changes scheduling, never results; keep it out of the hash.
        d = self.to_dict()
        d.pop("jobs")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# Corpus and digest helpers


def iter_corpus(input_dir: str | Path) -> list[tuple[str, Path]]:
    """Sorted (sample_id, path) for every ``*.asm`` file in the directory."""
    paths = sorted(Path(input_dir).glob("*.asm"))
    return [(p.stem, p) for p in paths]


def _file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _corpus_digest(input_dir: str | Path) -> str:
    h = hashlib.sha256()
    for sample_id, path in iter_corpus(input_dir):
        try:
            h.update(f"{sample_id}:{_file_digest(path)}\n".encode())
        except OSError as e:
            raise PipelineError(f"input digest: sample {sample_id}: {e}") from e
    return h.hexdigest()


def _key(*parts) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# Stages


def run_freq(
    input_dir: str | Path,
    dict_path: str | None,
    out_csv: str | Path,
    fig_path: str | Path | None = None,
) -> TermDictionary:
    """Count opcode terms over the corpus and write the frequency CSV."""
    dictionary = TermDictionary.load(dict_path or None)
    diag = ParseDiagnostics()
    for sample_id, path in iter_corpus(input_dir):
        instructions = parse_listing(
            path.read_text(encoding="latin-1"), sample_id, diag
        )
        count_terms(instructions, dictionary)
    emit_histogram(dictionary, out_csv)
    if fig_path:
        figures.save_term_histogram(dictionary, fig_path)
    return dictionary


def run_segment_sidecars(
    input_dir: str | Path,
    terminators_path: str | None,
    out_dir: str | Path,
    split_at_functions: bool = True,
) -> int:
    """Write one JSON-lines sidecar of segment spans per sample; returns segment total."""
    terms = TerminatorSet.load(terminators_path or None)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    total = 0
    for sample_id, path in iter_corpus(input_dir):
        instructions = parse_listing(path.read_text(encoding="latin-1"), sample_id)
        lines = []
        start = 0
        for seg in segment(instructions, terms, split_at_functions):
            end = start + len(seg.instructions)
            lines.append(json.dumps({"index": seg.index, "start": start, "end": end}))
            start = end
        text = "\n".join(lines) + "\n" if lines else ""
        (out / f"{sample_id}.jsonl").write_text(text)
        total += len(lines)
    return total


def _fingerprint_worker(args) -> tuple[str, list[str], tuple[int, int, int]]:
    sample_id, path_str, filter_t, iterations, term_t, split_funcs = args
    diag = ParseDiagnostics()
    text = Path(path_str).read_text(encoding="latin-1")
    instructions = parse_listing(text, sample_id, diag)
    segs = segment(instructions, TerminatorSet(frozenset(term_t)), split_funcs)
    fp = build_fingerprint(
        sample_id, segs, frozenset(filter_t), iterations
    )
    return sample_id, sorted(fp.hashes), (diag.code_lines, diag.skipped_lines, diag.malformed_lines)


def run_fingerprint(
    input_dir: str | Path,
    labels_path: str | None,
    out_path: str | Path,
    instruction_filter: list[str] | frozenset[str] = frozenset({"mov"}),
    iterations: int = 3,
    terminators_path: str | None = None,
    split_at_functions: bool = True,
    jobs: int = 1,
) -> tuple[CorpusHeader, list[Fingerprint]]:
    """Extract one fingerprint per sample (in parallel if jobs > 1)."""
    terms = TerminatorSet.load(terminators_path or None)
    labels = load_labels(labels_path) if labels_path else {}
    samples = iter_corpus(input_dir)
    work = [
        (sid, str(p), tuple(sorted(instruction_filter)), iterations,
         tuple(sorted(terms.mnemonics)), split_at_functions)
        for sid, p in samples
    ]

    results = []
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for item in pool.map(_fingerprint_worker, work, chunksize=8):
                results.append(item)
    else:
        for args in work:
            try:
                results.append(_fingerprint_worker(args))
            except OSError as e:
                raise PipelineError(f"sample {args[0]}: {e}") from e

    corpus = [
        Fingerprint(sid, frozenset(hashes), labels.get(sid))
        for sid, hashes, _ in results
    ]
    header = CorpusHeader.build(
        wl_iterations=iterations,
        instruction_filter=instruction_filter,
        terminators=terms,
    )
    save_fingerprints(out_path, corpus, header)
    return header, corpus


def run_encode(
    fp_path: str | Path, matrix_path: str | Path, vocab_path: str | Path
) -> EncodedCorpus:
    _, corpus = load_fingerprints(fp_path)
    vocab = build_vocabulary(corpus)
    enc = encode_corpus(corpus, vocab)
    save_matrix(matrix_path, enc)
    save_vocabulary(vocab_path, vocab)
    return enc


def run_distances(matrix_path: str | Path, out_csv: str | Path) -> None:
    """Full pairwise distance matrix as CSV, for external projection tools."""
    enc = load_matrix(matrix_path)
    D = pairwise_distances(enc)
    with open(out_csv, "w") as f:
        f.write("sample_id," + ",".join(enc.sample_ids) + "\n")
        for sid, row in zip(enc.sample_ids, D):
            f.write(sid + "," + ",".join(str(int(d)) for d in row) + "\n")


def _apply_labels(enc: EncodedCorpus, labels_path: str | None) -> EncodedCorpus:
    if labels_path:
        table = load_labels(labels_path)
        enc.labels = [table.get(sid, lab) for sid, lab in zip(enc.sample_ids, enc.labels)]
    return enc


def run_knn(
    matrix_path: str | Path,
    labels_path: str | None,
    out_pred: str | Path,
    k: int,
    seed: int,
    train_fraction: float = 0.75,
    stratified: bool = False,
) -> tuple[int, int]:
    """Split, fit, predict the held-out rows; write PRED.csv.  Returns sizes."""
    enc = _apply_labels(load_matrix(matrix_path), labels_path)
    spec = SplitSpec(train_fraction=train_fraction, seed=seed, stratified=stratified)
    train_idx, test_idx = split(enc, spec)
    model = KnnModel.fit(enc, train_idx, k)
    preds = predict_batch(model, enc.packed[test_idx])
    with open(out_pred, "w") as f:
        f.write("sample_id,true,predicted\n")
        for i, p in zip(test_idx, preds):
            f.write(f"{enc.sample_ids[i]},{enc.labels[i]},{int(p)}\n")
    return len(train_idx), len(test_idx)


def read_predictions(pred_path: str | Path) -> ConfusionMatrix:
    true, pred = [], []
    for line in Path(pred_path).read_text().splitlines()[1:]:
        if not line.strip():
            continue
        _, t, p = line.rsplit(",", 2)
        true.append(int(t))
        pred.append(int(p))
    return ConfusionMatrix.from_pairs(true, pred)


def run_metrics(
    pred_path: str | Path,
    metrics_csv: str | Path,
    cm_csv: str | Path | None = None,
    fig_path: str | Path | None = None,
) -> ConfusionMatrix:
    cm = read_predictions(pred_path)
    Path(metrics_csv).write_text("\n".join(metrics_csv_rows(cm)) + "\n")
    if cm_csv:
        lines = ["class," + ",".join(str(c) for c in range(1, cm.n_classes + 1))]
        for c in range(cm.n_classes):
            lines.append(str(c + 1) + "," + ",".join(str(int(v)) for v in cm.counts[c]))
        Path(cm_csv).write_text("\n".join(lines) + "\n")
    if fig_path:
        figures.save_confusion_heatmap(cm, fig_path)
    return cm


def run_sweep(
    matrix_path: str | Path,
    labels_path: str | None,
    out_csv: str | Path,
    ks: list[int],
    seed: int,
    train_fraction: float = 0.75,
    stratified: bool = False,
    fig_path: str | Path | None = None,
):
    enc = _apply_labels(load_matrix(matrix_path), labels_path)
    spec = SplitSpec(train_fraction=train_fraction, seed=seed, stratified=stratified)
    rows = k_sweep(enc, ks, spec)
    Path(out_csv).write_text("\n".join(sweep_csv_rows(rows)) + "\n")
    if fig_path:
        figures.save_sweep_curve([r.k for r in rows], [r.accuracy for r in rows], fig_path)
    return rows


# ---------------------------------------------------------------------------
# Full pipeline


def run_pipeline(cfg: PipelineConfig, log=print) -> dict:
    """Run every stage in order, skipping those whose outputs are current.

    Writes manifest.json in the output directory and returns it as a dict.
    """
    cfg.validate()
    out = Path(cfg.out_dir)
    figdir = out / "figures"
    out.mkdir(parents=True, exist_ok=True)
    figdir.mkdir(exist_ok=True)

    cache_path = out / "cache.json"
    cache = json.loads(cache_path.read_text()) if cache_path.exists() else {}

    input_digest = _corpus_digest(cfg.input_dir)
    labels_digest = _file_digest(cfg.labels)
    dict_digest = _file_digest(cfg.dictionary) if cfg.dictionary else "builtin"
    term_digest = _file_digest(cfg.terminators) if cfg.terminators else "builtin"

    stages: dict[str, dict] = {}
    stats: dict[str, object] = {}

    def stage(name: str, key: str, outputs: list[Path], fn) -> None:
        if cache.get(name) == key and all(p.exists() for p in outputs):
            stages[name] = {"cached": True, "seconds": 0.0}
            log(f"[{name}] cached")
            return
        t0 = time.perf_counter()
        try:
            fn()
        except (ValidationError, PipelineError):
            raise
        except Exception as e:
            raise PipelineError(f"stage {name} failed: {e}") from e
        dt = time.perf_counter() - t0
        cache[name] = key
        cache_path.write_text(json.dumps(cache, sort_keys=True, indent=1) + "\n")
        stages[name] = {"cached": False, "seconds": round(dt, 3)}
        log(f"[{name}] {dt:.2f}s")

    k_freq = _key("freq", input_digest, dict_digest)
    stage(
        "freq",
        k_freq,
        [out / "term_freq.csv"],
        lambda: run_freq(
            cfg.input_dir, cfg.dictionary or None, out / "term_freq.csv",
            figdir / "term_freq.png",
        ),
    )

    k_seg = _key("segment", input_digest, term_digest, cfg.split_at_functions)
    stage(
        "segment",
        k_seg,
        [out / "segments"],
        lambda: run_segment_sidecars(
            cfg.input_dir, cfg.terminators or None, out / "segments",
            cfg.split_at_functions,
        ),
    )

    k_fp = _key(
        "fingerprint", input_digest, labels_digest, term_digest,
        sorted(cfg.instruction_filter), cfg.wl_iterations, cfg.split_at_functions,
    )
    fp_path = out / "FP.jsonl"
    stage(
        "fingerprint",
        k_fp,
        [fp_path],
        lambda: run_fingerprint(
            cfg.input_dir, cfg.labels, fp_path,
            instruction_filter=frozenset(cfg.instruction_filter),
            iterations=cfg.wl_iterations,
            terminators_path=cfg.terminators or None,
            split_at_functions=cfg.split_at_functions,
            jobs=cfg.jobs,
        ),
    )

    k_enc = _key("encode", k_fp)
    matrix_path = out / "MATRIX.bin"
    vocab_path = out / "VOCAB.txt"
    stage(
        "encode",
        k_enc,
        [matrix_path, vocab_path],
        lambda: run_encode(fp_path, matrix_path, vocab_path),
    )

    k_knn = _key("knn", k_enc, cfg.k, cfg.seed, cfg.train_fraction, cfg.stratified)
    pred_path = out / "PRED.csv"
    stage(
        "knn",
        k_knn,
        [pred_path],
        lambda: run_knn(
            matrix_path, None, pred_path,
            k=cfg.k, seed=cfg.seed,
            train_fraction=cfg.train_fraction, stratified=cfg.stratified,
        ),
    )

    k_met = _key("metrics", k_knn)
    stage(
        "metrics",
        k_met,
        [out / "METRICS.csv", out / "CM.csv"],
        lambda: run_metrics(
            pred_path, out / "METRICS.csv", out / "CM.csv", figdir / "confusion.png"
        ),
    )

    k_sw = _key("sweep", k_enc, list(cfg.ks), cfg.seed, cfg.train_fraction, cfg.stratified)
    stage(
        "sweep",
        k_sw,
        [out / "SWEEP.csv"],
        lambda: run_sweep(
            matrix_path, None, out / "SWEEP.csv",
            ks=list(cfg.ks), seed=cfg.seed,
            train_fraction=cfg.train_fraction, stratified=cfg.stratified,
            fig_path=figdir / "sweep.png",
        ),
    )

    # Corpus stats for the manifest, from the artifacts just written.
    _, corpus = load_fingerprints(fp_path)
    enc = load_matrix(matrix_path)
    labeled = [l for l in enc.labels if l is not None]
    cm = read_predictions(pred_path)
    spec = SplitSpec(cfg.train_fraction, cfg.seed, cfg.stratified)
    train_idx, test_idx = split(enc, spec)
    stats = {
        "samples": len(corpus),
        "labeled": len(labeled),
        "classes": len(set(labeled)),
        "vocabulary_dimension": enc.n_cols,
        "train": len(train_idx),
        "test": len(test_idx),
        "k": cfg.k,
        "total_accuracy": round(total_accuracy(cm), 4),
    }

    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "corpus": stats,
        "stages": stages,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return manifest
