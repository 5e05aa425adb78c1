"""Leakage of a split, the repeated-subsample experiment, and report output.

A test PPI is leaked when at least one training PPI lies within the
near-duplicate threshold of it in descriptor space.
"""
from __future__ import annotations

import concurrent.futures
import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .alignment import AlignmentParams
from .clustering import cluster_sequences
from .descriptor import DescriptorStore
from .errors import EmptyInput, MissingDescriptor, ParseError, UnknownFold
from .ioutil import dumps_json, format_float, to_plain
from .similarity import NearDuplicateGraph, SimilarityConfig, build_duplicate_graph, query_near_duplicates
from .splits import STRATEGIES, Split, SplitSpec, derive_seed, make_split
from .structio import PpiId

log = logging.getLogger(__name__)


@dataclass
class FoldPairResult:
    test_fold: str
    train_folds: tuple
    test_count: int
    leaked_count: int
    leakage_fraction: float
    empty_test: bool
    hits: dict  # test PpiId -> [(train PpiId, distance), ...]

    def to_dict(self) -> dict:
        return {
            "test_fold": self.test_fold,
            "train_folds": list(self.train_folds),
            "test_count": self.test_count,
            "leaked_count": self.leaked_count,
            "leakage_fraction": float(self.leakage_fraction),
            "empty_test": self.empty_test,
            "hits": {str(p): [[str(t), float(d)] for t, d in self.hits[p]]
                     for p in sorted(self.hits, key=str)},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "FoldPairResult":
        hits = {PpiId.parse(p): [(PpiId.parse(t), float(d)) for t, d in h]
                for p, h in data["hits"].items()}
        return cls(data["test_fold"], tuple(data["train_folds"]), int(data["test_count"]),
                   int(data["leaked_count"]), float(data["leakage_fraction"]),
                   bool(data["empty_test"]), hits)


@dataclass
class LeakageReport:
    threshold: float
    results: list
    split_provenance: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def leakage_fraction(self) -> float:
        """Mean over audited fold pairs."""
        if not self.results:
            return 0.0
        return float(np.mean([r.leakage_fraction for r in self.results]))

    @property
    def leaked_count(self) -> int:
        return sum(r.leaked_count for r in self.results)

    def to_dict(self) -> dict:
        return {
            "threshold": float(self.threshold),
            "leakage_fraction": self.leakage_fraction,
            "results": [r.to_dict() for r in self.results],
            "split_provenance": to_plain(self.split_provenance),
            "provenance": to_plain(self.provenance),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "LeakageReport":
        return cls(float(data["threshold"]), [FoldPairResult.from_dict(r) for r in data["results"]],
                   dict(data.get("split_provenance") or {}), dict(data.get("provenance") or {}))


def leakage_ratio(split: Split, store: DescriptorStore, config: SimilarityConfig = SimilarityConfig(),
                  train_fold="train", test_fold: str = "test") -> LeakageReport:
    """Leakage of ``test_fold`` against one training fold or the union of several."""
    train_names = (train_fold,) if isinstance(train_fold, str) else tuple(train_fold)
    for name in (*train_names, test_fold):
        if name not in split.folds:
            raise UnknownFold(f"no fold {name!r}; folds are {', '.join(split.folds) or 'none'}")
    train = sorted(set().union(*(split.folds[n] for n in train_names)), key=str)
    test = sorted(split.folds[test_fold], key=str)
    missing = [p for p in (*train, *test) if p not in store]
    if missing:
        raise MissingDescriptor(missing)
    if test and train:
        hits = query_near_duplicates(store.subset(train), store.subset(test), config)
    else:
        hits = {p: [] for p in test}
    leaked = sum(1 for p in test if hits[p])
    result = FoldPairResult(
        test_fold=test_fold, train_folds=train_names, test_count=len(test), leaked_count=leaked,
        leakage_fraction=leaked / len(test) if test else 0.0, empty_test=not test, hits=hits)
    return LeakageReport(config.duplicate_threshold, [result], dict(split.provenance))


def audit_split(split: Split, store: DescriptorStore, config: SimilarityConfig = SimilarityConfig()) -> LeakageReport:
    """Audit a train/test split, or every fold against the rest for k-fold splits.

    The report's ``leakage_fraction`` averages over the audited fold pairs.
    """
    if not split.folds:
        raise UnknownFold("split has no folds")
    if "test" in split.folds:
        others = tuple(n for n in split.folds if n != "test")
        if not others:
            raise UnknownFold("split has a test fold but no training fold")
        return leakage_ratio(split, store, config, others, "test")
    names = list(split.folds)
    if len(names) < 2:
        raise UnknownFold("need at least two folds to audit")
    results = []
    for name in names:
        report = leakage_ratio(split, store, config, tuple(n for n in names if n != name), name)
        results.extend(report.results)
    return LeakageReport(config.duplicate_threshold, results, dict(split.provenance))


# --------------------------------------------------------------------------
# experiment

def default_strategies(test_fraction: float = 0.1) -> tuple:
    return tuple(SplitSpec(s, test_fraction) for s in STRATEGIES)


@dataclass(frozen=True)
class ExperimentConfig:
    n_samples: int = 5
    codes_per_sample: int = 15000
    strategies: tuple = field(default_factory=default_strategies)
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.codes_per_sample < 1:
            raise ValueError("codes_per_sample must be at least 1")
        specs = tuple(s if isinstance(s, SplitSpec) else SplitSpec(**s) for s in self.strategies)
        object.__setattr__(self, "strategies", specs)

    def labels(self) -> list:
        counts = {}
        out = []
        for spec in self.strategies:
            k = counts.get(spec.strategy, 0)
            counts[spec.strategy] = k + 1
            out.append(spec.strategy if k == 0 else f"{spec.strategy}#{k}")
        return out


@dataclass
class Corpus:
    """Everything the experiment needs about a set of interfaces."""

    store: DescriptorStore
    dates: dict  # pdb code -> date
    sequences: dict  # protein key -> sequence

    @classmethod
    def from_interfaces(cls, interfaces: Iterable, store: DescriptorStore) -> "Corpus":
        dates, sequences = {}, {}
        for iface in interfaces:
            if iface.deposition_date is not None:
                dates[iface.ppi_id.pdb_code] = iface.deposition_date
            for key, seq in iface.sequences.items():
                if seq:
                    sequences[key] = seq
        return cls(store, dates, sequences)

    @property
    def codes(self) -> list:
        return sorted({p.pdb_code for p in self.store.ids})


@dataclass
class StrategyResult:
    label: str
    spec: SplitSpec
    fractions: list  # per sample; None where the cell failed
    errors: list  # per sample; None where the cell succeeded

    @property
    def values(self) -> list:
        return [f for f in self.fractions if f is not None]

    @property
    def mean(self) -> Optional[float]:
        return float(np.mean(self.values)) if self.values else None

    @property
    def stddev(self) -> Optional[float]:
        """Population standard deviation over successful samples."""
        return float(np.std(self.values)) if self.values else None

    def to_dict(self) -> dict:
        return {"label": self.label, "spec": asdict(self.spec), "fractions": list(self.fractions),
                "errors": list(self.errors), "mean": self.mean, "stddev": self.stddev}


@dataclass
class ExperimentResult:
    strategies: list
    samples: list  # per sample: index, n_codes, n_ppis, sampled_all
    threshold: float
    config: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __getitem__(self, label: str) -> StrategyResult:
        for s in self.strategies:
            if s.label == label:
                return s
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "threshold": float(self.threshold),
            "config": to_plain(self.config),
            "samples": to_plain(self.samples),
            "strategies": [s.to_dict() for s in self.strategies],
            "provenance": to_plain(self.provenance),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExperimentResult":
        strategies = [StrategyResult(s["label"], SplitSpec(**s["spec"]),
                                     [None if f is None else float(f) for f in s["fractions"]],
                                     list(s["errors"]))
                      for s in data["strategies"]]
        return cls(strategies, list(data["samples"]), float(data["threshold"]),
                   dict(data.get("config") or {}), dict(data.get("provenance") or {}))


def _sample_codes(codes: Sequence[str], n: int, seed: int, index: int) -> list:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index)])))
    if n >= len(codes):
        return list(codes)
    chosen = rng.choice(len(codes), size=n, replace=False)
    return sorted(codes[k] for k in chosen)


def _run_sample(args):
    index, corpus, graph, config, similarity, params, min_seq_id = args
    codes = set(_sample_codes(corpus.codes, config.codes_per_sample, config.seed, index))
    ppis = [p for p in corpus.store.ids if p.pdb_code in codes]
    store = corpus.store.subset(ppis)
    sub_graph = graph.restrict(ppis)
    clusters = None
    cells = []
    for spec in config.strategies:
        try:
            if spec.strategy == "sequence_component" and clusters is None:
                proteins = {k: corpus.sequences[k] for p in ppis for k in p.proteins if k in corpus.sequences}
                clusters = cluster_sequences(proteins, min_seq_id, params)
            run_spec = derive_seed(spec, config.seed, index)
            split = make_split(ppis, run_spec, dates=corpus.dates, clusters=clusters, graph=sub_graph)
            cells.append((audit_split(split, store, similarity).leakage_fraction, None))
        except Exception as exc:  # one bad cell must not void the experiment
            log.warning("sample %d, %s: %s", index, spec.strategy, exc)
            cells.append((None, f"{type(exc).__name__}: {exc}"))
    info = {"index": index, "n_codes": len(codes), "n_ppis": len(ppis),
            "sampled_all": config.codes_per_sample >= len(corpus.codes)}
    return info, cells


def run_experiment(corpus: Corpus, config: ExperimentConfig = ExperimentConfig(),
                   similarity: SimilarityConfig = SimilarityConfig(), workers: int = 1,
                   params: AlignmentParams = AlignmentParams(),
                   graph: Optional[NearDuplicateGraph] = None, min_seq_id: float = 0.3) -> ExperimentResult:
    """Leakage of every strategy on ``n_samples`` random subsamples of PDB codes.

    Each sample draws ``codes_per_sample`` codes without replacement (all of
    them if fewer exist, flagged as ``sampled_all``) and clusters its own
    sequences. Split seeds derive from the experiment seed and sample index.
    The result does not depend on ``workers``.
    """
    if len(corpus.store) == 0:
        raise EmptyInput("corpus has no interfaces")
    if graph is None or graph.threshold != similarity.duplicate_threshold:
        graph = build_duplicate_graph(corpus.store, similarity)
    jobs = [(k, corpus, graph, config, similarity, params, min_seq_id) for k in range(config.n_samples)]
    if workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            outcomes = list(pool.map(_run_sample, jobs))
    else:
        outcomes = [_run_sample(j) for j in jobs]
    strategies = []
    for k, (spec, label) in enumerate(zip(config.strategies, config.labels())):
        strategies.append(StrategyResult(label, spec, [o[1][k][0] for o in outcomes],
                                         [o[1][k][1] for o in outcomes]))
    return ExperimentResult(strategies, [o[0] for o in outcomes], similarity.duplicate_threshold,
                            config={**asdict(config), "min_seq_id": min_seq_id})


# --------------------------------------------------------------------------
# reports

CSV_EXPERIMENT_HEADER = ["row_type", "strategy", "sample", "leakage_fraction", "mean", "stddev"]
CSV_REPORT_HEADER = ["row_type", "test_fold", "train_folds", "test_count", "leaked_count",
                     "leakage_fraction", "empty_test"]


def _num(x) -> str:
    return "" if x is None else format_float(x)


def _csv_text(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def report_to_csv(obj) -> str:
    if isinstance(obj, ExperimentResult):
        rows = [CSV_EXPERIMENT_HEADER]
        for s in obj.strategies:
            for k, f in enumerate(s.fractions):
                rows.append(["sample", s.label, k, _num(f), "", ""])
        for s in obj.strategies:
            rows.append(["summary", s.label, "", "", _num(s.mean), _num(s.stddev)])
        return _csv_text(rows)
    if isinstance(obj, LeakageReport):
        rows = [CSV_REPORT_HEADER]
        for r in obj.results:
            rows.append(["pair", r.test_fold, "+".join(r.train_folds), r.test_count, r.leaked_count,
                         _num(r.leakage_fraction), str(r.empty_test).lower()])
        rows.append(["summary", "", "", "", obj.leaked_count, _num(obj.leakage_fraction), ""])
        return _csv_text(rows)
    raise TypeError(f"cannot report a {type(obj).__name__}")


def emit_report(obj, fmt: str = "json", path=None) -> str:
    """Render a LeakageReport or ExperimentResult as JSON or CSV; write it if ``path`` is given."""
    if fmt == "json":
        text = dumps_json(obj.to_dict())
    elif fmt == "csv":
        text = report_to_csv(obj)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def read_report(path):
    """Load a JSON LeakageReport or ExperimentResult written by ``emit_report``."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"report is not JSON ({exc.msg})", exc.lineno) from None
    if "strategies" in data:
        return ExperimentResult.from_dict(data)
    if "results" in data:
        return LeakageReport.from_dict(data)
    raise ParseError("unrecognized report layout")
