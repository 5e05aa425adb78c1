"""Train/test and k-fold splits of PPIs under five grouping strategies.

All randomness comes from ``numpy.random.Generator(PCG64(seed))`` so splits
are reproducible across platforms. Ratios are measured in PPIs.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Mapping, Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import EmptyInput, MissingDate, ParseError, UnclusteredProtein, UnknownFold
from .ioutil import dumps_json, to_plain
from .structio import PpiId

STRATEGIES = ("ppi_code", "pdb_code", "deposition_time", "sequence_component", "interface_component")
PACKINGS = ("random", "largest_first")


@dataclass(frozen=True)
class SplitSpec:
    strategy: str
    test_fraction: Optional[float] = 0.1
    n_folds: Optional[int] = None
    seed: int = 0
    packing: str = "random"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {', '.join(STRATEGIES)}")
        if self.packing not in PACKINGS:
            raise ValueError(f"unknown packing {self.packing!r}")
        if self.n_folds is not None:
            # k-fold mode: the ratio mode is switched off
            object.__setattr__(self, "test_fraction", None)
            if self.n_folds < 2:
                raise ValueError("n_folds must be at least 2")
            if self.strategy == "deposition_time":
                raise ValueError("deposition_time splits have no k-fold mode")
        elif self.test_fraction is None or not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def kfold(self) -> bool:
        return self.n_folds is not None


@dataclass(frozen=True)
class PpiGroup:
    group_id: int
    members: frozenset

    def __len__(self):
        return len(self.members)


@dataclass
class Split:
    folds: dict  # fold name -> frozenset of PpiId
    spec: Optional[SplitSpec] = None
    provenance: dict = field(default_factory=dict)

    def fold(self, name: str) -> frozenset:
        if name not in self.folds:
            raise UnknownFold(f"no fold {name!r}; folds are {', '.join(self.folds)}")
        return self.folds[name]

    def fold_of(self) -> dict:
        return {p: name for name, members in self.folds.items() for p in members}

    @property
    def all_ppis(self) -> frozenset:
        return frozenset().union(*self.folds.values()) if self.folds else frozenset()

    def to_dict(self) -> dict:
        return {
            "spec": asdict(self.spec) if self.spec else None,
            "folds": {name: sorted(str(p) for p in members) for name, members in self.folds.items()},
            "provenance": to_plain(self.provenance),
        }

    def to_json(self) -> str:
        return dumps_json(self.to_dict())

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_dict(cls, data: Mapping) -> "Split":
        if "folds" not in data or not isinstance(data["folds"], Mapping):
            raise ParseError('split file needs a "folds" object')
        spec = SplitSpec(**data["spec"]) if data.get("spec") else None
        folds = {str(name): frozenset(PpiId.parse(p) for p in members)
                 for name, members in data["folds"].items()}
        return cls(folds, spec, dict(data.get("provenance") or {}))

    @classmethod
    def read(cls, path) -> "Split":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"split file is not JSON ({exc.msg})", exc.lineno) from None
        return cls.from_dict(data)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def _unique_sorted(ppis: Iterable[PpiId]) -> list:
    ppis = sorted(set(ppis), key=str)
    if not ppis:
        raise EmptyInput("no PPIs to split")
    return ppis


def _canonical_groups(groups: Iterable[Iterable[PpiId]]) -> list:
    members = [frozenset(g) for g in groups if g]
    members.sort(key=lambda g: min(str(p) for p in g))
    return [PpiGroup(k, g) for k, g in enumerate(members)]


# --------------------------------------------------------------------------
# grouping

def group_by_sequence_components(ppis: Iterable[PpiId], clusters) -> list:
    """Components of the protein graph with PPI edges and shared-cluster edges."""
    ppis = sorted(set(ppis), key=str)
    proteins = sorted({key for p in ppis for key in p.proteins})
    missing = [key for key in proteins if key not in clusters]
    if missing:
        raise UnclusteredProtein(f"no sequence cluster for {', '.join(missing[:10])}")
    index = {key: k for k, key in enumerate(proteins)}
    cluster_ids = sorted({clusters.cluster_of(key) for key in proteins})
    cluster_index = {c: len(proteins) + k for k, c in enumerate(cluster_ids)}
    rows, cols = [], []
    for p in ppis:
        a, b = p.proteins
        rows.append(index[a])
        cols.append(index[b])
    for key in proteins:
        rows.append(index[key])
        cols.append(cluster_index[clusters.cluster_of(key)])
    n = len(proteins) + len(cluster_ids)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    grouped = defaultdict(list)
    for p in ppis:
        grouped[labels[index[p.proteins[0]]]].append(p)
    return _canonical_groups(grouped.values())


def group_by_interface_components(graph) -> list:
    """Connected components of a near-duplicate graph."""
    nodes = list(graph.nodes)
    if not nodes:
        return []
    index = {p: k for k, p in enumerate(nodes)}
    rows = [index[u] for u, _, _ in graph.edges]
    cols = [index[v] for _, v, _ in graph.edges]
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(nodes), len(nodes)))
    _, labels = connected_components(adj, directed=False)
    grouped = defaultdict(list)
    for p, lab in zip(nodes, labels):
        grouped[lab].append(p)
    return _canonical_groups(grouped.values())


def group_by_pdb_code(ppis: Iterable[PpiId]) -> list:
    grouped = defaultdict(list)
    for p in set(ppis):
        grouped[p.pdb_code].append(p)
    return _canonical_groups(grouped.values())


# --------------------------------------------------------------------------
# packing

def _pack_test(groups: list, target: float) -> list:
    """Greedy fill of the test fold towards ``target`` PPIs.

    A group is taken unless it would overshoot the target by more than the
    current deficit; filling stops once the target is reached.
    """
    chosen, count = [], 0
    for g in groups:
        if count >= target:
            break
        if count + len(g) - target <= target - count:
            chosen.append(g)
            count += len(g)
    if not chosen and groups:
        smallest = min(len(g) for g in groups)
        chosen.append(next(g for g in groups if len(g) == smallest))
    return chosen


def split_groups(groups: Iterable[PpiGroup], spec: SplitSpec) -> Split:
    """Assign whole groups to folds.

    Ratio mode fills a test fold (see ``packing``); k-fold mode deals the
    shuffled groups round-robin. ``provenance["infeasible_ratio"]`` flags a
    group too large for the requested ratio.
    """
    groups = sorted(groups, key=lambda g: min(str(p) for p in g.members))
    if not groups:
        raise EmptyInput("no groups to split")
    total = sum(len(g) for g in groups)
    rng = _rng(spec.seed)
    order = [groups[k] for k in rng.permutation(len(groups))]
    if spec.packing == "largest_first":
        order.sort(key=len, reverse=True)
    largest = max(len(g) for g in groups)

    if spec.kfold:
        folds = {f"fold{k}": set() for k in range(spec.n_folds)}
        for k, g in enumerate(order):
            folds[f"fold{k % spec.n_folds}"].update(g.members)
        infeasible = largest > total / spec.n_folds
        sizes = {name: len(m) for name, m in folds.items()}
        prov = {"fold_sizes": sizes}
    else:
        test_groups = _pack_test(order, spec.test_fraction * total)
        test = set().union(*(g.members for g in test_groups))
        train = set().union(*(g.members for g in order)) - test
        folds = {"train": train, "test": test}
        infeasible = largest > (1 - spec.test_fraction) * total
        prov = {"realized_test_fraction": len(test) / total}
    prov.update({
        "strategy": spec.strategy, "n_ppis": total, "n_groups": len(groups),
        "largest_group": largest, "infeasible_ratio": bool(infeasible),
    })
    return Split({k: frozenset(v) for k, v in folds.items()}, spec, prov)


# --------------------------------------------------------------------------
# strategies

def split_by_ppi_code(ppis: Iterable[PpiId], spec: SplitSpec) -> Split:
    ppis = _unique_sorted(ppis)
    return split_groups(_canonical_groups([p] for p in ppis), spec)


def split_by_pdb_code(ppis: Iterable[PpiId], spec: SplitSpec) -> Split:
    ppis = _unique_sorted(ppis)
    return split_groups(group_by_pdb_code(ppis), spec)


def split_by_time(ppis: Iterable[PpiId], dates: Mapping, spec: SplitSpec) -> Split:
    """The most recent entries, accumulating ``test_fraction`` of PPIs, form the test fold.

    Entries sharing a date are ordered by code, so the larger code counts as
    more recent.
    """
    ppis = _unique_sorted(ppis)
    by_code = defaultdict(list)
    for p in ppis:
        by_code[p.pdb_code].append(p)
    missing = [c for c in by_code if dates.get(c) is None]
    if missing:
        raise MissingDate(missing)
    codes = sorted(by_code, key=lambda c: (dates[c], c))
    target = spec.test_fraction * len(ppis)
    test = set()
    for code in reversed(codes):
        if len(test) >= target:
            break
        test.update(by_code[code])
    train = set(ppis) - test
    prov = {
        "strategy": spec.strategy, "n_ppis": len(ppis), "n_groups": len(codes),
        "realized_test_fraction": len(test) / len(ppis),
        "largest_group": max(len(v) for v in by_code.values()),
        "infeasible_ratio": False,
    }
    if test:
        prov["test_from_date"] = min(dates[p.pdb_code] for p in test)
    return Split({"train": frozenset(train), "test": frozenset(test)}, spec, prov)


def split_by_sequence(ppis: Iterable[PpiId], clusters, spec: SplitSpec) -> Split:
    ppis = _unique_sorted(ppis)
    return split_groups(group_by_sequence_components(ppis, clusters), spec)


def split_by_interface(ppis: Iterable[PpiId], graph, spec: SplitSpec) -> Split:
    ppis = _unique_sorted(ppis)
    missing = set(ppis) - set(graph.nodes)
    if missing:
        raise ValueError(f"{len(missing)} PPIs are not nodes of the near-duplicate graph")
    return split_groups(group_by_interface_components(graph.restrict(ppis)), spec)


def make_split(ppis: Iterable[PpiId], spec: SplitSpec, *, dates: Optional[Mapping] = None,
               clusters=None, graph=None) -> Split:
    """Dispatch on ``spec.strategy``; pass the inputs that strategy needs."""
    if spec.strategy == "ppi_code":
        return split_by_ppi_code(ppis, spec)
    if spec.strategy == "pdb_code":
        return split_by_pdb_code(ppis, spec)
    if spec.strategy == "deposition_time":
        if dates is None:
            raise ValueError("deposition_time splits need deposition dates")
        return split_by_time(ppis, dates, spec)
    if spec.strategy == "sequence_component":
        if clusters is None:
            raise ValueError("sequence_component splits need sequence clusters")
        return split_by_sequence(ppis, clusters, spec)
    if graph is None:
        raise ValueError("interface_component splits need a near-duplicate graph")
    return split_by_interface(ppis, graph, spec)


def derive_seed(spec: SplitSpec, *salt: int) -> SplitSpec:
    """Copy of ``spec`` with a seed mixed from its own seed and ``salt``."""
    state = np.random.SeedSequence([int(spec.seed), *[int(s) for s in salt]]).generate_state(1, np.uint64)
    return replace(spec, seed=int(state[0]))


# --------------------------------------------------------------------------

def validate_split(split: Split, ppis: Optional[Iterable[PpiId]] = None) -> dict:
    """Machine-readable well-formedness checks; never raises on a bad split."""
    seen, overlaps = {}, set()
    for name, members in split.folds.items():
        for p in members:
            if p in seen and seen[p] != name:
                overlaps.add(p)
            seen.setdefault(p, name)
    checks = {
        "disjoint": {"passed": not overlaps, "overlapping": sorted(str(p) for p in overlaps)},
        "non_empty": {"passed": bool(split.folds) and all(split.folds.values()),
                      "empty_folds": sorted(n for n, m in split.folds.items() if not m)},
    }
    if ppis is not None:
        expected = set(ppis)
        present = set(seen)
        checks["coverage"] = {
            "passed": present == expected,
            "missing": sorted(str(p) for p in expected - present),
            "unexpected": sorted(str(p) for p in present - expected),
        }
    total = len(seen)
    if "test" in split.folds and total:
        ratio = len(split.folds["test"]) / total
        checks["ratio"] = {"passed": 0 < ratio < 1, "realized_test_fraction": ratio}
        if split.spec is not None and split.spec.test_fraction is not None:
            checks["ratio"]["target_test_fraction"] = split.spec.test_fraction
    else:
        sizes = {n: len(m) for n, m in split.folds.items()}
        checks["ratio"] = {"passed": total > 0 and all(0 < s < total for s in sizes.values())
                           if len(sizes) > 1 else False,
                           "fold_fractions": {n: (s / total if total else 0.0) for n, s in sizes.items()}}
    checks["passed"] = all(c["passed"] for c in checks.values())
    return checks
