"""Near-duplicate search over interface descriptors."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .descriptor import DescriptorStore, InterfaceDescriptor
from .errors import ConfigMismatch, DegenerateLabels, ParseError
from .ioutil import format_float
from .structio import PpiId

GRAPH_FORMAT = "ppileak-graph"


@dataclass(frozen=True)
class SimilarityConfig:
    duplicate_threshold: float = 0.04
    metric: str = "euclidean"

    def __post_init__(self):
        if not self.duplicate_threshold >= 0:
            raise ValueError("duplicate_threshold must be non-negative")
        if self.metric != "euclidean":
            raise ValueError("only the euclidean metric is supported")


def _rowwise_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sqrt(((a - b) ** 2).sum(axis=-1))


def idist_distance(d1: InterfaceDescriptor, d2: InterfaceDescriptor) -> float:
    if len(d1.vector) != len(d2.vector) or d1.fingerprint != d2.fingerprint:
        raise ConfigMismatch(f"{d1.ppi_id} and {d2.ppi_id} were embedded with different configs")
    return float(_rowwise_distance(np.asarray(d1.vector), np.asarray(d2.vector)))


def _check_compatible(a: DescriptorStore, b: DescriptorStore) -> None:
    if a.feature_dim != b.feature_dim or a.fingerprint != b.fingerprint:
        raise ConfigMismatch(
            f"descriptor stores differ in config (fingerprints {a.fingerprint!r} vs {b.fingerprint!r})")


def _blocked_pairs(q: np.ndarray, t: np.ndarray, tau: float, block: int = 128):
    out_i, out_j, out_d = [], [], []
    for start in range(0, len(q), block):
        qb = q[start:start + block]
        d = _rowwise_distance(qb[:, None, :], t[None, :, :])
        ii, jj = np.nonzero(d < tau)
        out_i.append(ii + start)
        out_j.append(jj)
        out_d.append(d[ii, jj])
    return out_i, out_j, out_d


def _grid_pairs(q: np.ndarray, t: np.ndarray, tau: float, dims: Sequence[int], max_candidates: int):
    """Candidate pairs from a grid on a few coordinates, or ``None`` if too dense."""
    edge = tau * (1.0 + 1e-9)
    origin = np.minimum(q[:, dims].min(axis=0), t[:, dims].min(axis=0))
    cq = np.floor((q[:, dims] - origin) / edge).astype(np.int64) + 1
    ct = np.floor((t[:, dims] - origin) / edge).astype(np.int64) + 1
    extent = np.maximum(cq.max(axis=0), ct.max(axis=0)) + 2
    if float(np.prod(extent.astype(float))) > 2.0 ** 62:
        return None
    strides = np.cumprod(np.concatenate([[1], extent[:0:-1]]))[::-1]
    kq = cq @ strides
    kt = ct @ strides
    order = np.argsort(kt, kind="stable")
    sorted_kt = kt[order]
    shifts = [np.dot(off, strides) for off in itertools.product((-1, 0, 1), repeat=len(dims))]

    ranges = []
    total = 0
    for shift in shifts:
        nk = kq + shift
        lo = np.searchsorted(sorted_kt, nk, side="left")
        counts = np.searchsorted(sorted_kt, nk, side="right") - lo
        total += int(counts.sum())
        if total > max_candidates:
            return None
        ranges.append((lo, counts))

    out_i, out_j, out_d = [], [], []
    idx_q = np.arange(len(q))
    for lo, counts in ranges:
        n = int(counts.sum())
        if n == 0:
            continue
        ii = np.repeat(idx_q, counts)
        jj = order[np.repeat(lo - (np.cumsum(counts) - counts), counts) + np.arange(n)]
        d = _rowwise_distance(q[ii], t[jj])
        keep = d < tau
        out_i.append(ii[keep])
        out_j.append(jj[keep])
        out_d.append(d[keep])
    return out_i, out_j, out_d


def radius_pairs(q: np.ndarray, t: np.ndarray, tau: float, projection_dims: int = 3,
                 dense_fraction: float = 0.1):
    """All (i, j, distance) with ``|q[i] - t[j]| < tau``, sorted by (i, distance, j).

    A uniform grid with cell edge ``tau`` over the ``projection_dims``
    highest-variance coordinates prunes candidates (a pair closer than
    ``tau`` is at most one cell apart in every projected coordinate). When the
    grid would still yield more than ``dense_fraction`` of all pairs, a
    blocked brute-force scan is used instead. Both paths compute the same
    distances, so the result is identical to a full scan.
    """
    q = np.asarray(q, dtype=float)
    t = np.asarray(t, dtype=float)
    empty = (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
    if len(q) == 0 or len(t) == 0 or tau <= 0:
        return empty
    parts = None
    k = min(projection_dims, q.shape[1])
    if k > 0 and math.isfinite(tau):
        var = np.concatenate([q, t]).var(axis=0)
        dims = sorted(np.argsort(-var, kind="stable")[:k].tolist())
        limit = min(int(dense_fraction * len(q) * len(t)) + 1, 20_000_000)
        parts = _grid_pairs(q, t, tau, dims, limit)
    if parts is None:
        parts = _blocked_pairs(q, t, tau)
    ii, jj, dd = (np.concatenate(p) if p else e for p, e in zip(parts, empty))
    order = np.lexsort((jj, dd, ii))
    return ii[order], jj[order], dd[order]


def query_near_duplicates(train: DescriptorStore, test: DescriptorStore,
                          config: SimilarityConfig = SimilarityConfig()) -> dict:
    """Map each test PPI to its train hits ``[(train_id, distance), ...]``, nearest first."""
    _check_compatible(train, test)
    ii, jj, dd = radius_pairs(test.vectors, train.vectors, config.duplicate_threshold)
    hits = {p: [] for p in test.ids}
    for i, j, d in zip(ii.tolist(), jj.tolist(), dd.tolist()):
        hits[test.ids[i]].append((train.ids[j], d))
    return hits


@dataclass(frozen=True)
class NearDuplicateGraph:
    nodes: tuple
    edges: tuple  # (u, v, distance) with str(u) < str(v)
    threshold: float = 0.04
    fingerprint: str = ""

    def adjacency(self) -> dict:
        adj = {n: [] for n in self.nodes}
        for u, v, _ in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def restrict(self, nodes: Iterable[PpiId]) -> "NearDuplicateGraph":
        keep = set(nodes)
        return NearDuplicateGraph(
            tuple(n for n in self.nodes if n in keep),
            tuple(e for e in self.edges if e[0] in keep and e[1] in keep),
            self.threshold, self.fingerprint)

    # text format: header line, "node\t<id>" per node, "edge\t<u>\t<v>\t<distance>" per edge
    def to_text(self) -> str:
        lines = [f"# {GRAPH_FORMAT} version=1 threshold={format_float(self.threshold)} "
                 f"fingerprint={self.fingerprint}"]
        lines.extend(f"node\t{n}" for n in self.nodes)
        lines.extend(f"edge\t{u}\t{v}\t{format_float(d)}" for u, v, d in self.edges)
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "NearDuplicateGraph":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(f"# {GRAPH_FORMAT} "):
            raise ParseError("not a near-duplicate graph file", 1)
        fields = dict(kv.split("=", 1) for kv in lines[0].split()[2:])
        nodes, edges = [], []
        for n, line in enumerate(lines[1:], start=2):
            parts = line.split("\t")
            if parts[0] == "node" and len(parts) == 2:
                nodes.append(PpiId.parse(parts[1]))
            elif parts[0] == "edge" and len(parts) == 4:
                edges.append((PpiId.parse(parts[1]), PpiId.parse(parts[2]), float(parts[3])))
            elif line.strip():
                raise ParseError("unrecognized graph line", n, line)
        return cls(tuple(nodes), tuple(edges), float(fields.get("threshold", "nan")),
                   fields.get("fingerprint", ""))

    @classmethod
    def read(cls, path) -> "NearDuplicateGraph":
        with open(path) as fh:
            return cls.from_text(fh.read())


def build_duplicate_graph(store: DescriptorStore, config: SimilarityConfig = SimilarityConfig()) -> NearDuplicateGraph:
    ii, jj, dd = radius_pairs(store.vectors, store.vectors, config.duplicate_threshold)
    keep = ii < jj  # store rows are sorted by id string
    edges = sorted(((store.ids[i], store.ids[j], d) for i, j, d in
                    zip(ii[keep].tolist(), jj[keep].tolist(), dd[keep].tolist())),
                   key=lambda e: (str(e[0]), str(e[1])))
    return NearDuplicateGraph(store.ids, tuple(edges), config.duplicate_threshold, store.fingerprint)


# --------------------------------------------------------------------------
# threshold calibration

@dataclass(frozen=True)
class ThresholdCalibration:
    threshold: float
    f1: float
    precision: float
    recall: float
    n_duplicates: int
    n_distinct: int


def _f1_parts(tp: int, pred_pos: int, n_pos: int) -> tuple:
    precision = tp / pred_pos if pred_pos else 0.0
    recall = tp / n_pos if n_pos else 0.0
    f1 = 2 * tp / (pred_pos + n_pos) if (pred_pos + n_pos) else 0.0
    return f1, precision, recall


def calibrate_from_distances(distances, labels) -> ThresholdCalibration:
    """Threshold maximizing F1 of the rule ``distance < threshold``.

    Candidates are the midpoints between consecutive distinct distances; ties
    in F1 resolve to the smaller threshold.
    """
    d = np.asarray(distances, dtype=float)
    y = np.asarray(labels, dtype=bool)
    if len(d) != len(y):
        raise ValueError("distances and labels differ in length")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise DegenerateLabels("calibration needs both duplicate and non-duplicate pairs")
    uniq = np.unique(d)
    if len(uniq) > 1:
        candidates = (uniq[:-1] + uniq[1:]) / 2.0
    else:
        candidates = np.array([np.nextafter(uniq[0], np.inf)])
    order = np.argsort(d, kind="stable")
    ds, ys = d[order], y[order]
    cum_tp = np.concatenate([[0], np.cumsum(ys)])
    best = None  # (2tp, pred_pos + n_pos, threshold, tp, pred_pos)
    for tau in candidates:
        pred_pos = int(np.searchsorted(ds, tau, side="left"))
        tp = int(cum_tp[pred_pos])
        num, den = 2 * tp, pred_pos + n_pos
        if best is None or num * best[1] > best[0] * den:
            best = (num, den, float(tau), tp, pred_pos)
    _, _, tau, tp, pred_pos = best
    f1, precision, recall = _f1_parts(tp, pred_pos, n_pos)
    return ThresholdCalibration(tau, f1, precision, recall, n_pos, len(y) - n_pos)


def calibrate_threshold(labeled_pairs: Iterable) -> ThresholdCalibration:
    """``labeled_pairs``: iterable of ``((descriptor_1, descriptor_2), is_duplicate)``."""
    distances, labels = [], []
    for (d1, d2), flag in labeled_pairs:
        distances.append(idist_distance(d1, d2))
        labels.append(bool(flag))
    return calibrate_from_distances(distances, labels)
