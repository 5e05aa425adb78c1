"""Fixed-length interface descriptors from distance-weighted message passing.

Every interface residue starts from a one-hot amino-acid vector. Each round
replaces a residue's vector by the weighted average of itself (weight 1) and
all other interface residues within ``neighbor_cutoff`` (weight
``exp(-d / weight_scale)``), regardless of which partner they belong to. The
descriptor is the mean over all residues of both partners.
"""
from __future__ import annotations

import concurrent.futures
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import ConfigMismatch, DuplicatePpiId, InterfaceTooSmall, ParseError
from .interface import Interface
from .ioutil import fingerprint
from .structio import PpiId, Residue

# alphabetical by three-letter code; UNKNOWN last
AA_ORDER = "ARNDCQEGHILKMFPSTWYV"
UNKNOWN_INDEX = 20
FEATURE_DIM = 21
_AA_INDEX = {aa: i for i, aa in enumerate(AA_ORDER)}

STORE_FORMAT = "ppileak-descriptors"
STORE_VERSION = 1


@dataclass(frozen=True)
class DescriptorConfig:
    feature_dim: int = FEATURE_DIM
    rounds: int = 1
    neighbor_cutoff: float = 10.0
    weight_scale: float = 4.0
    residue_anchor: str = "heavy_centroid"

    def __post_init__(self):
        if self.feature_dim != FEATURE_DIM:
            raise ValueError(f"feature_dim is fixed at {FEATURE_DIM}")
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")
        if not self.neighbor_cutoff > 0 or not self.weight_scale > 0:
            raise ValueError("neighbor_cutoff and weight_scale must be positive")
        if self.residue_anchor not in ("heavy_centroid", "alpha_carbon"):
            raise ValueError(f"unknown residue_anchor {self.residue_anchor!r}")

    @property
    def fingerprint(self) -> str:
        return fingerprint(asdict(self))


@dataclass(frozen=True, eq=False)
class InterfaceDescriptor:
    ppi_id: PpiId
    vector: np.ndarray
    n_residues: int
    fingerprint: str = ""


def residue_features(residue: Residue) -> np.ndarray:
    v = np.zeros(FEATURE_DIM)
    v[_AA_INDEX.get(residue.aa_type, UNKNOWN_INDEX)] = 1.0
    return v


def residue_anchor(residue: Residue, kind: str = "heavy_centroid") -> np.ndarray:
    heavy = residue.heavy_atoms or residue.atoms
    if kind == "alpha_carbon":
        for atom in heavy:
            if atom.name == "CA":
                return np.asarray(atom.coords, dtype=float)
    return np.asarray([a.coords for a in heavy], dtype=float).mean(axis=0)


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def message_passing_round(features: np.ndarray, anchors: np.ndarray,
                          config: DescriptorConfig = DescriptorConfig()) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 3)
    if len(features) != len(anchors):
        raise ValueError("features and anchors must be aligned")
    d = pairwise_distances(anchors)
    mask = d <= config.neighbor_cutoff
    np.fill_diagonal(mask, False)
    w = np.where(mask, np.exp(-d / config.weight_scale), 0.0)
    return (features + w @ features) / (1.0 + w.sum(axis=1))[:, None]


def embed_interface(interface: Interface, config: DescriptorConfig = DescriptorConfig()) -> InterfaceDescriptor:
    residues = sorted(interface.residues, key=lambda r: r.key)
    if len(residues) < 2 or not interface.residues_a or not interface.residues_b:
        raise InterfaceTooSmall(f"{interface.ppi_id}: need residues on both sides")
    h = np.stack([residue_features(r) for r in residues])
    anchors = np.stack([residue_anchor(r, config.residue_anchor) for r in residues])
    for _ in range(config.rounds):
        h = message_passing_round(h, anchors, config)
    return InterfaceDescriptor(interface.ppi_id, h.mean(axis=0), len(residues), config.fingerprint)


class DescriptorStore:
    """Immutable mapping from PPI id to descriptor, rows sorted by id string."""

    def __init__(self, ids: Iterable[PpiId], vectors, n_residues, fingerprint: str,
                 feature_dim: int = FEATURE_DIM):
        ids = list(ids)
        vectors = np.asarray(vectors, dtype=float).reshape(len(ids), feature_dim)
        n_residues = np.asarray(n_residues, dtype=np.int64).reshape(len(ids))
        keys = [str(p) for p in ids]
        if len(set(keys)) != len(keys):
            dup = sorted({k for k in keys if keys.count(k) > 1})
            raise DuplicatePpiId(f"duplicate PPI ids: {', '.join(dup[:10])}")
        order = sorted(range(len(ids)), key=keys.__getitem__)
        self.ids = tuple(ids[i] for i in order)
        self.vectors = vectors[order]
        self.vectors.setflags(write=False)
        self.n_residues = n_residues[order]
        self.n_residues.setflags(write=False)
        self.fingerprint = fingerprint
        self.feature_dim = feature_dim
        self._index = {str(p): k for k, p in enumerate(self.ids)}

    @classmethod
    def from_descriptors(cls, descriptors: Iterable[InterfaceDescriptor], fingerprint: Optional[str] = None):
        descriptors = list(descriptors)
        fps = {d.fingerprint for d in descriptors}
        if fingerprint is None:
            if len(fps) > 1:
                raise ConfigMismatch("descriptors were computed with different configs")
            fingerprint = fps.pop() if fps else ""
        elif fps - {fingerprint}:
            raise ConfigMismatch("descriptor fingerprint differs from store fingerprint")
        return cls([d.ppi_id for d in descriptors],
                   np.array([d.vector for d in descriptors]).reshape(len(descriptors), FEATURE_DIM),
                   [d.n_residues for d in descriptors], fingerprint)

    def __len__(self):
        return len(self.ids)

    def __contains__(self, ppi_id):
        return str(ppi_id) in self._index

    def __getitem__(self, ppi_id) -> InterfaceDescriptor:
        k = self._index[str(ppi_id)]
        return InterfaceDescriptor(self.ids[k], self.vectors[k], int(self.n_residues[k]), self.fingerprint)

    def __iter__(self):
        return iter(self.ids)

    def index_of(self, ppi_ids) -> np.ndarray:
        return np.array([self._index[str(p)] for p in ppi_ids], dtype=np.int64)

    def subset(self, ppi_ids) -> "DescriptorStore":
        idx = self.index_of(ppi_ids)
        return DescriptorStore([self.ids[i] for i in idx], self.vectors[idx],
                               self.n_residues[idx], self.fingerprint, self.feature_dim)

    def __eq__(self, other):
        return (isinstance(other, DescriptorStore) and self.ids == other.ids
                and self.fingerprint == other.fingerprint
                and np.array_equal(self.vectors, other.vectors)
                and np.array_equal(self.n_residues, other.n_residues))

    # file format:
    #   # ppileak-descriptors version=1 feature_dim=21 fingerprint=<hex>
    #   # provenance <json>            (optional)
    #   <ppi_id>\t<n_residues>\t<v_0>\t...\t<v_20>   values at 17 significant digits
    def to_text(self, provenance: Optional[str] = None) -> str:
        lines = [f"# {STORE_FORMAT} version={STORE_VERSION} feature_dim={self.feature_dim} "
                 f"fingerprint={self.fingerprint}"]
        if provenance:
            lines.append(f"# provenance {provenance}")
        for p, n, v in zip(self.ids, self.n_residues, self.vectors):
            lines.append("\t".join([str(p), str(int(n))] + ["%.17g" % x for x in v]))
        return "\n".join(lines) + "\n"

    def write(self, path, provenance: Optional[str] = None) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text(provenance))

    @classmethod
    def read(cls, path) -> "DescriptorStore":
        with open(path) as fh:
            text = fh.read()
        return cls.from_text(text)

    @classmethod
    def from_text(cls, text: str) -> "DescriptorStore":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(f"# {STORE_FORMAT} "):
            raise ParseError("not a descriptor store", 1)
        fields = dict(kv.split("=", 1) for kv in lines[0].split()[2:])
        if int(fields.get("version", -1)) != STORE_VERSION:
            raise ParseError(f"unsupported descriptor store version {fields.get('version')}", 1)
        dim = int(fields["feature_dim"])
        ids, ns, vecs = [], [], []
        for n, line in enumerate(lines[1:], start=2):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != dim + 2:
                raise ParseError(f"expected {dim + 2} fields, got {len(parts)}", n, line)
            try:
                ids.append(PpiId.parse(parts[0]))
                ns.append(int(parts[1]))
                vecs.append([float(x) for x in parts[2:]])
            except ValueError as exc:
                raise ParseError(str(exc), n, line) from None
        return cls(ids, np.array(vecs).reshape(len(ids), dim), ns, fields.get("fingerprint", ""), dim)

    @staticmethod
    def read_provenance(path) -> Optional[str]:
        with open(path) as fh:
            for line in fh:
                if not line.startswith("#"):
                    break
                if line.startswith("# provenance "):
                    return line[len("# provenance "):].strip()
        return None


def _embed_one(args):
    interface, config = args
    return embed_interface(interface, config)


def embed_corpus(interfaces: Iterable[Interface], config: DescriptorConfig = DescriptorConfig(),
                 workers: int = 1) -> DescriptorStore:
    """Embed every interface; the result does not depend on ``workers``."""
    interfaces = list(interfaces)
    seen = set()
    for iface in interfaces:
        key = str(iface.ppi_id)
        if key in seen:
            raise DuplicatePpiId(f"duplicate PPI id {key}")
        seen.add(key)
    if workers > 1 and len(interfaces) > 1:
        chunk = max(1, len(interfaces) // (4 * workers))
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            descriptors = list(pool.map(_embed_one, [(i, config) for i in interfaces], chunksize=chunk))
    else:
        descriptors = [embed_interface(i, config) for i in interfaces]
    return DescriptorStore.from_descriptors(descriptors, config.fingerprint)
