"""Synthetic structures and corpora with known redundancy.

Residues are small rigid blobs of backbone-like atoms. Interface residues sit
on straight rods: chains in contact have rods 5.2 A apart, everything else is
kept at least 10 A away, so the interface residue set is stable under the
small coordinate noise applied to copies.

A corpus is built from base interface families. Each family contributes an
original entry plus, optionally, cross-entry copies (same sequences, moved and
slightly perturbed, new PDB code) and sequence-divergent analogs (same
interface residues and geometry, all other residues redrawn, new code).
Homotrimers add intra-entry symmetric copies for free.
"""
from __future__ import annotations

import datetime as dt
import string
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .alignment import align_global
from .structio import ONE_TO_THREE, Atom, Chain, Residue, Structure

AMINO = "ARNDCQEGHILKMFPSTWYV"
ROD_SPACING = 3.8
ROD_GAP = 5.2
# residue-local atom offsets (A); every atom lies within 0.9 A of the residue center
_BLOB = {
    "N": (-0.6, 0.4, -0.5),
    "CA": (0.0, 0.0, 0.0),
    "C": (0.6, 0.4, 0.5),
    "O": (0.3, 0.8, 0.2),
    "CB": (-0.2, -0.8, 0.3),
}
_BLOB_XYZ = np.array(list(_BLOB.values()))
_ELEMENTS = {"N": "N", "CA": "C", "C": "C", "O": "O", "CB": "C"}
LAST_DATE = dt.date(2024, 1, 27)


def random_rotation(rng: np.random.Generator, reflect: bool = False) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    if reflect:
        q = q @ np.diag([1.0, 1.0, -1.0])
    return q


def _residue(chain_id: str, seq_num: int, aa: str, center, rng: Optional[np.random.Generator],
             jitter: float = 0.0) -> Residue:
    xyz = np.asarray(center, float) + _BLOB_XYZ
    if rng is not None and jitter:
        xyz = xyz + rng.normal(scale=jitter, size=xyz.shape)
    atoms = tuple(Atom(name, _ELEMENTS[name], tuple(row)) for name, row in zip(_BLOB, xyz.tolist()))
    return Residue(chain_id, seq_num, "", aa, atoms, ONE_TO_THREE.get(aa, "UNK"))


def random_sequence(rng: np.random.Generator, n: int) -> str:
    return "".join(rng.choice(list(AMINO), size=n))


def mutate(rng: np.random.Generator, seq: str, keep: set) -> str:
    """Redraw every position not in ``keep``."""
    return "".join(c if i in keep else AMINO[rng.integers(20)] for i, c in enumerate(seq))


def divergent(rng: np.random.Generator, seq: str, keep: set, max_identity: float = 0.3) -> str:
    """Redraw ``mutate`` until the result falls below ``max_identity`` to ``seq``."""
    while True:
        out = mutate(rng, seq, keep)
        if align_global(out, seq).identity < max_identity:
            return out


def _rod_chain(rng, sequence: str, interface_positions, rod_origin, rod_dir, outward) -> np.ndarray:
    """Interface residues on a rod; the rest on a loose grid pushed ``outward``."""
    n = len(sequence)
    centers = np.zeros((n, 3))
    rod_dir = np.asarray(rod_dir, float)
    outward = np.asarray(outward, float)
    side = np.cross(rod_dir, outward)
    for k, pos in enumerate(interface_positions):
        centers[pos] = np.asarray(rod_origin) + k * ROD_SPACING * rod_dir
    others = [i for i in range(n) if i not in set(interface_positions)]
    for k, pos in enumerate(others):
        layer, slot = divmod(k, 10)
        centers[pos] = (np.asarray(rod_origin) + outward * (14.0 + 4.0 * layer)
                        + rod_dir * (slot * ROD_SPACING) + side * ((layer % 3) - 1) * 4.0)
    return centers


def _build_chain(chain_id: str, sequence: str, centers: np.ndarray, rotation=None, shift=None,
                 rng=None, jitter: float = 0.0) -> Chain:
    if rotation is not None:
        centers = centers @ rotation.T
    if shift is not None:
        centers = centers + shift
    residues = tuple(_residue(chain_id, i + 1, aa, c, rng, jitter) for i, (aa, c) in enumerate(zip(sequence, centers)))
    return Chain(chain_id, residues)


def _apply(chain: Chain, rotation: np.ndarray, shift: np.ndarray, rng, noise: float) -> Chain:
    xyz = np.array([a.coords for r in chain.residues for a in r.atoms]) @ rotation.T + shift
    if noise:
        xyz = xyz + rng.normal(scale=noise, size=xyz.shape)
    rows = iter(xyz.tolist())
    residues = tuple(
        Residue(r.chain_id, r.seq_num, r.insertion_code, r.aa_type,
                tuple(Atom(a.name, a.element, tuple(next(rows))) for a in r.atoms), r.name)
        for r in chain.residues)
    return Chain(chain.chain_id, residues)


def _interface_positions(rng, length: int, n_interface: int) -> tuple:
    # spread out so that sequences sharing only interface residues share no 5-mer
    slots = np.array_split(np.arange(length), n_interface)
    return tuple(int(rng.choice(s)) for s in slots)


@dataclass
class Family:
    """Template of one base interface."""

    kind: str  # "trimer" or "dimer"
    sequences: tuple  # one per distinct chain
    interface_positions: tuple
    centers: tuple  # per chain id: residue centers


def make_family(rng: np.random.Generator, kind: str, length: int = 80, n_interface: int = 8) -> Family:
    if kind == "trimer":
        seq = random_sequence(rng, length)
        pos = _interface_positions(rng, length, n_interface)
        radius = ROD_GAP / np.sqrt(3.0)
        base = _rod_chain(rng, seq, pos, (radius, 0.0, 0.0), (0.0, 0.0, 1.0), (1.0, 0.0, 0.0))
        return Family(kind, (seq,), pos, (base,))
    if kind == "dimer":
        seq_a = random_sequence(rng, length)
        seq_b = random_sequence(rng, length)
        pos = _interface_positions(rng, length, n_interface)
        a = _rod_chain(rng, seq_a, pos, (0.0, 0.0, 0.0), (0.0, 0.0, 1.0), (-1.0, 0.0, 0.0))
        b = _rod_chain(rng, seq_b, pos, (ROD_GAP, 0.0, 0.0), (0.0, 0.0, 1.0), (1.0, 0.0, 0.0))
        return Family(kind, (seq_a, seq_b), pos, (a, b))
    raise ValueError(f"unknown family kind {kind!r}")


def _rotz(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def family_chains(family: Family, sequences=None, rng=None, jitter: float = 0.0) -> dict:
    sequences = sequences or family.sequences
    if family.kind == "trimer":
        return {cid: _build_chain(cid, sequences[0], family.centers[0], _rotz(k * 2 * np.pi / 3), rng=rng, jitter=jitter)
                for k, cid in enumerate("ABC")}
    return {cid: _build_chain(cid, seq, c, rng=rng, jitter=jitter)
            for cid, seq, c in zip("AB", sequences, family.centers)}


def moved_copy(chains: dict, rng: np.random.Generator, noise: float = 0.02) -> dict:
    rot = random_rotation(rng)
    shift = rng.uniform(-50, 50, size=3)
    return {cid: _apply(ch, rot, shift, rng, noise) for cid, ch in chains.items()}


class CodeFactory:
    """Unique random 4-character PDB codes."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.used = set()

    def __call__(self) -> str:
        alphabet = string.digits + string.ascii_lowercase
        while True:
            code = str(self.rng.integers(1, 10)) + "".join(self.rng.choice(list(alphabet), size=3))
            if code not in self.used:
                self.used.add(code)
                return code


def _date(rng, start: dt.date, end: dt.date) -> dt.date:
    span = (end - start).days
    return start + dt.timedelta(days=int(rng.integers(0, span + 1))) if span > 0 else end


@dataclass
class CorpusSpec:
    n_families: int = 200
    trimer_fraction: float = 0.5
    max_copies: int = 3
    analog_fraction: float = 0.3
    chain_length: int = 80
    interface_range: tuple = (6, 10)
    copy_noise: float = 0.02
    first_date: dt.date = dt.date(1990, 1, 1)
    last_date: dt.date = LAST_DATE
    seed: int = 0


@dataclass
class SyntheticCorpus:
    structures: list
    family_of: dict = field(default_factory=dict)  # pdb code -> family index
    role_of: dict = field(default_factory=dict)  # pdb code -> "original" | "copy" | "analog"


def generate_corpus(spec: CorpusSpec = CorpusSpec()) -> SyntheticCorpus:
    """Redundant corpus where older families have had more time to accumulate copies.

    A family founded in year ``y`` gets a binomial number of cross-entry
    copies (up to ``max_copies``) with success probability proportional to
    its age, each deposited at a uniform date after the original.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    codes = CodeFactory(rng)
    total_days = (spec.last_date - spec.first_date).days
    corpus = SyntheticCorpus([])

    def add(chains, date, family, role):
        code = codes()
        corpus.structures.append(Structure(code, chains, date, 2.0))
        corpus.family_of[code] = family
        corpus.role_of[code] = role

    for f in range(spec.n_families):
        kind = "trimer" if rng.random() < spec.trimer_fraction else "dimer"
        n_if = int(rng.integers(spec.interface_range[0], spec.interface_range[1] + 1))
        family = make_family(rng, kind, spec.chain_length, n_if)
        origin = _date(rng, spec.first_date, spec.last_date)
        age = (spec.last_date - origin).days / total_days
        chains = family_chains(family)
        add(chains, origin, f, "original")
        for _ in range(int(rng.binomial(spec.max_copies, age))):
            add(moved_copy(chains, rng, spec.copy_noise), _date(rng, origin, spec.last_date), f, "copy")
        if rng.random() < spec.analog_fraction:
            keep = set(family.interface_positions)
            seqs = tuple(divergent(rng, s, keep) for s in family.sequences)
            analog = family_chains(family, seqs)
            add(moved_copy(analog, rng, spec.copy_noise), _date(rng, origin, spec.last_date), f, "analog")
    corpus.structures.sort(key=lambda s: s.pdb_code)
    return corpus


# --------------------------------------------------------------------------
# fixtures

def two_helix_dimer(pdb_code: str = "1abc", n_interface: int = 8, seed: int = 0,
                    date: dt.date = dt.date(2001, 5, 17)) -> Structure:
    """Two chains whose interfaces hold exactly ``n_interface`` residues each."""
    rng = np.random.Generator(np.random.PCG64(seed))
    family = make_family(rng, "dimer", length=max(2 * n_interface, 24), n_interface=n_interface)
    return Structure(pdb_code, family_chains(family), date, 1.8)


def family_sequences(n_families: int = 5, per_family: int = 4, length: int = 120,
                     divergence: float = 0.2, seed: int = 0) -> tuple:
    """Sequences in well separated families.

    Members are point mutants of a family ancestor, redrawing a
    ``divergence`` fraction of positions, so members are about
    ``1 - divergence`` identical to the ancestor and unrelated families sit
    near random identity. Returns ``(proteins, family_of)``.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    proteins, family_of = {}, {}
    codes = CodeFactory(rng)
    for f in range(n_families):
        ancestor = random_sequence(rng, length)
        for m in range(per_family):
            n_mut = int(round(divergence * length))
            sites = set(rng.choice(length, size=n_mut, replace=False).tolist())
            keep = set(range(length)) - sites
            seq = mutate(rng, ancestor, keep)
            # small indels keep lengths varied
            cut = int(rng.integers(0, 6))
            seq = seq[cut:] if m % 2 else seq[: length - cut]
            key = f"{codes()}_A"
            proteins[key] = seq
            family_of[key] = f
    return proteins, family_of


def random_structure(rng: np.random.Generator, pdb_code: str, n_chains: int = 2,
                     atoms_range=(10, 500), box: float = 30.0) -> Structure:
    """Chains of blob residues scattered in a box."""
    chains = {}
    for k in range(n_chains):
        cid = string.ascii_uppercase[k]
        n_res = max(1, int(rng.integers(atoms_range[0], atoms_range[1] + 1)) // len(_BLOB))
        centers = rng.uniform(0, box, size=(n_res, 3))
        seq = random_sequence(rng, n_res)
        chains[cid] = _build_chain(cid, seq, centers, rng=rng, jitter=0.3)
    return Structure(pdb_code, chains, dt.date(2010, 1, 1), 2.5)
