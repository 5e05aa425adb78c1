"""Inter-chain contacts, interface extraction and interface quality filters."""
from __future__ import annotations

import datetime as dt
import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import ParseError
from .structio import Atom, Chain, PpiId, Residue, Structure, canonical_ppi_id, chain_pairs
from .surface import atom_radii, sasa

TOO_FEW_RESIDUES = "TooFewResidues"
BSA_BELOW_THRESHOLD = "BsaBelowThreshold"
BSA_MISSING = "BsaMissing"

INTERFACES_FORMAT = "ppileak-interfaces"
INTERFACES_VERSION = 1


@dataclass(frozen=True)
class InterfaceConfig:
    contact_cutoff: float = 6.0
    min_interface_residues: int = 2
    bsa_threshold: Optional[float] = 500.0
    sasa_probe_radius: float = 1.4
    sasa_sphere_points: int = 92
    max_resolution: Optional[float] = None

    def __post_init__(self):
        if not self.contact_cutoff > 0:
            raise ValueError("contact_cutoff must be positive")
        if not self.sasa_probe_radius > 0:
            raise ValueError("sasa_probe_radius must be positive")
        if self.sasa_sphere_points < 12:
            raise ValueError("sasa_sphere_points must be at least 12")
        if self.min_interface_residues < 1:
            raise ValueError("min_interface_residues must be at least 1")


@dataclass(frozen=True)
class Interface:
    """Residues of two chains in heavy-atom contact.

    ``residues_a`` belong to ``ppi_id.chain_a``; ``contacts`` index into
    ``residues_a`` and ``residues_b``. The chain sequences and the entry's
    deposition date travel with the interface so that a corpus of interfaces
    is self-sufficient for splitting.
    """

    ppi_id: PpiId
    residues_a: tuple
    residues_b: tuple
    contacts: tuple
    bsa: Optional[float] = None
    deposition_date: Optional[dt.date] = None
    sequence_a: str = ""
    sequence_b: str = ""

    @property
    def residues(self) -> tuple:
        return self.residues_a + self.residues_b

    @property
    def sequences(self) -> dict:
        return dict(zip(self.ppi_id.proteins, (self.sequence_a, self.sequence_b)))


# --------------------------------------------------------------------------
# contacts

def _cell_keys(cells: np.ndarray, dims: np.ndarray) -> np.ndarray:
    return (cells[:, 0] * dims[1] + cells[:, 1]) * dims[2] + cells[:, 2]


def atom_pairs_within(xa: np.ndarray, xb: np.ndarray, cutoff: float, chunk: int = 4096):
    """Index pairs (i, j) with ``|xa[i] - xb[j]| <= cutoff`` via a uniform grid.

    The grid cell edge equals ``cutoff`` so every qualifying pair lies in one
    of the 27 cells around the query atom's cell.
    """
    xa = np.asarray(xa, dtype=float).reshape(-1, 3)
    xb = np.asarray(xb, dtype=float).reshape(-1, 3)
    if len(xa) == 0 or len(xb) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    origin = np.minimum(xa.min(axis=0), xb.min(axis=0))
    ca = np.floor((xa - origin) / cutoff).astype(np.int64) + 1
    cb = np.floor((xb - origin) / cutoff).astype(np.int64) + 1
    dims = np.maximum(ca.max(axis=0), cb.max(axis=0)) + 2
    kb = _cell_keys(cb, dims)
    order = np.argsort(kb, kind="stable")
    sorted_kb = kb[order]
    offsets = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=np.int64)
    shifts = (offsets[:, 0] * dims[1] + offsets[:, 1]) * dims[2] + offsets[:, 2]

    out_i, out_j = [], []
    for start in range(0, len(xa), chunk):
        ka = _cell_keys(ca[start:start + chunk], dims)
        idx_a = np.arange(start, start + len(ka))
        for shift in shifts:
            nk = ka + shift
            lo = np.searchsorted(sorted_kb, nk, side="left")
            counts = np.searchsorted(sorted_kb, nk, side="right") - lo
            total = int(counts.sum())
            if total == 0:
                continue
            ii = np.repeat(idx_a, counts)
            base = np.repeat(lo - (np.cumsum(counts) - counts), counts)
            jj = order[base + np.arange(total)]
            d = np.sqrt(((xa[ii] - xb[jj]) ** 2).sum(axis=1))
            keep = d <= cutoff
            out_i.append(ii[keep])
            out_j.append(jj[keep])
    if not out_i:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(out_i), np.concatenate(out_j)


def find_contacts(chain_a: Chain, chain_b: Chain, cutoff: float = 6.0) -> list:
    """Residue index pairs having at least one heavy-atom pair within ``cutoff``."""
    ia, ib = atom_pairs_within(chain_a.heavy_coords, chain_b.heavy_coords, cutoff)
    if len(ia) == 0:
        return []
    ra = chain_a.heavy_residue_index[ia]
    rb = chain_b.heavy_residue_index[ib]
    nb = len(chain_b.residues)
    codes = np.unique(ra * nb + rb)
    return [(int(c // nb), int(c % nb)) for c in codes]


# --------------------------------------------------------------------------
# extraction and filters

def _chain_sasa(coords_list, elements_list, config: InterfaceConfig) -> list:
    coords = np.concatenate(coords_list)
    radii = atom_radii([e for els in elements_list for e in els])
    areas = sasa(coords, radii, config.sasa_probe_radius, config.sasa_sphere_points)
    bounds = np.cumsum([0] + [len(c) for c in coords_list])
    return [areas[bounds[k]:bounds[k + 1]] for k in range(len(coords_list))]


def buried_surface_area(structure: Structure, chain_a: str, chain_b: str,
                        config: InterfaceConfig = InterfaceConfig()) -> float:
    """SASA(a) + SASA(b) - SASA(a+b) over heavy atoms, in square Angstrom."""
    a, b = sorted((chain_a, chain_b))
    ca, cb = structure.chain(a), structure.chain(b)
    (alone_a,) = _chain_sasa([ca.heavy_coords], [ca.heavy_elements], config)
    (alone_b,) = _chain_sasa([cb.heavy_coords], [cb.heavy_elements], config)
    cplx_a, cplx_b = _chain_sasa([ca.heavy_coords, cb.heavy_coords],
                                 [ca.heavy_elements, cb.heavy_elements], config)
    return float((alone_a.sum() - cplx_a.sum()) + (alone_b.sum() - cplx_b.sum()))


def extract_interface(structure: Structure, chain_a: str, chain_b: str,
                      config: InterfaceConfig = InterfaceConfig()) -> Optional[Interface]:
    """Contact residues of two chains, or ``None`` if either side is too small.

    BSA is computed (and stored on the interface) only when the config has a
    BSA threshold; the threshold itself is applied by
    :func:`passes_quality_filters`.
    """
    ppi = canonical_ppi_id(structure.pdb_code, chain_a, chain_b)
    ca, cb = structure.chain(ppi.chain_a), structure.chain(ppi.chain_b)
    contacts = find_contacts(ca, cb, config.contact_cutoff)
    side_a = sorted({i for i, _ in contacts})
    side_b = sorted({j for _, j in contacts})
    if len(side_a) < config.min_interface_residues or len(side_b) < config.min_interface_residues:
        return None
    pos_a = {r: k for k, r in enumerate(side_a)}
    pos_b = {r: k for k, r in enumerate(side_b)}
    bsa = None
    if config.bsa_threshold is not None:
        bsa = buried_surface_area(structure, ppi.chain_a, ppi.chain_b, config)
    return Interface(
        ppi_id=ppi,
        residues_a=tuple(ca.residues[i] for i in side_a),
        residues_b=tuple(cb.residues[j] for j in side_b),
        contacts=tuple((pos_a[i], pos_b[j]) for i, j in contacts),
        bsa=bsa,
        deposition_date=structure.deposition_date,
        sequence_a=ca.sequence,
        sequence_b=cb.sequence,
    )


def passes_quality_filters(interface: Interface, bsa: Optional[float],
                           config: InterfaceConfig = InterfaceConfig()) -> tuple:
    reasons = []
    if min(len(interface.residues_a), len(interface.residues_b)) < config.min_interface_residues:
        reasons.append(TOO_FEW_RESIDUES)
    if config.bsa_threshold is not None:
        if bsa is None:
            reasons.append(BSA_MISSING)
        elif not bsa >= config.bsa_threshold:
            reasons.append(BSA_BELOW_THRESHOLD)
    return (not reasons, reasons)


@dataclass
class ExtractionResult:
    interfaces: list = field(default_factory=list)
    rejected: dict = field(default_factory=dict)  # ppi id string -> reasons


def extract_interfaces(structure: Structure, config: InterfaceConfig = InterfaceConfig()) -> ExtractionResult:
    """All filtered interfaces of one entry, in canonical chain-pair order."""
    result = ExtractionResult()
    if (config.max_resolution is not None and structure.resolution is not None
            and structure.resolution > config.max_resolution):
        result.rejected[structure.pdb_code] = ["ResolutionAboveLimit"]
        return result
    for a, b in chain_pairs(structure):
        iface = extract_interface(structure, a, b, config)
        if iface is None:
            continue
        ok, reasons = passes_quality_filters(iface, iface.bsa, config)
        if ok:
            result.interfaces.append(iface)
        else:
            result.rejected[str(iface.ppi_id)] = reasons
    return result


# --------------------------------------------------------------------------
# interfaces file (JSON lines)
#
# line 1: header {"format", "version", "tool_version", "config_fingerprint", "inputs"}
# then one record per PPI with keys in this order:
#   ppi_id, deposition_date, bsa, sequences {chain: sequence},
#   residues_a, residues_b   each residue: [chain, seq_num, insertion_code, aa_type,
#                            residue_name, [[atom_name, element, x, y, z], ...]]
#   contacts                 [[index into residues_a, index into residues_b], ...]

def _residue_to_json(res: Residue) -> list:
    atoms = [[a.name, a.element, *a.coords] for a in res.atoms if a.is_heavy]
    return [res.chain_id, res.seq_num, res.insertion_code, res.aa_type, res.name, atoms]


def _residue_from_json(rec: list) -> Residue:
    chain, seq, icode, aa, name, atoms = rec
    return Residue(
        chain_id=chain, seq_num=int(seq), insertion_code=icode, aa_type=aa,
        atoms=tuple(Atom(n, e, (float(x), float(y), float(z))) for n, e, x, y, z in atoms),
        name=name,
    )


def interface_to_record(iface: Interface) -> dict:
    return {
        "ppi_id": str(iface.ppi_id),
        "deposition_date": iface.deposition_date.isoformat() if iface.deposition_date else None,
        "bsa": iface.bsa,
        "sequences": {iface.ppi_id.chain_a: iface.sequence_a, iface.ppi_id.chain_b: iface.sequence_b},
        "residues_a": [_residue_to_json(r) for r in iface.residues_a],
        "residues_b": [_residue_to_json(r) for r in iface.residues_b],
        "contacts": [list(c) for c in iface.contacts],
    }


def interface_from_record(rec: dict) -> Interface:
    ppi = PpiId.parse(rec["ppi_id"])
    date = rec.get("deposition_date")
    seqs = rec.get("sequences") or {}
    return Interface(
        ppi_id=ppi,
        residues_a=tuple(_residue_from_json(r) for r in rec["residues_a"]),
        residues_b=tuple(_residue_from_json(r) for r in rec["residues_b"]),
        contacts=tuple((int(i), int(j)) for i, j in rec.get("contacts", [])),
        bsa=rec.get("bsa"),
        deposition_date=dt.date.fromisoformat(date) if date else None,
        sequence_a=seqs.get(ppi.chain_a, ""),
        sequence_b=seqs.get(ppi.chain_b, ""),
    )


def write_interfaces(path, interfaces: Iterable[Interface], header: Optional[dict] = None) -> None:
    head = {"format": INTERFACES_FORMAT, "version": INTERFACES_VERSION}
    head.update(header or {})
    with open(path, "w") as fh:
        fh.write(json.dumps(head, separators=(",", ":")) + "\n")
        for iface in interfaces:
            fh.write(json.dumps(interface_to_record(iface), separators=(",", ":")) + "\n")


def iter_interfaces(path) -> Iterator[Interface]:
    with open(path) as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON in interfaces file ({exc.msg})", n) from None
            if "format" in rec:
                if rec["format"] != INTERFACES_FORMAT:
                    raise ParseError(f"not an interfaces file: format {rec['format']!r}", n)
                continue
            try:
                yield interface_from_record(rec)
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"malformed interface record ({exc})", n) from None


def read_interfaces(path) -> list:
    return list(iter_interfaces(path))


def read_interfaces_header(path) -> dict:
    with open(path) as fh:
        first = fh.readline()
    try:
        rec = json.loads(first)
    except json.JSONDecodeError:
        raise ParseError("interfaces file has no header", 1) from None
    if rec.get("format") != INTERFACES_FORMAT:
        raise ParseError("interfaces file has no header", 1)
    return rec
