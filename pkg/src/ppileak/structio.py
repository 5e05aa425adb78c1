"""Parsing of PDB / mmCIF files into an immutable in-memory model.

Only the parts of the formats the pipeline consumes are understood: atom
records, the first model, the header deposition date, the entry code and
(optionally) the reported resolution.
"""
from __future__ import annotations

import datetime as dt
import gzip
import io
import itertools
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Optional, Union

import numpy as np

from .errors import ChainNotFound, IdenticalChains, ParseError, UnsupportedFormat

THREE_TO_ONE = {
    "ALA": "A", "ARG": "R", "ASN": "N", "ASP": "D", "CYS": "C",
    "GLN": "Q", "GLU": "E", "GLY": "G", "HIS": "H", "ILE": "I",
    "LEU": "L", "LYS": "K", "MET": "M", "PHE": "F", "PRO": "P",
    "SER": "S", "THR": "T", "TRP": "W", "TYR": "Y", "VAL": "V",
}
ONE_TO_THREE = {v: k for k, v in THREE_TO_ONE.items()}
UNKNOWN = "X"
WATER_NAMES = frozenset({"HOH", "WAT", "DOD", "H2O", "TIP", "TIP3", "SOL"})
BACKBONE = frozenset({"N", "CA", "C"})
HYDROGEN_ELEMENTS = frozenset({"H", "D"})

PDB_CODE_RE = re.compile(r"^[0-9][a-z0-9]{3}$")
_MONTHS = ["JAN", "FEB", "MAR", "APR", "MAY", "JUN",
           "JUL", "AUG", "SEP", "OCT", "NOV", "DEC"]

StructureSource = Union[str, Path, bytes, BinaryIO]


@dataclass(frozen=True)
class Atom:
    name: str
    element: str
    coords: tuple

    @property
    def is_heavy(self) -> bool:
        return self.element.upper() not in HYDROGEN_ELEMENTS


@dataclass(frozen=True)
class Residue:
    chain_id: str
    seq_num: int
    insertion_code: str
    aa_type: str
    atoms: tuple
    name: str = ""
    hetero: bool = False

    @property
    def key(self) -> tuple:
        return (self.chain_id, self.seq_num, self.insertion_code)

    @property
    def heavy_atoms(self) -> tuple:
        return tuple(a for a in self.atoms if a.is_heavy)


@dataclass(frozen=True)
class Chain:
    chain_id: str
    residues: tuple

    @property
    def sequence(self) -> str:
        return "".join(r.aa_type for r in self.residues)

    def __len__(self):
        return len(self.residues)

    @cached_property
    def heavy_coords(self) -> np.ndarray:
        """(n_atoms, 3) heavy-atom coordinates, residue-major order."""
        xyz = [a.coords for r in self.residues for a in r.atoms if a.is_heavy]
        return np.asarray(xyz, dtype=float).reshape(-1, 3)

    @cached_property
    def heavy_residue_index(self) -> np.ndarray:
        """Residue index of each row of ``heavy_coords``."""
        idx = [i for i, r in enumerate(self.residues) for a in r.atoms if a.is_heavy]
        return np.asarray(idx, dtype=np.int64)

    @cached_property
    def heavy_elements(self) -> tuple:
        return tuple(a.element for r in self.residues for a in r.atoms if a.is_heavy)


@dataclass(frozen=True)
class Structure:
    pdb_code: str
    chains: dict = field(hash=False)
    deposition_date: Optional[dt.date] = None
    resolution: Optional[float] = None

    def __post_init__(self):
        if not PDB_CODE_RE.match(self.pdb_code):
            raise ValueError(f"invalid PDB code {self.pdb_code!r}")

    def chain(self, chain_id: str) -> Chain:
        try:
            return self.chains[chain_id]
        except KeyError:
            raise ChainNotFound(f"chain {chain_id!r} not in {self.pdb_code}") from None

    def residues(self) -> Iterator[Residue]:
        for chain in self.chains.values():
            yield from chain.residues


@dataclass(frozen=True, order=True)
class PpiId:
    """Canonical identifier of one chain-pair interaction, e.g. ``3btd_E_I``."""

    pdb_code: str
    chain_a: str
    chain_b: str

    def __str__(self):
        return f"{self.pdb_code}_{self.chain_a}_{self.chain_b}"

    @classmethod
    def parse(cls, text: str) -> "PpiId":
        parts = text.strip().split("_")
        if len(parts) != 3:
            raise ValueError(f"malformed PPI id {text!r}")
        return canonical_ppi_id(*parts)

    @property
    def proteins(self) -> tuple:
        """Protein keys (``<pdb>_<chain>``) of both partners."""
        return (f"{self.pdb_code}_{self.chain_a}", f"{self.pdb_code}_{self.chain_b}")


def normalize_pdb_code(code: str) -> str:
    norm = code.strip().lower()
    if not PDB_CODE_RE.match(norm):
        raise ValueError(f"invalid PDB code {code!r}")
    return norm


def canonical_ppi_id(pdb_code: str, chain_x: str, chain_y: str) -> PpiId:
    if chain_x == chain_y:
        raise IdenticalChains(f"an interaction needs two distinct chains, got {chain_x!r} twice")
    a, b = sorted((chain_x, chain_y))
    return PpiId(normalize_pdb_code(pdb_code), a, b)


def chain_pairs(structure: Structure) -> list:
    return list(itertools.combinations(sorted(structure.chains), 2))


def deposition_date(structure: Structure) -> Optional[dt.date]:
    return structure.deposition_date


# --------------------------------------------------------------------------
# Raw atom records shared by both formats

@dataclass
class _RawAtom:
    hetero: bool
    name: str
    altloc: str
    resname: str
    chain: str
    seq: int
    icode: str
    element: str
    xyz: tuple
    line: int


def _infer_element(name: str) -> str:
    for ch in name:
        if ch.isalpha():
            return ch.upper()
    return ""


def _assemble(raw_atoms: Iterable[_RawAtom]) -> dict:
    """Group atom records into chains of retained residues."""
    per_chain: dict = {}
    for ra in raw_atoms:
        if ra.resname in WATER_NAMES:
            continue
        residues = per_chain.setdefault(ra.chain, {})
        key = (ra.seq, ra.icode)
        slot = residues.get(key)
        if slot is None:
            slot = residues[key] = {"resname": ra.resname, "hetero": ra.hetero, "atoms": {}}
        elif slot["resname"] != ra.resname:
            # alternate residue identity at the same position: keep the first
            continue
        if ra.name in slot["atoms"]:
            # later alternate location of an atom already seen
            continue
        if not all(np.isfinite(ra.xyz)):
            raise ParseError("non-finite coordinate", ra.line)
        slot["atoms"][ra.name] = Atom(ra.name, ra.element, ra.xyz)

    chains = {}
    for chain_id, residues in per_chain.items():
        kept = []
        for (seq, icode), slot in residues.items():
            resname, atoms = slot["resname"], slot["atoms"]
            standard = resname in THREE_TO_ONE or resname == "UNK"
            if not standard and not BACKBONE <= atoms.keys():
                continue
            kept.append(Residue(
                chain_id=chain_id, seq_num=seq, insertion_code=icode,
                aa_type=THREE_TO_ONE.get(resname, UNKNOWN),
                atoms=tuple(atoms.values()), name=resname, hetero=slot["hetero"],
            ))
        if kept:
            chains[chain_id] = Chain(chain_id, tuple(kept))
    return chains


# --------------------------------------------------------------------------
# PDB format

def _parse_pdb_date(text: str) -> Optional[dt.date]:
    text = text.strip()
    if not text:
        return None
    try:
        day, mon, yy = text.split("-")
        year = int(yy)
        year += 1900 if year >= 70 else 2000
        return dt.date(year, _MONTHS.index(mon.upper()) + 1, int(day))
    except (ValueError, IndexError):
        return None


def _format_pdb_date(date: dt.date) -> str:
    return f"{date.day:02d}-{_MONTHS[date.month - 1]}-{date.year % 100:02d}"


_RESOLUTION_RE = re.compile(r"RESOLUTION\.\s+([0-9.]+)\s+ANGSTROM")


def _parse_pdb_text(lines: Iterable[str]) -> dict:
    meta = {"code": None, "date": None, "resolution": None}
    raw = []
    in_model = False
    seen_model = False
    for n, line in enumerate(lines, start=1):
        record = line[:6].rstrip()
        if record == "HEADER":
            meta["date"] = _parse_pdb_date(line[50:59])
            code = line[62:66].strip()
            meta["code"] = code or None
        elif record == "REMARK" and line[6:10].strip() == "2":
            m = _RESOLUTION_RE.search(line)
            if m:
                meta["resolution"] = float(m.group(1))
        elif record == "MODEL":
            if seen_model:
                break
            in_model = seen_model = True
        elif record == "ENDMDL":
            if in_model:
                break
        elif record in ("ATOM", "HETATM"):
            if len(line.rstrip("\n")) < 54:
                raise ParseError("truncated atom record", n, line)
            try:
                name = line[12:16].strip()
                seq = int(line[22:26])
                xyz = (float(line[30:38]), float(line[38:46]), float(line[46:54]))
            except ValueError as exc:
                raise ParseError(f"malformed atom record ({exc})", n, line) from None
            element = line[76:78].strip() if len(line) >= 78 else ""
            raw.append(_RawAtom(
                hetero=record == "HETATM", name=name, altloc=line[16].strip(),
                resname=line[17:20].strip(), chain=line[21].strip(), seq=seq,
                icode=line[26].strip(), element=(element or _infer_element(name)).upper(),
                xyz=xyz, line=n,
            ))
    meta["chains"] = _assemble(raw)
    return meta


def to_pdb_text(structure: Structure) -> str:
    """Serialize to the normalized PDB subset understood by :func:`parse_structure`."""
    date = _format_pdb_date(structure.deposition_date) if structure.deposition_date else ""
    out = [f"HEADER    {'':40s}{date:9s}   {structure.pdb_code.upper():4s}"]
    if structure.resolution is not None:
        out.append(f"REMARK   2 RESOLUTION. {structure.resolution:7.2f} ANGSTROMS.")
    serial = 1
    for chain in structure.chains.values():
        if len(chain.chain_id) != 1:
            raise ValueError(f"PDB format needs single-character chain ids, got {chain.chain_id!r}")
        for res in chain.residues:
            record = "HETATM" if res.hetero else "ATOM"
            resname = res.name or ONE_TO_THREE.get(res.aa_type, "UNK")
            for atom in res.atoms:
                name = atom.name if len(atom.name) == 4 else f" {atom.name:<3s}"
                x, y, z = atom.coords
                out.append(
                    f"{record:<6s}{serial % 100000:5d} {name:4s} {resname:>3s} {chain.chain_id}"
                    f"{res.seq_num:4d}{res.insertion_code or ' ':1s}   "
                    f"{x:8.3f}{y:8.3f}{z:8.3f}{1.0:6.2f}{0.0:6.2f}          {atom.element:>2s}"
                )
                serial += 1
        out.append("TER")
    out.append("END")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# mmCIF (atom_site + deposition date subset)

_CIF_TOKEN = re.compile(r"""'(?:[^']|'(?=\S))*'|"(?:[^"]|"(?=\S))*"|\S+""")


def _cif_tokens(lines: Iterable[str]) -> Iterator[tuple]:
    """Yield (token, line_number); quoted and semicolon text fields unquoted."""
    text_field = None
    start = 0
    for n, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if text_field is not None:
            if line.startswith(";"):
                yield "\n".join(text_field), start
                text_field = None
                line = line[1:]
            else:
                text_field.append(line)
                continue
        elif line.startswith(";"):
            text_field, start = [line[1:]], n
            continue
        for m in _CIF_TOKEN.finditer(line):
            tok = m.group(0)
            if tok.startswith("#"):
                break
            if len(tok) >= 2 and tok[0] in "'\"" and tok[-1] == tok[0]:
                yield tok[1:-1], n
            else:
                yield tok, n
    if text_field is not None:
        raise ParseError("unterminated text field", start)


def _cif_tables(lines: Iterable[str]) -> dict:
    """Map category -> (items, rows, first line) for every category in the block."""
    tokens = list(_cif_tokens(lines))
    tables: dict = {}
    i, n = 0, len(tokens)
    while i < n:
        tok, line = tokens[i]
        if tok == "loop_":
            i += 1
            tags = []
            while i < n and tokens[i][0].startswith("_"):
                tags.append(tokens[i][0])
                i += 1
            if not tags:
                raise ParseError("loop_ without tags", line)
            start = tokens[i][1] if i < n else line
            values = []
            while i < n and not (tokens[i][0].startswith(("_", "data_")) or tokens[i][0] == "loop_"):
                values.append(tokens[i][0])
                i += 1
            if len(values) % len(tags):
                raise ParseError(f"loop over {tags[0].split('.')[0]} has a ragged row", start)
            category = tags[0].split(".")[0]
            items = [t.split(".", 1)[-1] for t in tags]
            rows = [values[k:k + len(tags)] for k in range(0, len(values), len(tags))]
            tables.setdefault(category, (items, rows, start))
        elif tok.startswith("_"):
            if i + 1 >= n:
                raise ParseError(f"tag {tok} without value", line)
            category, _, item = tok.partition(".")
            items, rows, _ = tables.setdefault(category, ([], [[]], line))
            if len(rows) == 1 and item not in items:
                items.append(item)
                rows[0].append(tokens[i + 1][0])
            i += 2
        else:
            i += 1
    return tables


def _cif_value(v):
    return None if v in (".", "?") else v


def _parse_mmcif_text(lines: Iterable[str]) -> dict:
    tables = _cif_tables(lines)
    meta = {"code": None, "date": None, "resolution": None}

    def single(category, item):
        if category in tables:
            tags, rows, _ = tables[category]
            if item in tags and rows:
                return _cif_value(rows[0][tags.index(item)])
        return None

    meta["code"] = single("_entry", "id")
    for cat, item in (("_pdbx_database_status", "recvd_initial_deposition_date"),
                      ("_database_PDB_rev", "date_original")):
        value = single(cat, item)
        if value:
            try:
                meta["date"] = dt.date.fromisoformat(value)
                break
            except ValueError:
                pass
    res = single("_refine", "ls_d_res_high") or single("_reflns", "d_resolution_high")
    if res:
        try:
            meta["resolution"] = float(res)
        except ValueError:
            pass

    if "_atom_site" not in tables:
        raise ParseError("no _atom_site category")
    tags, rows, first_line = tables["_atom_site"]
    col = {t: i for i, t in enumerate(tags)}

    def get(row, *names):
        for name in names:
            if name in col:
                v = _cif_value(row[col[name]])
                if v is not None:
                    return v
        return None

    raw = []
    first_model = None
    for k, row in enumerate(rows):
        model = get(row, "pdbx_PDB_model_num")
        if first_model is None:
            first_model = model
        elif model != first_model:
            break
        try:
            name = get(row, "auth_atom_id", "label_atom_id")
            seq = int(get(row, "auth_seq_id", "label_seq_id"))
            xyz = (float(get(row, "Cartn_x")), float(get(row, "Cartn_y")), float(get(row, "Cartn_z")))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"malformed atom_site row {k + 1} ({exc})", first_line) from None
        element = (get(row, "type_symbol") or _infer_element(name)).upper()
        raw.append(_RawAtom(
            hetero=(get(row, "group_PDB") == "HETATM"), name=name,
            altloc=get(row, "label_alt_id") or "",
            resname=get(row, "auth_comp_id", "label_comp_id") or "",
            chain=get(row, "auth_asym_id", "label_asym_id") or "",
            seq=seq, icode=get(row, "pdbx_PDB_ins_code") or "",
            element=element, xyz=xyz, line=first_line,
        ))
    meta["chains"] = _assemble(raw)
    return meta


# --------------------------------------------------------------------------

def detect_format(name: str) -> str:
    lower = name.lower()
    if lower.endswith(".gz"):
        lower = lower[:-3]
    if lower.endswith((".pdb", ".ent")):
        return "pdb"
    if lower.endswith((".cif", ".mmcif")):
        return "mmcif"
    raise UnsupportedFormat(f"cannot infer structure format from {name!r}")


def _code_from_filename(name: str) -> Optional[str]:
    stem = Path(name).name.lower()
    for suffix in (".gz", ".pdb", ".ent", ".cif", ".mmcif"):
        if stem.endswith(suffix):
            stem = stem[: -len(suffix)]
    if stem.startswith("pdb") and len(stem) == 7:
        stem = stem[3:]
    for candidate in (stem, stem[:4]):
        if PDB_CODE_RE.match(candidate):
            return candidate
    return None


def parse_structure(
    source: StructureSource,
    format: Optional[str] = None,
    pdb_code: Optional[str] = None,
) -> Structure:
    """Parse a PDB or mmCIF file (optionally gzip-compressed).

    Args:
        source: File path, raw bytes or a binary stream.
        format: ``"pdb"`` or ``"mmcif"``; inferred from the file extension
            (or the content for in-memory sources) when omitted.
        pdb_code: Overrides the entry code found in the header / file name.

    Returns:
        Structure with the first model, first alternate locations, waters and
        non-polypeptide hetero groups removed. Hydrogens are kept.
    """
    name = None
    if isinstance(source, (str, Path)):
        name = str(source)
        data = Path(source).read_bytes()
    elif isinstance(source, bytes):
        data = source
    else:
        data = source.read()
        name = getattr(source, "name", None)
        name = name if isinstance(name, str) else None
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    text = data.decode("utf-8", errors="replace")

    if format is None:
        if name is not None:
            try:
                format = detect_format(name)
            except UnsupportedFormat:
                format = None
        if format is None:
            format = "mmcif" if text.lstrip().startswith("data_") else "pdb"
    if format not in ("pdb", "mmcif"):
        raise UnsupportedFormat(f"unsupported structure format {format!r}")

    lines = io.StringIO(text)
    meta = _parse_pdb_text(lines) if format == "pdb" else _parse_mmcif_text(lines)

    code = pdb_code or meta["code"] or (_code_from_filename(name) if name else None)
    if code is None:
        raise ParseError("no PDB code in header or file name; pass pdb_code explicitly")
    try:
        code = normalize_pdb_code(code)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    return Structure(code, meta["chains"], meta["date"], meta["resolution"])
