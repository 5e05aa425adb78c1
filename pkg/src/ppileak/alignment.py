"""Global pairwise alignment with affine gaps and BLOSUM62 scores."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .errors import EmptySequence

_BLOSUM62_TEXT = """
   A  R  N  D  C  Q  E  G  H  I  L  K  M  F  P  S  T  W  Y  V
A  4 -1 -2 -2  0 -1 -1  0 -2 -1 -1 -1 -1 -2 -1  1  0 -3 -2  0
R -1  5  0 -2 -3  1  0 -2  0 -3 -2  2 -1 -3 -2 -1 -1 -3 -2 -3
N -2  0  6  1 -3  0  0  0  1 -3 -3  0 -2 -3 -2  1  0 -4 -2 -3
D -2 -2  1  6 -3  0  2 -1 -1 -3 -4 -1 -3 -3 -1  0 -1 -4 -3 -3
C  0 -3 -3 -3  9 -3 -4 -3 -3 -1 -1 -3 -1 -2 -3 -1 -1 -2 -2 -1
Q -1  1  0  0 -3  5  2 -2  0 -3 -2  1  0 -3 -1  0 -1 -2 -1 -2
E -1  0  0  2 -4  2  5 -2  0 -3 -3  1 -2 -3 -1  0 -1 -3 -2 -2
G  0 -2  0 -1 -3 -2 -2  6 -2 -4 -4 -2 -3 -3 -2  0 -2 -2 -3 -3
H -2  0  1 -1 -3  0  0 -2  8 -3 -3 -1 -2 -1 -2 -1 -2 -2  2 -3
I -1 -3 -3 -3 -1 -3 -3 -4 -3  4  2 -3  1  0 -3 -2 -1 -3 -1  3
L -1 -2 -3 -4 -1 -2 -3 -4 -3  2  4 -2  2  0 -3 -2 -1 -2 -1  1
K -1  2  0 -1 -3  1  1 -2 -1 -3 -2  5 -1 -3 -1  0 -1 -3 -2 -2
M -1 -1 -2 -3 -1  0 -2 -3 -2  1  2 -1  5  0 -2 -1 -1 -1 -1  1
F -2 -3 -3 -3 -2 -3 -3 -3 -1  0  0 -3  0  6 -4 -2 -2  1  3 -1
P -1 -2 -2 -1 -3 -1 -1 -2 -2 -3 -3 -1 -2 -4  7 -1 -1 -4 -3 -2
S  1 -1  1  0 -1  0  0  0 -1 -2 -2  0 -1 -2 -1  4  1 -3 -2 -2
T  0 -1  0 -1 -1 -1 -1 -2 -2 -1 -1 -1 -1 -2 -1  1  5 -2 -2  0
W -3 -3 -4 -4 -2 -2 -3 -2 -2 -3 -2 -3 -1  1 -4 -3 -2 11  2 -3
Y -2 -2 -2 -3 -2 -1 -2 -3  2 -1 -1 -2 -1  3 -3 -2 -2  2  7 -1
V  0 -3 -3 -3 -1 -2 -2 -3 -3  3  1 -2  1 -1 -2 -2  0 -3 -1  4
"""


def _load_blosum62() -> dict:
    rows = [line.split() for line in _BLOSUM62_TEXT.strip().splitlines()]
    cols = rows[0]
    return {(r[0], c): int(v) for r in rows[1:] for c, v in zip(cols, r[1:])}


BLOSUM62 = _load_blosum62()
ALPHABET = "ARNDCQEGHILKMFPSTWYV"


@dataclass(frozen=True)
class AlignmentParams:
    """Gap of length k scores ``gap_open + (k - 1) * gap_extend`` (end gaps included)."""

    gap_open: int = -11
    gap_extend: int = -1
    substitution_matrix: str = "BLOSUM62"

    def __post_init__(self):
        if not self.gap_open <= self.gap_extend <= 0:
            raise ValueError("need gap_open <= gap_extend <= 0")
        if self.substitution_matrix != "BLOSUM62":
            raise ValueError("only BLOSUM62 is available")


class Alignment(NamedTuple):
    score: int
    identity: float


def substitution_score(a: str, b: str) -> int:
    """BLOSUM62 entry; anything outside the 20 standard letters scores 0."""
    return BLOSUM62.get((a, b), 0)


def _clean(seq: str) -> str:
    seq = seq.upper()
    return "".join(c if c in ALPHABET else "X" for c in seq)


def align_global(seq_a: str, seq_b: str, params: AlignmentParams = AlignmentParams()) -> Alignment:
    """Needleman-Wunsch score and sequence identity.

    Identity counts identical aligned standard residues and divides by the
    length of the shorter sequence. Several alignments may reach the optimal
    score; the identity reported is the largest among them, which makes the
    value independent of traceback order and symmetric in the arguments.
    """
    if not seq_a or not seq_b:
        raise EmptySequence("cannot align an empty sequence")
    a, b = _clean(seq_a), _clean(seq_b)
    n, m = len(a), len(b)
    # score and match count packed into one integer: score * base + matches,
    # so integer max is the lexicographic max over (score, matches).
    base = min(n, m) + 1
    go = params.gap_open * base
    ge = params.gap_extend * base
    neg = -(1 << 62)

    sub_rows = []
    for ca in a:
        row = []
        for cb in b:
            s = BLOSUM62.get((ca, cb), 0) * base
            if ca == cb and ca != "X":
                s += 1
            row.append(s)
        sub_rows.append(row)

    # M: a[i] aligned to b[j]; X: a[i] against a gap; Y: b[j] against a gap
    prev_m = [neg] * (m + 1)
    prev_x = [neg] * (m + 1)
    prev_y = [neg] * (m + 1)
    prev_m[0] = 0
    for j in range(1, m + 1):
        prev_y[j] = go + (j - 1) * ge
    for i in range(1, n + 1):
        cur_m = [neg] * (m + 1)
        cur_x = [neg] * (m + 1)
        cur_y = [neg] * (m + 1)
        cur_x[0] = go + (i - 1) * ge
        sub = sub_rows[i - 1]
        for j in range(1, m + 1):
            pm, px, py = prev_m[j - 1], prev_x[j - 1], prev_y[j - 1]
            best = pm if pm > px else px
            if py > best:
                best = py
            cur_m[j] = best + sub[j - 1]

            um, ux, uy = prev_m[j], prev_x[j], prev_y[j]
            v = um + go
            t = ux + ge
            if t > v:
                v = t
            t = uy + go
            if t > v:
                v = t
            cur_x[j] = v

            lm, lx, ly = cur_m[j - 1], cur_x[j - 1], cur_y[j - 1]
            v = lm + go
            t = ly + ge
            if t > v:
                v = t
            t = lx + go
            if t > v:
                v = t
            cur_y[j] = v
        prev_m, prev_x, prev_y = cur_m, cur_x, cur_y

    packed = max(prev_m[m], prev_x[m], prev_y[m])
    score = packed // base
    matches = packed - score * base
    return Alignment(int(score), matches / min(n, m))
