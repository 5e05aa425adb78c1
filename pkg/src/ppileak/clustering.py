"""Sequence clustering at a minimum identity, built in or via an external tool."""
from __future__ import annotations

import logging
import os
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .alignment import AlignmentParams, align_global
from .errors import ParseError, ToolFailed, ToolNotFound

log = logging.getLogger(__name__)

KMER = 5


@dataclass
class SequenceClusters:
    """Cluster membership keyed by protein (``<pdb>_<chain>``).

    Cluster ids are the keys of the cluster representatives.
    """

    assignments: dict
    min_seq_id: float = 0.3
    tool: str = "builtin"
    tool_version: str = ""
    representatives: list = field(default_factory=list)

    def __post_init__(self):
        if not self.representatives:
            self.representatives = list(dict.fromkeys(self.assignments.values()))

    def __contains__(self, key):
        return key in self.assignments

    def cluster_of(self, key: str) -> str:
        return self.assignments[key]

    def members(self) -> dict:
        out = {rep: [] for rep in self.representatives}
        for key, rep in self.assignments.items():
            out.setdefault(rep, []).append(key)
        return out

    def __len__(self):
        return len(self.representatives)

    def to_tsv(self, provenance: Optional[str] = None) -> str:
        lines = [f"# tool={self.tool} version={self.tool_version or 'n/a'} min_seq_id={self.min_seq_id!r}"]
        if provenance:
            lines.append(f"# provenance {provenance}")
        for rep, members in self.members().items():
            lines.extend(f"{rep}\t{m}" for m in members)
        return "\n".join(lines) + "\n"

    def write(self, path, provenance: Optional[str] = None) -> None:
        Path(path).write_text(self.to_tsv(provenance))


def parse_cluster_tsv(text: str, min_seq_id: float = 0.3) -> SequenceClusters:
    """Parse ``representative<TAB>member`` lines (MMseqs2 ``_cluster.tsv`` layout)."""
    assignments = {}
    tool, version = "external", ""
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("# provenance "):
            continue
        if line.startswith("#"):
            for kv in line[1:].split():
                k, _, v = kv.partition("=")
                if k == "tool":
                    tool = v
                elif k == "version":
                    version = "" if v == "n/a" else v
                elif k == "min_seq_id":
                    min_seq_id = float(v)
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError("expected two tab-separated columns", n, line)
        rep, member = parts[0].strip(), parts[1].strip()
        assignments.setdefault(rep, rep)
        assignments[member] = rep
    return SequenceClusters(assignments, min_seq_id, tool, version)


def read_clusters(path) -> SequenceClusters:
    return parse_cluster_tsv(Path(path).read_text())


def _kmers(seq: str, k: int = KMER) -> frozenset:
    return frozenset(seq[i:i + k] for i in range(len(seq) - k + 1))


def cluster_sequences(proteins: Mapping[str, str], min_seq_id: float = 0.3,
                      params: AlignmentParams = AlignmentParams(), k: int = KMER) -> SequenceClusters:
    """Greedy incremental clustering.

    Sequences are visited longest first (ties by key). Each joins the first
    cluster, in creation order, whose representative it matches with identity
    >= ``min_seq_id``; otherwise it founds a new cluster. Representatives that
    share no k-mer with the query are skipped without alignment.
    """
    if not 0 < min_seq_id <= 1:
        raise ValueError("min_seq_id must lie in (0, 1]")
    order = sorted(proteins, key=lambda key: (-len(proteins[key]), key))
    reps = []  # (key, sequence, kmers)
    assignments = {}
    decided = {}  # sequence -> representative key; identical sequences cluster together
    for key in order:
        seq = proteins[key]
        if seq in decided:
            assignments[key] = decided[seq]
            continue
        kmers = _kmers(seq, k)
        chosen = None
        for rep_key, rep_seq, rep_kmers in reps:
            if kmers and rep_kmers and kmers.isdisjoint(rep_kmers):
                continue
            if align_global(seq, rep_seq, params).identity >= min_seq_id:
                chosen = rep_key
                break
        if chosen is None:
            reps.append((key, seq, kmers))
            chosen = key
        assignments[key] = chosen
        decided[seq] = chosen
    return SequenceClusters(assignments, min_seq_id, representatives=[r[0] for r in reps])


def write_fasta(proteins: Mapping[str, str], path) -> None:
    with open(path, "w") as fh:
        for key in sorted(proteins):
            fh.write(f">{key}\n{proteins[key]}\n")


def _resolve_tool(tool_path: str) -> str:
    if os.path.sep in tool_path:
        if os.path.isfile(tool_path) and os.access(tool_path, os.X_OK):
            return tool_path
        found = None
    else:
        found = shutil.which(tool_path)
    if found is None:
        raise ToolNotFound(
            f"clustering executable {tool_path!r} not found; install MMseqs2 "
            "(https://github.com/soedinglab/MMseqs2) or pass its path, or use the built-in clusterer"
        )
    return found


def external_cluster_adapter(proteins: Mapping[str, str], min_seq_id: float = 0.3,
                             tool_path: str = "mmseqs", mode: str = "easy-cluster",
                             extra_args=(), workdir: Optional[str] = None) -> SequenceClusters:
    """Cluster with an MMseqs2-compatible executable.

    Runs ``<tool> <mode> in.fasta <prefix> <tmp> --min-seq-id <x>`` and reads
    ``<prefix>_cluster.tsv``. The tool's ``version`` output is recorded.
    """
    exe = _resolve_tool(tool_path)
    version = ""
    try:
        out = subprocess.run([exe, "version"], capture_output=True, text=True, timeout=60)
        if out.returncode == 0:
            version = out.stdout.strip().split()[0] if out.stdout.strip() else ""
    except (OSError, subprocess.TimeoutExpired):
        pass
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        fasta = os.path.join(tmp, "input.fasta")
        prefix = os.path.join(tmp, "clusters")
        write_fasta(proteins, fasta)
        cmd = [exe, mode, fasta, prefix, os.path.join(tmp, "work"),
               "--min-seq-id", str(min_seq_id), *extra_args]
        log.info("running %s", " ".join(cmd))
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise ToolFailed(f"{os.path.basename(exe)} {mode} failed", proc.returncode, proc.stderr)
        tsv = prefix + "_cluster.tsv"
        if not os.path.exists(tsv):
            raise ToolFailed(f"{os.path.basename(exe)} produced no {os.path.basename(tsv)}", 0, proc.stderr)
        clusters = parse_cluster_tsv(Path(tsv).read_text(), min_seq_id)
    missing = set(proteins) - set(clusters.assignments)
    for key in sorted(missing):
        # the tool drops nothing in practice; keep the partition total anyway
        clusters.assignments[key] = key
        clusters.representatives.append(key)
    clusters.tool = os.path.basename(exe)
    clusters.tool_version = version
    return clusters
