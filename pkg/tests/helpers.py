"""Shared builders for tests that need a whole corpus."""
import numpy as np

from ppileak.audit import Corpus
from ppileak.descriptor import DescriptorStore, embed_corpus
from ppileak.interface import InterfaceConfig, extract_interfaces
from ppileak.structio import PpiId
from ppileak.synthetic import CorpusSpec, generate_corpus

NO_BSA = InterfaceConfig(bsa_threshold=None)


def build_corpus(spec: CorpusSpec):
    """Returns (synthetic corpus, interfaces, Corpus)."""
    synthetic = generate_corpus(spec)
    ifaces = [i for s in synthetic.structures for i in extract_interfaces(s, NO_BSA).interfaces]
    store = embed_corpus(ifaces)
    return synthetic, ifaces, Corpus.from_interfaces(ifaces, store)


def make_store(vectors, fp="fp", prefix=1):
    ids = [PpiId(f"{prefix}{k:03x}", "A", "B") for k in range(len(vectors))]
    return DescriptorStore(ids, np.asarray(vectors, dtype=float), [10] * len(vectors), fp)


ACCEPTANCE_LINES = []


def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
    """Print and keep one pass/fail line for an acceptance criterion."""
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed
