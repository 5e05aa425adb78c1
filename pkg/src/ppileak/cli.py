"""Command-line entry point: ``ppileak <command> ...``.

Each stage reads and writes files. Every output carries a provenance block
(tool version, config fingerprint, content fingerprints of its inputs), and
a stage refuses inputs produced under a different configuration.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .audit import Corpus, audit_split, emit_report, run_experiment
from .clustering import cluster_sequences, external_cluster_adapter, read_clusters
from .config import PipelineConfig
from .descriptor import DescriptorStore, embed_corpus
from .errors import ConfigMismatch, EmptyInput, MissingDescriptor, ParseError, PpiLeakError
from .interface import extract_interfaces, read_interfaces, read_interfaces_header, write_interfaces
from .ioutil import canonical_json, dumps_json, file_fingerprint, provenance
from .similarity import build_duplicate_graph, calibrate_from_distances, idist_distance
from .splits import Split, make_split, validate_split
from .structio import PpiId, parse_structure

log = logging.getLogger("ppileak")


def _load_config(args) -> PipelineConfig:
    config = PipelineConfig.read(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def _workers(args, config) -> int:
    n = args.workers or config.io.workers or os.cpu_count() or 1
    return max(1, int(n))


def _prov(config: PipelineConfig, sections, inputs: dict) -> dict:
    block = provenance(config.fingerprint, inputs)
    block["stage_fingerprints"] = {s: config.section_fingerprint(s) for s in sections}
    return block


def _announce(block: dict) -> None:
    log.info("provenance %s", canonical_json(block))


def _check_stage(found: dict, config: PipelineConfig, what: str) -> None:
    """Refuse an input whose recorded section fingerprints differ from ``config``."""
    for section, fp in (found or {}).items():
        expected = config.section_fingerprint(section)
        if fp != expected:
            raise ConfigMismatch(
                f"{what} was produced with a different {section!r} config "
                f"(fingerprint {fp}, current {expected}); rerun the upstream stage")


def _load_store(path, config: PipelineConfig) -> DescriptorStore:
    store = DescriptorStore.read(path)
    if store.fingerprint != config.descriptor.fingerprint:
        raise ConfigMismatch(
            f"descriptor store {Path(path).name} has fingerprint {store.fingerprint}, "
            f"current descriptor config has {config.descriptor.fingerprint}; rerun embed")
    text = DescriptorStore.read_provenance(path)
    if text:
        _check_stage(json.loads(text).get("stage_fingerprints"), config, Path(path).name)
    return store


def _load_interfaces(path, config: PipelineConfig) -> list:
    header = read_interfaces_header(path)
    _check_stage(header.get("provenance", {}).get("stage_fingerprints"), config, Path(path).name)
    return read_interfaces(path)


def _out(args, default: str) -> str:
    return args.out or default


# --------------------------------------------------------------------------
# commands

STRUCTURE_SUFFIXES = (".pdb", ".ent", ".cif", ".mmcif")


def _structure_files(directory) -> list:
    files = []
    for path in sorted(Path(directory).rglob("*")):
        name = path.name.lower()
        stem = name[:-3] if name.endswith(".gz") else name
        if path.is_file() and stem.endswith(STRUCTURE_SUFFIXES):
            files.append(path)
    return files


def _extract_file(args):
    path, iface_config = args
    try:
        structure = parse_structure(path)
        result = extract_interfaces(structure, iface_config)
        return result.interfaces, len(result.rejected), None
    except (PpiLeakError, ValueError, OSError) as exc:
        return [], 0, f"{type(exc).__name__}: {exc}"


def cmd_extract(args, config: PipelineConfig) -> int:
    root = Path(args.input)
    if not root.is_dir():
        log.error("input directory %s does not exist", root)
        return 2
    files = _structure_files(root)
    jobs = [(f, config.interface) for f in files]
    workers = _workers(args, config)
    if workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_extract_file, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        outcomes = [_extract_file(j) for j in jobs]
    interfaces, skipped, rejected = [], 0, 0
    for path, (found, n_rejected, error) in zip(files, outcomes):
        if error:
            skipped += 1
            log.warning("skipped %s: %s", path.name, error)
        interfaces.extend(found)
        rejected += n_rejected
    seen = set()
    unique = []
    for iface in interfaces:
        if iface.ppi_id in seen:
            log.warning("duplicate PPI %s ignored", iface.ppi_id)
            continue
        seen.add(iface.ppi_id)
        unique.append(iface)
    unique.sort(key=lambda i: str(i.ppi_id))
    log.info("%d files, %d skipped, %d interfaces, %d rejected by filters",
             len(files), skipped, len(unique), rejected)
    if not unique:
        log.error("no interfaces extracted from %s", root)
        return 1
    inputs = {str(f.relative_to(root)): file_fingerprint(f) for f in files}
    block = _prov(config, ["interface"], inputs)
    write_interfaces(_out(args, config.io.interfaces), unique, {"provenance": block})
    _announce(block)
    return 0


def cmd_embed(args, config: PipelineConfig) -> int:
    interfaces = _load_interfaces(args.interfaces, config)
    store = embed_corpus(interfaces, config.descriptor, _workers(args, config))
    block = _prov(config, ["interface", "descriptor"],
                  {Path(args.interfaces).name: file_fingerprint(args.interfaces)})
    store.write(_out(args, config.io.descriptors), canonical_json(block))
    log.info("embedded %d interfaces", len(store))
    _announce(block)
    return 0


def _proteins(interfaces) -> dict:
    proteins = {}
    for iface in interfaces:
        for key, seq in iface.sequences.items():
            if seq:
                proteins[key] = seq
    return proteins


def cmd_cluster_seq(args, config: PipelineConfig) -> int:
    interfaces = _load_interfaces(args.interfaces, config)
    proteins = _proteins(interfaces)
    cfg = config.clustering
    tool = args.tool or cfg.tool
    if tool == "builtin":
        clusters = cluster_sequences(proteins, cfg.min_seq_id)
    else:
        clusters = external_cluster_adapter(proteins, cfg.min_seq_id, tool, cfg.mode)
    block = _prov(config, ["interface", "clustering"],
                  {Path(args.interfaces).name: file_fingerprint(args.interfaces)})
    block["clustering_tool"] = {"name": clusters.tool, "version": clusters.tool_version}
    clusters.write(_out(args, config.io.clusters), canonical_json(block))
    log.info("%d proteins in %d clusters (%s)", len(proteins), len(clusters),
             " ".join(filter(None, (clusters.tool, clusters.tool_version))))
    _announce(block)
    return 0


def cmd_split(args, config: PipelineConfig) -> int:
    spec = config.split
    if args.strategy:
        spec = replace(spec, strategy=args.strategy)
    inputs = {}
    interfaces = store = None
    if args.interfaces:
        interfaces = _load_interfaces(args.interfaces, config)
        inputs[Path(args.interfaces).name] = file_fingerprint(args.interfaces)
    if args.descriptors:
        store = _load_store(args.descriptors, config)
        inputs[Path(args.descriptors).name] = file_fingerprint(args.descriptors)
    if interfaces is not None:
        ppis = [i.ppi_id for i in interfaces]
    elif store is not None:
        ppis = list(store.ids)
    else:
        raise EmptyInput("split needs --interfaces or --descriptors")
    dates = clusters = graph = None
    if spec.strategy == "deposition_time":
        if interfaces is None:
            raise EmptyInput("deposition_time splits need --interfaces (dates travel with them)")
        dates = {i.ppi_id.pdb_code: i.deposition_date for i in interfaces}
    elif spec.strategy == "sequence_component":
        if args.clusters:
            clusters = read_clusters(args.clusters)
            if clusters.min_seq_id != config.clustering.min_seq_id:
                raise ConfigMismatch(
                    f"clusters were built at min_seq_id {clusters.min_seq_id}, "
                    f"config asks for {config.clustering.min_seq_id}")
            inputs[Path(args.clusters).name] = file_fingerprint(args.clusters)
        elif interfaces is not None:
            clusters = cluster_sequences(_proteins(interfaces), config.clustering.min_seq_id)
        else:
            raise EmptyInput("sequence_component splits need --clusters or --interfaces")
    elif spec.strategy == "interface_component":
        if store is None:
            raise EmptyInput("interface_component splits need --descriptors")
        graph = build_duplicate_graph(store.subset(ppis), config.similarity)
    split = make_split(ppis, spec, dates=dates, clusters=clusters, graph=graph)
    block = _prov(config, ["split", "similarity", "descriptor", "clustering"], inputs)
    split.provenance["provenance"] = block
    split.provenance["validation"] = validate_split(split, ppis)["passed"]
    if split.provenance.get("infeasible_ratio"):
        log.warning("a single group is too large for the requested ratio; split is degenerate")
    split.write(_out(args, config.io.split))
    log.info("split %s: %s", spec.strategy,
             ", ".join(f"{name}={len(m)}" for name, m in split.folds.items()))
    _announce(block)
    return 0


def cmd_audit(args, config: PipelineConfig) -> int:
    split = Split.read(args.split)
    inner = split.provenance.get("provenance", {})
    _check_stage({k: v for k, v in inner.get("stage_fingerprints", {}).items()
                  if k in ("descriptor", "similarity")}, config, Path(args.split).name)
    store = _load_store(args.descriptors, config)
    report = audit_split(split, store, config.similarity)
    report.provenance = _prov(config, ["descriptor", "similarity"], {
        Path(args.split).name: file_fingerprint(args.split),
        Path(args.descriptors).name: file_fingerprint(args.descriptors),
    })
    emit_report(report, args.format, _out(args, config.io.report))
    for r in report.results:
        log.info("test fold %s: %d of %d leaked (%.4f)", r.test_fold, r.leaked_count,
                 r.test_count, r.leakage_fraction)
    log.info("mean leakage fraction %.4f", report.leakage_fraction)
    _announce(report.provenance)
    return 0


def cmd_experiment(args, config: PipelineConfig) -> int:
    interfaces = _load_interfaces(args.interfaces, config)
    store = _load_store(args.descriptors, config)
    corpus = Corpus.from_interfaces(interfaces, store)
    result = run_experiment(corpus, config.experiment, config.similarity, _workers(args, config),
                            min_seq_id=config.clustering.min_seq_id)
    result.provenance = _prov(config, ["descriptor", "similarity", "clustering", "experiment"], {
        Path(args.interfaces).name: file_fingerprint(args.interfaces),
        Path(args.descriptors).name: file_fingerprint(args.descriptors),
    })
    emit_report(result, args.format, _out(args, config.io.experiment))
    for s in result.strategies:
        if s.mean is None:
            log.info("%s: every sample failed", s.label)
        else:
            log.info("%s: mean %.4f, stddev %.4f", s.label, s.mean, s.stddev)
    _announce(result.provenance)
    return 0


def _read_pairs(path) -> list:
    """``ppi_id_1<TAB>ppi_id_2<TAB>label`` lines, label 1 for near duplicates."""
    pairs = []
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3 or parts[2] not in ("0", "1"):
            raise ParseError("expected '<ppi_id> <ppi_id> <0|1>'", n, line)
        pairs.append((PpiId.parse(parts[0]), PpiId.parse(parts[1]), parts[2] == "1"))
    return pairs


def cmd_calibrate(args, config: PipelineConfig) -> int:
    store = _load_store(args.descriptors, config)
    pairs = _read_pairs(args.pairs)
    missing = sorted({str(p) for a, b, _ in pairs for p in (a, b) if p not in store})
    if missing:
        raise MissingDescriptor(missing)
    distances = [idist_distance(store[a], store[b]) for a, b, _ in pairs]
    cal = calibrate_from_distances(distances, [flag for _, _, flag in pairs])
    block = _prov(config, ["descriptor"], {
        Path(args.pairs).name: file_fingerprint(args.pairs),
        Path(args.descriptors).name: file_fingerprint(args.descriptors),
    })
    out = _out(args, "calibration.json")
    Path(out).write_text(dumps_json({**asdict(cal), "provenance": block}))
    log.info("threshold %.6g (F1 %.4f, precision %.4f, recall %.4f)",
             cal.threshold, cal.f1, cal.precision, cal.recall)
    _announce(block)
    return 0


def cmd_init_config(args, config: PipelineConfig) -> int:
    text = config.to_json()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="pipeline config (JSON); defaults apply otherwise")
    common.add_argument("--workers", type=int, metavar="N", help="worker processes (default: CPU count)")
    common.add_argument("--seed", type=int, metavar="U64", help="override split and experiment seeds")
    common.add_argument("--out", metavar="PATH", help="output file")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="ppileak", description="Leakage audits for protein-protein interaction dataset splits.")
    parser.add_argument("--version", action="version", version=f"ppileak {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[common], help="structure files -> interfaces file")
    p.add_argument("input", help="directory of PDB/mmCIF files (optionally gzipped)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("embed", parents=[common], help="interfaces file -> descriptor store")
    p.add_argument("interfaces")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("cluster-seq", parents=[common], help="interfaces file -> sequence clusters")
    p.add_argument("interfaces")
    p.add_argument("--tool", help='"builtin" or path to an MMseqs2 executable')
    p.set_defaults(func=cmd_cluster_seq)

    p = sub.add_parser("split", parents=[common], help="build a split file")
    p.add_argument("--strategy", choices=["ppi_code", "pdb_code", "deposition_time",
                                          "sequence_component", "interface_component"])
    p.add_argument("--interfaces")
    p.add_argument("--descriptors")
    p.add_argument("--clusters")
    p.set_defaults(func=cmd_split)

    for name, func, helptext in (("audit", cmd_audit, "leakage report of a split"),
                                 ("experiment", cmd_experiment, "repeated-subsample leakage experiment")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name == "audit":
            p.add_argument("split", help="split file (ours or externally authored)")
            p.add_argument("--descriptors", required=True)
        else:
            p.add_argument("--interfaces", required=True)
            p.add_argument("--descriptors", required=True)
        p.add_argument("--format", choices=["json", "csv"], default="json")
        p.set_defaults(func=func)

    p = sub.add_parser("calibrate", parents=[common], help="choose the near-duplicate threshold")
    p.add_argument("pairs", help="labeled pairs: <ppi_id> <ppi_id> <0|1> per line")
    p.add_argument("--descriptors", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("init-config", parents=[common], help="print or write the default config")
    p.set_defaults(func=cmd_init_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        config = _load_config(args)
        return args.func(args, config)
    except (PpiLeakError, OSError, ValueError, KeyError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
