import json

import pytest

from ppileak.audit import read_report
from ppileak.cli import main
from ppileak.config import PipelineConfig
from ppileak.descriptor import DescriptorStore
from ppileak.errors import ParseError
from ppileak.interface import read_interfaces
from ppileak.splits import Split
from ppileak.structio import to_pdb_text
from ppileak.synthetic import CorpusSpec, generate_corpus, two_helix_dimer


def write_structures(directory, structures):
    directory.mkdir(exist_ok=True)
    for s in structures:
        (directory / f"{s.pdb_code}.pdb").write_text(to_pdb_text(s))


@pytest.fixture()
def workdir(tmp_path):
    corpus = generate_corpus(CorpusSpec(n_families=12, seed=4))
    write_structures(tmp_path / "pdb", corpus.structures)
    cfg = PipelineConfig.from_dict({"interface": {"bsa_threshold": None},
                                    "experiment": {"n_samples": 2, "codes_per_sample": 10}})
    (tmp_path / "config.json").write_text(cfg.to_json())
    return tmp_path


def run(workdir, *argv):
    return main([argv[0], "--config", str(workdir / "config.json"), *argv[1:]])


def test_init_config_round_trips(tmp_path, capsys):
    assert main(["init-config"]) == 0
    text = capsys.readouterr().out
    assert PipelineConfig.from_dict(json.loads(text)) == PipelineConfig()
    assert main(["init-config", "--out", str(tmp_path / "c.json")]) == 0
    assert (tmp_path / "c.json").read_text() == text


def test_unknown_keys_rejected():
    with pytest.raises(ParseError):
        PipelineConfig.from_dict({"similarity": {"tau": 0.1}})
    with pytest.raises(ParseError):
        PipelineConfig.from_dict({"plots": {}})
    with pytest.raises(ParseError):
        PipelineConfig.from_dict({"split": {"strategy": "random"}})
    cfg = PipelineConfig.from_dict({"split": {"test_fraction": 0.2}})
    assert cfg.split.strategy == "interface_component" and cfg.split.test_fraction == 0.2


def test_fingerprint_ignores_io_but_tracks_the_rest():
    base = PipelineConfig()
    assert PipelineConfig.from_dict({"io": {"report": "x.json"}}).fingerprint == base.fingerprint
    assert PipelineConfig.from_dict({"similarity": {"duplicate_threshold": 0.05}}).fingerprint != base.fingerprint
    assert base.with_seed(9).split.seed == 9 and base.with_seed(9).experiment.seed == 9


def test_extract_errors_and_skips(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["extract", str(tmp_path / "empty"), "--out", str(tmp_path / "x.jsonl")]) == 1
    assert main(["extract", str(tmp_path / "missing")]) == 2
    write_structures(tmp_path / "mixed", [two_helix_dimer()])
    (tmp_path / "mixed" / "2bad.pdb").write_text("ATOM  garbage\n")
    cfg = tmp_path / "c.json"
    cfg.write_text(PipelineConfig.from_dict({"interface": {"bsa_threshold": None}}).to_json())
    out = tmp_path / "i.jsonl"
    assert main(["extract", str(tmp_path / "mixed"), "--config", str(cfg), "--out", str(out)]) == 0
    assert [str(i.ppi_id) for i in read_interfaces(out)] == ["1abc_A_B"]


def test_pipeline_split_then_audit_reports_zero(workdir, monkeypatch):
    monkeypatch.chdir(workdir)
    assert run(workdir, "extract", "pdb", "--workers", "1") == 0
    assert run(workdir, "embed", "interfaces.jsonl", "--workers", "1") == 0
    first = (workdir / "descriptors.tsv").read_bytes()
    assert run(workdir, "embed", "interfaces.jsonl", "--workers", "2") == 0
    assert (workdir / "descriptors.tsv").read_bytes() == first
    assert run(workdir, "split", "--descriptors", "descriptors.tsv") == 0
    split = Split.read(workdir / "split.json")
    assert split.provenance["validation"] is True
    assert run(workdir, "audit", "split.json", "--descriptors", "descriptors.tsv") == 0
    report = read_report(workdir / "report.json")
    assert report.leaked_count == 0
    assert report.provenance["config_fingerprint"] == PipelineConfig.read(workdir / "config.json").fingerprint
    assert run(workdir, "cluster-seq", "interfaces.jsonl") == 0
    assert run(workdir, "split", "--strategy", "sequence_component", "--interfaces", "interfaces.jsonl",
               "--clusters", "clusters.tsv", "--out", "seq.json") == 0
    assert run(workdir, "experiment", "--interfaces", "interfaces.jsonl", "--descriptors", "descriptors.tsv",
               "--format", "csv", "--out", "exp.csv") == 0
    assert (workdir / "exp.csv").read_text().startswith("row_type,strategy,sample")


def test_external_fold_file_audit(workdir, monkeypatch):
    monkeypatch.chdir(workdir)
    assert run(workdir, "extract", "pdb", "--workers", "1") == 0
    assert run(workdir, "embed", "interfaces.jsonl") == 0
    ids = [str(p) for p in DescriptorStore.read(workdir / "descriptors.tsv").ids]
    folds = {"folds": {"a": ids[0::3], "b": ids[1::3], "c": ids[2::3]}}
    (workdir / "ext.json").write_text(json.dumps(folds))
    assert run(workdir, "audit", "ext.json", "--descriptors", "descriptors.tsv") == 0
    report = read_report(workdir / "report.json")
    assert [r.test_fold for r in report.results] == ["a", "b", "c"]
    fractions = [r.leakage_fraction for r in report.results]
    assert report.leakage_fraction == pytest.approx(sum(fractions) / 3, abs=1e-15)


def test_mismatched_config_is_refused(workdir, monkeypatch, tmp_path):
    monkeypatch.chdir(workdir)
    assert run(workdir, "extract", "pdb") == 0
    assert run(workdir, "embed", "interfaces.jsonl") == 0
    other = workdir / "other.json"
    other.write_text(PipelineConfig.from_dict({"interface": {"bsa_threshold": None},
                                               "descriptor": {"weight_scale": 2.0}}).to_json())
    assert main(["split", "--config", str(other), "--descriptors", "descriptors.tsv"]) == 1
    assert not (workdir / "split.json").exists()
    changed = workdir / "changed.json"
    changed.write_text(PipelineConfig.from_dict({"interface": {"bsa_threshold": 100.0}}).to_json())
    assert main(["embed", "--config", str(changed), "interfaces.jsonl", "--out", "d2.tsv"]) == 1


def test_calibrate_command(workdir, monkeypatch):
    monkeypatch.chdir(workdir)
    assert run(workdir, "extract", "pdb") == 0
    assert run(workdir, "embed", "interfaces.jsonl") == 0
    ids = DescriptorStore.read(workdir / "descriptors.tsv").ids
    pairs = [f"{ids[0]} {ids[0]} 1", f"{ids[0]} {ids[-1]} 0"]
    (workdir / "pairs.txt").write_text("\n".join(pairs) + "\n")
    assert run(workdir, "calibrate", "pairs.txt", "--descriptors", "descriptors.tsv") == 0
    cal = json.loads((workdir / "calibration.json").read_text())
    assert cal["f1"] == 1.0
    (workdir / "bad.txt").write_text("only two\n")
    assert run(workdir, "calibrate", "bad.txt", "--descriptors", "descriptors.tsv") == 1
