import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import build_corpus, make_store
from ppileak.audit import (
    CSV_EXPERIMENT_HEADER,
    Corpus,
    ExperimentConfig,
    ExperimentResult,
    LeakageReport,
    StrategyResult,
    audit_split,
    emit_report,
    leakage_ratio,
    read_report,
    run_experiment,
)
from ppileak.clustering import cluster_sequences
from ppileak.descriptor import DescriptorStore
from ppileak.errors import MissingDescriptor, UnknownFold
from ppileak.similarity import SimilarityConfig, build_duplicate_graph
from ppileak.splits import Split, SplitSpec, derive_seed, make_split, validate_split
from ppileak.synthetic import CorpusSpec


def brute_leaked(store, train, test, tau):
    vec = {p: store[p].vector for p in store.ids}
    return {p for p in test if any(np.linalg.norm(vec[p] - vec[t]) < tau for t in train)}


@pytest.fixture(scope="module")
def small():
    return build_corpus(CorpusSpec(n_families=25, seed=3))


def test_empty_test_fold_is_flagged():
    store = make_store(np.eye(21)[:3])
    split = Split({"train": frozenset(store.ids), "test": frozenset()})
    report = leakage_ratio(split, store)
    r = report.results[0]
    assert (r.test_count, r.leaked_count, r.leakage_fraction, r.empty_test) == (0, 0, 0.0, True)


def test_exact_copies_leak_completely():
    rng = np.random.default_rng(0)
    v = rng.dirichlet(np.ones(21), size=12)
    train = make_store(v, prefix=1)
    both = DescriptorStore(train.ids + make_store(v, prefix=2).ids, np.vstack([v, v]), [10] * 24, "fp")
    split = Split({"train": frozenset(train.ids), "test": frozenset(both.ids[12:])})
    report = leakage_ratio(split, both)
    assert report.leakage_fraction == 1.0
    assert all(hits[0][1] == 0.0 for hits in report.results[0].hits.values())


def test_errors():
    store = make_store(np.eye(21)[:2])
    split = Split({"train": frozenset(store.ids[:1]), "test": frozenset(store.ids[1:])})
    with pytest.raises(UnknownFold):
        leakage_ratio(split, store, test_fold="valid")
    with pytest.raises(MissingDescriptor):
        leakage_ratio(split, store.subset(store.ids[:1]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0.01, 0.04, 0.2]))
def test_matches_brute_force_and_is_monotone(seed, tau):
    rng = np.random.default_rng(seed)
    centers = rng.dirichlet(np.ones(21), size=8)
    v = centers[rng.integers(8, size=60)] + rng.normal(scale=0.01, size=(60, 21))
    store = make_store(v)
    split = make_split(store.ids, SplitSpec("ppi_code", 0.3, seed=seed))
    cfg = SimilarityConfig(duplicate_threshold=tau)
    report = leakage_ratio(split, store, cfg)
    r = report.results[0]
    want = brute_leaked(store, split.fold("train"), split.fold("test"), tau)
    assert {p for p, h in r.hits.items() if h} == want
    assert r.leaked_count == len(want)
    assert r.leakage_fraction == len(want) / r.test_count
    # shrinking the training fold can only unleak
    fewer = Split({"train": frozenset(sorted(split.fold("train"), key=str)[::2]), "test": split.fold("test")})
    leaked_fewer = {p for p, h in leakage_ratio(fewer, store, cfg).results[0].hits.items() if h}
    assert leaked_fewer <= want


def test_kfold_audit_averages_pairs():
    rng = np.random.default_rng(5)
    store = make_store(rng.dirichlet(np.ones(21), size=30)[rng.integers(30, size=45)])
    split = make_split(store.ids, SplitSpec("ppi_code", n_folds=3, seed=1))
    report = audit_split(split, store)
    assert [r.test_fold for r in report.results] == ["fold0", "fold1", "fold2"]
    for r in report.results:
        train = set().union(*(split.folds[n] for n in r.train_folds))
        assert r.leaked_count == len(brute_leaked(store, train, split.folds[r.test_fold], 0.04))
    assert report.leakage_fraction == pytest.approx(np.mean([r.leakage_fraction for r in report.results]), abs=1e-15)


def test_interface_component_split_has_no_leakage(small):
    _, _, corpus = small
    graph = build_duplicate_graph(corpus.store)
    for seed in range(5):
        split = make_split(corpus.store.ids, SplitSpec("interface_component", 0.1, seed=seed), graph=graph)
        assert validate_split(split, corpus.store.ids)["passed"]
        assert audit_split(split, corpus.store).leakage_fraction == 0.0


def test_report_json_round_trip(tmp_path, small):
    _, _, corpus = small
    split = make_split(corpus.store.ids, SplitSpec("pdb_code", 0.2, seed=2))
    report = audit_split(split, corpus.store)
    path = tmp_path / "r.json"
    text = emit_report(report, "json", path)
    back = read_report(path)
    assert isinstance(back, LeakageReport)
    assert emit_report(back, "json") == text


def test_csv_summary_values():
    spec = SplitSpec("ppi_code")
    result = ExperimentResult([StrategyResult("ppi_code", spec, [0.5, 0.7], [None, None])], [], 0.04)
    rows = [line.split(",") for line in emit_report(result, "csv").splitlines()]
    assert rows[0] == CSV_EXPERIMENT_HEADER
    summary = [r for r in rows if r[0] == "summary"][0]
    assert float(summary[4]) == pytest.approx(0.6, abs=1e-12)
    assert float(summary[5]) == pytest.approx(0.1, abs=1e-12)
    assert [r[3] for r in rows if r[0] == "sample"] == ["0.5", "0.69999999999999996"]
    empty = ExperimentResult([], [], 0.04)
    assert emit_report(empty, "csv") == ",".join(CSV_EXPERIMENT_HEADER) + "\n"
    with pytest.raises(ValueError):
        emit_report(empty, "xml")


def test_experiment_one_sample_equals_manual_run(small):
    _, _, corpus = small
    spec = SplitSpec("sequence_component", 0.1)
    config = ExperimentConfig(n_samples=1, codes_per_sample=10 ** 6, strategies=(spec,), seed=11)
    result = run_experiment(corpus, config)
    assert result.samples[0]["sampled_all"] is True
    proteins = {k: corpus.sequences[k] for p in corpus.store.ids for k in p.proteins}
    split = make_split(corpus.store.ids, derive_seed(spec, 11, 0), clusters=cluster_sequences(proteins, 0.3))
    assert result["sequence_component"].fractions == [audit_split(split, corpus.store).leakage_fraction]


def test_experiment_statistics_and_determinism(tmp_path, small):
    _, _, corpus = small
    config = ExperimentConfig(n_samples=4, codes_per_sample=len(corpus.codes) * 3 // 4, seed=2)
    a = run_experiment(corpus, config)
    b = run_experiment(corpus, config, workers=3)
    assert emit_report(a) == emit_report(b)
    for s in a.strategies:
        vals = np.array(s.fractions)
        assert len(vals) == 4
        assert s.mean == pytest.approx(vals.mean(), abs=1e-12)
        assert s.stddev == pytest.approx(np.sqrt(((vals - vals.mean()) ** 2).mean()), abs=1e-12)
    assert a["interface_component"].mean == 0.0
    assert len({s["n_codes"] for s in a.samples}) == 1
    path = tmp_path / "e.json"
    text = emit_report(a, "json", path)
    assert emit_report(read_report(path)) == text


def test_failed_cells_are_isolated(small):
    _, _, corpus = small
    no_dates = Corpus(corpus.store, {}, corpus.sequences)
    config = ExperimentConfig(n_samples=2, codes_per_sample=10 ** 6,
                              strategies=(SplitSpec("deposition_time"), SplitSpec("pdb_code")))
    result = run_experiment(no_dates, config)
    assert result["deposition_time"].fractions == [None, None]
    assert all(e.startswith("MissingDate") for e in result["deposition_time"].errors)
    assert result["deposition_time"].mean is None
    assert result["pdb_code"].errors == [None, None]
    assert all(f is not None for f in result["pdb_code"].fractions)
    assert "summary,deposition_time,,,," in emit_report(result, "csv")


def test_experiment_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(n_samples=0)
    with pytest.raises(ValueError):
        ExperimentConfig(codes_per_sample=0)
    cfg = ExperimentConfig(strategies=[{"strategy": "ppi_code"}, {"strategy": "ppi_code", "seed": 4}])
    assert cfg.labels() == ["ppi_code", "ppi_code#1"]
