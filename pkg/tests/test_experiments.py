import csv
import io
import json

import numpy as np
import pytest
from scipy.stats import spearmanr

from graphprobe import serialize
from graphprobe.dynamics import EffectiveHamiltonian, Leak
from graphprobe.errors import EnsembleError, ParameterError
from graphprobe.experiments import (
    CSV_COLUMNS, STREAM_TRAIN, TABLE1, IntrusionSpec, TaskSpec, build_dataset, build_intrusion_dataset,
    check_disjoint, intrusion_base_graph, read_dataset, reproduce_table1, run_task, table1_csv, table1_json,
    table1_text, write_dataset,
)
from graphprobe.graph import Graph, observable, parse_ensemble
from graphprobe.probe import ProbeConfig, extract_features, occupations


PROBE = ProbeConfig.default()


def dump(patterns):
    return "\n".join(serialize.dumps(p.to_record()) for p in patterns)


# -- build_dataset -----------------------------------------------------------

def test_single_cell_dataset_shape():
    pats = build_dataset(parse_ensemble("150xG(50,0.6)"), "trA2", PROBE, master_seed=3)
    assert len(pats) == 150
    assert all(p.features.shape == (50,) for p in pats)


def test_mixed_cells_round_robin():
    pats = build_dataset(parse_ensemble("90xG(50,p=0.2|0.4|0.6|0.8)"), "trA2", PROBE, master_seed=3)
    assert len(pats) == 360
    ps = [p.cell["p"] for p in pats]
    assert ps[:8] == [0.2, 0.4, 0.6, 0.8] * 2
    assert {q: ps.count(q) for q in set(ps)} == {0.2: 90, 0.4: 90, 0.6: 90, 0.8: 90}


def test_targets_belong_to_their_graph():
    pats = build_dataset(parse_ensemble("5xG(30,0.4)"), "trA3", PROBE, master_seed=1)
    for p in pats:
        assert p.target == observable(p.graph, "trA3")
        assert np.array_equal(p.features, extract_features(EffectiveHamiltonian(p.graph), PROBE))
        assert p.graph_ref == p.graph.canonical_hash()


def test_dataset_deterministic_and_worker_independent():
    ens = parse_ensemble("6xG(20,p=0.3|0.7)")
    a = dump(build_dataset(ens, "hub", PROBE, master_seed=11))
    b = dump(build_dataset(ens, "hub", PROBE, master_seed=11, workers=3))
    c = dump(build_dataset(ens, "hub", PROBE, master_seed=12))
    assert a == b
    assert a != c


def test_shot_noise_dataset_reproducible():
    probe = ProbeConfig.default(shots=500)
    ens = parse_ensemble("4xG(20,0.5)")
    a = build_dataset(ens, "trA2", probe, master_seed=2)
    b = build_dataset(ens, "trA2", probe, master_seed=2, workers=2)
    assert dump(a) == dump(b)
    assert all(np.all(p.features * 500 == np.round(p.features * 500)) for p in a)


def test_dataset_error_carries_provenance():
    with pytest.raises(EnsembleError, match=r"G\(60,0.005\) graph #0"):
        build_dataset(parse_ensemble("1xG(60,0.005)"), "trA2", PROBE, master_seed=0)


def test_gamma_needs_intrusion_path():
    with pytest.raises(ParameterError):
        build_dataset(parse_ensemble("1xG(20,0.5)"), "gamma", PROBE, master_seed=0)


def test_other_ensembles_supported():
    pats = build_dataset(parse_ensemble("3xBA(30,2)+3xWS(30,4,0.2)"), "ratio", PROBE, master_seed=0)
    assert len(pats) == 6 and pats[0].cell["kind"] == "ba"


# -- dataset file format -----------------------------------------------------

def test_dataset_file_roundtrip(tmp_path):
    pats = build_dataset(parse_ensemble("4xG(12,0.5)"), "trA4", PROBE, master_seed=5)
    path = tmp_path / "d.jsonl"
    write_dataset(path, pats, {"seed": 5})
    lines = path.read_text().splitlines()
    assert len(lines) == 4
    rec = json.loads(lines[0])
    assert set(rec) == {"graph", "gamma_leak", "features", "target", "task", "cell", "index", "config"}
    assert rec["gamma_leak"] is None and rec["cell"] == {"n": 12, "p": 0.5} and rec["config"] == {"seed": 5}
    assert rec["graph"]["edges"] == sorted(rec["graph"]["edges"])
    assert all(i < j for i, j in rec["graph"]["edges"])
    x, y, recs = read_dataset(path)
    assert np.array_equal(x, np.vstack([p.features for p in pats]))
    assert np.array_equal(y, [p.target for p in pats])
    assert Graph.from_dict(recs[2]["graph"]) == pats[2].graph


def test_dataset_file_names_bad_line(tmp_path):
    pats = build_dataset(parse_ensemble("3xG(12,0.5)"), "trA2", PROBE, master_seed=5)
    path = tmp_path / "d.jsonl"
    write_dataset(path, pats, {})
    lines = path.read_text().splitlines()
    lines[1] = lines[1][:40]
    path.write_text("\n".join(lines))
    with pytest.raises(Exception, match=r"d.jsonl:2"):
        read_dataset(path)


# -- intrusion ---------------------------------------------------------------

def small_intrusion(**kw):
    base = dict(n=30, p=0.5, alpha=29, n_train=40, n_test=10, master_seed=4)
    base.update(kw)
    return IntrusionSpec(**base)


def test_intrusion_sizes_default():
    spec = IntrusionSpec()
    assert (spec.n, spec.p, spec.n_train, spec.n_test, spec.alpha) == (100, 0.5, 360, 40, 99)


def test_intrusion_dataset_shares_base_graph():
    spec = small_intrusion()
    train, test = build_intrusion_dataset(spec)
    assert len(train) == 40 and len(test) == 10
    base = intrusion_base_graph(spec)
    assert all(p.graph == base for p in train + test)
    gammas = np.array([p.target for p in train + test])
    assert np.all((gammas >= 0) & (gammas <= 2))
    assert len(set(gammas)) == 50


def test_intrusion_rejects_monitored_alpha():
    with pytest.raises(ParameterError, match="monitored"):
        IntrusionSpec(alpha=2)


def test_zero_and_full_leak_features():
    spec = small_intrusion()
    base = intrusion_base_graph(spec)
    herm = extract_features(EffectiveHamiltonian(base), PROBE)
    zero = extract_features(EffectiveHamiltonian(base, leak=Leak(spec.alpha, 0.0)), PROBE)
    assert np.max(np.abs(zero - herm)) <= 1e-12


@pytest.mark.parametrize("seed", range(4))
def test_full_leak_lowers_total_occupation(seed):
    spec = small_intrusion(master_seed=seed)
    base = intrusion_base_graph(spec)
    zero = occupations(EffectiveHamiltonian(base, leak=Leak(spec.alpha, 0.0)), PROBE)[-1].sum()
    full = occupations(EffectiveHamiltonian(base, leak=Leak(spec.alpha, 2.0)), PROBE)[-1].sum()
    assert full < zero


def test_monitored_occupation_alone_need_not_drop():
    # interference can push amplitude back onto the monitored nodes even while the norm leaks
    spec = small_intrusion(master_seed=1)
    base = intrusion_base_graph(spec)
    last = slice(-PROBE.m, None)
    zero = extract_features(EffectiveHamiltonian(base, leak=Leak(spec.alpha, 0.0)), PROBE)[last].sum()
    full = extract_features(EffectiveHamiltonian(base, leak=Leak(spec.alpha, 2.0)), PROBE)[last].sum()
    assert full > zero


def test_gamma_identifiable():
    rep = run_task(small_intrusion(n_train=80, n_test=30))
    y, yhat = rep.predictions("test")
    assert spearmanr(y, yhat)[0] > 0.99
    assert rep.test.pearson_r > 0.99


# -- run_task ----------------------------------------------------------------

def test_run_task_report():
    spec = TaskSpec("trA2", "40xG(30,0.6)", "10xG(30,0.6)", PROBE, 1e-6, master_seed=1)
    rep = run_task(spec)
    assert rep.train.n_samples == 40 and rep.test.n_samples == 10
    assert rep.model.dim == 50 and rep.config["task"] == "trA2"
    assert run_task(spec).test.mape == rep.test.mape


def test_replayed_train_stream_gives_identical_metrics():
    spec = TaskSpec("trA3", "30xG(30,0.6)", "30xG(30,0.6)", PROBE, 1e-6, master_seed=2, test_stream=STREAM_TRAIN)
    rep = run_task(spec)
    assert rep.test.mape == rep.train.mape


def test_disjointness_check():
    pats = build_dataset(parse_ensemble("3xG(12,0.5)"), "trA2", PROBE, master_seed=5)
    check_disjoint(pats[:2], pats[2:])
    with pytest.raises(EnsembleError):
        check_disjoint(pats, pats[1:])


def test_cv_lambda_task():
    rep = run_task(TaskSpec("size", "10xG(n=20|40,0.5)", "5xG(n=20|40,0.5)", PROBE, "cv", master_seed=0))
    assert rep.model.lam in (1e-10, 1e-8, 1e-6, 1e-4, 1e-2)


def test_mixed_p_predictions_rank_with_p():
    rep = run_task(TaskSpec("trA2", "30xG(50,p=0.2|0.4|0.6|0.8)", "10xG(50,p=0.2|0.4|0.6|0.8)",
                            PROBE, 1e-6, master_seed=0))
    _, yhat = rep.predictions("test")
    ps = [p.cell["p"] for p in rep.test_patterns]
    assert spearmanr(ps, yhat)[0] > 0.9
    cell_means = [np.mean([v for v, q in zip(yhat, ps) if q == target]) for target in (0.2, 0.8)]
    assert cell_means[1] > cell_means[0]


# -- benchmark table plumbing --------------------------------------------------------

def test_benchmark_rows():
    assert len(TABLE1) == 14
    assert [r.task for r in TABLE1].count("trA3") == 3
    assert parse_ensemble(TABLE1[0].train).size == 150
    assert parse_ensemble(TABLE1[2].train).size == 360
    assert parse_ensemble(TABLE1[11].test).size == 40
    assert [c.n for c in parse_ensemble(TABLE1[11].train).cells] == [20, 40, 60, 80]
    assert (TABLE1[13].test_r, TABLE1[0].test_mape) == (0.99913, 1.25)


def test_table1_rendering_subset():
    rows = reproduce_table1(0, rows=[12, 14])
    text = table1_csv(rows)
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert tuple(parsed[0]) == CSV_COLUMNS
    assert [r["row_id"] for r in parsed] == ["12", "14"]
    assert float(parsed[0]["paper_test_mape"]) == 7.88
    assert "0.99913" in table1_text(rows)
    doc = json.loads(table1_json(rows, {"seed": 0}))
    assert doc["config"] == {"seed": 0} and len(doc["rows"]) == 2
