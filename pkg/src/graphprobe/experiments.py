"""
Dataset construction, task training/evaluation, the leakage-inference
experiment and the benchmark-table reproduction.

Randomness
----------
Every pattern owns an independent generator derived from
``SeedSequence(master_seed, spawn_key=(stream, cell, index))``. Streams
separate the splits (train, test) and the intrusion base graph, so results
do not depend on evaluation order or on the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import time
from pathlib import Path
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import serialize
from .dynamics import EffectiveHamiltonian, Leak
from .errors import DatasetParseError, EnsembleError, GraphProbeError, ParameterError
from .graph import EnsembleSpec, Graph, ObservableKind, observable, parse_ensemble, round_robin, sample_valid
from .probe import ProbeConfig, extract_features
from .readout import DEFAULT_LAMBDA, Metrics, ReadoutModel, evaluate, fit_ridge, select_lambda

STREAM_TRAIN = 0
STREAM_TEST = 1
STREAM_BASE = 2

# Leakage targets below this are left out of MAPE (kept for training and r).
GAMMA_MAPE_FLOOR = 1e-3


def pattern_rng(master_seed: int, stream: int, cell: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(stream, cell, index)))


@dataclass
class TrainingPattern:
    features: np.ndarray
    target: float
    task: str
    cell: dict
    cell_index: int
    index: int
    graph: Optional[Graph] = None
    graph_ref: str = ""
    gamma_leak: Optional[float] = None
    draws: int = 1

    def to_record(self, config: Optional[dict] = None, embed_graph: bool = True) -> dict:
        rec = {}
        if embed_graph and self.graph is not None:
            rec["graph"] = self.graph.to_dict()
        else:
            rec["graph_ref"] = self.graph_ref
        rec.update({
            "gamma_leak": self.gamma_leak,
            "features": self.features.tolist(),
            "target": self.target,
            "task": self.task,
            "cell": self.cell,
            "index": self.index,
        })
        if config is not None:
            rec["config"] = config
        return rec


def _pmap(fn, items, workers: int):
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# Graph-observable tasks
# --------------------------------------------------------------------------

def build_dataset(ensemble: EnsembleSpec, kind, probe: ProbeConfig, master_seed: int,
                  stream: int = STREAM_TRAIN, workers: int = 1) -> list[TrainingPattern]:
    """Patterns for every graph of ``ensemble``, cells interleaved round-robin."""
    kind = ObservableKind.parse(kind)
    if kind is ObservableKind.GAMMA:
        raise ParameterError("use build_intrusion_dataset for the leakage-strength task")
    order = list(round_robin([c.count for c in ensemble.cells]))

    def make(ci_idx):
        ci, idx = ci_idx
        cell = ensemble.cells[ci]
        try:
            rng = pattern_rng(master_seed, stream, ci, idx)
            g, draws = cell.sample_counted(rng)
            x = extract_features(EffectiveHamiltonian(g), probe, rng if probe.shots else None)
            y = observable(g, kind)
        except GraphProbeError as exc:
            raise type(exc)(f"{cell.describe()} graph #{idx} (stream {stream}): {exc}") from exc
        return TrainingPattern(x, y, kind.value, cell.to_dict(), ci, idx, g, g.canonical_hash(), draws=draws)

    return _pmap(make, order, workers)


# --------------------------------------------------------------------------
# Leakage (intrusion) task
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IntrusionSpec:
    """Fixed base graph G(n, p) with a leaky node whose strength varies.

    Leak strengths are uniform in ``[0, gamma_max * gamma]``; targets are
    reported in units of ``gamma``.
    """

    n: int = 100
    p: float = 0.5
    alpha: int = 99
    gamma: float = 1.0
    gamma_max: float = 2.0
    n_train: int = 360
    n_test: int = 40
    probe: ProbeConfig = field(default_factory=ProbeConfig.default)
    lam: Union[float, str] = DEFAULT_LAMBDA
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.alpha in self.probe.monitored:
            raise ParameterError(f"leak node {self.alpha} must differ from the monitored nodes")
        if not 0 <= self.alpha < self.n:
            raise ParameterError(f"leak node {self.alpha} out of range for n={self.n}")

    @property
    def observable(self) -> ObservableKind:
        return ObservableKind.GAMMA

    def to_dict(self) -> dict:
        return {
            "task": "gamma", "n": self.n, "p": self.p, "alpha": self.alpha, "gamma": self.gamma,
            "gamma_max": self.gamma_max, "n_train": self.n_train, "n_test": self.n_test,
            "probe": self.probe.to_dict(), "lambda": self.lam, "master_seed": self.master_seed,
        }


def intrusion_base_graph(spec: IntrusionSpec) -> Graph:
    return sample_valid(spec.n, spec.p, pattern_rng(spec.master_seed, STREAM_BASE, 0, 0))


def intrusion_split(spec: IntrusionSpec, base: Graph, stream: int, count: int) -> list[TrainingPattern]:
    """``count`` leaky copies of ``base`` with strengths drawn from ``stream``."""
    ref = base.canonical_hash()
    cell = {"n": spec.n, "p": spec.p}

    def make(idx):
        rng = pattern_rng(spec.master_seed, stream, 0, idx)
        strength = float(rng.uniform(0.0, spec.gamma_max * spec.gamma))
        h = EffectiveHamiltonian(base, spec.gamma, Leak(spec.alpha, strength))
        x = extract_features(h, spec.probe, rng if spec.probe.shots else None)
        return TrainingPattern(x, strength / spec.gamma, "gamma", cell, 0, idx, base, ref, strength)

    return _pmap(make, range(count), spec.workers)


def build_intrusion_dataset(spec: IntrusionSpec) -> tuple[list[TrainingPattern], list[TrainingPattern]]:
    """Train and test patterns sharing one base graph; only the leak strength varies."""
    base = intrusion_base_graph(spec)
    return (intrusion_split(spec, base, STREAM_TRAIN, spec.n_train),
            intrusion_split(spec, base, STREAM_TEST, spec.n_test))


# --------------------------------------------------------------------------
# Dataset files (JSON lines, one pattern per line)
# --------------------------------------------------------------------------

def write_dataset(path: Path, patterns, config: dict) -> None:
    lines = []
    for p in patterns:
        rec = p.to_record(config, embed_graph=p.gamma_leak is None)
        lines.append(serialize.dumps(rec))
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_dataset(path: Path) -> tuple[np.ndarray, np.ndarray, list[dict]]:
    """Features, targets and raw records of a JSON-lines dataset.

    Raises
    ------
    DatasetParseError
        Naming the first offending line.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DatasetParseError(path, None, str(exc)) from exc
    xs, ys, recs = [], [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            x = np.asarray(rec["features"], dtype=float)
            y = float(rec["target"])
            rec["task"], rec["cell"], rec["index"]
            if not ("graph" in rec or "graph_ref" in rec):
                raise KeyError("graph")
        except (ValueError, KeyError, TypeError) as exc:
            raise DatasetParseError(path, lineno, f"malformed pattern record ({type(exc).__name__}: {exc})") from exc
        if x.ndim != 1 or (xs and x.size != xs[0].size):
            raise DatasetParseError(path, lineno, "feature length differs from previous lines")
        xs.append(x)
        ys.append(y)
        recs.append(rec)
    if not recs:
        raise DatasetParseError(path, None, "dataset is empty")
    return np.vstack(xs), np.array(ys), recs


# --------------------------------------------------------------------------
# Training and evaluation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TaskSpec:
    observable: ObservableKind
    train: EnsembleSpec
    test: EnsembleSpec
    probe: ProbeConfig = field(default_factory=ProbeConfig.default)
    lam: Union[float, str] = DEFAULT_LAMBDA
    master_seed: int = 0
    # Setting this to STREAM_TRAIN replays the training graphs as the test set.
    test_stream: int = STREAM_TEST
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "observable", ObservableKind.parse(self.observable))
        if self.observable is ObservableKind.GAMMA:
            raise ParameterError("the leakage task is described by IntrusionSpec")
        for attr in ("train", "test"):
            v = getattr(self, attr)
            if isinstance(v, str):
                object.__setattr__(self, attr, parse_ensemble(v))

    def to_dict(self) -> dict:
        return {
            "task": self.observable.value, "train": self.train.describe(), "test": self.test.describe(),
            "probe": self.probe.to_dict(), "lambda": self.lam, "master_seed": self.master_seed,
            "test_stream": self.test_stream,
        }


@dataclass
class TaskReport:
    train: Metrics
    test: Metrics
    model: ReadoutModel
    train_patterns: list = field(repr=False)
    test_patterns: list = field(repr=False)
    config: dict = field(default_factory=dict)
    seconds: float = 0.0

    def predictions(self, split: str = "test") -> tuple[np.ndarray, np.ndarray]:
        pats = self.test_patterns if split == "test" else self.train_patterns
        y = np.array([p.target for p in pats])
        return y, self.model.predict(stack_features(pats))

    def to_dict(self) -> dict:
        return {"config": self.config, "train": self.train.to_dict(), "test": self.test.to_dict(),
                "lambda": self.model.lam, "seconds": self.seconds}


def stack_features(patterns: Sequence[TrainingPattern]) -> np.ndarray:
    return np.vstack([p.features for p in patterns])


def check_disjoint(train: Sequence[TrainingPattern], test: Sequence[TrainingPattern]) -> None:
    """Raise if a (graph, leak) pair occurs in both splits."""
    key = lambda p: (p.graph_ref, p.gamma_leak)
    shared = {key(p) for p in train} & {key(p) for p in test}
    if shared:
        raise EnsembleError(f"{len(shared)} graph(s) appear in both the train and test split")


def fit_and_score(train: Sequence[TrainingPattern], test: Sequence[TrainingPattern], lam, task: str,
                  probe: Optional[dict] = None, mape_floor: Optional[float] = None):
    x_tr = stack_features(train)
    y_tr = np.array([p.target for p in train])
    if isinstance(lam, str):
        if lam != "cv":
            raise ParameterError(f"lambda must be a number or 'cv', got {lam!r}")
        lam = select_lambda(x_tr, y_tr)
    model = fit_ridge(x_tr, y_tr, lam, task=task, probe=probe)
    m_tr = evaluate(y_tr, model.predict(x_tr), mape_floor)
    y_te = np.array([p.target for p in test])
    m_te = evaluate(y_te, model.predict(stack_features(test)), mape_floor)
    return model, m_tr, m_te


def run_task(spec: Union[TaskSpec, IntrusionSpec]) -> TaskReport:
    """Build both splits, fit on train only, score both splits."""
    t0 = time.perf_counter()
    if isinstance(spec, IntrusionSpec):
        train, test = build_intrusion_dataset(spec)
        floor = GAMMA_MAPE_FLOOR
    else:
        train = build_dataset(spec.train, spec.observable, spec.probe, spec.master_seed, STREAM_TRAIN, spec.workers)
        test = build_dataset(spec.test, spec.observable, spec.probe, spec.master_seed, spec.test_stream, spec.workers)
        floor = None
    if not (isinstance(spec, TaskSpec) and spec.test_stream == STREAM_TRAIN):
        check_disjoint(train, test)
    model, m_tr, m_te = fit_and_score(train, test, spec.lam, spec.observable.value, spec.probe.to_dict(), floor)
    return TaskReport(m_tr, m_te, model, train, test, spec.to_dict(), time.perf_counter() - t0)


# --------------------------------------------------------------------------
# Benchmark table
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceRow:
    row_id: int
    task: str
    train: str
    test: str
    train_mape: float
    test_mape: float
    train_r: Optional[float] = None
    test_r: Optional[float] = None


_MIX50 = "G(50,p=0.2|0.4|0.6|0.8)"
_MIX100 = "G(100,p=0.2|0.4|0.6|0.8)"

TABLE1 = (
    ReferenceRow(1, "trA2", "150xG(50,0.6)", "50xG(50,0.6)", 0.88, 1.25),
    ReferenceRow(2, "trA2", "350xG(50,0.6)", "50xG(50,0.6)", 1.05, 1.16),
    ReferenceRow(3, "trA2", "90x" + _MIX50, "10x" + _MIX50, 5.63, 6.04),
    ReferenceRow(4, "trA3", "150xG(50,0.6)", "50xG(50,0.6)", 2.83, 3.75),
    ReferenceRow(5, "trA3", "350xG(50,0.6)", "50xG(50,0.6)", 3.19, 3.86),
    ReferenceRow(6, "trA3", "90x" + _MIX50, "10x" + _MIX50, 33.53, 34.97, 0.99484, 0.99485),
    ReferenceRow(7, "trA4", "150xG(50,0.6)", "50xG(50,0.6)", 3.46, 4.79),
    ReferenceRow(8, "trA4", "350xG(50,0.6)", "50xG(50,0.6)", 3.98, 4.66),
    ReferenceRow(9, "trA4", "90x" + _MIX50, "10x" + _MIX50, 54.44, 59.19, 0.99535, 0.99569),
    ReferenceRow(10, "hub", "360xG(100,0.5)", "40xG(100,0.5)", 9.55, 8.88),
    ReferenceRow(11, "hub", "90x" + _MIX100, "10x" + _MIX100, 12.01, 10.34),
    ReferenceRow(12, "size", "90xG(n=20|40|60|80,0.5)", "10xG(n=20|40|60|80,0.5)", 7.05, 7.88),
    ReferenceRow(13, "ratio", "90x" + _MIX50, "10x" + _MIX50, 7.9, 8.22),
    ReferenceRow(14, "gamma", "360xG_leak(100,0.5)", "40xG_leak(100,0.5)", 13.53, 2.14, 0.99867, 0.99913),
)


@dataclass
class Table1Row:
    reference: ReferenceRow
    report: TaskReport


def table1_spec(row: ReferenceRow, master_seed: int, probe: Optional[ProbeConfig] = None,
                lam: Union[float, str] = DEFAULT_LAMBDA, workers: int = 1):
    probe = probe or ProbeConfig.default()
    if row.task == "gamma":
        return IntrusionSpec(probe=probe, lam=lam, master_seed=master_seed, workers=workers)
    return TaskSpec(row.task, row.train, row.test, probe, lam, master_seed, workers=workers)


def reproduce_table1(master_seed: int = 0, probe: Optional[ProbeConfig] = None,
                     lam: Union[float, str] = DEFAULT_LAMBDA, workers: int = 1,
                     rows: Optional[Sequence[int]] = None) -> list[Table1Row]:
    """Run every benchmark-table task (or the selected ``rows``) under one master seed."""
    out = []
    for row in TABLE1:
        if rows is not None and row.row_id not in rows:
            continue
        try:
            report = run_task(table1_spec(row, master_seed, probe, lam, workers))
        except GraphProbeError as exc:
            raise type(exc)(f"benchmark row {row.row_id} ({row.task}): {exc}") from exc
        out.append(Table1Row(row, report))
    return out


CSV_COLUMNS = ("task", "row_id", "train_mape", "test_mape", "train_r", "test_r",
               "paper_train_mape", "paper_test_mape")


def _num(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    return format(float(x), ".17g")


def table1_csv(rows: Sequence[Table1Row]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        rep = r.report
        w.writerow([r.reference.task, r.reference.row_id, _num(rep.train.mape), _num(rep.test.mape),
                    _num(rep.train.pearson_r), _num(rep.test.pearson_r),
                    _num(r.reference.train_mape), _num(r.reference.test_mape)])
    return buf.getvalue()


def table1_text(rows: Sequence[Table1Row]) -> str:
    head = (f"{'#':>2}  {'task':<6} {'train set':<28} {'MAPE TrS':>9} {'MAPE TS':>8} "
            f"{'ref TrS':>9} {'ref TS':>8}  {'r TrS | r TS':<17} {'ref r':<17}")
    lines = [head, "-" * len(head)]
    for r in rows:
        p, rep = r.reference, r.report
        ours_r = f"{rep.train.pearson_r:.5f} | {rep.test.pearson_r:.5f}"
        ref_r = f"{p.train_r:.5f} | {p.test_r:.5f}" if p.train_r is not None else "*"
        lines.append(
            f"{p.row_id:>2}  {p.task:<6} {p.train:<28} {rep.train.mape:>8.2f}% {rep.test.mape:>7.2f}% "
            f"{p.train_mape:>8.2f}% {p.test_mape:>7.2f}%  {ours_r:<17} {ref_r:<17}"
        )
    return "\n".join(lines) + "\n"


def table1_json(rows: Sequence[Table1Row], config: dict) -> str:
    return serialize.dumps({
        "config": config,
        "rows": [{"row_id": r.reference.row_id, "reference": asdict(r.reference), **r.report.to_dict()} for r in rows],
    })
