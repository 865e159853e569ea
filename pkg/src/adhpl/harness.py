"""Experiment configuration, orchestration, ranking and reports."""
from __future__ import annotations

import csv
import io
import json
import re
import time
import typing
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import yaml
from scipy.stats import rankdata

from . import _accel, seeding
from .adam_swarm import AdamPsoConfig, adhpl_refine
from .convergence import convergence_check  # noqa: F401  re-exported
from .data import load_ratings, split, synth_lowrank
from .errors import AdhplError, ConfigError
from .gradient import AdamConfig, pretrain
from .model import Hyper, init_state, rmse, save_state
from .swarm import PsoConfig, hpl_refine

SCHEMA_VERSION = 1

MODELS = ("SGD-LFA", "Adam-LFA", "SGD+MPSO", "SGD+ADHPL", "Adam+MPSO", "Adam+ADHPL")


@dataclass
class SynthConfig:
    n_rows: int = 200
    n_cols: int = 300
    true_rank: int = 5
    density: float = 0.08
    noise_sigma: float = 0.1
    rating_clip: Optional[list] = None


@dataclass
class DataConfig:
    """Rating file to load, or ``path: null`` for a synthetic matrix."""

    path: Optional[str] = None
    delimiter: Optional[str] = None
    has_header: bool = False
    name: Optional[str] = None
    synth: SynthConfig = field(default_factory=SynthConfig)


@dataclass
class StopConfig:
    max_steps: int = 100
    patience: int = 3
    min_delta: float = 1e-4


@dataclass
class ExperimentConfig:
    model: str = "SGD+ADHPL"
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    fractions: list = field(default_factory=lambda: [0.7, 0.1, 0.2])
    hyper: Hyper = field(default_factory=Hyper)
    adam: AdamConfig = field(default_factory=AdamConfig)
    pso: PsoConfig = field(default_factory=PsoConfig)
    adam_pso: AdamPsoConfig = field(default_factory=AdamPsoConfig)
    pretrain: StopConfig = field(default_factory=StopConfig)
    refine: StopConfig = field(default_factory=lambda: StopConfig(max_steps=5, patience=1))
    weighted_fitness: bool = False
    threads: int = 1
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {MODELS}")
        self.fractions = [float(f) for f in self.fractions]

    @property
    def pretrain_method(self):
        return "adam" if self.model.startswith("Adam") else "sgd"

    @property
    def refiner(self):
        if self.model.endswith("MPSO"):
            return "mpso"
        if self.model.endswith("ADHPL"):
            return "adhpl"
        return None

    @property
    def dataset_name(self):
        d = self.data
        if d.name:
            return d.name
        if d.path:
            return Path(d.path).stem
        s = d.synth
        return f"synth-{s.n_rows}x{s.n_cols}-r{s.true_rank}-seed{self.seed}"

    def to_dict(self):
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, data):
        return _build(cls, data or {})

    def with_overrides(self, assignments):
        """Apply ``"a.b.c=value"`` strings; values are parsed as YAML scalars."""
        d = self.to_dict()
        for item in assignments:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            key, raw = item.split("=", 1)
            parts = key.strip().split(".")
            node = d
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigError(f"unknown config section {key!r}")
                node = node[p]
            if parts[-1] not in node:
                raise ConfigError(f"unknown config field {key!r}")
            node[parts[-1]] = yaml.safe_load(raw)
        return ExperimentConfig.from_dict(d)


def _build(cls, data):
    if not isinstance(data, dict):
        raise ConfigError(f"{cls.__name__} section must be a mapping")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown field {cls.__name__}.{key}")
        hint = hints[key]
        if is_dataclass(hint) and value is not None:
            value = _build(hint, value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path):
    with open(path, encoding="utf-8") as f:
        return ExperimentConfig.from_dict(yaml.safe_load(f))


def dump_config(cfg, path):
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(cfg.to_dict(), f, sort_keys=False)


@dataclass
class EvalReport:
    model: str
    dataset: str
    seed: int
    config: dict
    history: list
    pretrain_valid_rmse: float
    best_valid_rmse: float
    test_rmse: float
    timings: dict
    refine_summary: list = field(default_factory=list)
    backend: str = "numpy"
    state_file: Optional[str] = None
    schema_version: int = SCHEMA_VERSION

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported report schema {d.get('schema_version')!r}")
        return cls(**d)


class PhaseError(AdhplError):
    """Wraps a failure with the experiment phase it happened in."""

    def __init__(self, phase, exc):
        super().__init__(f"{phase}: {exc}")
        self.phase = phase
        self.__cause__ = exc


def _history_row(rec):
    return {"phase": rec.phase, "index": rec.index, "train_rmse": rec.train_rmse,
            "valid_rmse": rec.valid_rmse, "seconds": rec.seconds}


def load_dataset(cfg):
    d = cfg.data
    if d.path:
        with open(d.path, encoding="utf-8") as f:
            matrix, _ = load_ratings(f, d.delimiter, d.has_header)
        return matrix
    s = d.synth
    matrix, _ = synth_lowrank(s.n_rows, s.n_cols, s.true_rank, s.density, s.noise_sigma,
                              s.rating_clip, seeding.derive_seed(cfg.seed, seeding.SYNTH))
    return matrix


def run_experiment(cfg: ExperimentConfig) -> EvalReport:
    """Load, split, initialize, pre-train, optionally refine, then test once.

    Writes report files when ``cfg.out_dir`` is set.
    """
    timings = {}
    phase = "load"
    t_start = time.perf_counter()
    try:
        t0 = time.perf_counter()
        matrix = load_dataset(cfg)
        phase = "split"
        data = split(matrix, tuple(cfg.fractions), seeding.derive_seed(cfg.seed, seeding.SPLIT))
        timings["load"] = time.perf_counter() - t0

        phase = "pretrain"
        t0 = time.perf_counter()
        state = init_state(matrix.n_rows, matrix.n_cols, cfg.hyper.F, cfg.hyper.init_range,
                           seeding.derive_seed(cfg.seed, seeding.INIT))
        pre = pretrain(state, data, cfg.pretrain_method, cfg.hyper, cfg.adam,
                       cfg.pretrain.max_steps, cfg.pretrain.patience, cfg.pretrain.min_delta,
                       cfg.seed)
        timings["pretrain"] = time.perf_counter() - t0
        state = pre.state
        history = [_history_row(r) for r in pre.history]
        best_valid = pre.best_valid_rmse

        summary = []
        if cfg.refiner is not None:
            phase = "refine"
            t0 = time.perf_counter()
            telemetry = []
            r = cfg.refine
            common = dict(seed=cfg.seed, max_passes=r.max_steps, patience=r.patience,
                          min_delta=r.min_delta, threads=cfg.threads,
                          weighted=cfg.weighted_fitness, telemetry=telemetry.append)
            if cfg.refiner == "mpso":
                ref = hpl_refine(state, data, cfg.pso, cfg.hyper.lam, **common)
            else:
                ref = adhpl_refine(state, data, cfg.adam_pso, cfg.hyper.lam, **common)
            timings["refine"] = time.perf_counter() - t0
            state = ref.state
            best_valid = ref.best_valid_rmse
            history.extend(_history_row(rec) for rec in ref.history)
            summary = _summarize_telemetry(telemetry)

        phase = "evaluate"
        test = rmse(state, data.test)
    except AdhplError as exc:
        raise PhaseError(phase, exc) from exc
    except OSError as exc:
        raise PhaseError(phase, exc) from exc
    timings["total"] = time.perf_counter() - t_start

    report = EvalReport(model=cfg.model, dataset=cfg.dataset_name, seed=cfg.seed,
                        config=cfg.to_dict(), history=history,
                        pretrain_valid_rmse=pre.best_valid_rmse, best_valid_rmse=best_valid,
                        test_rmse=test, timings=timings, refine_summary=summary,
                        backend=_accel.backend_name())
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        state_path = out / f"state_{_stem(report)}.npz"
        save_state(state, state_path)
        report.state_file = state_path.name
        emit_report(report, out)
    return report


def _summarize_telemetry(records):
    """Collapse per-group records into one line per pass.

    Groups arrive rows first then columns, so a row record following a
    column record starts a new pass.
    """
    out = []
    last_kind = None
    for rec in records:
        if not out or (last_kind == "col" and rec.kind == "row"):
            out.append({"pass": len(out) + 1, "groups": 0, "fitness_gain": 0.0})
        out[-1]["groups"] += 1
        out[-1]["fitness_gain"] += rec.pre_fitness - rec.post_fitness
        last_kind = rec.kind
    return out


def _slug(model):
    return re.sub(r"[^A-Za-z0-9-]+", "_", model)


def _stem(report):
    return f"{_slug(report.model)}_{report.dataset}_s{report.seed}"


HISTORY_FIELDS = ("phase", "index", "train_rmse", "valid_rmse")


def history_csv(report):
    """History as CSV text; wall-clock seconds are left out so reruns match byte for byte."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_FIELDS)
    for row in report.history:
        w.writerow([row["phase"], row["index"], repr(row["train_rmse"]), repr(row["valid_rmse"])])
    return buf.getvalue()


def summary_text(report):
    lines = [
        f"model            {report.model}",
        f"dataset          {report.dataset}",
        f"seed             {report.seed}",
        f"backend          {report.backend}",
        f"pretrain valid   {report.pretrain_valid_rmse:.6f}",
        f"best valid       {report.best_valid_rmse:.6f}",
        f"test RMSE        {report.test_rmse:.6f}",
        "",
        f"{'phase':<18}{'index':>6}{'train':>12}{'valid':>12}{'seconds':>10}",
    ]
    for row in report.history:
        lines.append(f"{row['phase']:<18}{row['index']:>6}{row['train_rmse']:>12.6f}"
                     f"{row['valid_rmse']:>12.6f}{row['seconds']:>10.3f}")
    lines.append("")
    lines.extend(f"time {k:<10} {v:.3f}s" for k, v in report.timings.items())
    return "\n".join(lines) + "\n"


def emit_report(report, directory):
    """Write JSON report, history CSV and text summary; return their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = _stem(report)
    paths = {
        "json": directory / f"report_{stem}.json",
        "history": directory / f"history_{stem}.csv",
        "summary": directory / f"summary_{stem}.txt",
    }
    paths["json"].write_text(report.to_json() + "\n", encoding="utf-8")
    paths["history"].write_text(history_csv(report), encoding="utf-8")
    paths["summary"].write_text(summary_text(report), encoding="utf-8")
    return paths


@dataclass
class FriedmanResult:
    models: list
    datasets: list
    ranks: np.ndarray
    average_rank: np.ndarray
    reference: Optional[int] = None
    wins: Optional[list] = None
    losses: Optional[list] = None


def friedman_rank(table, models=None, datasets=None, reference=None):
    """Average per-dataset ranks of each model (1 = lowest RMSE).

    ``table`` is models x datasets. Tied RMSE values share the mean of the
    rank positions they span. With ``reference`` (a model index or name),
    ``wins[j]``/``losses[j]`` count the datasets on which the reference is
    at least as accurate as / strictly less accurate than model ``j``; the
    reference's own entry is ``None``.
    """
    try:
        arr = np.array(table, dtype=np.float64)
    except ValueError:
        raise ValueError("RMSE table is ragged") from None
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("RMSE table must be a non-empty models x datasets matrix")
    if not np.isfinite(arr).all():
        raise ValueError("RMSE table has missing or non-finite cells")
    n_models, n_data = arr.shape
    models = list(models) if models is not None else [f"model{k}" for k in range(n_models)]
    datasets = list(datasets) if datasets is not None else [f"data{k}" for k in range(n_data)]
    ranks = rankdata(arr, method="average", axis=0)
    result = FriedmanResult(models, datasets, ranks, ranks.mean(axis=1))
    if reference is not None:
        ref = models.index(reference) if isinstance(reference, str) else int(reference)
        result.reference = ref
        result.wins, result.losses = [], []
        for j in range(n_models):
            if j == ref:
                result.wins.append(None)
                result.losses.append(None)
                continue
            result.wins.append(int(np.sum(arr[ref] <= arr[j])))
            result.losses.append(int(np.sum(arr[ref] > arr[j])))
    return result


def comparison_table(reports, reference=None):
    """Models x datasets test-RMSE table built from a list of reports."""
    models = list(dict.fromkeys(r.model for r in reports))
    datasets = list(dict.fromkeys(r.dataset for r in reports))
    table = np.full((len(models), len(datasets)), np.nan)
    for r in reports:
        table[models.index(r.model), datasets.index(r.dataset)] = r.test_rmse
    ref = reference if reference in models else None
    return friedman_rank(table, models, datasets, ref), table


def format_comparison(result, table):
    """CSV text: one RMSE row per dataset (models as columns), then Win/Loss and F-rank rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case"] + result.models)
    for d, name in enumerate(result.datasets):
        w.writerow([name] + [f"{table[m, d]:.6f}" for m in range(len(result.models))])
    if result.reference is not None:
        w.writerow(["Win/Loss"] + ["--" if wl is None else f"{wl}/{ll}"
                                  for wl, ll in zip(result.wins, result.losses)])
    w.writerow(["F-rank"] + [f"{r:g}" for r in result.average_rank])
    return buf.getvalue()


def run_comparison(configs, reference=None, out_dir=None):
    reports = [run_experiment(cfg) for cfg in configs]
    result, table = comparison_table(reports, reference)
    text = format_comparison(result, table)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.csv").write_text(text, encoding="utf-8")
    return reports, result, text
