"""Seeded simulation studies, cross-validation and plot-data emission.

Every study is a pure function of (config, input files, seed): replication
seeds are spawned from the root seed by index, workers return rows keyed
by replication, and outputs are assembled in index order, so results are
byte-identical across re-runs and across worker counts.  Wall-clock
timings are inherently non-reproducible and are only written when the
config asks for them, into a separate timings file.
"""

from __future__ import annotations

import json
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, metadata_lines
from .exceptions import DataError, MalformedResults, SphindexError
from .ingest import IngestSpec, ingest_composition_csv
from .losses import DeltaCalc, LossSpec, are_esl, c_delta, delta_opt, k_delta, q_delta, r_delta, tradeoff_criterion
from .model import FitConfig, fit, metrics, predict
from .params import Dataset
from .sampling import ContaminationSpec, contaminate, curve_values, sample_predictors, sample_vmf_around


@dataclass(frozen=True)
class ResultRow:
    """One fitted model inside one replication."""

    replication: int
    loss: str
    curve: str
    n: int
    kappa: float
    epsilon: float
    bias: float
    mse: float
    mspe: float
    fit_seconds: float
    converged: bool


RESULT_COLUMNS = ("replication", "loss", "curve", "n", "kappa", "epsilon",
                  "bias", "mse", "mspe", "converged")


def alternating_coefficients(p: int) -> np.ndarray:
    """Unit coefficient pattern (1, -1, 1, ...) / sqrt(p)."""
    signs = np.array([(-1.0) ** j for j in range(p)])
    return signs / math.sqrt(p)


def make_loss(name: str, config: ExperimentConfig) -> LossSpec:
    name = name.lower()
    if name == "ls":
        return LossSpec.ls()
    if name == "esl":
        return LossSpec.esl(config.lam)
    if name == "l1":
        return LossSpec.l1()
    if name == "huber":
        return LossSpec.huber(config.huber_c)
    raise DataError(f"unknown loss {name!r}")


def fit_config_from(config: ExperimentConfig, seed: int) -> FitConfig:
    return FitConfig(
        kernel=config.kernel, top_starts=config.top_starts,
        optimizer_max_iter=config.optimizer_max_iter,
        n_random_starts=config.n_random_starts, delta=config.delta,
        h_lo=config.h_lo, h_hi=config.h_hi, seed=seed)


def _simulate_replication(task: dict) -> list[ResultRow]:
    """Worker: one replication of a simulation study (all losses)."""
    ss = task["seed_seq"]
    kids = ss.spawn(6)
    p = task["p"]
    n = task["n"]
    beta0 = alternating_coefficients(p)
    X = sample_predictors(n, p, kids[0])
    mean_vals = curve_values(task["curve"], X @ beta0)
    Y = sample_vmf_around(mean_vals, task["kappa"], kids[1])
    if task["epsilon"] > 0:
        spec = ContaminationSpec(
            epsilon=task["epsilon"],
            seed=int(kids[2].generate_state(1)[0]))
        Y = contaminate(Y, mean_vals, spec)
    X_test = sample_predictors(task["test_size"], p, kids[3])
    Y_test = sample_vmf_around(curve_values(task["curve"], X_test @ beta0),
                               task["kappa"], kids[4])
    data = Dataset(X, Y)
    fit_seed = int(kids[5].generate_state(1)[0])
    rows = []
    for loss_spec in task["losses"]:
        config = replace(task["fit_config"], seed=fit_seed)
        start = time.perf_counter()
        try:
            res = fit(data, loss_spec, config)
            y_pred = predict(res, data, X_test, extrapolation="clamp")
            elapsed = time.perf_counter() - start
            summary = metrics(beta0, res.beta_hat, Y, res.fitted_sphere,
                              Y_test, y_pred)
            rows.append(ResultRow(
                replication=task["replication"], loss=loss_spec.family,
                curve=task["curve"], n=n, kappa=task["kappa"],
                epsilon=task["epsilon"], bias=summary.bias, mse=summary.mse,
                mspe=summary.mspe, fit_seconds=elapsed, converged=True))
        except SphindexError:
            elapsed = time.perf_counter() - start
            rows.append(ResultRow(
                replication=task["replication"], loss=loss_spec.family,
                curve=task["curve"], n=n, kappa=task["kappa"],
                epsilon=task["epsilon"], bias=math.nan, mse=math.nan,
                mspe=math.nan, fit_seconds=elapsed, converged=False))
    return rows


def _run_tasks(tasks: list[dict], jobs: int) -> list[ResultRow]:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_simulate_replication, tasks, chunksize=1))
    else:
        chunks = [_simulate_replication(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


def _study_tasks(config: ExperimentConfig, combos: list[dict]) -> list[dict]:
    """One task per (combo, replication), with spawned seeds by index."""
    root = np.random.SeedSequence(config.seed)
    children = root.spawn(len(combos) * config.replications)
    losses = [make_loss(name, config) for name in config.losses]
    tasks = []
    k = 0
    for combo in combos:
        for rep in range(config.replications):
            task = {
                "replication": rep, "seed_seq": children[k],
                "losses": losses, "test_size": config.test_size,
                "fit_config": fit_config_from(config, 0),
            }
            task.update(combo)
            tasks.append(task)
            k += 1
    return tasks


def run_contamination_study(config: ExperimentConfig, jobs: int = 1):
    """Contamination sweep at one (n, kappa, epsilon) cell."""
    combos = [{"curve": config.curve, "n": config.n, "p": config.p,
               "kappa": config.kappa, "epsilon": config.epsilon}]
    rows = _run_tasks(_study_tasks(config, combos), jobs)
    return rows


def run_shape_study(config: ExperimentConfig, jobs: int = 1):
    """Mean-curve shape sweep over curves x sample sizes."""
    combos = [{"curve": curve, "n": n, "p": config.p,
               "kappa": config.kappa, "epsilon": 0.0}
              for curve in config.curves for n in config.n_list]
    rows = _run_tasks(_study_tasks(config, combos), jobs)
    return rows


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results_csv(rows: list[ResultRow], path, config: ExperimentConfig) -> None:
    """Deterministic results CSV with a provenance header block."""
    lines = metadata_lines(config, __version__)
    lines.append(",".join(RESULT_COLUMNS))
    for row in rows:
        lines.append(",".join(_fmt(getattr(row, col)) for col in RESULT_COLUMNS))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_timings_csv(rows: list[ResultRow], path, config: ExperimentConfig) -> None:
    """Wall-clock timings; excluded from the reproducibility contract."""
    lines = metadata_lines(config, __version__)
    lines.append("replication,loss,curve,n,fit_seconds_ms")
    for row in rows:
        lines.append(
            f"{row.replication},{row.loss},{row.curve},{row.n},"
            f"{row.fit_seconds * 1000.0:.3f}")
    _atomic_write(path, "\n".join(lines) + "\n")


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _median(values: list[float]) -> float:
    finite = [v for v in values if math.isfinite(v)]
    return statistics.median(finite) if finite else math.nan


def summarize_rows(rows: list[ResultRow]) -> dict:
    """Median metrics per (loss, curve, n) cell over converged rows."""
    cells: dict[tuple, dict] = {}
    for row in rows:
        key = (row.loss, row.curve, row.n, row.kappa, row.epsilon)
        cell = cells.setdefault(key, {"bias": [], "mse": [], "mspe": [],
                                      "failures": 0, "count": 0})
        cell["count"] += 1
        if row.converged:
            cell["bias"].append(row.bias)
            cell["mse"].append(row.mse)
            cell["mspe"].append(row.mspe)
        else:
            cell["failures"] += 1
    out = {}
    for (loss, curve, n, kappa, eps), cell in sorted(cells.items()):
        name = f"loss={loss}|curve={curve}|n={n}|kappa={kappa:g}|epsilon={eps:g}"
        out[name] = {
            "median_bias": _median(cell["bias"]),
            "median_mse": _median(cell["mse"]),
            "median_mspe": _median(cell["mspe"]),
            "failures": cell["failures"],
            "count": cell["count"],
        }
    return out


def write_summary_json(summary: dict, path, config: ExperimentConfig) -> None:
    payload = {
        "metadata": {
            "sphindex_version": __version__,
            "study": config.study,
            "config_sha256": config.config_sha256,
            "seed": config.seed,
        },
        "summary": summary,
    }
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def assign_folds(n: int, folds: int, seed) -> np.ndarray:
    """Deterministic fold labels 0..folds-1 from a seeded permutation."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    labels = np.empty(n, dtype=int)
    for k, chunk in enumerate(np.array_split(perm, folds)):
        labels[chunk] = k
    return labels


def run_cv(config: ExperimentConfig, data: Dataset, jobs: int = 1) -> dict:
    """K-fold cross-validated mean squared prediction error per loss."""
    n = data.n
    if n < config.folds * (data.p + 2):
        raise DataError(
            f"cross-validation needs n >= folds*(p+2) = "
            f"{config.folds * (data.p + 2)}, got n={n}")
    labels = assign_folds(n, config.folds, np.random.SeedSequence(config.seed))
    out: dict[str, dict] = {}
    for loss_name in config.losses:
        loss_spec = make_loss(loss_name, config)
        fold_mspe = []
        failures = 0
        for k in range(config.folds):
            test = labels == k
            train = ~test
            try:
                sub = Dataset(data.X[train], data.Y[train])
                res = fit(sub, loss_spec,
                          fit_config_from(config, config.seed + k))
                y_pred = predict(res, sub, data.X[test], extrapolation="clamp")
                dots = np.clip(np.einsum("ij,ij->i", data.Y[test], y_pred),
                               -1.0, 1.0)
                fold_mspe.append(float(np.mean(np.arccos(dots) ** 2)))
            except SphindexError:
                failures += 1
                fold_mspe.append(math.nan)
        finite = [v for v in fold_mspe if math.isfinite(v)]
        out[loss_name] = {
            "fold_mspe": fold_mspe,
            "mean_mspe": float(np.mean(finite)) if finite else math.nan,
            "failures": failures,
        }
    return out


def tune_table(config: ExperimentConfig) -> tuple[list[dict], dict]:
    """Trade-off constants over a delta grid for each requested dimension."""
    grid = np.linspace(0.005, 0.995, config.grid_points)
    rows = []
    summary = {}
    for d in config.d_list:
        for delta in grid:
            calc = DeltaCalc(float(delta), int(d))
            try:
                r_val = r_delta(calc)
                are = 1.0 / r_val
            except SphindexError:
                r_val = math.nan
                are = math.nan
            rows.append({
                "d": int(d), "delta": float(delta),
                "K": k_delta(calc), "c_delta": c_delta(calc),
                "R": r_val, "Q": q_delta(calc), "ARE": are,
                "L": (config.w_efficiency * r_val +
                      config.w_robustness * q_delta(calc)),
            })
        calc0 = DeltaCalc(config.delta, int(d))
        summary[f"d={d}"] = {
            "delta_opt": delta_opt(int(d)),
            "K_at_delta": k_delta(calc0),
            "c_at_delta": c_delta(calc0),
            "Q_at_delta": q_delta(calc0),
            "ARE_at_delta": are_esl(calc0),
            "L_at_delta": tradeoff_criterion(calc0, config.w_efficiency,
                                             config.w_robustness),
        }
    return rows, summary


def write_dict_rows_csv(rows: list[dict], columns: tuple, path,
                        config: ExperimentConfig) -> None:
    lines = metadata_lines(config, __version__)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_results_csv(path) -> list[dict]:
    """Read a results CSV back, skipping the provenance header block."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise MalformedResults(f"cannot read {path}: {err}") from err
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise MalformedResults(f"{path}: no header row")
    header = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise MalformedResults(f"{path}: ragged row {ln!r}")
        rows.append(dict(zip(header, parts)))
    return rows


def _safe_log(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        return math.nan
    if not math.isfinite(v) or v <= 0:
        return math.nan
    return math.log(v)


def emit_plot_data(config: ExperimentConfig) -> tuple[list[dict], tuple]:
    """Plot-ready long-format table for boxplots, barplots or the trade-off."""
    if config.kind == "tradeoff":
        rows, _ = tune_table(config)
        out = [{"d": r["d"], "delta": r["delta"], "ARE": r["ARE"], "Q": r["Q"]}
               for r in rows]
        return out, ("d", "delta", "ARE", "Q")
    if config.input is None:
        raise MalformedResults("plotdata needs an 'input' results file")
    rows = read_results_csv(config.input)
    if config.kind == "boxplot":
        required = {"replication", "loss", "curve", "n", "kappa", "epsilon",
                    "bias", "mse", "mspe"}
        if rows and required - set(rows[0]):
            raise MalformedResults(
                f"missing columns: {sorted(required - set(rows[0]))}")
        out = [{
            "replication": r["replication"], "loss": r["loss"],
            "curve": r["curve"], "n": r["n"], "kappa": r["kappa"],
            "epsilon": r["epsilon"], "log_bias": _safe_log(r["bias"]),
            "log_mse": _safe_log(r["mse"]), "log_mspe": _safe_log(r["mspe"]),
        } for r in rows]
        return out, ("replication", "loss", "curve", "n", "kappa", "epsilon",
                     "log_bias", "log_mse", "log_mspe")
    # barplot: median timing per (curve, n, loss)
    required = {"loss", "curve", "n", "fit_seconds_ms"}
    if not rows or required - set(rows[0]):
        raise MalformedResults("barplot input needs a timings file")
    cells: dict[tuple, list[float]] = {}
    for r in rows:
        key = (r["curve"], int(r["n"]), r["loss"])
        cells.setdefault(key, []).append(float(r["fit_seconds_ms"]))
    out = [{"curve": curve, "n": n, "loss": loss,
            "median_fit_seconds_ms": _median(vals)}
           for (curve, n, loss), vals in sorted(cells.items())]
    return out, ("curve", "n", "loss", "median_fit_seconds_ms")


def ingest_from_config(config: ExperimentConfig):
    """Build the Dataset declared by a config's data keys."""
    if config.data_csv is None:
        raise DataError("config must set data_csv")
    spec = IngestSpec(
        response_columns=tuple(config.response_columns),
        continuous=tuple(config.continuous),
        log_columns=tuple(config.log_columns),
        categorical=tuple(config.categorical))
    return ingest_composition_csv(config.data_csv, spec)
