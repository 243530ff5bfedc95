"""Command-line front end.

Subcommands::

    sphindex simulate|fit|predict|diagnose|bootstrap|tune|cv|plotdata
             --config FILE [--seed INT] [--jobs INT] [--out DIR]

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrapping import bootstrap_se, bootstrap_to_csv, bootstrap_to_json
from .config import ExperimentConfig, load_config, metadata_lines
from .diagnostics import empirical_sges
from .exceptions import ConfigError, DataError, NumericalError, SphindexError
from .ingest import ColumnTransform, IngestSpec, ingest_composition_csv, read_csv_rows
from .losses import LossSpec
from .model import FitConfig, fit, predict, refit_at
from .studies import (
    emit_plot_data,
    fit_config_from,
    ingest_from_config,
    make_loss,
    run_contamination_study,
    run_cv,
    run_shape_study,
    summarize_rows,
    tune_table,
    write_dict_rows_csv,
    write_results_csv,
    write_summary_json,
    write_timings_csv,
)


def _out_dir(config: ExperimentConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_simulate(config: ExperimentConfig, jobs: int) -> None:
    if config.study == "contamination":
        rows = run_contamination_study(config, jobs)
    elif config.study == "shape":
        rows = run_shape_study(config, jobs)
    else:
        raise ConfigError(
            f"simulate expects study contamination or shape, got {config.study!r}")
    out = _out_dir(config)
    write_results_csv(rows, out / f"{config.study}_results.csv", config)
    write_summary_json(summarize_rows(rows),
                       out / f"{config.study}_summary.json", config)
    if config.timings:
        write_timings_csv(rows, out / f"{config.study}_timings.csv", config)


def _model_payload(config: ExperimentConfig, res, transform) -> dict:
    return {
        "metadata": {
            "sphindex_version": __version__,
            "config_sha256": config.config_sha256,
            "seed": config.seed,
        },
        "loss": {
            "family": res.loss.family,
            "lambda": res.loss.lam,
            "huber_c": res.loss.huber_c,
        },
        "kernel": res.kernel.family,
        "theta": res.theta_hat.theta.tolist(),
        "beta": res.beta_hat.tolist(),
        "h": res.h_hat,
        "criterion": res.criterion_value,
        "excluded_rows": res.diagnostics.excluded_rows,
        "ingest": {
            "response_columns": list(config.response_columns),
            "continuous": list(config.continuous),
            "log_columns": list(config.log_columns),
            "categorical": list(config.categorical),
        },
        "transform": {
            "means": transform.means.tolist(),
            "sds": transform.sds.tolist(),
            "categorical": [[col, ref, list(levels)]
                            for col, ref, levels in transform.categorical],
            "feature_names": list(transform.feature_names),
        },
        "fit_config": {
            "kernel": config.kernel,
            "delta": config.delta,
            "h_lo": config.h_lo,
            "h_hi": config.h_hi,
        },
    }


def _write_vectors_csv(path, config: ExperimentConfig, names, u, vectors) -> None:
    lines = metadata_lines(config, __version__)
    lines.append("row,u," + ",".join(f"pred_{name}" for name in names))
    for i in range(vectors.shape[0]):
        coords = ",".join(repr(float(v)) for v in vectors[i])
        lines.append(f"{i},{float(u[i])!r},{coords}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cmd_fit(config: ExperimentConfig, jobs: int) -> None:
    data, transform = ingest_from_config(config)
    loss = make_loss(config.loss, config)
    res = fit(data, loss, fit_config_from(config, config.seed))
    out = _out_dir(config)
    payload = _model_payload(config, res, transform)
    (out / "fit_model.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_vectors_csv(out / "fit_fitted.csv", config,
                       config.response_columns, res.u_train, res.fitted_sphere)


def _load_model(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as err:
        raise DataError(f"cannot read model file {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise DataError(f"malformed model file {path}: {err}") from err


def _cmd_predict(config: ExperimentConfig, jobs: int) -> None:
    if config.model_json is None or config.newdata_csv is None:
        raise ConfigError("predict needs model_json and newdata_csv")
    model = _load_model(config.model_json)
    ingest = model["ingest"]
    spec = IngestSpec(
        response_columns=tuple(ingest["response_columns"]),
        continuous=tuple(ingest["continuous"]),
        log_columns=tuple(ingest["log_columns"]),
        categorical=tuple(ingest["categorical"]))
    if config.data_csv is None:
        raise ConfigError("predict needs data_csv (the training file)")
    data, _ = ingest_composition_csv(config.data_csv, spec)
    loss_info = model["loss"]
    if loss_info["family"] == "esl":
        loss = LossSpec.esl(loss_info["lambda"])
    elif loss_info["family"] == "huber":
        loss = LossSpec.huber(loss_info["huber_c"])
    else:
        loss = LossSpec(loss_info["family"])
    fc = model["fit_config"]
    fit_config = FitConfig(kernel=fc["kernel"], delta=fc["delta"],
                           h_lo=fc["h_lo"], h_hi=fc["h_hi"])
    res = refit_at(data, np.asarray(model["theta"]), model["h"], loss, fit_config)
    tinfo = model["transform"]
    transform = ColumnTransform(
        continuous=tuple(ingest["continuous"]),
        log_columns=tuple(ingest["log_columns"]),
        means=np.asarray(tinfo["means"], dtype=float),
        sds=np.asarray(tinfo["sds"], dtype=float),
        categorical=tuple((col, ref, tuple(levels))
                          for col, ref, levels in tinfo["categorical"]),
        feature_names=tuple(tinfo["feature_names"]))
    new_rows = read_csv_rows(config.newdata_csv)
    X_new = transform.apply(new_rows, where="newdata")
    preds = predict(res, data, X_new, extrapolation="clamp")
    out = _out_dir(config)
    _write_vectors_csv(out / "predictions.csv", config,
                       ingest["response_columns"], X_new @ res.beta_hat, preds)


def _cmd_diagnose(config: ExperimentConfig, jobs: int) -> None:
    out = _out_dir(config)
    all_rows = []
    for loss_name in config.losses:
        loss = make_loss(loss_name, config)
        rows = empirical_sges(loss, config.kappa_list,
                              fit_config_from(config, config.seed),
                              n=config.n, seed=config.seed)
        all_rows.extend(rows)
    table = [{"kappa": r.kappa, "loss": r.loss, "ges": r.ges, "sges": r.sges}
             for r in all_rows]
    write_dict_rows_csv(table, ("kappa", "loss", "ges", "sges"),
                        out / "diagnose_sges.csv", config)


def _cmd_bootstrap(config: ExperimentConfig, jobs: int) -> None:
    data, _transform = ingest_from_config(config)
    loss = make_loss(config.loss, config)
    res = fit(data, loss, fit_config_from(config, config.seed))
    boot = bootstrap_se(res, data, res.loss, config.bootstrap_b,
                        seed=config.seed, recenter=config.recenter)
    out = _out_dir(config)
    bootstrap_to_json(boot, out / "bootstrap.json")
    bootstrap_to_csv(boot, out / "bootstrap_se.csv")


def _cmd_tune(config: ExperimentConfig, jobs: int) -> None:
    rows, summary = tune_table(config)
    out = _out_dir(config)
    write_dict_rows_csv(rows, ("d", "delta", "K", "c_delta", "R", "Q", "ARE", "L"),
                        out / "tune_table.csv", config)
    write_summary_json(summary, out / "tune_summary.json", config)


def _cmd_cv(config: ExperimentConfig, jobs: int) -> None:
    data, _transform = ingest_from_config(config)
    summary = run_cv(config, data, jobs)
    write_summary_json(summary, _out_dir(config) / "cv_summary.json", config)


def _cmd_plotdata(config: ExperimentConfig, jobs: int) -> None:
    rows, columns = emit_plot_data(config)
    write_dict_rows_csv(rows, columns,
                        _out_dir(config) / f"plot_{config.kind}.csv", config)


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "diagnose": _cmd_diagnose,
    "bootstrap": _cmd_bootstrap,
    "tune": _cmd_tune,
    "cv": _cmd_cv,
    "plotdata": _cmd_plotdata,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sphindex",
        description="Robust single-index regression for spherical responses")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="experiment config file")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the config seed")
        cmd.add_argument("--jobs", type=int, default=1,
                         help="worker processes for replications")
        cmd.add_argument("--out", default=None, help="override output_dir")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, seed_override=args.seed,
                             out_override=args.out)
        _COMMANDS[args.command](config, max(1, args.jobs))
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 3
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 4
    except SphindexError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
