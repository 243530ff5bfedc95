"""Flat key-value experiment configuration with strict validation.

Config files are plain text, one ``key = value`` per line, with ``#``
comments.  Unknown keys are rejected so experiment definitions stay
diffable and reproducible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .exceptions import ConfigError

STUDIES = ("contamination", "shape", "fit", "predict", "diagnose",
           "bootstrap", "tune", "cv", "plotdata")

_COMMON_KEYS = {"study", "seed", "output_dir", "kernel"}
_OPT_KEYS = {"top_starts", "optimizer_max_iter", "n_random_starts", "delta",
             "huber_c", "lambda", "h_lo", "h_hi"}
_DATA_KEYS = {"data_csv", "response_columns", "continuous", "log_columns",
              "categorical"}

_ALLOWED = {
    "contamination": _COMMON_KEYS | _OPT_KEYS | {
        "n", "p", "kappa", "epsilon", "curve", "losses", "replications",
        "test_size", "timings"},
    "shape": _COMMON_KEYS | _OPT_KEYS | {
        "curves", "n_list", "kappa", "p", "losses", "replications",
        "test_size", "timings"},
    "fit": _COMMON_KEYS | _OPT_KEYS | _DATA_KEYS | {"loss"},
    "predict": _COMMON_KEYS | {"model_json", "data_csv", "newdata_csv"},
    "diagnose": _COMMON_KEYS | _OPT_KEYS | {"kappa_list", "n", "losses"},
    "bootstrap": _COMMON_KEYS | _OPT_KEYS | _DATA_KEYS | {
        "loss", "bootstrap_b", "recenter"},
    "tune": _COMMON_KEYS | {"d_list", "grid_points", "delta",
                            "w_efficiency", "w_robustness"},
    "cv": _COMMON_KEYS | _OPT_KEYS | _DATA_KEYS | {"losses", "folds"},
    "plotdata": _COMMON_KEYS | {"kind", "input", "d_list", "grid_points"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Typed union of every experiment's settings."""

    study: str
    seed: int = 0
    output_dir: str = "."
    kernel: str = "epanechnikov"
    # simulation studies
    n: int = 200
    p: int = 3
    kappa: float = 50.0
    epsilon: float = 0.0
    curve: str = "spiral61"
    curves: tuple = ("mu1", "mu2", "mu3")
    n_list: tuple = (150,)
    losses: tuple = ("ls", "esl")
    replications: int = 50
    test_size: int = 50
    timings: bool = False
    kappa_list: tuple = (25.0, 400.0)
    # single-model runs
    loss: str = "ls"
    lam: float | None = None
    huber_c: float = 1.345
    delta: float = 0.4
    # optimizer knobs
    top_starts: int = 3
    optimizer_max_iter: int = 200
    n_random_starts: int = 5
    h_lo: float = 0.1
    h_hi: float = 3.0
    # data ingestion
    data_csv: str | None = None
    newdata_csv: str | None = None
    model_json: str | None = None
    response_columns: tuple = ()
    continuous: tuple = ()
    log_columns: tuple = ()
    categorical: tuple = ()
    # bootstrap / cv
    bootstrap_b: int = 50
    recenter: bool = False
    folds: int = 10
    # plot emission
    kind: str = "boxplot"
    input: str | None = None
    d_list: tuple = (3,)
    grid_points: int = 199
    w_efficiency: float = 1.0
    w_robustness: float = 1.0
    # provenance
    config_sha256: str = ""

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ConfigError(f"unknown study {self.study!r}")
        checks = [
            (self.n >= 8, "n must be >= 8"),
            (self.p >= 2, "p must be >= 2"),
            (self.kappa >= 0, "kappa must be >= 0"),
            (0.0 <= self.epsilon < 1.0, "epsilon must lie in [0, 1)"),
            (0.0 < self.delta < 1.0, "delta must lie in (0, 1)"),
            (self.replications >= 1, "replications must be >= 1"),
            (self.test_size >= 1, "test_size must be >= 1"),
            (self.bootstrap_b >= 2, "bootstrap_b must be >= 2"),
            (self.folds >= 2, "folds must be >= 2"),
            (self.grid_points >= 10, "grid_points must be >= 10"),
            (self.top_starts >= 1, "top_starts must be >= 1"),
            (self.optimizer_max_iter >= 1, "optimizer_max_iter must be >= 1"),
            (self.n_random_starts >= 0, "n_random_starts must be >= 0"),
            (0 < self.h_lo < self.h_hi, "need 0 < h_lo < h_hi"),
            (self.lam is None or self.lam > 0, "lambda must be > 0"),
            (self.huber_c > 0, "huber_c must be > 0"),
            (all(d >= 3 for d in self.d_list), "d_list entries must be >= 3"),
            (self.kind in ("boxplot", "barplot", "tradeoff"),
             "kind must be boxplot, barplot or tradeoff"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)


_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False,
                "yes": True, "no": False}

_INT_FIELDS = {"seed", "n", "p", "replications", "test_size", "top_starts",
               "optimizer_max_iter", "n_random_starts", "bootstrap_b",
               "folds", "grid_points"}
_FLOAT_FIELDS = {"kappa", "epsilon", "delta", "huber_c", "lambda", "h_lo",
                 "h_hi", "w_efficiency", "w_robustness"}
_BOOL_FIELDS = {"timings", "recenter"}
_STR_LIST_FIELDS = {"curves", "losses", "response_columns", "continuous",
                    "log_columns", "categorical"}
_FLOAT_LIST_FIELDS = {"kappa_list"}
_INT_LIST_FIELDS = {"n_list", "d_list"}


def _coerce(key: str, raw: str):
    try:
        if key in _INT_FIELDS:
            return int(raw)
        if key in _FLOAT_FIELDS:
            return float(raw)
        if key in _BOOL_FIELDS:
            return _BOOL_VALUES[raw.strip().lower()]
        if key in _STR_LIST_FIELDS:
            return tuple(part.strip() for part in raw.split(",") if part.strip())
        if key in _FLOAT_LIST_FIELDS:
            return tuple(float(part) for part in raw.split(",") if part.strip())
        if key in _INT_LIST_FIELDS:
            return tuple(int(part) for part in raw.split(",") if part.strip())
    except (ValueError, KeyError) as err:
        raise ConfigError(f"cannot parse value {raw!r} for key {key!r}") from err
    return raw.strip()


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into a raw string mapping."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path, seed_override: int | None = None,
                out_override: str | None = None) -> ExperimentConfig:
    """Load, type and validate an experiment configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from err
    raw = parse_config_text(text)
    if "study" not in raw:
        raise ConfigError("config must declare a 'study' key")
    study = raw["study"].strip()
    if study not in STUDIES:
        raise ConfigError(f"unknown study {study!r}")
    allowed = _ALLOWED[study]
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(
            f"unknown keys for study {study!r}: {sorted(unknown)}")
    field_names = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for key, raw_value in raw.items():
        name = "lam" if key == "lambda" else key
        if name not in field_names:
            raise ConfigError(f"unknown key {key!r}")
        values[name] = _coerce(key, raw_value)
    if seed_override is not None:
        values["seed"] = int(seed_override)
    if out_override is not None:
        values["output_dir"] = str(out_override)
    values["config_sha256"] = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return ExperimentConfig(**values)


def metadata_lines(config: ExperimentConfig, version: str) -> list[str]:
    """Provenance header lines for output files."""
    return [
        f"# sphindex-version: {version}",
        f"# study: {config.study}",
        f"# config-sha256: {config.config_sha256}",
        f"# seed: {config.seed}",
    ]
