import math

import numpy as np
import pytest

from sphindex.config import load_config, metadata_lines, parse_config_text
from sphindex.exceptions import (
    ConfigError,
    DataError,
    NegativeComposition,
    UnknownColumn,
    ZeroRowSum,
)
from sphindex.ingest import IngestSpec, ingest_composition_csv, read_csv_rows


class TestConfigParsing:
    def test_basic_parse(self):
        raw = parse_config_text("a = 1\n# comment\n\nb = x,y\n")
        assert raw == {"a": "1", "b": "x,y"}

    def test_missing_equals(self):
        with pytest.raises(ConfigError):
            parse_config_text("just a line\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError):
            parse_config_text("a = 1\na = 2\n")

    def _write(self, tmp_path, text):
        path = tmp_path / "exp.cfg"
        path.write_text(text, encoding="utf-8")
        return path

    def test_load_minimal(self, tmp_path):
        cfg = load_config(self._write(tmp_path, "study = tune\n"))
        assert cfg.study == "tune"
        assert cfg.seed == 0
        assert len(cfg.config_sha256) == 64

    def test_unknown_key_rejected(self, tmp_path):
        path = self._write(tmp_path, "study = tune\nbanana = 3\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_study_scoped_keys(self, tmp_path):
        # kappa_list belongs to diagnose, not tune.
        path = self._write(tmp_path, "study = tune\nkappa_list = 1,2\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_bad_value_type(self, tmp_path):
        path = self._write(tmp_path, "study = contamination\nn = many\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_range_validation(self, tmp_path):
        path = self._write(tmp_path, "study = contamination\nepsilon = 1.5\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_unknown_study(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(self._write(tmp_path, "study = banquet\n"))

    def test_missing_study(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(self._write(tmp_path, "seed = 4\n"))

    def test_lists_and_lambda(self, tmp_path):
        text = ("study = contamination\nlosses = ls, esl\nkappa = 25\n"
                "lambda = 0.5\nseed = 3\n")
        cfg = load_config(self._write(tmp_path, text))
        assert cfg.losses == ("ls", "esl")
        assert cfg.lam == 0.5
        assert cfg.kappa == 25.0

    def test_overrides(self, tmp_path):
        path = self._write(tmp_path, "study = tune\nseed = 1\n")
        cfg = load_config(path, seed_override=9, out_override="elsewhere")
        assert cfg.seed == 9
        assert cfg.output_dir == "elsewhere"

    def test_sha_stable(self, tmp_path):
        path = self._write(tmp_path, "study = tune\nseed = 1\n")
        a = load_config(path).config_sha256
        b = load_config(path).config_sha256
        assert a == b

    def test_metadata_lines(self, tmp_path):
        cfg = load_config(self._write(tmp_path, "study = tune\nseed = 5\n"))
        lines = metadata_lines(cfg, "0.1.0")
        assert lines[0].startswith("# sphindex-version:")
        assert any("seed: 5" in ln for ln in lines)


def _write_csv(tmp_path, name, header, rows):
    path = tmp_path / name
    lines = [",".join(header)]
    lines.extend(",".join(str(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def soil_csv(tmp_path):
    rng = np.random.default_rng(0)
    header = ["sand", "silt", "clay", "temp", "rain", "size"]
    rows = []
    sizes = ["l", "ll", "m"]
    for i in range(30):
        raw = rng.uniform(0.05, 1.0, size=3)
        temp = rng.normal(8.0, 2.0)
        rain = math.exp(rng.normal(6.0, 0.3))
        rows.append([raw[0], raw[1], raw[2], temp, rain, sizes[i % 3]])
    return _write_csv(tmp_path, "soil.csv", header, rows)


SPEC = IngestSpec(
    response_columns=("sand", "silt", "clay"),
    continuous=("temp", "rain"),
    log_columns=("rain",),
    categorical=("size:l",),
)


class TestIngest:
    def test_square_root_transform(self, tmp_path):
        path = _write_csv(tmp_path, "t.csv",
                          ["a", "b", "c", "x"],
                          [[0.25, 0.25, 0.5, 1.0], [0.2, 0.2, 0.6, 2.0],
                           [0.1, 0.8, 0.1, 3.0], [0.3, 0.3, 0.4, 4.0],
                           [0.25, 0.5, 0.25, 5.0], [0.6, 0.2, 0.2, 6.0]])
        spec = IngestSpec(response_columns=("a", "b", "c"), continuous=("x",))
        data, _ = ingest_composition_csv(path, spec)
        np.testing.assert_allclose(data.Y[0], [0.5, 0.5, math.sqrt(0.5)],
                                   atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(data.Y, axis=1), 1.0,
                                   atol=1e-12)

    def test_renormalizes_before_root(self, tmp_path):
        path = _write_csv(tmp_path, "t.csv", ["a", "b", "c", "x"],
                          [[2.0, 2.0, 4.0, 1.0]] + [[1, 1, 2, v] for v in
                                                    (2.0, 3.0, 4.0, 5.0, 6.0)])
        spec = IngestSpec(response_columns=("a", "b", "c"), continuous=("x",))
        data, _ = ingest_composition_csv(path, spec)
        np.testing.assert_allclose(data.Y[0], [0.5, 0.5, math.sqrt(0.5)],
                                   atol=1e-12)

    def test_negative_entry(self, tmp_path):
        path = _write_csv(tmp_path, "t.csv", ["a", "b", "c", "x"],
                          [[0.5, -0.1, 0.6, 1.0]] + [[1, 1, 1, v] for v in
                                                     range(5)])
        spec = IngestSpec(response_columns=("a", "b", "c"), continuous=("x",))
        with pytest.raises(NegativeComposition):
            ingest_composition_csv(path, spec)

    def test_zero_row_sum(self, tmp_path):
        path = _write_csv(tmp_path, "t.csv", ["a", "b", "c", "x"],
                          [[0.0, 0.0, 0.0, 1.0]] + [[1, 1, 1, v] for v in
                                                    range(5)])
        spec = IngestSpec(response_columns=("a", "b", "c"), continuous=("x",))
        with pytest.raises(ZeroRowSum):
            ingest_composition_csv(path, spec)

    def test_unknown_column(self, tmp_path):
        path = _write_csv(tmp_path, "t.csv", ["a", "b", "c"],
                          [[1, 1, 1]] * 6)
        spec = IngestSpec(response_columns=("a", "b", "c"), continuous=("zz",))
        with pytest.raises(UnknownColumn):
            ingest_composition_csv(path, spec)

    def test_standardization(self, soil_csv):
        data, transform = ingest_composition_csv(soil_csv, SPEC)
        cont = data.X[:, :2]
        np.testing.assert_allclose(cont.mean(axis=0), 0.0, atol=1e-10)
        np.testing.assert_allclose(cont.std(axis=0), 1.0, atol=1e-10)

    def test_dummy_encoding(self, soil_csv):
        data, transform = ingest_composition_csv(soil_csv, SPEC)
        assert transform.feature_names == ("temp", "rain", "size=ll", "size=m")
        dummies = data.X[:, 2:]
        assert set(np.unique(dummies)) <= {0.0, 1.0}
        # Reference level rows carry all-zero dummies.
        assert np.any(dummies.sum(axis=1) == 0.0)

    def test_log_transform_applied(self, soil_csv):
        data, transform = ingest_composition_csv(soil_csv, SPEC)
        rows = read_csv_rows(soil_csv)
        rain = np.log([float(r["rain"]) for r in rows])
        expected = (rain - rain.mean()) / rain.std()
        np.testing.assert_allclose(data.X[:, 1], expected, atol=1e-10)

    def test_transform_reusable_on_new_rows(self, soil_csv):
        _, transform = ingest_composition_csv(soil_csv, SPEC)
        new_rows = [{"temp": "9.0", "rain": "400.0", "size": "m"},
                    {"temp": "7.5", "rain": "380.0", "size": "l"}]
        X_new = transform.apply(new_rows)
        assert X_new.shape == (2, 4)
        assert X_new[0, 3] == 1.0  # size=m dummy
        assert X_new[1, 2] == 0.0 and X_new[1, 3] == 0.0

    def test_unseen_level_rejected(self, soil_csv):
        _, transform = ingest_composition_csv(soil_csv, SPEC)
        with pytest.raises(DataError):
            transform.apply([{"temp": "9.0", "rain": "400.0", "size": "xxl"}])

    def test_missing_reference_level(self, soil_csv):
        spec = IngestSpec(response_columns=("sand", "silt", "clay"),
                          continuous=("temp",), categorical=("size:tiny",))
        with pytest.raises(DataError):
            ingest_composition_csv(soil_csv, spec)

    def test_nonpositive_log_rejected(self, tmp_path):
        path = _write_csv(tmp_path, "t.csv", ["a", "b", "c", "x"],
                          [[1, 1, 1, -1.0]] + [[1, 1, 1, v + 1] for v in
                                               range(5)])
        spec = IngestSpec(response_columns=("a", "b", "c"), continuous=("x",),
                          log_columns=("x",))
        with pytest.raises(DataError):
            ingest_composition_csv(path, spec)
