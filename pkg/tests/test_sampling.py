import math

import numpy as np
import pytest

import sphindex as sx
from sphindex.exceptions import DegenerateCross

E1 = np.array([1.0, 0.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])


class TestSampleVmf:
    def test_uniform_case_small_resultant(self):
        mu = sx.UnitVector(E3)
        y = sx.sample_vmf(mu, sx.VmfSpec(kappa=0.0), n=10_000, seed=0)
        assert np.linalg.norm(y.mean(axis=0)) < 0.05

    def test_high_concentration_matches_resultant_length(self):
        kappa = 100.0
        mu = sx.UnitVector(E3)
        y = sx.sample_vmf(mu, sx.VmfSpec(kappa=kappa), n=10_000, seed=1)
        expected = 1.0 / math.tanh(kappa) - 1.0 / kappa
        assert float(np.mean(y @ E3)) == pytest.approx(expected, abs=0.01)

    def test_deterministic(self):
        mu = sx.UnitVector(E1)
        a = sx.sample_vmf(mu, sx.VmfSpec(kappa=10.0), n=50, seed=42)
        b = sx.sample_vmf(mu, sx.VmfSpec(kappa=10.0), n=50, seed=42)
        np.testing.assert_array_equal(a, b)

    def test_unit_rows(self):
        mu = sx.UnitVector(E1)
        y = sx.sample_vmf(mu, sx.VmfSpec(kappa=3.0, dimension=3), n=200, seed=5)
        np.testing.assert_allclose(np.linalg.norm(y, axis=1), 1.0, atol=1e-12)

    def test_concentration_monotone_in_kappa(self):
        mu = sx.UnitVector(E3)
        mean_dist = []
        for kappa in (5.0, 25.0, 50.0, 100.0, 250.0):
            y = sx.sample_vmf(mu, sx.VmfSpec(kappa=kappa), n=10_000, seed=7)
            mean_dist.append(float(np.mean(np.arccos(np.clip(y @ E3, -1, 1)))))
        assert all(a > b for a, b in zip(mean_dist, mean_dist[1:]))

    def test_higher_dimension(self):
        mu = sx.UnitVector(np.eye(5)[0])
        y = sx.sample_vmf(mu, sx.VmfSpec(kappa=20.0, dimension=5), n=100, seed=3)
        assert y.shape == (100, 5)
        np.testing.assert_allclose(np.linalg.norm(y, axis=1), 1.0, atol=1e-12)


class TestMeanCurves:
    def test_spiral_at_zero(self):
        out = sx.eval_mean_curve("spiral61", 0.0)
        np.testing.assert_allclose(out.coords, [0.0, math.sqrt(3.0) / 2.0, 0.5],
                                   atol=1e-12)

    def test_mu1_at_zero(self):
        out = sx.eval_mean_curve("mu1", 0.0)
        np.testing.assert_allclose(out.coords, [0.0, 0.0, -1.0], atol=1e-12)

    def test_mu2_uses_normal_cdf(self):
        # At u=0 the transform value is 1/2, same point as the spiral at v=0.5.
        out = sx.eval_mean_curve("mu2", 0.0)
        np.testing.assert_allclose(out.coords, [0.0, math.sqrt(3.0) / 2.0, 0.5],
                                   atol=1e-12)

    def test_mu3_unit_norm(self):
        rng = np.random.default_rng(0)
        for u in rng.uniform(-4, 4, size=20):
            out = sx.eval_mean_curve("mu3", float(u))
            assert abs(np.linalg.norm(out.coords) - 1.0) < 1e-12

    @pytest.mark.parametrize("name", ["spiral61", "mu1", "mu2", "mu3"])
    def test_all_curves_unit_on_wide_range(self, name):
        rng = np.random.default_rng(11)
        u = rng.uniform(-4.0, 4.0, size=10_000)
        vals = sx.curve_values(name, u)
        np.testing.assert_allclose(np.linalg.norm(vals, axis=1), 1.0, atol=1e-12)

    def test_continuity(self):
        for name in ("spiral61", "mu1", "mu2", "mu3"):
            u = np.linspace(-2, 2, 2001)
            vals = sx.curve_values(name, u)
            gaps = np.linalg.norm(np.diff(vals, axis=0), axis=1)
            assert gaps.max() < 0.05

    def test_unknown_curve(self):
        with pytest.raises(ValueError):
            sx.eval_mean_curve("helix", 0.0)


class TestOrthogonalContaminant:
    def test_cross_product_example(self):
        out = sx.orthogonal_contaminant(sx.UnitVector(E3), sx.UnitVector(E1))
        np.testing.assert_allclose(out.coords, [0.0, 1.0, 0.0], atol=1e-14)

    def test_parallel_rejected(self):
        with pytest.raises(DegenerateCross):
            sx.orthogonal_contaminant(sx.UnitVector(E1), sx.UnitVector(E1))

    def test_orthogonality_and_sign(self):
        rng = np.random.default_rng(2)
        ref = sx.UnitVector(E1)
        for _ in range(50):
            v = rng.standard_normal(3)
            mu = sx.UnitVector(v / np.linalg.norm(v))
            out = sx.orthogonal_contaminant(mu, ref)
            assert abs(float(out.coords @ mu.coords)) < 1e-12
            first_nonzero = out.coords[np.flatnonzero(out.coords)[0]]
            assert first_nonzero > 0


class TestContaminate:
    def _setup(self, n=200, seed=0):
        rng = np.random.default_rng(seed)
        u = rng.uniform(-2, 2, size=n)
        means = sx.curve_values("spiral61", u)
        y = sx.sample_vmf_around(means, 50.0, seed + 1)
        return y, means

    def test_zero_epsilon_unchanged(self):
        y, means = self._setup()
        out = sx.contaminate(y, means, sx.ContaminationSpec(epsilon=0.0, seed=3))
        np.testing.assert_array_equal(out, y)

    def test_exact_replacement_count(self):
        y, means = self._setup(n=200)
        out = sx.contaminate(y, means, sx.ContaminationSpec(epsilon=0.2, seed=3))
        changed = np.any(out != y, axis=1)
        assert int(changed.sum()) == 40

    def test_replacements_orthogonal_to_mean(self):
        y, means = self._setup(n=100)
        out = sx.contaminate(y, means, sx.ContaminationSpec(epsilon=0.3, seed=4))
        changed = np.flatnonzero(np.any(out != y, axis=1))
        dots = np.einsum("ij,ij->i", out[changed], means[changed])
        assert np.max(np.abs(dots)) < 1e-10

    def test_deterministic(self):
        y, means = self._setup()
        spec = sx.ContaminationSpec(epsilon=0.25, seed=9)
        np.testing.assert_array_equal(
            sx.contaminate(y, means, spec), sx.contaminate(y, means, spec))

    def test_floor_count(self):
        y, means = self._setup(n=37)
        out = sx.contaminate(y, means, sx.ContaminationSpec(epsilon=0.1, seed=5))
        changed = np.any(out != y, axis=1)
        assert int(changed.sum()) == 3  # floor(3.7)


class TestSamplePredictors:
    def test_moments(self):
        x = sx.sample_predictors(100_000, 3, seed=0)
        assert np.max(np.abs(x.mean(axis=0))) < 0.02
        assert np.max(np.abs(x.var(axis=0) - 1.0)) < 0.05

    def test_reproducible(self):
        np.testing.assert_array_equal(sx.sample_predictors(20, 4, seed=1),
                                      sx.sample_predictors(20, 4, seed=1))

    def test_shape(self):
        assert sx.sample_predictors(7, 5, seed=2).shape == (7, 5)
