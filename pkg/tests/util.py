"""Shared helpers for the test suite."""

import numpy as np

import sphindex as sx


def random_unit(rng, d):
    v = rng.standard_normal(d)
    return sx.UnitVector(v / np.linalg.norm(v))


def random_unit_pair(rng, d, min_dot=-0.99):
    a = random_unit(rng, d)
    while True:
        b = random_unit(rng, d)
        if a.dot(b) > min_dot:
            return a, b


def spiral_dataset(n, kappa=None, seed=0, epsilon=0.0, p=3):
    """Spiral-curve dataset with optional vMF noise and contamination."""
    ss = np.random.SeedSequence(seed)
    kids = ss.spawn(3)
    beta0 = np.array([(-1.0) ** j for j in range(p)]) / np.sqrt(p)
    X = sx.sample_predictors(n, p, kids[0])
    means = sx.curve_values("spiral61", X @ beta0)
    if kappa is None:
        Y = means
    else:
        Y = sx.sample_vmf_around(means, kappa, kids[1])
    if epsilon > 0:
        spec = sx.ContaminationSpec(
            epsilon=epsilon, seed=int(kids[2].generate_state(1)[0]))
        Y = sx.contaminate(Y, means, spec)
    return sx.Dataset(X, Y), beta0


def light_config(seed=0, **kw):
    defaults = dict(seed=seed, top_starts=2, optimizer_max_iter=80,
                    n_random_starts=2)
    defaults.update(kw)
    return sx.FitConfig(**defaults)


def angle(a, b):
    return float(np.arccos(np.clip(np.asarray(a) @ np.asarray(b), -1.0, 1.0)))


def write_composition_csv(path, n=80, seed=0, kappa=400.0):
    """Synthetic compositional regression CSV with a smooth index link.

    Proportions follow a softmax in the index, so the square-root
    responses stay in the positive orthant of the sphere.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    beta = np.array([0.8, 0.6])
    u = np.clip(X @ beta, -2.5, 2.5)
    logits = np.stack([u, np.zeros_like(u), -u], axis=1)
    prop = np.exp(logits)
    prop /= prop.sum(axis=1, keepdims=True)
    means = np.sqrt(prop)
    Y = sx.sample_vmf_around(means, kappa, seed + 1)
    comp = Y**2
    lines = ["c1,c2,c3,x1,x2"]
    for i in range(n):
        vals = [repr(float(v)) for v in comp[i]] + [repr(float(v)) for v in X[i]]
        lines.append(",".join(vals))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
