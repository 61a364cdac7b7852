import numpy as np
import pytest

from odmlab import env as env_mod
from odmlab import model as model_mod


def make_sample_set(rng: np.random.Generator, s: int,
                    m: int) -> model_mod.PredictiveSampleSet:
    """Random valid predictive sample set (Dirichlet rows)."""
    probs = rng.dirichlet(np.ones(m), size=s)
    return model_mod.PredictiveSampleSet(probs=probs)


@pytest.fixture(scope="session")
def seed_model():
    """A minimal model fitted on one example per class of the sine task."""
    rng = np.random.default_rng(12345)
    params = env_mod.GaussSineParams(noise_q=0.0)
    X0, y0 = env_mod.gauss_sine_seed_examples(params, rng)
    return model_mod.fit_xy(X0, y0, env_mod.GAUSS_SINE_M)


@pytest.fixture(scope="session")
def toy_tabular_csv(tmp_path_factory):
    """Synthetic 3-class blob dataset written as a comma-delimited file.

    String labels exercise the first-appearance index mapping; one constant
    column exercises the variance floor.
    """
    rng = np.random.default_rng(2024)
    per_class = 140
    centers = np.array([[-2.0, 0.0], [2.0, 0.0], [0.0, 2.5]])
    names = ["ant", "bee", "cat"]
    rows = []
    for c, name in enumerate(names):
        pts = rng.normal(size=(per_class, 2)) * 0.5 + centers[c]
        for p in pts:
            rows.append((p[0], p[1], 7.5, name))
    rng.shuffle(rows)
    path = tmp_path_factory.mktemp("data") / "blobs.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("f1,f2,const,label\n")
        for f1, f2, c, name in rows:
            fh.write(f"{f1:.6f},{f2:.6f},{c},{name}\n")
    return str(path)
