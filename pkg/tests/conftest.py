import itertools
import sys

import numpy as np
import pytest

from quadrig.model import BlendshapeModel
from quadrig.spectral import assemble, compute_spectra


def random_model(rng, n=4, m=3, n_pairs=2, corrective_scale=0.5):
    """Dense random rig with ``n_pairs`` distinct corrective pairs."""
    neutral = rng.normal(size=3 * n)
    deltas = rng.normal(size=(3 * n, m))
    all_pairs = list(itertools.combinations(range(m), 2))
    chosen = rng.choice(len(all_pairs), size=n_pairs, replace=False) if n_pairs else []
    pairs = [(*all_pairs[i], corrective_scale * rng.normal(size=3 * n)) for i in chosen]
    return BlendshapeModel(neutral, deltas, pairs)


def random_instance(rng, max_n=50, max_m=10, max_pairs=15):
    """A (model, cache, w, target) draw from the space used by the surrogate checks."""
    n = int(rng.integers(1, max_n + 1))
    m = int(rng.integers(1, max_m + 1))
    n_pairs = int(rng.integers(0, min(max_pairs, m * (m - 1) // 2) + 1))
    model = random_model(rng, n, m, n_pairs, corrective_scale=float(rng.uniform(0.1, 2.0)))
    cache = compute_spectra(assemble(model))
    w = rng.uniform(size=m)
    # some coordinates pinned to the box faces
    w[rng.uniform(size=m) < 0.2] = 0.0
    w[rng.uniform(size=m) < 0.1] = 1.0
    target = model.neutral + rng.normal(scale=2.0, size=3 * n)
    return model, cache, w, target


def feasible_increment(rng, w):
    """Random ``v`` with ``w + v`` in the box, including some face hits."""
    v = rng.uniform(-w, 1.0 - w)
    r = rng.uniform(size=w.shape)
    v[r < 0.05] = -w[r < 0.05]
    v[r > 0.95] = (1.0 - w)[r > 0.95]
    return v


@pytest.fixture
def rng():
    return np.random.default_rng(20240417)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is not None and acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance.RESULTS:
            terminalreporter.write_line(line)
