"""Seeded synthetic rigs and targets.

Every random quantity comes from its own :class:`~quadrig.prng.Stream` of
the SynthSpec seed, so the generated bytes are reproducible across platforms
and implementations. The construction, in draw order per stream:

* stream 0: neutral coordinates, ``3n`` draws of ``symmetric()``.
* stream 1: window starts, one ``below(n - L + 1)`` per blendshape, where
  ``L = ceil(locality * n)``; blendshape ``i`` moves vertices
  ``[start_i, start_i + L)``.
* stream 2: blendshape offsets, ``delta_scale * symmetric()`` for the
  ``3L`` window coordinates of each blendshape in index order.
* stream 3: pair selection. All pairs ``j < k`` in lexicographic order are
  split into overlapping and disjoint windows; each group is shuffled
  (overlapping first) and pairs are taken from overlapping, then disjoint.
* stream 4: corrective offsets, ``corrective_scale * symmetric()`` on the
  window intersection (union for disjoint pairs), pairs in ``(j, k)`` order.
* stream 5: ground-truth support, first ``ceil(sparsity * m)`` entries of a
  shuffle of ``range(m)``.
* stream 6: active weights ``0.2 + 0.8 * uniform()`` in ascending index order.
* stream 7: target noise, ``noise_std * normal()`` per coordinate.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .model import BlendshapeModel, evaluate_quadratic
from .prng import Stream

__all__ = ["SpecError", "SynthSpec", "generate_model", "generate_target"]

# ceil() guard: 0.25 * 20 must give 5, not 6 via rounding noise.
_CEIL_SLACK = 1e-9

_NEUTRAL, _WINDOWS, _DELTAS, _PAIRS, _CORRECTIVES, _SUPPORT, _VALUES, _NOISE = range(8)


class SpecError(ValueError):
    pass


def _ceil_frac(frac, n):
    return max(1, min(n, math.ceil(frac * n - _CEIL_SLACK)))


@dataclass(frozen=True)
class SynthSpec:
    n_vertices: int = 100
    n_blendshapes: int = 20
    n_pairs: int = 30
    locality: float = 0.2
    delta_scale: float = 0.05
    corrective_scale: float = 0.015
    sparsity: float = 0.25
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        n, m = self.n_vertices, self.n_blendshapes
        if int(n) != n or n < 1:
            raise SpecError(f"n_vertices must be a positive integer, got {n!r}")
        if int(m) != m or m < 1:
            raise SpecError(f"n_blendshapes must be a positive integer, got {m!r}")
        max_pairs = m * (m - 1) // 2
        if int(self.n_pairs) != self.n_pairs or not 0 <= self.n_pairs <= max_pairs:
            raise SpecError(
                f"n_pairs must be an integer in [0, {max_pairs}] for m={m}, "
                f"got {self.n_pairs!r}")
        for name in ("locality", "sparsity"):
            val = getattr(self, name)
            if not 0.0 < val <= 1.0:
                raise SpecError(f"{name} must lie in (0, 1], got {val!r}")
        for name in ("delta_scale", "corrective_scale"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise SpecError(f"{name} must be > 0, got {val!r}")
        if not (math.isfinite(self.noise_std) and self.noise_std >= 0):
            raise SpecError(f"noise_std must be >= 0, got {self.noise_std!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise SpecError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    @property
    def window(self) -> int:
        return _ceil_frac(self.locality, self.n_vertices)

    @property
    def n_active(self) -> int:
        return _ceil_frac(self.sparsity, self.n_blendshapes)

    def to_dict(self) -> dict:
        return asdict(self)


def _windows(spec):
    n, L = spec.n_vertices, spec.window
    rng = Stream(spec.seed, _WINDOWS)
    return [rng.below(n - L + 1) for _ in range(spec.n_blendshapes)]


def generate_model(spec: SynthSpec) -> BlendshapeModel:
    n, m, L = spec.n_vertices, spec.n_blendshapes, spec.window
    neutral = Stream(spec.seed, _NEUTRAL).symmetric(3 * n)

    starts = _windows(spec)
    deltas = np.zeros((3 * n, m))
    rng = Stream(spec.seed, _DELTAS)
    for i, a in enumerate(starts):
        deltas[3 * a:3 * (a + L), i] = spec.delta_scale * rng.symmetric(3 * L)

    overlap, disjoint = [], []
    for j in range(m):
        for k in range(j + 1, m):
            hit = starts[j] < starts[k] + L and starts[k] < starts[j] + L
            (overlap if hit else disjoint).append((j, k))
    rng = Stream(spec.seed, _PAIRS)
    chosen = [overlap[i] for i in rng.shuffled(len(overlap))][:spec.n_pairs]
    rest = spec.n_pairs - len(chosen)
    if rest > 0:
        chosen += [disjoint[i] for i in rng.shuffled(len(disjoint))][:rest]
    chosen.sort()

    rng = Stream(spec.seed, _CORRECTIVES)
    pairs = []
    for j, k in chosen:
        lo, hi = max(starts[j], starts[k]), min(starts[j], starts[k]) + L
        if lo < hi:
            support = np.arange(lo, hi)
        else:
            support = np.union1d(np.arange(starts[j], starts[j] + L),
                                 np.arange(starts[k], starts[k] + L))
        coords = (3 * support[:, None] + np.arange(3)).ravel()
        offsets = np.zeros(3 * n)
        offsets[coords] = spec.corrective_scale * rng.symmetric(coords.size)
        pairs.append((j, k, offsets))
    return BlendshapeModel(neutral, deltas, pairs)


def generate_target(model: BlendshapeModel, spec: SynthSpec):
    """Return ``(target, ground_truth_weights)`` for ``model``."""
    m = model.n_blendshapes
    k = _ceil_frac(spec.sparsity, m)
    support = sorted(Stream(spec.seed, _SUPPORT).shuffled(m)[:k])
    w = np.zeros(m)
    w[support] = 0.2 + 0.8 * Stream(spec.seed, _VALUES).uniform(k)
    target = evaluate_quadratic(model, w)
    if spec.noise_std > 0:
        target = target + spec.noise_std * Stream(spec.seed, _NOISE).normal(model.n_coords)
    return target, w
