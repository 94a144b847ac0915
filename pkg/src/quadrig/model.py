"""Rig data types and forward evaluation of linear and quadratic blendshape rigs.

Meshes are flat coordinate vectors of length ``3n``, vertex-major with xyz
interleaved: coordinate ``3*v + c`` is axis ``c`` of vertex ``v``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "BlendshapeModel",
    "CorrectivePair",
    "DimensionError",
    "FeasibilityError",
    "ModelError",
    "Violation",
    "check_target",
    "check_weights",
    "evaluate_linear",
    "evaluate_quadratic",
    "validate_model",
]


class ModelError(ValueError):
    """Raised when a rig violates its structural invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        more = len(self.violations) - 5
        if more > 0:
            lines += f"; ... {more} more"
        super().__init__(f"invalid blendshape model: {lines}")


class DimensionError(ValueError):
    """Raised when a vector does not match the dimensions of the rig."""


class FeasibilityError(ValueError):
    """Raised when a weight vector leaves the box [0, 1]^m."""


class CorrectivePair(NamedTuple):
    j: int
    k: int
    offsets: np.ndarray


@dataclass(frozen=True)
class Violation:
    kind: str
    location: str
    message: str

    def __str__(self):
        return f"{self.kind} at {self.location}: {self.message}"


def _frozen(a, ndim):
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False, repr=False)
class BlendshapeModel:
    """A quadratic blendshape rig.

    Parameters
    ----------
    neutral : array_like, shape (3n,)
        Resting mesh ``b_0``.
    deltas : array_like, shape (3n, m)
        Delta blendshape matrix ``B``; column ``i`` is ``b_i - b_0``.
    corrective_pairs : sequence of (j, k, offsets)
        Corrective offset fields, activated with weight ``w_j * w_k``.
        Stored sorted by ``(j, k)`` so that evaluation order does not depend
        on the order the caller supplied them in.

    Construction does not validate; use :func:`validate_model` or
    :meth:`check`. Arrays are copied and made read-only.
    """

    neutral: np.ndarray
    deltas: np.ndarray
    corrective_pairs: tuple

    def __init__(self, neutral, deltas, corrective_pairs: Sequence = ()):
        object.__setattr__(self, "neutral", _frozen(neutral, 1))
        object.__setattr__(self, "deltas", _frozen(deltas, 2))
        pairs = [
            CorrectivePair(int(j), int(k), _frozen(off, 1))
            for j, k, off in corrective_pairs
        ]
        # stable sort keeps duplicate entries in caller order for diagnostics
        pairs.sort(key=lambda p: (p.j, p.k))
        object.__setattr__(self, "corrective_pairs", tuple(pairs))

    @classmethod
    def from_absolute(cls, neutral, blendshapes, corrective_pairs=()):
        """Build a rig from absolute blendshape meshes (columns of ``blendshapes``)."""
        neutral = np.asarray(neutral, dtype=np.float64)
        deltas = np.asarray(blendshapes, dtype=np.float64) - neutral[:, None]
        return cls(neutral, deltas, corrective_pairs)

    @property
    def n_coords(self) -> int:
        return self.neutral.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.neutral.shape[0] // 3

    @property
    def n_blendshapes(self) -> int:
        return self.deltas.shape[1]

    @property
    def n_pairs(self) -> int:
        return len(self.corrective_pairs)

    @cached_property
    def pair_index(self) -> np.ndarray:
        """Integer array of shape (|P|, 2) holding ``(j, k)`` per corrective."""
        idx = np.array([(p.j, p.k) for p in self.corrective_pairs],
                       dtype=np.int64).reshape(-1, 2)
        idx.setflags(write=False)
        return idx

    @cached_property
    def corrective_matrix(self) -> np.ndarray:
        """Corrective offsets stacked as columns, shape (3n, |P|)."""
        if self.corrective_pairs:
            mat = np.column_stack([p.offsets for p in self.corrective_pairs])
        else:
            mat = np.zeros((self.n_coords, 0))
        mat.setflags(write=False)
        return mat

    def __repr__(self):
        return (f"BlendshapeModel(n_vertices={self.n_vertices}, "
                f"n_blendshapes={self.n_blendshapes}, n_pairs={self.n_pairs})")

    def check(self) -> "BlendshapeModel":
        violations = validate_model(self)
        if violations:
            raise ModelError(violations)
        return self


def validate_model(model: BlendshapeModel) -> list[Violation]:
    """Return every invariant violation of ``model``; an empty list means valid."""
    out = []
    n3 = model.neutral.shape[0]
    if n3 == 0 or n3 % 3:
        out.append(Violation("shape", "neutral",
                             f"length {n3} is not a positive multiple of 3"))
    rows, m = model.deltas.shape
    if rows != n3:
        out.append(Violation("shape", "deltas",
                             f"has {rows} rows, expected {n3}"))
    if m == 0:
        out.append(Violation("shape", "deltas", "has no blendshape columns"))

    seen = {}
    for idx, (j, k, off) in enumerate(model.corrective_pairs):
        loc = f"pair {idx} ({j},{k})"
        if j == k:
            out.append(Violation("duplicate-index", loc,
                                 "corrective pair repeats a blendshape index"))
        elif not 0 <= j < k < m:
            out.append(Violation("pair-index", loc,
                                 f"indices must satisfy 0 <= j < k < {m}"))
        if (j, k) in seen:
            out.append(Violation("duplicate-pair", loc,
                                 f"same pair as pair {seen[(j, k)]}"))
        else:
            seen[(j, k)] = idx
        if off.shape[0] != n3:
            out.append(Violation("shape", loc,
                                 f"offsets have length {off.shape[0]}, expected {n3}"))
        bad = np.flatnonzero(~np.isfinite(off))
        if bad.size:
            out.append(Violation("non-finite", f"{loc} offsets[{bad[0]}]",
                                 f"{bad.size} non-finite entries"))

    bad = np.flatnonzero(~np.isfinite(model.neutral))
    if bad.size:
        out.append(Violation("non-finite", f"neutral[{bad[0]}]",
                             f"{bad.size} non-finite entries"))
    bad = np.argwhere(~np.isfinite(model.deltas))
    if bad.size:
        r, c = bad[0]
        out.append(Violation("non-finite", f"deltas[{r}, {c}]",
                             f"{len(bad)} non-finite entries (first in row {r})"))
    return out


def check_weights(w, m: int) -> np.ndarray:
    """Coerce ``w`` to a float vector of length ``m`` inside [0, 1]^m."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != m:
        raise DimensionError(f"weight vector has shape {w.shape}, expected ({m},)")
    bad = np.flatnonzero(~(np.isfinite(w) & (w >= 0.0) & (w <= 1.0)))
    if bad.size:
        i = bad[0]
        raise FeasibilityError(f"weight {i} = {w[i]!r} is outside [0, 1]")
    return w


def check_target(target, model: BlendshapeModel) -> np.ndarray:
    target = np.asarray(target, dtype=np.float64)
    if target.ndim != 1 or target.shape[0] != model.n_coords:
        raise DimensionError(
            f"target has shape {target.shape}, expected ({model.n_coords},)")
    if not np.all(np.isfinite(target)):
        raise DimensionError("target contains non-finite coordinates")
    return target


def _as_weights(model, w):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != model.n_blendshapes:
        raise DimensionError(
            f"weight vector has shape {w.shape}, expected ({model.n_blendshapes},)")
    return w


def evaluate_linear(model: BlendshapeModel, w) -> np.ndarray:
    """Linear rig ``b_0 + B w``."""
    w = _as_weights(model, w)
    return model.neutral + model.deltas @ w


def evaluate_quadratic(model: BlendshapeModel, w) -> np.ndarray:
    """Quadratic rig ``b_0 + B w + sum_{(j,k)} w_j w_k b^{j,k}``."""
    out = evaluate_linear(model, w)
    if model.corrective_pairs:
        w = np.asarray(w, dtype=np.float64)
        idx = model.pair_index
        out = out + model.corrective_matrix @ (w[idx[:, 0]] * w[idx[:, 1]])
    return out
