"""Linear-rig baselines: ridge closed form and sequential per-controller fitting.

Both regress the delta target ``target - b_0`` against the blendshape
matrix and ignore corrective terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import BlendshapeModel, check_target

__all__ = [
    "BaselineConfig",
    "BaselineError",
    "ClosedFormResult",
    "SequentialResult",
    "mean_abs_offset",
    "solve_closed_form",
    "solve_sequential",
]


class BaselineError(ValueError):
    pass


@dataclass(frozen=True)
class BaselineConfig:
    alpha: float = 0.0
    clamp: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise BaselineError(f"alpha must be >= 0, got {self.alpha!r}")


@dataclass(frozen=True, eq=False)
class ClosedFormResult:
    weights: np.ndarray
    raw: np.ndarray
    alpha: float
    clamped: bool


@dataclass(frozen=True, eq=False)
class SequentialResult:
    weights: np.ndarray
    order: tuple
    residual_norms: tuple


def solve_closed_form(model: BlendshapeModel, target,
                      config: BaselineConfig = BaselineConfig()) -> ClosedFormResult:
    """Ridge solution ``(B^T B + alpha I)^{-1} B^T (target - b_0)``.

    With ``clamp`` the solution is projected onto [0, 1]^m afterwards; the
    unprojected vector is kept in ``raw``.
    """
    target = check_target(target, model)
    B = model.deltas
    m = B.shape[1]
    gram = B.T @ B + config.alpha * np.eye(m)
    rhs = B.T @ (target - model.neutral)
    if config.alpha == 0 and np.linalg.matrix_rank(B) < m:
        raise BaselineError("B^T B is singular (rank-deficient blendshapes); use alpha > 0")
    try:
        raw = scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram), rhs)
    except np.linalg.LinAlgError as exc:
        raise BaselineError(f"normal equations are not positive definite: {exc}") from exc
    w = np.clip(raw, 0.0, 1.0) if config.clamp else raw.copy()
    return ClosedFormResult(w, raw, float(config.alpha), bool(config.clamp))


def mean_abs_offset(model: BlendshapeModel) -> np.ndarray:
    """Per-blendshape mean absolute coordinate offset, the visiting-order metric."""
    return np.mean(np.abs(model.deltas), axis=0)


def solve_sequential(model: BlendshapeModel, target) -> SequentialResult:
    """Visit controllers once, largest mean offset first, fitting each to the residual.

    Each step is the clamped 1-D projection
    ``clamp(db_i . res / |db_i|**2, 0, 1)`` followed by ``res -= w_i db_i``.
    Zero blendshapes keep weight 0. Ties in the metric go to the lower index.
    """
    target = check_target(target, model)
    B = model.deltas
    metric = mean_abs_offset(model)
    order = tuple(sorted(range(B.shape[1]), key=lambda i: (-metric[i], i)))
    res = target - model.neutral
    w = np.zeros(B.shape[1])
    norms = [float(np.linalg.norm(res))]
    for i in order:
        col = B[:, i]
        nrm2 = float(col @ col)
        if nrm2 > 0.0:
            w[i] = min(max(float(col @ res) / nrm2, 0.0), 1.0)
            res = res - w[i] * col
        norms.append(float(np.linalg.norm(res)))
    return SequentialResult(w, order, tuple(norms))
