"""Residual quantities, the separable majoriser and its quartic coefficients.

At a feasible weight vector ``w`` each coordinate ``i`` of the data term,
as a function of an increment ``v``, is ``(g_i + h_i v + v^T D_i v)**2``
with

* ``g_i = f_Q(w)_i - target_i`` (the current residual),
* ``h_i = B_i + 2 w^T D_i`` (the residual's gradient row).

It is bounded above by

    psi_i(v) = g_i**2 + 2 g_i h_i.v
               + 2 (g_i lam_M(D_i, g_i) + |h_i|**2) |v|**2
               + 2 m sigma(D_i)**2 sum_j v_j**4

whose sum over coordinates separates over controllers into scalar quartics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import BlendshapeModel, check_target, check_weights
from .spectral import SpectralCache, lambda_M, select_lambda

__all__ = [
    "QuarticCoefficients",
    "ResidualState",
    "coefficients",
    "psi",
    "psi_component",
    "residual_state",
]


@dataclass(frozen=True, eq=False)
class ResidualState:
    g: np.ndarray
    h: np.ndarray
    h_row_sqnorms: np.ndarray
    at_weights: np.ndarray

    @property
    def data_fidelity(self) -> float:
        return float(self.g @ self.g)


@dataclass(frozen=True, eq=False)
class QuarticCoefficients:
    """Per-controller linear coefficients ``q`` and the shared ``r`` and ``s``.

    The constant ``sum(g**2)`` is left out; it does not move the minimiser.
    """

    q: np.ndarray
    r: float
    s: float

    def increment_value(self, v) -> float:
        """``psi(v) - psi(0)``, i.e. ``sum_j q_j v_j + r v_j**2 + s v_j**4``."""
        v = np.asarray(v, dtype=np.float64)
        v2 = v * v
        return float(np.sum(self.q * v + v2 * (self.r + self.s * v2)))


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


def residual_state(model: BlendshapeModel, cache: SpectralCache, w, target) -> ResidualState:
    """Residual ``g`` and gradient rows ``h`` at ``w``.

    The corrective part goes through the quadratic form rather than the
    pair list: ``h - B`` holds ``2 w^T D_i`` and ``w^T D_i w`` is half of
    its product with ``w``.
    """
    m = model.n_blendshapes
    w = check_weights(w, m)
    target = check_target(target, model)
    j, k = cache.pair_index[:, 0], cache.pair_index[:, 1]
    # scatter[p] puts w_k in column j and w_j in column k of pair p
    scatter = np.zeros((cache.pair_index.shape[0], m))
    rows = np.arange(scatter.shape[0])
    scatter[rows, j] = w[k]
    scatter[rows, k] += w[j]
    twice_wD = 2.0 * (cache.half_values @ scatter)
    h = model.deltas + twice_wD
    quad = 0.5 * (twice_wD @ w)
    g = model.neutral + model.deltas @ w + quad - target
    sq = np.einsum("ij,ij->i", h, h)
    w = w.copy()
    _freeze(g, h, sq, w)
    return ResidualState(g, h, sq, w)


def psi_component(state: ResidualState, cache: SpectralCache, i: int, v) -> float:
    """Coordinate-wise upper bound ``psi_i(v)``."""
    v = np.asarray(v, dtype=np.float64)
    g = float(state.g[i])
    m = cache.n_blendshapes
    sig = float(cache.sigma[i])
    vv = float(v @ v)
    return (g * g + 2.0 * g * float(state.h[i] @ v)
            + 2.0 * (g * lambda_M(cache, i, g) + float(state.h_row_sqnorms[i])) * vv
            + 2.0 * m * sig * sig * float(np.sum(v ** 4)))


def psi(state: ResidualState, cache: SpectralCache, v, alpha: float) -> float:
    """Full surrogate: sum of ``psi_i(v)`` over coordinates plus ``alpha * 1^T (w + v)``."""
    v = np.asarray(v, dtype=np.float64)
    g = state.g
    m = cache.n_blendshapes
    curv = g * select_lambda(cache, g) + state.h_row_sqnorms
    data = (g @ g + 2.0 * (g @ (state.h @ v)) + 2.0 * np.sum(curv) * (v @ v)
            + 2.0 * m * np.sum(cache.sigma ** 2) * np.sum(v ** 4))
    return float(data + alpha * np.sum(state.at_weights + v))


def coefficients(state: ResidualState, cache: SpectralCache, alpha: float) -> QuarticCoefficients:
    g = state.g
    m = cache.n_blendshapes
    q = 2.0 * (state.h.T @ g) + alpha
    r = 2.0 * float(np.sum(g * select_lambda(cache, g) + state.h_row_sqnorms))
    s = 2.0 * m * float(np.sum(cache.sigma ** 2))
    q.setflags(write=False)
    return QuarticCoefficients(q, r, s)
