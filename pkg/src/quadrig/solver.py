"""Majorization-minimization solver for the box-constrained quadratic inverse rig.

Minimises ``|f_Q(w) - target|**2 + alpha * sum(w)`` over ``w`` in [0, 1]^m.
Every outer iteration builds the separable surrogate at the current
weights, minimises each controller's bounded quartic independently from
the same frozen residual state, and applies all increments at once.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .model import (BlendshapeModel, check_target, check_weights,
                    evaluate_quadratic)
from .quartic import minimize_quartic
from .spectral import SpectralCache, assemble, compute_spectra
from .surrogate import ResidualState, coefficients, residual_state

__all__ = [
    "ConfigError",
    "FitReport",
    "SolverConfig",
    "cardinality",
    "inner_iteration",
    "objective",
    "solve",
]


class ConfigError(ValueError):
    pass


InitSpec = Union[str, float, np.ndarray]


@dataclass(frozen=True, eq=False)
class SolverConfig:
    """Solver settings.

    ``init`` is ``"zeros"``, a constant ``c`` in [0, 1] applied to every
    controller, or an explicit feasible weight vector (warm start).
    """

    alpha: float = 0.0
    max_iterations: int = 200
    tolerance: float = 1e-8
    init: InitSpec = "zeros"

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ConfigError(f"alpha must be >= 0, got {self.alpha!r}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ConfigError(
                f"max_iterations must be a positive integer, got {self.max_iterations!r}")
        if not (np.isfinite(self.tolerance) and self.tolerance > 0):
            raise ConfigError(f"tolerance must be > 0, got {self.tolerance!r}")
        init = self.init
        if isinstance(init, str):
            if init != "zeros":
                raise ConfigError(f"unknown init {init!r}")
        elif np.ndim(init) == 0:
            if not 0.0 <= float(init) <= 1.0:
                raise ConfigError(f"constant init must lie in [0, 1], got {init!r}")
        else:
            try:
                check_weights(init, len(init))
            except ValueError as exc:
                raise ConfigError(f"init weights: {exc}") from exc

    def initial_weights(self, m: int) -> np.ndarray:
        if isinstance(self.init, str):
            return np.zeros(m)
        if np.ndim(self.init) == 0:
            return np.full(m, float(self.init))
        try:
            return check_weights(self.init, m).copy()
        except ValueError as exc:
            raise ConfigError(f"init weights: {exc}") from exc

    def describe(self) -> dict:
        init = self.init
        if not isinstance(init, str):
            init = float(init) if np.ndim(init) == 0 else "given"
        return {"alpha": float(self.alpha), "max_iterations": int(self.max_iterations),
                "tolerance": float(self.tolerance), "init": init}


@dataclass(eq=False)
class FitReport:
    weights: np.ndarray
    objective_trace: list
    surrogate_gaps: list
    iterations_run: int
    converged: bool
    final_data_fidelity: float
    final_regularizer: float
    alpha: float
    precompute_seconds: float = 0.0
    solve_seconds: float = 0.0
    notes: list = field(default_factory=list)
    iterates: Optional[list] = None

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1]


def objective(model: BlendshapeModel, cache: Optional[SpectralCache], w, target,
              alpha: float) -> float:
    """``|f_Q(w) - target|**2 + alpha * sum(w)`` by forward evaluation.

    ``cache`` is accepted for signature symmetry with the surrogate
    functions and is not used.
    """
    w = check_weights(w, model.n_blendshapes)
    target = check_target(target, model)
    res = evaluate_quadratic(model, w) - target
    return float(res @ res + alpha * np.sum(w))


def cardinality(w, threshold: float = 1e-3) -> int:
    """Number of controllers with weight above ``threshold``."""
    return int(np.count_nonzero(np.asarray(w) > threshold))


def inner_iteration(model: BlendshapeModel, cache: SpectralCache, state: ResidualState,
                    w, alpha: float) -> np.ndarray:
    """One simultaneous pass over all controllers from a frozen residual state."""
    w = check_weights(w, model.n_blendshapes)
    return _increment(coefficients(state, cache, alpha), w)


def _increment(coef, w):
    r, s = coef.r, coef.s
    v = np.empty_like(w)
    for j in range(w.shape[0]):
        v[j], _ = minimize_quartic(coef.q[j], r, s, -w[j], 1.0 - w[j])
    return v


def _ensure_cache(model, cache):
    if cache is None:
        cache = assemble(model)
    if not cache.has_spectra:
        cache = compute_spectra(cache)
    if cache.n_coords != model.n_coords or cache.n_blendshapes != model.n_blendshapes:
        raise ValueError("spectral cache does not match the model dimensions")
    return cache


def solve(model: BlendshapeModel, cache: Optional[SpectralCache], target,
          config: SolverConfig = SolverConfig(), keep_iterates: bool = False) -> FitReport:
    """Run the outer MM loop.

    Stops when ``|psi(v) - psi(0)| < tolerance`` for the surrogate built at
    the iterate just left, or after ``max_iterations`` updates. The gap is
    evaluated in its separable form ``sum_j q_j v_j + r v_j**2 + s v_j**4``,
    which equals ``psi(v) - psi(0)`` without the cancellation of two large
    sums. ``objective_trace`` holds the true objective at ``w_0`` and after
    every update.

    If ``cache`` is None or lacks spectra it is computed here and the time
    spent is reported as ``precompute_seconds``.
    """
    t0 = time.perf_counter()
    cache = _ensure_cache(model, cache)
    target = check_target(target, model)
    t1 = time.perf_counter()

    alpha = float(config.alpha)
    w = config.initial_weights(model.n_blendshapes)
    trace = [objective(model, cache, w, target, alpha)]
    gaps = []
    iterates = [w.copy()] if keep_iterates else None
    notes = []
    converged = False
    iterations = 0
    for _ in range(int(config.max_iterations)):
        state = residual_state(model, cache, w, target)
        coef = coefficients(state, cache, alpha)
        v = _increment(coef, w)
        gap = coef.increment_value(v)
        # guards the box against rounding in w + (1 - w)
        w_next = np.clip(w + v, 0.0, 1.0)
        iterations += 1
        gaps.append(gap)
        stalled = not np.any(w_next != w)
        w = w_next
        trace.append(objective(model, cache, w, target, alpha))
        if keep_iterates:
            iterates.append(w.copy())
        if abs(gap) < config.tolerance:
            converged = True
            break
        if stalled:
            converged = True
            notes.append("stalled: zero increment while the surrogate gap "
                         "exceeded the tolerance")
            break
    if not converged:
        notes.append(f"iteration limit {config.max_iterations} reached")
    t2 = time.perf_counter()

    res = evaluate_quadratic(model, w) - target
    w.setflags(write=False)
    return FitReport(
        weights=w,
        objective_trace=trace,
        surrogate_gaps=gaps,
        iterations_run=iterations,
        converged=converged,
        final_data_fidelity=float(res @ res),
        final_regularizer=float(alpha * np.sum(w)),
        alpha=alpha,
        precompute_seconds=t1 - t0,
        solve_seconds=t2 - t1,
        notes=notes,
        iterates=iterates,
    )
