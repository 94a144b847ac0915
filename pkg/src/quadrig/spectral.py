"""Per-coordinate quadratic-form matrices of the corrective terms and their spectra.

For coordinate ``i`` the corrective part of the rig is ``w^T D_i w`` where
``D_i`` is symmetric with ``D_i[j, k] = D_i[k, j] = b_i^{j,k} / 2`` for every
corrective pair ``(j, k)`` and zero elsewhere (in particular on the
diagonal). The matrices are never stored densely; the cache keeps the
halved corrective values per coordinate plus the extreme eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .model import BlendshapeModel, ModelError, validate_model

__all__ = [
    "SpectralCache",
    "SpectralError",
    "assemble",
    "compute_spectra",
    "lambda_M",
    "select_lambda",
]

# Upper bound on the dense scratch tensor used for batched eigenvalues.
_CHUNK_BYTES = 64 * 2**20


class SpectralError(RuntimeError):
    """Eigenvalue computation failed; indicates a bug or corrupted input."""


@dataclass(frozen=True, eq=False, repr=False)
class SpectralCache:
    """The once-per-rig precompute, keyed by flat coordinate index.

    ``half_values[i, p]`` is ``D_i[j_p, k_p]`` for the ``p``-th corrective
    pair. Spectral fields are ``None`` until :func:`compute_spectra` runs.
    """

    n_blendshapes: int
    pair_index: np.ndarray
    half_values: np.ndarray
    lambda_min: Optional[np.ndarray] = None
    lambda_max: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None

    def __repr__(self):
        state = "computed" if self.has_spectra else "unset"
        return (f"SpectralCache(n_coords={self.n_coords}, "
                f"n_blendshapes={self.n_blendshapes}, "
                f"n_pairs={self.pair_index.shape[0]}, spectra={state})")

    @property
    def n_coords(self) -> int:
        return self.half_values.shape[0]

    @property
    def has_spectra(self) -> bool:
        return self.sigma is not None

    @property
    def active(self) -> np.ndarray:
        """Boolean mask of coordinates with a nonzero matrix."""
        return np.any(self.half_values != 0.0, axis=1)

    def matrix(self, i: int) -> np.ndarray:
        """Dense ``D_i`` (m x m)."""
        m = self.n_blendshapes
        D = np.zeros((m, m))
        j, k = self.pair_index[:, 0], self.pair_index[:, 1]
        D[j, k] = self.half_values[i]
        D[k, j] = self.half_values[i]
        return D

    def quadratic_form(self, v) -> np.ndarray:
        """``v^T D_i v`` for every coordinate ``i`` at once."""
        v = np.asarray(v, dtype=np.float64)
        j, k = self.pair_index[:, 0], self.pair_index[:, 1]
        return 2.0 * (self.half_values @ (v[j] * v[k]))


def assemble(model: BlendshapeModel) -> SpectralCache:
    """Collect the corrective terms into per-coordinate matrices (spectra unset)."""
    violations = validate_model(model)
    if violations:
        raise ModelError(violations)
    half = 0.5 * model.corrective_matrix
    half.setflags(write=False)
    return SpectralCache(model.n_blendshapes, model.pair_index, half)


def _eigen_extremes(cache, rows, involved):
    sub = {c: a for a, c in enumerate(involved)}
    j = np.array([sub[c] for c in cache.pair_index[:, 0]], dtype=np.int64)
    k = np.array([sub[c] for c in cache.pair_index[:, 1]], dtype=np.int64)
    d = len(involved)
    lo = np.empty(len(rows))
    hi = np.empty(len(rows))
    step = max(1, _CHUNK_BYTES // (8 * d * d))
    for start in range(0, len(rows), step):
        block = rows[start:start + step]
        D = np.zeros((len(block), d, d))
        vals = cache.half_values[block]
        D[:, j, k] = vals
        D[:, k, j] = vals
        try:
            ev = np.linalg.eigvalsh(D)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise SpectralError(f"eigenvalue iteration failed: {exc}") from exc
        lo[start:start + len(block)] = ev[:, 0]
        hi[start:start + len(block)] = ev[:, -1]
    return lo, hi


def compute_spectra(cache: SpectralCache) -> SpectralCache:
    """Fill ``lambda_min``, ``lambda_max`` and ``sigma`` for every coordinate.

    Only controllers that appear in some corrective pair can contribute a
    nonzero eigenvalue, so the eigenproblem is restricted to that block; the
    omitted rows and columns are zero and contribute eigenvalue 0, which the
    zero-trace block already brackets. ``sigma`` is the spectral norm, equal
    to ``max(|lambda_min|, |lambda_max|)`` for symmetric matrices.
    """
    n = cache.n_coords
    lam_min = np.zeros(n)
    lam_max = np.zeros(n)
    rows = np.flatnonzero(cache.active)
    if rows.size:
        involved = np.unique(cache.pair_index)
        lo, hi = _eigen_extremes(cache, rows, involved)
        # the diagonal is zero so the extremes bracket 0; clip rounding noise
        lam_min[rows] = np.minimum(lo, 0.0)
        lam_max[rows] = np.maximum(hi, 0.0)
    sigma = np.maximum(-lam_min, lam_max)
    for a in (lam_min, lam_max, sigma):
        a.setflags(write=False)
    return replace(cache, lambda_min=lam_min, lambda_max=lam_max, sigma=sigma)


def _require_spectra(cache):
    if not cache.has_spectra:
        raise ValueError("spectra not computed; call compute_spectra first")


def lambda_M(cache: SpectralCache, i: int, g: float) -> float:
    """Sign-dependent eigenvalue: ``lambda_min`` if ``g < 0`` else ``lambda_max``."""
    _require_spectra(cache)
    return float(cache.lambda_min[i] if g < 0 else cache.lambda_max[i])


def select_lambda(cache: SpectralCache, g) -> np.ndarray:
    """Vectorised :func:`lambda_M` over all coordinates."""
    _require_spectra(cache)
    return np.where(np.asarray(g) < 0, cache.lambda_min, cache.lambda_max)
