"""Dense row-matrix helpers shared by mining, losses and evaluation.

Everything works in similarity space: for unit vectors the squared euclidean
distance is ``2 - 2 * dot(u, v)``, a strictly decreasing function of the
similarity, so any argmin over distance is an argmax over similarity.
"""
import numpy as np

from .errors import DomainError, ZeroRow

ZERO_NORM = 1e-12


def _as_float(m):
    m = np.asarray(m)
    if m.dtype == np.float32:
        return m
    return m.astype(np.float64, copy=False)


def row_norms(m):
    return np.sqrt(np.einsum("ij,ij->i", m, m))


def l2_normalize_rows(m):
    """Scale every row of ``m`` to unit L2 norm.

    float32 input stays float32 (fast path); anything else is promoted to
    float64.  Raises :class:`ZeroRow` for the first row whose norm is
    ``<= 1e-12``.
    """
    m = _as_float(m)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    norms = row_norms(m)
    bad = np.flatnonzero(norms <= ZERO_NORM)
    if bad.size:
        raise ZeroRow(int(bad[0]))
    return m / norms[:, None]


def cosine_similarity_matrix(e):
    """Pairwise dot products of unit rows, symmetric by construction."""
    e = _as_float(e)
    s = e @ e.T
    # mirror the upper triangle so S[i, j] == S[j, i] bit for bit
    iu = np.triu_indices(s.shape[0], k=1)
    s[(iu[1], iu[0])] = s[iu]
    return s


def cross_similarity(query, gallery):
    return _as_float(query) @ _as_float(gallery).T


def squared_distance_from_similarity(s):
    s_arr = np.asarray(s, dtype=np.float64)
    if np.any(np.abs(s_arr) > 1 + 1e-6):
        raise DomainError(f"similarity outside [-1, 1]: {s}")
    d2 = 2.0 - 2.0 * s_arr
    d2 = np.maximum(d2, 0.0)
    return float(d2) if d2.ndim == 0 else d2
