"""Joint ML detection of the active-antenna pattern and the symbols.

Under ZF precoding user ``k`` sees ``y = sqrt(E_k) U b + n`` with white
noise, so the ML decision minimises ``||y - sqrt(E_k) U b||^2`` over the
``n_c`` position matrices of its pattern set and all symbol vectors.
Because ``U`` selects distinct antennas the metric splits per antenna:
an active antenna costs ``|y_i - sqrt(E_k) c|^2`` with ``c`` the nearest
point, an inactive one costs ``|y_i|^2``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .modem import Constellation
from .patterns import PatternSet

__all__ = ["DetectionResult", "ml_detect", "ml_detect_batch", "ml_detect_exhaustive"]


@dataclass(frozen=True, eq=False)
class DetectionResult:
    pattern_index: int
    symbols: np.ndarray
    labels: np.ndarray
    metric: float


def ml_detect_batch(y: np.ndarray, e_k: float, pset: PatternSet, c: Constellation):
    """Vectorised ML detection of many received vectors.

    Parameters
    ----------
    y : ndarray, shape (n, n_r)
        Received vectors of one user, one per row.
    e_k : float
        Symbol energy of the user.
    pset : PatternSet
        Patterns the transmitter may have used.
    c : Constellation

    Returns
    -------
    pattern_index : ndarray of int, shape (n,)
    labels : ndarray of int, shape (n, n_iba)
        Constellation label values on the detected active antennas.
    metric : ndarray of float, shape (n,)
    """
    y = np.asarray(y, dtype=complex)
    if y.ndim != 2 or y.shape[1] != pset.n_r:
        raise ValueError(f"y must have shape (n, {pset.n_r}), got {y.shape}")
    if not e_k > 0:
        raise ValueError("e_k must be positive")
    amp = np.sqrt(e_k)
    best = c.nearest(y / amp)  # (n, n_r)
    active_cost = np.abs(y - amp * c.points[best]) ** 2
    idle_cost = np.abs(y) ** 2
    q = pset.matrix.astype(float)  # (n_r, n_c)
    metrics = active_cost @ q + idle_cost @ (1.0 - q)
    pattern_index = np.argmin(metrics, axis=1)
    labels = np.take_along_axis(best, pset.active_indices[pattern_index], axis=1)
    return pattern_index, labels, metrics[np.arange(len(y)), pattern_index]


def ml_detect(y, e_k: float, pset: PatternSet, c: Constellation) -> DetectionResult:
    y = np.asarray(y, dtype=complex)
    if y.shape != (pset.n_r,):
        raise ValueError(f"y must have length {pset.n_r}, got shape {y.shape}")
    idx, labels, metric = ml_detect_batch(y[None, :], e_k, pset, c)
    return DetectionResult(int(idx[0]), c.points[labels[0]], labels[0], float(metric[0]))


def ml_detect_exhaustive(y, e_k: float, pset: PatternSet, c: Constellation) -> DetectionResult:
    """Brute-force search over all ``n_c * M**n_iba`` candidates.

    Candidates are scored in (pattern index, symbol labels) lexicographic
    order and the first minimum wins.
    """
    y = np.asarray(y, dtype=complex)
    if y.shape != (pset.n_r,):
        raise ValueError(f"y must have length {pset.n_r}, got shape {y.shape}")
    labels = np.array(list(itertools.product(range(c.m), repeat=pset.n_iba)), dtype=np.intp)
    cand = np.zeros((pset.n_c, len(labels), pset.n_r), dtype=complex)
    for pi, pat in enumerate(pset):
        cand[pi][:, list(pat.active)] = np.sqrt(e_k) * c.points[labels]
    metrics = np.sum(np.abs(y - cand) ** 2, axis=-1).ravel()
    j = int(np.argmin(metrics))
    pi, li = divmod(j, len(labels))
    return DetectionResult(pi, c.points[labels[li]], labels[li], float(metrics[j]))
