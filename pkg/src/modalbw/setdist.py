"""Distances between finite subsets of the real line."""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError


def _points(a) -> np.ndarray:
    pts = np.asarray(getattr(a, "locations", a), dtype=float).ravel()
    if pts.size == 0:
        raise InvalidInputError("distance to an empty set is undefined")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("set contains non-finite points")
    return pts


def point_to_set(a, y: float) -> float:
    """Smallest |a_k - y| over the points of ``a``."""
    return float(np.min(np.abs(_points(a) - y)))


def directed_hausdorff(a, b) -> float:
    """max over p in a of the distance from p to b."""
    pa, pb = _points(a), _points(b)
    return float(np.max(np.min(np.abs(pa[:, None] - pb[None, :]), axis=1)))


def hausdorff(a, b) -> float:
    """Hausdorff distance between two finite non-empty sets."""
    pa, pb = _points(a), _points(b)
    d = np.abs(pa[:, None] - pb[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))
