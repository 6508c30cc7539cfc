"""Pareto-efficient (MOS, power) points.

Higher MOS is better, lower power is better. Fronts are built per
(device, codec) group with a descending-MOS sort and a running-minimum sweep
over power, after an optional neighborhood-count outlier filter.
"""
from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyInput, NoFeasiblePoint

log = logging.getLogger(__name__)

AT_LEAST = "at_least"
AT_MOST = "at_most"


@dataclass(frozen=True, slots=True)
class ParetoPoint:
    session_id: str
    mos: float
    watts: float
    efficient: bool = False


@dataclass(frozen=True)
class ParetoFront:
    group_key: tuple
    points: tuple[ParetoPoint, ...]
    _mos: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.points:
            raise EmptyInput("a Pareto front needs at least one point")
        for a, b in zip(self.points, self.points[1:]):
            if not (a.mos < b.mos and a.watts < b.watts):
                raise ValueError(f"front is not a strict staircase at {a} -> {b}")
        object.__setattr__(self, "_mos", tuple(p.mos for p in self.points))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def session_ids(self) -> frozenset:
        return frozenset(p.session_id for p in self.points)


@dataclass(frozen=True)
class OutlierRule:
    k: int = 5
    mos_eps: float = 0.1
    watts_eps: float | None = None  # None -> watts_eps_fraction of the group's power range
    watts_eps_fraction: float = 0.02

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("outlier k must be >= 0")
        if not self.mos_eps > 0:
            raise ValueError("mos_eps must be > 0")
        if self.watts_eps is not None and not self.watts_eps > 0:
            raise ValueError("watts_eps must be > 0")
        if not self.watts_eps_fraction > 0:
            raise ValueError("watts_eps_fraction must be > 0")

    def to_dict(self) -> dict:
        return {"k": self.k, "mos_eps": self.mos_eps, "watts_eps": self.watts_eps,
                "watts_eps_fraction": self.watts_eps_fraction}


def dominates(a: ParetoPoint, b: ParetoPoint) -> bool:
    return a.mos >= b.mos and a.watts <= b.watts and (a.mos > b.mos or a.watts < b.watts)


def _front_indices(mos: np.ndarray, watts: np.ndarray, ids: np.ndarray) -> np.ndarray:
    # descending MOS, then ascending watts, then ascending id (duplicate tie-break)
    order = np.lexsort((ids, watts, -mos))
    w = watts[order]
    prev_min = np.minimum.accumulate(np.concatenate(([np.inf], w[:-1])))
    keep = order[w < prev_min]
    return keep[::-1]


def pareto_front(points: Sequence[ParetoPoint], group_key: tuple = ()) -> ParetoFront:
    if len(points) == 0:
        raise EmptyInput("cannot build a Pareto front from no points")
    mos = np.fromiter((p.mos for p in points), dtype=float, count=len(points))
    watts = np.fromiter((p.watts for p in points), dtype=float, count=len(points))
    ids = np.array([p.session_id for p in points])
    idx = _front_indices(mos, watts, ids)
    front = tuple(ParetoPoint(points[i].session_id, points[i].mos, points[i].watts, True) for i in idx)
    return ParetoFront(tuple(group_key), front)


def default_watts_eps(watts: np.ndarray, fraction: float = 0.02) -> float:
    span = float(watts.max() - watts.min()) if len(watts) else 0.0
    return fraction * span if span > 0 else np.inf


def neighbor_counts_at_least(mos, watts, k: int, mos_eps: float, watts_eps: float) -> np.ndarray:
    """Boolean mask: does each point have >= k *other* points within the box?

    The box is ``|dmos| <= mos_eps and |dwatts| <= watts_eps``. Coordinates are
    scaled by the radii so the box becomes a unit Chebyshev ball; asking the
    tree for the k+1 nearest neighbors (self included) inside it answers the
    question without counting the whole neighborhood.
    """
    mos = np.asarray(mos, dtype=float)
    watts = np.asarray(watts, dtype=float)
    n = len(mos)
    if k == 0:
        return np.ones(n, dtype=bool)
    if n <= k:
        return np.zeros(n, dtype=bool)
    w_scaled = watts / watts_eps if np.isfinite(watts_eps) else np.zeros(n)
    coords = np.column_stack((mos / mos_eps, w_scaled))
    tree = cKDTree(coords)
    dist, _ = tree.query(coords, k=k + 1, p=np.inf, distance_upper_bound=np.nextafter(1.0, 2.0))
    return np.isfinite(dist).all(axis=1)


def filter_outliers(points: Sequence[ParetoPoint], k: int = 5, radius: tuple | None = None) -> list[ParetoPoint]:
    """Keep points with at least ``k`` other points in their (mos, watts) box.

    ``radius`` is ``(mos_eps, watts_eps)``; by default ``mos_eps = 0.1`` and
    ``watts_eps`` is 2 % of the group's power range.
    """
    if k == 0 or not points:
        return list(points)
    watts = np.fromiter((p.watts for p in points), dtype=float, count=len(points))
    mos = np.fromiter((p.mos for p in points), dtype=float, count=len(points))
    mos_eps, watts_eps = radius if radius is not None else (0.1, None)
    if watts_eps is None:
        watts_eps = default_watts_eps(watts)
    keep = neighbor_counts_at_least(mos, watts, k, mos_eps, watts_eps)
    return [p for p, ok in zip(points, keep) if ok]


def build_front(points: Sequence[ParetoPoint], rule: OutlierRule = OutlierRule(), group_key: tuple = ()) -> tuple[ParetoFront, dict]:
    """Outlier-filter then build a front, falling back to ``k = 0`` if nothing survives.

    Returns the front and a small info dict (how many points were dropped,
    whether the fallback fired) suitable for echoing into reports.
    """
    if not points:
        raise EmptyInput(f"group {group_key} has no points")
    watts = np.fromiter((p.watts for p in points), dtype=float, count=len(points))
    w_eps = rule.watts_eps if rule.watts_eps is not None else default_watts_eps(watts, rule.watts_eps_fraction)
    kept = filter_outliers(points, rule.k, (rule.mos_eps, w_eps))
    fallback = False
    if not kept:
        log.warning("group %s: outlier filter (k=%d) removed every point; falling back to k=0", group_key, rule.k)
        kept = list(points)
        fallback = True
    front = pareto_front(kept, group_key)
    info = {"n_points": len(points), "n_outliers": len(points) - len(kept), "fallback_k0": fallback,
            "watts_eps": float(w_eps) if np.isfinite(w_eps) else None, "front_size": len(front)}
    return front, info


def min_power_at_mos(front: ParetoFront, target: float, mode: str = AT_LEAST) -> ParetoPoint:
    target = float(target)
    if mode == AT_LEAST:
        i = bisect.bisect_left(front._mos, target)
        if i == len(front.points):
            raise NoFeasiblePoint(f"no front point with MOS >= {target} (max {front._mos[-1]})")
        return front.points[i]
    if mode == AT_MOST:
        i = bisect.bisect_right(front._mos, target)
        if i == 0:
            raise NoFeasiblePoint(f"no front point with MOS <= {target} (min {front._mos[0]})")
        return front.points[i - 1]
    raise ValueError(f"mode must be {AT_LEAST!r} or {AT_MOST!r}, not {mode!r}")


def efficiency_flags(points: Iterable[ParetoPoint], front: ParetoFront) -> list[bool]:
    ids = front.session_ids
    return [p.session_id in ids for p in points]
