"""Comparison metrics across plan sets: smoothed KL / Jensen-Shannon distance,
sequence shares, hourly participation curves, trip-distance statistics and the
home-count/population rank correlation.

Base-2 logarithms make the JS distance range exactly [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import stdtr

from .core import DegenerateRanks, SECONDS_PER_HOUR, hour_overlaps
from .plans import DailyPlan

ACTIVITY_TYPES = ("Home", "Work", "Other")


@dataclass(frozen=True)
class Distribution:
    labels: tuple[str, ...]
    masses: tuple[float, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.masses):
            raise ValueError("labels and masses must align")
        if any(m < 0 for m in self.masses):
            raise ValueError("masses must be non-negative")

    @staticmethod
    def from_counts(counts: dict[str, float]) -> "Distribution":
        labels = tuple(sorted(counts))
        total = sum(counts.values())
        if total <= 0:
            raise ValueError("distribution needs positive total mass")
        return Distribution(labels, tuple(counts[k] / total for k in labels))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.labels, self.masses))

    def top(self, k: int) -> "Distribution":
        order = sorted(range(len(self.labels)), key=lambda i: (-self.masses[i], self.labels[i]))[:k]
        return Distribution(
            tuple(self.labels[i] for i in order),
            tuple(self.masses[i] for i in order),
        )


def kl_generalized(p, q) -> float:
    """Smoothed KL in bits: sum of p*log2(p/q) - p + q on joint support,
    q where p is zero, and +inf where q vanishes under positive p."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("mass vectors must share a label set")
    if (p < 0).any() or (q < 0).any():
        raise ValueError("mass vectors must be non-negative")
    if ((p > 0) & (q == 0)).any():
        return math.inf
    total = 0.0
    both = (p > 0) & (q > 0)
    total += float(np.sum(p[both] * np.log2(p[both] / q[both]) - p[both] + q[both]))
    total += float(np.sum(q[p == 0]))
    return total


def _align(p: Distribution, q: Distribution) -> tuple[np.ndarray, np.ndarray]:
    labels = sorted(set(p.labels) | set(q.labels))
    pd, qd = p.as_dict(), q.as_dict()
    return (
        np.array([pd.get(k, 0.0) for k in labels]),
        np.array([qd.get(k, 0.0) for k in labels]),
    )


def js_distance(p, q) -> float:
    """sqrt of the averaged KL divergences to the midpoint distribution.

    Accepts aligned mass vectors or Distributions (aligned over the union of
    their supports, zeros filled in).
    """
    if isinstance(p, Distribution) and isinstance(q, Distribution):
        pv, qv = _align(p, q)
    else:
        pv = np.asarray(p, dtype=float)
        qv = np.asarray(q, dtype=float)
    ps, qs = pv.sum(), qv.sum()
    if ps <= 0 or qs <= 0:
        raise ValueError("distributions need positive mass")
    pv, qv = pv / ps, qv / qs
    m = (pv + qv) / 2.0
    val = (kl_generalized(pv, m) + kl_generalized(qv, m)) / 2.0
    return math.sqrt(max(0.0, val))


def sequence_shares(
    sequences: list[str],
    weights: list[float] | None = None,
) -> Distribution:
    """Weight-weighted share of each activity-sequence string."""
    if weights is None:
        weights = [1.0] * len(sequences)
    counts: dict[str, float] = {}
    for seq, w in zip(sequences, weights):
        counts[seq] = counts.get(seq, 0.0) + w
    return Distribution.from_counts(counts)


def plan_sequences(plans: list[DailyPlan]) -> list[str]:
    return [p.sequence for p in plans]


def hourly_participation(
    plans: list[DailyPlan],
    weights: dict[str, float] | None = None,
) -> dict[str, np.ndarray]:
    """Weighted share of persons in each activity type per clock hour.

    Plans tile the full day, so the three curves sum to one at every hour.
    """
    curves = {t: np.zeros(24) for t in ACTIVITY_TYPES}
    total = np.zeros(24)
    for plan in plans:
        w = 1.0 if weights is None else weights.get(plan.device_id, 0.0)
        if w <= 0:
            continue
        for e in plan.entries:
            ov = hour_overlaps(e.start_s, e.end_s) if e.end_s > e.start_s else np.zeros(24)
            curves[e.activity_type] += w * ov
            total += w * ov
    with np.errstate(invalid="ignore", divide="ignore"):
        return {t: np.where(total > 0, c / total, 0.0) for t, c in curves.items()}


def participation_distribution(curves: dict[str, np.ndarray]) -> Distribution:
    """Flatten participation curves into one (type, hour) distribution."""
    counts: dict[str, float] = {}
    for t in ACTIVITY_TYPES:
        for h in range(24):
            counts[f"{t}@{h:02d}"] = float(curves[t][h])
    return Distribution.from_counts(counts)


def weighted_quantile(values, weights, q: float) -> float:
    """Linear-interpolation quantile; equal weights reproduce the standard
    (n-1)-spaced definition."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.size == 0:
        raise ValueError("no values")
    order = np.argsort(values, kind="mergesort")
    v = values[order]
    w = weights[order]
    cum = np.cumsum(w)
    denom = cum[-1] - w[-1]
    if denom <= 0:
        return float(v[0])
    pos = (cum - w) / denom
    return float(np.interp(q, pos, v))


def trip_legs(plan: DailyPlan) -> list[tuple[float, bool]]:
    """(distance_km, is_commute) for each consecutive pair of plan entries."""
    from .core import GeoPoint, haversine_km

    out = []
    for a, b in zip(plan.entries, plan.entries[1:]):
        d = haversine_km(GeoPoint(a.lat, a.lon), GeoPoint(b.lat, b.lon))
        kinds = {a.activity_type, b.activity_type}
        out.append((d, kinds == {"Home", "Work"}))
    return out


def trip_stats(
    plans: list[DailyPlan],
    weights: dict[str, float] | None = None,
) -> dict[str, dict[str, float]]:
    """Weighted mean, median and 90th percentile of leg distances, overall and
    for commuting (adjacent Home-Work) legs."""
    dists, wts, commute_mask = [], [], []
    for plan in plans:
        w = 1.0 if weights is None else weights.get(plan.device_id, 0.0)
        if w <= 0:
            continue
        for d, is_commute in trip_legs(plan):
            dists.append(d)
            wts.append(w)
            commute_mask.append(is_commute)
    out: dict[str, dict[str, float]] = {}
    d_arr = np.array(dists)
    w_arr = np.array(wts)
    c_arr = np.array(commute_mask, dtype=bool)
    for name, mask in (("overall", np.ones(len(dists), dtype=bool)), ("commuting", c_arr)):
        if mask.any():
            dv, wv = d_arr[mask], w_arr[mask]
            out[name] = {
                "mean": float(np.average(dv, weights=wv)),
                "median": weighted_quantile(dv, wv, 0.5),
                "p90": weighted_quantile(dv, wv, 0.9),
            }
        else:
            out[name] = {"mean": math.nan, "median": math.nan, "p90": math.nan}
    return out


def _ranks(values: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) with ties sharing the mean rank."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> tuple[float, float]:
    """Rank correlation with average-rank ties and a two-sided t-approximate p."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 3:
        raise ValueError("need at least 3 paired observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateRanks("a constant vector has no rank ordering")
    rx, ry = _ranks(x), _ranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    rho = float(np.dot(rx, ry) / math.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))
    n = len(x)
    if abs(rho) >= 1.0:
        return rho, 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    p = 2.0 * float(stdtr(n - 2, -abs(t)))
    return rho, p
