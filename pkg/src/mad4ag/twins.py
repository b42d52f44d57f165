"""Traveller categorization and twin-traveller search.

Devices carry five matching attributes (region, urban density, employment,
trip-distance class, commute class).  Survey participants are grouped
step-wise in that fixed order, subdividing only while a group keeps at least
``min_group`` members, and each device maps to the survey group matching its
longest available attribute prefix.  Within a group, matching probabilities
are fitted with IPF against commuting-type and sequence-type marginals, a
sample of participants is drawn proportional to those probabilities, and both
sides are paired by ascending average trip distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .debias import PersonProfile
from .ingestion import SurveyDiary

ATTR_ORDER = ("region", "urban_density", "employed", "trip_dist_class", "commute_class")


@dataclass(frozen=True)
class MatchThresholds:
    trip_km: float = 4.3
    commute_km: float = 7.9


@dataclass(frozen=True)
class SurveyPerson:
    """Matching view of one diary."""

    participant_id: str
    region: str
    urban_density: str
    employed: bool
    sequence: str
    has_other: bool
    has_work: bool
    avg_trip_km: float
    commute_km: float | None
    diary: SurveyDiary

    def commuting_type(self, thresholds: MatchThresholds) -> str:
        if not self.employed:
            return "none"
        km = self.commute_km if self.commute_km is not None else 0.0
        return "short" if km < thresholds.commute_km else "long"

    def attributes(self, thresholds: MatchThresholds) -> tuple:
        trip = "short" if self.avg_trip_km < thresholds.trip_km else "long"
        return (self.region, self.urban_density, self.employed, trip, self.commuting_type(thresholds))


def survey_person(diary: SurveyDiary) -> SurveyPerson:
    return SurveyPerson(
        participant_id=diary.participant_id,
        region=diary.region,
        urban_density=diary.urban_density,
        employed=diary.employed,
        sequence=diary.sequence,
        has_other=diary.has_other,
        has_work=diary.has_work,
        avg_trip_km=diary.avg_trip_km(),
        commute_km=diary.commute_km(),
        diary=diary,
    )


def device_attributes(profile: PersonProfile, thresholds: MatchThresholds) -> tuple:
    trip = "short" if profile.avg_trip_km < thresholds.trip_km else "long"
    if profile.employed:
        commute = "short" if (profile.commute_km or 0.0) < thresholds.commute_km else "long"
    else:
        commute = "none"
    return (profile.region, profile.urban_density, profile.employed, trip, commute)


def survey_medians(persons: list[SurveyPerson]) -> MatchThresholds:
    """Thresholds recomputed as medians of the loaded survey's distances."""
    trips = [p.avg_trip_km for p in persons]
    commutes = [p.commute_km for p in persons if p.commute_km is not None]
    return MatchThresholds(
        trip_km=float(np.median(trips)) if trips else 4.3,
        commute_km=float(np.median(commutes)) if commutes else 7.9,
    )


@dataclass(frozen=True)
class SurveyGroup:
    key: tuple
    depth: int
    members: tuple[SurveyPerson, ...]
    is_leaf: bool

    @property
    def name(self) -> str:
        return "/".join(str(v) for v in self.key) if self.key else "(all)"


def build_survey_groups(
    persons: list[SurveyPerson],
    min_group: int = 50,
    thresholds: MatchThresholds = MatchThresholds(),
) -> dict[tuple, SurveyGroup]:
    """Step-wise grouping tree; every node (internal and leaf) is retained so
    devices can fall back to an ancestor when their own level is absent."""
    groups: dict[tuple, SurveyGroup] = {}

    def split(key: tuple, members: list[SurveyPerson], depth: int) -> None:
        if depth == len(ATTR_ORDER) or len(members) < min_group:
            groups[key] = SurveyGroup(key, depth, tuple(members), True)
            return
        levels: dict[object, list[SurveyPerson]] = {}
        for p in members:
            levels.setdefault(p.attributes(thresholds)[depth], []).append(p)
        if len(levels) == 1 and None in levels:
            groups[key] = SurveyGroup(key, depth, tuple(members), True)
            return
        groups[key] = SurveyGroup(key, depth, tuple(members), False)
        for level in sorted(levels, key=str):
            split(key + (level,), levels[level], depth + 1)

    split((), sorted(persons, key=lambda p: p.participant_id), 0)
    return groups


def map_to_group(category: tuple, groups: dict[tuple, SurveyGroup]) -> SurveyGroup:
    """Deepest survey group whose key matches the device category's prefix."""
    key: tuple = ()
    for depth, value in enumerate(category):
        node = groups[key]
        if node.is_leaf:
            break
        child = key + (value,)
        if child not in groups:
            break
        key = child
    return groups[key]


@dataclass
class CategorizeResult:
    device_category: dict[str, tuple]
    device_group: dict[str, tuple]
    groups: dict[tuple, SurveyGroup]
    thresholds: MatchThresholds


def categorize(
    profiles: list[PersonProfile],
    diaries: list[SurveyDiary],
    min_group: int = 50,
    thresholds: MatchThresholds | None = None,
    threshold_mode: str = "fixed",
) -> CategorizeResult:
    """Attribute both populations and map every device to one survey group."""
    persons = [survey_person(d) for d in diaries]
    if threshold_mode == "survey_median":
        thresholds = survey_medians(persons)
    elif thresholds is None:
        thresholds = MatchThresholds()
    groups = build_survey_groups(persons, min_group, thresholds)
    device_category: dict[str, tuple] = {}
    device_group: dict[str, tuple] = {}
    for p in sorted(profiles, key=lambda x: x.device_id):
        cat = device_attributes(p, thresholds)
        device_category[p.device_id] = cat
        device_group[p.device_id] = map_to_group(cat, groups).key
    return CategorizeResult(device_category, device_group, groups, thresholds)


@dataclass(frozen=True)
class MatchTable:
    """Converged IPF masses over a group's participants.

    Each participant occupies a single (commuting type, sequence type) support
    cell, the natural structure when marginals are fitted over observed
    diaries; total mass equals the group size.
    """

    participants: tuple[str, ...]
    masses: np.ndarray
    converged: bool
    iterations: int

    def probabilities(self) -> np.ndarray:
        total = self.masses.sum()
        if total <= 0:
            return np.full(len(self.masses), 1.0 / len(self.masses))
        return self.masses / total


def group_marginals(group: SurveyGroup, thresholds: MatchThresholds) -> tuple[dict[str, float], dict[str, float]]:
    """Empirical commuting-type (D) and sequence-type (S) marginals of a group."""
    n = len(group.members)
    d: dict[str, float] = {}
    s: dict[str, float] = {}
    for p in group.members:
        d[p.commuting_type(thresholds)] = d.get(p.commuting_type(thresholds), 0.0) + 1.0 / n
        s[p.sequence] = s.get(p.sequence, 0.0) + 1.0 / n
    return d, s


def ipf_fit(
    row_of: list[str],
    col_of: list[str],
    d_marginal: dict[str, float],
    s_marginal: dict[str, float],
    init: np.ndarray | None = None,
    tol: float = 1e-9,
    max_iter: int = 200,
) -> tuple[np.ndarray, bool, int]:
    """Alternating row and column scaling plus total normalization over an
    arbitrary cell list.

    Cells whose row or column carries zero marginal mass are pinned at zero
    and the fit proceeds on the remaining support.  Returns unit-total masses,
    a convergence flag, and the iteration count.
    """
    n = len(row_of)
    if n == 0 or len(col_of) != n:
        raise ValueError("need matching, non-empty row and column assignments")
    rows = np.array(row_of)
    cols = np.array(col_of)
    d_target = np.array([d_marginal.get(k, 0.0) for k in rows])
    s_target = np.array([s_marginal.get(s, 0.0) for s in cols])
    active = (d_target > 0) & (s_target > 0)

    p = np.full(n, 1.0 / n) if init is None else np.asarray(init, dtype=float).copy()
    p[~active] = 0.0
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        prev = p.copy()
        for k in sorted(set(rows.tolist())):
            mask = (rows == k) & active
            tot = p[mask].sum()
            if tot > 0:
                p[mask] *= d_marginal.get(k, 0.0) / tot
        for s in sorted(set(cols.tolist())):
            mask = (cols == s) & active
            tot = p[mask].sum()
            if tot > 0:
                p[mask] *= s_marginal.get(s, 0.0) / tot
        total = p.sum()
        if total > 0:
            p /= total
        if np.max(np.abs(p - prev)) < tol:
            converged = True
            break
    return p, converged, iterations


def matching_probabilities(
    group: SurveyGroup,
    d_marginal: dict[str, float],
    s_marginal: dict[str, float],
    thresholds: MatchThresholds = MatchThresholds(),
    tol: float = 1e-9,
    max_iter: int = 200,
) -> MatchTable:
    """IPF over a group's participants, each occupying one
    (commuting type, sequence type) support cell."""
    members = group.members
    if not members:
        raise ValueError("cannot fit an empty group")
    k_of = [p.commuting_type(thresholds) for p in members]
    s_of = [p.sequence for p in members]
    p, converged, iterations = ipf_fit(k_of, s_of, d_marginal, s_marginal, tol=tol, max_iter=max_iter)
    return MatchTable(
        participants=tuple(m.participant_id for m in members),
        masses=p * len(members),
        converged=converged,
        iterations=iterations,
    )


@dataclass(frozen=True)
class TwinAssignment:
    device_id: str
    participant_id: str
    group_key: tuple


@dataclass
class AssignmentReport:
    swaps: int = 0
    unrepairable: int = 0


def _compatible(device: PersonProfile, person: SurveyPerson) -> bool:
    if person.has_other and not device.has_secondary:
        return False
    if person.has_work and device.work_location_id is None:
        return False
    return True


def assign_twins(
    devices: list[PersonProfile],
    group: SurveyGroup,
    table: MatchTable,
    rng: np.random.Generator,
    report: AssignmentReport | None = None,
) -> list[TwinAssignment]:
    """Sample one twin per device and pair by ascending average trip distance.

    Sampling is with replacement (survey groups are far smaller than device
    groups).  A repair pass swaps pairs that would hand an Other-containing
    diary to a device without secondary locations, or a Work-containing diary
    to a device without a workplace; when no swap works, the device takes the
    nearest-rank compatible participant directly.
    """
    if report is None:
        report = AssignmentReport()
    members = group.members
    probs = table.probabilities()
    n_dev = len(devices)
    picked = rng.choice(len(members), size=n_dev, replace=True, p=probs)

    dev_order = sorted(range(n_dev), key=lambda i: (devices[i].avg_trip_km, devices[i].device_id))
    slot_order = sorted(
        range(n_dev),
        key=lambda i: (members[picked[i]].avg_trip_km, members[picked[i]].participant_id, i),
    )
    pair_person = [int(picked[slot_order[i]]) for i in range(n_dev)]
    pair_device = [devices[dev_order[i]] for i in range(n_dev)]

    def violates(i: int) -> bool:
        return not _compatible(pair_device[i], members[pair_person[i]])

    for i in range(n_dev):
        if not violates(i):
            continue
        fixed = False
        for dist in range(1, n_dev):
            for j in (i - dist, i + dist):
                if 0 <= j < n_dev:
                    if _compatible(pair_device[i], members[pair_person[j]]) and _compatible(
                        pair_device[j], members[pair_person[i]]
                    ):
                        pair_person[i], pair_person[j] = pair_person[j], pair_person[i]
                        report.swaps += 1
                        fixed = True
                        break
            if fixed:
                break
        if not fixed:
            # fall back to the nearest-rank compatible participant in the group
            order = sorted(range(len(members)), key=lambda k: (members[k].avg_trip_km, members[k].participant_id))
            ranks = [k for k in order if _compatible(pair_device[i], members[k])]
            if not ranks:
                raise ValueError(
                    f"group {group.name} has no participant compatible with device {pair_device[i].device_id}"
                )
            target = pair_device[i].avg_trip_km
            nearest = min(ranks, key=lambda k: (abs(members[k].avg_trip_km - target), members[k].participant_id))
            pair_person[i] = nearest
            report.unrepairable += 1

    return [
        TwinAssignment(pair_device[i].device_id, members[pair_person[i]].participant_id, group.key)
        for i in range(n_dev)
    ]
