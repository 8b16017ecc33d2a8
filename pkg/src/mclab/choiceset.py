"""Resource constraints on top of the generated alternatives.

Three rules, applied in a fixed order so the removal log is deterministic:
NoService (router found no itinerary), VehicleInUse (household vehicles all
away at departure), TourLock (mode continuity within a tour). If a rule
removes the observed mode, the observation wins: the alternative is
re-inserted and the conflict is logged, never silently dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from mclab.altgen import Alternative
from mclab.core import (
    MODES,
    Household,
    Mode,
    Purpose,
    TimeStamp,
    Tour,
    Trip,
    survey_mode_or_none,
)
from mclab.errors import ConsistencyError, DegenerateChoiceSetError
from mclab.survey import Population

RULE_NO_SERVICE = "NoService"
RULE_VEHICLE_IN_USE = "VehicleInUse"
RULE_TOUR_LOCK = "TourLock"

END_OF_DAY_SEC = 2 * 86400  # open tours hold the vehicle through the travel day


@dataclass(frozen=True)
class BusyInterval:
    """A household vehicle away from home, tagged with who took it."""

    start_abs_sec: int
    end_abs_sec: int
    person_id: str
    tour_id: str

    def __post_init__(self):
        if self.end_abs_sec < self.start_abs_sec:
            raise ValueError("interval ends before it starts")

    def covers(self, abs_sec: int) -> bool:
        return self.start_abs_sec <= abs_sec < self.end_abs_sec


@dataclass
class VehicleTimeline:
    """Busy intervals of one household's vehicles.

    ``overrun`` flags instants where more vehicles are away than the
    household owns (recorded, not clipped).
    """

    household_id: str
    n_vehicles: int
    intervals: list[BusyInterval] = field(default_factory=list)
    overrun: bool = False

    def vehicles_away(self, at: TimeStamp, exclude_person: Optional[str] = None) -> int:
        t = at.abs_sec
        return sum(
            1
            for iv in self.intervals
            if iv.covers(t) and iv.person_id != exclude_person
        )


def vehicle_usage_timeline(household: Household, pop: Population) -> VehicleTimeline:
    """Busy intervals from tours whose first leg was driven.

    The vehicle is away from the first leg's departure until the tour
    returns home; open tours hold it through the end of the travel day.
    """
    timeline = VehicleTimeline(household_id=household.id, n_vehicles=household.n_vehicles)
    members = sorted(p.id for p in pop.persons_of_household(household.id))
    for pid in members:
        for tour in sorted(pop.tours_of_person(pid), key=lambda t: t.id):
            first = pop.trips[tour.trip_ids[0]]
            if survey_mode_or_none(first.observed_mode, first.drive_access) is not Mode.DRIVE:
                continue
            start = first.depart.abs_sec
            if tour.is_closed:
                end = pop.trips[tour.trip_ids[-1]].arrive.abs_sec
            else:
                end = first.depart.date.toordinal() * 86400 + END_OF_DAY_SEC
            timeline.intervals.append(
                BusyInterval(start_abs_sec=start, end_abs_sec=end, person_id=pid, tour_id=tour.id)
            )
    timeline.intervals.sort(key=lambda iv: (iv.start_abs_sec, iv.tour_id))

    if timeline.intervals:
        edges = sorted(
            {iv.start_abs_sec for iv in timeline.intervals}
            | {iv.end_abs_sec for iv in timeline.intervals}
        )
        for t in edges:
            away = sum(1 for iv in timeline.intervals if iv.covers(t))
            if away > household.n_vehicles:
                timeline.overrun = True
                break
    return timeline


def drive_available(
    person_id: str, depart: TimeStamp, timeline: VehicleTimeline, household: Household
) -> bool:
    """Whether a household vehicle is free at departure.

    The querying person's own intervals are excluded: their current tour
    must not count against them. Zero-vehicle households never drive.
    """
    if household.n_vehicles == 0:
        return False
    away = timeline.vehicles_away(depart, exclude_person=person_id)
    return away < household.n_vehicles


def tour_mode_constraint(
    tour: Tour, leg_index: int, prior_modes: Sequence[Optional[Mode]], is_return_home: bool
) -> set[Mode]:
    """Allowed modes for a leg given the modes already used in the tour.

    Leg 0 is unconstrained. Once a tour starts without the car, Drive is
    off the table for the rest of it. Once it starts with the car, the car
    must come home: return legs are Drive-only, intermediate legs allow a
    passenger escape hatch.
    """
    if leg_index < 0 or leg_index >= tour.n_legs:
        raise ConsistencyError(f"leg {leg_index} out of range for tour {tour.id}")
    if len(prior_modes) != leg_index:
        raise ConsistencyError(
            f"expected {leg_index} prior modes for leg {leg_index}, got {len(prior_modes)}"
        )
    if leg_index == 0:
        return set(MODES)
    first = prior_modes[0]
    if first is not Mode.DRIVE:
        return set(MODES) - {Mode.DRIVE}
    if is_return_home:
        return {Mode.DRIVE}
    return {Mode.DRIVE, Mode.PASSENGER}


@dataclass(frozen=True)
class ChoiceSet:
    """Final per-trip availability with the audit trail of removals."""

    trip_id: str
    alternatives: tuple[Alternative, ...]
    chosen: Optional[Mode]
    constraint_log: tuple[tuple[str, Mode], ...]
    repaired: bool = False

    def __post_init__(self):
        if len(self.alternatives) != len(MODES):
            raise ValueError("choice set must carry all 8 alternatives")
        if not any(a.available for a in self.alternatives):
            raise ValueError("choice set must keep at least one alternative")
        if self.chosen is not None and not self.alternatives[self.chosen].available:
            raise ValueError("chosen alternative must be available")

    @property
    def availability_mask(self) -> tuple[int, ...]:
        return tuple(int(a.available) for a in self.alternatives)

    def available_modes(self) -> list[Mode]:
        return [a.mode for a in self.alternatives if a.available]

    def to_record(self) -> dict:
        return {
            "trip_id": self.trip_id,
            "available": list(self.availability_mask),
            "chosen": int(self.chosen) if self.chosen is not None else None,
            "alternatives": {
                a.mode.label: a.attrs_dict() for a in self.alternatives if a.available
            },
            "constraint_log": [
                {"rule": rule, "mode": mode.label} for rule, mode in self.constraint_log
            ],
            "repaired": self.repaired,
        }


def form_choice_set(
    trip: Trip,
    alternatives: Sequence[Alternative],
    timeline: VehicleTimeline,
    household: Household,
    tour: Tour,
    prior_modes: Sequence[Optional[Mode]],
) -> ChoiceSet:
    """Apply NoService, VehicleInUse, and TourLock to the 8 alternatives.

    Every removal is logged exactly once, in rule order. If the observed
    mode ends up removed, it is re-inserted (repaired=True) so the
    observation is never lost; the conflict stays in the log.

    Raises:
        DegenerateChoiceSetError: everything removed and no observed mode
            to repair with.
    """
    if len(alternatives) != len(MODES):
        raise ConsistencyError("expected one alternative per mode")
    if trip.leg_index is None or trip.tour_id != tour.id:
        raise ConsistencyError(f"trip {trip.id} does not belong to tour {tour.id}")

    available: dict[Mode, Alternative] = {}
    log: list[tuple[str, Mode]] = []

    for alt in alternatives:
        if alt.available:
            available[alt.mode] = alt
        else:
            log.append((RULE_NO_SERVICE, alt.mode))

    if Mode.DRIVE in available and not drive_available(
        trip.person_id, trip.depart, timeline, household
    ):
        del available[Mode.DRIVE]
        log.append((RULE_VEHICLE_IN_USE, Mode.DRIVE))

    allowed = tour_mode_constraint(
        tour, trip.leg_index, prior_modes, trip.purpose is Purpose.RETURN_HOME
    )
    for mode in MODES:
        if mode in available and mode not in allowed:
            del available[mode]
            log.append((RULE_TOUR_LOCK, mode))

    chosen = survey_mode_or_none(trip.observed_mode, trip.drive_access)
    repaired = False
    if chosen is not None and chosen not in available:
        source = alternatives[chosen]
        if source.available:
            available[chosen] = source
        else:
            # router produced no attributes; repair with a degenerate bundle
            available[chosen] = Alternative(
                mode=chosen, available=True, time_h=0.0, access_mi=0.0,
                egress_mi=0.0, transfers=0, fare=0.0,
            )
        repaired = True

    if not available:
        raise DegenerateChoiceSetError(trip.id, log)

    final = tuple(
        available[mode] if mode in available else Alternative.unavailable(mode)
        for mode in MODES
    )
    return ChoiceSet(
        trip_id=trip.id,
        alternatives=final,
        chosen=chosen,
        constraint_log=tuple(log),
        repaired=repaired,
    )
