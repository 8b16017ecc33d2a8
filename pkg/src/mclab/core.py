"""Shared domain types: modes, places, times, survey entities, and the
trip/tour context flags that feed the utility specification.

Everything here is immutable after construction and safe to read from any
number of workers.
"""

from __future__ import annotations

import datetime as dt
import enum
import functools
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from mclab.errors import ConfigError, ConsistencyError, UnrecognizedModeError
from mclab.geo import haversine_miles

SECONDS_PER_DAY = 86400
# Times run to 2 * 86400 so service past midnight stays on its service date.
MAX_SECONDS = 2 * SECONDS_PER_DAY


class Mode(enum.IntEnum):
    """The eight model alternatives, in canonical order."""

    WALK = 0
    BIKE = 1
    DRIVE = 2
    PASSENGER = 3
    CTA = 4
    PACE = 5
    HRAIL_SLOW = 6
    HRAIL_FAST = 7

    @property
    def label(self) -> str:
        return _MODE_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "Mode":
        try:
            return _LABEL_TO_MODE[label]
        except KeyError:
            raise ValueError(f"unknown mode label: {label!r}") from None

    @property
    def is_transit(self) -> bool:
        return self >= Mode.CTA


_MODE_LABELS = {
    Mode.WALK: "Walk",
    Mode.BIKE: "Bike",
    Mode.DRIVE: "Drive",
    Mode.PASSENGER: "Passenger",
    Mode.CTA: "CTA",
    Mode.PACE: "Pace",
    Mode.HRAIL_SLOW: "HRailSlowAccess",
    Mode.HRAIL_FAST: "HRailFastAccess",
}
_LABEL_TO_MODE = {label: mode for mode, label in _MODE_LABELS.items()}

MODES: tuple[Mode, ...] = tuple(Mode)
N_MODES = len(MODES)
TRANSIT_MODES: tuple[Mode, ...] = (Mode.CTA, Mode.PACE, Mode.HRAIL_SLOW, Mode.HRAIL_FAST)

# Survey code space. Keys are lowercased; values are the mapped Mode, None
# for codes excluded from the 8-alternative universe, or "metra" for the
# access-mode-dependent heavy rail split.
_SURVEY_CODES: dict[str, object] = {
    "auto / van / truck driver": Mode.DRIVE,
    "auto / van / truck passenger": Mode.PASSENGER,
    "cta bus": Mode.CTA,
    "cta train": Mode.CTA,
    "pace bus": Mode.PACE,
    "metra train": "metra",
    "walk": Mode.WALK,
    "bike": Mode.BIKE,
    "school bus": None,
    "taxi": None,
    "dial a ride/paratransit": None,
    "private shuttle bus": None,
    "other": None,
    "other (specify)": None,
    "local transit (nirpc region)": None,
    "more than one transit provider": None,
}
# Canonical labels are accepted as codes too, so generated fixtures can
# round-trip through the survey CSV format.
_SURVEY_CODES.update({label.lower(): mode for mode, label in _MODE_LABELS.items()})


def map_survey_mode(raw: str, drive_access: bool = False) -> Optional[Mode]:
    """Map a raw survey mode label to one of the 8 alternatives.

    Returns None for labels that are recognized but excluded from the model
    universe (school bus, taxi, paratransit, ...). Heavy rail maps to the
    slow-access alternative unless ``drive_access`` marks the record as
    drive-to-station.

    Raises:
        UnrecognizedModeError: the label is not in the survey code space.
    """
    try:
        mapped = _SURVEY_CODES[raw.strip().lower()]
    except KeyError:
        raise UnrecognizedModeError(raw) from None
    if mapped == "metra":
        return Mode.HRAIL_FAST if drive_access else Mode.HRAIL_SLOW
    return mapped


def survey_mode_or_none(raw: str, drive_access: bool = False) -> Optional[Mode]:
    """Like map_survey_mode but treats unknown codes as excluded."""
    try:
        return map_survey_mode(raw, drive_access)
    except UnrecognizedModeError:
        return None


class Purpose(enum.Enum):
    WORK = "Work"
    SHOP = "Shop"
    RETURN_HOME = "ReturnHome"
    OTHER = "Other"

    @classmethod
    def parse(cls, text: str) -> "Purpose":
        key = text.strip().lower().replace("_", "").replace(" ", "")
        return _PURPOSE_ALIASES.get(key, cls.OTHER)


_PURPOSE_ALIASES = {
    "work": Purpose.WORK,
    "shop": Purpose.SHOP,
    "shopping": Purpose.SHOP,
    "returnhome": Purpose.RETURN_HOME,
    "home": Purpose.RETURN_HOME,
    "other": Purpose.OTHER,
}


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float
    zone_id: Optional[str] = None

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude out of range: {self.lat}")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude out of range: {self.lon}")

    def distance_to(self, other: "GeoPoint") -> float:
        """Great-circle distance in miles."""
        return haversine_miles(self.lat, self.lon, other.lat, other.lon)


@functools.total_ordering
@dataclass(frozen=True)
class TimeStamp:
    """Calendar date plus seconds since that date's midnight.

    Seconds run to 2 * 86400 so a departure after midnight can stay on the
    service date it belongs to. Ordering is by absolute time, so
    (Mon, 90000) sorts after (Tue, 0) would not — it equals Tue 01:00.
    """

    date: dt.date
    sec: int

    def __post_init__(self):
        if not (0 <= self.sec < MAX_SECONDS):
            raise ValueError(f"seconds-since-midnight out of range: {self.sec}")

    @property
    def abs_sec(self) -> int:
        """Seconds since the proleptic-Gregorian epoch; total order key."""
        return self.date.toordinal() * SECONDS_PER_DAY + self.sec

    def weekday(self) -> int:
        """Weekday of the calendar (service) date; Monday is 0."""
        return self.date.weekday()

    @property
    def sec_of_day(self) -> int:
        return self.sec % SECONDS_PER_DAY

    def add_seconds(self, delta: int) -> "TimeStamp":
        total = self.abs_sec + delta
        date = dt.date.fromordinal(total // SECONDS_PER_DAY)
        return TimeStamp(date, total % SECONDS_PER_DAY)

    def to_datetime(self) -> dt.datetime:
        return dt.datetime.combine(self.date, dt.time()) + dt.timedelta(seconds=self.sec)

    def __lt__(self, other: "TimeStamp") -> bool:
        return self.abs_sec < other.abs_sec

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeStamp):
            return NotImplemented
        return self.abs_sec == other.abs_sec

    def __hash__(self) -> int:
        return hash(self.abs_sec)


@dataclass(frozen=True)
class Household:
    id: str
    home: GeoPoint
    n_members: int
    n_vehicles: int
    income: float

    def __post_init__(self):
        if self.n_members < 1:
            raise ValueError("household must have at least one member")
        if self.n_vehicles < 0 or self.income < 0:
            raise ValueError("vehicle count and income must be non-negative")


@dataclass(frozen=True)
class Person:
    id: str
    household_id: str
    age: int
    is_female: bool

    def __post_init__(self):
        if self.age < 0:
            raise ValueError("age must be non-negative")


@dataclass(frozen=True)
class Trip:
    id: str
    person_id: str
    origin: GeoPoint
    destination: GeoPoint
    depart: TimeStamp
    arrive: TimeStamp
    observed_mode: str
    purpose: Purpose
    drive_access: bool = False
    tour_id: Optional[str] = None
    leg_index: Optional[int] = None

    def __post_init__(self):
        if self.arrive < self.depart:
            raise ValueError(f"trip {self.id} arrives before it departs")
        if self.leg_index is not None and self.leg_index < 0:
            raise ValueError("leg_index must be non-negative")

    def observed(self) -> Optional[Mode]:
        """Observed mode mapped to the model universe (None if excluded)."""
        return map_survey_mode(self.observed_mode, self.drive_access)


@dataclass(frozen=True)
class Tour:
    """Ordered chain of trips; closed tours start and end at home."""

    id: str
    person_id: str
    trip_ids: tuple[str, ...]
    starts_at_home: bool
    is_closed: bool

    def __post_init__(self):
        if not self.trip_ids:
            raise ValueError("tour must contain at least one trip")

    @property
    def n_legs(self) -> int:
        return len(self.trip_ids)


@dataclass(frozen=True)
class ContextFlags:
    is_weekend: bool
    is_rush_hour: bool
    dest_cbd_rush: bool
    city_suburb_rush_in_tour: bool
    dest_within_walk: bool
    age_over_65: bool


@dataclass(frozen=True)
class FareRules:
    """Flat per-agency fare: base, discounted transfer, and the layover
    window within which the discount applies. Optional distance bands
    (sorted [max_miles, fare] pairs) override the base for heavy rail."""

    base: float
    transfer: float
    transfer_window_sec: int
    bands: tuple[tuple[float, float], ...] = ()

    def base_fare_for(self, distance_miles: float) -> float:
        for max_miles, fare in self.bands:
            if distance_miles <= max_miles:
                return fare
        return self.base


@dataclass(frozen=True)
class RegionConfig:
    """Region geography and thresholds used by the context flags.

    rush_windows are [start, end) second-of-day pairs; zone membership is
    explicit id lists (zones absent from city_zones count as suburbs).
    """

    rush_windows: tuple[tuple[int, int], ...] = ((6 * 3600, 9 * 3600), (16 * 3600, 19 * 3600))
    cbd_zones: frozenset[str] = frozenset()
    city_zones: frozenset[str] = frozenset()
    walk_threshold_miles: float = 0.75
    fares: dict[str, FareRules] = field(default_factory=dict)

    def in_rush(self, sec_of_day: int) -> bool:
        return any(start <= sec_of_day < end for start, end in self.rush_windows)

    def is_city(self, zone_id: Optional[str]) -> Optional[bool]:
        """True for city zones, False for suburb zones, None when unknown."""
        if zone_id is None:
            return None
        return zone_id in self.city_zones

    @classmethod
    def from_json(cls, path) -> "RegionConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "RegionConfig":
        try:
            windows = tuple((int(a), int(b)) for a, b in raw.get("rush_windows", [[21600, 32400], [57600, 68400]]))
            fares = {
                agency: FareRules(
                    base=float(entry["base"]),
                    transfer=float(entry.get("transfer", 0.0)),
                    transfer_window_sec=int(entry.get("transfer_window_sec", 0)),
                    bands=tuple((float(m), float(f)) for m, f in entry.get("bands", [])),
                )
                for agency, entry in raw.get("fares", {}).items()
            }
            return cls(
                rush_windows=windows,
                cbd_zones=frozenset(raw.get("cbd_zones", [])),
                city_zones=frozenset(raw.get("city_zones", [])),
                walk_threshold_miles=float(raw.get("walk_threshold_miles", 0.75)),
                fares=fares,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad region config: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "rush_windows": [list(w) for w in self.rush_windows],
            "cbd_zones": sorted(self.cbd_zones),
            "city_zones": sorted(self.city_zones),
            "walk_threshold_miles": self.walk_threshold_miles,
            "fares": {
                agency: {
                    "base": rules.base,
                    "transfer": rules.transfer,
                    "transfer_window_sec": rules.transfer_window_sec,
                    "bands": [list(b) for b in rules.bands],
                }
                for agency, rules in sorted(self.fares.items())
            },
        }


def context_flags(
    trip: Trip,
    tour: Tour,
    tour_trips: Sequence[Trip],
    person: Person,
    cfg: RegionConfig,
) -> ContextFlags:
    """Derive the per-trip context flags used by the utility specification.

    ``tour_trips`` are the tour's trips in leg order; ``trip`` must be one
    of them. The CBD-rush and city/suburb-rush flags are tour-level: every
    leg of a tour gets the same value.
    """
    if trip.id not in tour.trip_ids:
        raise ConsistencyError(f"trip {trip.id} is not part of tour {tour.id}")
    if len(tour_trips) != len(tour.trip_ids) or any(
        t.id != tid for t, tid in zip(tour_trips, tour.trip_ids)
    ):
        raise ConsistencyError(f"tour_trips do not match tour {tour.id}")

    dest_cbd_rush = False
    city_suburb_rush = False
    for leg in tour_trips:
        # "destination in the CBD in the rush hour": judged at arrival.
        if leg.destination.zone_id in cfg.cbd_zones and cfg.in_rush(leg.arrive.sec_of_day):
            dest_cbd_rush = True
        o_city = cfg.is_city(leg.origin.zone_id)
        d_city = cfg.is_city(leg.destination.zone_id)
        if o_city is not None and d_city is not None and o_city != d_city:
            if cfg.in_rush(leg.depart.sec_of_day):
                city_suburb_rush = True

    return ContextFlags(
        is_weekend=trip.depart.weekday() >= 5,
        is_rush_hour=cfg.in_rush(trip.depart.sec_of_day),
        dest_cbd_rush=dest_cbd_rush,
        city_suburb_rush_in_tour=city_suburb_rush,
        dest_within_walk=trip.origin.distance_to(trip.destination) <= cfg.walk_threshold_miles,
        age_over_65=person.age > 65,
    )


def ordered_trips(tour: Tour, trips_by_id) -> list[Trip]:
    """Tour legs resolved against a trip lookup, in leg order."""
    return [trips_by_id[tid] for tid in tour.trip_ids]


def known_survey_codes() -> Iterable[str]:
    """Lowercased labels accepted by map_survey_mode (for diagnostics)."""
    return sorted(_SURVEY_CODES)
