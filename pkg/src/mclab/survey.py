"""Survey ingest: CSV parsing with a rejection report, home-based tour
chaining, and the deterministic household-level train/test split.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Optional

from mclab.core import (
    GeoPoint,
    Household,
    Person,
    Purpose,
    TimeStamp,
    Tour,
    Trip,
    survey_mode_or_none,
)
from mclab.errors import SchemaError
from mclab.geo import METERS_PER_MILE

HOUSEHOLD_COLUMNS = ("hh_id", "home_lat", "home_lon", "home_zone", "n_members", "n_vehicles", "income")
PERSON_COLUMNS = ("person_id", "hh_id", "age", "female")
TRIP_COLUMNS = (
    "trip_id", "person_id", "o_lat", "o_lon", "o_zone", "d_lat", "d_lon", "d_zone",
    "depart_date", "depart_sec", "arrive_sec", "mode", "purpose",
)

DEFAULT_CHAIN_TOLERANCE_MILES = 300.0 / METERS_PER_MILE  # 300 m


@dataclass
class RejectionReport:
    """Counts of rows dropped during parsing and tour building, by reason."""

    households: int = 0
    persons: int = 0
    trips: int = 0
    reasons: Counter = field(default_factory=Counter)

    def add(self, kind: str, reason: str) -> None:
        setattr(self, kind, getattr(self, kind) + 1)
        self.reasons[reason] += 1

    def to_dict(self) -> dict:
        return {
            "households": self.households,
            "persons": self.persons,
            "trips": self.trips,
            "reasons": dict(sorted(self.reasons.items())),
        }


@dataclass
class Population:
    """Keyed survey entities with referential links intact.

    Immutable by convention after construction; tour building returns a new
    Population rather than mutating in place.
    """

    households: dict[str, Household]
    persons: dict[str, Person]
    trips: dict[str, Trip]
    tours: dict[str, Tour] = field(default_factory=dict)
    rejections: RejectionReport = field(default_factory=RejectionReport)

    def trips_of_person(self, person_id: str) -> list[Trip]:
        out = [t for t in self.trips.values() if t.person_id == person_id]
        out.sort(key=lambda t: (t.depart.abs_sec, t.id))
        return out

    def persons_of_household(self, hh_id: str) -> list[Person]:
        return [p for p in self.persons.values() if p.household_id == hh_id]

    def tours_of_person(self, person_id: str) -> list[Tour]:
        return [t for t in self.tours.values() if t.person_id == person_id]

    def tour_trips(self, tour: Tour) -> list[Trip]:
        return [self.trips[tid] for tid in tour.trip_ids]

    def household_of_trip(self, trip: Trip) -> Household:
        return self.households[self.persons[trip.person_id].household_id]


def _check_header(fieldnames, required, path) -> None:
    missing = [c for c in required if c not in (fieldnames or [])]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")


def _float_or_none(text: str) -> Optional[float]:
    text = (text or "").strip()
    if not text:
        return None
    try:
        return float(text)
    except ValueError:
        return None


def parse_survey(household_file, person_file, trip_file) -> Population:
    """Parse the three survey CSVs into a linked Population.

    Rows with missing coordinates, non-positive durations, or dangling
    foreign keys are dropped and counted in the rejection report. Unreadable
    files raise OSError; malformed headers raise SchemaError.
    """
    report = RejectionReport()

    households: dict[str, Household] = {}
    with open(household_file, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, HOUSEHOLD_COLUMNS, household_file)
        for row in reader:
            hh_id = row["hh_id"].strip()
            lat, lon = _float_or_none(row["home_lat"]), _float_or_none(row["home_lon"])
            if not hh_id or lat is None or lon is None:
                report.add("households", "household_missing_fields")
                continue
            if hh_id in households:
                report.add("households", "household_duplicate_id")
                continue
            try:
                households[hh_id] = Household(
                    id=hh_id,
                    home=GeoPoint(lat, lon, row["home_zone"].strip() or None),
                    n_members=int(row["n_members"]),
                    n_vehicles=int(row["n_vehicles"]),
                    income=float(row["income"]),
                )
            except (ValueError, TypeError):
                report.add("households", "household_invalid_values")

    persons: dict[str, Person] = {}
    with open(person_file, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, PERSON_COLUMNS, person_file)
        for row in reader:
            pid = row["person_id"].strip()
            hh_id = row["hh_id"].strip()
            if not pid or hh_id not in households:
                report.add("persons", "person_dangling_household")
                continue
            if pid in persons:
                report.add("persons", "person_duplicate_id")
                continue
            try:
                persons[pid] = Person(
                    id=pid,
                    household_id=hh_id,
                    age=int(row["age"]),
                    is_female=row["female"].strip() in ("1", "true", "True", "Y", "y"),
                )
            except (ValueError, TypeError):
                report.add("persons", "person_invalid_values")

    trips: dict[str, Trip] = {}
    with open(trip_file, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, TRIP_COLUMNS, trip_file)
        has_drive_access = "drive_access" in (reader.fieldnames or [])
        for row in reader:
            tid = row["trip_id"].strip()
            if not tid or tid in trips:
                report.add("trips", "trip_duplicate_or_blank_id")
                continue
            if row["person_id"].strip() not in persons:
                report.add("trips", "trip_dangling_person")
                continue
            coords = [_float_or_none(row[k]) for k in ("o_lat", "o_lon", "d_lat", "d_lon")]
            if any(c is None for c in coords):
                report.add("trips", "trip_missing_coordinates")
                continue
            try:
                depart_date = dt.date.fromisoformat(row["depart_date"].strip())
                depart_sec = int(row["depart_sec"])
                arrive_sec = int(row["arrive_sec"])
            except (ValueError, TypeError):
                report.add("trips", "trip_invalid_values")
                continue
            if arrive_sec <= depart_sec:
                report.add("trips", "trip_nonpositive_duration")
                continue
            try:
                trips[tid] = Trip(
                    id=tid,
                    person_id=row["person_id"].strip(),
                    origin=GeoPoint(coords[0], coords[1], row["o_zone"].strip() or None),
                    destination=GeoPoint(coords[2], coords[3], row["d_zone"].strip() or None),
                    depart=TimeStamp(depart_date, depart_sec),
                    arrive=TimeStamp(depart_date, arrive_sec),
                    observed_mode=row["mode"].strip(),
                    purpose=Purpose.parse(row["purpose"]),
                    drive_access=has_drive_access
                    and row.get("drive_access", "").strip() in ("1", "true", "True", "Y", "y"),
                )
            except ValueError:
                report.add("trips", "trip_invalid_values")

    return Population(households=households, persons=persons, trips=trips, rejections=report)


def build_tours(
    pop: Population, chain_tolerance_miles: float = DEFAULT_CHAIN_TOLERANCE_MILES
) -> Population:
    """Chain each person's trips into home-anchored tours.

    Maximal home-to-home chains become closed tours; chains that leave home
    and never return (or that start away from home) are retained as open
    tours so choice-set statistics still see them. Overlapping trips (next
    departs before the previous arrives) drop the later trip. Legs whose
    destination is home get purpose ReturnHome.
    """
    tours: dict[str, Tour] = {}
    new_trips: dict[str, Trip] = {}
    report = RejectionReport(
        households=pop.rejections.households,
        persons=pop.rejections.persons,
        trips=pop.rejections.trips,
        reasons=Counter(pop.rejections.reasons),
    )

    for pid in sorted(pop.persons):
        person = pop.persons[pid]
        home = pop.households[person.household_id].home
        seq = pop.trips_of_person(pid)

        cleaned: list[Trip] = []
        for trip in seq:
            if cleaned and trip.depart < cleaned[-1].arrive:
                report.add("trips", "trip_overlaps_previous")
                continue
            cleaned.append(trip)

        def near_home(point: GeoPoint) -> bool:
            return point.distance_to(home) <= chain_tolerance_miles

        chains: list[list[Trip]] = []
        current: list[Trip] = []
        for trip in cleaned:
            if current:
                chained = trip.origin.distance_to(current[-1].destination) <= chain_tolerance_miles
                if not chained or near_home(current[-1].destination):
                    chains.append(current)
                    current = []
            current.append(trip)
        if current:
            chains.append(current)

        for tour_seq, chain in enumerate(chains):
            tour_id = f"{pid}-t{tour_seq}"
            starts_at_home = near_home(chain[0].origin)
            is_closed = starts_at_home and near_home(chain[-1].destination)
            legs = []
            for k, trip in enumerate(chain):
                purpose = Purpose.RETURN_HOME if near_home(trip.destination) else trip.purpose
                legs.append(replace(trip, tour_id=tour_id, leg_index=k, purpose=purpose))
            tours[tour_id] = Tour(
                id=tour_id,
                person_id=pid,
                trip_ids=tuple(t.id for t in legs),
                starts_at_home=starts_at_home,
                is_closed=is_closed,
            )
            for trip in legs:
                new_trips[trip.id] = trip

    return Population(
        households=pop.households,
        persons=pop.persons,
        trips=new_trips,
        tours=tours,
        rejections=report,
    )


@dataclass(frozen=True)
class SplitAssignment:
    """Household-atomic train/test partition."""

    assignment: dict[str, str]  # hh_id -> "train" | "test"
    fraction: float
    seed: int

    def bucket(self, hh_id: str) -> str:
        return self.assignment[hh_id]

    def train_households(self) -> set[str]:
        return {h for h, b in self.assignment.items() if b == "train"}

    def test_households(self) -> set[str]:
        return {h for h, b in self.assignment.items() if b == "test"}

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "seed": self.seed,
            "assignment": dict(sorted(self.assignment.items())),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SplitAssignment":
        return cls(assignment=dict(raw["assignment"]), fraction=raw["fraction"], seed=raw["seed"])


def split_train_test(pop: Population, train_fraction: float, seed: int) -> SplitAssignment:
    """Deterministic seeded split at household granularity.

    Households are ranked by a seeded hash and the first round(n * fraction)
    go to the training bucket, so the realized fraction is as close to the
    target as integrality allows and the same seed always reproduces the
    same assignment.
    """
    if not (0.0 < train_fraction < 1.0):
        raise ValueError("train_fraction must be strictly between 0 and 1")

    def rank(hh_id: str) -> str:
        return hashlib.sha256(f"{seed}:{hh_id}".encode("utf-8")).hexdigest()

    ordered = sorted(pop.households, key=lambda h: (rank(h), h))
    n_train = round(len(ordered) * train_fraction)
    assignment = {h: ("train" if i < n_train else "test") for i, h in enumerate(ordered)}
    return SplitAssignment(assignment=assignment, fraction=train_fraction, seed=seed)


def estimation_trips(pop: Population) -> list[Trip]:
    """Trips eligible for model estimation: first leg of a closed home-based
    tour whose observed mode maps into the 8-alternative universe."""
    out = []
    for tour_id in sorted(pop.tours):
        tour = pop.tours[tour_id]
        if not (tour.is_closed and tour.starts_at_home):
            continue
        first = pop.trips[tour.trip_ids[0]]
        if survey_mode_or_none(first.observed_mode, first.drive_access) is None:
            continue
        out.append(first)
    return out


def write_survey_csvs(pop: Population, household_file, person_file, trip_file) -> None:
    """Serialize a Population back to the three survey CSVs (sorted ids)."""
    with open(household_file, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HOUSEHOLD_COLUMNS)
        for hh_id in sorted(pop.households):
            hh = pop.households[hh_id]
            w.writerow([
                hh.id, repr(hh.home.lat), repr(hh.home.lon), hh.home.zone_id or "",
                hh.n_members, hh.n_vehicles, repr(hh.income),
            ])
    with open(person_file, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PERSON_COLUMNS)
        for pid in sorted(pop.persons):
            p = pop.persons[pid]
            w.writerow([p.id, p.household_id, p.age, int(p.is_female)])
    with open(trip_file, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIP_COLUMNS + ("drive_access",))
        for tid in sorted(pop.trips):
            t = pop.trips[tid]
            w.writerow([
                t.id, t.person_id,
                repr(t.origin.lat), repr(t.origin.lon), t.origin.zone_id or "",
                repr(t.destination.lat), repr(t.destination.lon), t.destination.zone_id or "",
                t.depart.date.isoformat(), t.depart.sec, t.arrive.sec,
                t.observed_mode, t.purpose.value, int(t.drive_access),
            ])
