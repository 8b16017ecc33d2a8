"""Synthetic fixture generator.

Builds a square region with a city core, a CBD, three transit agencies,
and a seeded population whose observed modes are drawn from a supplied
coefficient table over the same constrained choice sets the pipeline will
later rebuild from the written files. Tours are simulated in household
start order, so vehicle competition during generation matches what the
pipeline reconstructs, and every routing result is recorded into a replay
cache.

Note: choices are drawn with the tour-level context flags zeroed, so truth
tables must not put weight on the CBD-rush or city/suburb-rush variables.
The shipped synthetic table does not.
"""

from __future__ import annotations

import datetime as dt
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from mclab.altgen import AltgenConfig, RoutingCache, generate_alternatives
from mclab.choiceset import BusyInterval, VehicleTimeline, form_choice_set
from mclab.core import (
    ContextFlags,
    FareRules,
    GeoPoint,
    Household,
    Mode,
    Person,
    Purpose,
    RegionConfig,
    TimeStamp,
    Tour,
    Trip,
)
from mclab.gtfs import Feed, Route, Service, Stop, StopTime, TransitTrip, write_feed
from mclab.mnl.data import observation_from_choice_set
from mclab.mnl.model import simulate_choice
from mclab.mnl.spec import CoefficientTable, load_table, save_table, synth_truth_path
from mclab.survey import DEFAULT_CHAIN_TOLERANCE_MILES, Population, write_survey_csvs

GRID_ZONES = 8
ZONE_MILES = 2.0
REGION_MILES = GRID_ZONES * ZONE_MILES
PARCEL_MILES = 0.5

LAT0 = 41.70
LON0 = -87.85
_MILES_PER_DEG_LAT = 69.05
_MILES_PER_DEG_LON = 69.17 * math.cos(math.radians(41.80))

WEEKDAY_DATES = (dt.date(2008, 3, 4), dt.date(2008, 3, 5), dt.date(2008, 4, 10))
WEEKEND_DATES = (dt.date(2008, 3, 8), dt.date(2008, 4, 13))

MARK_SEC = 600  # trip clocks land on 10-minute marks


def point_at(x_mi: float, y_mi: float) -> GeoPoint:
    return GeoPoint(
        LAT0 + y_mi / _MILES_PER_DEG_LAT,
        LON0 + x_mi / _MILES_PER_DEG_LON,
        zone_id=zone_of(x_mi, y_mi),
    )


def zone_of(x_mi: float, y_mi: float) -> str:
    r = min(GRID_ZONES - 1, max(0, int(y_mi // ZONE_MILES)))
    c = min(GRID_ZONES - 1, max(0, int(x_mi // ZONE_MILES)))
    return f"z{r}{c}"


def parcel_point(i: int, j: int) -> GeoPoint:
    return point_at(PARCEL_MILES * (i + 0.5), PARCEL_MILES * (j + 0.5))


def build_region_config() -> RegionConfig:
    cbd = {f"z{r}{c}" for r in (3, 4) for c in (3, 4)}
    city = {f"z{r}{c}" for r in range(2, 6) for c in range(2, 6)}
    return RegionConfig(cbd_zones=frozenset(cbd), city_zones=frozenset(city))


def _add_line(
    stops: dict[str, Stop],
    routes: dict[str, Route],
    trips: dict[str, TransitTrip],
    stop_times: dict[str, list[StopTime]],
    route_id: str,
    stop_defs: list[tuple[str, float, float]],
    service_ids: list[str],
    first_dep_sec: int,
    last_dep_sec: int,
    headway_sec: int,
    sec_per_mile: float,
    route_type: int,
) -> None:
    for sid, x, y in stop_defs:
        if sid not in stops:
            stops[sid] = Stop(id=sid, name=sid, point=point_at(x, y))
    routes[route_id] = Route(id=route_id, route_type=route_type)

    coords = [(x, y) for _, x, y in stop_defs]
    offsets = [0.0]
    for (x1, y1), (x2, y2) in zip(coords, coords[1:]):
        offsets.append(offsets[-1] + math.hypot(x2 - x1, y2 - y1))

    for service_id in service_ids:
        for direction, order in (("o", stop_defs), ("r", list(reversed(stop_defs)))):
            run = 0
            dep = first_dep_sec
            while dep <= last_dep_sec:
                trip_id = f"{route_id}-{service_id}-{direction}{run:03d}"
                trips[trip_id] = TransitTrip(id=trip_id, route_id=route_id, service_id=service_id)
                legs = []
                for seq, (sid, _, _) in enumerate(order, start=1):
                    offset = offsets[seq - 1] if direction == "o" else offsets[-1] - offsets[len(order) - seq]
                    t = dep + int(round(offset * sec_per_mile))
                    legs.append(StopTime(trip_id=trip_id, stop_id=sid, arrival_sec=t, departure_sec=t, sequence=seq))
                stop_times[trip_id] = legs
                dep += headway_sec
                run += 1


def _make_feed(agency: str, fares: FareRules, services: dict[str, Service], builder) -> Feed:
    stops: dict[str, Stop] = {}
    routes: dict[str, Route] = {}
    trips: dict[str, TransitTrip] = {}
    stop_times: dict[str, list[StopTime]] = {}
    builder(stops, routes, trips, stop_times)
    return Feed(
        agency_id=agency,
        stops=stops,
        routes=routes,
        trips=trips,
        stop_times=stop_times,
        calendar=dict(services),
        fares=fares,
    )


def build_feeds() -> dict[str, Feed]:
    """Three schedule fixtures: a city grid, a suburban ring, a radial line."""
    year = (dt.date(2008, 1, 1), dt.date(2008, 12, 31))
    weekday = Service(id="wk", weekdays=(True,) * 5 + (False, False), start_date=year[0], end_date=year[1])
    weekend = Service(id="we", weekdays=(False,) * 5 + (True, True), start_date=year[0], end_date=year[1])

    def cta(stops, routes, trips, stop_times):
        # 3x3 grid of city lines; every stop position appears on exactly
        # one line except the nine crossings, which share an id so the
        # one-transfer router can change lines there
        axes = (5.5, 8.0, 10.5)
        positions = (4.0, 5.5, 7.0, 8.0, 9.5, 10.5, 12.0)

        def sid(x, y):
            if x in axes and y in axes:
                return f"CX{axes.index(x)}{axes.index(y)}"
            return "C" + f"{x:.1f}x{y:.1f}".replace(".", "_")

        for i, x in enumerate(axes):
            defs = [(sid(x, y), x, y) for y in positions]
            _add_line(stops, routes, trips, stop_times, f"cta-ns{i}", defs,
                      ["wk", "we"], 5 * 3600, 22 * 3600 + 1800, 1800, 240.0, 1)
        for i, y in enumerate(axes):
            defs = [(sid(x, y), x, y) for x in positions]
            _add_line(stops, routes, trips, stop_times, f"cta-ew{i}", defs,
                      ["wk", "we"], 5 * 3600, 22 * 3600 + 1800, 1800, 240.0, 1)

    def pace(stops, routes, trips, stop_times):
        def corner(x, y):
            return {(2.0, 2.0): "PSW", (2.0, 14.0): "PNW", (14.0, 2.0): "PSE", (14.0, 14.0): "PNE"}.get((x, y))
        lines = {
            "pace-w": [(corner(2.0, float(y)) or f"PW{y}", 2.0, float(y)) for y in range(2, 15, 2)],
            "pace-e": [(corner(14.0, float(y)) or f"PE{y}", 14.0, float(y)) for y in range(2, 15, 2)],
            "pace-s": [(corner(float(x), 2.0) or f"PS{x}", float(x), 2.0) for x in range(2, 15, 2)],
            "pace-n": [(corner(float(x), 14.0) or f"PN{x}", float(x), 14.0) for x in range(2, 15, 2)],
        }
        for route_id, defs in lines.items():
            _add_line(stops, routes, trips, stop_times, route_id, defs,
                      ["wk"], 6 * 3600, 21 * 3600, 3600, 240.0, 3)

    def metra(stops, routes, trips, stop_times):
        defs = [(f"M{x}", float(x), 8.0) for x in range(0, 17, 2)]
        _add_line(stops, routes, trips, stop_times, "metra-main", defs,
                  ["wk", "we"], 5 * 3600 + 1800, 22 * 3600 + 1800, 3600, 150.0, 2)

    return {
        "CTA": _make_feed("CTA", FareRules(2.25, 0.25, 7200), {"wk": weekday, "we": weekend}, cta),
        "Pace": _make_feed("Pace", FareRules(1.75, 0.25, 7200), {"wk": weekday}, pace),
        "Metra": _make_feed("Metra", FareRules(3.25, 0.0, 0), {"wk": weekday, "we": weekend}, metra),
    }


def _mark(sec: int) -> int:
    return int(math.ceil(sec / MARK_SEC) * MARK_SEC)


Parcel = tuple[int, int]


@dataclass
class _TourPlan:
    person_id: str
    start_sec: int
    legs: list[tuple[Parcel, Parcel, Purpose, int]]  # (origin, destination, purpose, dwell_sec)
    truncate: bool = False
    seq: int = 0


@dataclass
class SynthSummary:
    households: int
    persons: int
    trips: int
    tours: int
    eligible_leg0: int
    mode_counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "households": self.households,
            "persons": self.persons,
            "trips": self.trips,
            "tours": self.tours,
            "eligible_leg0": self.eligible_leg0,
            "mode_counts": dict(sorted(self.mode_counts.items())),
        }


class _Simulator:
    def __init__(self, n_households: int, seed: int, truth: CoefficientTable):
        self.rng = np.random.default_rng(seed)
        self.truth = truth
        self.n_households = n_households
        self.feeds = build_feeds()
        self.region = build_region_config()
        self.altgen_cfg = AltgenConfig()
        self.cache = RoutingCache()
        self.fares = {agency: feed.fares for agency, feed in self.feeds.items()}

        self.households: dict[str, Household] = {}
        self.persons: dict[str, Person] = {}
        self.trips: dict[str, Trip] = {}
        self.n_tours = 0
        self.n_eligible = 0
        self.mode_counts: dict[str, int] = {}

        n_parcels = int(REGION_MILES / PARCEL_MILES)
        self.all_parcels = [(i, j) for i in range(n_parcels) for j in range(n_parcels)]
        city_lo, city_hi = int(4 / PARCEL_MILES), int(12 / PARCEL_MILES)
        self.city_parcels = [
            (i, j) for i, j in self.all_parcels if city_lo <= i < city_hi and city_lo <= j < city_hi
        ]
        city_set = set(self.city_parcels)
        self.suburb_parcels = [p for p in self.all_parcels if p not in city_set]

        def center(parcel):
            return (PARCEL_MILES * (parcel[0] + 0.5), PARCEL_MILES * (parcel[1] + 0.5))

        def near_ring(parcel):
            x, y = center(parcel)
            return min(abs(x - 2), abs(x - 14), abs(y - 2), abs(y - 14)) <= 1.0

        def near_rail(parcel):
            return abs(center(parcel)[1] - 8.0) <= 1.0

        self.ring_parcels = [p for p in self.suburb_parcels if near_ring(p)]
        self.rail_parcels = [p for p in self.suburb_parcels if near_rail(p)]
        self.work_pool = self._draw_pool(60, city_share=0.75)
        self.shop_pool = self._draw_pool(80, city_share=0.55)
        self.other_pool = self._draw_pool(120, city_share=0.5)
        self._points: dict[tuple[int, int], GeoPoint] = {}

    def _draw_pool(self, n: int, city_share: float) -> list[tuple[int, int]]:
        pool = []
        for _ in range(n):
            if self.rng.random() < city_share:
                src = self.city_parcels
            elif self.rng.random() < 0.6:
                src = self.ring_parcels  # suburban activity clusters sit near arterials
            else:
                src = self.suburb_parcels
            pool.append(src[int(self.rng.integers(len(src)))])
        return pool

    def point(self, parcel: tuple[int, int]) -> GeoPoint:
        if parcel not in self._points:
            self._points[parcel] = parcel_point(*parcel)
        return self._points[parcel]

    def _draw_household(self, idx: int) -> tuple[Household, list[Person], Parcel]:
        hh_id = f"h{idx:05d}"
        u = self.rng.random()
        if u < 0.55:
            src = self.city_parcels
        elif u < 0.72:
            src = self.ring_parcels
        elif u < 0.82:
            src = self.rail_parcels
        else:
            src = self.suburb_parcels
        home = src[int(self.rng.integers(len(src)))]
        n_members = int(self.rng.integers(1, 6))
        n_vehicles = int(self.rng.choice([0, 1, 2], p=[0.12, 0.5, 0.38]))
        income = float(np.round(self.rng.lognormal(mean=11.0, sigma=0.5), 0))
        household = Household(
            id=hh_id,
            home=self.point(home),
            n_members=n_members,
            n_vehicles=n_vehicles,
            income=min(income, 400000.0),
        )
        n_adults = 1 if n_members == 1 or self.rng.random() < 0.3 else 2
        persons = [
            Person(
                id=f"{hh_id}-p{k}",
                household_id=hh_id,
                age=int(self.rng.integers(18, 86)),
                is_female=bool(self.rng.random() < 0.5),
            )
            for k in range(n_adults)
        ]
        return household, persons, home

    def _plan_tours(self, persons: list[Person], home: Parcel) -> list[_TourPlan]:
        plans: list[_TourPlan] = []
        used_marks: set[int] = set()

        def draw_mark(lo_sec: int, hi_sec: int) -> int:
            for _ in range(30):
                mark = int(self.rng.integers(lo_sec // MARK_SEC, hi_sec // MARK_SEC + 1)) * MARK_SEC
                if mark not in used_marks:
                    used_marks.add(mark)
                    return mark
            used_marks.add(hi_sec)
            return hi_sec

        def pick(pool: list[tuple[int, int]]) -> tuple[int, int]:
            for _ in range(20):
                parcel = pool[int(self.rng.integers(len(pool)))]
                if parcel != home:
                    return parcel
            return self.city_parcels[0] if home != self.city_parcels[0] else self.city_parcels[1]

        def pick_near(pool: list[tuple[int, int]], max_cells: int = 3) -> tuple[int, int]:
            nearby = [
                p for p in pool
                if p != home and abs(p[0] - home[0]) <= max_cells and abs(p[1] - home[1]) <= max_cells
            ]
            if nearby:
                return nearby[int(self.rng.integers(len(nearby)))]
            i = min(max(home[0] + int(self.rng.integers(-2, 3)), 0), int(REGION_MILES / PARCEL_MILES) - 1)
            j = min(max(home[1] + int(self.rng.integers(-2, 3)), 0), int(REGION_MILES / PARCEL_MILES) - 1)
            return (i, j) if (i, j) != home else pick(pool)

        for person in persons:
            template = self.rng.choice(["W", "S", "O", "WS"], p=[0.4, 0.25, 0.2, 0.15])
            if template in ("W", "WS"):
                start = draw_mark(6 * 3600, 9 * 3600 + 1800)
            else:
                start = draw_mark(9 * 3600, 16 * 3600)
            activities: list[tuple[tuple[int, int], Purpose, int]] = []
            if template in ("W", "WS"):
                activities.append((pick(self.work_pool), Purpose.WORK, int(self.rng.integers(14, 19)) * 1800))
            if template in ("S", "WS"):
                shop = pick_near(self.shop_pool) if self.rng.random() < 0.4 else pick(self.shop_pool)
                activities.append((shop, Purpose.SHOP, int(self.rng.integers(4, 11)) * 600))
            if template == "O":
                other = pick_near(self.other_pool) if self.rng.random() < 0.3 else pick(self.other_pool)
                activities.append((other, Purpose.OTHER, int(self.rng.integers(3, 19)) * 600))

            chain: list[tuple[tuple[int, int], tuple[int, int], Purpose, int]] = []
            prev = home
            for dest, purpose, dwell in activities:
                chain.append((prev, dest, purpose, dwell))
                prev = dest
            chain.append((prev, home, Purpose.RETURN_HOME, 0))
            plan = _TourPlan(person_id=person.id, start_sec=start, legs=chain, seq=0)
            plan.truncate = bool(self.rng.random() < 0.03)
            plans.append(plan)

            if self.rng.random() < 0.35 and not plan.truncate:
                start2 = draw_mark(15 * 3600, 18 * 3600)
                dest2 = pick(self.shop_pool if self.rng.random() < 0.5 else self.other_pool)
                dwell2 = int(self.rng.integers(3, 10)) * 600
                plans.append(
                    _TourPlan(
                        person_id=person.id,
                        start_sec=start2,
                        legs=[(home, dest2, Purpose.OTHER, dwell2), (dest2, home, Purpose.RETURN_HOME, 0)],
                        seq=1,
                    )
                )
        return plans

    def _simulate_household(
        self, household: Household, persons: list[Person], home: Parcel, date: dt.date
    ) -> None:
        plans = self._plan_tours(persons, home)
        timeline = VehicleTimeline(household_id=household.id, n_vehicles=household.n_vehicles)
        finished_until: dict[str, int] = {p.id: 0 for p in persons}
        persons_by_id = {p.id: p for p in persons}

        pending = list(plans)
        while pending:
            pending.sort(key=lambda p: (p.start_sec, p.person_id, p.seq))
            plan = pending.pop(0)
            earliest = finished_until[plan.person_id]
            if plan.start_sec < earliest:
                plan.start_sec = _mark(earliest)
                if plan.start_sec > 19 * 3600:
                    continue  # day over; drop the tour
                pending.append(plan)
                continue
            end_sec = self._simulate_tour(household, persons_by_id[plan.person_id], plan, date, timeline)
            finished_until[plan.person_id] = end_sec + 1800

    def _simulate_tour(
        self,
        household: Household,
        person: Person,
        plan: _TourPlan,
        date: dt.date,
        timeline: VehicleTimeline,
    ) -> int:
        legs = plan.legs[:-1] if plan.truncate and len(plan.legs) > 1 else plan.legs
        tour_id = f"{person.id}-s{plan.seq}"
        trip_ids = tuple(f"{tour_id}-l{k}" for k in range(len(legs)))
        tour = Tour(
            id=tour_id,
            person_id=person.id,
            trip_ids=trip_ids,
            starts_at_home=True,
            is_closed=not plan.truncate,
        )

        depart_sec = plan.start_sec
        prior_modes: list[Mode] = []
        drove_leg0 = False
        last_arrive = depart_sec
        weekend = date.weekday() >= 5

        for k, (o_parcel, d_parcel, purpose, dwell) in enumerate(legs):
            if depart_sec >= 2 * 86400 - 7200:
                break
            origin = self.point(o_parcel)
            destination = self.point(d_parcel)
            depart = TimeStamp(date, depart_sec)
            # placeholder mode is outside the 8-alternative universe so the
            # observed-mode repair rule cannot touch the set we draw from
            trip = Trip(
                id=trip_ids[k],
                person_id=person.id,
                origin=origin,
                destination=destination,
                depart=depart,
                arrive=depart.add_seconds(60),
                observed_mode="Taxi",
                purpose=purpose,
                tour_id=tour_id,
                leg_index=k,
            )
            alternatives = generate_alternatives(
                trip, self.feeds, self.cache, self.altgen_cfg, self.fares, record_to=self.cache
            )
            choice_set = form_choice_set(trip, alternatives, timeline, household, tour, prior_modes)
            flags = ContextFlags(
                is_weekend=weekend,
                is_rush_hour=self.region.in_rush(depart_sec % 86400),
                dest_cbd_rush=False,
                city_suburb_rush_in_tour=False,
                dest_within_walk=origin.distance_to(destination) <= self.region.walk_threshold_miles,
                age_over_65=person.age > 65,
            )
            observation = observation_from_choice_set(
                choice_set, trip, household, person, flags, eligible=(k == 0)
            )
            mode = simulate_choice(observation, self.truth, self.rng)
            chosen_alt = choice_set.alternatives[mode]
            ride_sec = max(60, int(math.ceil(chosen_alt.time_h * 3600)))
            arrive_sec = min(depart_sec + ride_sec, 2 * 86400 - 1)

            self.trips[trip.id] = Trip(
                id=trip.id,
                person_id=person.id,
                origin=origin,
                destination=destination,
                depart=depart,
                arrive=TimeStamp(date, arrive_sec),
                observed_mode=mode.label,
                purpose=purpose,
                tour_id=tour_id,
                leg_index=k,
            )
            self.mode_counts[mode.label] = self.mode_counts.get(mode.label, 0) + 1
            prior_modes.append(mode)
            if k == 0:
                drove_leg0 = mode is Mode.DRIVE
                self.n_eligible += 1 if not plan.truncate else 0
            last_arrive = arrive_sec
            depart_sec = _mark(arrive_sec + dwell) if dwell else arrive_sec + dwell

        self.n_tours += 1
        if drove_leg0:
            day_base = date.toordinal() * 86400
            end = day_base + (last_arrive if not plan.truncate else 2 * 86400)
            timeline.intervals.append(
                BusyInterval(
                    start_abs_sec=day_base + plan.start_sec,
                    end_abs_sec=end,
                    person_id=person.id,
                    tour_id=tour_id,
                )
            )
        return last_arrive

    def run(self) -> None:
        for idx in range(self.n_households):
            household, persons, home = self._draw_household(idx)
            self.households[household.id] = household
            for p in persons:
                self.persons[p.id] = p
            date_pool = WEEKDAY_DATES if self.rng.random() < 0.78 else WEEKEND_DATES
            date = date_pool[int(self.rng.integers(len(date_pool)))]
            self._simulate_household(household, persons, home, date)


def synthesize(
    out_dir: str,
    n_households: int,
    seed: int,
    truth_path: str | None = None,
) -> SynthSummary:
    """Generate a complete pipeline fixture under ``out_dir``.

    Writes survey CSVs, three GTFS feed directories, the region config, a
    routing replay cache covering every (trip, mode) the simulation
    touched, the truth coefficient table, and a ready-to-run pipeline
    config.
    """
    truth = load_table(truth_path) if truth_path else load_table(synth_truth_path())
    sim = _Simulator(n_households=n_households, seed=seed, truth=truth)
    sim.run()

    os.makedirs(out_dir, exist_ok=True)
    survey_dir = os.path.join(out_dir, "survey")
    os.makedirs(survey_dir, exist_ok=True)
    population = Population(households=sim.households, persons=sim.persons, trips=sim.trips)
    write_survey_csvs(
        population,
        os.path.join(survey_dir, "household.csv"),
        os.path.join(survey_dir, "person.csv"),
        os.path.join(survey_dir, "trip.csv"),
    )

    gtfs_dirs = {}
    for agency, feed in sim.feeds.items():
        feed_dir = os.path.join(out_dir, "gtfs", agency.lower())
        write_feed(feed, feed_dir)
        gtfs_dirs[agency] = os.path.join("gtfs", agency.lower())

    with open(os.path.join(out_dir, "region.json"), "w", encoding="utf-8") as fh:
        json.dump(sim.region.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    sim.cache.dump(os.path.join(out_dir, "cache.jsonl"))
    save_table(truth, os.path.join(out_dir, "truth.json"))

    config = {
        "survey": {
            "household": "survey/household.csv",
            "person": "survey/person.csv",
            "trip": "survey/trip.csv",
        },
        "gtfs": gtfs_dirs,
        "region": "region.json",
        "cache": "cache.jsonl",
        "preset": "truth.json",
        "out": "out",
        "seed": seed,
        "split": {"fraction": 0.8, "seed": seed},
        "altgen": {},
        "estimation": {"max_iterations": 100},
        "chain_tolerance_miles": DEFAULT_CHAIN_TOLERANCE_MILES,
    }
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")

    summary = SynthSummary(
        households=len(sim.households),
        persons=len(sim.persons),
        trips=len(sim.trips),
        tours=sim.n_tours,
        eligible_leg0=sim.n_eligible,
        mode_counts=sim.mode_counts,
    )
    with open(os.path.join(out_dir, "synth_summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
