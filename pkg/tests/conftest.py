"""Shared fixtures: an authored mini transit feed, a hand-counted survey,
and small factories for building domain objects in tests."""

import csv
import datetime as dt
import math
import os

import numpy as np
import pytest

from mclab.core import FareRules, GeoPoint, Household, Person, Purpose, TimeStamp, Trip
from mclab.geo import EARTH_RADIUS_MILES

MILES_PER_DEG_LAT = EARTH_RADIUS_MILES * math.pi / 180.0

BASE_LAT = 41.9000
BASE_LON = -87.7000

WEDNESDAY = dt.date(2008, 3, 5)
SATURDAY = dt.date(2008, 3, 8)
SUNDAY = dt.date(2008, 3, 9)


def north_of(miles: float, lon: float = BASE_LON) -> GeoPoint:
    """A point exactly `miles` due north of the base point (haversine is
    exact along a meridian)."""
    return GeoPoint(BASE_LAT + miles / MILES_PER_DEG_LAT, lon)


def ts(date: dt.date, hhmm: str) -> TimeStamp:
    h, m = hhmm.split(":")
    return TimeStamp(date, int(h) * 3600 + int(m) * 60)


def write_feed_files(
    directory,
    stops=None,
    routes=None,
    trips=None,
    stop_times=None,
    calendar=None,
    fares="2.25,0.25,7200",
):
    """Write GTFS text files; arguments are lists of CSV row strings."""
    os.makedirs(directory, exist_ok=True)
    defaults = {
        "stops.txt": ["stop_id,stop_name,stop_lat,stop_lon"] + (stops or []),
        "routes.txt": ["route_id,route_type"] + (routes or []),
        "trips.txt": ["route_id,service_id,trip_id"] + (trips or []),
        "stop_times.txt": ["trip_id,arrival_time,departure_time,stop_id,stop_sequence"]
        + (stop_times or []),
        "calendar.txt": [
            "service_id,monday,tuesday,wednesday,thursday,friday,saturday,sunday,start_date,end_date"
        ]
        + (calendar or []),
    }
    if fares is not None:
        defaults["fares.txt"] = ["base_fare,transfer_fare,transfer_window_sec", fares]
    for name, lines in defaults.items():
        with open(os.path.join(directory, name), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return str(directory)


@pytest.fixture
def line_feed_dir(tmp_path):
    """Five stops due north at 0.0/0.5/1.0/1.5/2.0 miles, two routes.

    Route "north" runs s1->s5 twice on weekday mornings (08:00, 08:30,
    five minutes between stops); route "south" runs s5->s1 once at 09:00.
    Weekday-only service for 2008.
    """
    def stop_row(sid, miles):
        p = north_of(miles)
        return f"{sid},{sid},{p.lat!r},{p.lon!r}"

    return write_feed_files(
        tmp_path / "feed",
        stops=[stop_row("s1", 0.0), stop_row("s2", 0.5), stop_row("s3", 1.0),
               stop_row("s4", 1.5), stop_row("s5", 2.0)],
        routes=["north,3", "south,3"],
        trips=["north,wkd,n1", "north,wkd,n2", "south,wkd,v1"],
        stop_times=[
            "n1,08:00:00,08:00:00,s1,1", "n1,08:05:00,08:05:00,s2,2",
            "n1,08:10:00,08:10:00,s3,3", "n1,08:15:00,08:15:00,s4,4",
            "n1,08:20:00,08:20:00,s5,5",
            "n2,08:30:00,08:30:00,s1,1", "n2,08:35:00,08:35:00,s2,2",
            "n2,08:40:00,08:40:00,s3,3", "n2,08:45:00,08:45:00,s4,4",
            "n2,08:50:00,08:50:00,s5,5",
            "v1,09:00:00,09:00:00,s5,1", "v1,09:05:00,09:05:00,s4,2",
            "v1,09:10:00,09:10:00,s3,3", "v1,09:15:00,09:15:00,s2,4",
            "v1,09:20:00,09:20:00,s1,5",
        ],
        calendar=["wkd,1,1,1,1,1,0,0,20080101,20081231"],
    )


@pytest.fixture
def survey_dir(tmp_path):
    """Hand-counted survey fixture: 3 households, 5 persons, 12 valid trips.

    Includes one trip with a dangling person, one with missing coordinates,
    and one with non-positive duration; those three must be rejected.
    """
    d = tmp_path / "survey"
    os.makedirs(d)
    home = [(41.90, -87.70), (41.95, -87.72), (41.88, -87.65)]
    with open(d / "household.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["hh_id", "home_lat", "home_lon", "home_zone", "n_members", "n_vehicles", "income"])
        for i, (lat, lon) in enumerate(home, start=1):
            w.writerow([f"h{i}", lat, lon, f"z{i}", 2, 1, 60000])
    with open(d / "person.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["person_id", "hh_id", "age", "female"])
        rows = [("p1", "h1", 34, 1), ("p2", "h1", 36, 0), ("p3", "h2", 70, 1),
                ("p4", "h3", 25, 0), ("p5", "h3", 28, 1)]
        for row in rows:
            w.writerow(row)
    with open(d / "trip.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trip_id", "person_id", "o_lat", "o_lon", "o_zone", "d_lat", "d_lon",
                    "d_zone", "depart_date", "depart_sec", "arrive_sec", "mode", "purpose"])
        work = (41.92, -87.68)
        date = "2008-03-05"
        n = 0
        for pid, (hlat, hlon) in (("p1", home[0]), ("p2", home[0]), ("p3", home[1]),
                                  ("p4", home[2]), ("p5", home[2])):
            n += 1
            w.writerow([f"t{n}", pid, hlat, hlon, "za", work[0], work[1], "zb",
                        date, 28800, 30600, "Auto / Van / Truck Driver", "Work"])
            n += 1
            w.writerow([f"t{n}", pid, work[0], work[1], "zb", hlat, hlon, "za",
                        date, 61200, 63000, "Auto / Van / Truck Driver", "Other"])
        # two extra valid walk trips for p1
        w.writerow(["t11", "p1", home[0][0], home[0][1], "za", 41.905, -87.70, "zb",
                    date, 64800, 65700, "Walk", "Shop"])
        w.writerow(["t12", "p1", 41.905, -87.70, "zb", home[0][0], home[0][1], "za",
                    date, 66600, 67500, "Walk", "Other"])
        # rejects: dangling person, missing coordinate, non-positive duration
        w.writerow(["t13", "ghost", 41.9, -87.7, "za", 41.91, -87.69, "zb",
                    date, 30000, 31000, "Walk", "Other"])
        w.writerow(["t14", "p2", "", -87.7, "za", 41.91, -87.69, "zb",
                    date, 30000, 31000, "Walk", "Other"])
        w.writerow(["t15", "p3", 41.9, -87.7, "za", 41.91, -87.69, "zb",
                    date, 31000, 31000, "Walk", "Other"])
    return str(d)


def make_household(hh_id="h1", lat=BASE_LAT, lon=BASE_LON, n_members=2, n_vehicles=1,
                   income=60000.0, zone="z1"):
    return Household(id=hh_id, home=GeoPoint(lat, lon, zone), n_members=n_members,
                     n_vehicles=n_vehicles, income=income)


def make_person(pid="p1", hh_id="h1", age=35, female=False):
    return Person(id=pid, household_id=hh_id, age=age, is_female=female)


def make_trip(trip_id="t1", pid="p1", origin=None, destination=None, date=WEDNESDAY,
              depart_sec=8 * 3600, arrive_sec=9 * 3600, mode="Walk",
              purpose=Purpose.OTHER, tour_id=None, leg_index=None):
    return Trip(
        id=trip_id, person_id=pid,
        origin=origin or GeoPoint(BASE_LAT, BASE_LON, "z1"),
        destination=destination or north_of(2.0),
        depart=TimeStamp(date, depart_sec), arrive=TimeStamp(date, arrive_sec),
        observed_mode=mode, purpose=purpose, tour_id=tour_id, leg_index=leg_index,
    )


def random_choice_data(rng: np.random.Generator, n: int, n_vars_used=3):
    """Random dense dataset for kernel and probability tests."""
    from mclab.mnl.data import VARIABLES, VAR_INDEX
    x = np.zeros((n, 8, len(VARIABLES)))
    x[:, :, VAR_INDEX["travel_time"]] = rng.uniform(0.05, 2.0, (n, 8))
    x[:, :, VAR_INDEX["fare"]] = rng.uniform(0.0, 5.0, (n, 8))
    x[:, :, VAR_INDEX["transfers"]] = rng.integers(0, 3, (n, 8))
    avail = rng.random((n, 8)) < 0.7
    avail[np.arange(n), rng.integers(0, 8, n)] = True
    chosen = np.array([rng.choice(np.nonzero(a)[0]) for a in avail])
    return x, avail, chosen


def simple_table(values=(-2.0, -1.5, -0.4)):
    from mclab.core import Mode
    from mclab.mnl.spec import CoefficientTable, Parameter
    street = tuple((m, "travel_time") for m in (Mode.WALK, Mode.BIKE, Mode.DRIVE, Mode.PASSENGER))
    transit = tuple((m, "travel_time") for m in (Mode.CTA, Mode.PACE, Mode.HRAIL_SLOW, Mode.HRAIL_FAST))
    fare = tuple((m, "fare") for m in Mode)
    return CoefficientTable([
        Parameter("time_street", values[0], street),
        Parameter("time_transit", values[1], transit),
        Parameter("fare_all", values[2], fare),
    ])
