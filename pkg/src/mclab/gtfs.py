"""Minimal GTFS reader and the spatial/temporal service queries the
alternative generator needs: stops near a point, departures in a window.

Only the static subset is supported: stops, routes, trips, stop_times,
calendar, and an optional flat fare file. calendar_dates exceptions,
frequencies, and shapes are out of scope.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
import os
from bisect import bisect_left, bisect_right
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from mclab.core import SECONDS_PER_DAY, FareRules, GeoPoint, TimeStamp
from mclab.errors import FeedError
from mclab.geo import EARTH_RADIUS_MILES

REQUIRED_FILES = ("stops.txt", "routes.txt", "trips.txt", "stop_times.txt", "calendar.txt")
FARE_FILE = "fares.txt"

WEEKDAY_COLUMNS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")


@dataclass(frozen=True)
class Stop:
    id: str
    name: str
    point: GeoPoint


@dataclass(frozen=True)
class Route:
    id: str
    route_type: int


@dataclass(frozen=True)
class TransitTrip:
    id: str
    route_id: str
    service_id: str


@dataclass(frozen=True)
class StopTime:
    trip_id: str
    stop_id: str
    arrival_sec: int
    departure_sec: int
    sequence: int


@dataclass(frozen=True)
class Service:
    id: str
    weekdays: tuple[bool, ...]  # Monday first
    start_date: dt.date
    end_date: dt.date


@dataclass(frozen=True)
class Departure:
    trip_id: str
    route_id: str
    stop_id: str
    departure: TimeStamp


@dataclass
class Feed:
    """Parsed feed plus the indexes the queries need.

    Immutable after parse; every query below is pure.
    """

    agency_id: str
    stops: dict[str, Stop]
    routes: dict[str, Route]
    trips: dict[str, TransitTrip]
    stop_times: dict[str, list[StopTime]]  # trip_id -> legs sorted by sequence
    calendar: dict[str, Service]
    fares: FareRules
    rejected_rows: Counter = field(default_factory=Counter)
    # stop_id -> (sorted departure_sec array, parallel StopTime list)
    _stop_departures: dict[str, tuple[list[int], list[StopTime]]] = field(default_factory=dict)
    # trip_id -> {stop_id: position in stop sequence}
    _trip_stop_pos: dict[str, dict[str, int]] = field(default_factory=dict)
    _stop_ids: list[str] = field(default_factory=list)
    _stop_lat_rad: Optional[np.ndarray] = None
    _stop_lon_rad: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self._stop_departures:
            per_stop: dict[str, list[StopTime]] = {}
            for trip_id in self.stop_times:
                for st in self.stop_times[trip_id]:
                    per_stop.setdefault(st.stop_id, []).append(st)
            for stop_id, sts in per_stop.items():
                sts.sort(key=lambda s: (s.departure_sec, s.trip_id, s.sequence))
                self._stop_departures[stop_id] = ([s.departure_sec for s in sts], sts)
        if not self._trip_stop_pos:
            for trip_id, sts in self.stop_times.items():
                self._trip_stop_pos[trip_id] = {st.stop_id: i for i, st in enumerate(sts)}
        self._stop_ids = list(self.stops)
        self._stop_lat_rad = np.array(
            [math.radians(self.stops[s].point.lat) for s in self._stop_ids], dtype=np.float64
        )
        self._stop_lon_rad = np.array(
            [math.radians(self.stops[s].point.lon) for s in self._stop_ids], dtype=np.float64
        )


def _parse_gtfs_time(text: str) -> Optional[int]:
    parts = text.strip().split(":")
    if len(parts) != 3:
        return None
    try:
        h, m, s = (int(p) for p in parts)
    except ValueError:
        return None
    if m < 0 or m > 59 or s < 0 or s > 59 or h < 0:
        return None
    return h * 3600 + m * 60 + s


def _format_gtfs_time(sec: int) -> str:
    return f"{sec // 3600:02d}:{(sec % 3600) // 60:02d}:{sec % 60:02d}"


def _parse_gtfs_date(text: str) -> Optional[dt.date]:
    text = text.strip()
    try:
        return dt.datetime.strptime(text, "%Y%m%d").date()
    except ValueError:
        return None


def _read_rows(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8-sig", newline="") as fh:
        return list(csv.DictReader(fh))


def parse_feed(
    directory: str,
    agency_id: Optional[str] = None,
    fallback_fares: Optional[FareRules] = None,
) -> Feed:
    """Parse a feed directory, enforcing the feed invariants.

    Unparseable or dangling rows are rejected and counted per file. Fares
    come from fares.txt when present, otherwise from ``fallback_fares``,
    otherwise a zero flat fare is used (recorded in rejected_rows under
    "fares.txt:defaulted").
    """
    for name in REQUIRED_FILES:
        if not os.path.isfile(os.path.join(directory, name)):
            raise FeedError(f"{directory}: missing required file {name}")

    rejected: Counter = Counter()

    def reject(name: str) -> None:
        rejected[name] += 1

    stops: dict[str, Stop] = {}
    for row in _read_rows(os.path.join(directory, "stops.txt")):
        sid = (row.get("stop_id") or "").strip()
        try:
            lat = float(row["stop_lat"])
            lon = float(row["stop_lon"])
        except (KeyError, TypeError, ValueError):
            reject("stops.txt")
            continue
        if not sid:
            reject("stops.txt")
            continue
        if sid in stops:
            raise FeedError(f"duplicate stop_id {sid!r}")
        try:
            point = GeoPoint(lat, lon)
        except ValueError:
            reject("stops.txt")
            continue
        stops[sid] = Stop(id=sid, name=(row.get("stop_name") or sid).strip(), point=point)

    routes: dict[str, Route] = {}
    for row in _read_rows(os.path.join(directory, "routes.txt")):
        rid = (row.get("route_id") or "").strip()
        if not rid:
            reject("routes.txt")
            continue
        if rid in routes:
            raise FeedError(f"duplicate route_id {rid!r}")
        try:
            rtype = int(row.get("route_type") or 3)
        except ValueError:
            rtype = 3
        routes[rid] = Route(id=rid, route_type=rtype)

    calendar: dict[str, Service] = {}
    for row in _read_rows(os.path.join(directory, "calendar.txt")):
        sid = (row.get("service_id") or "").strip()
        start = _parse_gtfs_date(row.get("start_date") or "")
        end = _parse_gtfs_date(row.get("end_date") or "")
        if not sid or start is None or end is None:
            reject("calendar.txt")
            continue
        if sid in calendar:
            raise FeedError(f"duplicate service_id {sid!r}")
        try:
            weekdays = tuple(row.get(day, "0").strip() == "1" for day in WEEKDAY_COLUMNS)
        except AttributeError:
            reject("calendar.txt")
            continue
        calendar[sid] = Service(id=sid, weekdays=weekdays, start_date=start, end_date=end)
    if not calendar:
        raise FeedError(f"{directory}: calendar.txt defines no service")

    trips: dict[str, TransitTrip] = {}
    for row in _read_rows(os.path.join(directory, "trips.txt")):
        tid = (row.get("trip_id") or "").strip()
        rid = (row.get("route_id") or "").strip()
        sid = (row.get("service_id") or "").strip()
        if not tid or rid not in routes or sid not in calendar:
            reject("trips.txt")
            continue
        if tid in trips:
            raise FeedError(f"duplicate trip_id {tid!r}")
        trips[tid] = TransitTrip(id=tid, route_id=rid, service_id=sid)

    stop_times: dict[str, list[StopTime]] = {}
    for row in _read_rows(os.path.join(directory, "stop_times.txt")):
        tid = (row.get("trip_id") or "").strip()
        sid = (row.get("stop_id") or "").strip()
        arr = _parse_gtfs_time(row.get("arrival_time") or "")
        dep = _parse_gtfs_time(row.get("departure_time") or "")
        try:
            seq = int(row.get("stop_sequence") or "")
        except ValueError:
            reject("stop_times.txt")
            continue
        if tid not in trips or sid not in stops or arr is None or dep is None or dep < arr:
            reject("stop_times.txt")
            continue
        if dep >= 2 * SECONDS_PER_DAY:
            reject("stop_times.txt")
            continue
        stop_times.setdefault(tid, []).append(
            StopTime(trip_id=tid, stop_id=sid, arrival_sec=arr, departure_sec=dep, sequence=seq)
        )
    for tid in stop_times:
        stop_times[tid].sort(key=lambda st: st.sequence)

    fares = None
    fare_path = os.path.join(directory, FARE_FILE)
    if os.path.isfile(fare_path):
        rows = _read_rows(fare_path)
        if rows:
            row = rows[0]
            try:
                fares = FareRules(
                    base=float(row["base_fare"]),
                    transfer=float(row.get("transfer_fare") or 0.0),
                    transfer_window_sec=int(row.get("transfer_window_sec") or 0),
                )
            except (KeyError, ValueError):
                reject(FARE_FILE)
    if fares is None:
        fares = fallback_fares
    if fares is None:
        fares = FareRules(base=0.0, transfer=0.0, transfer_window_sec=0)
        rejected["fares.txt:defaulted"] += 1

    return Feed(
        agency_id=agency_id or os.path.basename(os.path.normpath(directory)),
        stops=stops,
        routes=routes,
        trips=trips,
        stop_times=stop_times,
        calendar=calendar,
        fares=fares,
        rejected_rows=rejected,
    )


def write_feed(feed: Feed, directory: str) -> None:
    """Serialize the retained fields back to GTFS text files."""
    os.makedirs(directory, exist_ok=True)

    def dump(name: str, header: list[str], rows: list[list]) -> None:
        with open(os.path.join(directory, name), "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)

    dump(
        "stops.txt",
        ["stop_id", "stop_name", "stop_lat", "stop_lon"],
        [[s.id, s.name, repr(s.point.lat), repr(s.point.lon)] for s in
         (feed.stops[k] for k in sorted(feed.stops))],
    )
    dump(
        "routes.txt",
        ["route_id", "route_type"],
        [[r.id, r.route_type] for r in (feed.routes[k] for k in sorted(feed.routes))],
    )
    dump(
        "trips.txt",
        ["route_id", "service_id", "trip_id"],
        [[t.route_id, t.service_id, t.id] for t in (feed.trips[k] for k in sorted(feed.trips))],
    )
    st_rows = []
    for tid in sorted(feed.stop_times):
        for st in feed.stop_times[tid]:
            st_rows.append(
                [st.trip_id, _format_gtfs_time(st.arrival_sec), _format_gtfs_time(st.departure_sec),
                 st.stop_id, st.sequence]
            )
    dump("stop_times.txt", ["trip_id", "arrival_time", "departure_time", "stop_id", "stop_sequence"], st_rows)
    cal_rows = []
    for sid in sorted(feed.calendar):
        svc = feed.calendar[sid]
        cal_rows.append(
            [svc.id] + [int(b) for b in svc.weekdays]
            + [svc.start_date.strftime("%Y%m%d"), svc.end_date.strftime("%Y%m%d")]
        )
    dump(
        "calendar.txt",
        ["service_id"] + list(WEEKDAY_COLUMNS) + ["start_date", "end_date"],
        cal_rows,
    )
    dump(
        FARE_FILE,
        ["base_fare", "transfer_fare", "transfer_window_sec"],
        [[repr(feed.fares.base), repr(feed.fares.transfer), feed.fares.transfer_window_sec]],
    )


def service_active(feed: Feed, service_id: str, date: dt.date) -> bool:
    """Whether a service runs on the given calendar date."""
    svc = feed.calendar[service_id]
    return svc.start_date <= date <= svc.end_date and svc.weekdays[date.weekday()]


def stops_within(feed: Feed, point: GeoPoint, radius_miles: float) -> list[tuple[Stop, float]]:
    """Stops within the radius, nearest first (stop id breaks ties)."""
    if radius_miles < 0:
        raise ValueError("radius must be non-negative")
    if not feed.stops:
        return []
    lat = math.radians(point.lat)
    lon = math.radians(point.lon)
    dlat = feed._stop_lat_rad - lat
    dlon = feed._stop_lon_rad - lon
    a = np.sin(dlat / 2) ** 2 + math.cos(lat) * np.cos(feed._stop_lat_rad) * np.sin(dlon / 2) ** 2
    dist = 2 * EARTH_RADIUS_MILES * np.arcsin(np.sqrt(a))
    hits = [
        (feed.stops[feed._stop_ids[i]], float(dist[i]))
        for i in np.nonzero(dist <= radius_miles)[0]
    ]
    hits.sort(key=lambda pair: (pair[1], pair[0].id))
    return hits


def departures(feed: Feed, stop_id: str, window: tuple[TimeStamp, TimeStamp]) -> list[Departure]:
    """All departures at a stop inside the closed window, time-ordered.

    Honors the service calendar; since scheduled times may exceed 24h, a
    service date one day before the window can still produce departures
    inside it.
    """
    if stop_id not in feed.stops:
        raise KeyError(f"unknown stop {stop_id!r}")
    start, end = window
    if end < start:
        raise ValueError("window end precedes start")

    secs, stop_list = feed._stop_departures.get(stop_id, ([], []))
    out: list[Departure] = []
    day = start.date - dt.timedelta(days=1)
    while day <= end.date:
        day_base = day.toordinal() * SECONDS_PER_DAY
        lo = bisect_left(secs, start.abs_sec - day_base)
        hi = bisect_right(secs, end.abs_sec - day_base)
        if lo < hi:
            active_cache: dict[str, bool] = {}
            for st in stop_list[lo:hi]:
                service_id = feed.trips[st.trip_id].service_id
                active = active_cache.get(service_id)
                if active is None:
                    active = service_active(feed, service_id, day)
                    active_cache[service_id] = active
                if active:
                    out.append(
                        Departure(
                            trip_id=st.trip_id,
                            route_id=feed.trips[st.trip_id].route_id,
                            stop_id=stop_id,
                            departure=TimeStamp(day, st.departure_sec),
                        )
                    )
        day += dt.timedelta(days=1)
    out.sort(key=lambda d: (d.departure.abs_sec, d.trip_id))
    return out


def trip_stop_position(feed: Feed, trip_id: str, stop_id: str) -> Optional[int]:
    """Index of a stop within a trip's stop sequence, or None."""
    return feed._trip_stop_pos.get(trip_id, {}).get(stop_id)
