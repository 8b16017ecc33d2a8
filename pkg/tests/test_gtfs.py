"""Feed parsing, service calendars, spatial and temporal queries."""

import datetime as dt
import os

import numpy as np
import pytest

from mclab.core import GeoPoint, TimeStamp
from mclab.errors import FeedError
from mclab.geo import haversine_miles
from mclab.gtfs import departures, parse_feed, service_active, stops_within, write_feed

from conftest import (
    BASE_LAT,
    BASE_LON,
    MILES_PER_DEG_LAT,
    SATURDAY,
    WEDNESDAY,
    north_of,
    ts,
    write_feed_files,
)


class TestParseFeed:
    def test_fixture_counts(self, line_feed_dir):
        feed = parse_feed(line_feed_dir)
        assert len(feed.stops) == 5
        assert len(feed.routes) == 2
        assert len(feed.trips) == 3
        assert sum(len(v) for v in feed.stop_times.values()) == 15

    def test_dangling_stop_time_rejected(self, tmp_path, line_feed_dir):
        with open(os.path.join(line_feed_dir, "stop_times.txt"), "a") as fh:
            fh.write("ghost_trip,10:00:00,10:00:00,s1,1\n")
        feed = parse_feed(line_feed_dir)
        assert feed.rejected_rows["stop_times.txt"] == 1
        assert sum(len(v) for v in feed.stop_times.values()) == 15

    def test_empty_calendar_is_error(self, tmp_path):
        d = write_feed_files(tmp_path / "feed2", stops=[f"s1,s1,{BASE_LAT},{BASE_LON}"],
                             routes=["r,3"], trips=[], stop_times=[], calendar=[])
        with pytest.raises(FeedError, match="no service"):
            parse_feed(d)

    def test_missing_required_file(self, tmp_path, line_feed_dir):
        os.remove(os.path.join(line_feed_dir, "calendar.txt"))
        with pytest.raises(FeedError, match="calendar.txt"):
            parse_feed(line_feed_dir)

    def test_duplicate_stop_id_is_error(self, tmp_path, line_feed_dir):
        with open(os.path.join(line_feed_dir, "stops.txt"), "a") as fh:
            fh.write(f"s1,dup,{BASE_LAT},{BASE_LON}\n")
        with pytest.raises(FeedError, match="duplicate"):
            parse_feed(line_feed_dir)

    def test_fares_parsed(self, line_feed_dir):
        feed = parse_feed(line_feed_dir)
        assert feed.fares.base == 2.25
        assert feed.fares.transfer == 0.25
        assert feed.fares.transfer_window_sec == 7200

    def test_departure_before_arrival_rejected(self, line_feed_dir):
        with open(os.path.join(line_feed_dir, "stop_times.txt"), "a") as fh:
            fh.write("n1,08:25:00,08:24:00,s5,6\n")
        feed = parse_feed(line_feed_dir)
        assert feed.rejected_rows["stop_times.txt"] == 1

    def test_round_trip(self, line_feed_dir, tmp_path):
        feed = parse_feed(line_feed_dir)
        out = tmp_path / "rt"
        write_feed(feed, str(out))
        again = parse_feed(str(out))
        assert again.stops == feed.stops
        assert again.routes == feed.routes
        assert again.trips == feed.trips
        assert again.stop_times == feed.stop_times
        assert again.calendar == feed.calendar
        assert again.fares == feed.fares


class TestServiceActive:
    def test_weekday_only_on_saturday(self, line_feed_dir):
        feed = parse_feed(line_feed_dir)
        assert not service_active(feed, "wkd", SATURDAY)

    def test_wednesday_in_range(self, line_feed_dir):
        feed = parse_feed(line_feed_dir)
        assert service_active(feed, "wkd", WEDNESDAY)

    def test_past_end_date(self, line_feed_dir):
        feed = parse_feed(line_feed_dir)
        assert not service_active(feed, "wkd", dt.date(2009, 1, 1))

    def test_unknown_service(self, line_feed_dir):
        feed = parse_feed(line_feed_dir)
        with pytest.raises(KeyError):
            service_active(feed, "nope", WEDNESDAY)


class TestStopsWithin:
    def test_degenerate_radius_at_stop(self, line_feed_dir):
        feed = parse_feed(line_feed_dir)
        p = feed.stops["s3"].point
        hits = stops_within(feed, GeoPoint(p.lat, p.lon), 0.0)
        assert [s.id for s, _ in hits] == ["s3"]
        assert hits[0][1] == 0.0

    def test_authored_distances(self, tmp_path):
        # stops at 0.2, 0.6, 1.4 miles; radius 1.0 keeps the first two
        def row(sid, miles):
            p = north_of(miles)
            return f"{sid},{sid},{p.lat!r},{p.lon!r}"

        d = write_feed_files(tmp_path / "feed3",
                             stops=[row("a", 0.2), row("b", 0.6), row("c", 1.4)],
                             routes=["r,3"], trips=["r,w,t1"],
                             stop_times=["t1,08:00:00,08:00:00,a,1"],
                             calendar=["w,1,1,1,1,1,1,1,20080101,20081231"])
        feed = parse_feed(d)
        hits = stops_within(feed, GeoPoint(BASE_LAT, BASE_LON), 1.0)
        assert [s.id for s, _ in hits] == ["a", "b"]
        assert hits[0][1] == pytest.approx(0.2, abs=1e-9)
        assert hits[1][1] == pytest.approx(0.6, abs=1e-9)

    def test_empty_when_far(self, line_feed_dir):
        feed = parse_feed(line_feed_dir)
        assert stops_within(feed, GeoPoint(0.0, 0.0), 5.0) == []

    def test_matches_exhaustive_oracle(self, tmp_path):
        rng = np.random.default_rng(4)
        rows = []
        for i in range(100):
            lat = BASE_LAT + rng.uniform(-0.05, 0.05)
            lon = BASE_LON + rng.uniform(-0.07, 0.07)
            rows.append(f"s{i:03d},s{i:03d},{lat!r},{lon!r}")
        d = write_feed_files(tmp_path / "feed4", stops=rows, routes=["r,3"],
                             trips=["r,w,t1"], stop_times=["t1,08:00:00,08:00:00,s000,1"],
                             calendar=["w,1,1,1,1,1,1,1,20080101,20081231"])
        feed = parse_feed(d)
        for _ in range(25):
            q = GeoPoint(BASE_LAT + rng.uniform(-0.05, 0.05), BASE_LON + rng.uniform(-0.07, 0.07))
            radius = rng.uniform(0.3, 4.0)
            hits = stops_within(feed, q, radius)
            # independent oracle: scalar haversine over every stop, then sort
            expected = []
            for sid, stop in feed.stops.items():
                dist = haversine_miles(q.lat, q.lon, stop.point.lat, stop.point.lon)
                if dist <= radius:
                    expected.append((dist, sid))
            expected.sort()
            assert [s.id for s, _ in hits] == [sid for _, sid in expected]
            np.testing.assert_allclose([d for _, d in hits], [d for d, _ in expected], atol=1e-9)


class TestDepartures:
    def test_two_in_an_hour(self, line_feed_dir):
        feed = parse_feed(line_feed_dir)
        window = (ts(WEDNESDAY, "07:45"), ts(WEDNESDAY, "08:45"))
        deps = departures(feed, "s1", window)
        assert [d.trip_id for d in deps] == ["n1", "n2"]

    def test_inactive_date_empty(self, line_feed_dir):
        feed = parse_feed(line_feed_dir)
        window = (ts(SATURDAY, "07:45"), ts(SATURDAY, "08:45"))
        assert departures(feed, "s1", window) == []

    def test_point_window_boundary(self, line_feed_dir):
        feed = parse_feed(line_feed_dir)
        window = (ts(WEDNESDAY, "08:30"), ts(WEDNESDAY, "08:30"))
        deps = departures(feed, "s1", window)
        assert [d.trip_id for d in deps] == ["n2"]

    def test_unknown_stop(self, line_feed_dir):
        feed = parse_feed(line_feed_dir)
        with pytest.raises(KeyError):
            departures(feed, "nope", (ts(WEDNESDAY, "08:00"), ts(WEDNESDAY, "09:00")))

    def test_window_spanning_midnight(self, tmp_path):
        p = north_of(0.0)
        d = write_feed_files(
            tmp_path / "owl",
            stops=[f"a,a,{p.lat!r},{p.lon!r}"],
            routes=["r,3"],
            trips=["r,w,late"],
            stop_times=["late,24:30:00,24:30:00,a,1"],
            calendar=["w,0,0,1,0,0,0,0,20080101,20081231"],  # Wednesdays only
        )
        feed = parse_feed(d)
        # 24:30 on Wednesday is 00:30 Thursday; a window starting Wednesday
        # 23:00 and ending Thursday 01:00 must include it
        window = (ts(WEDNESDAY, "23:00"), TimeStamp(WEDNESDAY + dt.timedelta(days=1), 3600))
        deps = departures(feed, "a", window)
        assert len(deps) == 1
        assert deps[0].departure.date == WEDNESDAY
        assert deps[0].departure.sec == 24 * 3600 + 1800
        # but a Thursday-only service at 00:30 would be a different thing:
        # the same clock instant belongs to Wednesday's service date here
        assert departures(feed, "a", (TimeStamp(WEDNESDAY + dt.timedelta(days=1), 0),
                                      TimeStamp(WEDNESDAY + dt.timedelta(days=1), 3600)))[0].trip_id == "late"

    def test_monotone_in_window(self, line_feed_dir):
        feed = parse_feed(line_feed_dir)
        small = (ts(WEDNESDAY, "08:10"), ts(WEDNESDAY, "08:40"))
        large = (ts(WEDNESDAY, "08:00"), ts(WEDNESDAY, "09:30"))
        inner = {(d.trip_id, d.departure) for d in departures(feed, "s1", small)}
        outer = {(d.trip_id, d.departure) for d in departures(feed, "s1", large)}
        assert inner <= outer

    def test_exhaustive_oracle(self, line_feed_dir):
        feed = parse_feed(line_feed_dir)
        window = (ts(WEDNESDAY, "08:00"), ts(WEDNESDAY, "09:10"))
        got = [(d.trip_id, d.departure.abs_sec) for d in departures(feed, "s3", window)]
        expected = []
        for trip_id, sts in feed.stop_times.items():
            if not service_active(feed, feed.trips[trip_id].service_id, WEDNESDAY):
                continue
            for st in sts:
                if st.stop_id != "s3":
                    continue
                abs_sec = WEDNESDAY.toordinal() * 86400 + st.departure_sec
                if window[0].abs_sec <= abs_sec <= window[1].abs_sec:
                    expected.append((trip_id, abs_sec))
        expected.sort(key=lambda e: (e[1], e[0]))
        assert got == expected
