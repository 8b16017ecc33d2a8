"""Street routing, transit routing, fares, and the replay cache."""

import datetime as dt
import math
import os

import pytest

from mclab.altgen import (
    AltgenConfig,
    Alternative,
    ItineraryLeg,
    RoutingCache,
    StreetConfig,
    TransitItinerary,
    compute_fare,
    generate_alternatives,
    route_street,
    route_transit,
)
from mclab.core import MODES, FareRules, GeoPoint, Mode, TimeStamp
from mclab.errors import ConfigError
from mclab.gtfs import parse_feed

from conftest import BASE_LAT, BASE_LON, SATURDAY, SUNDAY, WEDNESDAY, make_trip, north_of, ts, write_feed_files


class TestRouteStreet:
    cfg = StreetConfig()

    def test_degenerate_trip(self):
        p = GeoPoint(BASE_LAT, BASE_LON)
        alt = route_street(Mode.WALK, p, p, self.cfg)
        assert alt.available and alt.time_h == 0.0 and alt.fare == 0.0

    def test_walk_time_three_miles(self):
        # 3.0 crow-fly miles, detour 1.3, 3 mph -> 1.3 hours
        alt = route_street(Mode.WALK, GeoPoint(BASE_LAT, BASE_LON), north_of(3.0), self.cfg)
        assert alt.time_h == pytest.approx(1.3, abs=1e-9)
        assert alt.fare == 0.0

    def test_drive_fare_ten_miles(self):
        # 10 crow-fly miles * 1.3 * $0.15 = $1.95
        alt = route_street(Mode.DRIVE, GeoPoint(BASE_LAT, BASE_LON), north_of(10.0), self.cfg)
        assert alt.fare == pytest.approx(1.95, abs=1e-9)
        assert alt.available

    def test_unconfigured_mode(self):
        with pytest.raises(ConfigError):
            route_street(Mode.CTA, GeoPoint(BASE_LAT, BASE_LON), north_of(1.0), self.cfg)


@pytest.fixture
def feeds(line_feed_dir):
    return {"CTA": parse_feed(line_feed_dir, agency_id="CTA")}


class TestRouteTransit:
    cfg = AltgenConfig()

    def test_radius_gate(self, feeds):
        far = GeoPoint(BASE_LAT + 1.0, BASE_LON)  # ~69 miles north
        assert route_transit(feeds, "CTA", far, north_of(2.0), ts(WEDNESDAY, "07:50"), self.cfg) is None

    def test_direct_itinerary_total_time(self, feeds):
        # depart 07:50, next departure 08:00 (10 min wait), s1->s5 ride 20
        # minutes: total 30 minutes of wait plus ride (radius tight enough
        # that only the endpoints qualify)
        o = GeoPoint(BASE_LAT, BASE_LON)
        d = north_of(2.0)
        it = route_transit(feeds, "CTA", o, d, ts(WEDNESDAY, "07:50"), self.cfg,
                           access_radius_miles=0.3, egress_radius_miles=0.3)
        assert it is not None
        assert it.n_transfers == 0
        assert it.legs[0].board_stop == "s1"
        assert it.legs[0].alight_stop == "s5"
        assert it.total_time_h == pytest.approx(0.5, abs=1e-9)

    def test_earliest_arrival_beats_shortest_egress(self, feeds):
        # with a generous radius the router boards mid-line and alights at
        # the first stop that reaches the destination area
        o = GeoPoint(BASE_LAT, BASE_LON)
        d = north_of(2.0)
        it = route_transit(feeds, "CTA", o, d, ts(WEDNESDAY, "07:50"), self.cfg)
        assert it.arrival == ts(WEDNESDAY, "08:15")
        assert it.legs[0].alight_stop == "s4"

    def test_sunday_no_service(self, feeds):
        o = GeoPoint(BASE_LAT, BASE_LON)
        assert route_transit(feeds, "CTA", o, north_of(2.0), ts(SUNDAY, "07:50"), self.cfg) is None

    def test_earliest_arrival_wins(self, feeds):
        # departing 08:20 the 08:30 run is the earliest reachable
        o = GeoPoint(BASE_LAT, BASE_LON)
        it = route_transit(feeds, "CTA", o, north_of(2.0), ts(WEDNESDAY, "08:20"), self.cfg)
        assert it.legs[0].trip_id == "n2"

    def test_window_gate(self, feeds):
        o = GeoPoint(BASE_LAT, BASE_LON)
        late = ts(WEDNESDAY, "10:00")  # no departures within the next hour
        assert route_transit(feeds, "CTA", o, north_of(2.0), late, self.cfg) is None

    def test_unknown_agency(self, feeds):
        with pytest.raises(ConfigError):
            route_transit(feeds, "Ghost", GeoPoint(BASE_LAT, BASE_LON), north_of(1.0),
                          ts(WEDNESDAY, "08:00"), self.cfg)

    def test_unavailable_monotone_in_radius_and_window(self, feeds):
        o = GeoPoint(BASE_LAT, BASE_LON)
        d = north_of(2.0)
        base = route_transit(feeds, "CTA", o, d, ts(WEDNESDAY, "07:50"), self.cfg)
        assert base is not None
        for radius in (0.5, 0.2, 0.05, 0.001):
            shrunk = route_transit(feeds, "CTA", o, d, ts(WEDNESDAY, "07:50"), self.cfg,
                                   access_radius_miles=radius)
            if shrunk is None:
                tighter = route_transit(feeds, "CTA", o, d, ts(WEDNESDAY, "07:50"), self.cfg,
                                        access_radius_miles=radius / 2)
                assert tighter is None
        narrow_cfg = AltgenConfig(search_window_sec=300)
        narrow = route_transit(feeds, "CTA", o, d, ts(WEDNESDAY, "07:50"), narrow_cfg)
        assert narrow is None  # next departure is 10 minutes out

    def test_one_transfer_route(self, tmp_path):
        # two routes meeting at stop "mid", which is out of walk range of
        # both endpoints so no direct boarding can shortcut the transfer
        pa, pm, pb = north_of(0.0), north_of(1.5), north_of(3.0)
        d = write_feed_files(
            tmp_path / "xfer",
            stops=[f"a,a,{pa.lat!r},{pa.lon!r}", f"mid,mid,{pm.lat!r},{pm.lon!r}",
                   f"b,b,{pb.lat!r},{pb.lon!r}"],
            routes=["r1,3", "r2,3"],
            trips=["r1,w,first", "r2,w,second"],
            stop_times=[
                "first,08:00:00,08:00:00,a,1", "first,08:10:00,08:10:00,mid,2",
                "second,08:20:00,08:20:00,mid,1", "second,08:30:00,08:30:00,b,2",
            ],
            calendar=["w,1,1,1,1,1,1,1,20080101,20081231"],
        )
        feeds = {"X": parse_feed(d, agency_id="X")}
        it = route_transit(feeds, "X", pa, pb, ts(WEDNESDAY, "07:55"), AltgenConfig())
        assert it is not None
        assert it.n_transfers == 1
        assert [leg.trip_id for leg in it.legs] == ["first", "second"]


def _leg(agency, board_hhmm, alight_hhmm, board="a", alight="b"):
    return ItineraryLeg(agency=agency, route_id="r", trip_id="t", board_stop=board,
                        alight_stop=alight, board=ts(WEDNESDAY, board_hhmm),
                        alight=ts(WEDNESDAY, alight_hhmm))


class TestComputeFare:
    rules = {"CTA": FareRules(base=2.25, transfer=0.25, transfer_window_sec=7200)}

    def test_single_leg(self):
        it = TransitItinerary(agency="CTA", legs=(_leg("CTA", "08:00", "08:20"),),
                              access_mi=0.1, egress_mi=0.1, depart_requested=ts(WEDNESDAY, "07:55"))
        assert compute_fare(it, self.rules) == pytest.approx(2.25)

    def test_transfer_within_window(self):
        it = TransitItinerary(
            agency="CTA",
            legs=(_leg("CTA", "08:00", "08:20"), _leg("CTA", "08:30", "08:50", "b", "c")),
            access_mi=0.1, egress_mi=0.1, depart_requested=ts(WEDNESDAY, "07:55"))
        assert compute_fare(it, self.rules) == pytest.approx(2.50)

    def test_layover_expires_window(self):
        it = TransitItinerary(
            agency="CTA",
            legs=(_leg("CTA", "08:00", "08:20"), _leg("CTA", "11:00", "11:20", "b", "c")),
            access_mi=0.1, egress_mi=0.1, depart_requested=ts(WEDNESDAY, "07:55"))
        assert compute_fare(it, self.rules) == pytest.approx(4.50)

    def test_cross_agency_additive(self):
        rules = dict(self.rules)
        rules["Pace"] = FareRules(base=1.75, transfer=0.25, transfer_window_sec=7200)
        it = TransitItinerary(
            agency="CTA",
            legs=(_leg("CTA", "08:00", "08:20"), _leg("Pace", "08:25", "08:50", "b", "c")),
            access_mi=0.1, egress_mi=0.1, depart_requested=ts(WEDNESDAY, "07:55"))
        assert compute_fare(it, rules) == pytest.approx(2.25 + 1.75)

    def test_fare_at_least_single_base(self):
        it = TransitItinerary(
            agency="CTA",
            legs=(_leg("CTA", "08:00", "08:20"), _leg("CTA", "08:25", "08:50", "b", "c")),
            access_mi=0.1, egress_mi=0.1, depart_requested=ts(WEDNESDAY, "07:55"))
        assert compute_fare(it, self.rules) >= 2.25

    def test_distance_bands(self, feeds):
        rules = {"CTA": FareRules(base=9.0, transfer=0.0, transfer_window_sec=0,
                                  bands=((1.0, 2.0), (5.0, 3.5)))}
        it = TransitItinerary(
            agency="CTA",
            legs=(ItineraryLeg(agency="CTA", route_id="north", trip_id="n1",
                               board_stop="s1", alight_stop="s5",
                               board=ts(WEDNESDAY, "08:00"), alight=ts(WEDNESDAY, "08:20")),),
            access_mi=0.1, egress_mi=0.1, depart_requested=ts(WEDNESDAY, "07:55"))
        # s1->s5 is 2 miles: second band applies
        assert compute_fare(it, rules, feeds) == pytest.approx(3.5)


class TestGenerateAlternatives:
    def _cfg(self):
        return AltgenConfig(agency_for_mode={Mode.CTA: "CTA", Mode.PACE: "CTA",
                                             Mode.HRAIL_SLOW: "CTA", Mode.HRAIL_FAST: "CTA"})

    def test_canonical_order_and_count(self, feeds):
        trip = make_trip(origin=GeoPoint(BASE_LAT, BASE_LON), destination=north_of(2.0),
                         depart_sec=7 * 3600 + 50 * 60, arrive_sec=9 * 3600)
        alts = generate_alternatives(trip, feeds, None, self._cfg())
        assert [a.mode for a in alts] == list(MODES)

    def test_transit_desert(self, feeds):
        far = GeoPoint(BASE_LAT - 1.0, BASE_LON)
        trip = make_trip(origin=far, destination=GeoPoint(BASE_LAT - 1.0, BASE_LON + 0.1),
                         depart_sec=8 * 3600, arrive_sec=9 * 3600)
        alts = generate_alternatives(trip, feeds, None, self._cfg())
        transit = [a for a in alts if a.mode.is_transit]
        assert all(not a.available for a in transit)
        street = [a for a in alts if not a.mode.is_transit]
        assert all(a.available for a in street)

    def test_zero_distance_trip(self, feeds):
        p = GeoPoint(BASE_LAT, BASE_LON)
        trip = make_trip(origin=p, destination=p, depart_sec=8 * 3600, arrive_sec=8 * 3600 + 60)
        alts = generate_alternatives(trip, feeds, None, self._cfg())
        assert alts[Mode.WALK].available and alts[Mode.WALK].time_h == 0.0
        assert all(not alts[m].available for m in MODES if m.is_transit)

    def test_hrail_access_radii(self, tmp_path):
        # a single station 3 miles north: beyond the 1-mile walk radius,
        # within the 10-mile drive radius
        station = north_of(3.0)
        dest = north_of(3.2)
        d = write_feed_files(
            tmp_path / "hrail",
            stops=[f"st,st,{station.lat!r},{station.lon!r}", f"dn,dn,{dest.lat!r},{dest.lon!r}"],
            routes=["m,2"],
            trips=["m,w,m1"],
            stop_times=["m1,08:10:00,08:10:00,st,1", "m1,08:20:00,08:20:00,dn,2"],
            calendar=["w,1,1,1,1,1,1,1,20080101,20081231"],
            fares="3.25,0.0,0",
        )
        feeds = {"Metra": parse_feed(d, agency_id="Metra")}
        cfg = AltgenConfig(agency_for_mode={Mode.CTA: "Metra", Mode.PACE: "Metra",
                                            Mode.HRAIL_SLOW: "Metra", Mode.HRAIL_FAST: "Metra"})
        trip = make_trip(origin=GeoPoint(BASE_LAT, BASE_LON), destination=dest,
                         depart_sec=8 * 3600, arrive_sec=9 * 3600)
        alts = generate_alternatives(trip, feeds, None, cfg)
        assert not alts[Mode.HRAIL_SLOW].available
        assert alts[Mode.HRAIL_FAST].available
        # drive-access extras: crow-fly access * detour at drive speed + gas
        base_time = (8 * 3600 + 10 * 60 - 8 * 3600 + 10 * 60) / 3600.0  # wait + ride
        access = alts[Mode.HRAIL_FAST].access_mi
        expected = base_time + access * 1.3 / 25.0
        assert alts[Mode.HRAIL_FAST].time_h == pytest.approx(expected, abs=1e-9)
        assert alts[Mode.HRAIL_FAST].fare == pytest.approx(3.25 + access * 1.3 * 0.15, abs=1e-9)

    def test_passenger_shares_drive_attributes(self, feeds):
        trip = make_trip(origin=GeoPoint(BASE_LAT, BASE_LON), destination=north_of(4.0),
                         depart_sec=8 * 3600, arrive_sec=9 * 3600)
        alts = generate_alternatives(trip, feeds, None, self._cfg())
        assert alts[Mode.PASSENGER].time_h == alts[Mode.DRIVE].time_h
        assert alts[Mode.PASSENGER].fare == alts[Mode.DRIVE].fare


class TestRoutingCache:
    def test_replay_fidelity(self, feeds, tmp_path):
        cfg = AltgenConfig(agency_for_mode={Mode.CTA: "CTA", Mode.PACE: "CTA",
                                            Mode.HRAIL_SLOW: "CTA", Mode.HRAIL_FAST: "CTA"})
        trips = [
            make_trip("a", origin=GeoPoint(BASE_LAT, BASE_LON), destination=north_of(2.0),
                      depart_sec=7 * 3600 + 50 * 60, arrive_sec=9 * 3600),
            make_trip("b", origin=north_of(0.4), destination=north_of(1.6),
                      depart_sec=8 * 3600 + 5 * 60, arrive_sec=9 * 3600),
        ]
        recorded = RoutingCache()
        router_results = {t.id: generate_alternatives(t, feeds, None, cfg, record_to=recorded)
                          for t in trips}
        path = tmp_path / "cache.jsonl"
        recorded.dump(path)
        replay = RoutingCache.load(path)
        assert len(replay) == len(recorded)
        for t in trips:
            replayed = generate_alternatives(t, feeds, replay, cfg)
            assert replayed == router_results[t.id]

    def test_unavailable_recorded(self, feeds, tmp_path):
        cfg = AltgenConfig(agency_for_mode={Mode.CTA: "CTA", Mode.PACE: "CTA",
                                            Mode.HRAIL_SLOW: "CTA", Mode.HRAIL_FAST: "CTA"})
        far = GeoPoint(BASE_LAT - 1.0, BASE_LON)
        trip = make_trip(origin=far, destination=GeoPoint(BASE_LAT - 1.0, BASE_LON + 0.1),
                         depart_sec=8 * 3600, arrive_sec=9 * 3600)
        recorded = RoutingCache()
        generate_alternatives(trip, feeds, None, cfg, record_to=recorded)
        path = tmp_path / "cache.jsonl"
        recorded.dump(path)
        replay = RoutingCache.load(path)
        hit, attrs = replay.lookup(trip.origin, trip.destination, Mode.CTA, trip.depart)
        assert hit and attrs is None

    def test_exact_key_on_minute(self, feeds):
        cache = RoutingCache()
        o, d = GeoPoint(BASE_LAT, BASE_LON), north_of(1.0)
        alt = Alternative(mode=Mode.WALK, available=True, time_h=0.5, access_mi=0.0,
                          egress_mi=0.0, transfers=0, fare=0.0)
        cache.record(o, d, Mode.WALK, ts(WEDNESDAY, "08:00"), alt)
        hit, _ = cache.lookup(o, d, Mode.WALK, TimeStamp(WEDNESDAY, 8 * 3600 + 30))
        assert hit  # 08:00:30 floors to the same minute
        miss, _ = cache.lookup(o, d, Mode.WALK, ts(WEDNESDAY, "08:01"))
        assert not miss
