"""Per-trip alternative generation.

Street modes use crow-fly distance with a detour factor; transit modes are
routed against the parsed schedules (earliest arrival, direct or one
transfer). A line-oriented JSON replay cache stands in for external routing
services: cache hits are authoritative, routers are the fallback.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

from mclab.core import (
    N_MODES,
    MODES,
    FareRules,
    GeoPoint,
    Mode,
    TimeStamp,
    Trip,
)
from mclab.errors import ConfigError
from mclab.gtfs import Feed, Stop, departures, stops_within, trip_stop_position

ZERO_DISTANCE_EPS_MILES = 1e-9


@dataclass(frozen=True)
class Alternative:
    """Attribute bundle of one candidate mode for one trip.

    Unavailable alternatives carry no attributes.
    """

    mode: Mode
    available: bool
    time_h: Optional[float] = None
    access_mi: Optional[float] = None
    egress_mi: Optional[float] = None
    transfers: Optional[int] = None
    fare: Optional[float] = None

    def __post_init__(self):
        if self.available:
            for name in ("time_h", "access_mi", "egress_mi", "transfers", "fare"):
                value = getattr(self, name)
                if value is None or value < 0:
                    raise ValueError(f"available alternative needs non-negative {name}")

    @classmethod
    def unavailable(cls, mode: Mode) -> "Alternative":
        return cls(mode=mode, available=False)

    def attrs_dict(self) -> Optional[dict]:
        if not self.available:
            return None
        return {
            "time_h": self.time_h,
            "access_mi": self.access_mi,
            "egress_mi": self.egress_mi,
            "transfers": self.transfers,
            "fare": self.fare,
        }


@dataclass(frozen=True)
class ItineraryLeg:
    agency: str
    route_id: str
    trip_id: str
    board_stop: str
    alight_stop: str
    board: TimeStamp
    alight: TimeStamp


@dataclass(frozen=True)
class TransitItinerary:
    """A feasible schedule-based path from origin to destination."""

    agency: str
    legs: tuple[ItineraryLeg, ...]
    access_mi: float
    egress_mi: float
    depart_requested: TimeStamp

    def __post_init__(self):
        if not self.legs:
            raise ValueError("itinerary needs at least one leg")

    @property
    def n_transfers(self) -> int:
        return len(self.legs) - 1

    @property
    def arrival(self) -> TimeStamp:
        return self.legs[-1].alight

    @property
    def total_time_h(self) -> float:
        """Wait plus ride time, from the requested departure to arrival."""
        return (self.arrival.abs_sec - self.depart_requested.abs_sec) / 3600.0


@dataclass(frozen=True)
class StreetConfig:
    speeds_mph: Mapping[Mode, float] = field(
        default_factory=lambda: {Mode.WALK: 3.0, Mode.BIKE: 10.0, Mode.DRIVE: 25.0}
    )
    detour_factor: float = 1.3
    gas_per_mile: float = 0.15


@dataclass(frozen=True)
class AltgenConfig:
    """Radii, search window, street parameters, and the agency wiring."""

    street: StreetConfig = StreetConfig()
    walk_radius_miles: float = 1.0
    drive_radius_miles: float = 10.0
    search_window_sec: int = 3600
    agency_for_mode: Mapping[Mode, str] = field(
        default_factory=lambda: {
            Mode.CTA: "CTA",
            Mode.PACE: "Pace",
            Mode.HRAIL_SLOW: "Metra",
            Mode.HRAIL_FAST: "Metra",
        }
    )

    @classmethod
    def from_dict(cls, raw: dict) -> "AltgenConfig":
        street = StreetConfig(
            speeds_mph={
                Mode.WALK: float(raw.get("walk_mph", 3.0)),
                Mode.BIKE: float(raw.get("bike_mph", 10.0)),
                Mode.DRIVE: float(raw.get("drive_mph", 25.0)),
            },
            detour_factor=float(raw.get("detour_factor", 1.3)),
            gas_per_mile=float(raw.get("gas_per_mile", 0.15)),
        )
        agency_map = {
            Mode.from_label(label): agency
            for label, agency in raw.get(
                "agency_for_mode",
                {"CTA": "CTA", "Pace": "Pace", "HRailSlowAccess": "Metra", "HRailFastAccess": "Metra"},
            ).items()
        }
        return cls(
            street=street,
            walk_radius_miles=float(raw.get("walk_radius_miles", 1.0)),
            drive_radius_miles=float(raw.get("drive_radius_miles", 10.0)),
            search_window_sec=int(raw.get("search_window_sec", 3600)),
            agency_for_mode=agency_map,
        )


def route_street(mode: Mode, origin: GeoPoint, destination: GeoPoint, cfg: StreetConfig) -> Alternative:
    """Crow-fly street routing: time = distance * detour / speed.

    Drive pays gas on the detoured distance; walk and bike are free. Drive
    availability is decided later by the constraint engine, so the router
    always reports available.
    """
    if mode not in cfg.speeds_mph:
        raise ConfigError(f"no street speed configured for {mode.label}")
    distance = origin.distance_to(destination) * cfg.detour_factor
    time_h = distance / cfg.speeds_mph[mode]
    fare = distance * cfg.gas_per_mile if mode is Mode.DRIVE else 0.0
    return Alternative(
        mode=mode, available=True, time_h=time_h, access_mi=0.0, egress_mi=0.0,
        transfers=0, fare=fare,
    )


def _direct_itineraries(
    feed: Feed,
    agency: str,
    board: Stop,
    board_access: float,
    alight_ids: dict[str, tuple[Stop, float]],
    depart: TimeStamp,
    window_end: TimeStamp,
):
    """Yield single-leg candidates from one boarding stop."""
    for dep in departures(feed, board.id, (depart, window_end)):
        sts = feed.stop_times[dep.trip_id]
        pos = trip_stop_position(feed, dep.trip_id, board.id)
        if pos is None:
            continue
        for st in sts[pos + 1:]:
            if st.stop_id in alight_ids:
                alight_stop, egress = alight_ids[st.stop_id]
                leg = ItineraryLeg(
                    agency=agency,
                    route_id=dep.route_id,
                    trip_id=dep.trip_id,
                    board_stop=board.id,
                    alight_stop=st.stop_id,
                    board=dep.departure,
                    alight=TimeStamp(dep.departure.date, st.arrival_sec),
                )
                yield TransitItinerary(
                    agency=agency,
                    legs=(leg,),
                    access_mi=board_access,
                    egress_mi=egress,
                    depart_requested=depart,
                )


def route_transit(
    feeds: Mapping[str, Feed],
    agency: str,
    origin: GeoPoint,
    destination: GeoPoint,
    depart: TimeStamp,
    cfg: AltgenConfig,
    access_radius_miles: Optional[float] = None,
    egress_radius_miles: Optional[float] = None,
) -> Optional[TransitItinerary]:
    """Earliest-arrival direct or one-transfer itinerary, or None.

    None means the alternative does not exist for this trip: no stop within
    the access/egress radius, or no service departing inside the search
    window. Ties break on fewer transfers, then shorter access distance,
    then ids, so results are deterministic.
    """
    if agency not in feeds:
        raise ConfigError(f"no feed configured for agency {agency!r}")
    feed = feeds[agency]
    access_radius = cfg.walk_radius_miles if access_radius_miles is None else access_radius_miles
    egress_radius = cfg.walk_radius_miles if egress_radius_miles is None else egress_radius_miles

    boarding = stops_within(feed, origin, access_radius)
    if not boarding:
        return None
    alighting = stops_within(feed, destination, egress_radius)
    if not alighting:
        return None
    alight_ids = {stop.id: (stop, d) for stop, d in alighting}
    window_end = depart.add_seconds(cfg.search_window_sec)

    def score(it: TransitItinerary):
        return (it.arrival.abs_sec, it.n_transfers, it.access_mi, it.legs[0].trip_id)

    best: Optional[TransitItinerary] = None
    for board, access in boarding:
        for cand in _direct_itineraries(feed, agency, board, access, alight_ids, depart, window_end):
            if best is None or score(cand) < score(best):
                best = cand
    if best is not None:
        return best

    # one transfer: board trip A, hop off downstream, continue on trip B
    for board, access in boarding:
        for dep in departures(feed, board.id, (depart, window_end)):
            sts = feed.stop_times[dep.trip_id]
            pos = trip_stop_position(feed, dep.trip_id, board.id)
            if pos is None:
                continue
            for st in sts[pos + 1:]:
                mid_arrive = TimeStamp(dep.departure.date, st.arrival_sec)
                if window_end < mid_arrive:
                    break
                first = ItineraryLeg(
                    agency=agency,
                    route_id=dep.route_id,
                    trip_id=dep.trip_id,
                    board_stop=board.id,
                    alight_stop=st.stop_id,
                    board=dep.departure,
                    alight=mid_arrive,
                )
                for dep2 in departures(feed, st.stop_id, (mid_arrive, window_end)):
                    if dep2.trip_id == dep.trip_id:
                        continue
                    sts2 = feed.stop_times[dep2.trip_id]
                    pos2 = trip_stop_position(feed, dep2.trip_id, st.stop_id)
                    if pos2 is None:
                        continue
                    for st2 in sts2[pos2 + 1:]:
                        if st2.stop_id in alight_ids:
                            alight_stop, egress = alight_ids[st2.stop_id]
                            second = ItineraryLeg(
                                agency=agency,
                                route_id=dep2.route_id,
                                trip_id=dep2.trip_id,
                                board_stop=st.stop_id,
                                alight_stop=st2.stop_id,
                                board=dep2.departure,
                                alight=TimeStamp(dep2.departure.date, st2.arrival_sec),
                            )
                            cand = TransitItinerary(
                                agency=agency,
                                legs=(first, second),
                                access_mi=access,
                                egress_mi=egress,
                                depart_requested=depart,
                            )
                            if best is None or score(cand) < score(best):
                                best = cand
    return best


def compute_fare(
    itinerary: TransitItinerary,
    fares_by_agency: Mapping[str, FareRules],
    feeds: Optional[Mapping[str, Feed]] = None,
) -> float:
    """Fare of an itinerary under flat per-agency rules.

    The first leg pays its agency's base fare; each later leg pays the
    transfer fare when boarded within the transfer window of the previous
    alighting and the agency is unchanged, else a fresh base fare.
    Distance-band tables (when configured) set the base from the leg's
    board-to-alight crow-fly distance.
    """
    total = 0.0
    prev: Optional[ItineraryLeg] = None
    for leg in itinerary.legs:
        rules = fares_by_agency.get(leg.agency)
        if rules is None:
            raise ConfigError(f"no fare rules for agency {leg.agency!r}")
        is_transfer = (
            prev is not None
            and leg.agency == prev.agency
            and leg.board.abs_sec - prev.alight.abs_sec <= rules.transfer_window_sec
        )
        if is_transfer:
            total += rules.transfer
        else:
            base = rules.base
            if rules.bands and feeds is not None and leg.agency in feeds:
                feed = feeds[leg.agency]
                b = feed.stops.get(leg.board_stop)
                a = feed.stops.get(leg.alight_stop)
                if b is not None and a is not None:
                    base = rules.base_fare_for(b.point.distance_to(a.point))
            total += base
        prev = leg
    return total


class RoutingCache:
    """Exact-key replay cache for routing results.

    Keys are (origin, destination, mode, departure rounded down to the
    minute); values are either an attribute dict or None for a recorded
    "not available". The line format is one JSON object per line.
    """

    _ATTR_KEYS = ("time_h", "access_mi", "egress_mi", "transfers", "fare")

    def __init__(self):
        self._entries: dict[tuple, Optional[dict]] = {}

    def __len__(self) -> int:
        return len(self._entries)

    @staticmethod
    def key(origin: GeoPoint, destination: GeoPoint, mode: Mode, depart: TimeStamp) -> tuple:
        minute = depart.to_datetime().replace(second=0, microsecond=0)
        return (origin.lat, origin.lon, destination.lat, destination.lon, mode.label, minute.isoformat())

    def lookup(self, origin, destination, mode, depart) -> tuple[bool, Optional[dict]]:
        """(hit, attrs). attrs is None on a recorded unavailable."""
        k = self.key(origin, destination, mode, depart)
        if k in self._entries:
            return True, self._entries[k]
        return False, None

    def record(self, origin, destination, mode, depart, alternative: Alternative) -> None:
        self._entries[self.key(origin, destination, mode, depart)] = alternative.attrs_dict()

    @classmethod
    def load(cls, path) -> "RoutingCache":
        cache = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                key = (
                    obj["o_lat"], obj["o_lon"], obj["d_lat"], obj["d_lon"],
                    obj["mode"], obj["depart_iso"],
                )
                attrs = obj.get("attrs")
                if attrs is not None:
                    attrs = {k: attrs[k] for k in cls._ATTR_KEYS}
                cache._entries[key] = attrs
        return cache

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key in sorted(self._entries, key=repr):
                o_lat, o_lon, d_lat, d_lon, mode, depart_iso = key
                obj = {
                    "o_lat": o_lat, "o_lon": o_lon, "d_lat": d_lat, "d_lon": d_lon,
                    "mode": mode, "depart_iso": depart_iso, "minute_rounded": True,
                    "attrs": self._entries[key],
                }
                fh.write(json.dumps(obj, sort_keys=True) + "\n")


def _from_cache_attrs(mode: Mode, attrs: Optional[dict]) -> Alternative:
    if attrs is None:
        return Alternative.unavailable(mode)
    return Alternative(
        mode=mode, available=True,
        time_h=float(attrs["time_h"]),
        access_mi=float(attrs["access_mi"]),
        egress_mi=float(attrs["egress_mi"]),
        transfers=int(attrs["transfers"]),
        fare=float(attrs["fare"]),
    )


def _transit_alternative(
    mode: Mode,
    trip_o: GeoPoint,
    trip_d: GeoPoint,
    depart: TimeStamp,
    feeds: Mapping[str, Feed],
    cfg: AltgenConfig,
    fares_by_agency: Mapping[str, FareRules],
) -> Alternative:
    agency = cfg.agency_for_mode.get(mode)
    if agency is None:
        raise ConfigError(f"no agency configured for mode {mode.label}")
    access_radius = cfg.drive_radius_miles if mode is Mode.HRAIL_FAST else cfg.walk_radius_miles
    itinerary = route_transit(
        feeds, agency, trip_o, trip_d, depart, cfg,
        access_radius_miles=access_radius,
        egress_radius_miles=cfg.walk_radius_miles,
    )
    if itinerary is None:
        return Alternative.unavailable(mode)
    fare = compute_fare(itinerary, fares_by_agency, feeds)
    time_h = itinerary.total_time_h
    if mode is Mode.HRAIL_FAST:
        # drive-access leg: crow-fly to the boarding stop at street drive terms
        drive_mi = itinerary.access_mi * cfg.street.detour_factor
        time_h += drive_mi / cfg.street.speeds_mph[Mode.DRIVE]
        fare += drive_mi * cfg.street.gas_per_mile
    return Alternative(
        mode=mode, available=True,
        time_h=time_h,
        access_mi=itinerary.access_mi,
        egress_mi=itinerary.egress_mi,
        transfers=itinerary.n_transfers,
        fare=fare,
    )


def generate_alternatives(
    trip: Trip,
    feeds: Mapping[str, Feed],
    cache: Optional[RoutingCache],
    cfg: AltgenConfig,
    fares_by_agency: Optional[Mapping[str, FareRules]] = None,
    record_to: Optional[RoutingCache] = None,
) -> list[Alternative]:
    """The 8 alternatives of a trip, in canonical mode order.

    The cache is consulted first; misses fall through to the routers.
    Passenger shares Drive's time and fare. Zero-distance trips mark every
    transit mode unavailable. ``record_to`` collects router results in
    cache format for later replay.
    """
    if fares_by_agency is None:
        fares_by_agency = {agency: feed.fares for agency, feed in feeds.items()}

    out: list[Alternative] = []
    drive_alt: Optional[Alternative] = None
    zero_distance = trip.origin.distance_to(trip.destination) <= ZERO_DISTANCE_EPS_MILES

    for mode in MODES:
        if cache is not None:
            hit, attrs = cache.lookup(trip.origin, trip.destination, mode, trip.depart)
            if hit:
                alt = _from_cache_attrs(mode, attrs)
                if mode is Mode.DRIVE:
                    drive_alt = alt
                out.append(alt)
                continue

        if mode in (Mode.WALK, Mode.BIKE, Mode.DRIVE):
            alt = route_street(mode, trip.origin, trip.destination, cfg.street)
            if mode is Mode.DRIVE:
                drive_alt = alt
        elif mode is Mode.PASSENGER:
            if drive_alt is None or not drive_alt.available:
                street = route_street(Mode.DRIVE, trip.origin, trip.destination, cfg.street)
            else:
                street = drive_alt
            alt = replace(street, mode=Mode.PASSENGER)
        elif zero_distance:
            alt = Alternative.unavailable(mode)
        else:
            alt = _transit_alternative(
                mode, trip.origin, trip.destination, trip.depart, feeds, cfg, fares_by_agency
            )
        if record_to is not None:
            record_to.record(trip.origin, trip.destination, mode, trip.depart, alt)
        out.append(alt)

    assert len(out) == N_MODES
    return out
