"""Descriptive reports: previous-mode cross-tab, vehicle-in-use shares,
transit availability, zone-pair availability mismatch, travel-time
dispersion, and ridership by zone.

Counts are exact integers; percentages are always recomputed from counts
at emission time so the two can never disagree. Every CSV gets a JSON
sidecar recording the parameters that shaped it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from mclab.altgen import Alternative
from mclab.choiceset import RULE_NO_SERVICE, ChoiceSet
from mclab.core import MODES, Mode, Trip, survey_mode_or_none
from mclab.survey import Population

TRANSIT_GROUPS: tuple[tuple[str, tuple[Mode, ...]], ...] = (
    ("CTA", (Mode.CTA,)),
    ("Pace", (Mode.PACE,)),
    ("HeavyRail", (Mode.HRAIL_SLOW, Mode.HRAIL_FAST)),
    ("AnyTransit", (Mode.CTA, Mode.PACE, Mode.HRAIL_SLOW, Mode.HRAIL_FAST)),
)


@dataclass
class CrossTab:
    """Counts by (row label, column group) with per-column denominators."""

    rows: list[str]
    columns: list[str]
    counts: dict[tuple[str, str], int] = field(default_factory=dict)

    def add(self, row: str, column: str, n: int = 1) -> None:
        if row not in self.rows:
            self.rows.append(row)
        self.counts[(row, column)] = self.counts.get((row, column), 0) + n

    def count(self, row: str, column: str) -> int:
        return self.counts.get((row, column), 0)

    def column_total(self, column: str) -> int:
        return sum(self.count(r, column) for r in self.rows)

    def percentage(self, row: str, column: str) -> float:
        total = self.column_total(column)
        return 100.0 * self.count(row, column) / total if total else 0.0

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            header = ["row"]
            for col in self.columns:
                header += [f"{col}_count", f"{col}_pct"]
            w.writerow(header)
            for row in self.rows:
                line = [row]
                for col in self.columns:
                    line += [self.count(row, col), f"{self.percentage(row, col):.2f}"]
                w.writerow(line)
            w.writerow(["_total"] + [v for col in self.columns for v in (self.column_total(col), "100.00" if self.column_total(col) else "0.00")])


def previous_mode_crosstab(pop: Population) -> CrossTab:
    """Observed mode of trips whose previous tour leg was driven, split
    into return-home and other legs."""
    tab = CrossTab(rows=[], columns=["return_home", "others"])
    for tour_id in sorted(pop.tours):
        tour = pop.tours[tour_id]
        trips = pop.tour_trips(tour)
        for prev, cur in zip(trips, trips[1:]):
            if survey_mode_or_none(prev.observed_mode, prev.drive_access) is not Mode.DRIVE:
                continue
            column = "return_home" if cur.purpose.value == "ReturnHome" else "others"
            tab.add(cur.observed_mode, column)
    return tab


def vehicle_in_use_mode_share(pop: Population, timelines: Mapping[str, "VehicleTimeline"]) -> CrossTab:
    """For one-vehicle households: trips departing while another member has
    the vehicle out, against all trips of the same observed mode."""
    tab = CrossTab(rows=[], columns=["conflicted", "total"])
    for tid in sorted(pop.trips):
        trip = pop.trips[tid]
        household = pop.household_of_trip(trip)
        if household.n_vehicles != 1:
            continue
        tab.add(trip.observed_mode, "total")
        timeline = timelines.get(household.id)
        if timeline is None:
            continue
        if timeline.vehicles_away(trip.depart, exclude_person=trip.person_id) >= 1:
            tab.add(trip.observed_mode, "conflicted")
    return tab


def _router_available(cs: ChoiceSet, mode: Mode) -> bool:
    """Availability before constraints: exactly the NoService log entries."""
    return (RULE_NO_SERVICE, mode) not in cs.constraint_log


def transit_availability_report(choice_sets: Sequence[ChoiceSet]) -> CrossTab:
    """Trips with and without a feasible itinerary, per agency group."""
    tab = CrossTab(rows=["not_available", "available"], columns=[g for g, _ in TRANSIT_GROUPS])
    for cs in choice_sets:
        for group, modes in TRANSIT_GROUPS:
            has = any(_router_available(cs, m) for m in modes)
            tab.add("available" if has else "not_available", group)
    return tab


def od_transit_mismatch(
    pop: Population, choice_sets: Sequence[ChoiceSet]
) -> dict[str, dict[str, int]]:
    """Zone pairs where an agency is available to some trips but not all.

    Returns {agency: {"without": n, "with": n}} restricted to mismatched
    pairs, plus a "Sum" column across agencies.
    """
    out: dict[str, dict[str, int]] = {}
    for group, modes in TRANSIT_GROUPS:
        if group == "AnyTransit":
            continue
        pairs: dict[tuple[str, str], list[bool]] = {}
        for cs in choice_sets:
            trip = pop.trips.get(cs.trip_id)
            if trip is None or trip.origin.zone_id is None or trip.destination.zone_id is None:
                continue
            key = (trip.origin.zone_id, trip.destination.zone_id)
            pairs.setdefault(key, []).append(any(_router_available(cs, m) for m in modes))
        without = 0
        with_ = 0
        for flags in pairs.values():
            if any(flags) and not all(flags):
                with_ += sum(flags)
                without += len(flags) - sum(flags)
        out[group] = {"without": without, "with": with_}
    out["Sum"] = {
        "without": sum(v["without"] for v in out.values()),
        "with": sum(v["with"] for v in out.values()),
    }
    return out


@dataclass(frozen=True)
class DispersionRecord:
    o_zone: str
    d_zone: str
    mode: Mode
    n: int
    mean: float
    std: float

    @property
    def ratio(self) -> float:
        return self.std / self.mean if self.mean > 0 else 0.0


def travel_time_dispersion(
    trips: Sequence[Trip],
    alternatives_by_trip: Mapping[str, Sequence[Alternative]],
    min_n: int = 5,
    bin_width: float = 0.05,
) -> tuple[list[DispersionRecord], dict[str, list[tuple[float, int]]]]:
    """Zone-to-zone travel time spread per mode.

    Groups trips by (origin zone, destination zone, mode) over available
    alternative times, keeps groups with strictly more than ``min_n``
    observations, and reports mean, population standard deviation, and
    their ratio, plus a per-mode histogram of the ratios.
    """
    groups: dict[tuple[str, str, Mode], list[float]] = {}
    for trip in trips:
        if trip.origin.zone_id is None or trip.destination.zone_id is None:
            continue
        alts = alternatives_by_trip.get(trip.id)
        if alts is None:
            continue
        for alt in alts:
            if alt.available and alt.time_h is not None:
                key = (trip.origin.zone_id, trip.destination.zone_id, alt.mode)
                groups.setdefault(key, []).append(alt.time_h)

    records: list[DispersionRecord] = []
    for (o, d, mode) in sorted(groups, key=lambda k: (k[0], k[1], int(k[2]))):
        times = groups[(o, d, mode)]
        if len(times) <= min_n:
            continue
        mean = sum(times) / len(times)
        var = sum((t - mean) ** 2 for t in times) / len(times)
        records.append(
            DispersionRecord(o_zone=o, d_zone=d, mode=mode, n=len(times), mean=mean, std=math.sqrt(var))
        )

    histograms: dict[str, list[tuple[float, int]]] = {}
    for mode in MODES:
        ratios = [r.ratio for r in records if r.mode is mode]
        if not ratios:
            continue
        n_bins = int(max(ratios) / bin_width) + 1
        counts = [0] * n_bins
        for ratio in ratios:
            counts[min(int(ratio / bin_width), n_bins - 1)] += 1
        histograms[mode.label] = [
            (round(i * bin_width, 10), c) for i, c in enumerate(counts)
        ]
    return records, histograms


def ridership_by_zone(pop: Population) -> dict[str, tuple[int, int]]:
    """Per origin zone: (transit trips, all trips). Zones without trips are
    omitted; shares are computed at emission time."""
    out: dict[str, tuple[int, int]] = {}
    for tid in sorted(pop.trips):
        trip = pop.trips[tid]
        zone = trip.origin.zone_id
        if zone is None:
            continue
        mode = survey_mode_or_none(trip.observed_mode, trip.drive_access)
        transit = 1 if (mode is not None and mode.is_transit) else 0
        prev_t, prev_n = out.get(zone, (0, 0))
        out[zone] = (prev_t + transit, prev_n + 1)
    return out


def write_report_sidecar(path, parameters: dict) -> None:
    with open(str(path) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(parameters, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_dispersion_csv(records: list[DispersionRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["o_zone", "d_zone", "mode", "n", "mean_h", "std_h", "ratio"])
        for r in records:
            w.writerow([r.o_zone, r.d_zone, r.mode.label, r.n,
                        f"{r.mean:.6f}", f"{r.std:.6f}", f"{r.ratio:.6f}"])


def write_histograms_csv(histograms: dict[str, list[tuple[float, int]]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "bin_start", "count"])
        for mode in sorted(histograms):
            for bin_start, count in histograms[mode]:
                w.writerow([mode, bin_start, count])


def write_mismatch_csv(mismatch: dict[str, dict[str, int]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["agency", "without", "with"])
        for agency in ("CTA", "Pace", "HeavyRail", "Sum"):
            if agency in mismatch:
                w.writerow([agency, mismatch[agency]["without"], mismatch[agency]["with"]])


def write_ridership_csv(shares: dict[str, tuple[int, int]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["zone", "transit_trips", "all_trips", "share_pct"])
        for zone in sorted(shares):
            transit, total = shares[zone]
            w.writerow([zone, transit, total, f"{100.0 * transit / total:.2f}"])
