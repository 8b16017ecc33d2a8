"""Pipeline stages behind the command line.

Each stage reads its prerequisites from the output directory, writes its
artifacts deterministically (sorted keys, no timestamps in primary
outputs), and records a manifest of input/output content hashes. Wall
clocks only ever appear in the .meta.json sidecars.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from mclab import analytics
from mclab.altgen import Alternative, AltgenConfig, RoutingCache, generate_alternatives
from mclab.choiceset import ChoiceSet, form_choice_set, vehicle_usage_timeline
from mclab.core import (
    MODES,
    GeoPoint,
    Household,
    Mode,
    Person,
    Purpose,
    RegionConfig,
    TimeStamp,
    Tour,
    Trip,
    context_flags,
    survey_mode_or_none,
)
from mclab.errors import ConfigError, StageError
from mclab.gtfs import Feed, parse_feed
from mclab.mnl.data import Observation, observation_from_choice_set, read_observations, write_observations
from mclab.mnl.model import EstimationOptions, estimate, probabilities, simulate_choice
from mclab.mnl.spec import load_table
from mclab.survey import (
    DEFAULT_CHAIN_TOLERANCE_MILES,
    Population,
    RejectionReport,
    SplitAssignment,
    build_tours,
    parse_survey,
    split_train_test,
)

from collections import Counter


@dataclass
class PipelineConfig:
    """Resolved file layout plus stage parameters."""

    base_dir: str
    survey_household: str
    survey_person: str
    survey_trip: str
    gtfs_dirs: dict[str, str]
    region_path: str
    out_dir: str
    cache_path: Optional[str] = None
    preset_path: Optional[str] = None
    seed: int = 0
    split_fraction: float = 0.8
    split_seed: int = 0
    chain_tolerance_miles: float = DEFAULT_CHAIN_TOLERANCE_MILES
    altgen_raw: dict = field(default_factory=dict)
    estimation_raw: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        base = os.path.dirname(os.path.abspath(path))

        def resolve(rel: str) -> str:
            return rel if os.path.isabs(rel) else os.path.join(base, rel)

        def need(key: str, obj: dict, where: str = "config"):
            if key not in obj:
                raise ConfigError(f"{where}: missing key {key!r}")
            return obj[key]

        survey = need("survey", raw)
        split = raw.get("split", {})
        cfg = cls(
            base_dir=base,
            survey_household=resolve(need("household", survey, "config.survey")),
            survey_person=resolve(need("person", survey, "config.survey")),
            survey_trip=resolve(need("trip", survey, "config.survey")),
            gtfs_dirs={agency: resolve(p) for agency, p in need("gtfs", raw).items()},
            region_path=resolve(need("region", raw)),
            out_dir=resolve(raw.get("out", "out")),
            cache_path=resolve(raw["cache"]) if raw.get("cache") else None,
            preset_path=resolve(raw["preset"]) if raw.get("preset") else None,
            seed=int(raw.get("seed", 0)),
            split_fraction=float(split.get("fraction", 0.8)),
            split_seed=int(split.get("seed", raw.get("seed", 0))),
            chain_tolerance_miles=float(raw.get("chain_tolerance_miles", DEFAULT_CHAIN_TOLERANCE_MILES)),
            altgen_raw=raw.get("altgen", {}),
            estimation_raw=raw.get("estimation", {}),
        )
        if not (0.0 < cfg.split_fraction < 1.0):
            raise ConfigError("config.split.fraction: must be in (0, 1)")
        for key, p in (
            ("survey.household", cfg.survey_household),
            ("survey.person", cfg.survey_person),
            ("survey.trip", cfg.survey_trip),
            ("region", cfg.region_path),
        ):
            if not os.path.isfile(p):
                raise ConfigError(f"config.{key}: no such file {p}")
        for agency, p in cfg.gtfs_dirs.items():
            if not os.path.isdir(p):
                raise ConfigError(f"config.gtfs.{agency}: no such directory {p}")
        if cfg.cache_path and not os.path.isfile(cfg.cache_path):
            raise ConfigError(f"config.cache: no such file {cfg.cache_path}")
        if cfg.preset_path and not os.path.isfile(cfg.preset_path):
            raise ConfigError(f"config.preset: no such file {cfg.preset_path}")
        return cfg

    def artifact(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def require_artifact(self, name: str, producer: str) -> str:
        path = self.artifact(name)
        if not os.path.isfile(path):
            raise StageError(f"missing artifact {name}; run `mclab {producer}` first")
        return path

    def region(self) -> RegionConfig:
        return RegionConfig.from_json(self.region_path)

    def altgen_config(self) -> AltgenConfig:
        return AltgenConfig.from_dict(self.altgen_raw)

    def feeds(self) -> dict[str, Feed]:
        region = self.region()
        return {
            agency: parse_feed(path, agency_id=agency, fallback_fares=region.fares.get(agency))
            for agency, path in sorted(self.gtfs_dirs.items())
        }

    def estimation_options(self) -> EstimationOptions:
        raw = self.estimation_raw
        return EstimationOptions(
            max_iterations=int(raw.get("max_iterations", 100)),
            gradient_tol=float(raw.get("gradient_tol", 1e-6)),
            rel_lnl_tol=float(raw.get("rel_lnl_tol", 1e-10)),
        )


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(cfg: PipelineConfig, command: str, inputs: list[str], outputs: list[str], params: dict) -> None:
    manifest_dir = os.path.join(cfg.out_dir, "manifests")
    os.makedirs(manifest_dir, exist_ok=True)
    manifest = {
        "command": command,
        "parameters": params,
        "inputs": {os.path.relpath(p, cfg.base_dir): _sha256(p) for p in sorted(inputs)},
        "outputs": {os.path.relpath(p, cfg.base_dir): _sha256(p) for p in sorted(outputs)},
    }
    path = os.path.join(manifest_dir, f"{command}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump({"written_at": dt.datetime.now().isoformat()}, fh)
        fh.write("\n")


# ---------------------------------------------------------------------------
# population serialization

def _point_to_list(p: GeoPoint) -> list:
    return [p.lat, p.lon, p.zone_id]


def _point_from_list(raw: list) -> GeoPoint:
    return GeoPoint(raw[0], raw[1], raw[2])


def population_to_dict(pop: Population) -> dict:
    return {
        "households": [
            {
                "id": h.id, "home": _point_to_list(h.home), "n_members": h.n_members,
                "n_vehicles": h.n_vehicles, "income": h.income,
            }
            for h in (pop.households[k] for k in sorted(pop.households))
        ],
        "persons": [
            {"id": p.id, "hh_id": p.household_id, "age": p.age, "female": p.is_female}
            for p in (pop.persons[k] for k in sorted(pop.persons))
        ],
        "trips": [
            {
                "id": t.id, "person_id": t.person_id,
                "origin": _point_to_list(t.origin), "destination": _point_to_list(t.destination),
                "date": t.depart.date.isoformat(), "depart_sec": t.depart.sec, "arrive_sec": t.arrive.sec,
                "arrive_date": t.arrive.date.isoformat(),
                "mode": t.observed_mode, "purpose": t.purpose.value,
                "drive_access": t.drive_access, "tour_id": t.tour_id, "leg_index": t.leg_index,
            }
            for t in (pop.trips[k] for k in sorted(pop.trips))
        ],
        "tours": [
            {
                "id": t.id, "person_id": t.person_id, "trip_ids": list(t.trip_ids),
                "starts_at_home": t.starts_at_home, "is_closed": t.is_closed,
            }
            for t in (pop.tours[k] for k in sorted(pop.tours))
        ],
        "rejections": pop.rejections.to_dict(),
    }


def population_from_dict(raw: dict) -> Population:
    households = {
        h["id"]: Household(
            id=h["id"], home=_point_from_list(h["home"]), n_members=h["n_members"],
            n_vehicles=h["n_vehicles"], income=h["income"],
        )
        for h in raw["households"]
    }
    persons = {
        p["id"]: Person(id=p["id"], household_id=p["hh_id"], age=p["age"], is_female=p["female"])
        for p in raw["persons"]
    }
    trips = {}
    for t in raw["trips"]:
        date = dt.date.fromisoformat(t["date"])
        trips[t["id"]] = Trip(
            id=t["id"], person_id=t["person_id"],
            origin=_point_from_list(t["origin"]), destination=_point_from_list(t["destination"]),
            depart=TimeStamp(date, t["depart_sec"]),
            arrive=TimeStamp(dt.date.fromisoformat(t["arrive_date"]), t["arrive_sec"]),
            observed_mode=t["mode"], purpose=Purpose(t["purpose"]),
            drive_access=t["drive_access"], tour_id=t["tour_id"], leg_index=t["leg_index"],
        )
    tours = {
        t["id"]: Tour(
            id=t["id"], person_id=t["person_id"], trip_ids=tuple(t["trip_ids"]),
            starts_at_home=t["starts_at_home"], is_closed=t["is_closed"],
        )
        for t in raw["tours"]
    }
    rejections = RejectionReport(
        households=raw["rejections"]["households"],
        persons=raw["rejections"]["persons"],
        trips=raw["rejections"]["trips"],
        reasons=Counter(raw["rejections"]["reasons"]),
    )
    return Population(households=households, persons=persons, trips=trips, tours=tours, rejections=rejections)


def load_population(cfg: PipelineConfig) -> Population:
    path = cfg.require_artifact("population.json", "ingest")
    with open(path, "r", encoding="utf-8") as fh:
        return population_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# stages

def run_ingest(cfg: PipelineConfig) -> dict:
    pop = parse_survey(cfg.survey_household, cfg.survey_person, cfg.survey_trip)
    pop = build_tours(pop, cfg.chain_tolerance_miles)
    os.makedirs(cfg.out_dir, exist_ok=True)
    out = cfg.artifact("population.json")
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(population_to_dict(pop), fh, sort_keys=True)
        fh.write("\n")
    _write_manifest(
        cfg, "ingest",
        [cfg.survey_household, cfg.survey_person, cfg.survey_trip],
        [out],
        {"chain_tolerance_miles": cfg.chain_tolerance_miles},
    )
    return {
        "households": len(pop.households), "persons": len(pop.persons),
        "trips": len(pop.trips), "tours": len(pop.tours),
        "rejections": pop.rejections.to_dict(),
    }


def run_split(cfg: PipelineConfig) -> dict:
    pop = load_population(cfg)
    assignment = split_train_test(pop, cfg.split_fraction, cfg.split_seed)
    out = cfg.artifact("split.json")
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(assignment.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(cfg, "split", [cfg.artifact("population.json")], [out],
                    {"fraction": cfg.split_fraction, "seed": cfg.split_seed})
    n_train = len(assignment.train_households())
    return {"train": n_train, "test": len(assignment.assignment) - n_train}


def load_split(cfg: PipelineConfig) -> SplitAssignment:
    path = cfg.require_artifact("split.json", "split")
    with open(path, "r", encoding="utf-8") as fh:
        return SplitAssignment.from_dict(json.load(fh))


def run_altgen(cfg: PipelineConfig) -> dict:
    pop = load_population(cfg)
    feeds = cfg.feeds()
    region = cfg.region()
    altcfg = cfg.altgen_config()
    cache = RoutingCache.load(cfg.cache_path) if cfg.cache_path else None
    fares = {
        agency: region.fares.get(agency, feed.fares) for agency, feed in feeds.items()
    }
    out = cfg.artifact("alternatives.jsonl")
    os.makedirs(cfg.out_dir, exist_ok=True)
    n = 0
    with open(out, "w", encoding="utf-8") as fh:
        for trip_id in sorted(pop.trips):
            trip = pop.trips[trip_id]
            alts = generate_alternatives(trip, feeds, cache, altcfg, fares)
            record = {
                "trip_id": trip_id,
                "alternatives": [
                    {"mode": a.mode.label, "available": a.available, "attrs": a.attrs_dict()}
                    for a in alts
                ],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            n += 1
    inputs = [cfg.artifact("population.json"), cfg.region_path]
    if cfg.cache_path:
        inputs.append(cfg.cache_path)
    _write_manifest(cfg, "altgen", inputs, [out], cfg.altgen_raw)
    return {"trips": n}


def load_alternatives(cfg: PipelineConfig) -> dict[str, list[Alternative]]:
    path = cfg.require_artifact("alternatives.jsonl", "altgen")
    out: dict[str, list[Alternative]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            alts = []
            for entry in record["alternatives"]:
                mode = Mode.from_label(entry["mode"])
                attrs = entry["attrs"]
                if not entry["available"] or attrs is None:
                    alts.append(Alternative.unavailable(mode))
                else:
                    alts.append(
                        Alternative(
                            mode=mode, available=True,
                            time_h=attrs["time_h"], access_mi=attrs["access_mi"],
                            egress_mi=attrs["egress_mi"], transfers=attrs["transfers"],
                            fare=attrs["fare"],
                        )
                    )
            out[record["trip_id"]] = alts
    return out


def run_choicesets(cfg: PipelineConfig) -> dict:
    pop = load_population(cfg)
    alternatives = load_alternatives(cfg)
    region = cfg.region()

    timelines = {
        hh_id: vehicle_usage_timeline(pop.households[hh_id], pop)
        for hh_id in sorted(pop.households)
    }

    out_cs = cfg.artifact("choicesets.jsonl")
    out_obs = cfg.artifact("observations.jsonl")
    n = 0
    n_repaired = 0
    observations: list[Observation] = []
    with open(out_cs, "w", encoding="utf-8") as fh:
        for trip_id in sorted(pop.trips):
            trip = pop.trips[trip_id]
            if trip.tour_id is None or trip.leg_index is None:
                continue
            tour = pop.tours[trip.tour_id]
            person = pop.persons[trip.person_id]
            household = pop.households[person.household_id]
            tour_trips = pop.tour_trips(tour)
            prior = [
                survey_mode_or_none(t.observed_mode, t.drive_access)
                for t in tour_trips[: trip.leg_index]
            ]
            cs = form_choice_set(
                trip, alternatives[trip_id], timelines[household.id], household, tour, prior
            )
            n_repaired += int(cs.repaired)
            fh.write(json.dumps(cs.to_record(), sort_keys=True) + "\n")
            n += 1

            flags = context_flags(trip, tour, tour_trips, person, region)
            eligible = (
                trip.leg_index == 0
                and tour.is_closed
                and tour.starts_at_home
                and cs.chosen is not None
            )
            observations.append(
                observation_from_choice_set(cs, trip, household, person, flags, eligible=eligible)
            )
    write_observations(observations, out_obs)
    _write_manifest(
        cfg, "choicesets",
        [cfg.artifact("population.json"), cfg.artifact("alternatives.jsonl"), cfg.region_path],
        [out_cs, out_obs],
        {},
    )
    return {"choice_sets": n, "repaired": n_repaired,
            "eligible": sum(1 for o in observations if o.eligible)}


def load_choice_sets(cfg: PipelineConfig) -> list[ChoiceSet]:
    path = cfg.require_artifact("choicesets.jsonl", "choicesets")
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            alts = []
            for j, mode in enumerate(MODES):
                if record["available"][j]:
                    attrs = record["alternatives"][mode.label]
                    alts.append(
                        Alternative(
                            mode=mode, available=True,
                            time_h=attrs["time_h"], access_mi=attrs["access_mi"],
                            egress_mi=attrs["egress_mi"], transfers=attrs["transfers"],
                            fare=attrs["fare"],
                        )
                    )
                else:
                    alts.append(Alternative.unavailable(mode))
            out.append(
                ChoiceSet(
                    trip_id=record["trip_id"],
                    alternatives=tuple(alts),
                    chosen=Mode(record["chosen"]) if record["chosen"] is not None else None,
                    constraint_log=tuple(
                        (e["rule"], Mode.from_label(e["mode"])) for e in record["constraint_log"]
                    ),
                    repaired=record["repaired"],
                )
            )
    return out


def _estimation_observations(cfg: PipelineConfig, bucket: str = "train") -> list[Observation]:
    observations = read_observations(cfg.require_artifact("observations.jsonl", "choicesets"))
    split = load_split(cfg)
    keep = split.train_households() if bucket == "train" else split.test_households()
    return [o for o in observations if o.eligible and o.household_id in keep]


def run_estimate(cfg: PipelineConfig) -> dict:
    if cfg.preset_path is None:
        raise ConfigError("config.preset: required for estimate")
    table = load_table(cfg.preset_path)
    observations = _estimation_observations(cfg, "train")
    if not observations:
        raise StageError("no eligible training observations")
    from mclab.mnl.data import ChoiceData

    data = ChoiceData.from_observations(observations)
    result = estimate(
        data, table, init=np.zeros(len(table)), options=cfg.estimation_options()
    )
    out = cfg.artifact("estimation.json")
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(
        cfg, "estimate",
        [cfg.artifact("observations.jsonl"), cfg.artifact("split.json"), cfg.preset_path],
        [out],
        {"options": cfg.estimation_raw, "train_fraction": cfg.split_fraction},
    )
    return result.to_dict()


def run_apply(cfg: PipelineConfig, observations_path: Optional[str] = None) -> dict:
    if cfg.preset_path is None:
        raise ConfigError("config.preset: required for apply")
    table = load_table(cfg.preset_path)
    path = observations_path or cfg.require_artifact("observations.jsonl", "choicesets")
    observations = read_observations(path)
    out = cfg.artifact("probabilities.jsonl")
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for obs in observations:
            probs = probabilities(obs, table)
            fh.write(json.dumps({
                "trip_id": obs.trip_id,
                "probs": {m.label: float(probs[m]) for m in MODES if obs.avail[m]},
            }, sort_keys=True) + "\n")
    _write_manifest(cfg, "apply", [path, cfg.preset_path], [out], {})
    return {"scored": len(observations)}


def run_simulate(cfg: PipelineConfig, observations_path: Optional[str] = None) -> dict:
    if cfg.preset_path is None:
        raise ConfigError("config.preset: required for simulate")
    table = load_table(cfg.preset_path)
    path = observations_path or cfg.require_artifact("observations.jsonl", "choicesets")
    observations = read_observations(path)
    rng = np.random.default_rng(cfg.seed)
    out = cfg.artifact("choices.jsonl")
    os.makedirs(cfg.out_dir, exist_ok=True)
    counts: dict[str, int] = {}
    with open(out, "w", encoding="utf-8") as fh:
        for obs in observations:
            mode = simulate_choice(obs, table, rng)
            counts[mode.label] = counts.get(mode.label, 0) + 1
            fh.write(json.dumps({"trip_id": obs.trip_id, "mode": mode.label}) + "\n")
    _write_manifest(cfg, "simulate", [path, cfg.preset_path], [out], {"seed": cfg.seed})
    return {"simulated": len(observations), "shares": dict(sorted(counts.items()))}


def run_analyze(cfg: PipelineConfig) -> dict:
    pop = load_population(cfg)
    choice_sets = load_choice_sets(cfg)
    alternatives = load_alternatives(cfg)
    timelines = {
        hh_id: vehicle_usage_timeline(pop.households[hh_id], pop)
        for hh_id in sorted(pop.households)
    }
    reports_dir = os.path.join(cfg.out_dir, "reports")
    os.makedirs(reports_dir, exist_ok=True)
    written = []

    tab = analytics.previous_mode_crosstab(pop)
    path = os.path.join(reports_dir, "previous_mode.csv")
    tab.to_csv(path)
    analytics.write_report_sidecar(path, {"columns": tab.columns, "filter": "previous tour leg driven"})
    written.append(path)

    tab = analytics.vehicle_in_use_mode_share(pop, timelines)
    path = os.path.join(reports_dir, "vehicle_in_use.csv")
    tab.to_csv(path)
    analytics.write_report_sidecar(path, {"filter": "households with exactly one vehicle"})
    written.append(path)

    tab = analytics.transit_availability_report(choice_sets)
    path = os.path.join(reports_dir, "transit_availability.csv")
    tab.to_csv(path)
    analytics.write_report_sidecar(path, {"groups": [g for g, _ in analytics.TRANSIT_GROUPS]})
    written.append(path)

    mismatch = analytics.od_transit_mismatch(pop, choice_sets)
    path = os.path.join(reports_dir, "od_mismatch.csv")
    analytics.write_mismatch_csv(mismatch, path)
    analytics.write_report_sidecar(path, {"restriction": "zone pairs with mixed availability"})
    written.append(path)

    trips = [pop.trips[k] for k in sorted(pop.trips)]
    records, histograms = analytics.travel_time_dispersion(trips, alternatives, min_n=5)
    path = os.path.join(reports_dir, "dispersion.csv")
    analytics.write_dispersion_csv(records, path)
    analytics.write_report_sidecar(path, {"min_n": 5, "std": "population", "bin_width": 0.05})
    written.append(path)
    path = os.path.join(reports_dir, "dispersion_hist.csv")
    analytics.write_histograms_csv(histograms, path)
    written.append(path)

    shares = analytics.ridership_by_zone(pop)
    path = os.path.join(reports_dir, "ridership.csv")
    analytics.write_ridership_csv(shares, path)
    analytics.write_report_sidecar(path, {"definition": "observed transit trips / all trips per origin zone"})
    written.append(path)

    _write_manifest(
        cfg, "analyze",
        [cfg.artifact("population.json"), cfg.artifact("choicesets.jsonl"), cfg.artifact("alternatives.jsonl")],
        written,
        {},
    )
    return {"reports": [os.path.basename(p) for p in written]}
