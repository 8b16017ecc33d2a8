"""Assembly of estimation observations from choice sets, traveler
attributes, and context flags, and the dense arrays the kernels consume.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from mclab.choiceset import ChoiceSet
from mclab.core import MODES, N_MODES, ContextFlags, Household, Mode, Person, Trip, Purpose
from mclab.errors import DataError
from mclab.mnl.spec import CoefficientTable

# Canonical variable order; every slot in a coefficient table must name one
# of these.
VARIABLES: tuple[str, ...] = (
    "travel_time",
    "n_members",
    "n_vehicles",
    "female",
    "transfers",
    "income_1e5",
    "city_suburb_rush",
    "cbd_rush",
    "shop",
    "work",
    "weekend",
    "access_mi",
    "egress_mi",
    "dest_within_walk",
    "age_over_65",
    "fare",
)
VAR_INDEX = {name: i for i, name in enumerate(VARIABLES)}


@dataclass(frozen=True)
class Observation:
    """One trip's assembled variables: an (8, n_vars) matrix plus the
    availability mask and the chosen index."""

    trip_id: str
    x: np.ndarray            # (N_MODES, len(VARIABLES)) float64
    avail: np.ndarray        # (N_MODES,) bool
    chosen: Optional[int]    # canonical mode index, None outside the universe
    household_id: Optional[str] = None
    eligible: bool = True    # usable for estimation (leg 0, closed home tour)

    def __post_init__(self):
        if self.x.shape != (N_MODES, len(VARIABLES)):
            raise ValueError("variable matrix has wrong shape")
        if self.avail.shape != (N_MODES,):
            raise ValueError("availability mask has wrong shape")
        if not self.avail.any():
            raise ValueError("observation needs at least one available alternative")
        if self.chosen is not None and not self.avail[self.chosen]:
            raise ValueError("chosen alternative must be available")

    def to_record(self) -> dict:
        return {
            "trip_id": self.trip_id,
            "hh_id": self.household_id,
            "eligible": self.eligible,
            "avail": [int(a) for a in self.avail],
            "chosen": self.chosen,
            "vars": [[float(v) for v in row] for row in self.x],
        }

    @classmethod
    def from_record(cls, obj: dict) -> "Observation":
        return cls(
            trip_id=obj["trip_id"],
            x=np.asarray(obj["vars"], dtype=np.float64),
            avail=np.asarray(obj["avail"], dtype=bool),
            chosen=obj["chosen"],
            household_id=obj.get("hh_id"),
            eligible=bool(obj.get("eligible", True)),
        )


def observation_from_choice_set(
    choice_set: ChoiceSet,
    trip: Trip,
    household: Household,
    person: Person,
    flags: ContextFlags,
    eligible: bool = True,
) -> Observation:
    """Assemble the per-alternative variable matrix for one trip.

    Raises:
        DataError: an available alternative is missing an attribute needed
            by the variable set.
    """
    x = np.zeros((N_MODES, len(VARIABLES)), dtype=np.float64)
    avail = np.zeros(N_MODES, dtype=bool)
    for j, alt in enumerate(choice_set.alternatives):
        if not alt.available:
            continue
        avail[j] = True
        for attr, var in (
            ("time_h", "travel_time"),
            ("transfers", "transfers"),
            ("access_mi", "access_mi"),
            ("egress_mi", "egress_mi"),
            ("fare", "fare"),
        ):
            value = getattr(alt, attr)
            if value is None:
                raise DataError(f"trip {trip.id}: {alt.mode.label} lacks {var}")
            x[j, VAR_INDEX[var]] = float(value)
        x[j, VAR_INDEX["n_members"]] = household.n_members
        x[j, VAR_INDEX["n_vehicles"]] = household.n_vehicles
        x[j, VAR_INDEX["female"]] = float(person.is_female)
        x[j, VAR_INDEX["income_1e5"]] = household.income * 1e-5
        x[j, VAR_INDEX["city_suburb_rush"]] = float(flags.city_suburb_rush_in_tour)
        x[j, VAR_INDEX["cbd_rush"]] = float(flags.dest_cbd_rush)
        x[j, VAR_INDEX["shop"]] = float(trip.purpose is Purpose.SHOP)
        x[j, VAR_INDEX["work"]] = float(trip.purpose is Purpose.WORK)
        x[j, VAR_INDEX["weekend"]] = float(flags.is_weekend)
        x[j, VAR_INDEX["dest_within_walk"]] = float(flags.dest_within_walk)
        x[j, VAR_INDEX["age_over_65"]] = float(flags.age_over_65)
    chosen = int(choice_set.chosen) if choice_set.chosen is not None else None
    return Observation(
        trip_id=trip.id,
        x=x,
        avail=avail,
        chosen=chosen,
        household_id=household.id,
        eligible=eligible,
    )


@dataclass
class ChoiceData:
    """Dense dataset: stacked variable tensors plus masks and choices.

    ``x`` is (N, 8, n_vars); unavailable cells are zero and ignored through
    the mask. Observations used for estimation must all carry a chosen
    index.
    """

    x: np.ndarray
    avail: np.ndarray
    chosen: np.ndarray
    trip_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.avail = np.ascontiguousarray(self.avail, dtype=bool)
        self.chosen = np.ascontiguousarray(self.chosen, dtype=np.int64)
        n = self.x.shape[0]
        if self.avail.shape != (n, N_MODES) or self.chosen.shape != (n,):
            raise ValueError("array shapes disagree")
        if not self.trip_ids:
            self.trip_ids = [str(i) for i in range(n)]
        taken = self.avail[np.arange(n), self.chosen]
        if not taken.all():
            bad = self.trip_ids[int(np.argmin(taken))]
            raise ValueError(f"chosen alternative unavailable for trip {bad}")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def n_available(self) -> np.ndarray:
        return self.avail.sum(axis=1)

    @classmethod
    def from_observations(cls, observations: Sequence[Observation]) -> "ChoiceData":
        obs = [o for o in observations]
        if not obs:
            raise ValueError("no observations")
        missing = [o.trip_id for o in obs if o.chosen is None]
        if missing:
            raise ValueError(f"observations without a chosen alternative: {missing[:3]}")
        return cls(
            x=np.stack([o.x for o in obs]),
            avail=np.stack([o.avail for o in obs]),
            chosen=np.array([o.chosen for o in obs], dtype=np.int64),
            trip_ids=[o.trip_id for o in obs],
        )


def build_design(data_x: np.ndarray, table: CoefficientTable) -> np.ndarray:
    """Map the variable tensor onto parameters: out[n, j, p] is the value
    multiplying parameter p in alternative j's utility."""
    n = data_x.shape[0]
    design = np.zeros((n, N_MODES, len(table)), dtype=np.float64)
    for p, param in enumerate(table):
        for mode, var in param.slots:
            if var not in VAR_INDEX:
                raise DataError(f"parameter {param.name!r} references unknown variable {var!r}")
            design[:, mode, p] += data_x[:, mode, VAR_INDEX[var]]
    return np.ascontiguousarray(design)


def write_observations(observations: Sequence[Observation], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obs in observations:
            fh.write(json.dumps(obs.to_record(), sort_keys=True) + "\n")


def read_observations(path) -> list[Observation]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(Observation.from_record(json.loads(line)))
    return out


def mode_labels() -> list[str]:
    return [m.label for m in MODES]


def variable_index(name: str) -> int:
    return VAR_INDEX[name]


MODE_LIST: tuple[Mode, ...] = MODES
