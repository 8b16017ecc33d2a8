"""Utility specification: named parameters occupying (mode, variable)
slots, with tying expressed by one parameter holding several slots.

Preset files are JSON with an explicit units field; loading refuses files
that do not state the travel-time unit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from typing import Iterable, Optional, Sequence

import numpy as np

from mclab.core import Mode
from mclab.errors import ConfigError

TIME_UNITS = "hours"


@dataclass(frozen=True)
class Parameter:
    """One named coefficient and the utility slots it occupies."""

    name: str
    value: float
    slots: tuple[tuple[Mode, str], ...]
    t_stat: Optional[float] = None

    def __post_init__(self):
        if not self.slots:
            raise ValueError(f"parameter {self.name!r} occupies no slots")


class CoefficientTable:
    """Ordered parameter collection with slot-uniqueness enforced."""

    def __init__(self, parameters: Sequence[Parameter], units: str = TIME_UNITS):
        if units != TIME_UNITS:
            raise ConfigError(f"unsupported travel-time units {units!r}; expected {TIME_UNITS!r}")
        self.units = units
        self.parameters: tuple[Parameter, ...] = tuple(parameters)
        seen: dict[tuple[Mode, str], str] = {}
        names = set()
        for p in self.parameters:
            if p.name in names:
                raise ConfigError(f"duplicate parameter name {p.name!r}")
            names.add(p.name)
            for slot in p.slots:
                if slot in seen:
                    raise ConfigError(
                        f"slot {slot[0].label}/{slot[1]} claimed by both "
                        f"{seen[slot]!r} and {p.name!r}"
                    )
                seen[slot] = p.name

    def __len__(self) -> int:
        return len(self.parameters)

    def __iter__(self):
        return iter(self.parameters)

    def __getitem__(self, name: str) -> Parameter:
        for p in self.parameters:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.parameters]

    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.parameters], dtype=np.float64)

    def with_values(self, values: Iterable[float]) -> "CoefficientTable":
        values = list(values)
        if len(values) != len(self.parameters):
            raise ValueError("value vector length mismatch")
        return CoefficientTable(
            [replace(p, value=float(v)) for p, v in zip(self.parameters, values)],
            units=self.units,
        )

    def slots_for_mode(self, mode: Mode) -> list[tuple[str, str]]:
        """(parameter name, variable) pairs entering one mode's utility."""
        out = []
        for p in self.parameters:
            for m, var in p.slots:
                if m is mode:
                    out.append((p.name, var))
        return out

    def to_dict(self) -> dict:
        return {
            "units": self.units,
            "parameters": [
                {
                    "name": p.name,
                    "value": p.value,
                    "slots": [[m.label, var] for m, var in p.slots],
                    **({"t_stat": p.t_stat} if p.t_stat is not None else {}),
                }
                for p in self.parameters
            ],
        }


def load_table(path) -> CoefficientTable:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return table_from_dict(raw, source=str(path))


def table_from_dict(raw: dict, source: str = "<dict>") -> CoefficientTable:
    if "units" not in raw:
        raise ConfigError(f"{source}: preset must declare travel-time units")
    try:
        params = [
            Parameter(
                name=entry["name"],
                value=float(entry["value"]),
                slots=tuple((Mode.from_label(m), str(var)) for m, var in entry["slots"]),
                t_stat=float(entry["t_stat"]) if "t_stat" in entry else None,
            )
            for entry in raw["parameters"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: bad preset entry: {exc}") from exc
    return CoefficientTable(params, units=raw["units"])


def save_table(table: CoefficientTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table.to_dict(), fh, indent=2, sort_keys=False)
        fh.write("\n")


def paper_preset_path() -> str:
    """Path of the shipped home-based coefficient preset."""
    return str(resources.files("mclab").joinpath("presets/home_based.json"))


def synth_truth_path() -> str:
    """Path of the shipped 8-parameter synthetic-data table."""
    return str(resources.files("mclab").joinpath("presets/synth_truth.json"))


def load_paper_preset() -> CoefficientTable:
    return load_table(paper_preset_path())
