"""Design space: knob definitions, configurations, actions, and state encoding.

A design space is an ordered list of named knobs, each with a finite strictly
increasing list of integer settings. A configuration picks one index per knob;
the search walks this lattice with per-knob increment/decrement/stay actions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import DimensionMismatchError, EnumerationCapError, SpaceParseError, SpaceValidationError

DEFAULT_ENUMERATION_CAP = 10**6

STAY = 0
INCREMENT = 1
DECREMENT = -1


@dataclass(frozen=True)
class KnobDef:
    """One tunable dimension: a name and its ordered integer settings."""

    name: str
    values: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(self.values))
        if not self.name:
            raise SpaceValidationError("knob name must be non-empty")
        if not self.values:
            raise SpaceValidationError(f"knob {self.name!r}: values list is empty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise SpaceValidationError(f"knob {self.name!r}: values not strictly increasing")


@dataclass(frozen=True)
class DesignSpace:
    name: str
    knobs: tuple[KnobDef, ...]

    @property
    def n_knobs(self) -> int:
        return len(self.knobs)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(len(k.values) for k in self.knobs)

    @property
    def total_cardinality(self) -> int:
        return math.prod(self.cardinalities)


@dataclass(frozen=True)
class Configuration:
    """One index per knob, each indexing into that knob's value list."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if any(i < 0 for i in self.indices):
            raise ValueError(f"indices must be non-negative, got {self.indices}")

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class Action:
    """Per-knob direction: -1 decrement, 0 stay, +1 increment."""

    directions: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "directions", tuple(int(d) for d in self.directions))
        if any(d not in (-1, 0, 1) for d in self.directions):
            raise ValueError(f"directions must be -1, 0, or +1, got {self.directions}")

    @property
    def is_stay(self) -> bool:
        return all(d == STAY for d in self.directions)


def _validate_knob(entry: object, position: int) -> KnobDef:
    if not isinstance(entry, dict):
        raise SpaceParseError(f"knob #{position} is not an object")
    unknown = set(entry) - {"name", "values"}
    if unknown:
        raise SpaceParseError(f"knob #{position} has unknown keys {sorted(unknown)}")
    name = entry.get("name")
    values = entry.get("values")
    if not isinstance(name, str) or not name:
        raise SpaceParseError(f"knob #{position} is missing a name")
    if not isinstance(values, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in values):
        raise SpaceParseError(f"knob {name!r}: values must be a list of integers")
    if not values:
        raise SpaceValidationError(f"knob {name!r}: values list is empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise SpaceValidationError(f"knob {name!r}: values not strictly increasing")
    return KnobDef(name=name, values=tuple(values))


def space_from_dict(obj: object) -> DesignSpace:
    """Validate a parsed space document and build a DesignSpace."""
    if not isinstance(obj, dict):
        raise SpaceParseError("space document must be a JSON object")
    unknown = set(obj) - {"name", "knobs", "notes"}
    if unknown:
        raise SpaceParseError(f"space document has unknown keys {sorted(unknown)}")
    name = obj.get("name")
    if not isinstance(name, str) or not name:
        raise SpaceParseError("space document is missing a name")
    knobs_raw = obj.get("knobs")
    if not isinstance(knobs_raw, list) or not knobs_raw:
        raise SpaceValidationError(f"space {name!r}: needs at least one knob")
    knobs = tuple(_validate_knob(entry, i) for i, entry in enumerate(knobs_raw))
    seen: set[str] = set()
    for knob in knobs:
        if knob.name in seen:
            raise SpaceValidationError(f"knob {knob.name!r}: duplicate name")
        seen.add(knob.name)
    return DesignSpace(name=name, knobs=knobs)


def parse_space(text: str) -> DesignSpace:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpaceParseError(f"malformed space document: {exc}") from exc
    return space_from_dict(obj)


def load_space(path: str | Path) -> DesignSpace:
    """Load and validate a space file (JSON: {"name": ..., "knobs": [...]})."""
    return parse_space(Path(path).read_text(encoding="utf-8"))


def space_to_dict(space: DesignSpace) -> dict:
    return {"name": space.name, "knobs": [{"name": k.name, "values": list(k.values)} for k in space.knobs]}


def validate_config(space: DesignSpace, config: Configuration) -> None:
    if len(config.indices) != space.n_knobs:
        raise DimensionMismatchError(
            f"configuration has {len(config.indices)} indices, space {space.name!r} has {space.n_knobs} knobs"
        )
    for knob, idx in zip(space.knobs, config.indices):
        if not 0 <= idx < len(knob.values):
            raise SpaceValidationError(f"knob {knob.name!r}: index {idx} out of range [0, {len(knob.values)})")


def knob_values(space: DesignSpace, config: Configuration) -> tuple[int, ...]:
    """Actual knob settings selected by a configuration."""
    validate_config(space, config)
    return tuple(knob.values[idx] for knob, idx in zip(space.knobs, config.indices))


def apply_action(space: DesignSpace, config: Configuration, action: Action) -> Configuration:
    """Move one step on the lattice; indices clamp at both ends."""
    if len(action.directions) != space.n_knobs:
        raise DimensionMismatchError(
            f"action has {len(action.directions)} directions, space {space.name!r} has {space.n_knobs} knobs"
        )
    validate_config(space, config)
    moved = tuple(
        min(max(idx + d, 0), card - 1)
        for idx, d, card in zip(config.indices, action.directions, space.cardinalities)
    )
    return Configuration(indices=moved)


def encode_state(space: DesignSpace, config: Configuration) -> np.ndarray:
    """Normalized index vector in [0, 1]^n; cardinality-1 knobs encode as 0."""
    validate_config(space, config)
    cards = space.cardinalities
    return np.array(
        [idx / max(1, card - 1) for idx, card in zip(config.indices, cards)],
        dtype=np.float64,
    )


def enumerate_space(space: DesignSpace, cap: int = DEFAULT_ENUMERATION_CAP) -> Iterator[Configuration]:
    """Yield every configuration once, in lexicographic index order."""
    total = space.total_cardinality
    if total > cap:
        raise EnumerationCapError(f"space {space.name!r} has {total} configurations, enumeration cap is {cap}")
    cards = space.cardinalities
    n = len(cards)
    indices = [0] * n
    while True:
        yield Configuration(indices=tuple(indices))
        pos = n - 1
        while pos >= 0:
            indices[pos] += 1
            if indices[pos] < cards[pos]:
                break
            indices[pos] = 0
            pos -= 1
        if pos < 0:
            return


def random_config(space: DesignSpace, rng: np.random.Generator) -> Configuration:
    """Uniform-random configuration drawn knob by knob."""
    return Configuration(indices=tuple(int(rng.integers(0, card)) for card in space.cardinalities))
