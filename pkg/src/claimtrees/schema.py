"""Declarative description of the predictors.

A schema is an ordered tuple of :class:`FeatureSpec`. Categorical values are
encoded as integer indices into ``levels`` in declaration order, so the
encoding is stable across runs and platforms.

Schema files are JSON documents of the form::

    {"features": [
        {"name": "sex", "kind": "categorical",
         "levels": ["legal_entity", "male", "female"], "units": ""},
        {"name": "premium", "kind": "continuous",
         "min": 0.0, "max": null, "units": "USD"}
    ]}
"""

import json
import math
from dataclasses import dataclass, field

from .errors import InvalidSchema, UnknownFeature

CATEGORICAL = "categorical"
INTEGER = "integer"
CONTINUOUS = "continuous"
KINDS = (CATEGORICAL, INTEGER, CONTINUOUS)


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    levels: tuple = ()
    min: float = -math.inf
    max: float = math.inf
    units: str = ""

    def __post_init__(self):
        if not self.name or not str(self.name).isidentifier():
            raise InvalidSchema(f"feature name {self.name!r} is not an identifier")
        if self.kind not in KINDS:
            raise InvalidSchema(f"feature {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        if self.kind == CATEGORICAL:
            if len(set(self.levels)) < 2 or len(set(self.levels)) != len(self.levels):
                raise InvalidSchema(f"feature {self.name!r} needs >= 2 distinct levels")
        elif self.levels:
            raise InvalidSchema(f"numeric feature {self.name!r} cannot declare levels")
        if self.min > self.max:
            raise InvalidSchema(f"feature {self.name!r}: min > max")

    @property
    def is_categorical(self):
        return self.kind == CATEGORICAL

    @property
    def n_levels(self):
        return len(self.levels)

    def to_dict(self):
        d = {"name": self.name, "kind": self.kind}
        if self.is_categorical:
            d["levels"] = list(self.levels)
        else:
            d["min"] = None if math.isinf(self.min) else self.min
            d["max"] = None if math.isinf(self.max) else self.max
        d["units"] = self.units
        return d

    @classmethod
    def from_dict(cls, d):
        lo, hi = d.get("min"), d.get("max")
        return cls(
            name=d["name"],
            kind=d["kind"],
            levels=tuple(d.get("levels", ())),
            min=-math.inf if lo is None else float(lo),
            max=math.inf if hi is None else float(hi),
            units=d.get("units", ""),
        )


@dataclass(frozen=True)
class Schema:
    features: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise InvalidSchema("feature names must be unique")
        if not names:
            raise InvalidSchema("schema has no features")

    def __len__(self):
        return len(self.features)

    def __iter__(self):
        return iter(self.features)

    def __getitem__(self, key):
        if isinstance(key, str):
            return self.features[self.index(key)]
        return self.features[key]

    @property
    def names(self):
        return tuple(f.name for f in self.features)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownFeature(name) from None

    def to_json(self):
        return json.dumps({"features": [f.to_dict() for f in self.features]}, indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
            return cls(tuple(FeatureSpec.from_dict(d) for d in doc["features"]))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise InvalidSchema(f"malformed schema document: {exc}") from exc

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def insurance_schema():
    """The ten policy predictors of the vehicle insurance data."""
    return Schema((
        FeatureSpec("sex", CATEGORICAL, ("legal_entity", "male", "female")),
        FeatureSpec("season", CATEGORICAL, ("autumn", "winter", "spring", "summer"),
                    units="beginning of contract"),
        FeatureSpec("insurance_type", CATEGORICAL, ("1201", "1202", "1204"),
                    units="1201 private, 1202 commercial, 1204 motor trade road risk"),
        FeatureSpec("type_vehicle", CATEGORICAL,
                    ("automobile", "pick_up", "truck", "bus", "station_wagon", "special_purpose")),
        FeatureSpec("usage", CATEGORICAL,
                    ("private", "fare_paying_passengers", "taxi", "general_cartage",
                     "own_goods", "own_service")),
        FeatureSpec("make", CATEGORICAL,
                    ("Toyota", "Isuzu", "Nissan", "Iveco", "Mitsubishi", "Mercedes",
                     "Volkswagen", "Other")),
        FeatureSpec("coverage", CATEGORICAL, ("comprehensive", "liability")),
        FeatureSpec("production_year", INTEGER, min=1960, max=2018, units="year"),
        FeatureSpec("insured_value", CONTINUOUS, min=0.0, units="USD"),
        FeatureSpec("premium", CONTINUOUS, min=0.0, units="USD"),
    ))
