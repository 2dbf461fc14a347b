"""Columnar claims data: ingestion, claim-size computation and preparation.

The preparation pipeline used for modelling is::

    data = load_csv(path, schema)
    data = log_transform_response(filter_positive_claims(data))
    train, test = split_by_year(data, {2016})
"""

import csv
import io
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import (
    DataError,
    EmptyFile,
    EmptyPartition,
    EmptyResult,
    MissingColumn,
    MissingValue,
    NonPositiveResponse,
    NonPositiveValuation,
    SchemaMismatch,
    UnknownCategoryLevel,
    UnknownColumn,
    UnparsableNumber,
)
from .schema import CONTINUOUS, INTEGER

RESPONSE = "claim_size"
# Columns carried alongside the predictors, in file order.
AUX_COLUMNS = ("market_value", "loss", "contract_year")
RAW, LOG = "raw", "log"


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable table of predictors plus the claim-size response.

    ``columns`` maps feature name to a 1-d array: int64 level indices for
    categorical features, int64 for integer features and float64 for
    continuous ones. ``aux`` holds the optional non-predictor columns
    (market value, loss, contract year). ``scale`` records whether
    ``response`` is on the raw or natural-log scale. ``truth`` carries the
    generating function for synthetic data and is ``None`` otherwise.
    """

    schema: object
    columns: dict
    response: np.ndarray
    aux: dict = field(default_factory=dict)
    scale: str = RAW
    truth: object = None

    def __post_init__(self):
        cols = {}
        for spec in self.schema:
            if spec.name not in self.columns:
                raise MissingColumn(spec.name)
            dtype = np.float64 if spec.kind == CONTINUOUS else np.int64
            cols[spec.name] = _frozen(self.columns[spec.name], dtype)
        extra = set(self.columns) - set(cols)
        if extra:
            raise UnknownColumn(sorted(extra)[0])
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "response", _frozen(self.response, np.float64))
        aux = {}
        for name, values in self.aux.items():
            if name not in AUX_COLUMNS:
                raise UnknownColumn(name)
            aux[name] = _frozen(values, np.int64 if name == "contract_year" else np.float64)
        object.__setattr__(self, "aux", aux)
        n = len(self.response)
        for name, col in {**cols, **aux}.items():
            if col.ndim != 1 or len(col) != n:
                raise DataError(f"column {name!r} has length {len(col)}, expected {n}")
        for spec in self.schema:
            if spec.is_categorical:
                col = cols[spec.name]
                if n and (col.min() < 0 or col.max() >= spec.n_levels):
                    raise DataError(f"column {spec.name!r} holds an invalid level index")
        if self.scale not in (RAW, LOG):
            raise DataError(f"unknown response scale {self.scale!r}")

    @property
    def n(self):
        return len(self.response)

    @property
    def p(self):
        return len(self.schema)

    @property
    def feature_names(self):
        return self.schema.names

    @cached_property
    def X(self):
        """Predictors as an ``(n, p)`` float64 matrix (categoricals as level indices)."""
        X = np.empty((self.n, self.p), dtype=np.float64)
        for j, name in enumerate(self.schema.names):
            X[:, j] = self.columns[name]
        X.setflags(write=False)
        return X

    @property
    def contract_year(self):
        return self.aux.get("contract_year")

    def take(self, index):
        index = np.asarray(index)
        return replace(
            self,
            columns={k: v[index] for k, v in self.columns.items()},
            response=self.response[index],
            aux={k: v[index] for k, v in self.aux.items()},
        )

    def with_response(self, response, scale=None):
        return replace(self, response=response, scale=scale or self.scale)

    def raw_response(self):
        return np.exp(self.response) if self.scale == LOG else self.response.copy()

    def check_schema(self, feature_names):
        if tuple(feature_names) != self.schema.names:
            raise SchemaMismatch(
                f"model expects features {tuple(feature_names)}, data has {self.schema.names}")


@dataclass(frozen=True)
class ClaimRecord:
    """One policy-holder row; ``features`` maps name to level label or number."""

    features: dict
    insured_value: float
    market_value: float
    loss: float
    contract_year: int
    claim_size: float

    def __post_init__(self):
        if not (self.insured_value > 0 and self.market_value > 0):
            raise NonPositiveValuation("insured and market values must be positive")
        if self.loss < 0 or self.claim_size < 0:
            raise DataError("loss and claim size must be non-negative")
        if not 2011 <= self.contract_year <= 2018:
            raise DataError(f"contract year {self.contract_year} outside 2011-2018")


def from_records(records, schema):
    cols = {s.name: [] for s in schema}
    for r in records:
        for s in schema:
            v = r.features[s.name]
            cols[s.name].append(s.levels.index(v) if s.is_categorical else v)
    aux = {
        "market_value": [r.market_value for r in records],
        "loss": [r.loss for r in records],
        "contract_year": [r.contract_year for r in records],
    }
    return Dataset(schema, cols, [r.claim_size for r in records], aux)


def record(data, i):
    """Row ``i`` of ``data`` as a :class:`ClaimRecord`."""
    feats = {}
    for s in data.schema:
        v = data.columns[s.name][i]
        feats[s.name] = s.levels[v] if s.is_categorical else v.item()
    aux = data.aux
    return ClaimRecord(
        features=feats,
        insured_value=float(data.columns["insured_value"][i]),
        market_value=float(aux["market_value"][i]),
        loss=float(aux["loss"][i]),
        contract_year=int(aux["contract_year"][i]),
        claim_size=float(data.raw_response()[i]),
    )


# --- claim size -------------------------------------------------------------

def claims_size(insured_value, market_value, loss, liability_component=0.0,
                pll_component=0.0, total_loss=False):
    """Claim paid for a policy holder.

    ``insured_value / market_value * loss`` plus the liability and PLL
    add-ons. When the loss is flagged as total (beyond repair) and the loss
    plus add-ons exceed the insured value, the insurer pays exactly the
    insured value. Works elementwise on arrays.
    """
    iv = np.asarray(insured_value, dtype=np.float64)
    mv = np.asarray(market_value, dtype=np.float64)
    loss = np.asarray(loss, dtype=np.float64)
    liab = np.asarray(liability_component, dtype=np.float64)
    pll = np.asarray(pll_component, dtype=np.float64)
    if np.any(iv <= 0) or np.any(mv <= 0):
        raise NonPositiveValuation("insured value and market value must be positive")
    if np.any(loss < 0) or np.any(liab < 0) or np.any(pll < 0):
        raise DataError("loss and add-on components must be non-negative")
    claim = iv / mv * loss + liab + pll
    capped = np.asarray(total_loss, dtype=bool) & (loss + liab + pll > iv)
    out = np.where(capped, iv, claim)
    return float(out) if out.ndim == 0 else out


# --- preparation ------------------------------------------------------------

def filter_positive_claims(data):
    keep = np.flatnonzero(data.response > 0)
    if keep.size == 0:
        raise EmptyResult("no positive claims in dataset")
    return data.take(keep)


def log_transform_response(data):
    if data.scale == LOG:
        raise DataError("response is already on the log scale")
    bad = np.flatnonzero(~(data.response > 0))
    if bad.size:
        raise NonPositiveResponse(int(bad[0]))
    return data.with_response(np.log(data.response), LOG)


def split_by_year(data, test_years=(2016,)):
    """Split rows into (train, test) by contract year."""
    test_years = sorted(set(int(y) for y in test_years))
    if not test_years:
        raise EmptyPartition("test_years is empty")
    years = data.contract_year
    if years is None:
        raise DataError("dataset has no contract_year column")
    is_test = np.isin(years, test_years)
    if is_test.all() or not is_test.any():
        raise EmptyPartition(f"year split on {test_years} leaves an empty partition")
    return data.take(np.flatnonzero(~is_test)), data.take(np.flatnonzero(is_test))


# --- CSV --------------------------------------------------------------------

def _parse_number(text, spec_kind, column, row):
    if text == "":
        raise MissingValue(column, row)
    try:
        v = float(text)
    except ValueError:
        raise UnparsableNumber(text, column, row) from None
    if not math.isfinite(v):
        raise UnparsableNumber(text, column, row)
    if spec_kind == INTEGER:
        if v != int(v):
            raise UnparsableNumber(text, column, row)
        return int(v)
    return v


def read_csv(fh, schema):
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyFile("file is empty") from None
    known = set(schema.names) | set(AUX_COLUMNS) | {RESPONSE}
    for name in header:
        if name not in known:
            raise UnknownColumn(name, row=0)
    if len(set(header)) != len(header):
        raise DataError("duplicate column in header")
    for name in schema.names + (RESPONSE,):
        if name not in header:
            raise MissingColumn(name)
    pos = {name: i for i, name in enumerate(header)}
    cols = {name: [] for name in header}
    nrow = 0
    for row_no, row in enumerate(reader, start=1):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"row {row_no} has {len(row)} fields, expected {len(header)}")
        for spec in schema:
            text = row[pos[spec.name]]
            if spec.is_categorical:
                if text == "":
                    raise MissingValue(spec.name, row_no)
                try:
                    cols[spec.name].append(spec.levels.index(text))
                except ValueError:
                    raise UnknownCategoryLevel(text, spec.name, row_no) from None
            else:
                v = _parse_number(text, spec.kind, spec.name, row_no)
                if not spec.min <= v <= spec.max:
                    raise DataError(f"value {v} out of range for {spec.name!r} at row {row_no}")
                cols[spec.name].append(v)
        for name in AUX_COLUMNS + (RESPONSE,):
            if name in pos:
                kind = INTEGER if name == "contract_year" else CONTINUOUS
                cols[name].append(_parse_number(row[pos[name]], kind, name, row_no))
        nrow += 1
    if nrow == 0:
        raise EmptyFile("file has a header but no data rows")
    response = cols.pop(RESPONSE)
    aux = {name: cols.pop(name) for name in AUX_COLUMNS if name in cols}
    return Dataset(schema, cols, response, aux)


def load_csv(path, schema):
    with open(path, newline="", encoding="utf-8") as fh:
        return read_csv(fh, schema)


def _fmt(v):
    return repr(float(v))


def write_csv(data, fh_or_path):
    """Write ``data`` in canonical form: schema order, then aux columns, then response.

    Floats are written with ``repr`` so a load/write round trip is exact.
    A log-scale response is written back on the raw scale.
    """
    if isinstance(fh_or_path, (str, bytes)) or hasattr(fh_or_path, "__fspath__"):
        with open(fh_or_path, "w", newline="", encoding="utf-8") as fh:
            return write_csv(data, fh)
    fh = fh_or_path
    writer = csv.writer(fh, lineterminator="\n")
    aux_names = [a for a in AUX_COLUMNS if a in data.aux]
    writer.writerow(list(data.schema.names) + aux_names + [RESPONSE])
    formatters = []
    for spec in data.schema:
        col = data.columns[spec.name]
        if spec.is_categorical:
            formatters.append([spec.levels[i] for i in col])
        elif spec.kind == INTEGER:
            formatters.append([str(int(v)) for v in col])
        else:
            formatters.append([_fmt(v) for v in col])
    for name in aux_names:
        col = data.aux[name]
        formatters.append([str(int(v)) for v in col] if name == "contract_year"
                          else [_fmt(v) for v in col])
    formatters.append([_fmt(v) for v in data.raw_response()])
    for row in zip(*formatters):
        writer.writerow(row)


def to_csv_string(data):
    buf = io.StringIO()
    write_csv(data, buf)
    return buf.getvalue()
