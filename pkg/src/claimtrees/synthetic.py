"""Synthetic vehicle-insurance claims with a known ground truth.

Positive claims follow ``log(claim) = g(x) + noise_sd * eps`` where ``g`` is

    intercept
    + f_premium(premium) + f_insured(insured_value) + f_year(production_year)
    + sex, usage and make level effects
    + interaction_strength * h(usage, premium, insured_value)

``f_premium`` and ``f_insured`` are a linear trend minus a saturating hump
in the standardised log value, so each curve bends down like an upside-down
U near the centre and turns linear again in the tails. ``h`` straightens those curves for private
usage and adds a bonus for general cartage at high premium, so with
``interaction_strength = 0`` the truth is purely additive. Season, insurance
type and vehicle type never enter ``g``.

The linear slopes of the three numeric effects are solved numerically so the
Pearson correlations between log claim size and (insured value, premium,
production year) on the positive-claim subset match ``target_correlations``.
A fraction ``zero_inflation_rate`` of contracts has no claim, and a fraction
``total_loss_rate`` of claims are total losses paid at the insured value.
"""

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .dataset import Dataset, claims_size
from .errors import InvalidConfig
from .schema import insurance_schema

YEARS = np.arange(2011, 2019)
# 2016 carries 30% of contracts so the default year split is roughly 70/30.
YEAR_WEIGHTS = np.array([0.1, 0.1, 0.1, 0.1, 0.1, 0.3, 0.1, 0.1])

SEX_P = [0.30, 0.55, 0.15]
SEASON_P = [0.25, 0.25, 0.25, 0.25]
INSURANCE_TYPE_P = [0.55, 0.40, 0.05]
TYPE_VEHICLE_P = [0.30, 0.25, 0.15, 0.10, 0.10, 0.10]
USAGE_P = [0.35, 0.15, 0.10, 0.20, 0.10, 0.10]
MAKE_P = [0.35, 0.20, 0.12, 0.08, 0.08, 0.07, 0.05, 0.05]
COVERAGE_P = [0.70, 0.30]

# log premium = log insured value + rate terms
BASE_LOG_RATE = math.log(0.025)
COVERAGE_LOG_RATE = np.array([0.0, -1.1])
USAGE_LOG_RATE = np.array([0.0, 0.25, 0.25, 0.3, 0.1, 0.05])

# standardisation of log values inside g
LOG_IV_CENTER, LOG_IV_SCALE = 9.6, 0.6
LOG_PREMIUM_CENTER, LOG_PREMIUM_SCALE = 5.75, 0.8
YEAR_CENTER, YEAR_SCALE = 2005.0, 10.0

INTERCEPT = 7.0
SEX_EFFECT = np.array([-0.10, 0.15, -0.05])
USAGE_EFFECT = np.array([-0.20, 0.25, 0.05, 0.35, 0.0, -0.10])
MAKE_EFFECT = np.array([0.0, 0.25, 0.0, 0.30, 0.0, 0.05, -0.05, -0.05])
PREMIUM_CURVATURE = 0.2
IV_CURVATURE = 0.25
CARTAGE_BONUS = 1.0
# The hump term behaves like z**2 near the centre and levels off at HUMP_CAP.
HUMP_CAP = 4.0
CARTAGE_KNEE, CARTAGE_WIDTH = 0.75, 0.3
PRIVATE, GENERAL_CARTAGE = 0, 3

NOISE_FEATURES = ("season", "insurance_type", "type_vehicle")
CALIBRATION_ROWS = 200_000
CALIBRATION_SEED = 20110701


@dataclass(frozen=True)
class GeneratorConfig:
    n_rows: int = 20_000
    zero_inflation_rate: float = 0.925
    seed: int = 0
    interaction_strength: float = 1.0
    noise_sd: float = 0.6
    total_loss_rate: float = 0.005
    target_correlations: tuple = (0.22, 0.33, 0.11)

    def __post_init__(self):
        object.__setattr__(self, "target_correlations", tuple(float(c) for c in self.target_correlations))
        if int(self.n_rows) != self.n_rows or self.n_rows < 1:
            raise InvalidConfig("n_rows", "must be an integer >= 1")
        if not 0 <= self.zero_inflation_rate < 1:
            raise InvalidConfig("zero_inflation_rate", "must lie in [0, 1)")
        if not (self.interaction_strength >= 0 and math.isfinite(self.interaction_strength)):
            raise InvalidConfig("interaction_strength", "must be finite and >= 0")
        if not (self.noise_sd >= 0 and math.isfinite(self.noise_sd)):
            raise InvalidConfig("noise_sd", "must be finite and >= 0")
        if not 0 <= self.total_loss_rate < 1:
            raise InvalidConfig("total_loss_rate", "must lie in [0, 1)")
        if len(self.target_correlations) != 3 or not all(-1 < c < 1 for c in self.target_correlations):
            raise InvalidConfig("target_correlations", "need three values in (-1, 1)")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed", "must lie in [0, 2**64)")

    def to_dict(self):
        d = asdict(self)
        d["target_correlations"] = list(self.target_correlations)
        return d


def _z_iv(iv):
    return (np.log(iv) - LOG_IV_CENTER) / LOG_IV_SCALE


def _z_premium(premium):
    return (np.log(premium) - LOG_PREMIUM_CENTER) / LOG_PREMIUM_SCALE


def _hump(z):
    return HUMP_CAP * -np.expm1(-z * z / HUMP_CAP)


@dataclass(frozen=True)
class GroundTruth:
    """The noise-free log claim-size function ``g`` of a generated dataset.

    Also usable as a model: ``predict(X)`` evaluates ``g`` on a matrix in
    schema column order.
    """

    premium_slope: float
    iv_slope: float
    year_slope: float
    interaction_strength: float
    feature_names: tuple = insurance_schema().names

    def premium_effect(self, premium):
        z = _z_premium(np.asarray(premium, dtype=float))
        return self.premium_slope * z - PREMIUM_CURVATURE * _hump(z)

    def insured_value_effect(self, iv):
        z = _z_iv(np.asarray(iv, dtype=float))
        return self.iv_slope * z - IV_CURVATURE * _hump(z)

    def year_effect(self, year):
        return self.year_slope * (np.asarray(year, dtype=float) - YEAR_CENTER) / YEAR_SCALE

    def interaction(self, usage, premium, iv):
        usage = np.asarray(usage)
        zp = _z_premium(np.asarray(premium, dtype=float))
        zi = _z_iv(np.asarray(iv, dtype=float))
        straighten = (usage == PRIVATE) * (PREMIUM_CURVATURE * _hump(zp) + IV_CURVATURE * _hump(zi))
        bonus = (usage == GENERAL_CARTAGE) * CARTAGE_BONUS / (1 + np.exp(-(zp - CARTAGE_KNEE) / CARTAGE_WIDTH))
        return self.interaction_strength * (straighten + bonus)

    @property
    def components(self):
        """Additive component per feature (the interaction term excluded)."""
        return {
            "premium": self.premium_effect,
            "insured_value": self.insured_value_effect,
            "production_year": self.year_effect,
            "sex": lambda v: SEX_EFFECT[np.asarray(v, dtype=np.int64)],
            "usage": lambda v: USAGE_EFFECT[np.asarray(v, dtype=np.int64)],
            "make": lambda v: MAKE_EFFECT[np.asarray(v, dtype=np.int64)],
        }

    @property
    def signal_features(self):
        return tuple(self.components)

    @property
    def noise_features(self):
        return NOISE_FEATURES

    def log_mean(self, columns):
        """``g`` for a mapping of column name to values (or a Dataset)."""
        if hasattr(columns, "columns"):
            columns = columns.columns
        out = INTERCEPT + sum(f(columns[name]) for name, f in self.components.items())
        return out + self.interaction(columns["usage"], columns["premium"], columns["insured_value"])

    def predict(self, X):
        if hasattr(X, "schema"):
            X = X.X
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        return self.log_mean({name: X[:, j] for j, name in enumerate(self.feature_names)})

    def to_dict(self):
        return {"intercept": INTERCEPT, "premium_slope": self.premium_slope,
                "iv_slope": self.iv_slope, "year_slope": self.year_slope,
                "premium_curvature": PREMIUM_CURVATURE, "iv_curvature": IV_CURVATURE,
                "hump_cap": HUMP_CAP,
                "interaction_strength": self.interaction_strength,
                "sex_effect": SEX_EFFECT.tolist(), "usage_effect": USAGE_EFFECT.tolist(),
                "make_effect": MAKE_EFFECT.tolist(), "cartage_bonus": CARTAGE_BONUS,
                "noise_features": list(NOISE_FEATURES)}


def _draw_predictors(rng, n):
    cat = lambda p: rng.choice(len(p), size=n, p=p)
    contract_year = YEARS[cat(YEAR_WEIGHTS)]
    sex = cat(SEX_P)
    season = cat(SEASON_P)
    insurance_type = cat(INSURANCE_TYPE_P)
    type_vehicle = cat(TYPE_VEHICLE_P)
    usage = cat(USAGE_P)
    make = cat(MAKE_P)
    coverage = cat(COVERAGE_P)
    age = np.rint(rng.gamma(2.0, 5.0, size=n)).astype(np.int64)
    production_year = np.clip(contract_year - age, 1960, contract_year)
    log_iv = LOG_IV_CENTER - 0.005 * (contract_year - production_year - 10) + 0.55 * rng.standard_normal(n)
    insured_value = np.exp(log_iv)
    log_premium = (log_iv + BASE_LOG_RATE + COVERAGE_LOG_RATE[coverage]
                   + USAGE_LOG_RATE[usage] + 0.35 * rng.standard_normal(n))
    columns = {
        "sex": sex, "season": season, "insurance_type": insurance_type,
        "type_vehicle": type_vehicle, "usage": usage, "make": make, "coverage": coverage,
        "production_year": production_year, "insured_value": insured_value,
        "premium": np.exp(log_premium),
    }
    return columns, contract_year


def _claims(rng, columns, log_claim, total_loss_rate):
    """Market value, loss and claim size for positive claims given their log size."""
    n = len(log_claim)
    iv = columns["insured_value"]
    same = rng.random(n) < 0.7
    market = np.where(same, iv, iv * np.exp(0.1 * rng.standard_normal(n)))
    total = rng.random(n) < total_loss_rate
    wanted = np.exp(log_claim)
    loss = np.where(total, np.maximum(market, iv) * (1.0 + 0.2 * rng.random(n)), wanted * market / iv)
    return market, loss, claims_size(iv, market, loss, total_loss=total)


def _slopes_correlations(slopes, base, z, targets_x):
    log_claim = base + z @ slopes
    return np.array([np.corrcoef(log_claim, x)[0, 1] for x in targets_x])


@lru_cache(maxsize=32)
def calibrate_slopes(noise_sd, interaction_strength, total_loss_rate, targets):
    """Slopes (premium, insured value, year) hitting the target correlations.

    Solved by Newton iteration on a fixed Monte-Carlo sample of positive
    claims; ``targets`` are ordered (insured value, premium, production year).
    """
    rng = np.random.default_rng(CALIBRATION_SEED)
    cols, _ = _draw_predictors(rng, CALIBRATION_ROWS)
    zero = GroundTruth(0.0, 0.0, 0.0, interaction_strength)
    eps = rng.standard_normal(CALIBRATION_ROWS)
    total = rng.random(CALIBRATION_ROWS) < total_loss_rate
    base = zero.log_mean(cols) + noise_sd * eps
    zp, zi = _z_premium(cols["premium"]), _z_iv(cols["insured_value"])
    zy = (cols["production_year"] - YEAR_CENTER) / YEAR_SCALE
    z = np.column_stack([zp, zi, zy])
    # total losses pay the insured value regardless of g
    log_iv = np.log(cols["insured_value"])
    base = np.where(total, log_iv, base)
    z = np.where(total[:, None], 0.0, z)
    xs = (cols["insured_value"], cols["premium"], cols["production_year"])
    target = np.asarray(targets)
    slopes = np.array([0.3, 0.2, 0.1])
    for _ in range(50):
        r = _slopes_correlations(slopes, base, z, xs) - target
        if np.max(np.abs(r)) < 1e-10:
            break
        J = np.empty((3, 3))
        for k in range(3):
            step = np.zeros(3)
            step[k] = 1e-6
            J[:, k] = (_slopes_correlations(slopes + step, base, z, xs) - target - r) / 1e-6
        slopes = slopes - np.linalg.solve(J, r)
    else:
        raise InvalidConfig("target_correlations", "calibration did not converge")
    if np.max(np.abs(r)) > 1e-6:
        raise InvalidConfig("target_correlations", "targets are not attainable")
    return tuple(float(s) for s in slopes)


def ground_truth(config):
    slopes = calibrate_slopes(config.noise_sd, config.interaction_strength,
                              config.total_loss_rate, config.target_correlations)
    return GroundTruth(*slopes, interaction_strength=config.interaction_strength)


def generate_synthetic(config=GeneratorConfig()):
    """Draw a claims dataset; the ground truth is attached as ``data.truth``.

    Deterministic in ``config.seed``. Returns a raw-scale :class:`Dataset`
    whose aux columns carry market value, loss and contract year.
    """
    truth = ground_truth(config)
    rng = np.random.default_rng(config.seed)
    n = int(config.n_rows)
    columns, contract_year = _draw_predictors(rng, n)
    positive = rng.random(n) >= config.zero_inflation_rate
    eps = rng.standard_normal(n)
    log_claim = truth.log_mean(columns) + config.noise_sd * eps
    market = columns["insured_value"].copy()
    loss = np.zeros(n)
    claim = np.zeros(n)
    idx = np.flatnonzero(positive)
    sub = {k: v[idx] for k, v in columns.items()}
    market[idx], loss[idx], claim[idx] = _claims(rng, sub, log_claim[idx], config.total_loss_rate)
    aux = {"market_value": market, "loss": loss, "contract_year": contract_year}
    return Dataset(insurance_schema(), columns, claim, aux, truth=truth)
