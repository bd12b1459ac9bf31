"""Synthetic claims with a planted logistic risk model.

Each patient first gets latent engineered features (gender, age bucket,
chronicity level, diagnosis counts). OUD is drawn from a logistic model on
those features, and the features are then written back out as raw claims
that the cohort and featurization code re-derive. Because the risk model
lives in feature space, the planted log-odds are directly comparable to a
fitted logistic regression.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit

from .claims import (ClaimsData, StudyWindow, default_opioid_codes, empty_eligibility,
                     empty_medical, empty_pharmacy, normalize_icd9, outcome_code_set, write_claims)
from .features import MALE, AgeBucket, ChronicityLevel, dx_feature_name

AGE_RANGES = {
    AgeBucket.UNDER_18: (12, 17), AgeBucket.A18_25: (18, 25), AgeBucket.A26_35: (26, 35),
    AgeBucket.A36_55: (36, 55), AgeBucket.A56_64: (56, 64), AgeBucket.A65_PLUS: (65, 89),
}
# covered days out of 365 for each chronicity band
COVERED_DAYS = {
    ChronicityLevel.NON_CHRONIC: (1, 72), ChronicityLevel.LESS_CHRONIC: (73, 182),
    ChronicityLevel.MODERATE_CHRONIC: (183, 291), ChronicityLevel.HIGH_CHRONIC: (292, 365),
}

NON_OPIOID_NDCS = ("00093715698", "00378180001", "00172208080", "00093014701", "68180051301",
                   "00071015523", "00006074954", "60505257909")

DEFAULT_AGE_DISTRIBUTION = {
    AgeBucket.UNDER_18.value: 0.0694, AgeBucket.A18_25.value: 0.1175,
    AgeBucket.A26_35.value: 0.1528, AgeBucket.A36_55.value: 0.3561,
    AgeBucket.A56_64.value: 0.1821, AgeBucket.A65_PLUS.value: 0.1221,
}
DEFAULT_CHRONICITY_DISTRIBUTION = {
    ChronicityLevel.NON_CHRONIC.value: 0.60, ChronicityLevel.LESS_CHRONIC.value: 0.20,
    ChronicityLevel.MODERATE_CHRONIC.value: 0.10, ChronicityLevel.HIGH_CHRONIC.value: 0.10,
}


@dataclass(frozen=True)
class DxSpec:
    """One diagnosis-history code.

    A patient carries the code with probability ``prevalence``; carriers get
    ``1 + Poisson(extra_claims)`` claims in the history window.
    """

    code: str
    prevalence: float
    extra_claims: float = 0.0

    @property
    def feature(self) -> str:
        return dx_feature_name(self.code)


# (code, prevalence, mean extra claims)
_DEFAULT_DX = (
    # planted codes emit exactly one claim so the per-claim odds ratio is the carrier odds ratio
    # poisoning history
    ("965.01", 0.04, 0.0), ("965.00", 0.04, 0.0), ("965.09", 0.04, 0.0),
    # dependency / abuse history
    ("304.01", 0.04, 0.0), ("304.00", 0.04, 0.0), ("305.50", 0.04, 0.0), ("304.71", 0.04, 0.0),
    ("303.90", 0.05, 0.0), ("070.54", 0.04, 0.0),
    # background diagnoses
    ("300.02", 0.10, 1.0), ("311", 0.08, 1.0), ("305.1", 0.12, 1.5), ("309.81", 0.03, 1.0),
    ("292.0", 0.01, 0.5), ("977.9", 0.01, 0.0), ("724.2", 0.15, 1.0), ("401.9", 0.20, 2.0),
    ("272.4", 0.15, 1.0), ("250.00", 0.08, 2.0), ("719.46", 0.06, 0.5), ("729.5", 0.07, 0.5),
    ("847.0", 0.03, 0.5), ("784.0", 0.06, 0.3), ("462", 0.08, 0.2), ("465.9", 0.10, 0.3),
    ("530.81", 0.07, 1.0), ("244.9", 0.06, 1.0), ("477.9", 0.05, 0.5), ("V70.0", 0.25, 0.1),
    ("786.50", 0.04, 0.3), ("789.00", 0.05, 0.3), ("682.3", 0.01, 0.3), ("366.16", 0.01, 0.5),
    ("V72.0", 0.04, 0.0), ("V20.2", 0.03, 0.2), ("V58.83", 0.02, 0.5), ("780.09", 0.01, 0.2),
)

DEFAULT_PLANTED_EFFECTS = (
    (MALE, math.log(1.81)),
    (AgeBucket.A18_25.value, math.log(7.47)),
    (AgeBucket.A26_35.value, math.log(11.27)),
    (AgeBucket.A36_55.value, math.log(4.13)),
    (ChronicityLevel.LESS_CHRONIC.value, math.log(4.14)),
    (ChronicityLevel.MODERATE_CHRONIC.value, math.log(13.66)),
    (ChronicityLevel.HIGH_CHRONIC.value, math.log(12.25)),
    ("dx_965.01", math.log(12.79)),
    ("dx_965.00", math.log(4.32)),
    ("dx_965.09", math.log(5.63)),
    ("dx_304.01", math.log(40.0)),
    ("dx_304.00", math.log(30.0)),
    ("dx_305.50", math.log(30.0)),
    ("dx_304.71", math.log(25.0)),
    ("dx_303.90", math.log(3.0)),
    ("dx_070.54", math.log(3.0)),
)

DEFAULT_INTERACTIONS = (
    ((AgeBucket.A18_25.value, ChronicityLevel.HIGH_CHRONIC.value), math.log(6.0)),
    ((MALE, "dx_303.90"), math.log(5.0)),
    ((AgeBucket.A26_35.value, "dx_305.1"), math.log(4.0)),
    # four-way conjunctions: beyond what depth-3 boosting stages or additive models capture
    ((MALE, "dx_401.9", "dx_V70.0", "dx_724.2"), math.log(60.0)),
    (("dx_272.4", "dx_465.9", "dx_305.1", ChronicityLevel.LESS_CHRONIC.value), math.log(60.0)),
)


class CalibrationError(ValueError):
    pass


@dataclass
class GeneratorConfig:
    n_patients: int = 10_000
    seed: int = 0
    target_oud_prevalence: float = 0.01
    male_fraction: float = 0.4451
    age_distribution: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_AGE_DISTRIBUTION))
    chronicity_distribution: Dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_CHRONICITY_DISTRIBUTION))
    dx_specs: Tuple[DxSpec, ...] = tuple(DxSpec(*row) for row in _DEFAULT_DX)
    planted_effects: Tuple[Tuple[str, float], ...] = DEFAULT_PLANTED_EFFECTS
    interaction_effects: Tuple[Tuple[Tuple[str, ...], float], ...] = DEFAULT_INTERACTIONS
    missing_age_fraction: float = 0.0072
    unknown_gender_fraction: float = 0.0002
    study_start: str = "2011-01-01"
    study_end: str = "2015-12-31"
    index_start: str = "2012-01-01"
    index_end: str = "2014-12-31"
    prior_episode_fraction: float = 0.05
    late_outcome_fraction: float = 0.003
    background_claims: float = 1.0
    calibration_samples: int = 200_000
    chunk_size: int = 25_000

    def __post_init__(self):
        self.dx_specs = tuple(s if isinstance(s, DxSpec) else DxSpec(**s) if isinstance(s, dict)
                              else DxSpec(*s) for s in self.dx_specs)
        self.planted_effects = tuple((str(k), float(v)) for k, v in self.planted_effects)
        self.interaction_effects = tuple((tuple(str(f) for f in term), float(v))
                                         for term, v in self.interaction_effects)
        self.validate()

    def validate(self):
        if self.n_patients < 0:
            raise ValueError("n_patients must be >= 0")
        if not 0 < self.target_oud_prevalence < 1:
            raise ValueError("target_oud_prevalence must be in (0, 1)")
        if not 0 <= self.male_fraction <= 1:
            raise ValueError("male_fraction must be in [0, 1]")
        for name, dist, keys in (("age_distribution", self.age_distribution, AgeBucket),
                                 ("chronicity_distribution", self.chronicity_distribution,
                                  ChronicityLevel)):
            if set(dist) != {k.value for k in keys}:
                raise ValueError(f"{name} must have exactly the keys {[k.value for k in keys]}")
            if any(v < 0 for v in dist.values()) or abs(sum(dist.values()) - 1) > 1e-3:
                raise ValueError(f"{name} fractions must be >= 0 and sum to 1")
        known = set(self.feature_names())
        for name, _ in self.planted_effects:
            if name not in known:
                raise ValueError(f"planted effect on unknown feature {name!r}")
        for term, _ in self.interaction_effects:
            if len(term) < 2:
                raise ValueError(f"interaction {term!r} needs at least two features")
            unknown = [f for f in term if f not in known]
            if unknown:
                raise ValueError(f"interaction on unknown feature(s) {unknown}")
        for s in self.dx_specs:
            normalize_icd9(s.code)
            if not 0 <= s.prevalence <= 1 or s.extra_claims < 0:
                raise ValueError(f"bad dx spec {s}")
        if self.index_start < self.study_start or self.index_end > self.study_end:
            raise ValueError("index range must lie inside the study window")

    def feature_names(self) -> list:
        names = [MALE] + [b.value for b in AgeBucket] + [c.value for c in ChronicityLevel]
        return names + [s.feature for s in self.dx_specs]

    @property
    def calendar(self) -> StudyWindow:
        return StudyWindow(dt.date.fromisoformat(self.study_start),
                           dt.date.fromisoformat(self.study_end))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dx_specs"] = [asdict(s) for s in self.dx_specs]
        d["planted_effects"] = [list(p) for p in self.planted_effects]
        d["interaction_effects"] = [[list(pair), v] for pair, v in self.interaction_effects]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        data = dict(data)
        if "dx_specs" in data:
            data["dx_specs"] = tuple(DxSpec(**s) if isinstance(s, dict) else DxSpec(*s)
                                     for s in data["dx_specs"])
        if "planted_effects" in data:
            eff = data["planted_effects"]
            items = eff.items() if isinstance(eff, dict) else eff
            data["planted_effects"] = tuple((k, v) for k, v in items)
        if "interaction_effects" in data:
            data["interaction_effects"] = tuple((tuple(p), v) for p, v in data["interaction_effects"])
        return cls(**data)


@dataclass
class GroundTruth:
    """True OUD probability and sampled label per generated patient."""

    frame: pd.DataFrame          # patient_id, true_probability, label
    intercept: float
    planted_effects: tuple
    interaction_effects: tuple

    def model_json(self) -> dict:
        return {
            "intercept": self.intercept,
            "planted_effects": [{"feature": k, "log_odds": v, "odds_ratio": math.exp(v)}
                                for k, v in self.planted_effects],
            "interaction_effects": [{"features": list(p), "log_odds": v, "odds_ratio": math.exp(v)}
                                    for p, v in self.interaction_effects],
            "n_patients": int(len(self.frame)),
            "realized_prevalence": float((self.frame["label"] == "OUD").mean()) if len(self.frame)
            else 0.0,
        }


# ---------------------------------------------------------------------------
# latent features and risk
# ---------------------------------------------------------------------------

def sample_latent(config: GeneratorConfig, n: int, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    """Draw engineered features for ``n`` patients, keyed by feature name."""
    out: Dict[str, np.ndarray] = {MALE: (rng.random(n) < config.male_fraction).astype(float)}
    ages = [b.value for b in AgeBucket]
    p = np.array([config.age_distribution[a] for a in ages])
    pick = rng.choice(len(ages), size=n, p=p / p.sum())
    for i, a in enumerate(ages):
        out[a] = (pick == i).astype(float)
    levels = [c.value for c in ChronicityLevel]
    p = np.array([config.chronicity_distribution[c] for c in levels])
    pick = rng.choice(len(levels), size=n, p=p / p.sum())
    for i, c in enumerate(levels):
        out[c] = (pick == i).astype(float)
    for s in config.dx_specs:
        carrier = rng.random(n) < s.prevalence
        extra = rng.poisson(s.extra_claims, n) if s.extra_claims > 0 else np.zeros(n, int)
        out[s.feature] = np.where(carrier, 1 + extra, 0).astype(float)
    return out


def linear_predictor(latent: Dict[str, np.ndarray], config: GeneratorConfig,
                     intercept: float = 0.0) -> np.ndarray:
    n = len(latent[MALE])
    eta = np.full(n, float(intercept))
    for name, beta in config.planted_effects:
        eta += beta * latent[name]
    for term, beta in config.interaction_effects:
        eta += beta * np.prod([latent[f] for f in term], axis=0)
    return eta


def calibrate_intercept(config: GeneratorConfig, tol: float = 1e-12, bound: float = 50.0) -> float:
    """Bisect the intercept so the mean planted probability hits the target prevalence.

    The mean is taken over ``config.calibration_samples`` latent draws from a
    stream derived from ``config.seed`` (independent of the patient draws).
    """
    target = config.target_oud_prevalence
    if not config.planted_effects and not config.interaction_effects:
        return math.log(target / (1 - target))
    rng = np.random.default_rng([config.seed, 0xCA1])
    eta = linear_predictor(sample_latent(config, config.calibration_samples, rng), config)

    def mean_p(b):
        return float(expit(eta + b).mean())

    lo, hi = -bound, bound
    if mean_p(lo) > target or mean_p(hi) < target:
        raise CalibrationError(
            f"prevalence {target} unattainable: mean probability spans "
            f"[{mean_p(lo):.4g}, {mean_p(hi):.4g}] over intercepts [{lo}, {hi}]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_p(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# claims emission
# ---------------------------------------------------------------------------

def _fill_schedule(covered: int, rng: np.random.Generator):
    """Day offsets and supplies of fills covering ``covered`` days inside one year."""
    k = -(-covered // 30)
    supplies = [30] * (k - 1) + [covered - 30 * (k - 1)]
    slack = 365 - covered
    total_gap = int(rng.integers(0, slack + 1)) if k > 1 else 0
    cuts = np.sort(rng.integers(0, total_gap + 1, size=k - 1)) if k > 1 else np.array([], int)
    gaps = np.diff(np.concatenate([[0], cuts, [total_gap]]))[: k - 1] if k > 1 else []
    offsets, day = [], 0
    for i, s in enumerate(supplies):
        offsets.append(day)
        day += s + (int(gaps[i]) if i < k - 1 else 0)
    return offsets, supplies


def _uniform_days(rng, lo, hi, size):
    """Uniform integer day offsets in [lo, hi] (arrays allowed)."""
    return lo + np.floor(rng.random(size) * (hi - lo + 1)).astype(np.int64)


def _generate_chunk(config, ids, intercept, rng, opioid_ndcs, outcome_codes):
    n = len(ids)
    latent = sample_latent(config, n, rng)
    prob = expit(linear_predictor(latent, config, intercept))
    oud = rng.random(n) < prob

    start = np.datetime64(config.study_start)
    end = np.datetime64(config.study_end)
    i0, i1 = np.datetime64(config.index_start), np.datetime64(config.index_end)
    index = i0 + _uniform_days(rng, 0, int((i1 - i0).astype(int)), n).astype("timedelta64[D]")

    # pharmacy --------------------------------------------------------------
    level_names = [c.value for c in ChronicityLevel]
    level_idx = np.argmax(np.column_stack([latent[c] for c in level_names]), axis=1)
    ph_pid, ph_date, ph_ndc, ph_supply = [], [], [], []
    opioid_ndcs = sorted(opioid_ndcs)
    for i in range(n):
        lo, hi = COVERED_DAYS[ChronicityLevel(level_names[level_idx[i]])]
        offsets, supplies = _fill_schedule(int(rng.integers(lo, hi + 1)), rng)
        ndc = opioid_ndcs[int(rng.integers(len(opioid_ndcs)))]
        for off, s in zip(offsets, supplies):
            ph_pid.append(ids[i])
            ph_date.append(index[i] + np.timedelta64(off, "D"))
            ph_ndc.append(ndc)
            ph_supply.append(s)
    # an earlier episode whose own lookback predates the data
    latest_prior = np.minimum(index - np.timedelta64(366, "D"), start + np.timedelta64(364, "D"))
    room = (latest_prior - start).astype(int)
    prior = (rng.random(n) < config.prior_episode_fraction) & (room >= 0)
    for i in np.flatnonzero(prior):
        ph_pid.append(ids[i])
        ph_date.append(start + np.timedelta64(int(rng.integers(0, room[i] + 1)), "D"))
        ph_ndc.append(opioid_ndcs[int(rng.integers(len(opioid_ndcs)))])
        ph_supply.append(int(rng.choice([5, 7, 10])))
    # non-opioid background fills
    n_bg = rng.poisson(config.background_claims, n)
    span = int((end - start).astype(int))
    for i in np.flatnonzero(n_bg):
        for _ in range(n_bg[i]):
            ph_pid.append(ids[i])
            ph_date.append(start + np.timedelta64(int(rng.integers(0, span + 1)), "D"))
            ph_ndc.append(NON_OPIOID_NDCS[int(rng.integers(len(NON_OPIOID_NDCS)))])
            ph_supply.append(30)

    # medical ---------------------------------------------------------------
    md_pid, md_date, md_code = [], [], []

    def emit(rows, days, code):
        md_pid.extend(ids[rows])
        md_date.extend(index[rows] + days.astype("timedelta64[D]"))
        md_code.extend([code] * len(rows))

    for s in config.dx_specs:
        code = normalize_icd9(s.code)
        counts = latent[s.feature].astype(int)
        rows = np.repeat(np.arange(n), counts)
        if not len(rows):
            continue
        # outcome-set history codes stay strictly before the index
        hi = -1 if code in outcome_codes else 182
        emit(rows, _uniform_days(rng, -365, hi, len(rows)), code)

    bg_codes = [normalize_icd9(s.code) for s in config.dx_specs
                if normalize_icd9(s.code) not in outcome_codes]
    if bg_codes and config.background_claims > 0:
        # background diagnoses outside the history window
        n_out = rng.poisson(config.background_claims, n)
        rows = np.repeat(np.arange(n), n_out)
        before_room = (index[rows] - np.timedelta64(366, "D") - start).astype(int)
        after_room = (end - index[rows] - np.timedelta64(184, "D")).astype(int)
        go_before = rng.random(len(rows)) < 0.5
        days = np.where(
            go_before,
            -366 - np.floor(rng.random(len(rows)) * (np.maximum(before_room, 0) + 1)).astype(int),
            184 + np.floor(rng.random(len(rows)) * (np.maximum(after_room, 0) + 1)).astype(int))
        ok = np.where(go_before, before_room >= 0, after_room >= 0)
        picks = rng.integers(len(bg_codes), size=len(rows))
        for j in np.flatnonzero(ok):
            md_pid.append(ids[rows[j]])
            md_date.append(index[rows[j]] + np.timedelta64(int(days[j]), "D"))
            md_code.append(bg_codes[picks[j]])

    outcome_list = sorted(outcome_codes)
    oud_rows = np.flatnonzero(oud)
    n_out = 1 + rng.poisson(0.3, len(oud_rows))
    rows = np.repeat(oud_rows, n_out)
    days = _uniform_days(rng, 183, 365, len(rows))
    codes = rng.integers(len(outcome_list), size=len(rows))
    for r, d, c in zip(rows, days, codes):
        md_pid.append(ids[r])
        md_date.append(index[r] + np.timedelta64(int(d), "D"))
        md_code.append(outcome_list[c])
    # diagnoses after follow-up ends do not change the label
    late = np.flatnonzero(~oud & (rng.random(n) < config.late_outcome_fraction))
    for r in late:
        room = int((end - index[r]).astype(int)) - 366
        if room >= 0:
            md_pid.append(ids[r])
            md_date.append(index[r] + np.timedelta64(366 + int(rng.integers(0, room + 1)), "D"))
            md_code.append(outcome_list[int(rng.integers(len(outcome_list)))])

    # eligibility -----------------------------------------------------------
    age_names = [b.value for b in AgeBucket]
    age_idx = np.argmax(np.column_stack([latent[a] for a in age_names]), axis=1)
    age = np.empty(n)
    for j, name in enumerate(age_names):
        lo, hi = AGE_RANGES[AgeBucket(name)]
        rows = age_idx == j
        age[rows] = rng.integers(lo, hi + 1, size=rows.sum())
    age[~oud & (rng.random(n) < config.missing_age_fraction)] = np.nan
    gender = np.where(latent[MALE] > 0, "male", "female").astype(object)
    gender[rng.random(n) < config.unknown_gender_fraction] = "unknown"
    zips = np.array([f"0{z}" for z in rng.integers(1000, 2800, size=n)], dtype=object)

    pharmacy = pd.DataFrame({
        "patient_id": np.array(ph_pid, dtype=object),
        "fill_date": np.array(ph_date, dtype="datetime64[D]").astype("datetime64[ns]"),
        "ndc": np.array(ph_ndc, dtype=object),
        "days_supply": np.array(ph_supply, dtype=np.int64),
    })
    medical = pd.DataFrame({
        "patient_id": np.array(md_pid, dtype=object),
        "service_date": np.array(md_date, dtype="datetime64[D]").astype("datetime64[ns]"),
        "icd9": np.array(md_code, dtype=object),
    })
    eligibility = pd.DataFrame({"patient_id": np.array(ids, dtype=object), "age": age,
                                "gender": gender, "zip": zips})
    truth = pd.DataFrame({"patient_id": np.array(ids, dtype=object), "true_probability": prob,
                          "label": np.where(oud, "OUD", "NOUD").astype(object)})
    return pharmacy, medical, eligibility, truth, latent


def generate(config: GeneratorConfig, opioid_codes=None, return_latent: bool = False):
    """Generate ``(ClaimsData, GroundTruth)`` for ``config``.

    Deterministic for a fixed seed. Patients are produced in chunks of
    ``config.chunk_size`` with independent child seeds and concatenated in id
    order. Claim rows are sorted by patient then date.
    """
    if opioid_codes is None:
        opioid_codes = default_opioid_codes()
    if not opioid_codes:
        raise ValueError("need at least one opioid code to emit opioid fills")
    outcome_codes = outcome_code_set()
    intercept = calibrate_intercept(config) if config.n_patients else 0.0
    width = max(7, len(str(config.n_patients)))
    ids_all = np.array([f"P{i:0{width}d}" for i in range(1, config.n_patients + 1)], dtype=object)
    n_chunks = -(-config.n_patients // config.chunk_size) if config.n_patients else 0
    seeds = np.random.SeedSequence(config.seed).spawn(n_chunks)
    parts = []
    for c in range(n_chunks):
        ids = ids_all[c * config.chunk_size:(c + 1) * config.chunk_size]
        parts.append(_generate_chunk(config, ids, intercept, np.random.default_rng(seeds[c]),
                                     opioid_codes, outcome_codes))
    if parts:
        pharmacy = pd.concat([p[0] for p in parts], ignore_index=True)
        medical = pd.concat([p[1] for p in parts], ignore_index=True)
        eligibility = pd.concat([p[2] for p in parts], ignore_index=True)
        truth = pd.concat([p[3] for p in parts], ignore_index=True)
        latent = {k: np.concatenate([p[4][k] for p in parts]) for k in parts[0][4]}
    else:
        pharmacy, medical, eligibility = empty_pharmacy().drop(columns="is_opioid"), empty_medical(), \
            empty_eligibility()
        truth = pd.DataFrame({"patient_id": pd.Series(dtype=object),
                              "true_probability": pd.Series(dtype=float),
                              "label": pd.Series(dtype=object)})
        latent = {k: np.zeros(0) for k in config.feature_names()}
    pharmacy = pharmacy.sort_values(["patient_id", "fill_date", "ndc"], kind="stable",
                                    ignore_index=True)
    pharmacy["is_opioid"] = pharmacy["ndc"].isin(opioid_codes)
    medical = medical.sort_values(["patient_id", "service_date", "icd9"], kind="stable",
                                  ignore_index=True)
    claims = ClaimsData(pharmacy, medical, eligibility)
    gt = GroundTruth(truth, intercept, config.planted_effects, config.interaction_effects)
    if return_latent:
        return claims, gt, latent
    return claims, gt


def write_synthetic(claims: ClaimsData, truth: GroundTruth, directory) -> dict:
    """Write the three claim files, ``ground_truth.csv`` and ``planted_model.json``."""
    d = Path(directory)
    paths = write_claims(claims, d)
    gt = truth.frame.copy()
    gt["true_probability"] = [format(float(p), ".17g") for p in gt["true_probability"]]
    gt.to_csv(d / "ground_truth.csv", index=False, lineterminator="\n")
    (d / "planted_model.json").write_text(json.dumps(truth.model_json(), indent=1) + "\n")
    paths["ground_truth.csv"] = d / "ground_truth.csv"
    paths["planted_model.json"] = d / "planted_model.json"
    return paths
