"""Opioid-naive cohort construction.

A patient enters the cohort at an *index* opioid fill that is preceded by a
clean lookback (no opioid fill in the ``lookback`` days strictly before it).
Outcome diagnoses are then searched in the follow-up window after the index;
the first one sets the OUD label and the censor date.

All operations work on the DataFrames produced by :mod:`oudpipe.claims` and
are independent of input row order.
"""

from __future__ import annotations

import datetime as dt
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import FrozenSet, Optional

import numpy as np
import pandas as pd

from .claims import ClaimsData, StudyWindow, outcome_code_set

OUD = "OUD"
NOUD = "NOUD"

INDEX_RULES = ("first", "latest")
PRIOR_OUTCOME_POLICIES = ("feature", "exclude")

# exclusion reasons, in the order they are checked
NO_OPIOID = "no opioid fill"
NOT_NAIVE = "no naive index fill"
SHORT_FOLLOW_UP = "insufficient follow-up"
MISSING_GENDER = "missing gender"
UNKNOWN_GENDER = "unknown gender"
PRIOR_OUTCOME = "outcome diagnosis before index"
USAGE_OUTCOME = "outcome diagnosis during usage window"


class PatientExcluded(Exception):
    def __init__(self, patient, reason):
        super().__init__(f"{patient}: {reason}")
        self.patient = patient
        self.reason = reason


@dataclass(frozen=True)
class StudyWindows:
    """Day offsets relative to the index date."""

    lookback: int = 365
    usage_window: int = 183
    follow_up: tuple = (183, 365)

    def __post_init__(self):
        start, end = self.follow_up
        if self.lookback <= 0:
            raise ValueError("lookback must be positive")
        if start > end:
            raise ValueError("follow-up starts after it ends")
        if self.usage_window > end:
            raise ValueError("usage window extends past the end of follow-up")
        if self.usage_window < 0 or start < 0:
            raise ValueError("negative window offset")


@dataclass(frozen=True)
class CohortConfig:
    """Study design switches.

    index_rule
        ``"first"`` anchors on the first fill with a clean lookback;
        ``"latest"`` on the most recent such fill.
    prior_outcome
        What to do with outcome-set diagnoses dated before the index:
        ``"feature"`` keeps the patient (the codes become history features),
        ``"exclude"`` removes the patient.
    exclude_usage_outcomes
        Remove patients with any outcome diagnosis dated from the index up to
        the start of follow-up.
    calendar
        Optional data span. When given, an index fill must have its whole
        lookback and follow-up inside it.
    """

    windows: StudyWindows = field(default_factory=StudyWindows)
    index_rule: str = "first"
    prior_outcome: str = "feature"
    exclude_usage_outcomes: bool = True
    calendar: Optional[StudyWindow] = None
    outcome_codes: FrozenSet[str] = field(default_factory=outcome_code_set)

    def __post_init__(self):
        if self.index_rule not in INDEX_RULES:
            raise ValueError(f"index_rule must be one of {INDEX_RULES}")
        if self.prior_outcome not in PRIOR_OUTCOME_POLICIES:
            raise ValueError(f"prior_outcome must be one of {PRIOR_OUTCOME_POLICIES}")


@dataclass(frozen=True)
class CohortMember:
    patient: str
    index_date: dt.date
    label: str
    censor_date: Optional[dt.date] = None

    def __post_init__(self):
        if self.label not in (OUD, NOUD):
            raise ValueError(f"bad label {self.label!r}")
        if (self.censor_date is None) != (self.label == NOUD):
            raise ValueError("censor_date is required for OUD and forbidden for NOUD")
        if self.censor_date is not None and self.censor_date <= self.index_date:
            raise ValueError("censor_date must be after index_date")


@dataclass
class Cohort:
    """Labeled cohort (one row per patient, sorted by id) and exclusion tally."""

    members: pd.DataFrame
    exclusions: dict

    def __len__(self):
        return len(self.members)

    def member_list(self):
        out = []
        for pid, idx, lab, cen in self.members[["patient_id", "index_date", "label",
                                                  "censor_date"]].itertuples(index=False):
            out.append(CohortMember(pid, idx.date(), lab, None if pd.isna(cen) else cen.date()))
        return out

    @property
    def is_oud(self) -> np.ndarray:
        return (self.members["label"] == OUD).to_numpy()


def _days(n) -> pd.Timedelta:
    return pd.Timedelta(days=int(n))


def _empty_members() -> pd.DataFrame:
    return pd.DataFrame({
        "patient_id": pd.Series(dtype=object),
        "index_date": pd.Series(dtype="datetime64[ns]"),
        "label": pd.Series(dtype=object),
        "censor_date": pd.Series(dtype="datetime64[ns]"),
    })


def identify_naive(pharmacy: pd.DataFrame, config: CohortConfig = CohortConfig(),
                   return_reasons: bool = False):
    """Find each patient's index fill.

    Returns a frame ``(patient_id, index_date)`` sorted by patient. With
    ``return_reasons`` also returns a Series of exclusion reasons for patients
    that have opioid fills but no usable index.
    """
    lookback = config.windows.lookback
    fills = pharmacy.loc[pharmacy["is_opioid"], ["patient_id", "fill_date"]]
    fills = fills.drop_duplicates().sort_values(["patient_id", "fill_date"], kind="stable")
    prev = fills.groupby("patient_id", sort=False)["fill_date"].shift()
    gap = (fills["fill_date"] - prev).dt.days
    clean = prev.isna() | (gap > lookback)
    observable = pd.Series(True, index=fills.index)
    cal = config.calendar
    if cal is not None:
        observable &= fills["fill_date"] - _days(lookback) >= pd.Timestamp(cal.start)
    cand = fills.loc[clean & observable]
    if cal is not None:
        fits = cand["fill_date"] + _days(config.windows.follow_up[1]) <= pd.Timestamp(cal.end)
        eligible = cand.loc[fits]
    else:
        eligible = cand
    group = eligible.groupby("patient_id", sort=True)["fill_date"]
    chosen = group.min() if config.index_rule == "first" else group.max()

    patients = pd.Index(fills["patient_id"].unique(), name="patient_id")
    reasons = pd.Series(NOT_NAIVE, index=patients)
    reasons[patients.isin(cand["patient_id"])] = SHORT_FOLLOW_UP
    reasons = reasons.drop(chosen.index)

    out = chosen.rename("index_date").reset_index()
    out = out.sort_values("patient_id", kind="stable").reset_index(drop=True)
    if return_reasons:
        return out, reasons.sort_index()
    return out


def label_outcomes(index: pd.DataFrame, medical: pd.DataFrame,
                   config: CohortConfig = CohortConfig()) -> pd.DataFrame:
    """Label every indexed patient from outcome diagnoses.

    Returns ``index`` with columns ``label``, ``censor_date`` and ``excluded``
    (the exclusion reason, or ``None``).
    """
    w = config.windows
    out = index[["patient_id", "index_date"]].copy()
    out["label"] = NOUD
    out["censor_date"] = pd.NaT
    out["excluded"] = None
    if out.empty:
        return out

    hits = medical.loc[medical["icd9"].isin(config.outcome_codes), ["patient_id", "service_date"]]
    hits = hits.merge(out[["patient_id", "index_date"]], on="patient_id", how="inner")
    t = (hits["service_date"] - hits["index_date"]).dt.days
    hits = hits.assign(t=t.to_numpy())

    if config.exclude_usage_outcomes:
        prior = hits["t"] < 0
        early = (hits["t"] >= 0) & (hits["t"] < w.follow_up[0])
        qualifying = (hits["t"] >= w.follow_up[0]) & (hits["t"] <= w.follow_up[1])
    else:
        prior = hits["t"] < 0
        early = pd.Series(False, index=hits.index)
        qualifying = (hits["t"] > 0) & (hits["t"] <= w.follow_up[1])

    first = hits.loc[qualifying].groupby("patient_id")["service_date"].min()
    key = out["patient_id"]
    censor = key.map(first)
    out["censor_date"] = censor.to_numpy()
    out.loc[censor.notna().to_numpy(), "label"] = OUD

    early_flag = key.isin(hits.loc[early, "patient_id"])
    prior_flag = key.isin(hits.loc[prior, "patient_id"])

    if config.prior_outcome == "exclude":
        out.loc[prior_flag.to_numpy(), "excluded"] = PRIOR_OUTCOME
    usage = early_flag & out["excluded"].isna()
    out.loc[usage.to_numpy(), "excluded"] = USAGE_OUTCOME
    return out


def label_outcome(member, medical: pd.DataFrame, config: CohortConfig = CohortConfig()) -> CohortMember:
    """Label one patient. ``member`` is ``(patient_id, index_date)``.

    Raises :class:`PatientExcluded` when the outcome history rules the
    patient out.
    """
    pid, index_date = member
    frame = pd.DataFrame({"patient_id": [pid], "index_date": [pd.Timestamp(index_date)]})
    row = label_outcomes(frame, medical[medical["patient_id"] == pid], config).iloc[0]
    if row["excluded"] is not None:
        raise PatientExcluded(pid, row["excluded"])
    censor = None if pd.isna(row["censor_date"]) else pd.Timestamp(row["censor_date"]).date()
    return CohortMember(pid, pd.Timestamp(index_date).date(), row["label"], censor)


def build_cohort(claims: ClaimsData, config: CohortConfig = CohortConfig()) -> Cohort:
    """Naive identification, outcome labeling and gender exclusion.

    Every patient seen in any of the three tables is either a member or
    counted once in ``exclusions`` under the first reason that applies.
    """
    everyone = pd.Index(pd.concat([claims.pharmacy["patient_id"], claims.medical["patient_id"],
                                   claims.eligibility["patient_id"]]).unique())
    tally: Counter = Counter()
    if len(everyone) == 0:
        return Cohort(_empty_members(), {})

    index, reasons = identify_naive(claims.pharmacy, config, return_reasons=True)
    has_opioid = set(claims.pharmacy.loc[claims.pharmacy["is_opioid"], "patient_id"])
    tally[NO_OPIOID] += sum(1 for p in everyone if p not in has_opioid)
    tally.update(reasons.to_list())

    elig = claims.eligibility.set_index("patient_id")["gender"]
    gender = index["patient_id"].map(elig).fillna("missing")
    for value, reason in (("missing", MISSING_GENDER), ("unknown", UNKNOWN_GENDER)):
        drop = (gender == value).to_numpy()
        tally[reason] += int(drop.sum())
        index, gender = index.loc[~drop], gender.loc[~drop]

    labeled = label_outcomes(index, claims.medical, config)
    tally.update(labeled["excluded"].dropna().to_list())
    members = labeled.loc[labeled["excluded"].isna(), ["patient_id", "index_date", "label",
                                                       "censor_date"]]
    members = members.sort_values("patient_id", kind="stable").reset_index(drop=True)
    members["censor_date"] = pd.to_datetime(members["censor_date"])
    return Cohort(members, {k: int(v) for k, v in sorted(tally.items()) if v})


def write_cohort(cohort: Cohort, path) -> None:
    m = cohort.members
    frame = pd.DataFrame({
        "patient_id": m["patient_id"],
        "index_date": m["index_date"].dt.strftime("%Y-%m-%d"),
        "label": m["label"],
        "censor_date": m["censor_date"].dt.strftime("%Y-%m-%d").fillna(""),
    })
    frame.to_csv(path, index=False, lineterminator="\n")


def read_cohort(path, exclusions_path=None) -> Cohort:
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    members = pd.DataFrame({
        "patient_id": frame["patient_id"].astype(object),
        "index_date": pd.to_datetime(frame["index_date"], format="%Y-%m-%d"),
        "label": frame["label"].astype(object),
        "censor_date": pd.to_datetime(frame["censor_date"].mask(frame["censor_date"] == ""), format="%Y-%m-%d"),
    }) if len(frame) else _empty_members()
    exclusions = {}
    if exclusions_path is not None and Path(exclusions_path).exists():
        exclusions = json.loads(Path(exclusions_path).read_text())["exclusions"]
    return Cohort(members, exclusions)
