"""Patient-level feature engineering.

One row per cohort member, built from three groups of columns:

* demographics: ``male`` (female is the reference) and one-hot age buckets;
* chronicity: one-hot level of the proportion of days covered (PDC) by
  opioid supply in the year after the index fill;
* diagnosis counts: ``dx_<icd9>`` = number of claims with that code in the
  history window, ``[index - lookback, index + usage_window]``.

Values are stored as a ``scipy.sparse`` CSR matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import sparse

from .claims import ClaimsData, format_icd9, icd9_descriptions, normalize_icd9, read_code_list
from .cohort import OUD, Cohort, StudyWindows

PDC_HORIZON = 365

DEMOGRAPHIC = "demographic"
CHRONICITY = "chronicity"
DX_COUNT = "dx_count"


class AgeBucket(str, Enum):
    UNDER_18 = "age_under_18"
    A18_25 = "age_18_25"
    A26_35 = "age_26_35"
    A36_55 = "age_36_55"
    A56_64 = "age_56_64"
    A65_PLUS = "age_65_plus"


class ChronicityLevel(str, Enum):
    NON_CHRONIC = "chronic_non"
    LESS_CHRONIC = "chronic_less"
    MODERATE_CHRONIC = "chronic_moderate"
    HIGH_CHRONIC = "chronic_high"


MALE = "male"
# dropped from the logistic design so odds ratios read against female / 65+ / non-chronic
REFERENCE_COLUMNS = frozenset({AgeBucket.A65_PLUS.value, ChronicityLevel.NON_CHRONIC.value})

# (lowest age, bucket), ascending
_AGE_EDGES = ((0, AgeBucket.UNDER_18), (18, AgeBucket.A18_25), (26, AgeBucket.A26_35),
              (36, AgeBucket.A36_55), (56, AgeBucket.A56_64), (65, AgeBucket.A65_PLUS))


def dx_feature_name(code: str) -> str:
    return "dx_" + format_icd9(code)


def dx_code_of(name: str) -> Optional[str]:
    return normalize_icd9(name[3:]) if name.startswith("dx_") else None


def bucket_age(age, noud_mean_age: Optional[float] = None) -> AgeBucket:
    """Age bucket, imputing a missing age as the rounded NOUD mean age.

    Raises ``ValueError`` for a negative age, or for a missing age when no
    mean is supplied.
    """
    if age is None or (isinstance(age, float) and math.isnan(age)):
        if noud_mean_age is None:
            raise ValueError("missing age and no NOUD mean age to impute from")
        age = round_half_up(noud_mean_age)
    if age < 0:
        raise ValueError(f"negative age: {age}")
    bucket = _AGE_EDGES[0][1]
    for lo, b in _AGE_EDGES:
        if age >= lo:
            bucket = b
    return bucket


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def chronicity_level(pdc: float) -> ChronicityLevel:
    """Half-open PDC bands: [0, .2) non, [.2, .5) less, [.5, .8) moderate, [.8, 1] high."""
    if pdc < 0.20:
        return ChronicityLevel.NON_CHRONIC
    if pdc < 0.50:
        return ChronicityLevel.LESS_CHRONIC
    if pdc < 0.80:
        return ChronicityLevel.MODERATE_CHRONIC
    return ChronicityLevel.HIGH_CHRONIC


def compute_pdc(fills, index_date, horizon: int = PDC_HORIZON) -> float:
    """Proportion of days covered in ``[index, index + horizon)``.

    ``fills`` is an iterable of ``(fill_date, days_supply)``. Each fill covers
    ``[fill_date, fill_date + days_supply)``; overlapping days count once and
    coverage past the horizon is cut off.
    """
    start = pd.Timestamp(index_date)
    intervals = []
    for fill_date, supply in fills:
        a = (pd.Timestamp(fill_date) - start).days
        b = a + int(supply)
        a, b = max(a, 0), min(b, horizon)
        if b > a:
            intervals.append((a, b))
    intervals.sort()
    covered, reach = 0, 0
    for a, b in intervals:
        if b > reach:
            covered += b - max(a, reach)
            reach = b
    return covered / horizon


def batch_pdc(pharmacy: pd.DataFrame, index: pd.DataFrame, horizon: int = PDC_HORIZON) -> np.ndarray:
    """PDC per patient for every row of ``index`` (patient_id, index_date)."""
    fills = pharmacy.loc[pharmacy["is_opioid"], ["patient_id", "fill_date", "days_supply"]]
    fills = fills.merge(index[["patient_id", "index_date"]], on="patient_id", how="inner")
    a = (fills["fill_date"] - fills["index_date"]).dt.days.to_numpy()
    b = a + fills["days_supply"].to_numpy()
    a, b = np.maximum(a, 0), np.minimum(b, horizon)
    keep = b > a
    iv = pd.DataFrame({"patient_id": fills["patient_id"].to_numpy()[keep], "a": a[keep], "b": b[keep]})
    iv = iv.sort_values(["patient_id", "a", "b"], kind="stable")
    # coverage reach before each interval = running max of earlier ends
    reach = iv.groupby("patient_id", sort=False)["b"].cummax()
    prior = reach.groupby(iv["patient_id"], sort=False).shift().fillna(0).to_numpy()
    gained = np.clip(iv["b"].to_numpy() - np.maximum(iv["a"].to_numpy(), prior), 0, None)
    covered = pd.Series(gained, index=iv["patient_id"].to_numpy()).groupby(level=0).sum()
    return index["patient_id"].map(covered).fillna(0).to_numpy() / horizon


def _in_window(frame, date_col, windows: StudyWindows):
    lo = frame["index_date"] - pd.Timedelta(days=windows.lookback)
    hi = frame["index_date"] + pd.Timedelta(days=windows.usage_window)
    ok = (frame[date_col] >= lo) & (frame[date_col] <= hi)
    censored = frame["censor_date"].notna() & (frame[date_col] >= frame["censor_date"])
    return ok & ~censored


def dx_count_features(medical: pd.DataFrame, member, windows: StudyWindows = StudyWindows(),
                      exclude_codes=frozenset()) -> dict:
    """Diagnosis counts for one member, as ``{normalized code: count}``."""
    frame = medical.loc[medical["patient_id"] == member.patient].copy()
    frame["index_date"] = pd.Timestamp(member.index_date)
    frame["censor_date"] = pd.Timestamp(member.censor_date) if member.censor_date else pd.NaT
    frame = frame.loc[_in_window(frame, "service_date", windows) & ~frame["icd9"].isin(exclude_codes)]
    return {k: int(v) for k, v in frame["icd9"].value_counts().sort_index().items()}


@dataclass
class FeatureMatrix:
    """Sparse patient x feature table.

    ``y`` is 1 for OUD. Serialized labels use the opposite encoding
    (OUD = 0, NOUD = 1), see :attr:`encoded_labels`.
    """

    patient_ids: np.ndarray
    names: list
    kinds: list
    values: sparse.csr_matrix
    y: np.ndarray
    descriptions: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = sparse.csr_matrix(self.values, dtype=float)
        self.y = np.asarray(self.y, dtype=np.int8)
        self.patient_ids = np.asarray(self.patient_ids, dtype=object)
        if self.values.shape != (len(self.patient_ids), len(self.names)):
            raise ValueError("value matrix does not match row/column catalog")
        if len(self.kinds) != len(self.names) or len(self.y) != len(self.patient_ids):
            raise ValueError("catalog or label length mismatch")

    @property
    def shape(self):
        return self.values.shape

    @property
    def encoded_labels(self) -> np.ndarray:
        return 1 - self.y

    def dense(self, names: Optional[Sequence[str]] = None) -> np.ndarray:
        if names is None:
            return self.values.toarray()
        return self.values[:, self.column_indices(names)].toarray()

    def column_indices(self, names: Sequence[str]) -> np.ndarray:
        pos = {n: i for i, n in enumerate(self.names)}
        missing = [n for n in names if n not in pos]
        if missing:
            raise KeyError(f"unknown feature(s): {missing[:5]}")
        return np.array([pos[n] for n in names], dtype=np.intp)

    def column(self, name: str) -> np.ndarray:
        return self.dense([name])[:, 0]

    def select_columns(self, names: Sequence[str]) -> "FeatureMatrix":
        idx = self.column_indices(names)
        return FeatureMatrix(self.patient_ids, list(names), [self.kinds[i] for i in idx],
                             self.values[:, idx], self.y, self.descriptions)

    def select_rows(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows)
        return FeatureMatrix(self.patient_ids[rows], list(self.names), list(self.kinds),
                             self.values[rows], self.y[rows], self.descriptions)

    def design(self, drop_reference: bool = True) -> "FeatureMatrix":
        """Columns used for modelling; reference categories removed by default."""
        if not drop_reference:
            return self
        return self.select_columns([n for n in self.names if n not in REFERENCE_COLUMNS])

    def catalog(self) -> list:
        return [{"name": n, "kind": k, "description": self.descriptions.get(n, "")}
                for n, k in zip(self.names, self.kinds)]

    # -- sparse triplet files ------------------------------------------------

    def write(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        coo = self.values.tocoo()
        order = np.lexsort((coo.col, coo.row))
        names = np.asarray(self.names, dtype=object)
        trip = pd.DataFrame({
            "patient_id": self.patient_ids[coo.row[order]],
            "feature_name": names[coo.col[order]],
            "value": [format(float(v), ".17g") for v in coo.data[order]],
        })
        trip.to_csv(d / "features.csv", index=False, lineterminator="\n")
        pd.DataFrame({"patient_id": self.patient_ids, "label": self.encoded_labels}).to_csv(
            d / "labels.csv", index=False, lineterminator="\n")
        (d / "catalog.json").write_text(json.dumps(self.catalog(), indent=1) + "\n")

    @classmethod
    def read(cls, directory) -> "FeatureMatrix":
        d = Path(directory)
        labels = pd.read_csv(d / "labels.csv", dtype={"patient_id": str})
        catalog = json.loads((d / "catalog.json").read_text())
        trip = pd.read_csv(d / "features.csv", dtype={"patient_id": str, "feature_name": str})
        row_of = pd.Series(np.arange(len(labels)), index=labels["patient_id"])
        col_of = pd.Series(np.arange(len(catalog)), index=[c["name"] for c in catalog])
        values = sparse.coo_matrix(
            (trip["value"].to_numpy(dtype=float),
             (row_of[trip["patient_id"]].to_numpy(), col_of[trip["feature_name"]].to_numpy())),
            shape=(len(labels), len(catalog))).tocsr()
        return cls(labels["patient_id"].to_numpy(dtype=object), [c["name"] for c in catalog],
                   [c["kind"] for c in catalog], values, 1 - labels["label"].to_numpy(),
                   {c["name"]: c["description"] for c in catalog if c["description"]})


def dependency_history_keywords() -> tuple:
    with resources.as_file(resources.files("oudpipe") / "data" / "dependency_history_keywords.txt") as p:
        return tuple(sorted(k.lower() for k in read_code_list(p)))


def ablated_codes(codes, descriptions: dict, keywords: Sequence[str]) -> set:
    """Codes whose description contains any ablation keyword."""
    out = set()
    for c in codes:
        text = descriptions.get(c, "").lower()
        if any(k in text for k in keywords):
            out.add(c)
    return out


@dataclass(frozen=True)
class FeatureConfig:
    windows: StudyWindows = field(default_factory=StudyWindows)
    # outcome-set codes seen in the lookback are history features, not labels
    outcome_history_features: bool = True


def build_matrix(cohort: Cohort, claims: ClaimsData, config: FeatureConfig = FeatureConfig(),
                 ablate_dependency_history: bool = False, impute_rows=None,
                 outcome_codes=frozenset()) -> FeatureMatrix:
    """Assemble the patient x feature matrix for ``cohort``.

    ``impute_rows`` restricts which rows contribute to the NOUD mean age used
    for missing ages (pass the training partition to avoid leakage); by
    default every row does.
    """
    members = cohort.members
    if len(members) == 0:
        raise ValueError("empty cohort")
    n = len(members)
    y = (members["label"] == OUD).to_numpy().astype(np.int8)
    pids = members["patient_id"].to_numpy(dtype=object)

    elig = claims.eligibility.set_index("patient_id")
    age = members["patient_id"].map(elig["age"]).to_numpy(dtype=float)
    gender = members["patient_id"].map(elig["gender"]).to_numpy(dtype=object)
    if np.isnan(age).any():
        pool = np.zeros(n, bool)
        pool[np.arange(n) if impute_rows is None else np.asarray(impute_rows)] = True
        known = pool & (y == 0) & ~np.isnan(age)
        if not known.any():
            raise ValueError("cannot impute missing ages: no NOUD patient with a known age")
        mean_age = float(age[known].mean())
    else:
        mean_age = None
    buckets = [bucket_age(a, mean_age).value for a in age]
    levels = [chronicity_level(p).value for p in batch_pdc(claims.pharmacy, members)]

    columns: dict = {MALE: (gender == "male").astype(float)}
    kinds = {MALE: DEMOGRAPHIC}
    for b in AgeBucket:
        columns[b.value] = np.array([v == b.value for v in buckets], dtype=float)
        kinds[b.value] = DEMOGRAPHIC
    for lvl in ChronicityLevel:
        columns[lvl.value] = np.array([v == lvl.value for v in levels], dtype=float)
        kinds[lvl.value] = CHRONICITY

    med = claims.medical.merge(members[["patient_id", "index_date", "censor_date"]],
                               on="patient_id", how="inner")
    med = med.loc[_in_window(med, "service_date", config.windows)]
    if not config.outcome_history_features:
        med = med.loc[~med["icd9"].isin(outcome_codes)]
    descriptions = icd9_descriptions()
    codes = sorted(med["icd9"].unique())
    if ablate_dependency_history:
        drop = ablated_codes(codes, descriptions, dependency_history_keywords())
        codes = [c for c in codes if c not in drop]
        med = med.loc[med["icd9"].isin(codes)]
    counts = med.groupby(["patient_id", "icd9"]).size()
    row_of = pd.Series(np.arange(n), index=pids)
    code_col = {c: i for i, c in enumerate(codes)}
    dx = sparse.coo_matrix(
        (counts.to_numpy(dtype=float),
         (row_of[counts.index.get_level_values(0)].to_numpy(),
          np.array([code_col[c] for c in counts.index.get_level_values(1)], dtype=np.intp))),
        shape=(n, len(codes))).tocsr()

    dense_names = list(columns)
    names = dense_names + [dx_feature_name(c) for c in codes]
    kind_list = [kinds[k] for k in dense_names] + [DX_COUNT] * len(codes)
    values = sparse.hstack([sparse.csr_matrix(np.column_stack([columns[k] for k in dense_names])),
                            dx]).tocsr()
    if not names:
        raise ValueError("no features")
    order = np.argsort(np.asarray(names, dtype=object), kind="stable")
    desc = {dx_feature_name(c): descriptions[c] for c in codes if c in descriptions}
    return FeatureMatrix(pids, [names[i] for i in order], [kind_list[i] for i in order],
                         values[:, order], y, desc)
