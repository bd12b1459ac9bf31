"""Claim-level record types, ICD-9 handling and CSV parsing.

Claims are carried through the pipeline as pandas DataFrames, one per input
file. The frozen record classes below exist for row-level validation and for
building small rosters by hand (see :func:`records_to_frames`).

Column layout of the three input files::

    pharmacy.csv     patient_id,fill_date,ndc,days_supply
    medical.csv      patient_id,service_date,icd9
    eligibility.csv  patient_id,age,gender,zip

Dates are ``YYYY-MM-DD``. Gender is one of ``M``, ``F``, ``U`` or blank.
"""

from __future__ import annotations

import csv
import datetime as dt
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

PHARMACY_COLUMNS = ("patient_id", "fill_date", "ndc", "days_supply")
MEDICAL_COLUMNS = ("patient_id", "service_date", "icd9")
ELIGIBILITY_COLUMNS = ("patient_id", "age", "gender", "zip")

MAX_DAYS_SUPPLY = 365

GENDERS = ("male", "female", "unknown", "missing")
_GENDER_FROM_FILE = {"M": "male", "F": "female", "U": "unknown", "": "missing"}
_GENDER_TO_FILE = {v: k for k, v in _GENDER_FROM_FILE.items()}

# With or without the decimal point: 965.01 / 96501, V58.83, E850.0
_ICD9_RE = re.compile(
    r"^(?:\d{3}(?:\.?\d{1,2})?|V\d{2}(?:\.?\d{1,2})?|E\d{3}(?:\.?\d)?)$"
)


class ClaimsError(ValueError):
    """Raised for unusable claim inputs (missing files, bad headers)."""


def normalize_icd9(code: str) -> str:
    """Return the join-key form of an ICD-9 code (upper case, no decimal point).

    >>> normalize_icd9("965.01")
    '96501'
    >>> normalize_icd9("e850.0")
    'E8500'
    """
    text = str(code).strip().upper()
    if not _ICD9_RE.match(text):
        raise ValueError(f"not an ICD-9 code: {code!r}")
    return text.replace(".", "")


def format_icd9(code: str) -> str:
    """Render a normalized code with its decimal point (``'E8500'`` -> ``'E850.0'``)."""
    code = normalize_icd9(code)
    head = 4 if code.startswith("E") else 3
    if len(code) <= head:
        return code
    return f"{code[:head]}.{code[head:]}"


def is_icd9(code: str) -> bool:
    return bool(_ICD9_RE.match(str(code).strip().upper()))


@dataclass(frozen=True)
class StudyWindow:
    """Calendar span covered by the claims extract."""

    start: dt.date
    end: dt.date

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError("study window ends before it starts")

    def contains(self, day: dt.date) -> bool:
        return self.start <= day <= self.end


@dataclass(frozen=True)
class PharmacyClaim:
    patient: str
    fill_date: dt.date
    drug_code: str
    days_supply: int
    is_opioid: bool = False

    def __post_init__(self):
        if not self.patient:
            raise ValueError("empty patient id")
        if not self.drug_code:
            raise ValueError("empty drug code")
        if not 0 <= self.days_supply <= MAX_DAYS_SUPPLY:
            raise ValueError(f"days_supply outside [0, {MAX_DAYS_SUPPLY}]: {self.days_supply}")


@dataclass(frozen=True)
class MedicalClaim:
    patient: str
    service_date: dt.date
    diagnosis: str

    def __post_init__(self):
        if not self.patient:
            raise ValueError("empty patient id")
        object.__setattr__(self, "diagnosis", normalize_icd9(self.diagnosis))


@dataclass(frozen=True)
class EligibilityRecord:
    patient: str
    age: Optional[int] = None
    gender: str = "missing"
    zip: str = ""

    def __post_init__(self):
        if not self.patient:
            raise ValueError("empty patient id")
        if self.gender not in GENDERS:
            raise ValueError(f"unknown gender value {self.gender!r}")
        if self.age is not None and self.age < 0:
            raise ValueError(f"negative age: {self.age}")


@dataclass
class ClaimsData:
    """The three claim tables plus parse diagnostics.

    ``pharmacy`` columns: patient_id, fill_date, ndc, days_supply, is_opioid.
    ``medical`` columns: patient_id, service_date, icd9 (normalized).
    ``eligibility`` columns: patient_id, age (float, NaN if missing), gender, zip.
    """

    pharmacy: pd.DataFrame
    medical: pd.DataFrame
    eligibility: pd.DataFrame
    rejects: pd.DataFrame = field(default_factory=lambda: _empty_rejects())
    row_counts: dict = field(default_factory=dict)


def _empty_rejects() -> pd.DataFrame:
    return pd.DataFrame({"file": pd.Series(dtype=str), "line": pd.Series(dtype=np.int64),
                         "reason": pd.Series(dtype=str)})


def empty_pharmacy() -> pd.DataFrame:
    return pd.DataFrame({
        "patient_id": pd.Series(dtype=object),
        "fill_date": pd.Series(dtype="datetime64[ns]"),
        "ndc": pd.Series(dtype=object),
        "days_supply": pd.Series(dtype=np.int64),
        "is_opioid": pd.Series(dtype=bool),
    })


def empty_medical() -> pd.DataFrame:
    return pd.DataFrame({
        "patient_id": pd.Series(dtype=object),
        "service_date": pd.Series(dtype="datetime64[ns]"),
        "icd9": pd.Series(dtype=object),
    })


def empty_eligibility() -> pd.DataFrame:
    return pd.DataFrame({
        "patient_id": pd.Series(dtype=object),
        "age": pd.Series(dtype=float),
        "gender": pd.Series(dtype=object),
        "zip": pd.Series(dtype=object),
    })


# ---------------------------------------------------------------------------
# opioid lookup
# ---------------------------------------------------------------------------

def read_code_list(path) -> frozenset:
    """One code per line; blank lines and ``#`` comments are skipped."""
    lines = Path(path).read_text().splitlines()
    return frozenset(s for s in (ln.split("#", 1)[0].strip() for ln in lines) if s)


def default_opioid_codes() -> frozenset:
    with resources.as_file(resources.files("oudpipe") / "data" / "opioid_ndc.txt") as p:
        return read_code_list(p)


def classify_opioid(drug_code: str, opioid_codes: Iterable[str]) -> bool:
    """True iff ``drug_code`` is listed in the opioid lookup table."""
    if not drug_code:
        raise ValueError("empty drug code")
    return drug_code.strip() in opioid_codes


def outcome_code_set() -> frozenset:
    """The 20 ICD-9 codes that define opioid use disorder, normalized."""
    with resources.as_file(resources.files("oudpipe") / "data" / "outcome_codes.txt") as p:
        return frozenset(normalize_icd9(c) for c in read_code_list(p))


def icd9_descriptions() -> dict:
    """Map normalized ICD-9 code -> description for the codes shipped with the package."""
    with resources.as_file(resources.files("oudpipe") / "data" / "icd9_descriptions.csv") as p:
        table = pd.read_csv(p, dtype=str, keep_default_na=False)
    return {normalize_icd9(c): d for c, d in zip(table["code"], table["description"])}


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _read_rows(path: Path, columns: Sequence[str], name: str, rejects: list):
    if not path.exists():
        raise ClaimsError(f"{name}: file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return [], [], 0
        if tuple(h.strip() for h in header) != tuple(columns):
            raise ClaimsError(f"{name}: expected header {','.join(columns)}, got {','.join(header)}")
        rows, lines, n_data = [], [], 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            n_data += 1
            if len(row) != len(columns):
                rejects.append((name, lineno, f"expected {len(columns)} fields, got {len(row)}"))
                continue
            rows.append([c.strip() for c in row])
            lines.append(lineno)
    return rows, lines, n_data


def _reject_mask(frame, mask, reason, name, rejects):
    """Record rows flagged by ``mask`` (first failing check wins) and drop them."""
    if mask.any():
        for line in frame.loc[mask, "_line"]:
            rejects.append((name, int(line), reason))
    return frame.loc[~mask]


def _parse_dates(values: pd.Series) -> pd.Series:
    return pd.to_datetime(values, format="%Y-%m-%d", errors="coerce")


def _window_mask(dates: pd.Series, window: Optional[StudyWindow]) -> pd.Series:
    if window is None:
        return pd.Series(False, index=dates.index)
    return (dates < pd.Timestamp(window.start)) | (dates > pd.Timestamp(window.end))


def _parse_pharmacy(path, opioid_codes, window, rejects):
    name = "pharmacy.csv"
    rows, lines, n_rows = _read_rows(path, PHARMACY_COLUMNS, name, rejects)
    if not rows:
        return empty_pharmacy(), n_rows
    df = pd.DataFrame(rows, columns=PHARMACY_COLUMNS)
    df["_line"] = lines
    df = _reject_mask(df, df["patient_id"] == "", "empty patient_id", name, rejects)
    dates = _parse_dates(df["fill_date"])
    df = _reject_mask(df, dates.isna(), "unparseable fill_date", name, rejects)
    dates = dates[df.index]
    df = _reject_mask(df, _window_mask(dates, window), "fill_date outside study window", name, rejects)
    df = _reject_mask(df, df["ndc"] == "", "empty ndc", name, rejects)
    supply = pd.to_numeric(df["days_supply"], errors="coerce")
    bad = supply.isna() | (supply != supply.round())
    df = _reject_mask(df, bad, "days_supply is not an integer", name, rejects)
    supply = supply[df.index]
    df = _reject_mask(df, supply < 0, "days_supply < 0", name, rejects)
    supply = supply[df.index]
    df = _reject_mask(df, supply > MAX_DAYS_SUPPLY, f"days_supply > {MAX_DAYS_SUPPLY}", name, rejects)
    out = pd.DataFrame({
        "patient_id": df["patient_id"].to_numpy(dtype=object),
        "fill_date": _parse_dates(df["fill_date"]).to_numpy(),
        "ndc": df["ndc"].to_numpy(dtype=object),
        "days_supply": pd.to_numeric(df["days_supply"]).astype(np.int64).to_numpy(),
    })
    out["is_opioid"] = out["ndc"].isin(opioid_codes)
    return out, n_rows


def _parse_medical(path, window, rejects):
    name = "medical.csv"
    rows, lines, n_rows = _read_rows(path, MEDICAL_COLUMNS, name, rejects)
    if not rows:
        return empty_medical(), n_rows
    df = pd.DataFrame(rows, columns=MEDICAL_COLUMNS)
    df["_line"] = lines
    df = _reject_mask(df, df["patient_id"] == "", "empty patient_id", name, rejects)
    dates = _parse_dates(df["service_date"])
    df = _reject_mask(df, dates.isna(), "unparseable service_date", name, rejects)
    dates = dates[df.index]
    df = _reject_mask(df, _window_mask(dates, window), "service_date outside study window", name, rejects)
    codes = df["icd9"].str.upper()
    df = _reject_mask(df, ~codes.str.match(_ICD9_RE.pattern), "invalid ICD-9 code", name, rejects)
    out = pd.DataFrame({
        "patient_id": df["patient_id"].to_numpy(dtype=object),
        "service_date": _parse_dates(df["service_date"]).to_numpy(),
        "icd9": df["icd9"].str.upper().str.replace(".", "", regex=False).to_numpy(dtype=object),
    })
    return out, n_rows


def _parse_eligibility(path, rejects):
    name = "eligibility.csv"
    rows, lines, n_rows = _read_rows(path, ELIGIBILITY_COLUMNS, name, rejects)
    if not rows:
        return empty_eligibility(), n_rows
    df = pd.DataFrame(rows, columns=ELIGIBILITY_COLUMNS)
    df["_line"] = lines
    df = _reject_mask(df, df["patient_id"] == "", "empty patient_id", name, rejects)
    age = pd.to_numeric(df["age"], errors="coerce")
    bad_age = (df["age"] != "") & (age.isna() | (age != age.round()))
    df = _reject_mask(df, bad_age, "age is not an integer", name, rejects)
    age = age[df.index]
    df = _reject_mask(df, age < 0, "negative age", name, rejects)
    df = _reject_mask(df, ~df["gender"].str.upper().isin(list(_GENDER_FROM_FILE)),
                      "gender not one of M/F/U/blank", name, rejects)
    out = pd.DataFrame({
        "patient_id": df["patient_id"].to_numpy(dtype=object),
        "age": pd.to_numeric(df["age"], errors="coerce").astype(float).to_numpy(),
        "gender": df["gender"].str.upper().map(_GENDER_FROM_FILE).to_numpy(dtype=object),
        "zip": df["zip"].to_numpy(dtype=object),
    })
    return dedupe_eligibility(out), n_rows


def dedupe_eligibility(frame: pd.DataFrame) -> pd.DataFrame:
    """Keep the last (most recent) record per patient, in file order."""
    return frame.drop_duplicates("patient_id", keep="last").reset_index(drop=True)


def parse_claims(pharmacy, medical, eligibility, opioid_codes=None,
                 window: Optional[StudyWindow] = None) -> ClaimsData:
    """Parse the three claim files.

    Malformed rows are collected in ``ClaimsData.rejects`` (file, line, reason)
    rather than raising; a missing file or a wrong header raises
    :class:`ClaimsError`. ``row_counts`` maps file name to the number of data
    rows read, so accepted + rejected always equals the input.
    """
    if opioid_codes is None:
        opioid_codes = default_opioid_codes()
    rejects: list = []
    ph, n_ph = _parse_pharmacy(Path(pharmacy), frozenset(opioid_codes), window, rejects)
    md, n_md = _parse_medical(Path(medical), window, rejects)
    el, n_el = _parse_eligibility(Path(eligibility), rejects)
    rej = pd.DataFrame(rejects, columns=["file", "line", "reason"]) if rejects else _empty_rejects()
    rej = rej.sort_values(["file", "line"], kind="stable").reset_index(drop=True)
    return ClaimsData(ph, md, el, rej, {"pharmacy.csv": n_ph, "medical.csv": n_md,
                                        "eligibility.csv": n_el})


def load_claims_dir(directory, opioid_codes=None, window=None) -> ClaimsData:
    d = Path(directory)
    return parse_claims(d / "pharmacy.csv", d / "medical.csv", d / "eligibility.csv",
                        opioid_codes=opioid_codes, window=window)


# ---------------------------------------------------------------------------
# writing
# ---------------------------------------------------------------------------

def _iso(dates) -> np.ndarray:
    return pd.to_datetime(pd.Series(dates)).dt.strftime("%Y-%m-%d").to_numpy()


def write_claims(data: ClaimsData, directory) -> dict:
    """Write the three tables in the documented layout; returns the file paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    ph = pd.DataFrame({
        "patient_id": data.pharmacy["patient_id"].to_numpy(),
        "fill_date": _iso(data.pharmacy["fill_date"]),
        "ndc": data.pharmacy["ndc"].to_numpy(),
        "days_supply": data.pharmacy["days_supply"].astype(np.int64).to_numpy(),
    })
    md = pd.DataFrame({
        "patient_id": data.medical["patient_id"].to_numpy(),
        "service_date": _iso(data.medical["service_date"]),
        "icd9": [format_icd9(c) for c in data.medical["icd9"]],
    })
    age = data.eligibility["age"]
    el = pd.DataFrame({
        "patient_id": data.eligibility["patient_id"].to_numpy(),
        "age": ["" if np.isnan(a) else str(int(a)) for a in age],
        "gender": data.eligibility["gender"].map(_GENDER_TO_FILE).to_numpy(),
        "zip": data.eligibility["zip"].to_numpy(),
    })
    paths = {}
    for name, frame in (("pharmacy.csv", ph), ("medical.csv", md), ("eligibility.csv", el)):
        path = d / name
        frame.to_csv(path, index=False, lineterminator="\n")
        paths[name] = path
    return paths


def write_rejects(rejects: pd.DataFrame, path) -> None:
    rejects.to_csv(path, index=False, lineterminator="\n")


def records_to_frames(pharmacy: Iterable[PharmacyClaim] = (),
                      medical: Iterable[MedicalClaim] = (),
                      eligibility: Iterable[EligibilityRecord] = ()) -> ClaimsData:
    """Build a :class:`ClaimsData` from record objects (tests, small rosters)."""
    pharmacy, medical, eligibility = list(pharmacy), list(medical), list(eligibility)
    ph = empty_pharmacy() if not pharmacy else pd.DataFrame({
        "patient_id": [c.patient for c in pharmacy],
        "fill_date": pd.to_datetime([c.fill_date for c in pharmacy]),
        "ndc": [c.drug_code for c in pharmacy],
        "days_supply": np.array([c.days_supply for c in pharmacy], dtype=np.int64),
        "is_opioid": np.array([c.is_opioid for c in pharmacy], dtype=bool),
    })
    md = empty_medical() if not medical else pd.DataFrame({
        "patient_id": [c.patient for c in medical],
        "service_date": pd.to_datetime([c.service_date for c in medical]),
        "icd9": [c.diagnosis for c in medical],
    })
    el = empty_eligibility() if not eligibility else dedupe_eligibility(pd.DataFrame({
        "patient_id": [r.patient for r in eligibility],
        "age": np.array([np.nan if r.age is None else r.age for r in eligibility], dtype=float),
        "gender": [r.gender for r in eligibility],
        "zip": [r.zip for r in eligibility],
    }))
    return ClaimsData(ph, md, el)
