import datetime as dt

import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from oudpipe.claims import (
    ClaimsError, EligibilityRecord, MedicalClaim, PharmacyClaim, classify_opioid, default_opioid_codes,
    format_icd9, is_icd9, normalize_icd9, outcome_code_set, parse_claims, records_to_frames, write_claims,
)

PH_HEADER = "patient_id,fill_date,ndc,days_supply\n"
MD_HEADER = "patient_id,service_date,icd9\n"
EL_HEADER = "patient_id,age,gender,zip\n"


def write_files(tmp_path, ph="", md="", el=""):
    paths = []
    for name, header, body in (("pharmacy.csv", PH_HEADER, ph), ("medical.csv", MD_HEADER, md),
                               ("eligibility.csv", EL_HEADER, el)):
        p = tmp_path / name
        p.write_text(header + body)
        paths.append(p)
    return paths


def test_empty_files_give_empty_tables_and_no_rejects(tmp_path):
    data = parse_claims(*write_files(tmp_path))
    assert len(data.pharmacy) == len(data.medical) == len(data.eligibility) == 0
    assert len(data.rejects) == 0


def test_header_only_and_zero_byte_files(tmp_path):
    ph, md, el = write_files(tmp_path)
    ph.write_text("")
    data = parse_claims(ph, md, el)
    assert len(data.pharmacy) == 0 and data.row_counts["pharmacy.csv"] == 0


def test_heroin_poisoning_code_is_parsed(tmp_path):
    data = parse_claims(*write_files(tmp_path, md="p1,2013-05-01,965.01\n"))
    assert data.medical["icd9"].tolist() == ["96501"]
    assert format_icd9(data.medical["icd9"][0]) == "965.01"


def test_negative_days_supply_is_rejected_with_line_number(tmp_path):
    data = parse_claims(*write_files(tmp_path, ph="p1,2013-01-01,00406-0512,30\np1,2013-02-01,00406-0512,-3\n"))
    assert len(data.pharmacy) == 1
    rej = data.rejects.iloc[0]
    assert (rej["file"], rej["line"]) == ("pharmacy.csv", 3)
    assert "days_supply" in rej["reason"]


def test_malformed_rows_are_collected(tmp_path):
    ph = "p1,2013-01-01,X,30\np2,not-a-date,X,5\np3,2013-01-01,X\n,2013-01-01,X,3\np4,2013-01-01,X,400\n"
    md = "p1,2013-01-01,ABC\np1,2013-01-01,304.01\n"
    el = "p1,abc,M,01234\np2,40,Z,01234\np3,-1,F,0\np4,,,0\n"
    data = parse_claims(*write_files(tmp_path, ph, md, el))
    assert len(data.pharmacy) == 1 and len(data.medical) == 1 and len(data.eligibility) == 1
    assert len(data.rejects) == 4 + 1 + 3
    for name, frame in (("pharmacy.csv", data.pharmacy), ("medical.csv", data.medical),
                        ("eligibility.csv", data.eligibility)):
        n_rej = int((data.rejects["file"] == name).sum())
        assert len(frame) + n_rej == data.row_counts[name]


def test_missing_file_is_fatal(tmp_path):
    ph, md, el = write_files(tmp_path)
    md.unlink()
    with pytest.raises(ClaimsError):
        parse_claims(ph, md, el)


def test_wrong_header_is_fatal(tmp_path):
    ph, md, el = write_files(tmp_path)
    ph.write_text("id,date,code,supply\n")
    with pytest.raises(ClaimsError):
        parse_claims(ph, md, el)


def test_study_window_rejects_out_of_range_dates(tmp_path):
    from oudpipe.claims import StudyWindow
    files = write_files(tmp_path, ph="p1,2010-12-31,X,3\np1,2011-01-01,X,3\n")
    data = parse_claims(*files, window=StudyWindow(dt.date(2011, 1, 1), dt.date(2015, 12, 31)))
    assert len(data.pharmacy) == 1 and "outside" in data.rejects["reason"][0]


def test_eligibility_duplicates_keep_last_row(tmp_path):
    data = parse_claims(*write_files(tmp_path, el="p1,30,F,1\np1,31,M,2\n"))
    row = data.eligibility.iloc[0]
    assert (row["age"], row["gender"], row["zip"]) == (31, "male", "2")


def test_gender_mapping(tmp_path):
    data = parse_claims(*write_files(tmp_path, el="a,1,M,\nb,2,F,\nc,3,U,\nd,,,\n"))
    assert data.eligibility.set_index("patient_id")["gender"].to_dict() == {
        "a": "male", "b": "female", "c": "unknown", "d": "missing"}
    assert pd.isna(data.eligibility.set_index("patient_id")["age"]["d"])


def test_classify_opioid():
    codes = default_opioid_codes()
    some = sorted(codes)[0]
    assert classify_opioid(some, codes)
    assert not classify_opioid("99999-9999", codes)
    assert not classify_opioid(some, frozenset())


def test_outcome_code_set_has_the_twenty_codes():
    codes = outcome_code_set()
    assert len(codes) == 20
    expected = {"30400", "30401", "30402", "30403", "30470", "30471", "30472", "30473", "30550", "30551",
                "30552", "30553", "96500", "96501", "96502", "96509", "E8500", "E8502", "E9350", "E9352"}
    assert codes == expected


@pytest.mark.parametrize("raw,norm,shown", [
    ("965.01", "96501", "965.01"), ("96501", "96501", "965.01"), ("e850.0", "E8500", "E850.0"),
    ("V58.83", "V5883", "V58.83"), ("311", "311", "311"), ("304.7", "3047", "304.7"),
])
def test_icd9_normalization(raw, norm, shown):
    assert normalize_icd9(raw) == norm
    assert format_icd9(norm) == shown
    assert is_icd9(raw)


@pytest.mark.parametrize("bad", ["", "96", "ABC", "965.012", "X12.3"])
def test_icd9_rejects(bad):
    assert not is_icd9(bad)


def test_record_invariants():
    with pytest.raises(ValueError):
        PharmacyClaim("p", dt.date(2013, 1, 1), "X", 366)
    with pytest.raises(ValueError):
        PharmacyClaim("p", dt.date(2013, 1, 1), "X", -1)
    with pytest.raises(ValueError):
        EligibilityRecord("p", 30, "other")
    with pytest.raises(ValueError):
        MedicalClaim("", dt.date(2013, 1, 1), "311")
    assert MedicalClaim("p", dt.date(2013, 1, 1), "304.01").diagnosis == "30401"


dates = st.dates(dt.date(2011, 1, 1), dt.date(2015, 12, 31))
pids = st.sampled_from(["p1", "p2", "p3", "p10"])


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.tuples(pids, dates, st.sampled_from(["00406-0512", "X1"]), st.integers(0, 365)), max_size=15),
    st.lists(st.tuples(pids, dates, st.sampled_from(["304.01", "311", "E850.2", "V70.0"])), max_size=15),
    st.lists(st.tuples(pids, st.one_of(st.none(), st.integers(0, 99)),
                       st.sampled_from(["male", "female", "unknown", "missing"])), max_size=6),
)
def test_write_then_parse_round_trip(tmp_path_factory, ph, md, el):
    codes = default_opioid_codes()
    data = records_to_frames(
        [PharmacyClaim(p, d, c, s, c in codes) for p, d, c, s in ph],
        [MedicalClaim(p, d, c) for p, d, c in md],
        [EligibilityRecord(p, a, g, "01234") for p, a, g in el],
    )
    d = tmp_path_factory.mktemp("rt")
    write_claims(data, d)
    back = parse_claims(d / "pharmacy.csv", d / "medical.csv", d / "eligibility.csv")
    assert len(back.rejects) == 0
    pd.testing.assert_frame_equal(back.pharmacy, data.pharmacy, check_dtype=False)
    pd.testing.assert_frame_equal(back.medical, data.medical, check_dtype=False)
    pd.testing.assert_frame_equal(back.eligibility, data.eligibility, check_dtype=False)
