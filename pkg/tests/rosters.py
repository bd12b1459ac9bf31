"""Random mini-rosters for cohort property tests."""

import datetime as dt

import numpy as np

from oudpipe.claims import EligibilityRecord, MedicalClaim, PharmacyClaim, records_to_frames

START = dt.date(2011, 1, 1)
END = dt.date(2015, 12, 31)
OUTCOMES = ["304.01", "305.50", "965.01", "E850.2"]
OTHER = ["311", "401.9", "300.02"]


def random_roster(rng: np.random.Generator, n_patients=None):
    """Claims for a handful of patients with fills and diagnoses clustered so
    that lookback, usage-window and follow-up edges are exercised often."""
    n_patients = n_patients or int(rng.integers(1, 6))
    ph, md, el = [], [], []
    fills, diagnoses, genders = {}, {}, {}
    span = (END - START).days
    for i in range(n_patients):
        pid = f"p{i}"
        anchor = START + dt.timedelta(days=int(rng.integers(0, span)))
        for _ in range(int(rng.integers(0, 5))):
            off = int(rng.choice([-366, -365, -364, -200, 0, 1, 100, 364, 365, 366, 500])
                      + rng.integers(-3, 4))
            d = anchor + dt.timedelta(days=off)
            if not START <= d <= END:
                continue
            opioid = bool(rng.random() < 0.85)
            ph.append(PharmacyClaim(pid, d, "00406-0512" if opioid else "NONOPIOID", int(rng.integers(1, 90)),
                                    opioid))
            if opioid:
                fills.setdefault(pid, []).append(d)
        for _ in range(int(rng.integers(0, 4))):
            off = int(rng.choice([-30, 0, 1, 182, 183, 184, 250, 365, 366]) + rng.integers(-2, 3))
            d = anchor + dt.timedelta(days=off)
            if not START <= d <= END:
                continue
            code = str(rng.choice(OUTCOMES if rng.random() < 0.6 else OTHER))
            md.append(MedicalClaim(pid, d, code))
            diagnoses.setdefault(pid, []).append((d, md[-1].diagnosis))
        if rng.random() < 0.95:
            g = str(rng.choice(["male", "female", "unknown", "missing"], p=[0.45, 0.45, 0.05, 0.05]))
            el.append(EligibilityRecord(pid, int(rng.integers(10, 90)), g, "0"))
            genders[pid] = g
    order = rng.permutation(len(ph))
    claims = records_to_frames([ph[i] for i in order], md, el)
    return claims, fills, diagnoses, genders
