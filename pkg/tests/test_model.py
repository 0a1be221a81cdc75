import numpy as np
import pytest
from hypothesis import given, strategies as st

from adrscan.model import (
    EMPTY,
    AgeInterval,
    Cohort,
    PatientRecord,
    apply_exclusions,
    code_level,
    era_interval,
    era_starts,
    events_in_interval,
    first_prescription,
    occurs_first_era,
    occurs_per_era,
    parent_code,
    preprocess,
    prescription_ages,
    recorded_ages,
)

from conftest import RANDOM_CODES, RANDOM_DRUGS, random_rows
from oracle import Oracle


def test_code_levels():
    assert code_level("A....") == 1
    assert code_level("A1...") == 2
    assert code_level("A123.") == 4
    assert code_level("A123b") == 5
    assert parent_code("A1...") == "A...."
    assert parent_code("C121.") == "C12.."
    assert parent_code("A....") is None
    for bad in ["A1..", "A.1..", ".....", "A1....", ""]:
        with pytest.raises(ValueError):
            code_level(bad)


def test_recorded_ages(worked):
    assert recorded_ages(worked.patient("jj3"), "prescriptions") == {10000, 20000, 20001}
    assert recorded_ages(worked.patient("aa2"), "events") == {15001}
    assert recorded_ages(PatientRecord("x", 0), "events") == set()


def test_prescription_ages(worked):
    assert prescription_ages(worked.patient("jj3"), "969686881") == {20000, 20001}
    assert prescription_ages(worked.patient("jj3"), "979596759") == {10000}
    assert prescription_ages(worked.patient("aa2"), "979596759") == set()
    assert prescription_ages(worked.patient("aa2"), "912314611") == {15001, 15031, 15061, 25304}


def test_first_prescription(worked):
    assert first_prescription(worked.patient("jj3"), "969686881") == 20000
    assert first_prescription(worked.patient("aa2"), "969686881") is None
    assert first_prescription(worked.patient("aa2"), "912314611") == 15001
    assert first_prescription(worked.patient("bb8"), "979596759") == 10000


def test_era_starts(worked):
    assert era_starts(worked.patient("aa2"), "912314611") == [15001, 25304]
    assert era_starts(worked.patient("jj3"), "969686881") == [20000]
    assert era_starts(worked.patient("aa2"), "979596759") == []


def test_era_interval(worked):
    aa2 = worked.patient("aa2")
    assert era_interval(aa2, "912314611", 1, 30, 1) == AgeInterval(15002, 15031)
    assert era_interval(aa2, "912314611", 1, 30, 2) == AgeInterval(25305, 25334)
    assert era_interval(aa2, "912314611", 1, 30, 3) is EMPTY
    assert era_interval(aa2, "979596759", 1, 30, 1) is EMPTY
    with pytest.raises(ValueError):
        era_interval(aa2, "912314611", 30, 1)


def test_era_interval_clamps_at_zero():
    p = PatientRecord("x", 0, {}, {100: frozenset({"111111111"})})
    assert era_interval(p, "111111111", -810, -630) is EMPTY
    assert era_interval(p, "111111111", -200, 5) == AgeInterval(0, 105)


def test_events_in_interval(worked):
    jj3 = worked.patient("jj3")
    assert events_in_interval(jj3, AgeInterval(10000, 10000)) == {"F1...", "C1..."}
    assert events_in_interval(jj3, AgeInterval(9999, 10001)) == {"A123.", "F1...", "C1..."}
    assert events_in_interval(jj3, AgeInterval(10002, 10002)) == set()
    assert events_in_interval(jj3, EMPTY) == set()


def test_occurs_first_era(worked):
    bb8 = worked.patient("bb8")
    assert occurs_first_era("D25..", "979596759", bb8, 1, 30) == 1
    assert occurs_first_era("A123.", "979596759", bb8, 0, 0) == 1
    assert occurs_first_era("D25..", "969686881", worked.patient("aa2"), 1, 30) == 0
    jj3 = worked.patient("jj3")
    assert occurs_first_era("A123.", "979596759", jj3, 1, 30) == 1
    assert occurs_first_era("C12..", "979596759", jj3, 1, 30) == 0


def test_occurs_per_era(worked):
    aa2 = worked.patient("aa2")
    assert occurs_per_era("B21..", "912314611", aa2, 0, 30) == 1
    assert occurs_per_era("B21..", "969686881", aa2, 1, 30) == 0


def test_interval_basics():
    iv = AgeInterval(3, 7)
    assert 3 in iv and 7 in iv and 8 not in iv
    assert len(iv) == 5
    assert not EMPTY and len(EMPTY) == 0
    assert AgeInterval.clamped(-5, -1) is EMPTY
    with pytest.raises(ValueError):
        AgeInterval(5, 3)


def test_preprocess_first_year():
    c = Cohort.from_rows([("x", 0)], [("x", 100, "A1..."), ("x", 400, "A1...")], [])
    out = preprocess(c)
    assert list(out.event_rows()) == [("x", 400, "A1...")]
    assert out.preprocessed


def test_preprocess_last_30_days():
    c = Cohort.from_rows(
        [("x", 0)],
        [("x", 10000, "A1...")],
        [("x", 9969, "111111111"), ("x", 9970, "111111111"), ("x", 9971, "111111111")],
    )
    ages = [a for _, a, _ in preprocess(c).prescription_rows()]
    assert 9969 in ages and 9971 not in ages


def test_preprocess_empty_patient_and_guard():
    c = Cohort.from_rows([("x", 0)], [], [])
    out = preprocess(c)
    assert list(out.event_rows()) == [] and list(out.prescription_rows()) == []
    with pytest.raises(ValueError):
        preprocess(out)


@given(st.integers(0, 10_000))
def test_preprocess_idempotent(seed):
    c = Cohort.from_rows(*random_rows(seed, n_patients=8))
    once = apply_exclusions(c)
    twice = apply_exclusions(once)
    assert list(once.event_rows()) == list(twice.event_rows())
    assert list(once.prescription_rows()) == list(twice.prescription_rows())


def test_preprocessed_invariant(make_random_cohort):
    c = preprocess(make_random_cohort(3))
    for p in c.records():
        assert all(a >= p.registration_age + 365 for a in p.events)
    end = dict(zip(c.patient_ids, c.end_age.tolist()))
    for pid, age, _ in c.prescription_rows():
        assert age <= end[pid] - 30


@given(st.lists(st.integers(0, 5000), max_size=15))
def test_era_starts_property(ages):
    p = PatientRecord("x", 0, {}, {a: frozenset({"111111111"}) for a in ages})
    starts = era_starts(p, "111111111")
    if not ages:
        assert starts == []
        return
    assert starts[0] == min(ages)
    assert all(b > a for a, b in zip(starts, starts[1:]))
    # every start after the first has >= 386 drug-free days before it
    for s in starts[1:]:
        assert s - max(a for a in ages if a < s) >= 386
    # and every non-start has an earlier prescription within 386 days
    for a in set(ages) - set(starts):
        assert a - max(b for b in ages if b < a) < 386


@given(st.integers(-1000, 1000), st.integers(0, 500), st.integers(1, 3), st.integers(0, 10_000))
def test_era_interval_width(t1, width, k, seed):
    rows = random_rows(seed, n_patients=1, n_rx=8)
    c = Cohort.from_rows(*rows)
    p = next(c.records())
    for drug in RANDOM_DRUGS:
        iv = era_interval(p, drug, t1, t1 + width, k)
        starts = era_starts(p, drug)
        if iv.is_empty:
            assert len(starts) < k or starts[k - 1] + t1 + width < 0
        elif starts[k - 1] + t1 >= 0:
            assert len(iv) == width + 1
        else:
            assert iv.lo == 0


def test_occurs_first_era_brute_force():
    rng = np.random.default_rng(11)
    for seed in range(5):
        rows = random_rows(seed)
        c = Cohort.from_rows(*rows)
        oracle = Oracle(*rows)
        for _ in range(200):
            pid = c.patient_ids[int(rng.integers(len(c)))]
            code = RANDOM_CODES[int(rng.integers(len(RANDOM_CODES)))]
            drug = RANDOM_DRUGS[int(rng.integers(len(RANDOM_DRUGS)))]
            t1 = int(rng.integers(-400, 400))
            t2 = t1 + int(rng.integers(0, 400))
            p = c.patient(pid)
            assert occurs_first_era(code, drug, p, t1, t2) == oracle.h(code, drug, pid, t1, t2)
            assert occurs_per_era(code, drug, p, t1, t2) == oracle.hhat(code, drug, pid, t1, t2)


def test_per_era_dominates_first_era(make_random_cohort):
    c = make_random_cohort(5)
    for code in RANDOM_CODES:
        for drug in RANDOM_DRUGS:
            per = sum(occurs_per_era(code, drug, p, 1, 30) for p in c.records())
            first = sum(occurs_first_era(code, drug, p, 1, 30) for p in c.records())
            assert per >= first


def test_queries_do_not_mutate(make_random_cohort):
    c = make_random_cohort(2)
    before = (list(c.event_rows()), list(c.prescription_rows()))
    p = c.patient(c.patient_ids[0])
    assert era_starts(p, RANDOM_DRUGS[0]) == era_starts(p, RANDOM_DRUGS[0])
    assert c.ev_age.flags.writeable is False
    c.index.era_hits(1, 30)
    assert (list(c.event_rows()), list(c.prescription_rows())) == before
