from __future__ import annotations

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparsedim.potential import (
    WHOLE_LINE,
    Barrier,
    GrowthSchedule,
    PotentialError,
    PotentialSpec,
    check_gaps,
    check_growth,
)


def test_eval_examples(free):
    assert free.eval(7) == 0.0
    assert PotentialSpec.from_values([(4, 100.0)]).eval(4) == 100.0
    assert PotentialSpec.from_logs([(10, 13.0)]).eval(11) == 0.0


def test_invalid_specs():
    with pytest.raises(PotentialError):
        PotentialSpec.from_values([(3, 1.0), (3, 2.0)])
    with pytest.raises(PotentialError):
        PotentialSpec.from_values([(0, 1.0)])
    with pytest.raises(PotentialError):
        Barrier.from_value(2, -1.0)
    with pytest.raises(PotentialError):
        PotentialSpec.free().eval(0)


def test_growth_examples():
    rep = check_growth(GrowthSchedule((10, 26), (13.0, 44.0)))
    assert rep.slack == pytest.approx((1.0, 0.0)) and rep.holds
    rep = check_growth(GrowthSchedule((10,), (11.0,)))
    assert rep.slack == pytest.approx((-1.0,)) and not rep.holds and rep.first_failure() == 1
    assert check_growth(GrowthSchedule((), ())).holds


def test_gap_examples():
    assert check_gaps(PotentialSpec.from_values([(s, 1.0) for s in (1, 4, 9, 16)]))
    assert not check_gaps(PotentialSpec.from_values([(s, 1.0) for s in (2, 4, 6)]))
    assert check_gaps(PotentialSpec.from_values([(5, 1.0)]))


def test_log_only_barrier_roundtrip():
    spec = PotentialSpec.from_logs([(3, 800.0)])
    assert spec.barrier_at(3).value is None
    assert spec.eval(3) == math.inf
    back = PotentialSpec.loads(spec.dumps())
    assert back == spec and back.log_eval(3) == 800.0


def test_restrict_reflects_left_side():
    spec = PotentialSpec.from_values([(-2, 5.0), (0, 3.0), (4, 7.0)], domain=WHOLE_LINE)
    left = spec.restrict("-")
    assert left.sites == [1, 3] and left.eval(1) == 3.0 and left.eval(3) == 5.0
    assert spec.restrict("+").sites == [4]


sites = st.lists(st.integers(1, 500), min_size=0, max_size=6, unique=True)


@given(sites, st.lists(st.floats(-5.0, 700.0), min_size=6, max_size=6))
def test_serialize_roundtrip(ss, lvs):
    spec = PotentialSpec.from_logs(zip(ss, lvs))
    back = PotentialSpec.loads(spec.dumps())
    for n in range(1, 502):
        assert back.log_eval(n) == spec.log_eval(n)
        assert back.eval(n) == spec.eval(n)


@given(st.lists(st.integers(1, 40), min_size=1, max_size=5, unique=True),
       st.lists(st.floats(0.0, 200.0), min_size=5, max_size=5),
       st.integers(0, 4), st.floats(0.0, 50.0))
def test_growth_monotone(ss, lvs, idx, bump):
    ss = sorted(ss)
    lvs = lvs[: len(ss)]
    idx = idx % len(ss)
    before = check_growth(GrowthSchedule(tuple(ss), tuple(lvs)))
    raised = list(lvs)
    raised[idx] += bump
    after = check_growth(GrowthSchedule(tuple(ss), tuple(raised)))
    assert after.slack[idx] >= before.slack[idx]
