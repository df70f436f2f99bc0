import pytest
from hypothesis import given, settings, strategies as st

from careloop.context import (
    ActivityRecord,
    ActivityState,
    ContextHistory,
    ContextManager,
    ContextSnapshot,
    append_history,
    assemble_context,
    window,
)
from careloop.errors import InvalidField, NonMonotoneTimestamp, NotFound
from careloop.sensing import Reading

from oracles import CarryModel, HistoryModel


def rd(metric, value, t, seq=1, cat="physiological", element="p1"):
    return Reading("s_" + metric, element, metric, value, t, seq, cat)


def snap(t, element="p1", **phys):
    return ContextSnapshot(element, t, physiological=phys)


def test_latest_reading_wins():
    s = assemble_context("p1", [rd("temp", 39.0, 1), rd("temp", 39.2, 2, 2)], 5)
    assert s.physiological == {"temp": 39.2}
    assert s.n_readings == 2


def test_carry_forward():
    prev = assemble_context("p1", [rd("temp", 38.0, 1)], 5)
    s = assemble_context("p1", [], 10, prev)
    assert s.physiological == {"temp": 38.0}
    assert s.staleness == {"temp": 1}


def test_no_readings_ever():
    s = assemble_context("p1", [], 0)
    assert s.physiological == {} and s.environmental == {}
    assert s.activity.state is ActivityState.UNKNOWN


def test_categories_and_activity():
    s = assemble_context("p1", [rd("room_temp", 21.0, 1, cat="environmental"),
                                rd("activity", "moving@kitchen", 2, cat="activity")], 3)
    assert s.environmental == {"room_temp": 21.0}
    assert (s.activity.state, s.activity.location, s.activity.since) == (ActivityState.MOVING, "kitchen", 2)
    later = assemble_context("p1", [rd("activity", "moving@kitchen", 7, 2, cat="activity")], 8, s)
    assert later.activity.since == 2  # unchanged activity keeps its start time


def test_activity_codes():
    assert ActivityRecord.parse(2, 0).state is ActivityState.LAYING_IN_BED
    with pytest.raises(InvalidField):
        ActivityRecord.parse("flying@roof", 0)
    with pytest.raises(InvalidField):
        ActivityRecord.parse(17, 0)


def test_readings_for_other_elements_ignored():
    s = assemble_context("p1", [rd("temp", 39.0, 1, element="p2")], 2)
    assert s.physiological == {}


def test_staleness_limit_drops_metric():
    s = assemble_context("p1", [rd("temp", 38.0, 0)], 0)
    for t in range(1, 12):
        s = assemble_context("p1", [], t, s, max_staleness=10)
        assert ("temp" in s.physiological) == (t <= 10)


def test_fifo_eviction():
    h = ContextHistory("p1", 3)
    for t in (1, 2, 3, 4):
        append_history(h, snap(t))
    assert [s.timestamp for s in h] == [2, 3, 4]
    assert [s.timestamp for s in window(h, 2)] == [3, 4]


def test_repeated_timestamp_rejected():
    h = ContextHistory("p1", 3)
    h.append(snap(5))
    with pytest.raises(NonMonotoneTimestamp):
        h.append(snap(5))


def test_window_edges():
    h = ContextHistory("p1", 5, [snap(1), snap(2)])
    assert window(h, 0) == ()
    assert len(window(h, 10)) == 2
    assert window(h, 1) == (h.latest,)


def test_clear_history():
    cm = ContextManager(["p1", "p2"], capacity=4)
    cm.add_to_history(snap(1))
    cm.add_to_history(snap(1, element="p2"))
    cm.clear_history("p1")
    cm.clear_history("p1")
    assert window(cm.history("p1"), 3) == ()
    assert cm.history("p1").capacity == 4
    assert len(cm.history("p2")) == 1
    with pytest.raises(NotFound):
        cm.clear_history("p3")


def test_zero_capacity_rejected():
    with pytest.raises(InvalidField):
        ContextHistory("p1", 0)


def test_digest_ignores_time_and_staleness():
    a = ContextSnapshot("p1", 1, {"temp": 37.0}, staleness={"temp": 0})
    b = ContextSnapshot("p1", 9, {"temp": 37.0}, staleness={"temp": 3})
    assert a.digest() == b.digest()


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 12), st.lists(st.integers(0, 60), max_size=80))
def test_history_matches_model(capacity, stamps):
    h, model = ContextHistory("p1", capacity), HistoryModel(capacity)
    for t in stamps:
        ok = model.append(t)
        if ok:
            h.append(snap(t))
        else:
            with pytest.raises(NonMonotoneTimestamp):
                h.append(snap(t))
        assert [s.timestamp for s in h] == model.items
        assert len(h) <= capacity


@settings(max_examples=300, deadline=None)
@given(st.lists(st.lists(st.tuples(st.sampled_from(["temp", "hr", "spo2"]), st.integers(0, 5),
                                   st.floats(30, 200, allow_nan=False)), max_size=4), max_size=25),
       st.integers(0, 12))
def test_carry_forward_matches_model(batches, max_staleness):
    model = CarryModel(max_staleness)
    prev = None
    for k, batch in enumerate(batches):
        now = 10 * (k + 1)
        readings = [rd(m, v, now - 10 + dt, seq=i + 1) for i, (m, dt, v) in enumerate(batch)]
        prev = assemble_context("p1", readings, now, prev, max_staleness=max_staleness)
        assert prev.physiological == model.assemble([(m, now - 10 + dt, v) for m, dt, v in batch])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["temp", "hr"]), st.integers(0, 9), st.floats(30, 40)), max_size=8),
       st.randoms())
def test_assembly_is_order_independent(batch, rnd):
    readings = [rd(m, v, t, seq=i + 1) for i, (m, t, v) in enumerate(batch)]
    shuffled = list(readings)
    rnd.shuffle(shuffled)
    assert assemble_context("p1", readings, 10) == assemble_context("p1", shuffled, 10)
