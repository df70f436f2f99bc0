from hypothesis import given, settings, strategies as st

from careloop.context import ContextSnapshot
from careloop.domain import InterestedParty
from careloop.presentation import StatusModel, Subject, notify_observers, render, update_model
from careloop.reasoning import Insight

from strategies import insights

SNAP = ContextSnapshot("p1", 1000, {"temp": 38.6})
FEVER = Insight("p1", "fever", "warning", 1.0, 1000, evidence=(1000,), explanation="temp=38.6 above 38")
DOC = InterestedParty("d1", "MedicalPersonnel")
CARER = InterestedParty("c1", "CareGiver")
PAGER = InterestedParty("x1", "CareGiver", "alert_only")


def test_idempotent_update():
    m1 = update_model(StatusModel("p1"), [FEVER], SNAP)
    assert m1.version == 1
    m2 = update_model(m1, [FEVER], ContextSnapshot("p1", 2000, {"temp": 38.6}))
    assert m2 is m1


def test_new_and_cleared_insights_bump():
    m1 = update_model(StatusModel("p1"), [], SNAP)
    m2 = update_model(m1, [FEVER], SNAP)
    m3 = update_model(m2, [], SNAP)
    assert [m1.version, m2.version, m3.version] == [1, 2, 3]


def test_empty_snapshot_does_not_bump_initial_model():
    assert update_model(StatusModel("p1"), [], ContextSnapshot("p1", 5)).version == 0


def test_full_clinical_view():
    v = render(update_model(StatusModel("p1"), [FEVER], SNAP), DOC)
    assert "temp=38.6" in v.payload
    assert "fever/warning" in v.payload
    assert any("t=1000" in line for line in v.payload)


def test_summary_view():
    v = render(update_model(StatusModel("p1"), [FEVER], SNAP), CARER)
    assert v.payload == ("fever/warning",)


def test_alert_only_view():
    m = update_model(StatusModel("p1"), [FEVER], SNAP)
    assert render(m, PAGER).payload == ()
    crit = Insight("p1", "fall", "critical", 1.0, 1000)
    m2 = update_model(m, [crit, FEVER], SNAP)
    assert render(m2, PAGER).payload == ("fall/critical",)
    assert render(m2, DOC, "alert_only").payload == ("fall/critical",)


def test_notify_counts():
    m = update_model(StatusModel("p1"), [FEVER], SNAP)
    assert len(notify_observers(m, [DOC, CARER, PAGER], 0)) == 3
    assert notify_observers(m, [], 0) == []


def test_subject_publishes_each_version_once():
    s = Subject(StatusModel("p1"))
    total = 0
    for t, (ins, temp) in enumerate([([], 37.0), ([FEVER], 38.6), ([FEVER], 38.6), ([], 37.0)]):
        s.update(ins, ContextSnapshot("p1", t, {"temp": temp}), t)
        total += len(s.publish([DOC, CARER], t))
        assert s.publish([DOC, CARER], t) == []
    assert s.model.version == 3 and total == 6


@settings(max_examples=300, deadline=None)
@given(st.lists(insights, max_size=5), st.floats(35, 42, allow_nan=False))
def test_personalization_containment(ins, temp):
    m = update_model(StatusModel("p1"), ins, ContextSnapshot("p1", 0, {"temp": temp}))
    full = set(render(m, DOC).payload)
    summary = set(render(m, CARER).payload)
    alert = set(render(m, PAGER).payload)
    assert alert <= summary <= full
    if not any(i.severity.value == "critical" for i in ins):
        assert not alert


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.lists(insights, max_size=3), st.sampled_from([37.0, 38.5])), max_size=15))
def test_version_strictly_increases_on_change(steps):
    m = StatusModel("p1")
    for ins, temp in steps:
        new = update_model(m, ins, ContextSnapshot("p1", 0, {"temp": temp}))
        if new is m:
            assert (new.digest, new.signature) == (m.digest, m.signature)
        else:
            assert new.version == m.version + 1
        m = new
