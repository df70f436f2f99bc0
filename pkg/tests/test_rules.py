import pytest
from hypothesis import given, settings, strategies as st

from careloop.context import ContextSnapshot
from careloop.errors import DuplicateRuleId, InvalidField, UnknownRuleId
from careloop.reasoning import Insight
from careloop.rules import (
    AdjustSampling,
    Escalate,
    Guard,
    Log,
    Notify,
    Rule,
    RuleChange,
    RuleCondition,
    Ruleset,
    describe,
    evaluate,
    fired_rules,
    update_ruleset,
)

from strategies import insights, snapshots

SNAP = ContextSnapshot("p1", 0, {"temp": 39.4})
FEVER_CRIT = Insight("p1", "fever", "critical", 1.0, 0)
NOTIFY_DOC = Notify("MedicalPersonnel")
LOG = Log("fever seen")


def ruleset():
    return Ruleset((
        Rule("r_any", (LOG,), RuleCondition("*"), priority=1),
        Rule("r_fever", (NOTIFY_DOC,), RuleCondition("fever"), priority=10),
    ))


def test_priority_order():
    assert evaluate([FEVER_CRIT], SNAP, ruleset()) == [NOTIFY_DOC, LOG]


def test_no_insights():
    assert evaluate([], SNAP, ruleset()) == []


def test_duplicate_actions_collapse():
    rs = Ruleset((Rule("a", (LOG,)), Rule("b", (LOG, Escalate("m")))))
    assert evaluate([FEVER_CRIT], SNAP, rs) == [LOG, Escalate("m")]


def test_same_priority_breaks_ties_by_id():
    rs = Ruleset((Rule("z", (Log("z"),)), Rule("a", (Log("a"),))))
    assert evaluate([FEVER_CRIT], SNAP, rs) == [Log("a"), Log("z")]


def test_add_then_evaluate():
    rs = update_ruleset(Ruleset(), RuleChange("add", Rule("r1", (LOG,))))
    assert evaluate([FEVER_CRIT], SNAP, rs) == [LOG]


def test_disable_leaves_lower_priority():
    before = ruleset()
    after = update_ruleset(before, RuleChange("disable", rule_id="r_fever"))
    assert evaluate([FEVER_CRIT], SNAP, after) == [LOG]
    assert evaluate([FEVER_CRIT], SNAP, before) == [NOTIFY_DOC, LOG]  # prior value untouched
    again = update_ruleset(after, RuleChange("enable", rule_id="r_fever"))
    assert evaluate([FEVER_CRIT], SNAP, again) == [NOTIFY_DOC, LOG]


def test_remove_unknown():
    with pytest.raises(UnknownRuleId):
        update_ruleset(ruleset(), RuleChange("remove", rule_id="nope"))


def test_duplicate_id():
    with pytest.raises(DuplicateRuleId):
        ruleset().add(Rule("r_any", (LOG,)))


def test_rule_invariants():
    with pytest.raises(InvalidField):
        Rule("empty", ())
    with pytest.raises(InvalidField):
        AdjustSampling("s1", 0)
    with pytest.raises(InvalidField):
        Guard("temp", "~", 1.0)


def test_condition_filters():
    warn = Insight("p1", "fever", "warning", 1.0, 0)
    pred = Insight("p1", "fever", "warning", 0.9, 0, "predicted", 500)
    assert not RuleCondition("fever", "critical").matches(warn, SNAP)
    assert RuleCondition("fe*").matches(warn, SNAP)
    assert not RuleCondition(horizon="current").matches(pred, SNAP)
    assert RuleCondition(guard=Guard("temp", ">", 39.0)).matches(warn, SNAP)
    assert not RuleCondition(guard=Guard("spo2", "<", 90.0)).matches(warn, SNAP)


def test_fired_rules_reports_matches():
    fall = Insight("p1", "fall", "critical", 1.0, 0)
    fired = fired_rules([FEVER_CRIT, fall], SNAP, ruleset())
    assert [(r.id, [i.kind for i in hits]) for r, hits in fired] == [("r_fever", ["fever"]),
                                                                    ("r_any", ["fever", "fall"])]


def test_describe():
    assert describe(Notify("d1", "summary")) == "notify:d1:summary"
    assert describe(AdjustSampling("s1", 250)) == "adjust_sampling:s1:250"
    assert describe(Escalate("m")) == "escalate:m"
    assert describe(LOG) == "log:fever seen"


@settings(max_examples=300, deadline=None)
@given(st.lists(insights, min_size=1, max_size=5), snapshots)
def test_guard_never_fires_at_or_below(ins, snap):
    rs = Ruleset((Rule("hot", (LOG,), RuleCondition(guard=Guard("temp", ">", 38.0))),))
    if snap.value("temp") <= 38.0:
        assert evaluate(ins, snap, rs) == []
    else:
        assert evaluate(ins, snap, rs) == [LOG]
