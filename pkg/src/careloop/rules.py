"""Rule engine: maps insights and current context to corrective actions."""

from __future__ import annotations

import fnmatch
import operator
from dataclasses import dataclass, field, replace
from typing import Iterable, Union

from .context import ContextSnapshot
from .errors import DuplicateRuleId, InvalidField, UnknownRuleId
from .reasoning import Horizon, Insight, Severity


@dataclass(frozen=True)
class Notify:
    target: str  # a party role or a party id
    detail: str | None = None
    kind = "notify"


@dataclass(frozen=True)
class AdjustSampling:
    sensor: str
    new_period_ms: int
    kind = "adjust_sampling"

    def __post_init__(self) -> None:
        if self.new_period_ms <= 0:
            raise InvalidField(f"adjust_sampling period must be > 0, got {self.new_period_ms}")


@dataclass(frozen=True)
class Escalate:
    to_loop: str
    kind = "escalate"


@dataclass(frozen=True)
class Log:
    text: str
    kind = "log"


CorrectiveAction = Union[Notify, AdjustSampling, Escalate, Log]


def describe(action: CorrectiveAction) -> str:
    if isinstance(action, Notify):
        return f"notify:{action.target}" + (f":{action.detail}" if action.detail else "")
    if isinstance(action, AdjustSampling):
        return f"adjust_sampling:{action.sensor}:{action.new_period_ms}"
    if isinstance(action, Escalate):
        return f"escalate:{action.to_loop}"
    return f"log:{action.text}"


_OPS = {">": operator.gt, ">=": operator.ge, "<": operator.lt, "<=": operator.le,
        "==": operator.eq, "!=": operator.ne}


@dataclass(frozen=True)
class Guard:
    metric: str
    op: str
    value: float

    def __post_init__(self) -> None:
        if self.op not in _OPS:
            raise InvalidField(f"unknown guard comparator {self.op!r}")

    def holds(self, snap: ContextSnapshot) -> bool:
        v = snap.value(self.metric)
        return v is not None and _OPS[self.op](v, self.value)


@dataclass(frozen=True)
class RuleCondition:
    kind: str = "*"  # fnmatch pattern over insight kinds
    min_severity: Severity = Severity.INFO
    horizon: Horizon | None = None
    guard: Guard | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "min_severity", Severity(self.min_severity))
        if self.horizon is not None:
            object.__setattr__(self, "horizon", Horizon(self.horizon))

    def matches(self, insight: Insight, snap: ContextSnapshot) -> bool:
        if not fnmatch.fnmatchcase(insight.kind, self.kind):
            return False
        if insight.severity.rank < self.min_severity.rank:
            return False
        if self.horizon is not None and insight.horizon is not self.horizon:
            return False
        return self.guard is None or self.guard.holds(snap)


@dataclass(frozen=True)
class Rule:
    id: str
    actions: tuple[CorrectiveAction, ...]
    condition: RuleCondition = field(default_factory=RuleCondition)
    priority: int = 0
    enabled: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "actions", tuple(self.actions))
        if not self.actions:
            raise InvalidField(f"rule {self.id!r} has no actions")


@dataclass(frozen=True)
class Ruleset:
    """Immutable collection of rules with unique ids; updates return copies."""

    rules: tuple[Rule, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "rules", tuple(self.rules))
        seen: set[str] = set()
        for r in self.rules:
            if r.id in seen:
                raise DuplicateRuleId(f"rule id {r.id!r} used twice")
            seen.add(r.id)

    def __iter__(self):
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)

    def get(self, rule_id: str) -> Rule:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise UnknownRuleId(f"no rule {rule_id!r}")

    def add(self, rule: Rule) -> "Ruleset":
        return Ruleset(self.rules + (rule,))

    def remove(self, rule_id: str) -> "Ruleset":
        self.get(rule_id)
        return Ruleset(tuple(r for r in self.rules if r.id != rule_id))

    def _set_enabled(self, rule_id: str, enabled: bool) -> "Ruleset":
        self.get(rule_id)
        return Ruleset(tuple(replace(r, enabled=enabled) if r.id == rule_id else r for r in self.rules))

    def enable(self, rule_id: str) -> "Ruleset":
        return self._set_enabled(rule_id, True)

    def disable(self, rule_id: str) -> "Ruleset":
        return self._set_enabled(rule_id, False)


@dataclass(frozen=True)
class RuleChange:
    op: str  # add | remove | enable | disable
    rule: Rule | None = None
    rule_id: str | None = None


def update_ruleset(rules: Ruleset, change: RuleChange) -> Ruleset:
    if change.op == "add":
        if change.rule is None:
            raise InvalidField("add needs a rule")
        return rules.add(change.rule)
    rule_id = change.rule_id or (change.rule.id if change.rule else None)
    if rule_id is None:
        raise InvalidField(f"{change.op} needs a rule id")
    if change.op == "remove":
        return rules.remove(rule_id)
    if change.op == "enable":
        return rules.enable(rule_id)
    if change.op == "disable":
        return rules.disable(rule_id)
    raise InvalidField(f"unknown ruleset change {change.op!r}")


def fired_rules(insights: Iterable[Insight], snap: ContextSnapshot,
                rules: Ruleset | Iterable[Rule]) -> list[tuple[Rule, tuple[Insight, ...]]]:
    """Enabled rules matching at least one insight, in firing order
    (priority descending, then id), each with the insights it matched."""
    insights = tuple(insights)
    out = []
    for rule in sorted((r for r in rules if r.enabled), key=lambda r: (-r.priority, r.id)):
        hits = tuple(i for i in insights if rule.condition.matches(i, snap))
        if hits:
            out.append((rule, hits))
    return out


def evaluate(insights: Iterable[Insight], snap: ContextSnapshot,
             rules: Ruleset | Iterable[Rule]) -> list[CorrectiveAction]:
    """Concatenate the actions of every firing rule, dropping exact duplicates."""
    actions: list[CorrectiveAction] = []
    seen: set[CorrectiveAction] = set()
    for rule, _ in fired_rules(insights, snap, rules):
        for a in rule.actions:
            if a not in seen:
                seen.add(a)
                actions.append(a)
    return actions
