"""Reasoning engine: detectors that turn context histories into insights.

Three detectors ship with the package (``threshold``, ``trend`` and
``fall``). Further detectors can be added with :func:`register_detector`;
a detector receives the snapshot sequence, its config, the element's medical
history and the assembly cadence, and returns an :class:`Insight` or None.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .context import ActivityState, ContextHistory, ContextSnapshot
from .domain import MedicalHistory
from .errors import DegenerateFit, InsufficientWindow, InvalidField, ReasoningError
from .sensing import Direction

log = logging.getLogger(__name__)


class Severity(str, Enum):
    INFO = "info"
    WARNING = "warning"
    CRITICAL = "critical"

    @property
    def rank(self) -> int:
        return _SEVERITY_RANK[self]


_SEVERITY_RANK = {Severity.INFO: 0, Severity.WARNING: 1, Severity.CRITICAL: 2}


class Horizon(str, Enum):
    CURRENT = "current"
    PREDICTED = "predicted"


@dataclass(frozen=True)
class Insight:
    element: str
    kind: str
    severity: Severity
    confidence: float
    detected_at: int
    horizon: Horizon = Horizon.CURRENT
    lead_ms: int = 0
    evidence: tuple[int, ...] = ()
    explanation: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "severity", Severity(self.severity))
        object.__setattr__(self, "horizon", Horizon(self.horizon))
        object.__setattr__(self, "evidence", tuple(self.evidence))
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidField(f"confidence {self.confidence} outside [0, 1]")
        if self.horizon is Horizon.PREDICTED and self.lead_ms <= 0:
            raise InvalidField("a predicted insight needs a positive lead")

    @property
    def id(self) -> str:
        return f"{self.element}/{self.kind}/{self.horizon.value}@{self.detected_at}"

    @property
    def key(self) -> tuple[str, str, Horizon]:
        return (self.element, self.kind, self.horizon)

    @property
    def label(self) -> str:
        return f"{self.kind}/{self.severity.value}"


@dataclass(frozen=True)
class DetectorConfig:
    """Parameters of one detector instance.

    ``name`` becomes the insight kind. ``critical_margin`` splits threshold
    violations into warning and critical bands.
    """

    name: str
    detector: str = "threshold"
    metric: str = ""
    threshold: float = 0.0
    direction: Direction = Direction.ABOVE
    window_size: int = 2
    forecast_lead_ms: int = 0
    use_baseline_offset: bool = False
    offset: float = 0.0
    critical_margin: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "direction", Direction(self.direction))
        if self.detector == "trend":
            if self.window_size < 2:
                raise InvalidField(f"{self.name}: trend window_size must be >= 2")
            if self.forecast_lead_ms <= 0:
                raise InvalidField(f"{self.name}: trend forecast_lead_ms must be > 0")

    def effective_threshold(self, hist: MedicalHistory | None) -> float:
        if self.use_baseline_offset and hist is not None:
            base = hist.baseline(self.metric)
            if base is not None:
                return base + self.offset
        return self.threshold


def _violates(value: float, threshold: float, direction: Direction) -> bool:
    return value >= threshold if direction is Direction.ABOVE else value <= threshold


def detect_threshold(snap: ContextSnapshot, cfg: DetectorConfig,
                     hist: MedicalHistory | None = None) -> Insight | None:
    value = snap.value(cfg.metric)
    if value is None:
        return None
    thr = cfg.effective_threshold(hist)
    if not _violates(value, thr, cfg.direction):
        return None
    excess = abs(value - thr)
    severity = Severity.CRITICAL if excess >= cfg.critical_margin else Severity.WARNING
    return Insight(
        element=snap.element,
        kind=cfg.name,
        severity=severity,
        confidence=1.0,
        detected_at=snap.timestamp,
        evidence=(snap.timestamp,),
        explanation=f"{cfg.metric}={value:g} {cfg.direction.value} threshold {thr:g}",
    )


@dataclass(frozen=True)
class LineFit:
    intercept: float
    slope: float
    r_squared: float
    t_mean: float
    v_mean: float

    def at(self, t: float) -> float:
        return self.v_mean + self.slope * (t - self.t_mean)


def fit_line(ts: Sequence[float], vs: Sequence[float]) -> LineFit:
    """Ordinary least squares fit of ``v = a + b t``, computed on centred data."""
    t = np.asarray(ts, dtype=np.float64)
    v = np.asarray(vs, dtype=np.float64)
    if t.size < 2 or t.size != v.size:
        raise InsufficientWindow(f"need at least 2 paired points, got {t.size}/{v.size}")
    t_mean = float(t.mean())
    v_mean = float(v.mean())
    dt = t - t_mean
    dv = v - v_mean
    sxx = float(dt @ dt)
    if sxx == 0.0:
        raise DegenerateFit("all timestamps are equal")
    slope = float(dt @ dv) / sxx
    intercept = v_mean - slope * t_mean
    ss_tot = float(dv @ dv)
    if ss_tot == 0.0:
        r2 = 1.0
    else:
        resid = dv - slope * dt
        r2 = 1.0 - float(resid @ resid) / ss_tot
    return LineFit(intercept, slope, min(1.0, max(0.0, r2)), t_mean, v_mean)


@dataclass(frozen=True)
class TrendForecast:
    fit: LineFit
    t_last: int
    current: float
    forecast: float


def trend_forecast(snaps: Sequence[ContextSnapshot], cfg: DetectorConfig) -> TrendForecast:
    """Fit the last ``cfg.window_size`` snapshots and extrapolate by the lead.

    All snapshots of the window must carry the metric.
    """
    w = tuple(snaps)[-cfg.window_size:] if cfg.window_size > 0 else ()
    if len(w) < cfg.window_size or any(s.value(cfg.metric) is None for s in w):
        raise InsufficientWindow(
            f"{cfg.name}: need {cfg.window_size} snapshots carrying {cfg.metric!r}")
    fit = fit_line([s.timestamp for s in w], [s.value(cfg.metric) for s in w])
    t_last = w[-1].timestamp
    return TrendForecast(fit, t_last, w[-1].value(cfg.metric), fit.at(t_last + cfg.forecast_lead_ms))


def predict_trend(snaps: Sequence[ContextSnapshot], cfg: DetectorConfig,
                  hist: MedicalHistory | None = None) -> Insight | None:
    tf = trend_forecast(snaps, cfg)
    thr = cfg.effective_threshold(hist)
    # a violation that is already current belongs to the threshold detector
    if _violates(tf.current, thr, cfg.direction) or not _violates(tf.forecast, thr, cfg.direction):
        return None
    w = tuple(snaps)[-cfg.window_size:]
    return Insight(
        element=w[-1].element,
        kind=cfg.name,
        severity=Severity.WARNING,
        confidence=tf.fit.r_squared,
        detected_at=tf.t_last,
        horizon=Horizon.PREDICTED,
        lead_ms=cfg.forecast_lead_ms,
        evidence=tuple(s.timestamp for s in w),
        explanation=(f"{cfg.metric} forecast {tf.forecast:.3f} in {cfg.forecast_lead_ms} ms "
                     f"(slope {tf.fit.slope:.3g}/ms) vs threshold {thr:g}"),
    )


def detect_fall(snaps: Sequence[ContextSnapshot], cadence_ms: int | None = None,
                name: str = "fall") -> Insight | None:
    """Abrupt ``moving -> laying_in_bed`` transition outside the bedroom."""
    if len(snaps) < 2:
        return None
    prev, cur = snaps[-2], snaps[-1]
    if prev.activity.state is not ActivityState.MOVING:
        return None
    if cur.activity.state is not ActivityState.LAYING_IN_BED or cur.activity.location == "bedroom":
        return None
    if cadence_ms is not None and cur.timestamp - prev.timestamp > 2 * cadence_ms:
        return None
    return Insight(
        element=cur.element,
        kind=name,
        severity=Severity.CRITICAL,
        confidence=1.0,
        detected_at=cur.timestamp,
        evidence=(prev.timestamp, cur.timestamp),
        explanation=f"moving -> laying_in_bed at {cur.activity.location or 'unknown location'}",
    )


Detector = Callable[[Sequence[ContextSnapshot], DetectorConfig, "MedicalHistory | None", "int | None"],
                    "Insight | None"]

DETECTORS: dict[str, Detector] = {}


def register_detector(name: str) -> Callable[[Detector], Detector]:
    def deco(fn: Detector) -> Detector:
        DETECTORS[name] = fn
        return fn
    return deco


@register_detector("threshold")
def _threshold(snaps, cfg, hist, cadence_ms):
    return detect_threshold(snaps[-1], cfg, hist) if snaps else None


@register_detector("trend")
def _trend(snaps, cfg, hist, cadence_ms):
    return predict_trend(snaps, cfg, hist)


@register_detector("fall")
def _fall(snaps, cfg, hist, cadence_ms):
    return detect_fall(snaps, cadence_ms, cfg.name)


def required_window(cfgs: Iterable[DetectorConfig]) -> int:
    """Snapshots a detector set needs to see; bounds offloaded summaries."""
    return max([2] + [c.window_size for c in cfgs if c.detector == "trend"])


def _rank(ins: Insight) -> tuple:
    return (-ins.severity.rank, ins.kind, ins.horizon is Horizon.PREDICTED, ins.lead_ms)


def reason(hist: MedicalHistory | None,
           chist: ContextHistory | Sequence[ContextSnapshot],
           cfgs: Iterable[DetectorConfig],
           *, cadence_ms: int | None = None) -> list[Insight]:
    """Run every configured detector over the history.

    Results are deduplicated by ``(element, kind, horizon)`` keeping the
    highest severity, then sorted by severity (desc) and kind. Detector
    failures are logged and treated as no result.
    """
    snaps = chist.snapshots if isinstance(chist, ContextHistory) else tuple(chist)
    if not snaps:
        return []
    best: dict[tuple, Insight] = {}
    for cfg in cfgs:
        fn = DETECTORS.get(cfg.detector)
        if fn is None:
            log.warning("no detector named %r (config %s)", cfg.detector, cfg.name)
            continue
        try:
            ins = fn(snaps, cfg, hist, cadence_ms)
        except ReasoningError as exc:
            log.debug("detector %s on %s: %s", cfg.name, snaps[-1].element, exc)
            continue
        if ins is None:
            continue
        held = best.get(ins.key)
        if held is None or (ins.severity.rank, ins.confidence) > (held.severity.rank, held.confidence):
            best[ins.key] = ins
    return sorted(best.values(), key=_rank)
