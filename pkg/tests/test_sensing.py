import pytest
from hypothesis import given, settings, strategies as st

from careloop.domain import SensorDescriptor
from careloop.errors import BeforeTraceStart, InvalidField
from careloop.sensing import (
    DeltaExceeds,
    EventBased,
    SensorState,
    SignalTrace,
    ThresholdCross,
    TimeBased,
    on_change,
    poll,
    sample_trace,
)

PTS = ((0, 36.5), (100, 39.0))


def timed(period=1000, points=PTS):
    desc = SensorDescriptor("s1", "physiological", "temp", "C", TimeBased(period), "dev1")
    return SensorState(desc, SignalTrace("temp", points, "linear"))


def evented(pred, points=PTS):
    desc = SensorDescriptor("s1", "physiological", "temp", "C", EventBased(pred), "dev1")
    return SensorState(desc, SignalTrace("temp", points))


def test_step_hold():
    assert sample_trace(SignalTrace("t", PTS, "step"), 50) == 36.5


def test_linear_midpoint():
    assert sample_trace(SignalTrace("t", PTS, "linear"), 50) == 37.75


def test_clamped_past_end():
    assert sample_trace(SignalTrace("t", PTS, "linear"), 250) == 39.0


def test_before_start():
    with pytest.raises(BeforeTraceStart):
        sample_trace(SignalTrace("t", ((10, 1.0),)), 5)


def test_trace_needs_increasing_points():
    with pytest.raises(InvalidField):
        SignalTrace("t", ((0, 1.0), (0, 2.0)))
    with pytest.raises(InvalidField):
        SignalTrace("t", ())


def test_period_gating():
    st_ = timed()
    got = [poll(st_, t) for t in (0, 500, 1000)]
    assert [r.timestamp if r else None for r in got] == [0, None, 1000]
    assert [r.seq for r in got if r] == [1, 2]


def test_ten_second_run_gives_eleven_readings():
    st_ = timed()
    readings = [r for t in range(0, 10_001) if (r := poll(st_, t))]
    assert [r.timestamp for r in readings] == list(range(0, 10_001, 1000))


def test_threshold_cross_is_edge_triggered():
    st_ = evented(ThresholdCross(38.0, "above"))
    assert on_change(st_, 0, 37.9) is None
    r = on_change(st_, 1, 38.2)
    assert r is not None and r.value == 38.2
    assert on_change(st_, 2, 38.5) is None


def test_threshold_below():
    st_ = evented(ThresholdCross(36.0, "below"))
    on_change(st_, 0, 36.4)
    assert on_change(st_, 1, 36.0) is not None
    assert on_change(st_, 2, 35.0) is None


def test_delta_exceeds():
    st_ = evented(DeltaExceeds(0.5))
    assert on_change(st_, 0, 36.6) is None  # first value never emits
    assert on_change(st_, 1, 36.9) is None
    assert on_change(st_, 2, 37.6) is not None


def test_negative_delta_rejected():
    with pytest.raises(InvalidField):
        DeltaExceeds(-0.1)


def test_categorical_delta_fires_on_change():
    st_ = evented(DeltaExceeds(3.0), points=((0, "moving@hall"),))
    on_change(st_, 0, "moving@hall")
    assert on_change(st_, 1, "moving@hall") is None
    assert on_change(st_, 2, "sitting@hall") is not None


def test_poll_rejects_event_sensor():
    with pytest.raises(InvalidField):
        poll(evented(DeltaExceeds(1)), 0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 500), st.integers(1, 300), st.integers(0, 3000), st.integers(1, 7))
def test_time_based_count(t0, period, span, stride):
    """Dense polling emits exactly floor((T - t0) / period) + 1 readings."""
    st_ = timed(period, ((t0, 1.0), (t0 + 10, 2.0)))
    horizon = t0 + span
    n = sum(1 for t in range(t0, horizon + 1) if poll(st_, t))
    assert n == span // period + 1
    # sparser polling never emits more
    st2 = timed(period, ((t0, 1.0), (t0 + 10, 2.0)))
    assert sum(1 for t in range(t0, horizon + 1, stride) if poll(st2, t)) <= n


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 50), st.floats(30, 40), st.floats(0.1, 5))
def test_single_crossing_emits_once(step, start, rise):
    level = start + rise / 2
    st_ = evented(ThresholdCross(level, "above"), points=((0, start), (1000, start + rise)))
    trace = SignalTrace("temp", ((0, start), (1000, start + rise)), "linear")
    emitted = [r for t in range(0, 1500, step) if (r := on_change(st_, t, sample_trace(trace, t)))]
    assert len(emitted) <= 1
    if step <= 1000 // 4:
        assert len(emitted) == 1


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10_000), st.floats(-100, 100)), min_size=1, max_size=10,
                unique_by=lambda p: p[0]), st.integers(0, 12_000))
def test_linear_value_between_brackets(points, t):
    points = sorted(points)
    trace = SignalTrace("x", points, "linear")
    if t < points[0][0]:
        with pytest.raises(BeforeTraceStart):
            sample_trace(trace, t)
        return
    v = sample_trace(trace, t)
    before = [p for p in points if p[0] <= t][-1]
    after = [p for p in points if p[0] > t]
    if not after:
        assert v == before[1]
    else:
        lo, hi = sorted((before[1], after[0][1]))
        assert lo - 1e-9 <= v <= hi + 1e-9
