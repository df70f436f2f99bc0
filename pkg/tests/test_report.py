import json

import pytest

from careloop.errors import UnknownFormat
from careloop.reference import build, fever_scenario, ward_scenario
from careloop.report import RunReport, compare, render, render_comparison
from careloop.simulation import run


@pytest.fixture(scope="module")
def fog():
    return run(build(fever_scenario("fog")))


@pytest.fixture(scope="module")
def apaas():
    return run(build(fever_scenario("apaas")))


def test_json_round_trip(fog):
    text = render(fog, "json")
    assert RunReport.from_json(text) == fog
    assert list(json.loads(text)) == sorted(json.loads(text))


def test_text_summary(fog):
    text = render(fog, "text")
    assert "loop loop1: 600 iterations, 0 degraded, mean decision latency 9.0 ms" in text
    assert "fever[predicted]" in text


def test_unknown_format(fog):
    with pytest.raises(UnknownFormat):
        render(fog, "yaml")


def test_compare_placements(fog, apaas):
    diff = compare(fog, apaas)
    assert diff["mean_latency_ms"]["delta"] == 100
    assert diff["same_insights"] and diff["same_actions"]
    assert diff["layer_ingress_bytes"]["cloud"]["a"] == 0
    assert "insights identical: True" in render_comparison(diff)


def test_aggregates_in_text():
    text = render(run(build(ward_scenario())), "text")
    assert "aggregate epoch 1 fever@default by master: 3/12 = 25.0%" in text
