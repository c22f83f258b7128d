import pytest

from mccsma.scenario import (ScenarioError, ScenarioValidationError,
                             bundled_scenarios, dump_scenario, load_scenario,
                             load_scenario_text, parse_scenario)

MINIMAL = """
name: pair
network:
  classes: 2
  channels: 1
  conflict_edges: [[1, 2]]
csma:
  phys_rate: 1.0
  alpha: 2.0
traffic:
  arrival_rate: [0.5, 0.25]
  mean_flow_size: 1.0
experiment:
  kind: simulate
  policy: adhoc
  horizon: 10.0
"""


def test_minimal_scenario_parses_with_one_based_classes():
    s = load_scenario_text(MINIMAL)
    assert s.network.num_classes == 2
    assert s.network.channel_graphs[0].edges == frozenset({(0, 1)})
    assert s.csma.attempt_rate == (2.0, 2.0)
    assert s.traffic.arrival_rate == (0.5, 0.25)
    assert s.experiment.kind == "simulate"


def test_round_trip_is_identity_on_semantics():
    first = load_scenario_text(MINIMAL)
    second = load_scenario_text(dump_scenario(first))
    assert second == first
    third = load_scenario_text(dump_scenario(second))
    assert third == first


def test_bundled_scenarios_all_parse_and_round_trip():
    names = bundled_scenarios()
    assert {"bowtie", "adhoc4", "star5", "bipartite33", "tripartite221",
            "two-ap", "ap-line3"} <= set(names)
    for name in names:
        s = load_scenario(name)
        assert s.name == name
        assert load_scenario_text(dump_scenario(s)) == s


def test_bowtie_scenario_structure():
    s = load_scenario("bowtie")
    assert s.network.mode == "infrastructure"
    assert len(s.network.access_points) == 5
    assert s.network.num_channels == 2
    assert s.network.channel_graphs[0] == s.network.channel_graphs[1]
    assert s.csma.alpha[0] == pytest.approx(1e6)


def test_unknown_name_and_empty_text_fail():
    with pytest.raises(ScenarioError, match="bundled"):
        load_scenario("nope-not-here")
    with pytest.raises(ScenarioError, match="empty"):
        load_scenario_text("")
    with pytest.raises(ScenarioError, match="YAML"):
        load_scenario_text("a: [unclosed")


def test_semantic_validation_is_distinguished():
    bad = MINIMAL.replace("conflict_edges: [[1, 2]]",
                          "conflict_edges: [[1, 1]]")
    with pytest.raises(ScenarioValidationError, match="itself"):
        load_scenario_text(bad)


def test_out_of_range_class_is_parse_error():
    bad = MINIMAL.replace("conflict_edges: [[1, 2]]", "conflict_edges: [[1, 9]]")
    with pytest.raises(ScenarioError):
        load_scenario_text(bad)


def test_unknown_experiment_kind_rejected():
    bad = MINIMAL.replace("kind: simulate", "kind: frobnicate")
    with pytest.raises(ScenarioError, match="frobnicate"):
        load_scenario_text(bad)


def test_probe_matrix_accepted():
    doc = MINIMAL.replace("alpha: 2.0", "alpha: 2.0\n  probe: [[1.0], [1.0]]")
    s = load_scenario_text(doc)
    assert s.csma.probe_prob == ((1.0,), (1.0,))
