"""Scenario files: a YAML document bundling the network, CSMA parameters,
traffic and one experiment block.

Scenario documents index classes and channels from 1; everything in memory is
0-based. Parsing and serialization round-trip: parse(serialize(parse(doc)))
equals parse(doc) on all semantic content.

A small library of named scenarios ships with the package (see
``bundled_scenarios``); the CLI accepts either a bundled name or a file path.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Sequence

import yaml

from .topology import (AccessPoint, ChannelGraph, CsmaParams, NetworkSpec,
                       TrafficSpec, validate_params, validate_spec, validate_traffic)

EXPERIMENT_KINDS = ("equilibrium", "capacity-sweep", "simulate",
                    "stability-sweep", "timescale")


class ScenarioError(ValueError):
    """Malformed scenario document."""


class ScenarioValidationError(ScenarioError):
    """Well-formed document describing an invalid network/parameter set."""


@dataclass(frozen=True)
class SweepAxis:
    classes: tuple[int, ...]          # 0-based class indices sharing this axis
    maximum: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    """Experiment block of a scenario; fields beyond ``kind`` are kind-specific."""

    kind: str
    policy: str = "auto"
    state: Optional[tuple[int, ...]] = None          # equilibrium
    grid: int = 50                                   # sweeps
    axis1: Optional[SweepAxis] = None
    axis2: Optional[SweepAxis] = None
    horizon: float = 1000.0                          # simulate / stability
    replications: int = 5
    scaling_n: int = 0                               # 0 = separated model
    initial_state: Optional[tuple[int, ...]] = None
    sample_count: int = 400
    max_total_flows: int = 100_000
    n_values: tuple[int, ...] = (1, 4, 16, 64)       # timescale
    t_probe: float = 1.0

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ScenarioError(f"unknown experiment kind {self.kind!r}; "
                                f"expected one of {EXPERIMENT_KINDS}")


@dataclass(frozen=True)
class Scenario:
    name: str
    network: NetworkSpec
    csma: CsmaParams
    traffic: TrafficSpec
    experiment: ExperimentConfig
    description: str = ""


def _req(doc: dict, key: str, where: str) -> Any:
    if key not in doc:
        raise ScenarioError(f"missing key {key!r} in {where}")
    return doc[key]


def _class_list(values: Sequence[int], K: int, where: str) -> tuple[int, ...]:
    out = []
    for v in values:
        idx = int(v) - 1
        if not 0 <= idx < K:
            raise ScenarioError(f"{where}: class {v} out of range 1..{K}")
        out.append(idx)
    return tuple(out)


def _parse_network(doc: dict) -> NetworkSpec:
    K = int(_req(doc, "classes", "network"))
    J = int(_req(doc, "channels", "network"))
    if "channel_graphs" in doc:
        graphs = []
        for j, g in enumerate(doc["channel_graphs"]):
            eligible = _class_list(_req(g, "eligible", f"channel_graphs[{j}]"), K,
                                   f"channel_graphs[{j}].eligible")
            edges = [(int(a) - 1, int(b) - 1) for a, b in g.get("edges", [])]
            graphs.append(ChannelGraph.of(eligible, edges))
        if len(graphs) != J:
            raise ScenarioError(f"network: {len(graphs)} channel graphs for {J} channels")
        channel_graphs = tuple(graphs)
    else:
        edges = [(int(a) - 1, int(b) - 1) for a, b in doc.get("conflict_edges", [])]
        eligible = (_class_list(doc["eligible"], K, "network.eligible")
                    if "eligible" in doc else tuple(range(K)))
        channel_graphs = tuple(ChannelGraph.of(eligible, edges) for _ in range(J))

    mode = doc.get("mode", "adhoc")
    aps: tuple[AccessPoint, ...] = ()
    if mode == "infrastructure":
        aps = tuple(
            AccessPoint.of(_class_list(ap.get("uplink", []), K, f"access_points[{i}]"),
                           _class_list(ap.get("downlink", []), K, f"access_points[{i}]"))
            for i, ap in enumerate(_req(doc, "access_points", "network")))
    elif mode != "adhoc":
        raise ScenarioError(f"network.mode must be 'adhoc' or 'infrastructure', got {mode!r}")
    return NetworkSpec(K, J, channel_graphs, aps)


def _per_class(value, K: int, where: str) -> tuple[float, ...]:
    if isinstance(value, (int, float, str)):
        try:
            scalar = float(value)
        except ValueError:
            raise ScenarioError(f"{where}: not a number: {value!r}") from None
        return tuple(scalar for _ in range(K))
    vals = tuple(float(v) for v in value)
    if len(vals) != K:
        raise ScenarioError(f"{where}: expected {K} values, got {len(vals)}")
    return vals


def _parse_csma(doc: dict, spec: NetworkSpec) -> CsmaParams:
    K = spec.num_classes
    phys = _per_class(doc.get("phys_rate", 1.0), K, "csma.phys_rate")
    if "attempt_rate" in doc:
        nu = _per_class(doc["attempt_rate"], K, "csma.attempt_rate")
    elif "alpha" in doc:
        alpha = _per_class(doc["alpha"], K, "csma.alpha")
        nu = tuple(a * p for a, p in zip(alpha, phys))
    else:
        raise ScenarioError("csma: need either attempt_rate or alpha")
    probe = doc.get("probe", "uniform")
    if probe == "uniform":
        probe_prob = CsmaParams.uniform_probe(spec)
    else:
        probe_prob = tuple(tuple(float(v) for v in row) for row in probe)
        if len(probe_prob) != K or any(len(r) != spec.num_channels for r in probe_prob):
            raise ScenarioError("csma.probe: expected a classes x channels matrix")
    return CsmaParams(phys, nu, probe_prob)


def _parse_traffic(doc: dict, K: int) -> TrafficSpec:
    lam = _per_class(_req(doc, "arrival_rate", "traffic"), K, "traffic.arrival_rate")
    sigma = _per_class(_req(doc, "mean_flow_size", "traffic"), K, "traffic.mean_flow_size")
    return TrafficSpec(lam, sigma)


def _parse_axis(doc: dict, K: int, where: str) -> SweepAxis:
    return SweepAxis(_class_list(_req(doc, "classes", where), K, where),
                     float(doc.get("max", 1.0)))


def _parse_experiment(doc: dict, K: int) -> ExperimentConfig:
    kind = _req(doc, "kind", "experiment")
    kwargs: dict[str, Any] = {"kind": kind}
    if "policy" in doc:
        kwargs["policy"] = str(doc["policy"])
    if "state" in doc:
        kwargs["state"] = tuple(int(v) for v in doc["state"])
    for key in ("grid", "replications", "scaling_n", "sample_count", "max_total_flows"):
        if key in doc:
            kwargs[key] = int(doc[key])
    for key in ("horizon", "t_probe"):
        if key in doc:
            kwargs[key] = float(doc[key])
    if "initial_state" in doc:
        kwargs["initial_state"] = tuple(int(v) for v in doc["initial_state"])
    if "n_values" in doc:
        kwargs["n_values"] = tuple(int(v) for v in doc["n_values"])
    if "axis1" in doc:
        kwargs["axis1"] = _parse_axis(doc["axis1"], K, "experiment.axis1")
    if "axis2" in doc:
        kwargs["axis2"] = _parse_axis(doc["axis2"], K, "experiment.axis2")
    return ExperimentConfig(**kwargs)


def parse_scenario(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    network = _parse_network(_req(doc, "network", "scenario"))
    problems = validate_spec(network)
    if problems:
        raise ScenarioValidationError("invalid network: " + "; ".join(problems))
    csma = _parse_csma(_req(doc, "csma", "scenario"), network)
    problems = validate_params(network, csma)
    if problems:
        raise ScenarioValidationError("invalid csma parameters: " + "; ".join(problems))
    traffic = _parse_traffic(_req(doc, "traffic", "scenario"), network.num_classes)
    problems = validate_traffic(traffic)
    if problems:
        raise ScenarioValidationError("invalid traffic: " + "; ".join(problems))
    experiment = _parse_experiment(_req(doc, "experiment", "scenario"),
                                   network.num_classes)
    return Scenario(str(doc.get("name", "unnamed")), network, csma, traffic,
                    experiment, str(doc.get("description", "")))


def scenario_to_document(s: Scenario) -> dict:
    """Canonical document form: explicit per-channel graphs, explicit arrays."""
    net: dict[str, Any] = {
        "classes": s.network.num_classes,
        "channels": s.network.num_channels,
        "channel_graphs": [
            {"eligible": [k + 1 for k in sorted(g.eligible)],
             "edges": [[a + 1, b + 1] for a, b in sorted(g.edges)]}
            for g in s.network.channel_graphs
        ],
        "mode": s.network.mode,
    }
    if s.network.is_infrastructure:
        net["access_points"] = [
            {"uplink": [k + 1 for k in sorted(ap.uplink)],
             "downlink": [k + 1 for k in sorted(ap.downlink)]}
            for ap in s.network.access_points
        ]
    exp: dict[str, Any] = {"kind": s.experiment.kind, "policy": s.experiment.policy}
    defaults = ExperimentConfig(kind=s.experiment.kind)
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in ("kind", "policy", "axis1", "axis2"):
            continue
        value = getattr(s.experiment, f.name)
        if value != getattr(defaults, f.name):
            exp[f.name] = list(value) if isinstance(value, tuple) else value
    for axis_name in ("axis1", "axis2"):
        axis = getattr(s.experiment, axis_name)
        if axis is not None:
            exp[axis_name] = {"classes": [k + 1 for k in axis.classes],
                              "max": axis.maximum}
    return {
        "name": s.name,
        "description": s.description,
        "network": net,
        "csma": {
            "phys_rate": list(s.csma.phys_rate),
            "attempt_rate": list(s.csma.attempt_rate),
            "probe": [list(row) for row in s.csma.probe_prob],
        },
        "traffic": {
            "arrival_rate": list(s.traffic.arrival_rate),
            "mean_flow_size": list(s.traffic.mean_flow_size),
        },
        "experiment": exp,
    }


def load_scenario_text(text: str) -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"not valid YAML: {exc}") from exc
    if doc is None:
        raise ScenarioError("scenario file is empty")
    return parse_scenario(doc)


def dump_scenario(s: Scenario) -> str:
    return yaml.safe_dump(scenario_to_document(s), sort_keys=False)


def bundled_scenarios() -> list[str]:
    root = resources.files("mccsma").joinpath("scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_scenario(name_or_path: str) -> Scenario:
    """Load a scenario by bundled name or by file path."""
    path = Path(name_or_path)
    if path.suffix in (".yaml", ".yml") or path.exists():
        return load_scenario_text(path.read_text())
    ref = resources.files("mccsma").joinpath(f"scenarios/{name_or_path}.yaml")
    if not ref.is_file():
        raise ScenarioError(
            f"no scenario file {name_or_path!r} and no bundled scenario of that name; "
            f"bundled: {', '.join(bundled_scenarios())}")
    return load_scenario_text(ref.read_text())
