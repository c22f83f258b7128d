import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import (bipartite33, bowtie_spec, random_instance, star5,
                      tripartite221)
from mccsma.capacity import (full_support_certificate, lpartite_condition,
                             membership)
from mccsma.schedule import enumerate_feasible
from mccsma.topology import CsmaParams, NetworkSpec, replicate_graph


def test_single_link_region():
    spec = NetworkSpec(1, 1, replicate_graph(1, [0], []))
    params = CsmaParams.from_alpha(spec, 1.0)
    for rho, status in [(0.3, "interior"), (0.999999, "interior"),
                        (1.0, "boundary"), (1.5, "exterior")]:
        verdict = membership([rho], spec, params)
        assert verdict.status == status
        if status != "boundary":
            assert verdict.margin == pytest.approx(1.0 / rho - 1.0, abs=1e-9)


def test_zero_load_is_interior_with_infinite_margin():
    spec = NetworkSpec(2, 1, replicate_graph(1, [0, 1], [(0, 1)]))
    params = CsmaParams.from_alpha(spec, 1.0)
    verdict = membership([0.0, 0.0], spec, params)
    assert verdict.status == "interior"
    assert math.isinf(verdict.margin)


def test_bowtie_region_matches_closed_form(bowtie):
    params = CsmaParams.from_alpha(bowtie, 1.0)
    schedules = enumerate_feasible(bowtie)
    for r1 in np.linspace(0.0, 1.0, 14):
        for r3 in np.linspace(0.0, 1.0, 14):
            verdict = membership([r1, r1, r3, r1, r1], bowtie, params,
                                 schedules=schedules)
            if math.isinf(verdict.margin):
                continue
            expected_t = min(1.0 / r3 if r3 > 0 else math.inf,
                             2.0 / (2.0 * r1 + r3))
            assert verdict.margin == pytest.approx(expected_t - 1.0, abs=1e-9)


def test_multipartite_closed_form_values():
    spec = tripartite221()
    params = CsmaParams.from_alpha(spec, 1.0)
    verdict = lpartite_condition([0.2] * 5, spec, params)
    assert verdict.interior and verdict.slack == pytest.approx(0.4)

    zero = lpartite_condition([0.0] * 5, spec, params)
    assert zero.interior and zero.slack == pytest.approx(1.0)
    assert math.isinf(zero.multiplier)

    two_channel = bipartite33(channels=2)
    params2 = CsmaParams.from_alpha(two_channel, 1.0)
    loads = [1.2, 0.1, 0.1, 0.9, 0.2, 0.2]    # block maxima 1.2 and 0.9
    verdict2 = lpartite_condition(loads, two_channel, params2)
    assert not verdict2.interior
    assert verdict2.slack == pytest.approx(2.0 - 2.1)


def test_multipartite_rejects_other_graphs(bowtie):
    params = CsmaParams.from_alpha(bowtie, 1.0)
    with pytest.raises(ValueError, match="multipartite"):
        lpartite_condition([0.1] * 5, bowtie, params)


def test_lp_agrees_with_multipartite_closed_form():
    rng = np.random.default_rng(3)
    for spec in (star5(), bipartite33(), tripartite221(), bipartite33(channels=2)):
        params = CsmaParams.from_alpha(spec, 1.0)
        schedules = enumerate_feasible(spec)
        for _ in range(12):
            rho = rng.uniform(0.0, 0.9, spec.num_classes)
            lp = membership(rho, spec, params, schedules=schedules)
            closed = lpartite_condition(rho, spec, params)
            if math.isinf(lp.margin):
                assert math.isinf(closed.multiplier)
                continue
            assert lp.margin == pytest.approx(closed.multiplier - 1.0, abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.25, 3.0))
def test_margin_scales_inversely_with_load(seed, c):
    rng = np.random.default_rng(seed)
    spec, params, _ = random_instance(rng, infrastructure=False)
    rho = rng.uniform(0.05, 1.0, spec.num_classes)
    t1 = membership(rho, spec, params).margin + 1.0
    t2 = membership(c * rho, spec, params).margin + 1.0
    assert t2 == pytest.approx(t1 / c, rel=1e-7)


def test_interior_certificate_has_strict_slack(bowtie):
    params = CsmaParams.from_alpha(bowtie, 1.0)
    rho = np.array([0.5, 0.5, 0.4, 0.5, 0.5])
    verdict = membership(rho, bowtie, params)
    assert verdict.status == "interior"
    schedules = enumerate_feasible(bowtie)
    served = np.zeros(5)
    for s, p in verdict.certificate.items():
        served += p * np.asarray(s.per_class)
    assert np.all(rho < served + 1e-12)
    assert all(p >= 0 for p in verdict.certificate.values())
    assert sum(verdict.certificate.values()) == pytest.approx(1.0)


def test_full_support_mixing_preserves_feasibility(bowtie):
    params = CsmaParams.from_alpha(bowtie, 1.0)
    rho = np.array([0.4, 0.4, 0.3, 0.4, 0.4])
    schedules = enumerate_feasible(bowtie)
    verdict = membership(rho, bowtie, params, schedules=schedules)
    mixed = full_support_certificate(verdict, schedules)
    assert all(p > 0 for p in mixed.values())
    assert sum(mixed.values()) == pytest.approx(1.0)
    served = np.zeros(5)
    for s, p in mixed.items():
        served += p * np.asarray(s.per_class)
    assert np.all(rho < served)


def test_membership_is_deterministic(bowtie):
    params = CsmaParams.from_alpha(bowtie, 1.0)
    rho = [0.6, 0.6, 0.2, 0.6, 0.6]
    a = membership(rho, bowtie, params)
    b = membership(rho, bowtie, params)
    assert a.status == b.status and a.margin == b.margin
    assert a.certificate == b.certificate


def test_load_shape_and_sign_validation(bowtie):
    params = CsmaParams.from_alpha(bowtie, 1.0)
    with pytest.raises(ValueError, match="expected 5"):
        membership([0.1, 0.2], bowtie, params)
    with pytest.raises(ValueError, match="nonnegative"):
        membership([-0.1, 0.2, 0.1, 0.1, 0.1], bowtie, params)
