"""Capacity-region membership tests.

The capacity region is the set of throughput vectors obtainable by averaging
per-class service rates over a probability distribution on the feasible
schedules. Membership of a load vector rho is decided by the linear program

    maximize t
    subject to sum_y pi(y) = 1, pi >= 0,
               t * rho_k <= phys_rate_k * sum_y y_k * pi(y)  for rho_k > 0.

t > 1 means rho is interior, t < 1 exterior, and t within the boundary band
means no verdict: stability results do not cover critical loads and the
artifact refuses to guess there.

The LP is solved by a dense two-phase-free tableau simplex with Bland's rule:
the empty schedule plus the slack variables form an immediately feasible
basis, and Bland's rule guarantees termination despite degeneracy. Instances
here have a handful of rows and at most a few thousand schedule columns, so
no sparse machinery is warranted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .schedule import DEFAULT_MAX_SCHEDULES, Schedule, enumerate_feasible
from .topology import CsmaParams, NetworkSpec, detect_l_partite

BOUNDARY_TOL = 1e-9


class SolverError(RuntimeError):
    """The simplex did not reach an optimum; results would be unreliable."""


@dataclass
class CapacityVerdict:
    status: str                       # "interior" | "boundary" | "exterior"
    margin: float                     # t - 1, +inf for the zero load vector
    certificate: dict[Schedule, float]


def _simplex_max(tableau: np.ndarray, basis: list[int], *,
                 tol: float = 1e-11, max_iter: Optional[int] = None) -> float:
    """Maximize over a canonical tableau in place; returns the optimum.

    ``tableau`` holds the constraint rows [A | b] with an extra bottom row of
    reduced costs [c | 0]; the columns listed in ``basis`` must form an
    identity. Bland's rule (smallest eligible index enters, smallest basic
    variable leaves on ties) prevents cycling.
    """
    m = tableau.shape[0] - 1
    n = tableau.shape[1] - 1
    if max_iter is None:
        max_iter = 100 * (n + m + 10)
    for _ in range(max_iter):
        reduced = tableau[m, :n]
        entering = -1
        for j in range(n):
            if reduced[j] > tol:
                entering = j
                break
        if entering < 0:
            return -tableau[m, n]
        col = tableau[:m, entering]
        best_ratio = math.inf
        leave_row = -1
        for r in range(m):
            if col[r] > tol:
                ratio = tableau[r, n] / col[r]
                if (ratio < best_ratio - tol
                        or (abs(ratio - best_ratio) <= tol
                            and (leave_row < 0 or basis[r] < basis[leave_row]))):
                    best_ratio = ratio
                    leave_row = r
        if leave_row < 0:
            raise SolverError("linear program unbounded; load vector malformed")
        pivot = tableau[leave_row, entering]
        tableau[leave_row] /= pivot
        for r in range(m + 1):
            if r != leave_row and tableau[r, entering] != 0.0:
                tableau[r] -= tableau[r, entering] * tableau[leave_row]
        basis[leave_row] = entering
    raise SolverError("simplex iteration limit exceeded")


def membership(rho: Sequence[float], spec: NetworkSpec, params: CsmaParams, *,
               schedules: Optional[list[Schedule]] = None,
               max_schedules: int = DEFAULT_MAX_SCHEDULES,
               boundary_tol: float = BOUNDARY_TOL) -> CapacityVerdict:
    """Classify a load vector against the capacity region.

    The certificate is the schedule distribution achieving the optimal load
    multiplier; for an interior verdict it serves every positive-load class
    with strict slack. Passing ``schedules`` skips re-enumeration in sweeps.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (spec.num_classes,):
        raise ValueError(f"expected {spec.num_classes} loads, got shape {rho.shape}")
    if np.any(rho < 0):
        raise ValueError("loads must be nonnegative")
    if schedules is None:
        schedules = enumerate_feasible(spec, None, max_schedules=max_schedules)
    n_sched = len(schedules)

    positive = [k for k in range(spec.num_classes) if rho[k] > 0]
    if not positive:
        uniform = {s: 1.0 / n_sched for s in schedules}
        return CapacityVerdict("interior", math.inf, uniform)

    per_class = np.array([s.per_class for s in schedules], dtype=float)
    phi = params.phi
    m = 1 + len(positive)
    n = n_sched + 1 + len(positive)          # pi variables, t, slacks
    t_col = n_sched
    tableau = np.zeros((m + 1, n + 1))
    tableau[0, :n_sched] = 1.0
    tableau[0, n] = 1.0
    for r, k in enumerate(positive, start=1):
        tableau[r, :n_sched] = -phi[k] * per_class[:, k]
        tableau[r, t_col] = rho[k]
        tableau[r, n_sched + r] = 1.0
    tableau[m, t_col] = 1.0

    # the empty schedule is lexicographically first, hence at index 0
    empty_idx = schedules.index(Schedule.empty(spec.num_classes, spec.num_channels))
    basis = [empty_idx] + [n_sched + r for r in range(1, m)]
    t_star = _simplex_max(tableau, basis)

    pi = np.zeros(n_sched)
    for r, var in enumerate(basis):
        if var < n_sched:
            pi[var] = max(tableau[r, n], 0.0)
    total = pi.sum()
    if total > 0:
        pi /= total
    certificate = {schedules[i]: float(pi[i]) for i in range(n_sched) if pi[i] > 0}

    margin = t_star - 1.0
    if abs(margin) <= boundary_tol:
        status = "boundary"
    elif margin > 0:
        status = "interior"
    else:
        status = "exterior"
    return CapacityVerdict(status, margin, certificate)


def full_support_certificate(verdict: CapacityVerdict,
                             schedules: Sequence[Schedule]) -> dict[Schedule, float]:
    """Mix an interior certificate with the uniform distribution so every
    schedule carries positive mass, keeping feasibility.

    The mixing weight min(margin/2, 1e-3) is small enough that the served rate
    of each positive-load class stays above the load.
    """
    if verdict.status != "interior":
        raise ValueError("full-support smoothing applies to interior verdicts only")
    w = min(verdict.margin / 2.0, 1e-3)
    if not math.isfinite(w):
        w = 1e-3
    uniform = 1.0 / len(schedules)
    return {s: (1.0 - w) * verdict.certificate.get(s, 0.0) + w * uniform
            for s in schedules}


@dataclass
class LPartiteVerdict:
    interior: bool
    slack: float                      # J - sum of block maxima of rho/phi
    multiplier: float                 # largest load multiplier, +inf at zero load
    partition: tuple[tuple[int, ...], ...]


def lpartite_condition(rho: Sequence[float], spec: NetworkSpec,
                       params: CsmaParams) -> LPartiteVerdict:
    """Closed-form membership test for complete multipartite conflict graphs:
    the load is interior iff the per-block maxima of rho_k / phys_rate_k sum
    to less than the number of channels."""
    partition = detect_l_partite(spec)
    if partition is None:
        raise ValueError("conflict graph is not complete multipartite")
    rho = np.asarray(rho, dtype=float)
    phi = params.phi
    total = sum(max(rho[k] / phi[k] for k in block) for block in partition)
    J = spec.num_channels
    multiplier = math.inf if total == 0 else J / total
    return LPartiteVerdict(total < J, J - total, multiplier, partition)
