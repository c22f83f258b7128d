"""Feasible schedules and schedule weights.

A schedule is a K x J binary activation matrix: entry (k, j) says that a
class-k link transmits on channel j. Feasibility requires channel
eligibility, per-channel conflict-freeness, at most x_k active links per
class (when a network state x is given), and in infrastructure mode at most
one active downlink transmission per access point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .topology import CsmaParams, NetworkSpec

DEFAULT_MAX_SCHEDULES = 10_000_000


class ScheduleSpaceError(RuntimeError):
    """The feasible-schedule set exceeds the exact-enumeration guard."""


@dataclass(frozen=True, order=True)
class Schedule:
    """Binary K x J activation matrix, stored as a tuple of rows.

    Tuple ordering of ``active`` is exactly the row-major lexicographic order
    of the flattened matrix, which the package uses everywhere ties must be
    broken deterministically.
    """

    active: tuple[tuple[int, ...], ...]

    @staticmethod
    def empty(num_classes: int, num_channels: int) -> "Schedule":
        return Schedule(tuple((0,) * num_channels for _ in range(num_classes)))

    @staticmethod
    def from_slots(num_classes: int, num_channels: int,
                   slots: Iterable[tuple[int, int]]) -> "Schedule":
        rows = [[0] * num_channels for _ in range(num_classes)]
        for k, j in slots:
            rows[k][j] = 1
        return Schedule(tuple(tuple(r) for r in rows))

    @property
    def num_classes(self) -> int:
        return len(self.active)

    @property
    def num_channels(self) -> int:
        return len(self.active[0]) if self.active else 0

    @property
    def per_class(self) -> tuple[int, ...]:
        """Number of active links of each class (row sums)."""
        return tuple(sum(row) for row in self.active)

    @property
    def total(self) -> int:
        return sum(self.per_class)

    @property
    def slots(self) -> tuple[tuple[int, int], ...]:
        return tuple((k, j) for k, row in enumerate(self.active)
                     for j, v in enumerate(row) if v)

    def with_slot(self, k: int, j: int) -> "Schedule":
        rows = [list(r) for r in self.active]
        rows[k][j] += 1
        return Schedule(tuple(tuple(r) for r in rows))

    def matrix(self) -> np.ndarray:
        return np.asarray(self.active, dtype=np.int64)

    def as_text(self) -> str:
        """Row-major 0/1 string, one character per matrix entry."""
        return "".join(str(v) for row in self.active for v in row)

    @staticmethod
    def from_text(text: str, num_classes: int, num_channels: int) -> "Schedule":
        if len(text) != num_classes * num_channels:
            raise ValueError(f"expected {num_classes * num_channels} characters, "
                             f"got {len(text)}")
        it = iter(text)
        return Schedule(tuple(tuple(int(next(it)) for _ in range(num_channels))
                              for _ in range(num_classes)))


@dataclass(frozen=True)
class NetworkState:
    """Number of ongoing flows of each class."""

    flows: tuple[int, ...]

    @staticmethod
    def of(values: Iterable[int]) -> "NetworkState":
        return NetworkState(tuple(int(v) for v in values))

    @property
    def total(self) -> int:
        return sum(self.flows)

    def __getitem__(self, k: int) -> int:
        return self.flows[k]


StateLike = "NetworkState | Sequence[int] | None"


def state_flows(state) -> tuple[int, ...]:
    if isinstance(state, NetworkState):
        return state.flows
    return tuple(int(v) for v in state)


def _independent_subsets(members: list[int], graph) -> list[tuple[int, ...]]:
    """All conflict-free subsets of ``members``, including the empty one."""
    out: list[tuple[int, ...]] = []

    def extend(prefix: list[int], start: int) -> None:
        out.append(tuple(prefix))
        for idx in range(start, len(members)):
            k = members[idx]
            if all(not graph.conflicts(k, m) for m in prefix):
                prefix.append(k)
                extend(prefix, idx + 1)
                prefix.pop()

    extend([], 0)
    return out


def enumerate_feasible(spec: NetworkSpec, state=None, *,
                       max_schedules: int = DEFAULT_MAX_SCHEDULES) -> list[Schedule]:
    """Enumerate the feasible schedules, sorted lexicographically.

    With a state, returns the schedules allowed at that state (per-class
    activation capped by the flow count). Without a state, returns the union
    over all states, which equals the state-bound set whenever every class has
    at least J flows. The empty schedule is always present.

    Raises ScheduleSpaceError once more than ``max_schedules`` schedules have
    been produced; exact methods are not meant for larger instances.
    """
    K, J = spec.num_classes, spec.num_channels
    if state is None:
        caps = [J] * K
    else:
        flows = state_flows(state)
        if len(flows) != K:
            raise ValueError(f"state has {len(flows)} entries, expected {K}")
        caps = [min(int(f), J) for f in flows]

    per_channel = [
        _independent_subsets(sorted(g.eligible), g) for g in spec.channel_graphs
    ]
    downlink_ap = [spec.downlink_ap(k) for k in range(K)]
    n_aps = len(spec.access_points)

    out: list[Schedule] = []
    used = [0] * K
    ap_used = [0] * n_aps
    chosen: list[tuple[int, ...]] = []

    def recurse(j: int) -> None:
        if j == J:
            out.append(Schedule.from_slots(K, J, [(k, jj) for jj, s in enumerate(chosen)
                                                  for k in s]))
            if len(out) > max_schedules:
                raise ScheduleSpaceError(
                    f"more than {max_schedules} feasible schedules; instance too "
                    f"large for exact enumeration")
            return
        for subset in per_channel[j]:
            taken: list[int] = []
            ok = True
            for k in subset:
                i = downlink_ap[k]
                if used[k] + 1 > caps[k] or (i is not None and ap_used[i] >= 1):
                    ok = False
                    break
                used[k] += 1
                if i is not None:
                    ap_used[i] += 1
                taken.append(k)
            if ok:
                chosen.append(subset)
                recurse(j + 1)
                chosen.pop()
            for k in taken:
                used[k] -= 1
                i = downlink_ap[k]
                if i is not None:
                    ap_used[i] -= 1

    recurse(0)
    out.sort()
    return out


def log_weight_u(state, sched: Schedule, params: CsmaParams) -> float:
    """Log of the uniform schedule weight: sum over flow-holding classes of
    y_k * log(x_k * alpha_k).

    Defined for any schedule, feasible at the state or not; classes without
    flows contribute nothing. The empty schedule has weight one (log zero).
    """
    flows = state_flows(state)
    alpha = params.alpha
    total = 0.0
    for k, y_k in enumerate(sched.per_class):
        if y_k and flows[k] > 0:
            total += y_k * math.log(flows[k] * alpha[k])
    return total


def max_weight(state, params: CsmaParams, spec: NetworkSpec,
               over: str = "restricted", *,
               schedules: Optional[Sequence[Schedule]] = None,
               max_schedules: int = DEFAULT_MAX_SCHEDULES) -> tuple[float, Schedule]:
    """Maximum uniform weight and its arg-max schedule.

    ``over="restricted"`` maximizes over the schedules feasible at the state;
    ``over="unrestricted"`` maximizes over the union of feasible sets. Ties
    break toward the lexicographically greatest activation matrix, so equal-
    weight channels resolve to the lowest channel index.
    """
    if over not in ("restricted", "unrestricted"):
        raise ValueError(f"over must be 'restricted' or 'unrestricted', got {over!r}")
    if schedules is None:
        schedules = enumerate_feasible(spec, state if over == "restricted" else None,
                                       max_schedules=max_schedules)
    best: tuple[float, Schedule] | None = None
    for sched in schedules:
        lw = log_weight_u(state, sched, params)
        if best is None or lw > best[0] or (lw == best[0] and sched.active > best[1].active):
            best = (lw, sched)
    assert best is not None  # the empty schedule is always present
    return best


def lemma_gap_bound(params: CsmaParams, num_channels: int) -> float:
    """Constructive bound on log(max over all schedules) - log(max over the
    state-feasible schedules) of the uniform weight.

    The two maxima differ only through classes holding fewer than J flows.
    For such a class the weight factor (x_k * alpha_k)^(y_k) ranges between
    min(1, alpha_k)^J and max(1, (J-1) * alpha_k)^J, which yields a state-free
    bound on the ratio. With one channel the bound is zero: both maxima agree.
    """
    J = num_channels
    total = 0.0
    for a in params.alpha:
        hi = math.log(max(1.0, (J - 1) * a)) if J >= 2 else 0.0
        lo = math.log(min(1.0, a)) if J >= 2 else 0.0
        total += J * (hi - lo)
    return total


def _check_equal_alpha(params: CsmaParams) -> float:
    alpha = params.alpha
    if np.max(alpha) - np.min(alpha) > 1e-12 * max(np.max(alpha), 1.0):
        raise ValueError("the infinite-attempt-rate limit is only defined here for "
                         "equal attempt/transmission ratios across classes")
    return float(alpha[0])


def alpha_limit_distribution(spec: NetworkSpec, state, params: CsmaParams,
                             policy: str = "auto", *,
                             max_schedules: int = DEFAULT_MAX_SCHEDULES
                             ) -> dict[Schedule, Fraction]:
    """Limiting schedule distribution as the attempt rates grow without bound
    (at fixed ratios, which must be equal across classes).

    Every surviving schedule activates the maximum feasible number of links;
    within that set the mass is proportional to the weight factors that do not
    involve the attempt rate (flow-count falling factorials, channel-probing
    probabilities and, under the shared-queue infrastructure policy, the
    per-access-point flow-selection odds). Computed in exact rational
    arithmetic so dyadic inputs give exact probabilities.
    """
    from .equilibrium import check_policy  # local import to avoid a cycle

    policy = check_policy(spec, policy)
    _check_equal_alpha(params)
    flows = state_flows(state)
    schedules = enumerate_feasible(spec, flows, max_schedules=max_schedules)
    top = max(s.total for s in schedules)
    support = [s for s in schedules if s.total == top]

    ap_totals = [sum(flows[k] for k in ap.downlink) for ap in spec.access_points]
    weights: list[Fraction] = []
    for sched in support:
        w = Fraction(1)
        for k, j in sched.slots:
            w *= Fraction(params.probe_prob[k][j])
        for k, y_k in enumerate(sched.per_class):
            if y_k:
                # falling factorial x_k (x_k - 1) ... (x_k - y_k + 1)
                f = 1
                for r in range(y_k):
                    f *= flows[k] - r
                w *= f
        if policy == "standard_infra":
            for i, ap in enumerate(spec.access_points):
                active = sum(sched.per_class[k] for k in ap.downlink)
                if active:
                    w /= Fraction(ap_totals[i]) ** active
        weights.append(w)

    z = sum(weights)
    return {s: w / z for s, w in zip(support, weights)}


def activity_marginals(dist: dict[Schedule, Fraction], num_classes: int
                       ) -> tuple[Fraction, ...]:
    """Expected number of active links per class under a schedule distribution."""
    out = [Fraction(0)] * num_classes
    for sched, p in dist.items():
        for k, y_k in enumerate(sched.per_class):
            if y_k:
                out[k] += p * y_k
    return tuple(out)
