"""Exact stationary analysis of the packet-level schedule process.

For a fixed network state x, the randomly probing CSMA dynamics form a
reversible Markov process on the feasible schedules, so the stationary
distribution has an explicit product form. Three policies are covered:

``adhoc``
    Every link runs its own CSMA instance. The weight of a schedule is the
    product over flow-holding classes of
    x_k! / (x_k - y_k)! * alpha_k^y_k * prod_j beta_kj^y_kj.

``flow_aware``
    Infrastructure mode in which each access point runs one CSMA instance per
    downlink flow. The weight is the ad-hoc product above, taken over the
    schedule set with the one-downlink-transmission-per-access-point cap.

``standard_infra``
    Infrastructure mode in which each access point runs a single CSMA
    instance for all its downlink flows and picks the flow to serve with
    probability proportional to the per-class flow counts. Local balance
    (attempt rate nu_k * x_k / S_i * beta_kj against release rate phi_k, with
    S_i the total downlink flow count at the access point) then forces the
    ad-hoc product times (S_i - a_i)! per access point, where a_i is the
    number of active downlink transmissions (0 or 1). Equivalently, the
    per-flow weight is the ad-hoc one divided by S_i per active downlink
    slot: the access point's attempt budget is shared by the S_i flows.

All weights are kept in log space; factorials go through lgamma and
normalization through log-sum-exp, so flow counts in the tens of thousands
stay representable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .schedule import (DEFAULT_MAX_SCHEDULES, Schedule, enumerate_feasible,
                       state_flows)
from .topology import CsmaParams, NetworkSpec

POLICIES = ("adhoc", "standard_infra", "flow_aware")


def check_policy(spec: NetworkSpec, policy: str) -> str:
    """Resolve and validate a policy name against the network mode."""
    if policy == "auto":
        policy = "standard_infra" if spec.is_infrastructure else "adhoc"
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    if policy == "adhoc" and spec.is_infrastructure:
        raise ValueError("policy 'adhoc' requires an ad-hoc network spec")
    if policy != "adhoc" and not spec.is_infrastructure:
        raise ValueError(f"policy {policy!r} requires an infrastructure network spec")
    return policy


def check_standard_attempt_rates(spec: NetworkSpec, params: CsmaParams) -> None:
    """The shared-queue policy needs one attempt rate per access point."""
    for i, ap in enumerate(spec.access_points):
        rates = {params.attempt_rate[k] for k in ap.downlink}
        if len(rates) > 1:
            raise ValueError(
                f"access point {i}: downlink classes must share one attempt rate "
                f"under the standard infrastructure policy, got {sorted(rates)}")


@dataclass
class EquilibriumResult:
    """Stationary schedule distribution and the induced per-class throughput."""

    distribution: dict[Schedule, float]
    throughput: np.ndarray
    log_normalizer: float


class PolicyEvaluator:
    """Vectorized stationary-distribution calculator for one (spec, params,
    policy) triple.

    Enumeration and the schedule matrices are cached per activation-cap
    pattern min(x_k, J), the only way the feasible set depends on the state,
    so repeated evaluations along a simulation trajectory are cheap.
    """

    def __init__(self, spec: NetworkSpec, params: CsmaParams, policy: str,
                 max_schedules: int = DEFAULT_MAX_SCHEDULES):
        self.spec = spec
        self.params = params
        self.policy = check_policy(spec, policy)
        if self.policy == "standard_infra":
            check_standard_attempt_rates(spec, params)
        self.max_schedules = max_schedules
        self._log_alpha = np.log(params.alpha)
        beta = params.beta
        with np.errstate(divide="ignore"):
            self._log_beta = np.where(beta > 0, np.log(np.where(beta > 0, beta, 1.0)),
                                      -np.inf)
        self._bundles: dict[tuple[int, ...], dict] = {}
        K = spec.num_classes
        self._ap_members = [np.array(sorted(ap.downlink), dtype=np.int64)
                            for ap in spec.access_points]
        self._phi = params.phi
        self._K = K
        self._J = spec.num_channels

    def _bundle(self, caps: tuple[int, ...]) -> dict:
        b = self._bundles.get(caps)
        if b is not None:
            return b
        schedules = enumerate_feasible(self.spec, caps, max_schedules=self.max_schedules)
        per_class = np.array([s.per_class for s in schedules], dtype=np.int64)
        # state-independent part: y_k log alpha_k + sum_kj y_kj log beta_kj
        const = per_class @ self._log_alpha
        mats = np.array([s.active for s in schedules], dtype=np.int64)
        const = const + np.einsum("skj,kj->s", mats, np.where(np.isfinite(self._log_beta),
                                                              self._log_beta, 0.0))
        ap_active = (np.stack([per_class[:, m].sum(axis=1) for m in self._ap_members],
                              axis=1)
                     if self._ap_members else np.zeros((len(schedules), 0), dtype=np.int64))
        b = {"schedules": schedules, "per_class": per_class, "const": const,
             "ap_active": ap_active}
        self._bundles[caps] = b
        return b

    def _caps(self, flows: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(min(f, self._J) for f in flows)

    def _logw(self, flows: tuple[int, ...]) -> tuple[dict, np.ndarray]:
        x = np.asarray(flows, dtype=np.float64)
        b = self._bundle(self._caps(flows))
        per_class = b["per_class"]
        # falling factorial x_k!/(x_k - y_k)! per class, zero rows contribute 0
        logw = (gammaln(x + 1.0).sum()
                - gammaln(x[None, :] - per_class + 1.0).sum(axis=1)
                + b["const"])
        if self.policy == "standard_infra" and self._ap_members:
            totals = np.array([x[m].sum() for m in self._ap_members])
            logw = logw + gammaln(totals[None, :] - b["ap_active"] + 1.0).sum(axis=1)
        return b, logw

    def log_weights(self, state) -> tuple[list[Schedule], np.ndarray]:
        """Unnormalized log stationary weights over the feasible set at x."""
        b, logw = self._logw(state_flows(state))
        return b["schedules"], logw

    def equilibrium(self, state) -> EquilibriumResult:
        b, logw = self._logw(state_flows(state))
        log_z = float(logsumexp(logw))
        probs = np.exp(logw - log_z)
        throughput = self._phi * (probs @ b["per_class"])
        return EquilibriumResult(dict(zip(b["schedules"], probs)), throughput, log_z)

    def throughput(self, state) -> np.ndarray:
        """Per-class throughput only; skips building the distribution map."""
        b, logw = self._logw(state_flows(state))
        w = np.exp(logw - logw.max())
        return self._phi * ((w / w.sum()) @ b["per_class"])


def stationary_log_weights(state, params: CsmaParams, spec: NetworkSpec,
                           policy: str, *,
                           max_schedules: int = DEFAULT_MAX_SCHEDULES
                           ) -> dict[Schedule, float]:
    """Map each feasible schedule at x to its log stationary weight."""
    ev = PolicyEvaluator(spec, params, policy, max_schedules)
    schedules, logw = ev.log_weights(state)
    return dict(zip(schedules, logw.tolist()))


def stationary_measure_adhoc(state, params: CsmaParams, spec: NetworkSpec,
                             **kwargs) -> dict[Schedule, float]:
    """Per-flow product-form measure (ad-hoc networks, and infrastructure
    networks under the per-flow policy)."""
    policy = "flow_aware" if spec.is_infrastructure else "adhoc"
    return stationary_log_weights(state, params, spec, policy, **kwargs)


def stationary_measure_standard_infra(state, params: CsmaParams, spec: NetworkSpec,
                                      **kwargs) -> dict[Schedule, float]:
    """Shared-queue product-form measure for infrastructure networks."""
    return stationary_log_weights(state, params, spec, "standard_infra", **kwargs)


def equilibrium(state, params: CsmaParams, spec: NetworkSpec, policy: str, *,
                max_schedules: int = DEFAULT_MAX_SCHEDULES) -> EquilibriumResult:
    """Normalize the policy's measure at state x and compute throughputs.

    throughput[k] = phys_rate[k] * E[number of active class-k links].
    """
    return PolicyEvaluator(spec, params, policy, max_schedules).equilibrium(state)


def attempt_rate(spec: NetworkSpec, params: CsmaParams, policy: str,
                 flows: Sequence[int], sched: Schedule, k: int, j: int) -> float:
    """Transition rate for activating slot (k, j) from the given schedule.

    Feasibility of the target schedule is the caller's concern; this is the
    raw attempt rate of the policy's dynamics.
    """
    x_k = flows[k]
    y_k = sched.per_class[k]
    beta = params.probe_prob[k][j]
    i = spec.downlink_ap(k)
    if policy == "standard_infra" and i is not None:
        total = sum(flows[m] for m in spec.access_points[i].downlink)
        if total == 0:
            return 0.0
        return params.attempt_rate[k] * (x_k / total) * beta
    return (x_k - y_k) * params.attempt_rate[k] * beta


def detailed_balance_check(state, params: CsmaParams, spec: NetworkSpec,
                           policy: str, *,
                           log_weights: Optional[dict[Schedule, float]] = None,
                           max_schedules: int = DEFAULT_MAX_SCHEDULES) -> float:
    """Largest relative local-balance residual over all activation transitions.

    For every feasible pair (y, y + e_kj) the stationary measure must satisfy
    w(y) * attempt_rate = w(y + e_kj) * phys_rate. A correctly constructed
    measure gives residuals at floating-point noise level; ``log_weights`` may
    override the measure (e.g. with a corrupted one) to gauge sensitivity.
    """
    policy = check_policy(spec, policy)
    if log_weights is None:
        log_weights = stationary_log_weights(state, params, spec, policy,
                                             max_schedules=max_schedules)
    flows = state_flows(state)
    log_z = logsumexp(np.fromiter(log_weights.values(), dtype=float))
    prob = {s: np.exp(lw - log_z) for s, lw in log_weights.items()}
    worst = 0.0
    for sched in log_weights:
        for k in range(spec.num_classes):
            for j in range(spec.num_channels):
                if sched.active[k][j]:
                    continue
                target = sched.with_slot(k, j)
                if target not in log_weights:
                    continue
                up = prob[sched] * attempt_rate(spec, params, policy, flows, sched, k, j)
                down = prob[target] * params.phys_rate[k]
                scale = max(up, down)
                if scale > 0:
                    worst = max(worst, abs(up - down) / scale)
    return worst


@dataclass
class Lemma1Report:
    """Exact evaluation of the mean-log-weight concentration inequality."""

    holds: bool
    mean_log_u: float
    max_log_u: float
    epsilon: float
    state: tuple[int, ...]


def lemma1_check(state, params: CsmaParams, spec: NetworkSpec, epsilon: float,
                 policy: str = "auto", *,
                 max_schedules: int = DEFAULT_MAX_SCHEDULES) -> Lemma1Report:
    """Check that the stationary mean of log u(x, y) is at least
    (1 - epsilon) log u(x) at this state.

    The inequality is guaranteed to hold at all sufficiently large states;
    sweeping it over growing states locates the finite exception set.
    """
    from .schedule import log_weight_u

    policy = check_policy(spec, policy)
    if policy == "standard_infra":
        raise ValueError("the concentration check applies to the per-flow policies")
    ev = PolicyEvaluator(spec, params, policy, max_schedules)
    schedules, logw = ev.log_weights(state)
    probs = np.exp(logw - logsumexp(logw))
    log_u = np.array([log_weight_u(state, s, params) for s in schedules])
    mean = float(probs @ log_u)
    best = float(log_u.max())
    holds = mean >= (1.0 - epsilon) * best - 1e-12
    return Lemma1Report(holds, mean, best, epsilon, state_flows(state))
