"""Protocol state machine as a finite Markov chain.

One state per (phase, step, repetition); one state transition per time slot,
including the broadcast-step self-loop taken when the destination and every
relay miss the broadcast.  The stationary distribution weights the per-step
outage probabilities into the overall outage, from which the expected slot
cost per delivered reception and the resource utilization efficiency follow.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .analytic import StepOutageSet
from .topology import ConfigError

ROW_SUM_TOL = 1e-12

# Protocol cycle: shared broadcast by source 1, personalized payload of
# source 1, personalized payload of source 2, then new information.
PHASE_ORDER = ("shared", "personal1", "personal2")
PHASE_SOURCE = {"shared": 1, "personal1": 1, "personal2": 2}


class ConvergenceError(RuntimeError):
    """Stationary-distribution iteration failed to converge."""


class ProtocolState(NamedTuple):
    phase: str  # one of PHASE_ORDER
    step: int   # 1 = source broadcast, 2 = relay forwarding
    rep: int    # repetition index within the phase, 1-based

    @property
    def label(self) -> str:
        kind = "bcast" if self.step == 1 else "relay"
        return f"{self.phase}:{kind}:{self.rep}"


def phase_plan(beta_s: int, beta_p: int) -> list[tuple[str, int]]:
    """Nonempty phases with their repetition counts, in protocol order."""
    plan = [("shared", beta_s), ("personal1", beta_p), ("personal2", beta_p)]
    return [(name, reps) for name, reps in plan if reps > 0]


def protocol_states(beta_s: int, beta_p: int) -> list[ProtocolState]:
    """States ordered phase-major with (bcast, relay) interleaved per repetition."""
    states = []
    for phase, reps in phase_plan(beta_s, beta_p):
        for j in range(1, reps + 1):
            states.append(ProtocolState(phase, 1, j))
            states.append(ProtocolState(phase, 2, j))
    return states


@dataclass(frozen=True)
class TransitionMatrix:
    states: tuple[ProtocolState, ...]
    matrix: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.matrix, dtype=float)
        if t.shape != (len(self.states), len(self.states)):
            raise ConfigError("matrix shape must match the state count")
        if (t < 0).any() or (t > 1).any():
            raise ConfigError("transition probabilities must lie in [0, 1]")
        rows = t.sum(axis=1)
        if not np.allclose(rows, 1.0, rtol=0.0, atol=ROW_SUM_TOL):
            raise ConfigError(f"rows must sum to 1 within {ROW_SUM_TOL:g}")

    @property
    def size(self) -> int:
        return len(self.states)

    def sparse_triples(self) -> list[tuple[int, int, float]]:
        rows, cols = np.nonzero(self.matrix)
        return [(int(i), int(j), float(self.matrix[i, j])) for i, j in zip(rows, cols)]


def _check_prob(name: str, value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must be a probability, got {value}")
    return value


def build_chain(
    outages: StepOutageSet,
    beta_s: int,
    beta_p: int,
    literal_personal1_wrap: bool = False,
) -> TransitionMatrix:
    """Transition matrix of the slotted protocol.

    From a broadcast state: self-loop with probability (broadcast outage) *
    (all-relays-miss), move to the relay step with (broadcast outage) *
    (some relay decoded), and advance with (1 - broadcast outage).  From a
    relay state: fall back to the same repetition's broadcast on failure,
    advance on success.  Advancing out of a phase's last repetition enters
    the next phase's first broadcast state, wrapping to the start of the
    cycle after the second personalized phase.

    ``literal_personal1_wrap`` redirects the advance out of the first
    personalized phase's last repetition back to that phase's own first
    state, reproducing a transition-table variant in which the second
    source's phase is unreachable.
    """
    if beta_s < 0 or beta_p < 0:
        raise ConfigError("repetition counts must be nonnegative")
    if beta_s + beta_p == 0:
        raise ConfigError("at least one phase must be nonempty")
    plan = phase_plan(beta_s, beta_p)
    states = protocol_states(beta_s, beta_p)
    index = {s: i for i, s in enumerate(states)}
    n = len(states)
    t = np.zeros((n, n))

    empty_prob = {
        "shared": _check_prob("empty_set_prob_s1", outages.empty_set_prob_s1),
        "personal1": _check_prob("empty_set_prob_s1", outages.empty_set_prob_s1),
        "personal2": _check_prob("empty_set_prob_s2", outages.empty_set_prob_s2),
    }

    first_state = {phase: ProtocolState(phase, 1, 1) for phase, _ in plan}
    next_phase = {}
    for k, (phase, _) in enumerate(plan):
        successor = plan[(k + 1) % len(plan)][0]
        next_phase[phase] = successor

    for phase, reps in plan:
        op_b = _check_prob(f"{phase} broadcast outage", outages.by_step(phase, 1))
        op_r = _check_prob(f"{phase} relay outage", outages.by_step(phase, 2))
        empty = empty_prob[phase]
        for j in range(1, reps + 1):
            bcast = index[ProtocolState(phase, 1, j)]
            relay = index[ProtocolState(phase, 2, j)]
            if j < reps:
                advance = index[ProtocolState(phase, 1, j + 1)]
            elif literal_personal1_wrap and phase == "personal1":
                advance = index[first_state["personal1"]]
            else:
                advance = index[first_state[next_phase[phase]]]
            t[bcast, bcast] += op_b * empty
            t[bcast, relay] += op_b * (1.0 - empty)
            t[bcast, advance] += 1.0 - op_b
            t[relay, bcast] += op_r
            t[relay, advance] += 1.0 - op_r
    return TransitionMatrix(tuple(states), t)


def stationary_distribution(
    chain: TransitionMatrix,
    method: str = "power",
    tol: float = 1e-12,
    max_iter: int = 1_000_000,
    initial_state: int = 0,
) -> np.ndarray:
    """Stationary row vector with pi @ T == pi and sum(pi) == 1.

    ``power`` iterates the half-lazy map p <- p (T + I)/2 from a point mass;
    the averaging leaves the fixed point unchanged and converges even for
    the periodic cycle produced by failure-free configurations.  ``direct``
    solves the linear system as an independent cross-check.
    """
    t = chain.matrix
    n = chain.size
    if method == "direct":
        aug = np.vstack([t.T - np.eye(n), np.ones((1, n))])
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.0
        pi, *_ = np.linalg.lstsq(aug, rhs, rcond=None)
        pi = np.maximum(pi, 0.0)
        return pi / pi.sum()
    if method != "power":
        raise ConfigError(f"unknown method {method!r}")
    p = np.zeros(n)
    p[initial_state] = 1.0
    delta = math.inf
    for _ in range(max_iter):
        nxt = 0.5 * (p + p @ t)
        delta = float(np.max(np.abs(nxt - p)))
        p = nxt
        if delta < tol:
            return p / p.sum()
    raise ConvergenceError(
        f"power iteration did not reach {tol:g} in {max_iter} steps "
        f"(last change {delta:.3e})"
    )


def overall_outage(
    pi: np.ndarray, outages: StepOutageSet, states: list[ProtocolState]
) -> float:
    """Occupancy-weighted average of the per-step outage probabilities."""
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (len(states),):
        raise ConfigError("pi must align with the state list")
    return float(
        sum(p * outages.by_step(s.phase, s.step) for p, s in zip(pi, states))
    )


def slot_cost(op: float) -> float:
    """Expected slots per delivered reception, 1 / (1 - outage)."""
    if not 0.0 <= op < 1.0:
        raise ConfigError(f"slot cost diverges unless outage is in [0, 1), got {op}")
    return 1.0 / (1.0 - op)


def resource_efficiency(
    t_c: float, beta_s: int, beta_p: int, bandwidth_units: float, power_units: float
) -> float:
    """Delivered payload pairs per slot, bandwidth unit and power unit."""
    denom = t_c * (beta_s + 2 * beta_p) * bandwidth_units * power_units
    if not (t_c > 0 and denom > 0):
        raise ConfigError("slot cost, slot counts and resource units must be positive")
    return 2.0 / denom


@dataclass(frozen=True)
class ChainSolution:
    """Chain, stationary occupancies and the derived scalar metrics."""

    chain: TransitionMatrix
    stationary: np.ndarray
    overall_op: float
    slot_cost: float
    efficiency: float


def solve_chain(
    outages: StepOutageSet,
    beta_s: int,
    beta_p: int,
    bandwidth_units: float = 1.0,
    power_units: float = 1.0,
    literal_personal1_wrap: bool = False,
) -> ChainSolution:
    chain = build_chain(outages, beta_s, beta_p, literal_personal1_wrap)
    pi = stationary_distribution(chain)
    op = overall_outage(pi, outages, list(chain.states))
    tc = slot_cost(op)
    phi = resource_efficiency(tc, beta_s, beta_p, bandwidth_units, power_units)
    return ChainSolution(chain, pi, op, tc, phi)


def chain_to_json(solution: ChainSolution, outages: StepOutageSet | None = None) -> str:
    """State list, sparse transition triples and occupancies as a JSON document."""
    doc = {
        "states": [s.label for s in solution.chain.states],
        "transitions": solution.chain.sparse_triples(),
        "stationary": [float(x) for x in solution.stationary],
        "overall_outage": solution.overall_op,
        "slot_cost": solution.slot_cost,
        "efficiency": solution.efficiency,
    }
    if outages is not None:
        doc["step_outages"] = {
            "shared:bcast": outages.shared_bcast,
            "shared:relay": outages.shared_relay,
            "personal1:bcast": outages.personal1_bcast,
            "personal1:relay": outages.personal1_relay,
            "personal2:bcast": outages.personal2_bcast,
            "personal2:relay": outages.personal2_relay,
        }
    return json.dumps(doc, indent=2, sort_keys=True)
