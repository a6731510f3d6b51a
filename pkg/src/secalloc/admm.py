"""Distributed consensus solver for the weighted planning problem.

Each target and each source is an agent that only ever sees its own
parameters plus, per incident edge, the current consensus amount and a
disagreement price (the dual). Per round, every agent solves a small
penalized local subproblem and mails its per-edge proposal to the bus;
the bus averages target and source proposals into a new consensus value,
reprices disagreement, and broadcasts the pair back. At convergence the
two sides agree and the consensus plan solves the centralized problem.

Rounds are synchronous (Jacobi style): all agents solve against the
round-k state, then one barrier applies the consensus and dual updates.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Mapping, Tuple, Union

import numpy as np

from .centralized import (
    SolverConfig,
    _check_op_b_feasible,
    _pgd,
    project_box_sum,
)
from .errors import ConvergenceError, MissingMessageError
from .model import (
    AllocationPlan,
    BehavioralModel,
    SolveReport,
    SourceSpec,
    TargetSpec,
    TraceRecord,
    TransportNetwork,
    marginal_perceived_cost,
    perceived_loss,
    prelec_weight,
    true_loss,
)

__all__ = [
    "AdmmConfig",
    "EdgeState",
    "TargetAgent",
    "SourceAgent",
    "target_subproblem",
    "source_subproblem",
    "consensus_update",
    "dual_update",
    "message_bus_round",
    "run_admm",
]

Edge = Tuple[str, str]

_INNER_CONFIG = SolverConfig(
    step_size=1.0,
    max_iterations=100000,
    gradient_tolerance=1e-9,
    objective_tolerance=1e-18,
)


@dataclass(frozen=True)
class AdmmConfig:
    eta: float = 1.0
    max_iterations: int = 5000
    primal_tolerance: float = 1e-6
    dual_tolerance: float = 1e-6

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.primal_tolerance <= 0 or self.dual_tolerance <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class EdgeState:
    """Per-edge negotiation state held by the bus."""

    consensus: float = 0.0
    dual: float = 0.0
    last_target_proposal: float = 0.0
    last_source_proposal: float = 0.0


def consensus_update(edge: EdgeState) -> EdgeState:
    """New consensus: arithmetic mean of the two proposals."""
    return replace(
        edge,
        consensus=0.5 * (edge.last_target_proposal + edge.last_source_proposal),
    )


def dual_update(edge: EdgeState, eta: float) -> EdgeState:
    """Reprice disagreement: dual moves by (eta/2)(target - source)."""
    return replace(
        edge,
        dual=edge.dual
        + 0.5 * eta * (edge.last_target_proposal - edge.last_source_proposal),
    )


class TargetAgent:
    """Target-side agent; sees only its own spec and the weighting model."""

    def __init__(
        self,
        spec: TargetSpec,
        behavior: BehavioralModel,
        edges: Tuple[Edge, ...],
    ):
        self.spec = spec
        self.behavior = behavior
        self.edges = edges
        self.mailbox: Dict[Edge, Tuple[float, float]] = {
            e: (0.0, 0.0) for e in edges
        }
        self.local_plan: Dict[Edge, float] = {e: 0.0 for e in edges}

    def receive(self, edge: Edge, consensus: float, dual: float) -> None:
        self.mailbox[edge] = (consensus, dual)

    def solve(self, eta: float) -> None:
        duals = {e: self.mailbox[e][1] for e in self.edges}
        consensus = {e: self.mailbox[e][0] for e in self.edges}
        self.local_plan = target_subproblem(self, duals, consensus, eta)

    def propose(self) -> Mapping[Edge, float]:
        return dict(self.local_plan)


class SourceAgent:
    """Source-side agent; sees only its own spec."""

    def __init__(self, spec: SourceSpec, edges: Tuple[Edge, ...]):
        self.spec = spec
        self.edges = edges
        self.mailbox: Dict[Edge, Tuple[float, float]] = {
            e: (0.0, 0.0) for e in edges
        }
        self.local_plan: Dict[Edge, float] = {e: 0.0 for e in edges}

    def receive(self, edge: Edge, consensus: float, dual: float) -> None:
        self.mailbox[edge] = (consensus, dual)

    def solve(self, eta: float) -> None:
        duals = {e: self.mailbox[e][1] for e in self.edges}
        consensus = {e: self.mailbox[e][0] for e in self.edges}
        self.local_plan = source_subproblem(self, duals, consensus, eta)

    def propose(self) -> Mapping[Edge, float]:
        return dict(self.local_plan)


def target_subproblem(
    agent: TargetAgent,
    duals: Mapping[Edge, float],
    consensus: Mapping[Edge, float],
    eta: float,
) -> Dict[Edge, float]:
    """Minimize  U w(p(sum v)) + sum alpha v + (eta/2) sum (v - pi)^2  over
    the target's own bound set. Strictly convex; solved by projected
    gradient, warm-started from the agent's previous proposal."""
    spec = agent.spec
    behavior = agent.behavior
    edges = agent.edges
    alpha = np.array([duals[e] for e in edges])
    pi = np.array([consensus[e] for e in edges])

    def objective(v: np.ndarray) -> float:
        total = float(v.sum())
        cost = spec.loss_value * prelec_weight(
            spec.prob_model.probability(total), behavior.gamma
        )
        return cost + float(alpha @ v) + 0.5 * eta * float(((v - pi) ** 2).sum())

    def gradient(v: np.ndarray) -> np.ndarray:
        m = marginal_perceived_cost(spec, behavior, float(v.sum()))
        return m + alpha + eta * (v - pi)

    def project(v: np.ndarray) -> np.ndarray:
        return project_box_sum(v, spec.demand_lower, spec.demand_upper)

    warm = np.array([agent.local_plan[e] for e in edges])
    v, _, trace, converged = _pgd(
        warm, objective, gradient, project, _INNER_CONFIG, record_trace=False
    )
    if not converged:
        raise ConvergenceError(
            f"target subproblem at {spec.id} did not converge", trace=trace
        )
    return {e: float(val) for e, val in zip(edges, v)}


def source_subproblem(
    agent: SourceAgent,
    duals: Mapping[Edge, float],
    consensus: Mapping[Edge, float],
    eta: float,
) -> Dict[Edge, float]:
    """Minimize  -sum (tau c + alpha) v + (eta/2) sum (pi - v)^2  over the
    source's own bound set. With linear utilities this is exactly the
    projection of  pi + (tau c + alpha)/eta  onto that set."""
    spec = agent.spec
    edges = agent.edges
    shifted = np.array(
        [
            consensus[e]
            + (spec.weight_tau * spec.utility_slope(e[0]) + duals[e]) / eta
            for e in edges
        ]
    )
    v = project_box_sum(shifted, spec.supply_lower, spec.supply_upper)
    return {e: float(val) for e, val in zip(edges, v)}


def message_bus_round(
    agents: Iterable[Union[TargetAgent, SourceAgent]],
    edge_states: Mapping[Edge, EdgeState],
    eta: float,
) -> Dict[Edge, EdgeState]:
    """Deliver one round of proposals, update every edge, broadcast back.

    Each edge must receive exactly one target-side and one source-side
    proposal; anything missing raises, nothing is silently skipped. The
    result does not depend on the order in which agents are listed.
    """
    target_props: Dict[Edge, float] = {}
    source_props: Dict[Edge, float] = {}
    agent_list = list(agents)
    for agent in agent_list:
        proposals = agent.propose()
        box = target_props if isinstance(agent, TargetAgent) else source_props
        for e in agent.edges:
            if e not in proposals:
                raise MissingMessageError(
                    f"agent {agent.spec.id} did not propose for edge {e}"
                )
            if e not in edge_states:
                raise MissingMessageError(f"proposal for unknown edge {e}")
            if e in box:
                raise MissingMessageError(f"duplicate proposal for edge {e}")
            box[e] = proposals[e]
    updated: Dict[Edge, EdgeState] = {}
    for e, state in edge_states.items():
        if e not in target_props or e not in source_props:
            raise MissingMessageError(f"edge {e} missing a proposal this round")
        state = replace(
            state,
            last_target_proposal=target_props[e],
            last_source_proposal=source_props[e],
        )
        state = dual_update(consensus_update(state), eta)
        updated[e] = state
    for agent in agent_list:
        for e in agent.edges:
            agent.receive(e, updated[e].consensus, updated[e].dual)
    return updated


def _initial_consensus(network: TransportNetwork) -> Dict[Edge, float]:
    # zero unless some lower bound forces a head start (uniform split)
    values: Dict[Edge, float] = {}
    for e in network.edges:
        t = network.target_by_id(e[0])
        s = network.source_by_id(e[1])
        seed_t = t.demand_lower / len(network.edges_of_target(t.id))
        seed_s = s.supply_lower / len(network.edges_of_source(s.id))
        values[e] = max(seed_t, seed_s)
    return values


def run_admm(
    network: TransportNetwork,
    behavior: BehavioralModel,
    config: AdmmConfig = AdmmConfig(),
) -> SolveReport:
    """Run the four-step consensus iteration until both sides agree.

    Terminates when the worst per-edge disagreement |pi^t - pi^s| falls
    below ``primal_tolerance`` and the consensus plan has stopped moving
    by more than ``dual_tolerance``.
    """
    _check_op_b_feasible(network)
    targets = [
        TargetAgent(t, behavior, network.edges_of_target(t.id))
        for t in network.targets
    ]
    sources = [
        SourceAgent(s, network.edges_of_source(s.id)) for s in network.sources
    ]
    agents: List[Union[TargetAgent, SourceAgent]] = [*targets, *sources]

    seed = _initial_consensus(network)
    edge_states = {e: EdgeState(consensus=seed[e]) for e in network.edges}
    for agent in agents:
        for e in agent.edges:
            agent.receive(e, edge_states[e].consensus, edge_states[e].dual)

    tau_c = {
        e: network.source_by_id(e[1]).weight_tau
        * network.source_by_id(e[1]).utility_slope(e[0])
        for e in network.edges
    }

    trace: List[TraceRecord] = []
    for iteration in range(1, config.max_iterations + 1):
        for agent in agents:
            agent.solve(config.eta)
        previous = {e: s.consensus for e, s in edge_states.items()}
        edge_states = message_bus_round(agents, edge_states, config.eta)

        primal = max(
            abs(s.last_target_proposal - s.last_source_proposal)
            for s in edge_states.values()
        )
        drift = max(
            abs(edge_states[e].consensus - previous[e]) for e in edge_states
        )
        plan = AllocationPlan({e: edge_states[e].consensus for e in network.edges})
        perceived = perceived_loss(network, plan, behavior)
        utility = sum(tau_c[e] * edge_states[e].consensus for e in network.edges)
        trace.append(
            TraceRecord(iteration, primal, perceived - utility, perceived)
        )
        if primal <= config.primal_tolerance and drift <= config.dual_tolerance:
            return SolveReport(
                plan=plan,
                true_loss=true_loss(network, plan),
                perceived_loss=perceived,
                source_utility=utility,
                iterations=iteration,
                residual_trace=tuple(trace),
                converged=True,
            )
    raise ConvergenceError(
        f"consensus not reached in {config.max_iterations} iterations",
        trace=trace,
    )
