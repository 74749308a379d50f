"""Decision rules: autarky likelihood maximization, coordination, odd/even split."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from ratebound.ldp_numerics import PairKernel
from ratebound.network import Imitate, PropagationSchedule
from ratebound.signal_models import SignalModel


def most_popular(actions: Iterable[int]) -> int:
    """Plurality action; ties go to the lowest state index."""
    counts = Counter(actions)
    if not counts:
        raise ValueError("most_popular needs at least one action")
    return max(counts.items(), key=lambda item: (item[1], -item[0]))[0]


def first_action(prior: Iterable[float]) -> int:
    """Prior-optimal action before any signal arrives; ties go to the lowest index."""
    return int(np.argmax(np.asarray(list(prior), dtype=np.float64)))


def ml_action(L: np.ndarray) -> int:
    """Lowest state whose posterior log-likelihood row dominates: L[f, g] >= 0 for all g."""
    qualifies = np.all(L >= 0.0, axis=1)
    if qualifies.any():
        return int(np.argmax(qualifies))
    # Accumulated rounding can starve every row; the largest row sum is the
    # maximizer whenever L[f, g] = v_f - v_g holds exactly.
    return int(np.argmax(L.sum(axis=1)))


def decisive_state(
    L: np.ndarray, pair_means: np.ndarray, delta: float, t: int
) -> int | None:
    """Lowest state f with L[f, g] >= (m[f, g] - delta) * t for every g, if any."""
    qualifies = np.all(L >= (pair_means - delta) * t, axis=1)
    if qualifies.any():
        return int(np.argmax(qualifies))
    return None


def prior_log_matrix(model: SignalModel) -> np.ndarray:
    """Matrix of log prior(f) - log prior(g)."""
    logs = np.log(np.asarray(model.states.prior, dtype=np.float64))
    return logs[:, None] - logs[None, :]


def pair_mean_matrix(model: SignalModel, agent: int) -> np.ndarray:
    """Matrix of expected one-period log-likelihood ratios m[f, g]; zero diagonal."""
    k = model.states.n_states
    means = np.zeros((k, k), dtype=np.float64)
    for f in range(k):
        for g in range(k):
            if f != g:
                means[f, g] = PairKernel(model, agent, f, g).mean
    return means


def finite_llr_table(model: SignalModel, agent: int) -> np.ndarray:
    """Per-signal-index increment matrices: table[s, f, g] = llr of atom s for (f, g)."""
    pmf = np.stack(
        [model.pmf_row(agent, f) for f in range(model.states.n_states)]
    )
    with np.errstate(divide="ignore"):
        logs = np.log(pmf)
    return logs.T[:, :, None] - logs.T[:, None, :]


def make_increment_fn(model: SignalModel, agent: int) -> Callable[[float], np.ndarray]:
    """Signal -> log-likelihood-ratio increment matrix for one agent.

    Finite-support families receive the signal as a support index; the
    Gaussian family receives the raw value.
    """
    if model.has_finite_support:
        table = finite_llr_table(model, agent)
        return lambda signal: table[int(signal)]
    k = model.states.n_states
    means = np.array([model.gaussian_params(agent, f)[0] for f in range(k)])
    sigma = model.gaussian_params(agent, 0)[1]
    diff = means[:, None] - means[None, :]
    avg = (means[:, None] + means[None, :]) / 2.0
    var = sigma * sigma
    return lambda signal: diff * (float(signal) - avg) / var


class AgentState:
    """One agent's run-time view: accumulated evidence plus observed actions.

    ``acc`` accumulates per-period log-likelihood-ratio increments; the
    posterior matrix ``L`` adds the log-prior term on top. ``history`` holds
    the full action record of each observed neighbor (self included), which
    is everything a strategy may legally read.
    """

    def __init__(
        self,
        agent: int,
        prior_matrix: np.ndarray,
        pair_means: np.ndarray,
        increment_fn: Callable[[float], np.ndarray],
        neighbors: Iterable[int],
    ) -> None:
        self.agent = agent
        self.prior_matrix = prior_matrix
        self.pair_means = pair_means
        self._increment_fn = increment_fn
        self.acc = np.zeros_like(prior_matrix)
        self.t = 0
        self.last_signal: float | None = None
        self.own_actions: list[int] = []
        self.history: dict[int, list[int]] = {j: [] for j in neighbors}

    @property
    def L(self) -> np.ndarray:
        return self.prior_matrix + self.acc

    def absorb(self, signal: float) -> None:
        self.acc += self._increment_fn(signal)
        self.last_signal = signal
        self.t += 1

    def record(self, agent: int, action: int) -> None:
        if agent == self.agent:
            self.own_actions.append(action)
        if agent in self.history:
            self.history[agent].append(action)


@dataclass(frozen=True)
class RunContext:
    """Bound run facts a strategy may consult beyond its own AgentState."""

    n: int
    first_action: int
    delta: float | None = None
    schedule: PropagationSchedule | None = None
    llr_weight: float | None = None


@dataclass(frozen=True)
class AutarkyML:
    """Maximize the own-signal posterior each period; ignores everyone else."""

    def act(self, state: AgentState, t: int, ctx: RunContext) -> int:
        return ml_action(state.L)


@dataclass(frozen=True)
class CoordinationComplete:
    """On complete networks: act decisively on strong evidence, else copy the crowd.

    A state is decisive when every pairwise evidence total clears the linear
    threshold (m[f, g] - delta) * t. Absent a decisive state the agent
    repeats the previous period's plurality action.
    """

    delta: float | None = None

    def __post_init__(self) -> None:
        if self.delta is not None and not self.delta > 0.0:
            raise ValueError("delta must be positive")

    def act(self, state: AgentState, t: int, ctx: RunContext) -> int:
        if t == 1:
            return ctx.first_action
        f = decisive_state(state.L, state.pair_means, ctx.delta, t)
        if f is not None:
            return f
        return most_popular(state.history[j][t - 2] for j in range(ctx.n))


@dataclass(frozen=True)
class CoordinationConnected:
    """Coordination on any strongly connected network via vote propagation.

    Voting periods (block offset 0) follow the decisive-else-popular rule,
    with the plurality taken over every agent's previous vote as delivered by
    the propagation schedule. Propagation periods display whatever action the
    schedule directs, spending no evidence.
    """

    delta: float | None = None

    def __post_init__(self) -> None:
        if self.delta is not None and not self.delta > 0.0:
            raise ValueError("delta must be positive")

    def act(self, state: AgentState, t: int, ctx: RunContext) -> int:
        schedule = ctx.schedule
        offset = (t - 1) % schedule.M
        block_start = t - offset
        if offset == 0:
            if t == 1:
                return ctx.first_action
            f = decisive_state(state.L, state.pair_means, ctx.delta, t)
            if f is not None:
                return f
            previous_vote = t - schedule.M
            votes = [state.own_actions[previous_vote - 1]]
            for _, source, source_offset in schedule.harvest[state.agent]:
                votes.append(state.history[source][previous_vote + source_offset - 1])
            return most_popular(votes)
        directive = schedule.directives[offset - 1][state.agent]
        if isinstance(directive, Imitate):
            return state.history[directive.source][
                block_start + directive.source_offset - 1
            ]
        return state.own_actions[block_start + directive.own_offset - 1]


@dataclass(frozen=True)
class OddEven:
    """Odd agents reveal their signals; even agents aggregate the reveals.

    Odd-indexed agents play their current signal's maximum-likelihood action
    every period. Even-indexed agents tally every revealed action so far,
    weighted by the one-signal log-likelihood ratio, and play the tally's
    favorite. Defined for two-state symmetric binary models on complete
    networks.
    """

    def act(self, state: AgentState, t: int, ctx: RunContext) -> int:
        if state.agent % 2 == 1:
            return int(state.last_signal)
        zeros = 0
        ones = 0
        for j in range(1, ctx.n, 2):
            row = state.history[j]
            zeros += row.count(0)
            ones += row.count(1)
        score = state.prior_matrix[0, 1] + (zeros - ones) * ctx.llr_weight
        return 0 if score >= 0.0 else 1


@dataclass(frozen=True)
class ConstantFirstPeriod:
    """Play one fixed action forever; a degenerate baseline."""

    state: int = 0

    def __post_init__(self) -> None:
        if self.state < 0:
            raise ValueError("state index must be nonnegative")

    def act(self, state: AgentState, t: int, ctx: RunContext) -> int:
        return self.state


Strategy = AutarkyML | CoordinationComplete | CoordinationConnected | OddEven | ConstantFirstPeriod


def strategy_to_json(strategy: Strategy) -> dict:
    """Inverse of strategy_from_json."""
    if isinstance(strategy, AutarkyML):
        return {"strategy": "autarky-ml"}
    if isinstance(strategy, CoordinationComplete):
        doc = {"strategy": "coordination"}
        if strategy.delta is not None:
            doc["delta"] = strategy.delta
        return doc
    if isinstance(strategy, CoordinationConnected):
        doc = {"strategy": "coordination-connected"}
        if strategy.delta is not None:
            doc["delta"] = strategy.delta
        return doc
    if isinstance(strategy, OddEven):
        return {"strategy": "odd-even"}
    if isinstance(strategy, ConstantFirstPeriod):
        return {"strategy": "constant", "state": strategy.state}
    raise TypeError(f"unknown strategy object: {strategy!r}")


def strategy_from_json(doc: dict) -> Strategy:
    """Build a strategy from {"strategy": name, ...} configuration."""
    if not isinstance(doc, dict) or "strategy" not in doc:
        raise ValueError('strategy document needs a "strategy" name')
    name = doc["strategy"]
    if name == "autarky-ml":
        return AutarkyML()
    if name == "coordination":
        return CoordinationComplete(delta=doc.get("delta"))
    if name == "coordination-connected":
        return CoordinationConnected(delta=doc.get("delta"))
    if name == "odd-even":
        return OddEven()
    if name == "constant":
        if "state" not in doc:
            raise ValueError('constant strategy needs a "state" index')
        return ConstantFirstPeriod(state=int(doc["state"]))
    raise ValueError(f"unknown strategy {name!r}")
