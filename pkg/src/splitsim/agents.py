"""Per-cell decision makers: tabular and fuzzy Q-learning plus baselines.

The observation is (harvest, battery, own load, macro utilization), each
normalized to [0, 1]; uncoordinated variants drop the utilization term.
Tabular learners quantize each component into 5 bins.  Fuzzy learners keep
the raw components and blend 5 overlapping membership sets per component;
every firing rule picks its own epsilon-greedy action and the weighted
rounded blend becomes the cell's mode.  A crisp (indicator) membership
spec collapses the fuzzy learner onto the tabular one bin for bin, which
tests exploit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .power import OperativeMode

N_ACTIONS = 3
LEVELS = 5


@dataclass(frozen=True)
class AgentObservation:
    """Normalized local view of one cell at the start of a slot."""

    h: float      # harvested energy this slot / clear-sky cap
    b: float      # battery level / capacity
    l: float      # offered load / cell capacity, clipped at 1
    rho: float = 0.0   # previous-slot macro utilization (coordination signal)

    def vector(self, coordinated: bool) -> tuple:
        if coordinated:
            return (self.h, self.b, self.l, self.rho)
        return (self.h, self.b, self.l)


def quantize(obs: AgentObservation, levels: int = LEVELS,
             coordinated: bool = True) -> int:
    """Row-major bin index of the observation, first component most
    significant.  Components must lie in [0, 1]; the top edge folds into
    the last bin."""
    idx = 0
    for v in obs.vector(coordinated):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"observation component {v} outside [0, 1]")
        b = int(v * levels)
        if b >= levels:
            b = levels - 1
        idx = idx * levels + b
    return idx


def _epsilon_greedy(row, epsilon: float, rng) -> int:
    """One uniform draw decides explore/exploit; greedy ties break uniformly."""
    if rng.random() < epsilon:
        return int(rng.integers(len(row)))
    return _argmax_tiebreak(row, rng)


def _argmax_tiebreak(row, rng) -> int:
    best = 0
    m = row[0]
    ties = 1
    for k in range(1, len(row)):
        v = row[k]
        if v > m:
            m = v
            best = k
            ties = 1
        elif v == m:
            ties += 1
    if ties == 1:
        return best
    pick = int(rng.integers(ties))
    for k in range(len(row)):
        if row[k] == m:
            if pick == 0:
                return k
            pick -= 1
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# Exploration schedule

@dataclass(frozen=True)
class ExplorationSchedule:
    """Epsilon halves every epoch until it hits the floor."""

    initial: float = 0.9
    discount: float = 0.5
    floor: float = 0.03

    def __post_init__(self):
        if not 0.0 <= self.initial <= 1.0:
            raise ValueError("initial epsilon must lie in [0, 1]")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        if not 0.0 <= self.floor <= 1.0:
            raise ValueError("floor must lie in [0, 1]")

    def epsilon_at(self, epoch: int) -> float:
        if epoch < 0:
            raise ValueError("epoch must be >= 0")
        return max(self.floor, self.initial * self.discount ** epoch)


# ---------------------------------------------------------------------------
# Tabular Q-learning

@dataclass
class QTable:
    """Dense state-action value table with its learning constants."""

    n_states: int
    n_actions: int = N_ACTIONS
    alpha: float = 0.1
    gamma: float = 0.9
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.values is None:
            self.values = np.zeros((self.n_states, self.n_actions))
        else:
            self.values = np.asarray(self.values, dtype=float)
            if self.values.shape != (self.n_states, self.n_actions):
                raise ValueError("values shape mismatch")


def ql_select(table: QTable, state: int, epsilon: float, rng) -> int:
    return _epsilon_greedy(table.values[state], epsilon, rng)


def ql_update(table: QTable, state: int, action: int, reward: float,
              next_state: int | None) -> None:
    """One-step bootstrap toward reward + gamma * best next value."""
    row = table.values[state]
    target = reward
    if next_state is not None:
        target += table.gamma * table.values[next_state].max()
    row[action] += table.alpha * (target - row[action])


# ---------------------------------------------------------------------------
# Fuzzy membership machinery

@dataclass(frozen=True)
class FuzzySet:
    """One labeled region of [0, 1].

    kinds: "triangle" (a, b, c) peaking at b; "trapezoid" (a, b, c, d) flat
    on [b, c]; "indicator" (index, levels) exactly covering one quantizer
    bin, used to collapse the fuzzy learner onto the tabular one.
    """

    kind: str
    points: tuple

    def membership(self, x: float) -> float:
        if self.kind == "triangle":
            a, b, c = self.points
            if x <= a or x >= c:
                return 1.0 if x == b else 0.0
            if x == b:
                return 1.0
            if x < b:
                return (x - a) / (b - a)
            return (c - x) / (c - b)
        if self.kind == "trapezoid":
            a, b, c, d = self.points
            if x < a or x > d:
                return 0.0
            if b <= x <= c:
                return 1.0
            if x < b:
                return (x - a) / (b - a)
            return (d - x) / (d - c)
        if self.kind == "indicator":
            index, levels = self.points
            b = int(x * levels)
            if b >= levels:
                b = levels - 1
            return 1.0 if b == index else 0.0
        raise ValueError(f"unknown fuzzy set kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "points": list(self.points)}

    @classmethod
    def from_dict(cls, d: dict) -> "FuzzySet":
        return cls(kind=d["kind"], points=tuple(d["points"]))


def _default_dim_sets() -> tuple:
    """Five-set partition of unity: shoulders at 0 and 1, triangles between."""
    return (
        FuzzySet("trapezoid", (0.0, 0.0, 0.0, 0.25)),
        FuzzySet("triangle", (0.0, 0.25, 0.5)),
        FuzzySet("triangle", (0.25, 0.5, 0.75)),
        FuzzySet("triangle", (0.5, 0.75, 1.0)),
        FuzzySet("trapezoid", (0.75, 1.0, 1.0, 1.0)),
    )


@dataclass(frozen=True)
class MembershipSpec:
    """Per-dimension fuzzy sets; rules are the cross product of one set per
    dimension, indexed row-major with the first dimension most significant."""

    dims: tuple   # tuple of per-dimension tuples of FuzzySet

    @classmethod
    def default(cls, n_dims: int) -> "MembershipSpec":
        return cls(dims=tuple(_default_dim_sets() for _ in range(n_dims)))

    @classmethod
    def crisp(cls, n_dims: int, levels: int = LEVELS) -> "MembershipSpec":
        dim = tuple(FuzzySet("indicator", (k, levels)) for k in range(levels))
        return cls(dims=tuple(dim for _ in range(n_dims)))

    @property
    def n_dims(self) -> int:
        return len(self.dims)

    @property
    def n_rules(self) -> int:
        n = 1
        for dim in self.dims:
            n *= len(dim)
        return n

    def validate_partition(self, samples: int = 2048, tol: float = 1e-9) -> None:
        """Memberships along every dimension must sum to 1 everywhere."""
        xs = np.linspace(0.0, 1.0, samples)
        for d, dim in enumerate(self.dims):
            for x in xs:
                s = sum(fs.membership(float(x)) for fs in dim)
                if abs(s - 1.0) > tol:
                    raise ValueError(
                        f"dimension {d} memberships sum to {s} at x={x}")

    def dim_memberships(self, x: float, d: int) -> list:
        return [fs.membership(x) for fs in self.dims[d]]

    def to_dict(self) -> dict:
        return {"dims": [[fs.to_dict() for fs in dim] for dim in self.dims]}

    @classmethod
    def from_dict(cls, d: dict) -> "MembershipSpec":
        return cls(dims=tuple(
            tuple(FuzzySet.from_dict(fd) for fd in dim) for dim in d["dims"]))


def firing_strengths(obs: AgentObservation, spec: MembershipSpec) -> np.ndarray:
    """Dense product t-norm rule strengths; sums to 1 for partition specs."""
    coordinated = spec.n_dims == 4
    out = np.array([1.0])
    for d, x in enumerate(obs.vector(coordinated)):
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"observation component {x} outside [0, 1]")
        out = np.multiply.outer(out, np.array(spec.dim_memberships(x, d)))
    return out.ravel()


def _firing_pairs(spec: MembershipSpec, vec: tuple) -> list:
    """Sparse (rule index, weight) pairs in ascending rule order."""
    per_dim = []
    for d, x in enumerate(vec):
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"observation component {x} outside [0, 1]")
        nz = [(k, m) for k, m in enumerate(spec.dim_memberships(x, d)) if m > 0.0]
        per_dim.append(nz)
    pairs = [(0, 1.0)]
    for d, nz in enumerate(per_dim):
        width = len(spec.dims[d])
        pairs = [(idx * width + k, w * m) for idx, w in pairs for k, m in nz]
    return pairs


# ---------------------------------------------------------------------------
# Fuzzy Q-learning

@dataclass
class FuzzyRuleBase:
    """Per-rule action values plus the per-rule choices cached at selection.

    action_weighted_q switches the value blend to the literal action-index
    weighted form (every q term additionally multiplied by its action
    index).  The default is the standard strength-weighted blend; the
    literal form starves action 0 of influence and is kept only for
    comparison runs.
    """

    membership: MembershipSpec
    n_actions: int = N_ACTIONS
    alpha: float = 0.1
    gamma: float = 0.9
    action_weighted_q: bool = False
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.values is None:
            self.values = np.zeros((self.membership.n_rules, self.n_actions))
        else:
            self.values = np.asarray(self.values, dtype=float)
            if self.values.shape != (self.membership.n_rules, self.n_actions):
                raise ValueError("values shape mismatch")
        self._cache = None

    def state_value(self, pairs) -> float:
        """Strength-weighted value of a state described by firing pairs."""
        num = 0.0
        den = 0.0
        for idx, w in pairs:
            row = self.values[idx]
            best = row[_np_argmax_plain(row)]
            if self.action_weighted_q:
                best = best * _np_argmax_plain(row)
            num += w * best
            den += w
        return num / den if den > 0.0 else 0.0


def _np_argmax_plain(row) -> int:
    best = 0
    m = row[0]
    for k in range(1, len(row)):
        if row[k] > m:
            m = row[k]
            best = k
    return best


def _select_from_pairs(rulebase: FuzzyRuleBase, pairs, epsilon: float, rng) -> int:
    """Per-rule epsilon-greedy choices blended into one global action."""
    values = rulebase.values
    actions = []
    num = 0.0
    den = 0.0
    q_num = 0.0
    for idx, w in pairs:
        a = _epsilon_greedy(values[idx], epsilon, rng)
        actions.append(a)
        num += w * a
        den += w
        q = values[idx][a]
        if rulebase.action_weighted_q:
            q = q * a
        q_num += w * q
    blended = num / den if den > 0.0 else 0.0
    global_action = int(blended + 0.5)
    if global_action >= rulebase.n_actions:
        global_action = rulebase.n_actions - 1
    rulebase._cache = (pairs, actions, q_num / den if den > 0.0 else 0.0)
    return global_action


def fql_select(rulebase: FuzzyRuleBase, strengths, epsilon: float, rng) -> int:
    """Select from a dense strength vector; caches per-rule picks for the
    matching update."""
    strengths = np.asarray(strengths, dtype=float)
    pairs = [(int(i), float(strengths[i])) for i in np.flatnonzero(strengths > 0.0)]
    return _select_from_pairs(rulebase, pairs, epsilon, rng)


def fql_update(rulebase: FuzzyRuleBase, reward: float, next_strengths) -> None:
    """Distribute the TD error over the rules that fired at selection time."""
    if rulebase._cache is None:
        raise RuntimeError("fql_update called without a preceding fql_select")
    pairs, actions, q_x = rulebase._cache
    rulebase._cache = None
    if next_strengths is None:
        return
    next_strengths = np.asarray(next_strengths, dtype=float)
    next_pairs = [(int(i), float(next_strengths[i]))
                  for i in np.flatnonzero(next_strengths > 0.0)]
    _update_from_pairs(rulebase, pairs, actions, q_x, reward, next_pairs)


def _update_from_pairs(rulebase, pairs, actions, q_x, reward, next_pairs) -> None:
    v_next = rulebase.state_value(next_pairs)
    delta = reward + rulebase.gamma * v_next - q_x
    den = sum(w for _, w in pairs)
    if den <= 0.0:
        return
    scale = rulebase.alpha * delta / den
    values = rulebase.values
    for (idx, w), a in zip(pairs, actions):
        values[idx, a] += scale * w


# ---------------------------------------------------------------------------
# Episode-facing agents

class QLearningAgent:
    """Tabular learner over the quantized observation."""

    def __init__(self, coordinated: bool = True, alpha: float = 0.1,
                 gamma: float = 0.9, epsilon: float = 0.0, rng=None,
                 levels: int = LEVELS):
        self.coordinated = coordinated
        self.levels = levels
        n_states = levels ** (4 if coordinated else 3)
        self.table = QTable(n_states=n_states, alpha=alpha, gamma=gamma)
        self.epsilon = epsilon
        self.epsilon_schedule = None
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.learning = True
        self._pending = None
        self._slot = 0

    def begin_episode(self):
        self._pending = None
        self._slot = 0

    def act(self, obs: AgentObservation) -> int:
        if self.epsilon_schedule is not None:
            self.epsilon = self.epsilon_schedule(self._slot)
        self._slot += 1
        state = quantize(obs, self.levels, self.coordinated)
        action = ql_select(self.table, state, self.epsilon, self.rng)
        self._pending = (state, action)
        return action

    def observe(self, reward: float, next_obs: AgentObservation | None):
        if self._pending is None:
            raise RuntimeError("observe called without a preceding act")
        state, action = self._pending
        self._pending = None
        if next_obs is None or not self.learning:
            return
        next_state = quantize(next_obs, self.levels, self.coordinated)
        ql_update(self.table, state, action, reward, next_state)

    def to_dict(self) -> dict:
        return {
            "kind": "ql", "coordinated": self.coordinated,
            "levels": self.levels, "alpha": self.table.alpha,
            "gamma": self.table.gamma, "values": self.table.values.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, rng=None) -> "QLearningAgent":
        agent = cls(coordinated=d["coordinated"], alpha=d["alpha"],
                    gamma=d["gamma"], rng=rng, levels=d["levels"])
        agent.table.values[:] = np.asarray(d["values"], dtype=float)
        return agent


class FuzzyQLearningAgent:
    """Fuzzy learner; every firing rule votes with its own choice."""

    def __init__(self, coordinated: bool = True, alpha: float = 0.1,
                 gamma: float = 0.9, epsilon: float = 0.0, rng=None,
                 membership: MembershipSpec | None = None,
                 action_weighted_q: bool = False):
        self.coordinated = coordinated
        if membership is None:
            membership = MembershipSpec.default(4 if coordinated else 3)
        expected = 4 if coordinated else 3
        if membership.n_dims != expected:
            raise ValueError(f"membership needs {expected} dimensions")
        self.rulebase = FuzzyRuleBase(membership=membership, alpha=alpha,
                                      gamma=gamma,
                                      action_weighted_q=action_weighted_q)
        self.epsilon = epsilon
        self.epsilon_schedule = None
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.learning = True
        self._slot = 0

    def begin_episode(self):
        self.rulebase._cache = None
        self._slot = 0

    def act(self, obs: AgentObservation) -> int:
        if self.epsilon_schedule is not None:
            self.epsilon = self.epsilon_schedule(self._slot)
        self._slot += 1
        pairs = _firing_pairs(self.rulebase.membership, obs.vector(self.coordinated))
        return _select_from_pairs(self.rulebase, pairs, self.epsilon, self.rng)

    def observe(self, reward: float, next_obs: AgentObservation | None):
        if self.rulebase._cache is None:
            raise RuntimeError("observe called without a preceding act")
        if next_obs is None:
            self.rulebase._cache = None
            return
        if not self.learning:
            self.rulebase._cache = None
            return
        pairs, actions, q_x = self.rulebase._cache
        self.rulebase._cache = None
        next_pairs = _firing_pairs(self.rulebase.membership,
                                   next_obs.vector(self.coordinated))
        _update_from_pairs(self.rulebase, pairs, actions, q_x, reward, next_pairs)

    def to_dict(self) -> dict:
        return {
            "kind": "fql", "coordinated": self.coordinated,
            "alpha": self.rulebase.alpha, "gamma": self.rulebase.gamma,
            "action_weighted_q": self.rulebase.action_weighted_q,
            "membership": self.rulebase.membership.to_dict(),
            "values": self.rulebase.values.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, rng=None) -> "FuzzyQLearningAgent":
        agent = cls(coordinated=d["coordinated"], alpha=d["alpha"],
                    gamma=d["gamma"], rng=rng,
                    membership=MembershipSpec.from_dict(d["membership"]),
                    action_weighted_q=d["action_weighted_q"])
        agent.rulebase.values[:] = np.asarray(d["values"], dtype=float)
        return agent


def greedy_action(obs: AgentObservation, threshold_frac: float = 0.20) -> int:
    """Serve in PHY-RF whenever the battery sits strictly above the guard
    threshold, otherwise switch off."""
    if obs.b > threshold_frac:
        return OperativeMode.PHY_RF.value
    return OperativeMode.OFF.value


class GreedyAgent:
    """Battery-threshold heuristic, no learning."""

    def __init__(self, threshold_frac: float = 0.20):
        self.threshold_frac = threshold_frac
        self.learning = False

    def begin_episode(self):
        pass

    def act(self, obs: AgentObservation) -> int:
        return greedy_action(obs, self.threshold_frac)

    def observe(self, reward, next_obs):
        pass

    def to_dict(self) -> dict:
        return {"kind": "greedy", "threshold_frac": self.threshold_frac}

    @classmethod
    def from_dict(cls, d: dict, rng=None) -> "GreedyAgent":
        return cls(threshold_frac=d["threshold_frac"])


class StaticAgent:
    """Requests the same mode every slot (battery guard still applies)."""

    def __init__(self, mode):
        self.mode = int(mode)
        self.learning = False

    def begin_episode(self):
        pass

    def act(self, obs: AgentObservation) -> int:
        return self.mode

    def observe(self, reward, next_obs):
        pass

    def to_dict(self) -> dict:
        return {"kind": "static", "mode": self.mode}

    @classmethod
    def from_dict(cls, d: dict, rng=None) -> "StaticAgent":
        return cls(mode=d["mode"])


class FixedSequenceAgent:
    """Replays a precomputed per-slot action sequence."""

    def __init__(self, actions):
        self.actions = [int(a) for a in actions]
        self.learning = False
        self._slot = 0

    def begin_episode(self):
        self._slot = 0

    def act(self, obs: AgentObservation) -> int:
        action = self.actions[self._slot]
        self._slot += 1
        return action

    def observe(self, reward, next_obs):
        pass


# ---------------------------------------------------------------------------
# Policy files.  JSON keeps floats at full precision (repr round-trip), so
# export/import is bit-exact.

POLICY_FORMAT = "splitsim-policy"
POLICY_VERSION = 1

_AGENT_KINDS = {
    "ql": QLearningAgent,
    "fql": FuzzyQLearningAgent,
    "greedy": GreedyAgent,
    "static": StaticAgent,
}


def save_policies(agents, path) -> None:
    payload = {
        "format": POLICY_FORMAT,
        "version": POLICY_VERSION,
        "agents": [agent.to_dict() for agent in agents],
    }
    with open(path, "w") as f:
        json.dump(payload, f)
        f.write("\n")


def load_policies(path, rngs=None) -> list:
    with open(path) as f:
        payload = json.load(f)
    if payload.get("format") != POLICY_FORMAT:
        raise ValueError(f"{path}: not a policy file")
    if payload.get("version") != POLICY_VERSION:
        raise ValueError(f"{path}: unsupported policy version {payload.get('version')}")
    dicts = payload["agents"]
    if rngs is None:
        rngs = [None] * len(dicts)
    if len(rngs) != len(dicts):
        raise ValueError("one rng per stored agent required")
    agents = []
    for d, rng in zip(dicts, rngs):
        kind = d.get("kind")
        if kind not in _AGENT_KINDS:
            raise ValueError(f"unknown agent kind {kind!r}")
        agents.append(_AGENT_KINDS[kind].from_dict(d, rng=rng))
    return agents
