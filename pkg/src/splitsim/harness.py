"""Experiment protocols tying traces, agents and the simulator together.

A YAML config describes one scenario (schema_version 1).  Seed fan-out is
fixed and documented here:

  training traces     generate_traces(seed=cfg.seed)
  validation traces   generate_traces(seed=cfg.seed + 1)
  agent RNG streams   SeedSequence([cfg.seed, 1]).spawn(n_cells), cell order

Protocols:

  train     epochs over the training year, epsilon halving per epoch,
            policies persisted every epoch plus a reward-vs-epoch CSV
  evaluate  one pass over the training year, epsilon fixed small, updates on
  validate  same as evaluate but on the fresh validation year
  runtime   zero-initialized policies learn online over one year, epsilon
            decaying every `runtime_decay_slots` slots
  bound     clairvoyant schedule for the training year
  report    comparison table, reward curves and seasonal mode histograms
            assembled from the artifacts the other protocols wrote
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .agents import (
    ExplorationSchedule,
    FuzzyQLearningAgent,
    GreedyAgent,
    QLearningAgent,
    StaticAgent,
    load_policies,
    save_policies,
)
from .offline_bound import DPConfig, solve_offline
from .power import OperativeMode, PowerModelParams
from .simulator import EpisodeLog, SimParams, run_episode
from .traces import Profile, SolarConfig, TraceSet, TrafficConfig, generate_traces

ALGORITHMS = ("fql", "ql", "u-fql", "u-ql", "greedy", "static-macphy", "all-off")


class ConfigError(ValueError):
    """Bad or inconsistent experiment configuration."""


@dataclass(frozen=True)
class LearningConfig:
    algorithm: str = "fql"
    alpha: float = 0.1
    gamma: float = 0.9
    epochs: int = 10
    action_weighted_q: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}, "
                              f"expected one of {ALGORITHMS}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must lie in (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")


@dataclass(frozen=True)
class EpsilonConfig:
    initial: float = 0.9
    discount: float = 0.5
    train_floor: float = 0.03
    eval_epsilon: float = 0.05
    runtime_floor: float = 0.05
    runtime_decay_slots: int = 720

    def __post_init__(self):
        for name in ("initial", "discount", "train_floor", "eval_epsilon",
                     "runtime_floor"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.runtime_decay_slots < 1:
            raise ConfigError("runtime_decay_slots must be >= 1")

    def train_schedule(self) -> ExplorationSchedule:
        return ExplorationSchedule(initial=self.initial, discount=self.discount,
                                   floor=self.train_floor)

    def runtime_schedule(self):
        sched = ExplorationSchedule(initial=self.initial, discount=self.discount,
                                    floor=self.runtime_floor)
        decay = self.runtime_decay_slots
        return lambda slot: sched.epsilon_at(slot // decay)


@dataclass(frozen=True)
class ExperimentConfig:
    schema_version: int = 1
    seed: int = 0
    horizon: int = 8760
    learning: LearningConfig = field(default_factory=LearningConfig)
    epsilon: EpsilonConfig = field(default_factory=EpsilonConfig)
    sim: SimParams = field(default_factory=SimParams)
    solar: SolarConfig = field(default_factory=SolarConfig)
    traffic: TrafficConfig = field(default_factory=lambda: TrafficConfig(
        profile=Profile.RESIDENTIAL))
    bound: DPConfig = field(default_factory=lambda: DPConfig(battery_levels=101))
    power: PowerModelParams = field(default_factory=PowerModelParams)

    def __post_init__(self):
        if self.schema_version != 1:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.sim.slot_hours != self.solar.slot_hours:
            raise ConfigError("sim.slot_hours and solar.slot_hours disagree")


_SECTIONS = {
    "learning": LearningConfig,
    "epsilon": EpsilonConfig,
    "sim": SimParams,
    "solar": SolarConfig,
    "traffic": TrafficConfig,
    "bound": DPConfig,
    "power": PowerModelParams,
}
_TOP_KEYS = {"schema_version", "seed", "horizon"} | set(_SECTIONS)


def _build_section(cls, data: dict, name: str):
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    if name == "traffic" and "profile" in data:
        try:
            data = dict(data, profile=Profile(data["profile"]))
        except ValueError:
            raise ConfigError(f"unknown traffic profile {data['profile']!r}")
    if name == "traffic" and isinstance(data.get("weekly_shape"), list):
        data = dict(data, weekly_shape=tuple(tuple(r) for r in data["weekly_shape"]))
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {name} section: {exc}")


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kwargs = {}
    for key in ("schema_version", "seed", "horizon"):
        if key in data:
            kwargs[key] = data[key]
    for name, cls in _SECTIONS.items():
        if name in data:
            section = data[name]
            if not isinstance(section, dict):
                raise ConfigError(f"section {name} must be a mapping")
            kwargs[name] = _build_section(cls, section, name)
    if "traffic" not in kwargs:
        kwargs["traffic"] = TrafficConfig(profile=Profile.RESIDENTIAL)
    return ExperimentConfig(**kwargs)


def config_from_yaml(path) -> ExperimentConfig:
    with open(path) as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}")
    return config_from_dict(data if data is not None else {})


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {"schema_version": cfg.schema_version, "seed": cfg.seed,
           "horizon": cfg.horizon}
    for name, _ in _SECTIONS.items():
        section = dataclasses.asdict(getattr(cfg, name))
        if name == "traffic":
            section["profile"] = section["profile"].value
            if section["weekly_shape"] is not None:
                section["weekly_shape"] = [list(r) for r in section["weekly_shape"]]
        out[name] = section
    return out


def config_to_yaml(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(config_to_dict(cfg), f, sort_keys=False)


# ---------------------------------------------------------------------------
# Seeds, traces, agents.

def agent_rngs(seed: int, n: int) -> list:
    ss = np.random.SeedSequence([seed, 1])
    return [np.random.default_rng(child) for child in ss.spawn(n)]


def training_traces(cfg: ExperimentConfig) -> TraceSet:
    return generate_traces(cfg.solar, cfg.traffic, cfg.seed,
                           cfg.horizon, cfg.sim.n_cells)


def validation_traces(cfg: ExperimentConfig) -> TraceSet:
    return generate_traces(cfg.solar, cfg.traffic, cfg.seed + 1,
                           cfg.horizon, cfg.sim.n_cells)


def make_agents(cfg: ExperimentConfig) -> list:
    algo = cfg.learning.algorithm
    n = cfg.sim.n_cells
    rngs = agent_rngs(cfg.seed, n)
    lc = cfg.learning
    if algo in ("fql", "u-fql"):
        return [FuzzyQLearningAgent(coordinated=(algo == "fql"), alpha=lc.alpha,
                                    gamma=lc.gamma, rng=rngs[i],
                                    action_weighted_q=lc.action_weighted_q)
                for i in range(n)]
    if algo in ("ql", "u-ql"):
        return [QLearningAgent(coordinated=(algo == "ql"), alpha=lc.alpha,
                               gamma=lc.gamma, rng=rngs[i]) for i in range(n)]
    if algo == "greedy":
        return [GreedyAgent(threshold_frac=cfg.sim.battery_threshold_frac)
                for _ in range(n)]
    if algo == "static-macphy":
        return [StaticAgent(OperativeMode.MAC_PHY.value) for _ in range(n)]
    if algo == "all-off":
        return [StaticAgent(OperativeMode.OFF.value) for _ in range(n)]
    raise ConfigError(f"unknown algorithm {algo!r}")


def _set_epsilon(agents, epsilon, schedule=None):
    for agent in agents:
        if hasattr(agent, "epsilon"):
            agent.epsilon = epsilon
            agent.epsilon_schedule = schedule


def metrics_summary(log: EpisodeLog) -> dict:
    s = log.summary_dict()
    s["normalized_reward"] = s["cumulative_reward"] / s["slots"]
    return s


def _write_summary(summary: dict, out_dir, name: str) -> None:
    with open(Path(out_dir) / name, "w") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")


# ---------------------------------------------------------------------------
# Protocols.

def train(cfg: ExperimentConfig, out_dir=None):
    """Returns (agents, history); history has one row per epoch."""
    traces = training_traces(cfg)
    agents = make_agents(cfg)
    schedule = cfg.epsilon.train_schedule()
    history = []
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    for epoch in range(cfg.learning.epochs):
        eps = schedule.epsilon_at(epoch)
        _set_epsilon(agents, eps)
        log = run_episode(agents, traces, cfg.sim, cfg.power)
        row = {"epoch": epoch, "epsilon": eps}
        row.update(metrics_summary(log))
        history.append(row)
        if out_dir is not None:
            save_policies(agents, out_dir / f"policy_epoch_{epoch}.json")
    if out_dir is not None:
        save_policies(agents, out_dir / "policy.json")
        _write_history_csv(history, out_dir / "training_rewards.csv")
        _write_summary({"config_seed": cfg.seed,
                        "algorithm": cfg.learning.algorithm,
                        "epochs": cfg.learning.epochs,
                        "final": history[-1]}, out_dir, "train_summary.json")
    return agents, history


def _write_history_csv(history, path) -> None:
    cols = ["epoch", "epsilon", "cumulative_reward", "normalized_reward",
            "grid_energy_kwh", "mean_drop_rate", "forced_off_count"]
    with open(path, "w", newline="") as f:
        f.write(",".join(cols) + "\n")
        for row in history:
            f.write(",".join(repr(float(row[c])) if isinstance(row[c], float)
                             else str(row[c]) for c in cols) + "\n")


def read_history_csv(path) -> list:
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    cols = lines[0].split(",")
    out = []
    for line in lines[1:]:
        row = {}
        for c, v in zip(cols, line.split(",")):
            row[c] = int(v) if c in ("epoch", "forced_off_count") else float(v)
        out.append(row)
    return out


def _assessment(cfg, agents, traces, log_name, summary_name, out_dir):
    _set_epsilon(agents, cfg.epsilon.eval_epsilon)
    log = run_episode(agents, traces, cfg.sim, cfg.power)
    summary = metrics_summary(log)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log.to_csv(out_dir / log_name)
        _write_summary(summary, out_dir, summary_name)
    return log, summary


def evaluate(cfg: ExperimentConfig, agents=None, out_dir=None):
    """One low-exploration pass over the training year, updates still on."""
    if agents is None:
        agents = _agents_from_dir(cfg, out_dir)
    return _assessment(cfg, agents, training_traces(cfg),
                       "evaluate_log.csv", "evaluate_summary.json", out_dir)


def validate(cfg: ExperimentConfig, agents=None, out_dir=None):
    """Like evaluate but on the fresh-seed validation year."""
    if agents is None:
        agents = _agents_from_dir(cfg, out_dir)
    return _assessment(cfg, agents, validation_traces(cfg),
                       "validate_log.csv", "validate_summary.json", out_dir)


def _agents_from_dir(cfg, out_dir):
    if out_dir is None:
        raise ConfigError("need either trained agents or an output directory "
                          "holding policy.json")
    path = Path(out_dir) / "policy.json"
    if not path.exists():
        raise FileNotFoundError(f"{path}: train first or pass agents")
    return load_policies(path, rngs=agent_rngs(cfg.seed, cfg.sim.n_cells))


def runtime(cfg: ExperimentConfig, out_dir=None):
    """Fresh policies learning online over the validation year; epsilon
    decays every runtime_decay_slots slots.  Uses the same traces as
    validate so the two protocols are directly comparable."""
    traces = validation_traces(cfg)
    agents = make_agents(cfg)
    _set_epsilon(agents, cfg.epsilon.initial, schedule=cfg.epsilon.runtime_schedule())
    log = run_episode(agents, traces, cfg.sim, cfg.power)
    summary = metrics_summary(log)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log.to_csv(out_dir / "runtime_log.csv")
        save_policies(agents, out_dir / "runtime_policy.json")
        _write_summary(summary, out_dir, "runtime_summary.json")
    return log, summary


def bound(cfg: ExperimentConfig, out_dir=None):
    """Clairvoyant schedule for the training year, plus its replayed log."""
    from .agents import FixedSequenceAgent

    traces = training_traces(cfg)
    result = solve_offline(traces, cfg.sim, cfg.power, cfg.bound)
    replay = run_episode([FixedSequenceAgent(result.actions[:, i])
                          for i in range(cfg.sim.n_cells)],
                         traces, cfg.sim, cfg.power)
    summary = metrics_summary(replay)
    summary["bound_cumulative_reward"] = result.cumulative_reward
    summary["bound_total_cost"] = result.total_cost
    summary["engine"] = result.engine
    summary.update({f"engine_{k}": v for k, v in result.meta.items()})
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        replay.to_csv(out_dir / "bound_log.csv")
        _write_summary(summary, out_dir, "bound_summary.json")
    return result, replay, summary


# ---------------------------------------------------------------------------
# Seasonal selection statistics and the report.

WINTER_DOYS = frozenset(range(0, 59)) | frozenset(range(334, 365))   # Dec-Feb
SUMMER_DOYS = frozenset(range(151, 243))                             # Jun-Aug


def seasonal_mode_rates(log: EpisodeLog, slot_hours: float = 1.0) -> dict:
    """Per-season, per-hour mode selection rates in percent.

    Returns {"winter": (24, 3), "summer": (24, 3)}; every row sums to 100
    (when the season appears in the log)."""
    k = len(log)
    slot_hour = (np.arange(k) * slot_hours) % 24.0
    doy = (np.arange(k) * slot_hours // 24.0).astype(int) % 365
    out = {}
    for name, days in (("winter", WINTER_DOYS), ("summer", SUMMER_DOYS)):
        mask = np.isin(doy, list(days))
        rates = np.zeros((24, 3))
        for h in range(24):
            sel = mask & (slot_hour.astype(int) == h)
            if not sel.any():
                continue
            modes = log.applied[sel].ravel()
            for m in range(3):
                rates[h, m] = 100.0 * np.mean(modes == m)
        out[name] = rates
    return out


def write_mode_rates_csv(rates: np.ndarray, path) -> None:
    with open(path, "w", newline="") as f:
        f.write("hour,off_pct,phy_rf_pct,mac_phy_pct\n")
        for h in range(24):
            f.write(f"{h}," + ",".join(repr(float(v)) for v in rates[h]) + "\n")


def report(cfg: ExperimentConfig, out_root, algorithms=None) -> str:
    """Assemble a comparison from per-algorithm artifact directories under
    out_root; returns the path of the written report.md."""
    out_root = Path(out_root)
    algorithms = list(algorithms) if algorithms is not None else list(ALGORITHMS)
    rows = []
    curves = {}
    for algo in algorithms:
        adir = out_root / algo
        entry = {"algorithm": algo}
        hist_path = adir / "training_rewards.csv"
        if hist_path.exists():
            curves[algo] = read_history_csv(hist_path)
        for stage in ("evaluate", "validate", "runtime"):
            p = adir / f"{stage}_summary.json"
            if p.exists():
                with open(p) as f:
                    entry[stage] = json.load(f)
        if any(k in entry for k in ("evaluate", "validate", "runtime")):
            rows.append(entry)
    bound_summary = None
    bpath = out_root / "bound" / "bound_summary.json"
    if bpath.exists():
        with open(bpath) as f:
            bound_summary = json.load(f)

    lines = ["# Experiment report", ""]
    lines.append(f"Scenario seed {cfg.seed}, {cfg.sim.n_cells} cells, "
                 f"{cfg.horizon} slots.")
    lines.append("")
    lines.append("| algorithm | eval reward | eval grid kWh | eval drop "
                 "| validate reward | runtime reward |")
    lines.append("|---|---|---|---|---|---|")
    for entry in rows:
        ev = entry.get("evaluate", {})
        va = entry.get("validate", {})
        rt = entry.get("runtime", {})
        lines.append("| {} | {} | {} | {} | {} | {} |".format(
            entry["algorithm"],
            _fmt(ev.get("cumulative_reward")), _fmt(ev.get("grid_energy_kwh")),
            _fmt(ev.get("mean_drop_rate"), 4),
            _fmt(va.get("cumulative_reward")), _fmt(rt.get("cumulative_reward"))))
    if bound_summary is not None:
        lines.append("")
        lines.append(f"Clairvoyant bound: cumulative reward "
                     f"{_fmt(bound_summary.get('bound_cumulative_reward'))} "
                     f"({bound_summary.get('engine')} engine, "
                     f"{bound_summary.get('engine_battery_levels', 'n/a')} "
                     "battery levels).")
    if curves:
        lines.append("")
        lines.append("Training reward by epoch:")
        lines.append("")
        epochs = max(len(h) for h in curves.values())
        header = "| epoch | " + " | ".join(curves) + " |"
        lines.append(header)
        lines.append("|" + "---|" * (len(curves) + 1))
        for e in range(epochs):
            cells = []
            for algo in curves:
                h = curves[algo]
                cells.append(_fmt(h[e]["cumulative_reward"]) if e < len(h) else "")
            lines.append(f"| {e} | " + " | ".join(cells) + " |")

    # seasonal selection histograms for every algorithm with an evaluate log
    for algo in algorithms:
        lpath = out_root / algo / "evaluate_log.csv"
        if not lpath.exists():
            continue
        log = EpisodeLog.from_csv(lpath)
        rates = seasonal_mode_rates(log, cfg.sim.slot_hours)
        for season in ("winter", "summer"):
            write_mode_rates_csv(rates[season],
                                 out_root / algo / f"selection_{season}.csv")
        lines.append("")
        lines.append(f"{algo}: wrote selection_winter.csv / selection_summer.csv "
                     "(per-hour mode percentages).")

    out_root.mkdir(parents=True, exist_ok=True)
    path = out_root / "report.md"
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    return str(path)


def _fmt(v, digits=2):
    if v is None:
        return ""
    return f"{v:.{digits}f}"
