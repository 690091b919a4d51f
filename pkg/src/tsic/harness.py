"""Experiment runner: sweeps over (sweep value x policy x cache x seed).

TSIC is trained for ``train_episodes`` episodes on independent workloads of
the same cluster (epsilon-greedy, learning on), then evaluated greedily with
learning off. Baselines are evaluated directly. Every evaluation uses the
seed's stream-0 workload, so policies face identical task sequences.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import List, Optional, Sequence

from .agent import (
    EpisodeResult,
    GreedyPolicy,
    RoundRobinPolicy,
    TsicAgent,
    run_episode,
)
from .cache import make_cache_policy
from .qnet import StateLayout, TrainConfig
from .sim import SimConfig, Simulator, generate_workload, read_workload

POLICIES = ("TSIC", "GRD", "RR")
SWEEP_AXES = ("lfu_size", "node_count", "task_count")
METRIC_FIELDS = (
    "sweep_value", "policy", "cache", "seed", "comm_s", "wait_s", "comp_s", "total_s", "failures"
)
TRACE_FIELDS = ("slot", "task_id", "action_node", "masked", "eps_draw", "reward", "failed")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    policies: List[str] = field(default_factory=lambda: list(POLICIES))
    # "LFU" is resolved to "LFU-<K>" by the lfu_size sweep
    caches: List[str] = field(default_factory=lambda: ["ADP"])
    sweep_axis: Optional[str] = None
    sweep_values: List[int] = field(default_factory=list)
    seeds: List[int] = field(default_factory=lambda: [0])
    train_episodes: int = 3
    eval_epsilon: float = 0.0
    workload_path: Optional[str] = None  # evaluation tasks from a CSV trace instead of stream 0
    output: Optional[str] = None
    name: str = "custom"

    def validate(self) -> None:
        try:
            self.sim.validate()
            self.train.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        for p in self.policies:
            if p not in POLICIES:
                raise ConfigError(f"unknown policy {p!r}; choose from {POLICIES}")
        if not self.policies or not self.caches:
            raise ConfigError("policies and caches must be non-empty")
        if self.sweep_axis is not None:
            if self.sweep_axis not in SWEEP_AXES:
                raise ConfigError(f"unknown sweep axis {self.sweep_axis!r}; choose from {SWEEP_AXES}")
            if not self.sweep_values:
                raise ConfigError("sweep_axis needs sweep_values")
        elif self.sweep_values:
            raise ConfigError("sweep_values given without sweep_axis")
        if any(b <= a for a, b in zip(self.sweep_values, self.sweep_values[1:])):
            raise ConfigError("sweep values must be strictly increasing")
        if any(v < 1 for v in self.sweep_values):
            raise ConfigError("sweep values must be >= 1")
        for c in self.caches:
            if c == "LFU":
                if self.sweep_axis != "lfu_size":
                    raise ConfigError("cache 'LFU' needs the lfu_size sweep; use 'LFU-<K>' otherwise")
                continue
            try:
                make_cache_policy(c)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if self.train_episodes < 0:
            raise ConfigError("train_episodes must be >= 0")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["sim"] = self.sim.to_dict()
        d["train"] = self.train.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        try:
            sim = SimConfig.from_dict(d.pop("sim", {}))
            train = TrainConfig.from_dict(d.pop("train", {}))
            return cls(sim=sim, train=train, **d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(d)


@dataclass
class MetricsRow:
    sweep_value: object
    policy: str
    cache: str
    seed: int
    comm_s: float
    wait_s: float
    comp_s: float
    total_s: float
    failures: int

    def as_list(self) -> list:
        sv = "" if self.sweep_value is None else self.sweep_value
        nums = [repr(float(v)) for v in (self.comm_s, self.wait_s, self.comp_s, self.total_s)]
        return [sv, self.policy, self.cache, self.seed, *nums, self.failures]


def resolve_point(cfg: ExperimentConfig, value, cache: str):
    """SimConfig and concrete cache name for one sweep value."""
    sim = cfg.sim
    if cfg.sweep_axis == "node_count":
        sim = replace(sim, num_nodes=int(value))
    elif cfg.sweep_axis == "task_count":
        sim = replace(sim, num_tasks=int(value))
    if cache == "LFU":
        cache = f"LFU-{int(value)}"
    return sim, cache


def make_policy(name: str, sim_cfg: SimConfig, train: TrainConfig, seed: int):
    if name == "TSIC":
        layout = StateLayout(sim_cfg.num_nodes, sim_cfg.num_images, sim_cfg.num_services)
        return TsicAgent(layout, train, seed=seed, max_data_mb=sim_cfg.task_data_mb[1])
    if name == "GRD":
        return GreedyPolicy()
    if name == "RR":
        return RoundRobinPolicy()
    raise ConfigError(f"unknown policy {name!r}")


def episode_epsilon(train: TrainConfig, episode: int, episodes: int) -> float:
    if train.epsilon_final is None or episodes <= 1:
        return train.epsilon
    frac = episode / (episodes - 1)
    return train.epsilon + (train.epsilon_final - train.epsilon) * frac


def run_single(sim_cfg: SimConfig, train: TrainConfig, policy: str, cache: str, seed: int,
               train_episodes: int = 3, eval_epsilon: float = 0.0,
               workload_path: Optional[str] = None, keep_events: bool = False) -> EpisodeResult:
    """Train (TSIC only) and evaluate one (policy, cache, seed) combination."""
    cfg = replace(sim_cfg, rng_seed=seed)
    agent = make_policy(policy, cfg, train, seed)
    if isinstance(agent, TsicAgent):
        for ep in range(train_episodes):
            agent.epsilon = episode_epsilon(train, ep, train_episodes)
            sim = Simulator(cfg, make_cache_policy(cache))
            run_episode(sim, generate_workload(cfg, stream=ep + 1), agent)
        agent.learn = False
        agent.epsilon = eval_epsilon
    tasks = read_workload(workload_path) if workload_path else generate_workload(cfg)
    sim = Simulator(cfg, make_cache_policy(cache))
    return run_episode(sim, tasks, agent, keep_events=keep_events)


def _row(value, policy, cache, seed, res: EpisodeResult) -> MetricsRow:
    comm, wait, comp, total = res.mean_delays()
    for v in (comm, wait, comp, total):
        if not math.isfinite(v):
            raise FloatingPointError(f"non-finite metric for {policy}/{cache}/seed {seed}")
    return MetricsRow(value, policy, cache, seed, comm, wait, comp, total, len(res.failures))


def _job(args):
    sim_cfg, train, policy, cache, seed, episodes, eval_eps, workload = args
    return run_single(sim_cfg, train, policy, cache, seed, episodes, eval_eps, workload)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> List[MetricsRow]:
    """All rows in (sweep, policy, cache, seed) order.

    Identical runs (e.g. ADP under an lfu_size sweep) are computed once.
    """
    cfg.validate()
    values = cfg.sweep_values if cfg.sweep_axis else [None]
    points = []
    unique = {}
    for value in values:
        for policy in cfg.policies:
            for cache in cfg.caches:
                sim_cfg, cache_name = resolve_point(cfg, value, cache)
                for seed in cfg.seeds:
                    key = (policy, cache_name, seed, json.dumps(sim_cfg.to_dict(), sort_keys=True))
                    if key not in unique:
                        unique[key] = (sim_cfg, cfg.train, policy, cache_name, seed,
                                       cfg.train_episodes, cfg.eval_epsilon, cfg.workload_path)
                    points.append((value, policy, cache, seed, key))
    keys = list(unique)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = dict(zip(keys, pool.map(_job, [unique[k] for k in keys])))
    else:
        results = {k: _job(unique[k]) for k in keys}
    rows = []
    for value, policy, cache, seed, key in points:
        rows.append(_row(value, policy, unique[key][3], seed, results[key]))
    return rows


def write_metrics(rows: Sequence[MetricsRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(METRIC_FIELDS)
    for r in rows:
        w.writerow(r.as_list())


def metrics_csv(rows: Sequence[MetricsRow]) -> str:
    buf = io.StringIO()
    write_metrics(rows, buf)
    return buf.getvalue()


def read_metrics(fh) -> List[dict]:
    out = []
    for rec in csv.DictReader(fh):
        for k in ("comm_s", "wait_s", "comp_s", "total_s"):
            rec[k] = float(rec[k])
        rec["seed"] = int(rec["seed"])
        rec["failures"] = int(rec["failures"])
        out.append(rec)
    return out


def write_trace(res: EpisodeResult, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for d in res.decisions:
        draw = "" if math.isnan(d.eps_draw) else repr(float(d.eps_draw))
        w.writerow([d.slot, d.task_id, d.node, int(d.masked), draw, repr(float(d.reward)),
                    int(d.failed)])


def trace_experiment(cfg: ExperimentConfig) -> EpisodeResult:
    """Evaluation run of the first (sweep value, policy, cache, seed) of ``cfg``."""
    cfg.validate()
    value = cfg.sweep_values[0] if cfg.sweep_axis else None
    sim_cfg, cache = resolve_point(cfg, value, cfg.caches[0])
    return run_single(sim_cfg, cfg.train, cfg.policies[0], cache, cfg.seeds[0],
                      cfg.train_episodes, cfg.eval_epsilon, cfg.workload_path)


# presets ------------------------------------------------------------------

SEEDS = [0, 1, 2, 3, 4]


def _storage_tiers(smallest_image_mb: float, images_on_smallest: int = 10):
    base = math.ceil(smallest_image_mb * images_on_smallest / 100.0) * 100.0
    return (base, 2 * base, 4 * base)


def _base_sim(**kw) -> SimConfig:
    sim = SimConfig(**kw)
    return replace(sim, storage_tiers=_storage_tiers(sim.image_size_mb[0]))


def preset_fig3() -> ExperimentConfig:
    """Cache variants under TSIC while the fixed LFU size grows.

    The catalog (40 images) and episode length (400 tasks) are large enough
    that per-node caches fill up and a fixed record cap of 10 binds.
    """
    return ExperimentConfig(
        sim=_base_sim(num_nodes=5, num_images=40, num_services=40, num_tasks=400),
        policies=["TSIC"],
        caches=["ADP", "ADP-FRQ", "LFU"],
        sweep_axis="lfu_size",
        sweep_values=[2, 4, 6, 8, 10],
        seeds=list(SEEDS),
        name="fig3",
    )


def preset_fig4() -> ExperimentConfig:
    """Policies against node count with the task count fixed."""
    return ExperimentConfig(
        sim=_base_sim(num_images=6, num_services=6, num_tasks=200),
        policies=list(POLICIES),
        sweep_axis="node_count",
        sweep_values=[3, 4, 5, 6, 7, 8],
        seeds=list(SEEDS),
        name="fig4",
    )


def preset_fig5() -> ExperimentConfig:
    """Policies against task count with the node count fixed."""
    return ExperimentConfig(
        sim=_base_sim(num_nodes=5, num_images=6, num_services=6),
        policies=list(POLICIES),
        sweep_axis="task_count",
        sweep_values=[50, 100, 200, 300, 400],
        seeds=list(SEEDS),
        name="fig5",
    )


PRESETS = {"fig3": preset_fig3, "fig4": preset_fig4, "fig5": preset_fig5}
