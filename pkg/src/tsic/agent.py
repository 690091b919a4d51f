"""Scheduling policies and the episode driver.

:class:`TsicAgent` makes a scheduling and a caching decision per task from
one shared Q-network, learns from asynchronous completion events and
executes its latest caching decision every ``caching_update`` slots.
:class:`GreedyPolicy` and :class:`RoundRobinPolicy` are the baselines.

:func:`run_episode` drives any policy over a task list on a simulator.
"""
from __future__ import annotations

import bisect
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .model import DelayRecord, NodeState, Task
from .qnet import CACHING, SCHEDULING, QNetwork, ReplayMemory, StateLayout, TrainConfig, train_step
from .sim import SimEvent, Simulator


@dataclass
class EncodedState:
    node: np.ndarray
    task: np.ndarray
    request: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.node, self.task, self.request])


def encode_state(
    nodes: Sequence[NodeState],
    task: Task,
    request_counts: np.ndarray,
    num_services: int,
    max_data_mb: float,
) -> EncodedState:
    """Normalized observation.

    Node block: per node ``[cpu, mem, storage]`` availability over capacity
    followed by the image presence bits. Task block: one-hot service, data
    size over ``max_data_mb``, location. Request block: the node x image
    request counts divided by their total.
    """
    num_images = len(nodes[0].cached_images)
    node = np.empty((len(nodes), 3 + num_images))
    for i, n in enumerate(nodes):
        node[i, 0] = n.cpu_available / n.cpu_capacity
        node[i, 1] = n.mem_available / n.mem_capacity
        node[i, 2] = n.storage_available / n.storage_capacity
        node[i, 3:] = n.cached_images
    np.clip(node[:, :3], 0.0, 1.0, out=node[:, :3])
    tvec = np.zeros(num_services + 3)
    tvec[task.service_id] = 1.0
    tvec[num_services] = min(1.0, task.data_size_mb / max_data_mb)
    tvec[num_services + 1:] = task.location
    counts = np.asarray(request_counts, dtype=np.float64).ravel()
    total = counts.sum()
    req = counts / total if total > 0 else counts.copy()
    return EncodedState(node.ravel(), tvec, req)


class RequestWindow:
    """Requests per (node, image) placed during the last ``window`` slots."""

    def __init__(self, num_nodes: int, num_images: int, window: int):
        self.counts = np.zeros((num_nodes, num_images))
        self.window = window
        self._log: deque = deque()

    def add(self, slot: int, node: int, image: int) -> None:
        self._log.append((slot, node, image))
        self.counts[node, image] += 1

    def at(self, slot: int) -> np.ndarray:
        while self._log and self._log[0][0] <= slot - self.window:
            _, n, m = self._log.popleft()
            self.counts[n, m] -= 1
        return self.counts


@dataclass
class SchedulingChoice:
    node: int
    unscheduled: np.ndarray  # nodes with strictly larger Q than the chosen one
    masked: bool  # chosen by masked argmax (not by exploration or fallback)
    eps_draw: float


def select_scheduling_action(q, image_mask, epsilon: float, rng) -> SchedulingChoice:
    """Epsilon-greedy over nodes; the greedy branch only considers nodes holding the image.

    If no node holds the image the choice is uniform over all nodes.
    """
    q = np.asarray(q, dtype=np.float64)
    n = q.shape[0]
    if n == 0:
        raise ValueError("cannot schedule on an empty cluster")
    draw = float(rng.random())
    masked = False
    if draw < epsilon:
        node = int(rng.integers(n))
    else:
        node = kernels.masked_argmax(q, np.asarray(image_mask, dtype=np.int8))
        if node < 0:
            node = int(rng.integers(n))
        else:
            masked = True
    return SchedulingChoice(node, np.flatnonzero(q > q[node]), masked, draw)


def select_caching_action(q, epsilon: float, rng, num_images: int) -> Tuple[int, int]:
    """Epsilon-greedy over flat (node, image) pairs. Returns ``(image, node)``."""
    q = np.asarray(q)
    if rng.random() < epsilon:
        idx = int(rng.integers(q.shape[0]))
    else:
        idx = int(np.argmax(q))
    return idx % num_images, idx // num_images


def scheduling_reward(delay: DelayRecord) -> float:
    return -delay.total_s


def build_popularity_matrix(chosen: int, unscheduled, image_id: int, num_nodes: int, num_images: int):
    """Ones at ``(n, image_id)`` for the chosen node and every better-valued unscheduled node."""
    g = np.zeros((num_nodes, num_images), dtype=np.int8)
    g[chosen, image_id] = 1
    g[np.asarray(unscheduled, dtype=np.int64), image_id] = 1
    return g


def caching_reward(matrices, pair: Tuple[int, int]) -> float:
    """Sum of ``g[n, m]`` over the popularity matrices of the window; ``pair = (m, n)``."""
    m, n = pair
    return float(sum(int(g[n, m]) for g in matrices))


def baseline_grd(nodes: Sequence[NodeState], task: Optional[Task] = None) -> int:
    """Node with the most available cpu, lowest id on ties."""
    return int(np.argmax([n.cpu_available for n in nodes]))


def baseline_rr(counter: int, num_nodes: int) -> Tuple[int, int]:
    """Returns ``(node, next_counter)``."""
    return counter % num_nodes, counter + 1


class Policy:
    name = "base"

    def begin_episode(self, sim: Simulator, tasks: Sequence[Task]) -> None:
        pass

    def schedule(self, sim: Simulator, task: Task, slot: int) -> SchedulingChoice:
        raise NotImplementedError

    def on_reward(self, sim: Simulator, event: SimEvent, slot: int, terminal: bool) -> None:
        pass

    def end_slot(self, sim: Simulator, slot: int) -> None:
        pass


class GreedyPolicy(Policy):
    name = "GRD"

    def schedule(self, sim, task, slot):
        return SchedulingChoice(baseline_grd(sim.nodes, task), np.empty(0, np.int64), False, float("nan"))


class RoundRobinPolicy(Policy):
    name = "RR"

    def __init__(self):
        self.counter = 0

    def begin_episode(self, sim, tasks):
        self.counter = 0

    def schedule(self, sim, task, slot):
        node, self.counter = baseline_rr(self.counter, sim.num_nodes)
        return SchedulingChoice(node, np.empty(0, np.int64), False, float("nan"))


class TsicAgent(Policy):
    """Joint scheduling and caching agent.

    Per request it stashes ``(state, action)`` pairs keyed by task id; the
    matching reward event pops them and pushes full transitions to the
    scheduling and caching replay memories, then trains. With ``learn`` off
    the agent only acts.
    """

    name = "TSIC"

    def __init__(self, layout: StateLayout, cfg: TrainConfig, seed: int = 0,
                 net: Optional[QNetwork] = None, max_data_mb: float = 3.0):
        cfg.validate()
        self.layout = layout
        self.cfg = cfg
        self.rng = np.random.default_rng((cfg.seed, seed))
        self.net = net if net is not None else QNetwork(layout, cfg.hidden, rng=self.rng)
        self.d_s = ReplayMemory(cfg.replay_capacity, layout.dim)
        self.d_c = ReplayMemory(cfg.replay_capacity, layout.dim)
        self.max_data_mb = max_data_mb
        self.epsilon = cfg.epsilon
        self.learn = True
        self.reward_events = 0
        self.target_syncs = 0
        self.caching_executions: List[int] = []
        self.losses: List[Dict[str, float]] = []
        self._reset_episode()

    def _reset_episode(self):
        self.tmp_s: Dict[int, Tuple[np.ndarray, int]] = {}
        self.tmp_c: Dict[int, Tuple[np.ndarray, int, int]] = {}
        self.window = RequestWindow(self.layout.num_nodes, self.layout.num_images, self.cfg.caching_update)
        self._g_slots: List[int] = []
        self._g: List[np.ndarray] = []
        self.latest_caching: Optional[Tuple[int, int]] = None
        self._last_task: Optional[Task] = None

    def begin_episode(self, sim, tasks):
        self._reset_episode()

    def encode(self, sim: Simulator, task: Task, slot: int) -> np.ndarray:
        return encode_state(
            sim.nodes, task, self.window.at(slot), self.layout.num_services, self.max_data_mb
        ).vector()

    def schedule(self, sim, task, slot):
        x = self.encode(sim, task, slot)
        q_s, q_c = self.net.forward_both(x)
        choice = select_scheduling_action(q_s, sim.image_mask(task), self.epsilon, self.rng)
        m, n = select_caching_action(q_c, self.epsilon, self.rng, self.layout.num_images)
        image = sim.image_of(task).id
        self._g_slots.append(slot)
        self._g.append(build_popularity_matrix(
            choice.node, choice.unscheduled, image, self.layout.num_nodes, self.layout.num_images))
        self.tmp_s[task.id] = (x, choice.node)
        self.tmp_c[task.id] = (x, n * self.layout.num_images + m, slot)
        self.latest_caching = (m, n)
        self.window.add(slot, choice.node, image)
        self._last_task = task
        return choice

    def caching_window(self, start_slot: int) -> List[np.ndarray]:
        """Popularity matrices recorded in ``[start_slot, start_slot + caching_update)``."""
        lo = bisect.bisect_left(self._g_slots, start_slot)
        hi = bisect.bisect_left(self._g_slots, start_slot + self.cfg.caching_update)
        return self._g[lo:hi]

    def on_reward(self, sim, event, slot, terminal):
        try:
            x, a_s = self.tmp_s.pop(event.task_id)
            xc, a_c, t0 = self.tmp_c.pop(event.task_id)
        except KeyError:
            raise RuntimeError(f"reward for task {event.task_id} without a stashed decision") from None
        if not self.learn:
            return
        r_s = -event.penalty_s if event.failed else scheduling_reward(event.payload)
        m, n = a_c % self.layout.num_images, a_c // self.layout.num_images
        r_c = caching_reward(self.caching_window(t0), (m, n))
        x_next = self.encode(sim, self._last_task, slot)
        self.d_s.push(x, a_s, r_s, x_next, terminal)
        self.d_c.push(xc, a_c, r_c, x_next, terminal)
        losses = train_step(self.net, self.d_s, self.d_c, self.cfg, self.rng)
        if losses:
            self.losses.append(losses)
        self.reward_events += 1
        if self.reward_events % self.cfg.target_update == 0:
            self.net.sync_target()
            self.target_syncs += 1

    def end_slot(self, sim, slot):
        if slot > 0 and slot % self.cfg.caching_update == 0 and self.latest_caching is not None:
            m, n = self.latest_caching
            sim.cache_image(n, m, slot)
            self.caching_executions.append(slot)


@dataclass
class Decision:
    slot: int
    task_id: int
    node: int
    masked: bool
    eps_draw: float
    reward: float = float("nan")
    failed: bool = False


@dataclass
class EpisodeResult:
    delays: Dict[int, DelayRecord] = field(default_factory=dict)
    failures: Dict[int, float] = field(default_factory=dict)  # task id -> penalty
    decisions: List[Decision] = field(default_factory=list)
    events: List[SimEvent] = field(default_factory=list)

    def mean_delays(self) -> Tuple[float, float, float, float]:
        if not self.delays:
            return (0.0, 0.0, 0.0, 0.0)
        arr = np.array([(d.comm_s, d.wait_s, d.comp_s, d.total_s) for d in self.delays.values()])
        return tuple(float(v) for v in arr.mean(axis=0))


def run_episode(sim: Simulator, tasks: Sequence[Task], policy: Policy, keep_events=False) -> EpisodeResult:
    """Play ``tasks`` through ``sim`` under ``policy`` until every task has a reward event."""
    tasks = sorted(tasks, key=lambda t: (t.arrival_slot, t.id))
    res = EpisodeResult()
    policy.begin_episode(sim, tasks)
    if not tasks:
        return res
    last_id = tasks[-1].id
    by_task: Dict[int, Decision] = {}
    i = 0
    slot = 0
    while i < len(tasks) or sim.pending():
        for ev in sim.pop_due(slot):
            policy.on_reward(sim, ev, slot, ev.task_id == last_id)
            dec = by_task[ev.task_id]
            if ev.failed:
                res.failures[ev.task_id] = ev.penalty_s
                dec.reward, dec.failed = -ev.penalty_s, True
            else:
                res.delays[ev.task_id] = ev.payload
                dec.reward = scheduling_reward(ev.payload)
            if keep_events:
                res.events.append(ev)
        while i < len(tasks) and tasks[i].arrival_slot == slot:
            task = tasks[i]
            choice = policy.schedule(sim, task, slot)
            evs = sim.step(choice.node, task)
            dec = Decision(slot, task.id, choice.node, choice.masked, choice.eps_draw)
            by_task[task.id] = dec
            res.decisions.append(dec)
            if keep_events:
                res.events.append(evs[0])
            i += 1
        policy.end_slot(sim, slot)
        slot += 1
    return res
