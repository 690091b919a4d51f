"""Slotted simulator of an edge cluster serving containerized tasks.

A task placed on a node pays three delays:

* communication: ``data / effective_bandwidth + base_latency`` where the link
  rate degrades linearly with user-node distance;
* waiting: image pull time (if the image is missing or still in flight)
  plus the service start time; pulls on a node are serialized;
* computation: ``work_units / cpu_share`` where the share is the task's cpu
  demand plus a fraction of whatever else is idle on the node.

Admitted tasks hold their resources until the slot in which their reward
event fires, ``arrival + ceil(total / slot_duration)``. A placement that
violates a resource constraint is rejected and charged a penalty delay.
"""
from __future__ import annotations

import csv
import heapq
import math
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .cache import AdaptiveLfu, CachePolicy, LfuMemory, UncacheableImage
from .model import (
    DelayRecord,
    Image,
    NodeState,
    Service,
    Task,
    check_bandwidth,
    check_compute,
    check_storage,
    distance,
)

Range = Tuple[float, float]


@dataclass
class SimConfig:
    num_nodes: int = 5
    num_services: int = 6
    num_images: int = 6
    num_tasks: int = 200
    slot_duration_s: float = 1.0
    base_latency_s: float = 0.05
    distance_bandwidth_factor: float = 0.5
    arrival_rate: float = 0.5  # tasks per slot
    cpu_capacity: Range = (2.0, 4.0)
    mem_capacity: Range = (768.0, 1024.0)
    # cycled over nodes; 1:2:4 mirrors 8/16/32 GB cards scaled down
    storage_tiers: Sequence[float] = (2600.0, 5200.0, 10400.0)
    bandwidth_capacity: Range = (16.0, 24.0)
    cloud_bandwidth: Range = (20.0, 40.0)
    image_size_mb: Range = (253.07, 458.73)
    start_time_s: Range = (0.5, 1.5)
    work_units: Range = (1.0, 3.0)
    task_data_mb: Range = (0.5, 3.0)
    task_cpu: Range = (0.5, 1.0)
    task_mem: Range = (64.0, 192.0)
    task_bandwidth: Range = (2.0, 6.0)
    popularity: Optional[Sequence[float]] = None  # explicit weights; Zipf otherwise
    zipf_exponent: float = 1.0
    initial_images_per_node: int = 2
    cpu_burst_fraction: float = 0.5
    penalty_multiplier: float = 2.0
    penalty_floor_s: float = 30.0
    rng_seed: int = 0

    def validate(self) -> None:
        for name in ("num_nodes", "num_services", "num_images"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.num_tasks < 0:
            raise ValueError("num_tasks must be >= 0")
        if self.slot_duration_s <= 0:
            raise ValueError("slot_duration_s must be > 0")
        if self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be > 0")
        if not 0 <= self.distance_bandwidth_factor * math.sqrt(2) < 1:
            raise ValueError("distance_bandwidth_factor must keep links positive over the unit square")
        if not self.storage_tiers:
            raise ValueError("storage_tiers must not be empty")
        w = self.popularity_weights()
        if len(w) != self.num_services or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("popularity must be num_services non-negative weights summing to 1")

    def popularity_weights(self) -> np.ndarray:
        if self.popularity is not None:
            return np.asarray(self.popularity, dtype=np.float64)
        ranks = np.arange(1, self.num_services + 1, dtype=np.float64)
        w = ranks ** -self.zipf_exponent
        return w / w.sum()

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown SimConfig keys: {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)


@dataclass
class SimEvent:
    """``request`` when a task is placed, ``reward`` when it completes or fails.

    A failed placement produces a ``reward`` event with ``failed=True``, no
    DelayRecord payload and the charged ``penalty_s``.
    """

    kind: str
    task_id: int
    slot: int
    payload: object = None
    node_id: int = -1
    failed: bool = False
    penalty_s: float = 0.0
    reason: str = ""


class InfeasibleLink(ValueError):
    pass


def effective_bandwidth(task: Task, node: NodeState, distance_factor: float) -> float:
    scale = 1.0 - distance_factor * distance(task.location, node.location)
    return min(task.bandwidth_demand, node.bandwidth_available) * scale


def communication_delay(
    task: Task, node: NodeState, base_latency_s: float, distance_factor: float
) -> float:
    bw = effective_bandwidth(task, node, distance_factor)
    if bw <= 0:
        raise InfeasibleLink(f"task {task.id} -> node {node.id}: effective bandwidth {bw}")
    return task.data_size_mb / bw + base_latency_s


def pull_delay(image: Image, node: NodeState) -> float:
    return image.size_mb / node.cloud_bandwidth


def cpu_share(task: Task, node: NodeState, burst_fraction: float) -> float:
    """CPU rate a task gets on admission: its demand plus part of the idle rest."""
    idle = max(0.0, node.cpu_available - task.cpu_demand)
    return task.cpu_demand + burst_fraction * idle


def computation_delay(work_units: float, share: float) -> float:
    if share <= 0:
        raise ValueError(f"computation needs a positive cpu share, got {share}")
    return work_units / share


def _uniform(rng, r: Range, size=None):
    return rng.uniform(r[0], r[1], size)


def grid_locations(n: int) -> List[Tuple[float, float]]:
    """Evenly spread ``n`` points on the unit square, row by row."""
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    return [((i % cols + 0.5) / cols, (i // cols + 0.5) / rows) for i in range(n)]


def build_catalog(cfg: SimConfig) -> Tuple[List[Image], List[Service]]:
    rng = np.random.default_rng((cfg.rng_seed, 0))
    sizes = _uniform(rng, cfg.image_size_mb, cfg.num_images)
    images = [Image(m, float(round(s, 2))) for m, s in enumerate(sizes)]
    starts = _uniform(rng, cfg.start_time_s, cfg.num_services)
    work = _uniform(rng, cfg.work_units, cfg.num_services)
    services = [
        Service(v, v % cfg.num_images, float(starts[v]), float(work[v]))
        for v in range(cfg.num_services)
    ]
    return images, services


def build_nodes(cfg: SimConfig) -> List[NodeState]:
    rng = np.random.default_rng((cfg.rng_seed, 1))
    locs = grid_locations(cfg.num_nodes)
    nodes = []
    for n in range(cfg.num_nodes):
        nodes.append(
            NodeState(
                id=n,
                location=locs[n],
                cpu_capacity=float(_uniform(rng, cfg.cpu_capacity)),
                mem_capacity=float(_uniform(rng, cfg.mem_capacity)),
                storage_capacity=float(cfg.storage_tiers[n % len(cfg.storage_tiers)]),
                bandwidth_capacity=float(_uniform(rng, cfg.bandwidth_capacity)),
                cloud_bandwidth=float(_uniform(rng, cfg.cloud_bandwidth)),
                num_images=cfg.num_images,
            )
        )
    return nodes


def generate_workload(cfg: SimConfig, stream: int = 0) -> List[Task]:
    """Seeded task stream.

    ``stream`` selects an independent workload for the same cluster seed;
    the harness evaluates on stream 0 and trains on streams 1, 2, ...
    """
    n = cfg.num_tasks
    if n == 0:
        return []
    rng = np.random.default_rng((cfg.rng_seed, 2, stream))
    gaps = rng.exponential(1.0 / cfg.arrival_rate, n)
    slots = np.floor(np.cumsum(gaps)).astype(np.int64)
    svc = rng.choice(cfg.num_services, size=n, p=cfg.popularity_weights())
    xy = rng.uniform(0.0, 1.0, (n, 2))
    data = _uniform(rng, cfg.task_data_mb, n)
    cpu = _uniform(rng, cfg.task_cpu, n)
    mem = _uniform(rng, cfg.task_mem, n)
    bw = _uniform(rng, cfg.task_bandwidth, n)
    return [
        Task(
            id=i,
            service_id=int(svc[i]),
            data_size_mb=float(data[i]),
            location=(float(xy[i, 0]), float(xy[i, 1])),
            cpu_demand=float(cpu[i]),
            mem_demand=float(mem[i]),
            bandwidth_demand=float(bw[i]),
            arrival_slot=int(slots[i]),
        )
        for i in range(n)
    ]


TRACE_FIELDS = ("task_id", "arrival_slot", "service_id", "data_mb", "cpu", "mem", "bw", "x", "y")


def write_workload(tasks: Sequence[Task], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_FIELDS)
        for t in tasks:
            w.writerow(
                [t.id, t.arrival_slot, t.service_id, repr(t.data_size_mb), repr(t.cpu_demand),
                 repr(t.mem_demand), repr(t.bandwidth_demand), repr(t.location[0]),
                 repr(t.location[1])]
            )


def read_workload(path) -> List[Task]:
    tasks = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0] == TRACE_FIELDS[0]:
                continue
            if len(row) != len(TRACE_FIELDS):
                raise ValueError(f"workload line has {len(row)} fields, expected {len(TRACE_FIELDS)}")
            tid, slot, svc, data, cpu, mem, bw, x, y = row
            tasks.append(
                Task(int(tid), int(svc), float(data), (float(x), float(y)), float(cpu),
                     float(mem), float(bw), int(slot))
            )
    return tasks


@dataclass
class _Running:
    task: Task
    node_id: int


class Simulator:
    """One cluster instance. Single-threaded; all randomness comes from the config seed."""

    def __init__(self, cfg: SimConfig, cache_policy: Optional[CachePolicy] = None):
        cfg.validate()
        self.cfg = cfg
        self.cache_policy = cache_policy or AdaptiveLfu()
        self.images, self.services = build_catalog(cfg)
        self.nodes = build_nodes(cfg)
        self.lfu = LfuMemory(cfg.num_nodes)
        self.worst_delay_s = 0.0
        self.pulls = 0
        self.evictions = 0
        self.failures = 0
        self._queue: list = []
        self._seq = 0
        self._running: dict = {}
        self._seed_images()

    def _seed_images(self):
        rng = np.random.default_rng((self.cfg.rng_seed, 3))
        k = min(self.cfg.initial_images_per_node, self.cfg.num_images)
        for node in self.nodes:
            for m in rng.permutation(self.cfg.num_images)[:k]:
                img = self.images[int(m)]
                if img.size_mb <= node.storage_available:
                    node.add_image(img)
                    self.lfu.record(node.id, img.id)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def image_of(self, task: Task) -> Image:
        return self.images[self.services[task.service_id].image_id]

    def image_mask(self, task: Task) -> np.ndarray:
        """Per-node presence of the task's image."""
        m = self.services[task.service_id].image_id
        return np.array([node.cached_images[m] for node in self.nodes], dtype=np.int8)

    def now_s(self, slot: int) -> float:
        return slot * self.cfg.slot_duration_s

    def _pull(self, node: NodeState, image: Image, now_s: float, reserve_mb: float):
        """Evict as needed and start a pull. Returns (seconds until ready, evicted ids)."""
        evicted = self.cache_policy.ensure_capacity(
            node, self.lfu, image, self.images, reserve_mb=reserve_mb
        )
        self.evictions += len(evicted)
        start = max(now_s, node.pull_free_at)
        ready = start + pull_delay(image, node)
        node.pull_free_at = ready
        node.image_ready_at[image.id] = ready
        self.pulls += 1
        return ready - now_s, evicted

    def waiting_delay(self, task: Task, node_id: int, reserve_mb: float = 0.0) -> float:
        """Pull (if needed) plus start time. Mutates the node's cache."""
        node = self.nodes[node_id]
        image = self.image_of(task)
        now = self.now_s(task.arrival_slot)
        if node.has_image(image.id):
            pull = max(0.0, node.image_ready_at[image.id] - now)
        else:
            pull, _ = self._pull(node, image, now, reserve_mb)
        return pull + self.services[task.service_id].start_time_s

    def cache_image(self, node_id: int, image_id: int, slot: int) -> Optional[List[int]]:
        """Execute a caching decision. Returns evicted ids, or None if the image cannot fit."""
        node = self.nodes[node_id]
        image = self.images[image_id]
        evicted: List[int] = []
        if not node.has_image(image_id):
            try:
                _, evicted = self._pull(node, image, self.now_s(slot), 0.0)
            except UncacheableImage:
                return None
        self.lfu.touch(node_id, image_id)
        return evicted

    def _infeasible_reason(self, node: NodeState, task: Task) -> str:
        if not check_bandwidth(node, task):
            return "bandwidth"
        if not check_compute(node, task):
            return "compute"
        image = self.image_of(task)
        if node.has_image(image.id):
            if not check_storage(node, task):
                return "storage"
        elif task.data_size_mb + image.size_mb > node.usable_image_storage:
            return "storage"
        return ""

    def penalty_s(self) -> float:
        base = self.worst_delay_s if self.worst_delay_s > 0 else self.cfg.penalty_floor_s
        return float(self.cfg.penalty_multiplier * base)

    def _fail(self, task, node_id, reason) -> SimEvent:
        self.failures += 1
        ev = SimEvent("reward", task.id, task.arrival_slot + 1, None, node_id,
                      failed=True, penalty_s=self.penalty_s(), reason=reason)
        self._push(ev)
        return ev

    def _push(self, ev: SimEvent):
        heapq.heappush(self._queue, (ev.slot, self._seq, ev))
        self._seq += 1

    def step(self, node_id: int, task: Task) -> List[SimEvent]:
        """Place ``task`` on ``node_id``. Returns the request event and the future reward event."""
        if not 0 <= node_id < len(self.nodes):
            raise IndexError(f"unknown node id {node_id}")
        node = self.nodes[node_id]
        request = SimEvent("request", task.id, task.arrival_slot, task, node_id)
        reason = self._infeasible_reason(node, task)
        if reason:
            return [request, self._fail(task, node_id, reason)]
        cfg = self.cfg
        comm = communication_delay(task, node, cfg.base_latency_s, cfg.distance_bandwidth_factor)
        share = cpu_share(task, node, cfg.cpu_burst_fraction)
        comp = computation_delay(self.services[task.service_id].work_units, share)
        try:
            wait = self.waiting_delay(task, node_id, reserve_mb=task.data_size_mb)
        except UncacheableImage:
            return [request, self._fail(task, node_id, "uncacheable")]
        self.lfu.touch(node_id, self.image_of(task).id)
        node.admit(task)
        delay = DelayRecord(comm, wait, comp)
        self.worst_delay_s = max(self.worst_delay_s, delay.total_s)
        done = task.arrival_slot + math.ceil(delay.total_s / cfg.slot_duration_s)
        self._running[task.id] = _Running(task, node_id)
        reward = SimEvent("reward", task.id, done, delay, node_id)
        self._push(reward)
        return [request, reward]

    def pop_due(self, slot: int) -> List[SimEvent]:
        """Reward events due at or before ``slot``; releases the resources they held."""
        out = []
        while self._queue and self._queue[0][0] <= slot:
            _, _, ev = heapq.heappop(self._queue)
            run = self._running.pop(ev.task_id, None)
            if run is not None:
                self.nodes[run.node_id].release(run.task)
            out.append(ev)
        return out

    def pending(self) -> int:
        return len(self._queue)

    def running_tasks(self) -> List[Tuple[Task, int]]:
        return [(r.task, r.node_id) for r in self._running.values()]
