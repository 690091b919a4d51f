"""Domain types for the edge cluster: images, services, nodes, tasks and delays.

Sizes are MB, bandwidths MB/s, times seconds. The three ``check_*`` predicates
are the admission constraints (bandwidth, cpu/memory, storage) evaluated
against a node's live availability.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class Image:
    id: int
    size_mb: float

    def __post_init__(self):
        if self.size_mb <= 0:
            raise ValueError(f"image {self.id}: size_mb must be > 0, got {self.size_mb}")


@dataclass(frozen=True)
class Service:
    id: int
    image_id: int
    start_time_s: float
    work_units: float

    def __post_init__(self):
        if self.start_time_s < 0:
            raise ValueError(f"service {self.id}: negative start time")
        if self.work_units <= 0:
            raise ValueError(f"service {self.id}: work_units must be > 0")


@dataclass(frozen=True)
class Task:
    id: int
    service_id: int
    data_size_mb: float
    location: Tuple[float, float]
    cpu_demand: float
    mem_demand: float
    bandwidth_demand: float
    arrival_slot: int

    def __post_init__(self):
        if min(self.cpu_demand, self.mem_demand, self.bandwidth_demand) <= 0:
            raise ValueError(f"task {self.id}: resource demands must be > 0")
        if self.data_size_mb < 0:
            raise ValueError(f"task {self.id}: negative data size")


@dataclass(frozen=True)
class DelayRecord:
    comm_s: float
    wait_s: float
    comp_s: float
    total_s: float = field(init=False)

    def __post_init__(self):
        if min(self.comm_s, self.wait_s, self.comp_s) < 0:
            raise ValueError(f"negative delay component: {self.comm_s}, {self.wait_s}, {self.comp_s}")
        object.__setattr__(self, "total_s", self.comm_s + self.wait_s + self.comp_s)


@dataclass
class NodeState:
    """Capacities and live availability of one edge node.

    ``cached_images`` is the 0/1 presence vector over all images. Storage is
    shared between cached images and the data of tasks currently resident on
    the node, so ``storage_available`` is always
    ``storage_capacity - cached image sizes - resident_data_mb``.

    ``image_ready_at`` and ``pull_free_at`` track in-flight pulls in absolute
    seconds; pulls on one node are serialized.
    """

    id: int
    location: Tuple[float, float]
    cpu_capacity: float
    mem_capacity: float
    storage_capacity: float
    bandwidth_capacity: float
    cloud_bandwidth: float
    num_images: int
    cpu_available: float = field(default=None)
    mem_available: float = field(default=None)
    storage_available: float = field(default=None)
    bandwidth_available: float = field(default=None)
    cached_images: np.ndarray = field(default=None, repr=False)
    resident_data_mb: float = 0.0
    image_ready_at: np.ndarray = field(default=None, repr=False)
    pull_free_at: float = 0.0

    def __post_init__(self):
        if self.cpu_available is None:
            self.cpu_available = self.cpu_capacity
        if self.mem_available is None:
            self.mem_available = self.mem_capacity
        if self.storage_available is None:
            self.storage_available = self.storage_capacity
        if self.bandwidth_available is None:
            self.bandwidth_available = self.bandwidth_capacity
        if self.cached_images is None:
            self.cached_images = np.zeros(self.num_images, dtype=np.int8)
        if self.image_ready_at is None:
            self.image_ready_at = np.zeros(self.num_images, dtype=np.float64)

    def has_image(self, image_id: int) -> bool:
        return bool(self.cached_images[image_id])

    @property
    def usable_image_storage(self) -> float:
        """Storage left for images once resident task data is reserved."""
        return self.storage_capacity - self.resident_data_mb

    def add_image(self, image: Image) -> None:
        if self.cached_images[image.id]:
            raise ValueError(f"image {image.id} already cached on node {self.id}")
        if image.size_mb > self.storage_available + 1e-9:
            raise ValueError(
                f"image {image.id} ({image.size_mb:.2f} MB) does not fit on node {self.id} "
                f"({self.storage_available:.2f} MB free)"
            )
        self.cached_images[image.id] = 1
        self.storage_available -= image.size_mb

    def remove_image(self, image: Image) -> None:
        if not self.cached_images[image.id]:
            raise ValueError(f"image {image.id} not cached on node {self.id}")
        self.cached_images[image.id] = 0
        self.image_ready_at[image.id] = 0.0
        self.storage_available += image.size_mb

    def admit(self, task: Task) -> None:
        self.cpu_available -= task.cpu_demand
        self.mem_available -= task.mem_demand
        self.bandwidth_available -= task.bandwidth_demand
        self.storage_available -= task.data_size_mb
        self.resident_data_mb += task.data_size_mb

    def release(self, task: Task) -> None:
        # min() guards against float drift pushing availability past capacity
        self.cpu_available = min(self.cpu_capacity, self.cpu_available + task.cpu_demand)
        self.mem_available = min(self.mem_capacity, self.mem_available + task.mem_demand)
        self.bandwidth_available = min(
            self.bandwidth_capacity, self.bandwidth_available + task.bandwidth_demand
        )
        self.resident_data_mb = max(0.0, self.resident_data_mb - task.data_size_mb)
        self.storage_available += task.data_size_mb


def check_bandwidth(node: NodeState, task: Task) -> bool:
    return task.bandwidth_demand <= node.bandwidth_available


def check_compute(node: NodeState, task: Task) -> bool:
    return task.cpu_demand <= node.cpu_available and task.mem_demand <= node.mem_available


def check_storage(node: NodeState, task: Task, pending_image: Optional[Image] = None) -> bool:
    """Task data plus a not-yet-cached image must fit in free storage."""
    need = task.data_size_mb
    if pending_image is not None:
        need += pending_image.size_mb
    return need <= node.storage_available


def distance(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))
