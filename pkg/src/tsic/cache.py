"""Image caching policies driven by per-node LFU frequency records.

Three policies share the same bookkeeping (:class:`LfuMemory`):

* ``ADP``      storage-adaptive, evicts the cached image with minimal
               ``frequency * size``;
* ``ADP-FRQ``  storage-adaptive, evicts by frequency alone;
* ``LFU-<K>``  at most ``K`` records per node, least-frequent dropped first.

Ties on priority go to the least-recently-recorded image. A record is
created with frequency 0 when an image lands on a node and dropped when it
is evicted, so a re-pulled image starts over.
"""
from __future__ import annotations

from collections import OrderedDict
from typing import Dict, List, Sequence

import numpy as np

from . import kernels
from .model import Image, NodeState


class CacheError(Exception):
    pass


class UncacheableImage(CacheError):
    """The incoming image cannot fit even with every other image evicted."""


def priority(f: float, z: float) -> float:
    return f * z


class LfuMemory:
    """Ordered frequency records, one ``OrderedDict`` per node.

    Iteration order is oldest record first; :meth:`touch` moves a record to
    the end, which is what the tie rule relies on.
    """

    def __init__(self, num_nodes: int):
        self.records: List[Dict[int, int]] = [OrderedDict() for _ in range(num_nodes)]

    def __contains__(self, key):
        n, m = key
        return m in self.records[n]

    def frequency(self, node_id: int, image_id: int) -> int:
        return self.records[node_id].get(image_id, 0)

    def images(self, node_id: int) -> List[int]:
        return list(self.records[node_id])

    def record(self, node_id: int, image_id: int, frequency: int = 0) -> None:
        recs = self.records[node_id]
        if image_id in recs:
            raise CacheError(f"duplicate record for image {image_id} on node {node_id}")
        recs[image_id] = frequency

    def forget(self, node_id: int, image_id: int) -> None:
        del self.records[node_id][image_id]

    def touch(self, node_id: int, image_id: int) -> int:
        recs = self.records[node_id]
        if image_id not in recs:
            raise CacheError(f"image {image_id} is not cached on node {node_id}")
        recs[image_id] += 1
        recs.move_to_end(image_id)
        return recs[image_id]


def touch(node_id: int, image_id: int, lfu: LfuMemory) -> LfuMemory:
    lfu.touch(node_id, image_id)
    return lfu


def _victim(candidates, lfu, node_id, sizes, size_weighted):
    if not candidates:
        raise CacheError(f"node {node_id} has no cached image to evict")
    freq = np.array([lfu.frequency(node_id, m) for m in candidates], dtype=np.float64)
    size = np.array([sizes[m] for m in candidates], dtype=np.float64)
    return candidates[kernels.argmin_priority(freq, size, size_weighted)]


def _sizes(images) -> Sequence[float]:
    return [im.size_mb for im in images]


def select_victim(
    node: NodeState, lfu: LfuMemory, images: Sequence[Image], size_weighted: bool = True
) -> int:
    """Cached image on ``node`` with minimal priority."""
    return _victim(lfu.images(node.id), lfu, node.id, _sizes(images), size_weighted)


def _evict(node, lfu, images, victims):
    for m in victims:
        node.remove_image(images[m])
        lfu.forget(node.id, m)


def _pull(node, lfu, incoming):
    node.add_image(incoming)
    lfu.record(node.id, incoming.id)


def ensure_capacity(
    node: NodeState,
    lfu: LfuMemory,
    incoming: Image,
    images: Sequence[Image],
    size_weighted: bool = True,
    reserve_mb: float = 0.0,
) -> List[int]:
    """Make room for ``incoming`` by evicting minimal-priority images, then cache it.

    ``reserve_mb`` is storage held back for task data that is about to land on
    the node. Returns evicted image ids in eviction order.
    """
    if node.has_image(incoming.id):
        return []
    usable = node.usable_image_storage - reserve_mb
    if incoming.size_mb > usable:
        raise UncacheableImage(
            f"image {incoming.id} ({incoming.size_mb:.2f} MB) exceeds usable storage "
            f"{usable:.2f} MB on node {node.id}"
        )
    sizes = _sizes(images)
    cached = lfu.images(node.id)
    used = sum(sizes[m] for m in cached)
    victims = []
    # victims are removed logically here and deleted together afterwards
    while incoming.size_mb + used > usable:
        m = _victim(cached, lfu, node.id, sizes, size_weighted)
        cached.remove(m)
        used -= sizes[m]
        victims.append(m)
    _evict(node, lfu, images, victims)
    _pull(node, lfu, incoming)
    return victims


class CachePolicy:
    """Strategy object used by the simulator when an image must land on a node."""

    name = "base"

    def ensure_capacity(self, node, lfu, incoming, images, reserve_mb=0.0) -> List[int]:
        raise NotImplementedError


class AdaptiveLfu(CachePolicy):
    def __init__(self, size_weighted: bool = True):
        self.size_weighted = size_weighted
        self.name = "ADP" if size_weighted else "ADP-FRQ"

    def ensure_capacity(self, node, lfu, incoming, images, reserve_mb=0.0):
        return ensure_capacity(
            node, lfu, incoming, images, size_weighted=self.size_weighted, reserve_mb=reserve_mb
        )


class FixedSizeLfu(CachePolicy):
    """LFU with a fixed number of records per node.

    The record cap applies regardless of free storage. Storage still has to
    hold the images, so a frequency-ordered eviction also runs when the
    capped set does not fit.
    """

    def __init__(self, size: int):
        if size < 1:
            raise ValueError("fixed LFU size must be >= 1")
        self.size = size
        self.name = f"LFU-{size}"

    def ensure_capacity(self, node, lfu, incoming, images, reserve_mb=0.0):
        if node.has_image(incoming.id):
            return []
        usable = node.usable_image_storage - reserve_mb
        if incoming.size_mb > usable:
            raise UncacheableImage(
                f"image {incoming.id} exceeds usable storage {usable:.2f} MB on node {node.id}"
            )
        sizes = _sizes(images)
        cached = lfu.images(node.id)
        used = sum(sizes[m] for m in cached)
        victims = []
        while len(cached) >= self.size or incoming.size_mb + used > usable:
            m = _victim(cached, lfu, node.id, sizes, False)
            cached.remove(m)
            used -= sizes[m]
            victims.append(m)
        _evict(node, lfu, images, victims)
        _pull(node, lfu, incoming)
        return victims


def make_cache_policy(name: str) -> CachePolicy:
    """Parse ``ADP``, ``ADP-FRQ`` or ``LFU-<K>``."""
    if name == "ADP":
        return AdaptiveLfu(size_weighted=True)
    if name == "ADP-FRQ":
        return AdaptiveLfu(size_weighted=False)
    if name.startswith("LFU-"):
        try:
            k = int(name[4:])
        except ValueError:
            raise ValueError(f"bad fixed LFU size in {name!r}") from None
        return FixedSizeLfu(k)
    raise ValueError(f"unknown cache policy {name!r}")
