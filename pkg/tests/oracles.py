"""Independent reference implementations used by tests."""
import numpy as np


def masked_argmax_oracle(q, mask):
    allowed = [i for i in range(len(q)) if mask[i]]
    if not allowed:
        return -1
    best = max(q[i] for i in allowed)
    return min(i for i in allowed if q[i] == best)


def strict_greater_oracle(q, chosen):
    return [i for i in range(len(q)) if q[i] > q[chosen]]


def lfu_eviction_oracle(records, sizes, incoming_size, usable, size_weighted=True):
    """Repeated brute-force argmin.

    ``records`` is a list of (image_id, frequency) pairs, oldest first. Each
    round recomputes every priority and takes the earliest minimum.
    """
    remaining = list(records)
    used = sum(sizes[m] for m, _ in remaining)
    out = []
    while incoming_size + used > usable:
        pri = [(f * sizes[m] if size_weighted else f) for m, f in remaining]
        k = pri.index(min(pri))
        m, _ = remaining.pop(k)
        used -= sizes[m]
        out.append(m)
    return out


def random_cache_instance(rng, max_images=6, lo=253.07, hi=458.73):
    """Node state for the LFU oracle: cached records plus one absent incoming image."""
    k = int(rng.integers(1, max_images + 1))  # images in the catalog, incl. incoming
    sizes = [float(round(s, 2)) for s in rng.uniform(lo, hi, k)]
    order = rng.permutation(k)
    incoming = int(order[0])
    cached = [int(m) for m in order[1:]]
    # coarse frequencies make priority ties common
    freqs = [int(f) for f in rng.integers(0, 4, len(cached))]
    if rng.random() < 0.2 and cached:
        for i in range(len(cached)):
            sizes[cached[i]] = sizes[cached[0]]
    total = sum(sizes[m] for m in cached)
    capacity = float(round(rng.uniform(sizes[incoming], total + sizes[incoming] + 100.0), 2))
    capacity = max(capacity, total)
    return sizes, list(zip(cached, freqs)), incoming, capacity
