"""State-sharing multi-action Q-network, replay memories and double-DQN training.

Layout of the network::

    node block ──► node MLP ──┬──────────────► scheduling head (|N| values)
    task block ──► task MLP ──┤
                              └──┬───────────► caching head (|N|*|M| values)
    request block ─► req MLP ────┘

Each MLP is two ReLU layers of width ``hidden``; heads are linear. Both heads
read the node and task encodings; only the caching head reads the request
encoding. Caching action ``(m, n)`` has flat index ``n * |M| + m``.

Weights are plain dicts of float64 arrays. ``policy`` is trained, ``target``
is a frozen copy refreshed by :meth:`QNetwork.sync_target`.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from typing import Dict, Optional

import numpy as np

from . import kernels

SCHEDULING = "scheduling"
CACHING = "caching"


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    gamma: float = 0.5
    batch_size: int = 32
    replay_capacity: int = 10_000
    target_update: int = 5  # reward events between target syncs
    caching_update: int = 10  # slots between executed caching actions
    hidden: int = 64
    epsilon: float = 0.5
    epsilon_final: Optional[float] = None  # linear decay target; None keeps epsilon fixed
    seed: int = 0

    def validate(self) -> None:
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1 or self.replay_capacity < self.batch_size:
            raise ValueError("need 1 <= batch_size <= replay_capacity")
        if self.target_update < 1 or self.caching_update < 1 or self.hidden < 1:
            raise ValueError("target_update, caching_update and hidden must be >= 1")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must be in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class StateLayout:
    """Sizes of the three blocks of an encoded state."""

    num_nodes: int
    num_images: int
    num_services: int

    @property
    def node_dim(self) -> int:
        return self.num_nodes * (3 + self.num_images)

    @property
    def task_dim(self) -> int:
        # one-hot service, data size, 2-D location
        return self.num_services + 3

    @property
    def req_dim(self) -> int:
        return self.num_nodes * self.num_images

    @property
    def dim(self) -> int:
        return self.node_dim + self.task_dim + self.req_dim

    def split(self, x):
        a = self.node_dim
        b = a + self.task_dim
        return x[..., :a], x[..., a:b], x[..., b:]

    def num_actions(self, head: str) -> int:
        if head == SCHEDULING:
            return self.num_nodes
        if head == CACHING:
            return self.num_nodes * self.num_images
        raise ValueError(f"unknown head {head!r}")


def init_params(layout: StateLayout, hidden: int, rng) -> Dict[str, np.ndarray]:
    p = {}
    dims = {"node": layout.node_dim, "task": layout.task_dim, "req": layout.req_dim}
    for name, d in dims.items():
        p[f"{name}.w1"] = rng.normal(0.0, np.sqrt(2.0 / d), (d, hidden))
        p[f"{name}.b1"] = np.zeros(hidden)
        p[f"{name}.w2"] = rng.normal(0.0, np.sqrt(2.0 / hidden), (hidden, hidden))
        p[f"{name}.b2"] = np.zeros(hidden)
    for head, width in ((SCHEDULING, 2 * hidden), (CACHING, 3 * hidden)):
        n_out = layout.num_actions(head)
        p[f"{head}.w"] = rng.normal(0.0, np.sqrt(1.0 / width), (width, n_out))
        p[f"{head}.b"] = np.zeros(n_out)
    return p


class QNetwork:
    def __init__(self, layout: StateLayout, hidden: int = 64, rng=None, params=None):
        self.layout = layout
        self.hidden = hidden
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            params = init_params(layout, hidden, rng)
        self.policy: Dict[str, np.ndarray] = params
        self.target: Dict[str, np.ndarray] = {k: v.copy() for k, v in params.items()}

    def _weights(self, which):
        if isinstance(which, dict):
            return which
        if which == "policy":
            return self.policy
        if which == "target":
            return self.target
        raise ValueError(f"unknown weight set {which!r}")

    def _encode(self, p, x, with_req):
        xn, xu, xr = self.layout.split(x)
        acts = {}
        for name, xi in (("node", xn), ("task", xu)) + ((("req", xr),) if with_req else ()):
            h1, h2 = kernels.mlp_forward(
                xi, p[f"{name}.w1"], p[f"{name}.b1"], p[f"{name}.w2"], p[f"{name}.b2"]
            )
            acts[name] = (xi, h1, h2)
        return acts

    def _run(self, p, x, head):
        with_req = head == CACHING
        acts = self._encode(p, x, with_req)
        parts = [acts["node"][2], acts["task"][2]] + ([acts["req"][2]] if with_req else [])
        hcat = np.concatenate(parts, axis=1)
        q = hcat @ p[f"{head}.w"] + p[f"{head}.b"]
        return q, hcat, acts

    def forward(self, state, head: str, weights="policy") -> np.ndarray:
        """Q-values for one state (1-D result) or a batch of states (2-D result)."""
        x = np.asarray(state, dtype=np.float64)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        if x2.shape[1] != self.layout.dim:
            raise ValueError(f"state has {x2.shape[1]} features, network expects {self.layout.dim}")
        q, _, _ = self._run(self._weights(weights), x2, head)
        return q[0] if single else q

    def forward_both(self, state, weights="policy"):
        """Scheduling and caching Q-values for one state, sharing the encoders."""
        x = np.atleast_2d(np.asarray(state, dtype=np.float64))
        p = self._weights(weights)
        acts = self._encode(p, x, True)
        hs = np.concatenate([acts["node"][2], acts["task"][2]], axis=1)
        hc = np.concatenate([hs, acts["req"][2]], axis=1)
        q_s = hs @ p[f"{SCHEDULING}.w"] + p[f"{SCHEDULING}.b"]
        q_c = hc @ p[f"{CACHING}.w"] + p[f"{CACHING}.b"]
        return q_s[0], q_c[0]

    def loss_and_grads(self, x, actions, y, head: str, weights="policy"):
        """Mean squared TD error over the batch and its gradient for every parameter.

        Targets ``y`` are constants. Parameters the head does not touch get
        zero gradients.
        """
        p = self._weights(weights)
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        actions = np.asarray(actions, dtype=np.int64)
        y = np.asarray(y, dtype=np.float64)
        q, hcat, acts = self._run(p, x, head)
        rows = np.arange(x.shape[0])
        err = q[rows, actions] - y
        loss = float(np.mean(err * err))
        dq = np.zeros_like(q)
        dq[rows, actions] = 2.0 * err / x.shape[0]
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        grads[f"{head}.w"] = hcat.T @ dq
        grads[f"{head}.b"] = dq.sum(axis=0)
        dh = dq @ p[f"{head}.w"].T
        h = self.hidden
        for i, name in enumerate(acts):
            xi, h1, h2 = acts[name]
            dw1, db1, dw2, db2 = kernels.mlp_backward(
                xi, h1, h2, p[f"{name}.w2"], np.ascontiguousarray(dh[:, i * h:(i + 1) * h])
            )
            grads[f"{name}.w1"] = dw1
            grads[f"{name}.b1"] = db1
            grads[f"{name}.w2"] = dw2
            grads[f"{name}.b2"] = db2
        return loss, grads

    def apply_gradients(self, grads: Dict[str, np.ndarray], learning_rate: float) -> None:
        for k, g in grads.items():
            self.policy[k] -= learning_rate * g

    def sync_target(self) -> None:
        for k, v in self.policy.items():
            np.copyto(self.target[k], v)

    def save(self, path) -> None:
        meta = {
            "num_nodes": self.layout.num_nodes,
            "num_images": self.layout.num_images,
            "num_services": self.layout.num_services,
            "hidden": self.hidden,
        }
        arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
        for k, v in self.policy.items():
            arrays[f"policy/{k}"] = v
        for k, v in self.target.items():
            arrays[f"target/{k}"] = v
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "QNetwork":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            policy = {k[len("policy/"):]: z[k].copy() for k in z.files if k.startswith("policy/")}
            target = {k[len("target/"):]: z[k].copy() for k in z.files if k.startswith("target/")}
        layout = StateLayout(meta["num_nodes"], meta["num_images"], meta["num_services"])
        net = cls(layout, meta["hidden"], params=policy)
        net.target = target
        return net


def double_dqn_target(r, q_policy_next, q_target_next, gamma, terminal=False) -> float:
    """Policy weights pick the next action, target weights value it."""
    if terminal:
        return float(r)
    a = int(np.argmax(q_policy_next))
    return float(r + gamma * q_target_next[a])


def double_dqn_targets(net: QNetwork, rewards, next_x, dones, gamma, head: str) -> np.ndarray:
    """Vectorized :func:`double_dqn_target` over a batch of transitions."""
    qp = net.forward(next_x, head, "policy")
    qt = net.forward(next_x, head, "target")
    a = np.argmax(qp, axis=1)
    boot = qt[np.arange(len(a)), a]
    return np.where(dones, rewards, rewards + gamma * boot)


class ReplayMemory:
    """FIFO ring of (state, action, reward, next_state, done) transitions."""

    def __init__(self, capacity: int, dim: int):
        self.capacity = capacity
        self.states = np.zeros((capacity, dim))
        self.next_states = np.zeros((capacity, dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0
        self.pushes = 0

    def __len__(self):
        return self._size

    def push(self, state, action, reward, next_state, done=False) -> None:
        i = self._next
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.dones[i] = done
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self.pushes += 1

    def sample(self, batch_size: int, rng):
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.dones[idx])


def train_step(net: QNetwork, d_s: ReplayMemory, d_c: ReplayMemory, cfg: TrainConfig, rng):
    """One SGD step on both heads. Returns ``{head: loss}`` for heads that trained."""
    losses = {}
    total = None
    for head, mem in ((SCHEDULING, d_s), (CACHING, d_c)):
        if len(mem) < cfg.batch_size:
            continue
        s, a, r, s2, done = mem.sample(cfg.batch_size, rng)
        y = double_dqn_targets(net, r, s2, done, cfg.gamma, head)
        loss, grads = net.loss_and_grads(s, a, y, head)
        if not np.isfinite(loss):
            raise FloatingPointError(
                f"non-finite {head} loss {loss}; rewards in [{r.min()}, {r.max()}], "
                f"targets in [{np.min(y)}, {np.max(y)}]"
            )
        losses[head] = loss
        if total is None:
            total = grads
        else:
            for k in total:
                total[k] += grads[k]
    if total is not None:
        net.apply_gradients(total, cfg.learning_rate)
    return losses
