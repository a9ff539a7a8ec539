"""Deep Q-learning over the removal tree: replay memory, TD loss, training loop,
and greedy policy evaluation."""

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .datagen import GenSpec, generate
from .errors import ContractError, SolverError
from .network import NetworkParams, backward_batch, encode_state, forward, forward_batch, select_action
from .model import MODEL_DIMS
from .search import apply_action, initial_state, is_goal, rollout
from .simplex import LpWorkspace

log = logging.getLogger(__name__)

HUBER_DELTA = 1.0


@dataclass
class TrainConfig:
    episodes: int = 1000
    n_points: int = 30
    outlier_lo: float = 0.01
    outlier_hi: float = 0.40
    beta: float = 0.99
    lr: float = 1e-3
    batch_size: int = 64
    eps_start: float = 0.9
    eps_end: float = 0.05
    eps_decay: float = 2000.0
    replay_capacity: int = 10_000
    target_sync: int = 500
    warmup: int = 500
    seed: int = 0
    model_kind: str = "line2d"
    epsilon: float = 0.1
    k: int = 10
    edge_dims: tuple = (64, 64)
    global_dim: int = 64
    mlp_dims: tuple = (128, 64)

    def __post_init__(self):
        self.edge_dims = tuple(int(x) for x in self.edge_dims)
        self.mlp_dims = tuple(int(x) for x in self.mlp_dims)
        if not 0 < self.outlier_lo <= self.outlier_hi < 1:
            raise ContractError("outlier range must satisfy 0 < lo <= hi < 1")
        if not 0 < self.beta < 1:
            raise ContractError("discount beta must lie in (0, 1)")
        if self.model_kind not in MODEL_DIMS:
            raise ContractError(f"unknown model kind {self.model_kind!r}")
        if self.episodes < 0 or self.batch_size < 1 or self.replay_capacity < 1:
            raise ContractError("episodes, batch size and capacity must be positive")

    def to_dict(self):
        d = asdict(self)
        d["edge_dims"] = list(self.edge_dims)
        d["mlp_dims"] = list(self.mlp_dims)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def epsilon_at(self, step):
        """Exploration rate after ``step`` environment steps."""
        return self.eps_end + (self.eps_start - self.eps_end) * math.exp(-step / self.eps_decay)

    def feature_dim(self):
        m = MODEL_DIMS[self.model_kind] + 1 if self.model_kind != "fundamental_linearized" else 4
        return m + 2

    def init_params(self):
        return NetworkParams.init(self.feature_dim(), k=self.k, edge_dims=self.edge_dims,
                                  global_dim=self.global_dim, mlp_dims=self.mlp_dims,
                                  seed=self.seed)


@dataclass
class Transition:
    s: object
    a: int
    s_next: object
    r: int
    terminal: bool


@dataclass
class Checkpoint:
    params: NetworkParams
    config: TrainConfig
    episode: int = 0
    stats: dict = field(default_factory=dict)


def reward(next_state, epsilon):
    return 0 if next_state.fit.gamma <= epsilon else -1


class ReplayMemory:
    """FIFO ring buffer of transitions stored as dense arrays."""

    def __init__(self, capacity):
        self.capacity = int(capacity)
        self.size = 0
        self.pos = 0
        self.arrays = None

    def _alloc(self, N, F):
        C = self.capacity
        self.arrays = {
            "s": np.zeros((C, N, F)),
            "a": np.zeros(C, dtype=np.int64),
            "s2": np.zeros((C, N, F)),
            "mask2": np.zeros((C, N), dtype=bool),
            "r": np.zeros(C),
            "term": np.zeros(C, dtype=bool),
        }

    def __len__(self):
        return self.size

    def push(self, t):
        x = t.s.inputs
        if self.arrays is None:
            self._alloc(*x.shape)
        A = self.arrays
        i = self.pos
        A["s"][i] = x
        A["a"][i] = t.a
        A["r"][i] = t.r
        A["term"][i] = t.terminal
        A["mask2"][i] = False
        if t.s_next is None:
            A["s2"][i] = 0.0
        else:
            A["s2"][i] = t.s_next.inputs
            A["mask2"][i, t.s_next.basis] = True
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size, rng):
        idx = rng.integers(0, self.size, size=batch_size)
        return {k: v[idx] for k, v in self.arrays.items()}

    def state_dict(self):
        out = {"size": self.size, "pos": self.pos, "capacity": self.capacity}
        if self.arrays is not None:
            out.update({"mem_" + k: v for k, v in self.arrays.items()})
        return out

    @classmethod
    def from_state(cls, d):
        mem = cls(int(d["capacity"]))
        mem.size, mem.pos = int(d["size"]), int(d["pos"])
        if "mem_s" in d:
            mem.arrays = {k[4:]: np.array(d[k]) for k in d if k.startswith("mem_")}
        return mem


def huber(x, delta=HUBER_DELTA):
    ax = np.abs(x)
    return np.where(ax <= delta, 0.5 * x * x, delta * (ax - 0.5 * delta))


def _batch_from_transitions(batch):
    s = np.stack([t.s.inputs for t in batch])
    N = s.shape[1]
    s2 = np.zeros_like(s)
    mask2 = np.zeros((len(batch), N), dtype=bool)
    for i, t in enumerate(batch):
        if t.s_next is not None:
            s2[i] = t.s_next.inputs
            mask2[i, t.s_next.basis] = True
    return {
        "s": s,
        "a": np.array([t.a for t in batch], dtype=np.int64),
        "s2": s2,
        "mask2": mask2,
        "r": np.array([t.r for t in batch], dtype=float),
        "term": np.array([t.terminal for t in batch], dtype=bool),
    }


def td_targets(batch, target_params, beta):
    y = np.asarray(batch["r"], dtype=float).copy()
    live = ~batch["term"]
    if live.any():
        q2, _ = forward_batch(batch["s2"][live], target_params)
        # explicit candidate mask, never an arithmetic -inf
        y[live] += beta * np.max(q2, axis=1, where=batch["mask2"][live], initial=-np.inf)
    return y


def td_loss(batch, params, target_params, beta):
    """Mean Huber TD error and its gradient w.r.t. the online parameters.

    ``batch`` is a list of Transition or the array dict a ReplayMemory samples.
    """
    if isinstance(batch, (list, tuple)):
        if not batch:
            raise ContractError("empty batch")
        batch = _batch_from_transitions(batch)
    y = td_targets(batch, target_params, beta)
    q, cache = forward_batch(batch["s"], params, keep_cache=True)
    B = q.shape[0]
    rows = np.arange(B)
    delta = y - q[rows, batch["a"]]
    loss = float(huber(delta).mean())
    dq = np.zeros_like(q)
    dq[rows, batch["a"]] = -np.clip(delta, -HUBER_DELTA, HUBER_DELTA) / B
    return loss, backward_batch(dq, params, cache)


class Adam:
    def __init__(self, params, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            params.arrays[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def episode_dataset(config, episode):
    """Training instance of an episode; depends only on (seed, episode)."""
    rng = np.random.default_rng([config.seed, episode])
    rate = rng.uniform(config.outlier_lo, config.outlier_hi)
    spec = GenSpec(model_kind=config.model_kind, N=config.n_points, outlier_rate=rate,
                   seed=int(rng.integers(2**63)), epsilon=config.epsilon)
    return generate(spec)


class Trainer:
    """Mutable training state: online/target networks, optimiser, replay memory."""

    def __init__(self, config, params=None):
        self.config = config
        self.params = params if params is not None else config.init_params()
        self.target = self.params.copy()
        self.opt = Adam(self.params, lr=config.lr)
        self.memory = ReplayMemory(config.replay_capacity)
        self.rng = np.random.default_rng([config.seed, 2**31])
        self.episode = 0
        self.steps = 0
        self.updates = 0
        self.ep_lengths = []
        self.losses = []
        self.discarded = 0
        self.ws = LpWorkspace()

    def update(self):
        cfg = self.config
        batch = self.memory.sample(cfg.batch_size, self.rng)
        loss, grads = td_loss(batch, self.params, self.target, cfg.beta)
        self.opt.step(self.params, grads)
        self.updates += 1
        if self.updates % cfg.target_sync == 0:
            self.target = self.params.copy()
        return loss

    def run_episode(self):
        cfg = self.config
        ep = self.episode
        self.episode += 1
        ds = episode_dataset(cfg, ep)
        losses = []
        n = 0
        try:
            state = initial_state(ds, self.ws)
            enc = encode_state(ds, state)
            while not is_goal(state, cfg.epsilon):
                eps = cfg.epsilon_at(self.steps)
                a = select_action(forward(enc, self.params), eps, self.rng)
                nxt = apply_action(ds, state, a, self.ws)
                r = reward(nxt, cfg.epsilon)
                terminal = r == 0
                enc_next = encode_state(ds, nxt)
                self.memory.push(Transition(enc, a, None if terminal else enc_next, r, terminal))
                self.steps += 1
                n += 1
                if len(self.memory) >= max(cfg.warmup, 1):
                    losses.append(self.update())
                state, enc = nxt, enc_next
        except SolverError as exc:
            self.discarded += 1
            log.warning("episode %d discarded after LP failure: %s", ep, exc)
        loss = float(np.mean(losses)) if losses else None
        if loss is not None and not np.isfinite(loss):
            raise FloatingPointError(f"non-finite loss in episode {ep}")
        self.ep_lengths.append(n)
        if loss is not None:
            self.losses.append(loss)
        return {"episode": ep, "steps": n, "loss": loss, "eps": cfg.epsilon_at(self.steps)}

    def stats(self):
        tail = self.ep_lengths[-100:]
        ltail = self.losses[-100:]
        return {
            "steps": self.steps,
            "updates": self.updates,
            "mean_episode_length": float(np.mean(tail)) if tail else 0.0,
            "mean_loss": float(np.mean(ltail)) if ltail else None,
            "discarded": self.discarded,
        }

    def checkpoint(self):
        return Checkpoint(self.params.copy(), self.config, self.episode, self.stats())

    def state_dict(self):
        """Everything beyond the checkpoint needed to resume bit-exactly."""
        out = {
            "episode": self.episode, "steps": self.steps, "updates": self.updates,
            "discarded": self.discarded, "adam_t": self.opt.t,
            "ep_lengths": np.array(self.ep_lengths, dtype=np.int64),
            "losses": np.array(self.losses, dtype=float),
            "rng_state": self.rng.bit_generator.state,
        }
        for name in self.params.arrays:
            out["target/" + name] = self.target.arrays[name]
            out["adam_m/" + name] = self.opt.m[name]
            out["adam_v/" + name] = self.opt.v[name]
        out.update(self.memory.state_dict())
        return out

    def load_state_dict(self, d):
        self.episode = int(d["episode"])
        self.steps = int(d["steps"])
        self.updates = int(d["updates"])
        self.discarded = int(d["discarded"])
        self.opt.t = int(d["adam_t"])
        self.ep_lengths = [int(x) for x in d["ep_lengths"]]
        self.losses = [float(x) for x in d["losses"]]
        self.rng.bit_generator.state = d["rng_state"]
        for name in self.params.arrays:
            self.target.arrays[name] = np.array(d["target/" + name])
            self.opt.m[name] = np.array(d["adam_m/" + name])
            self.opt.v[name] = np.array(d["adam_v/" + name])
        self.memory = ReplayMemory.from_state(d)


def train(config, callback=None, trainer=None):
    """Run episodes until ``config.episodes`` in total; returns a Checkpoint.

    ``callback(record, trainer)`` is invoked after every episode.  Pass a
    restored ``trainer`` to resume.
    """
    trainer = trainer or Trainer(config)
    while trainer.episode < config.episodes:
        rec = trainer.run_episode()
        if callback is not None:
            callback(rec, trainer)
    return trainer.checkpoint()


@dataclass
class PolicyResult:
    result: object
    episode_return: float


def greedy_chooser(dataset, params):
    def choose(state):
        return forward(encode_state(dataset, state), params).greedy()
    return choose


def evaluate_policy(dataset, params, beta=0.99):
    """Greedy rollout; also reports the realised discounted return."""
    res, states = rollout(dataset, greedy_chooser(dataset, params))
    if res.removals > dataset.N - dataset.d:
        log.warning("greedy rollout removed more than N - d points")
    rewards = [reward(s, dataset.epsilon) for s in states[1:]]
    ret = float(sum(beta ** t * r for t, r in enumerate(rewards)))
    return PolicyResult(res, ret)
