"""Deep Q-learning for the pump-rate decision, in plain numpy.

The value network maps (measured OD, setpoint) to one Q-value per pump
rate on a 17-point grid over [0, 0.02]. Training runs entirely on the
simulator: experience replay, a hard-synced target network, and Adam.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controllers import Controller
from .model import U_MAX, GrowthParams, SimState, measure, step_zoh

N_ACTIONS = 17
ACTIONS = U_MAX * np.arange(N_ACTIONS) / (N_ACTIONS - 1)
LAYER_SIZES = (2, 64, 64, N_ACTIONS)
TRAIN_SETPOINTS = tuple(round(0.2 + 0.1 * i, 10) for i in range(9))
FORMAT_TAG = "qnet-v1"


class TrainingError(RuntimeError):
    pass


class NetworkFormatError(ValueError):
    pass


@dataclass
class QNetwork:
    """Fully connected ReLU network. ``weights[l]`` has shape (fan_in, fan_out)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def initialize(cls, rng: np.random.Generator, sizes=LAYER_SIZES) -> "QNetwork":
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            bs.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(ws, bs)

    @classmethod
    def zeros(cls, sizes=LAYER_SIZES) -> "QNetwork":
        return cls([np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(b) for b in sizes[1:]])

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "QNetwork":
        return QNetwork([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def forward(net: QNetwork, s) -> np.ndarray:
    """Q-values for one input (shape (2,)) or a batch (shape (B, 2))."""
    h = np.asarray(s, dtype=np.float64)
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h


def _forward_cache(net: QNetwork, x: np.ndarray):
    acts = [x]
    pre = []
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
        acts.append(h)
    return acts, pre


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s2: np.ndarray
    done: np.ndarray

    def __len__(self):
        return self.a.size


def td_targets(target_net: QNetwork, batch: Batch, gamma: float) -> np.ndarray:
    q_next = forward(target_net, batch.s2).max(axis=1)
    return batch.r + gamma * (1.0 - batch.done) * q_next


def loss_and_gradient(net: QNetwork, target_net: QNetwork, batch: Batch, gamma: float):
    """Mean squared TD error and its exact gradient.

    Gradients come back in ``net.params()`` order (w0, b0, w1, b1, ...);
    the bootstrap target is treated as a constant.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    y = td_targets(target_net, batch, gamma)
    acts, pre = _forward_cache(net, np.asarray(batch.s, dtype=np.float64))
    q = acts[-1]
    n = len(batch)
    idx = np.arange(n)
    diff = q[idx, batch.a] - y
    loss = float(np.mean(diff * diff))
    delta = np.zeros_like(q)
    delta[idx, batch.a] = 2.0 * diff / n
    grads = []
    for layer in range(len(net.weights) - 1, -1, -1):
        gw = acts[layer].T @ delta
        gb = delta.sum(axis=0)
        grads = [gw, gb] + grads
        if layer > 0:
            delta = (delta @ net.weights[layer].T) * (pre[layer - 1] > 0)
    return loss, grads


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_update(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, lr: float):
    """Bias-corrected Adam step, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter, gradient and moment lists differ in length")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def select_action(net: QNetwork, s, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; ties in the greedy branch go to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(forward(net, s)))


class ReplayBuffer:
    def __init__(self, capacity: int):
        self.capacity = capacity
        self.s = np.zeros((capacity, 2))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, 2))
        self.done = np.zeros(capacity)
        self.size = 0
        self._next = 0

    def add(self, s, a, r, s2, done):
        i = self._next
        self.s[i], self.a[i], self.r[i], self.s2[i], self.done[i] = s, a, r, s2, float(done)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        idx = rng.integers(self.size, size=n)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx])


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 100
    steps_per_episode: int = 100
    dt: float = 1.0
    substep: float = 0.1
    gamma: float = 0.99
    lr: float = 0.001
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_episodes: int = 70
    buffer_capacity: int = 10_000
    batch_size: int = 32
    target_sync: int = 500
    reward_scale: float = 10.0
    initial_od_low: float = 0.1
    initial_od_high: float = 1.0
    noisy: bool = True
    seed: int = 1

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.episodes < 1 or self.steps_per_episode < 1:
            raise ValueError("episodes and steps_per_episode must be >= 1")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ValueError("buffer_capacity must be >= batch_size >= 1")
        if self.target_sync < 1:
            raise ValueError("target_sync must be >= 1")
        if self.reward_scale <= 0:
            raise ValueError("reward_scale must be > 0")

    def epsilon(self, episode: int) -> float:
        if episode >= self.epsilon_decay_episodes:
            return self.epsilon_end
        frac = episode / max(1, self.epsilon_decay_episodes)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


def discounted_return(rewards, gamma: float) -> float:
    r = np.asarray(rewards, dtype=np.float64)
    return float(np.sum(r * gamma ** np.arange(r.size)))


@dataclass
class TrainResult:
    net: QNetwork
    episode_rewards: list[float]
    setpoints: list[float] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)

    def improved(self, window: int = 10) -> bool:
        r = self.episode_rewards
        return float(np.mean(r[-window:])) > float(np.mean(r[:window]))

    def rewards_csv(self) -> str:
        lines = ["episode,cumulative_reward"]
        lines += [f"{i + 1},{v!r}" for i, v in enumerate(self.episode_rewards)]
        return "\n".join(lines) + "\n"


def train(p: GrowthParams, cfg: TrainConfig | None = None) -> TrainResult:
    """Train on simulated episodes; a pure function of ``(p, cfg)``.

    The transition reward is ``-(y' - setpoint)**2`` on the measured OD
    after the action. Episode ends are time limits, so the bootstrap term
    is kept on the last step.
    """
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(cfg.seed)
    plant = p if cfg.noisy else p.noise_free()
    net = QNetwork.initialize(rng)
    target = net.copy()
    opt = AdamState.like(net.params())
    buf = ReplayBuffer(cfg.buffer_capacity)
    rewards, setpoints, losses = [], [], []
    updates = 0
    for ep in range(cfg.episodes):
        eps = cfg.epsilon(ep)
        sp = TRAIN_SETPOINTS[int(rng.integers(len(TRAIN_SETPOINTS)))]
        state = SimState(x=float(rng.uniform(cfg.initial_od_low, cfg.initial_od_high)))
        y = measure(state, plant, rng)
        ep_rewards = []
        ep_loss = 0.0
        for _ in range(cfg.steps_per_episode):
            s = np.array([y, sp])
            a = select_action(net, s, eps, rng)
            state = step_zoh(state, float(ACTIONS[a]), plant, rng, cfg.dt, cfg.substep)
            y = measure(state, plant, rng)
            r = -(y - sp) ** 2
            buf.add(s, a, cfg.reward_scale * r, (y, sp), False)
            ep_rewards.append(r)
            if buf.size >= cfg.batch_size:
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, grads = loss_and_gradient(net, target, buf.sample(cfg.batch_size, rng), cfg.gamma)
                if not math.isfinite(loss):
                    raise TrainingError(f"loss diverged in episode {ep + 1}")
                adam_update(net.params(), grads, opt, cfg.lr)
                updates += 1
                ep_loss += loss
                if updates % cfg.target_sync == 0:
                    target = net.copy()
        rewards.append(discounted_return(ep_rewards, cfg.gamma))
        setpoints.append(sp)
        losses.append(ep_loss / cfg.steps_per_episode)
    return TrainResult(net, rewards, setpoints, losses)


class DQNController(Controller):
    """Greedy policy of a trained network; stateless."""

    name = "dqn"

    def __init__(self, net: QNetwork):
        self.net = net

    def action_index(self, y_meas: float, setpoint: float) -> int:
        return int(np.argmax(forward(self.net, np.array([y_meas, setpoint]))))

    def _raw(self, y_meas, setpoint):
        return float(ACTIONS[self.action_index(y_meas, setpoint)])


def greedy_policy(net: QNetwork) -> DQNController:
    return DQNController(net)


def save_network(net: QNetwork, path) -> None:
    lines = [FORMAT_TAG, " ".join(str(n) for n in net.sizes)]
    for w, b in zip(net.weights, net.biases):
        lines += [" ".join(repr(float(v)) for v in row) for row in w]
        lines.append(" ".join(repr(float(v)) for v in b))
    Path(path).write_text("\n".join(lines) + "\n")


def load_network(path, expected_sizes=LAYER_SIZES) -> QNetwork:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != FORMAT_TAG:
        found = lines[0].strip() if lines else "<empty>"
        raise NetworkFormatError(f"{path}: expected header {FORMAT_TAG!r}, found {found!r}")
    try:
        sizes = tuple(int(v) for v in lines[1].split())
    except (IndexError, ValueError):
        raise NetworkFormatError(f"{path}: malformed layer-size line") from None
    if expected_sizes is not None and sizes != tuple(expected_sizes):
        raise NetworkFormatError(f"{path}: layer sizes {sizes} do not match expected {tuple(expected_sizes)}")
    rows = lines[2:]
    ws, bs = [], []
    pos = 0
    try:
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = np.array([[float(v) for v in rows[pos + i].split()] for i in range(fan_in)])
            b = np.array([float(v) for v in rows[pos + fan_in].split()])
            pos += fan_in + 1
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise NetworkFormatError(f"{path}: layer shape mismatch, expected ({fan_in}, {fan_out})")
            ws.append(w)
            bs.append(b)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, NetworkFormatError):
            raise
        raise NetworkFormatError(f"{path}: truncated or non-numeric weights") from None
    if any(r.strip() for r in rows[pos:]):
        raise NetworkFormatError(f"{path}: trailing data after last layer")
    return QNetwork(ws, bs)
