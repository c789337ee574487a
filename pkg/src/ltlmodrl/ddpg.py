"""Modular DDPG over the embedded product.

Each automaton state owns an actor, a critic, their target copies, a replay
buffer and Adam states.  Targets for a stored transition are bootstrapped
through the networks of the module active at the successor state.  The
single-network baseline shares one bundle and appends a one-hot of ``q`` to
the observation.
"""
from __future__ import annotations

import json
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .automaton import Ldgba
from .epmdp import EmbeddedProduct, EpsAction, ProductState, StepOutcome, encode_observation
from .nn import AdamState, Mlp, adam_step, backward, dumps_weights, forward, loads_weights, soft_update
from .shaping import RewardParams, ShapingState, base_reward, discount, fphi_update, shaped_reward


@dataclass
class NetConfig:
    hidden: tuple[int, ...] = (64, 64)
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    tau: float = 0.005  # soft target update rate

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("net.hidden needs at least one positive layer width")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("net.tau must lie in (0, 1]")


@dataclass
class TrainConfig:
    episodes: int = 1600
    horizon: int = 200
    batch_size: int = 64
    buffer_capacity: int = 100_000
    warmup: int = 1000
    noise_start: float = 0.2  # fraction of the action range
    noise_end: float = 0.02
    noise_corr: float = 0.0  # AR(1) coefficient of each module's noise state; 0 gives white noise
    updates_per_step: int = 1
    eval_every: int = 0  # 0 disables periodic evaluation
    eval_runs: int = 20
    record_wall_time: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("horizon", "batch_size", "buffer_capacity", "updates_per_step"):
            if getattr(self, name) < 1:
                raise ValueError(f"train.{name} must be positive")
        for name in ("episodes", "warmup", "eval_every", "eval_runs"):
            if getattr(self, name) < 0:
                raise ValueError(f"train.{name} must be non-negative")
        if self.noise_start < 0 or self.noise_end < 0:
            raise ValueError("noise scales must be non-negative")
        if not 0.0 <= self.noise_corr < 1.0:
            raise ValueError("train.noise_corr must lie in [0, 1)")


class ReplayBuffer:
    """Fixed-capacity ring buffer, allocated on the first push."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.size = 0
        self.pos = 0
        self._arrays: dict[str, np.ndarray] | None = None

    def __len__(self):
        return self.size

    def push(self, obs, act, reward, gamma, obs_next, next_module: int, terminal: bool) -> None:
        if self._arrays is None:
            c = self.capacity
            self._arrays = {
                "obs": np.zeros((c, len(obs))),
                "act": np.zeros((c, len(act))),
                "reward": np.zeros(c),
                "gamma": np.zeros(c),
                "obs_next": np.zeros((c, len(obs_next))),
                "next_module": np.zeros(c, dtype=np.int64),
                "terminal": np.zeros(c, dtype=bool),
            }
        a, i = self._arrays, self.pos
        a["obs"][i] = obs
        a["act"][i] = act
        a["reward"][i] = reward
        a["gamma"][i] = gamma
        a["obs_next"][i] = obs_next
        a["next_module"][i] = next_module
        a["terminal"][i] = terminal
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        idx = rng.integers(0, self.size, size=n)
        return {k: v[idx] for k, v in self._arrays.items()}

    def column(self, name: str) -> np.ndarray:
        return self._arrays[name][: self.size] if self._arrays is not None else np.zeros(0)


@dataclass
class Bundle:
    """Actor, critic, targets, buffer and optimizer state of one module."""

    key: str
    actor: Mlp
    critic: Mlp
    actor_target: Mlp
    critic_target: Mlp
    buffer: ReplayBuffer
    actor_opt: AdamState
    critic_opt: AdamState
    eps_targets: tuple[str, ...] = ()

    @property
    def n_eps(self) -> int:
        return len(self.eps_targets)


def _eps_bits(n: int, choice: int | None) -> np.ndarray:
    bits = np.zeros(n)
    if choice is not None:
        bits[choice] = 1.0
    return bits


class Agent:
    """Policy over product states: a map from automaton state to module.

    ``modular=False`` gives the single-network baseline.
    """

    def __init__(self, env, a: Ldgba, net: NetConfig = NetConfig(), modular: bool = True,
                 buffer_capacity: int = 100_000, seed: int = 0):
        self.env = env
        self.automaton = a
        self.net = net
        self.modular = modular
        self.f = a.f
        self.states = tuple(a.states)
        self.action_dim = env.action_dim
        self.action_low = np.asarray(env.action_low, dtype=float)
        self.action_high = np.asarray(env.action_high, dtype=float)
        self.obs_dim = env.state_dim + self.f + (0 if modular else len(self.states))
        if not modular and a.eps_edges:
            raise ValueError("the single-network baseline supports epsilon-free automata only")
        keys = self.states if modular else ("all",)
        self.keys = tuple(keys)
        self.key_index = {k: i for i, k in enumerate(self.keys)}
        self.modules: dict[str, Bundle] = {}
        for i, key in enumerate(keys):
            eps = tuple(a.eps_successors.get(key, ())) if (modular and key in a.q_n) else ()
            self.modules[key] = self._make_bundle(key, eps, seed * 1000 + 2 * i, buffer_capacity)
        self.bootstrap_trace: list | None = None  # set to a list to record target routing
        self.noise_corr = 0.0
        self.noise_state: dict[str, np.ndarray] = {}

    def reset_noise(self) -> None:
        self.noise_state.clear()

    def _make_bundle(self, key, eps, seed, capacity) -> Bundle:
        n_eps = len(eps)
        hidden = list(self.net.hidden)
        low = np.concatenate([self.action_low, np.full(n_eps, -np.inf)])
        high = np.concatenate([self.action_high, np.full(n_eps, np.inf)])
        actor = Mlp([self.obs_dim, *hidden, self.action_dim + n_eps], bounds=(low, high), seed=seed)
        critic = Mlp([self.obs_dim + self.action_dim + n_eps, *hidden, 1], seed=seed + 1)
        return Bundle(
            key=key, actor=actor, critic=critic, actor_target=actor.copy(), critic_target=critic.copy(),
            buffer=ReplayBuffer(capacity),
            actor_opt=AdamState.for_params(actor.params, lr=self.net.actor_lr),
            critic_opt=AdamState.for_params(critic.params, lr=self.net.critic_lr),
            eps_targets=eps,
        )

    # -- routing and encoding
    def route(self, q: str) -> str:
        return q if self.modular else "all"

    def encode(self, x: ProductState) -> np.ndarray:
        obs = encode_observation(x, self.f, self.env.normalize)
        if self.modular:
            return obs
        onehot = np.zeros(len(self.states))
        onehot[self.automaton.state_index[x.q]] = 1.0
        return np.concatenate([obs, onehot])

    # -- acting
    @staticmethod
    def _split(bundle: Bundle, out: np.ndarray) -> tuple[np.ndarray, int | None]:
        """Continuous action and the epsilon choice encoded by actor outputs."""
        cont = out[..., : out.shape[-1] - bundle.n_eps]
        if bundle.n_eps == 0:
            return cont, None
        prefs = out[-bundle.n_eps:]
        j = int(np.argmax(prefs))  # argmax takes the lowest index on ties
        return cont, (j if prefs[j] > 0 else None)

    def critic_input(self, bundle: Bundle, actor_out: np.ndarray) -> np.ndarray:
        """Batch version of ``action ++ eps one-hot`` from raw actor outputs."""
        if bundle.n_eps == 0:
            return actor_out
        cont = actor_out[:, : self.action_dim]
        prefs = actor_out[:, self.action_dim:]
        best = np.argmax(prefs, axis=1)
        take = prefs[np.arange(len(prefs)), best] > 0
        bits = np.zeros_like(prefs)
        bits[np.arange(len(prefs))[take], best[take]] = 1.0
        return np.concatenate([cont, bits], axis=1)

    def act(self, x: ProductState, explore: bool = False, sigma: float = 0.0,
            rng: np.random.Generator | None = None) -> tuple[object, np.ndarray]:
        """Product action and the vector stored as the critic's action input."""
        bundle = self.modules[self.route(x.q)]
        out = forward(bundle.actor, self.encode(x))[0]
        cont, eps = self._split(bundle, out)
        cont = cont.copy()
        if explore and sigma > 0:
            z = rng.normal(size=cont.shape)
            if self.noise_corr > 0:
                prev = self.noise_state.get(bundle.key)
                if prev is not None:
                    z = self.noise_corr * prev + np.sqrt(1.0 - self.noise_corr**2) * z
                self.noise_state[bundle.key] = z
            cont += z * sigma * (self.action_high - self.action_low)
            np.clip(cont, self.action_low, self.action_high, out=cont)
        if explore and bundle.n_eps and sigma > 0 and rng.random() < sigma:
            pick = int(rng.integers(bundle.n_eps + 1))
            eps = None if pick == bundle.n_eps else pick
        stored = np.concatenate([cont, _eps_bits(bundle.n_eps, eps)])
        if eps is not None:
            return EpsAction(bundle.eps_targets[eps]), stored
        return cont, stored

    def select_action(self, x: ProductState, explore: bool = False, sigma: float = 0.0, rng=None):
        return self.act(x, explore, sigma, rng)[0]

    # -- learning
    def train_step(self, key: str, batch_size: int, rng: np.random.Generator) -> dict | None:
        bundle = self.modules[key]
        if len(bundle.buffer) < batch_size:
            return None
        b = bundle.buffer.sample(batch_size, rng)
        n = batch_size
        y = b["reward"].copy()
        live = ~b["terminal"]
        for m in np.unique(b["next_module"][live]):
            rows = np.nonzero(live & (b["next_module"] == m))[0]
            target = self.modules[self.keys[m]]
            if self.bootstrap_trace is not None:
                self.bootstrap_trace.append((key, self.keys[m], len(rows)))
            nxt = b["obs_next"][rows]
            u = self.critic_input(target, forward(target.actor_target, nxt)[0])
            q_next = forward(target.critic_target, np.concatenate([nxt, u], axis=1))[0][:, 0]
            y[rows] += b["gamma"][rows] * q_next

        # critic: minimise mean squared TD error
        q, cache = forward(bundle.critic, np.concatenate([b["obs"], b["act"]], axis=1))
        err = q[:, 0] - y
        grads, _ = backward(bundle.critic, cache, (2.0 / n) * err[:, None])
        adam_step(bundle.critic.params, grads, bundle.critic_opt)

        # actor: deterministic policy gradient through the critic's action slot
        out, a_cache = forward(bundle.actor, b["obs"])
        u = self.critic_input(bundle, out)
        qa, c_cache = forward(bundle.critic, np.concatenate([b["obs"], u], axis=1))
        _, g_in = backward(bundle.critic, c_cache, np.full((n, 1), -1.0 / n))
        g_out = np.zeros_like(out)
        g_out[:, : self.action_dim] = g_in[:, self.obs_dim: self.obs_dim + self.action_dim]
        if bundle.n_eps:
            g_out[:, self.action_dim:] = self._preference_grad(bundle, b["obs"], out, qa[:, 0]) / n
        a_grads, _ = backward(bundle.actor, a_cache, g_out)
        adam_step(bundle.actor.params, a_grads, bundle.actor_opt)

        soft_update(bundle.actor_target, bundle.actor, self.net.tau)
        soft_update(bundle.critic_target, bundle.critic, self.net.tau)
        return {"critic_loss": float(np.mean(err**2)), "q_mean": float(np.mean(qa))}

    def _preference_grad(self, bundle: Bundle, obs, out, _q) -> np.ndarray:
        """Gradient of ``(pref_j - advantage_j)^2 / 2`` for each epsilon target.

        ``advantage_j`` is the critic's value of taking epsilon move ``j`` minus
        that of the continuous action, so a positive preference means the critic
        favours the epsilon move.
        """
        cont = out[:, : self.action_dim]
        prefs = out[:, self.action_dim:]
        zeros = np.zeros((len(obs), bundle.n_eps))
        base = forward(bundle.critic, np.concatenate([obs, cont, zeros], axis=1))[0][:, 0]
        adv = np.empty_like(prefs)
        for j in range(bundle.n_eps):
            bits = zeros.copy()
            bits[:, j] = 1.0
            adv[:, j] = forward(bundle.critic, np.concatenate([obs, cont, bits], axis=1))[0][:, 0] - base
        return prefs - adv

    # -- persistence
    def save(self, directory: str | Path, manifest: dict) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        files = {}
        for i, (key, bundle) in enumerate(self.modules.items()):
            name = f"module_{i:02d}.bin"
            (d / name).write_bytes(pack_bundle(bundle))
            files[key] = name
        data = dict(manifest, modular=self.modular, modules=files, obs_dim=self.obs_dim)
        (d / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")

    def load(self, directory: str | Path) -> dict:
        d = Path(directory)
        manifest = json.loads((d / "manifest.json").read_text())
        if manifest.get("modular") != self.modular or set(manifest["modules"]) != set(self.modules):
            raise ValueError(f"{d}: checkpoint modules {sorted(manifest['modules'])} do not match the agent")
        for key, name in manifest["modules"].items():
            actor, critic = unpack_bundle((d / name).read_bytes())
            bundle = self.modules[key]
            for live, loaded in ((bundle.actor, actor), (bundle.critic, critic)):
                if not live.same_architecture(loaded):
                    raise ValueError(f"{d / name}: architecture {loaded.sizes} does not match {live.sizes}")
                for dst, src in zip(live.params, loaded.params):
                    dst[...] = src
            bundle.actor_target = bundle.actor.copy()
            bundle.critic_target = bundle.critic.copy()
        return manifest


_BUNDLE_MAGIC = b"LTLMODB\x00"


def pack_bundle(bundle: Bundle) -> bytes:
    blobs = [dumps_weights(bundle.actor), dumps_weights(bundle.critic)]
    out = [_BUNDLE_MAGIC, struct.pack("<I", len(blobs))]
    for blob in blobs:
        out += [struct.pack("<Q", len(blob)), blob]
    return b"".join(out)


def unpack_bundle(data: bytes) -> tuple[Mlp, Mlp]:
    from .nn import WeightFileError

    if data[:8] != _BUNDLE_MAGIC:
        raise WeightFileError("not a module file (bad magic)")
    off = 8
    try:
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        nets = []
        for _ in range(count):
            (size,) = struct.unpack_from("<Q", data, off)
            off += 8
            if off + size > len(data):
                raise WeightFileError("module file truncated")
            nets.append(loads_weights(data[off: off + size]))
            off += size
    except struct.error as exc:
        raise WeightFileError("module file truncated") from exc
    if count != 2 or off != len(data):
        raise WeightFileError("module file malformed")
    return nets[0], nets[1]


# ------------------------------------------------------------------ training

def task_mode(a: Ldgba) -> str:
    """``"reach"`` when the single accepting set is closed under safe moves, else ``"rounds"``."""
    if a.f != 1:
        return "rounds"
    acc = a.accepting_sets[0]
    for q in acc:
        for e in a.out_edges.get(q, ()):
            if e.dst not in acc and e.dst not in a.sinks:
                return "rounds"
    return "reach"


@dataclass
class EpisodeRecord:
    episode: int
    steps: int
    total_shaped_reward: float
    total_base_reward: float
    rounds_completed: int
    success: bool
    wall_ms: int = 0

    FIELDS = ("episode", "steps", "total_shaped_reward", "total_base_reward", "rounds_completed", "success", "wall_ms")

    def row(self) -> list:
        return [self.episode, self.steps, repr(float(self.total_shaped_reward)),
                repr(float(self.total_base_reward)), self.rounds_completed, int(self.success), self.wall_ms]


def write_log(path: str | Path, log: Sequence[EpisodeRecord]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EpisodeRecord.FIELDS)
        for rec in log:
            w.writerow(rec.row())


def _streams(seed: int):
    env_ss, agent_ss, eval_ss = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(env_ss), np.random.default_rng(agent_ss), eval_ss


def train(env, a: Ldgba, config: TrainConfig = TrainConfig(), net: NetConfig = NetConfig(),
          params: RewardParams = RewardParams(), modular: bool = True, k: int = 2,
          callback: Callable[[EpisodeRecord, Agent], None] | None = None) -> tuple[Agent, list[EpisodeRecord]]:
    """Run modular DDPG (or the single-network baseline) and return the agent and its log."""
    product = EmbeddedProduct(env, a)
    agent = Agent(env, a, net, modular=modular, buffer_capacity=config.buffer_capacity, seed=config.seed)
    agent.noise_corr = config.noise_corr
    env_rng, agent_rng, _ = _streams(config.seed)
    F = a.accepting_sets
    mode = task_mode(a)
    log: list[EpisodeRecord] = []
    total_steps = 0
    for ep in range(config.episodes):
        t0 = time.perf_counter()
        frac = ep / max(config.episodes - 1, 1)
        sigma = config.noise_start + (config.noise_end - config.noise_start) * frac
        x = product.initial(env_rng)
        shaping = ShapingState.initial(a)
        agent.reset_noise()
        obs = agent.encode(x)
        shaped_total = base_total = 0.0
        rounds, reached, sunk, steps = 0, False, False, 0
        for t in range(config.horizon):
            action, stored = agent.act(x, explore=True, sigma=sigma, rng=agent_rng)
            out = product.step(x, action, env_rng)
            r_shaped = shaped_reward(x, out.next, shaping, F, params)
            r_base = base_reward(x, F, params)
            gamma = discount(x, F, params)
            shaping = fphi_update(out.next.q, shaping, out.round_flag)
            terminal = out.entered_sink or env.failed(out.next.s)
            obs_next = agent.encode(out.next)
            key = agent.route(x.q)
            agent.modules[key].buffer.push(obs, stored, r_shaped, gamma, obs_next,
                                           agent.key_index[agent.route(out.next.q)], terminal)
            total_steps += 1
            if total_steps > config.warmup:
                for _ in range(config.updates_per_step):
                    agent.train_step(key, config.batch_size, agent_rng)
            shaped_total += r_shaped
            base_total += r_base
            rounds += int(out.round_flag)
            reached |= out.was_accepting
            sunk |= out.entered_sink
            steps = t + 1
            x, obs = out.next, obs_next
            if terminal:
                break
        success = not sunk and (rounds >= k if mode == "rounds" else reached)
        wall = int((time.perf_counter() - t0) * 1000) if config.record_wall_time else 0
        rec = EpisodeRecord(ep, steps, shaped_total, base_total, rounds, success, wall)
        log.append(rec)
        if callback is not None:
            callback(rec, agent)
    return agent, log


def single_ddpg_baseline(env, a: Ldgba, config: TrainConfig = TrainConfig(), net: NetConfig = NetConfig(),
                         params: RewardParams = RewardParams(), k: int = 2, callback=None):
    return train(env, a, config, net, params, modular=False, k=k, callback=callback)


@dataclass
class RolloutSummary:
    run: int
    steps: int
    rounds: int
    reached: bool
    sink: bool
    success: bool
    trace: list = field(default_factory=list, repr=False)


@dataclass
class EvalResult:
    success_rate: float
    runs: list[RolloutSummary]

    def summary(self) -> dict:
        return {
            "success_rate": self.success_rate,
            "runs": len(self.runs),
            "successes": sum(r.success for r in self.runs),
            "mean_rounds": float(np.mean([r.rounds for r in self.runs])) if self.runs else 0.0,
            "sink_entries": sum(r.sink for r in self.runs),
        }


def evaluate(agent: Agent, env, a: Ldgba, runs: int = 200, horizon: int = 1000, k: int = 2,
             seed: int = 0, keep_traces: bool = False, stop_on_success: bool = True) -> EvalResult:
    """Noise-free rollouts; success is ``k`` rounds (or reaching acceptance) without a sink."""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    if k < 1:
        raise ValueError("k must be at least 1")
    product = EmbeddedProduct(env, a)
    mode = task_mode(a)
    out_runs = []
    for i, ss in enumerate(np.random.SeedSequence(seed).spawn(runs)):
        rng = np.random.default_rng(ss)
        x = product.initial(rng)
        rounds, reached, sunk, steps = 0, False, False, 0
        trace = [x] if keep_traces else []
        for t in range(horizon):
            out = product.step(x, agent.select_action(x), rng)
            x = out.next
            steps = t + 1
            rounds += int(out.round_flag)
            reached |= out.was_accepting
            sunk |= out.entered_sink
            if keep_traces:
                trace.append(x)
            if sunk or env.failed(x.s):
                break
            if stop_on_success and (rounds >= k if mode == "rounds" else reached):
                break
        success = not sunk and (rounds >= k if mode == "rounds" else reached)
        out_runs.append(RolloutSummary(i, steps, rounds, reached, sunk, success, trace))
    rate = sum(r.success for r in out_runs) / runs
    return EvalResult(rate, out_runs)
