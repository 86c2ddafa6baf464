"""Episode rollout collection, optionally across worker processes.

Every episode draws its own RNG stream keyed by (run seed, domain, iteration,
episode index), so a batch is bit-identical no matter how many workers
collected it or how they were scheduled.  Workers hold a private environment
and policy skeleton built once per process; tasks carry only the flat
parameter vector and episode indices, and results merge in episode order.
"""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass, field

import numpy as np

from .env import DressEnv, EpisodeResult, TaskConfig
from .nets import JointPolicy
from .reward import RewardWeights
from .sensors import AblationFlags

TRAIN_DOMAIN = 0
EVAL_DOMAIN = 1
INIT_DOMAIN = 2


@dataclass(frozen=True)
class EnvSpec:
    """Everything needed to build one environment instance."""

    task: TaskConfig
    weights: RewardWeights
    penalty_form: str = "eq2"
    force_ref: float = 50.0
    flags: AblationFlags = field(default_factory=AblationFlags)

    def build(self) -> DressEnv:
        return DressEnv(self.task, self.weights, self.penalty_form,
                        self.force_ref, self.flags)


def episode_rng(run_seed: int, domain: int, iteration: int, episode: int):
    return np.random.default_rng(
        np.random.SeedSequence((run_seed, domain, iteration, episode)))


def build_policy(env: DressEnv, run_seed: int, hidden=(128, 64),
                 log_std_init=-3.0) -> JointPolicy:
    rng = np.random.default_rng(np.random.SeedSequence((run_seed, INIT_DOMAIN)))
    return JointPolicy.build(env.human_obs.size, env.human.chain.n_joints,
                             env.robot_obs.size, env.robot.chain.n_joints,
                             rng, hidden, log_std_init)


@dataclass
class EpisodeData:
    index: int
    obs: np.ndarray | None
    act: np.ndarray | None
    logp: np.ndarray | None
    rew: np.ndarray | None
    final_obs: np.ndarray | None
    result: EpisodeResult


def run_episode(env: DressEnv, policy: JointPolicy, rng, stochastic=True,
                action_scale=None, record=True, index=0,
                episode_steps=None) -> EpisodeData:
    obs = env.reset(rng)
    steps = env.cfg.episode_steps if episode_steps is None else episode_steps
    if record:
        obs_buf = np.empty((steps, env.obs_dim))
        act_buf = np.empty((steps, env.act_dim))
        logp_buf = np.empty(steps)
    rew_buf = np.empty(steps)
    ret = 0.0
    for t in range(steps):
        action, logp = policy.act(obs, rng, stochastic)
        next_obs, breakdown, done, _ = env.step(action, action_scale)
        if record:
            obs_buf[t] = obs
            act_buf[t] = action
            logp_buf[t] = logp
        rew_buf[t] = breakdown.total
        ret += breakdown.total
        obs = next_obs
        if done:
            steps_run = t + 1
            break
    else:
        steps_run = steps
    result = env.result(ret)
    if record:
        return EpisodeData(index, obs_buf[:steps_run], act_buf[:steps_run],
                           logp_buf[:steps_run], rew_buf[:steps_run],
                           obs.copy(), result)
    return EpisodeData(index, None, None, None, None, None, result)


@dataclass
class RolloutBatch:
    """Flat per-step arrays with contiguous episodes.

    ``ep_start`` has a trailing total-length entry; ``final_obs`` holds the
    post-horizon observation of each episode for value bootstrapping.
    """

    obs: np.ndarray
    act: np.ndarray
    logp: np.ndarray
    rew: np.ndarray
    ep_start: np.ndarray
    final_obs: np.ndarray
    results: list

    @property
    def size(self) -> int:
        return self.obs.shape[0]

    @staticmethod
    def from_episodes(episodes) -> "RolloutBatch":
        episodes = sorted(episodes, key=lambda e: e.index)
        lengths = [e.rew.shape[0] for e in episodes]
        ep_start = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        return RolloutBatch(
            np.concatenate([e.obs for e in episodes]),
            np.concatenate([e.act for e in episodes]),
            np.concatenate([e.logp for e in episodes]),
            np.concatenate([e.rew for e in episodes]),
            ep_start,
            np.stack([e.final_obs for e in episodes]),
            [e.result for e in episodes])


_WORKER: dict = {}


def _init_worker(spec: EnvSpec, hidden, log_std_init):
    env = spec.build()
    _WORKER["env"] = env
    _WORKER["policy"] = JointPolicy.build(
        env.human_obs.size, env.human.chain.n_joints, env.robot_obs.size,
        env.robot.chain.n_joints, None, hidden, log_std_init)


def _run_chunk(task):
    (params, indices, run_seed, domain, iteration, stochastic, action_scale,
     record, episode_steps) = task
    env = _WORKER["env"]
    policy = _WORKER["policy"]
    policy.set_params(params)
    out = []
    for i in indices:
        rng = episode_rng(run_seed, domain, iteration, int(i))
        out.append(run_episode(env, policy, rng, stochastic, action_scale,
                               record, int(i), episode_steps))
    return out


class RolloutCollector:
    """Owns the environments (local or pooled) behind a collect() call."""

    def __init__(self, spec: EnvSpec, workers: int = 1, hidden=(128, 64),
                 log_std_init=-3.0):
        self.spec = spec
        self.workers = max(int(workers), 1)
        self._pool = None
        if self.workers > 1:
            ctx = mp.get_context("fork" if "fork" in mp.get_all_start_methods()
                                 else "spawn")
            self._pool = ctx.Pool(self.workers, initializer=_init_worker,
                                  initargs=(spec, hidden, log_std_init))
        _init_worker(spec, hidden, log_std_init)
        self.env = _WORKER["env"]

    def collect(self, params, n_episodes, run_seed, domain, iteration,
                stochastic=True, action_scale=None, record=True,
                episode_steps=None):
        """Run episodes 0..n-1 of the given stream; order-stable output."""
        indices = np.arange(int(n_episodes))
        if self._pool is None:
            task = (params, indices, run_seed, domain, iteration, stochastic,
                    action_scale, record, episode_steps)
            return _run_chunk(task)
        chunks = [c for c in np.array_split(indices, self.workers) if c.size]
        tasks = [(params, c, run_seed, domain, iteration, stochastic,
                  action_scale, record, episode_steps) for c in chunks]
        out = []
        for part in self._pool.map(_run_chunk, tasks):
            out.extend(part)
        return out

    def close(self):
        if self._pool is not None:
            self._pool.close()
            self._pool.join()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
