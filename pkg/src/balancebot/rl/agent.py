"""One-step advantage actor-critic for the balancing task."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..dynamics import PhysicalParams, RobotState
from ..errors import ConfigError, IntegrationDivergedError, TrainingDivergedError
from ..sensing import ImuConfig
from ..simulation import BalanceEnv, Measurement, SimConfig, Trajectory, config_hash, run_closed_loop
from .mlp import MlpParams, backward, forward, init_mlp, sgd

MODEL_VERSION = 1
OBS_FEATURES = ("phi_hat", "gyro_rate", "x", "x_dot", "prev_action")
# divisors applied to (phi_hat, gyro_rate, x, x_dot) before they reach the networks
DEFAULT_OBS_SCALE = (0.1, 1.0, 0.5, 0.5)
# actions as fractions of the force limit
DEFAULT_ACTION_LEVELS = (-1.0, 0.0, 1.0)


@dataclass(frozen=True)
class PolicyModel:
    actor: MlpParams
    critic: MlpParams
    obs_dim: int
    n_actions: int
    version: int = MODEL_VERSION
    obs_scale: tuple = DEFAULT_OBS_SCALE
    action_levels: tuple = DEFAULT_ACTION_LEVELS
    action_repeat: int = 1

    def __post_init__(self):
        if self.action_repeat < 1:
            raise ConfigError("action_repeat must be >= 1")
        if self.actor.n_in != self.obs_dim or self.critic.n_in != self.obs_dim:
            raise ConfigError("actor and critic inputs must match obs_dim")
        if self.actor.n_out != self.n_actions or self.critic.n_out != 1:
            raise ConfigError("actor outputs n_actions logits, critic outputs one value")
        if len(self.action_levels) != self.n_actions:
            raise ConfigError("one action level per action")
        object.__setattr__(self, "obs_scale", tuple(float(v) for v in self.obs_scale))
        object.__setattr__(self, "action_levels", tuple(float(v) for v in self.action_levels))

    def __eq__(self, other):
        if not isinstance(other, PolicyModel):
            return NotImplemented
        return (self.actor == other.actor and self.critic == other.critic
                and self.obs_dim == other.obs_dim and self.n_actions == other.n_actions
                and self.version == other.version and self.obs_scale == other.obs_scale
                and self.action_levels == other.action_levels
                and self.action_repeat == other.action_repeat)

    __hash__ = None

    def force(self, action: int, force_limit: float) -> float:
        return self.action_levels[action] * force_limit


def init_model(rng: np.random.Generator, hidden=(64, 64), obs_dim: int = len(OBS_FEATURES),
               n_actions: int = len(DEFAULT_ACTION_LEVELS), **kwargs) -> PolicyModel:
    actor = init_mlp((obs_dim, *hidden, n_actions), rng)
    critic = init_mlp((obs_dim, *hidden, 1), rng)
    return PolicyModel(actor, critic, obs_dim, n_actions, **kwargs)


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    done: bool


@dataclass(frozen=True)
class TrainConfig:
    """A2C hyperparameters.

    ``horizon`` counts agent decisions per episode; each decision holds its
    force for ``action_repeat`` simulator ticks and earns the mean of their
    rewards, so the best possible episode reward is ``horizon``. Holding
    each force for 2 ticks (4 ms) gives 1.2 s episodes, long enough to see
    the pendulum recover; one tick per decision never learned to balance.
    """

    gamma: float = 0.99
    lr_actor: float = 3e-4
    lr_critic: float = 1e-3
    horizon: int = 300
    n_episodes: int = 2000
    entropy_coef: float = 0.01
    seed: int = 0
    hidden: tuple = (64, 64)
    init_phi: float = 0.05
    obs_scale: tuple = DEFAULT_OBS_SCALE
    action_repeat: int = 2

    def __post_init__(self):
        if self.action_repeat < 1:
            raise ConfigError("action_repeat must be >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must be in (0, 1)")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ConfigError("learning rates must be positive")
        if self.horizon < 1 or self.n_episodes < 0:
            raise ConfigError("horizon must be >= 1 and n_episodes >= 0")


def observe(m: Measurement, force_limit: float, obs_scale=DEFAULT_OBS_SCALE) -> np.ndarray:
    """Scaled observation vector in :data:`OBS_FEATURES` order."""
    s = obs_scale
    return np.array([m.phi_hat / s[0], m.rate / s[1], m.x / s[2], m.x_dot / s[3], m.prev_u / force_limit])


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def select_action(model: PolicyModel, obs, rng: np.random.Generator | None = None, explore: bool = True):
    """Pick an action from the actor's softmax.

    Returns ``(action, log_probability, value)``. ``explore=False`` takes the
    argmax and needs no generator.
    """
    logits, _ = forward(model.actor, obs)
    if not np.all(np.isfinite(logits)):
        raise TrainingDivergedError("non-finite actor logits", {"logits": logits})
    probs = softmax(logits)
    if explore:
        if rng is None:
            raise ValueError("exploration needs a random generator")
        action = int(min(np.searchsorted(np.cumsum(probs), rng.random(), side="right"), model.n_actions - 1))
    else:
        action = int(np.argmax(probs))
    value = float(forward(model.critic, obs)[0][0])
    return action, float(np.log(probs[action])), value


def a2c_gradients(model: PolicyModel, tr: Transition, cfg: TrainConfig):
    """Gradients and diagnostics for one transition.

    ``td = r + gamma * V(s') * (1 - done) - V(s)``; the critic minimizes
    ``0.5 * td**2`` with ``V(s')`` held fixed, the actor minimizes
    ``-log pi(a|s) * td - entropy_coef * H(pi(.|s))`` with ``td`` held fixed.
    Returns ``((actor_gw, actor_gb), (critic_gw, critic_gb), diagnostics)``.
    """
    v, c_cache = forward(model.critic, tr.obs)
    v = float(v[0])
    v_next = 0.0 if tr.done else float(forward(model.critic, tr.next_obs)[0][0])
    td = tr.reward + cfg.gamma * v_next - v

    logits, a_cache = forward(model.actor, tr.obs)
    p = softmax(logits)
    logp = np.log(p)
    entropy = -float(np.sum(p * logp))
    onehot = np.zeros_like(p)
    onehot[tr.action] = 1.0
    grad_logits = -td * (onehot - p) + cfg.entropy_coef * p * (logp + entropy)

    actor_grads = backward(model.actor, a_cache, grad_logits)
    critic_grads = backward(model.critic, c_cache, np.array([-td]))
    diag = {
        "td_error": td,
        "actor_loss": -float(logp[tr.action]) * td - cfg.entropy_coef * entropy,
        "critic_loss": 0.5 * td * td,
        "entropy": entropy,
        "value": v,
    }
    return actor_grads, critic_grads, diag


def a2c_update(model: PolicyModel, tr: Transition, cfg: TrainConfig):
    """One SGD step on both networks; returns ``(new_model, diagnostics)``."""
    (agw, agb), (cgw, cgb), diag = a2c_gradients(model, tr, cfg)
    if not (math.isfinite(diag["td_error"]) and math.isfinite(diag["actor_loss"])):
        raise TrainingDivergedError("non-finite loss", diag)
    actor = sgd(model.actor, agw, agb, cfg.lr_actor)
    critic = sgd(model.critic, cgw, cgb, cfg.lr_critic)
    if not (actor.is_finite() and critic.is_finite()):
        raise TrainingDivergedError("non-finite parameters after update", diag)
    return replace(model, actor=actor, critic=critic), diag


@dataclass
class TrainLog:
    rewards: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    terminations: list = field(default_factory=list)
    max_reward: float = 0.0

    def recent_ratio(self, window: int = 100) -> float:
        """Mean reward over the last ``window`` episodes divided by the per-episode maximum."""
        if not self.rewards:
            return 0.0
        return float(np.mean(self.rewards[-window:])) / self.max_reward


def train(params: PhysicalParams = PhysicalParams(), imu: ImuConfig = ImuConfig(),
          sim: SimConfig = SimConfig(), cfg: TrainConfig = TrainConfig(), model: PolicyModel | None = None,
          progress=None):
    """Train from scratch (or continue ``model``) for ``cfg.n_episodes`` episodes.

    Each episode starts upright-at-rest with a pitch drawn uniformly from
    ``+-cfg.init_phi`` and lasts at most ``cfg.horizon`` ticks. Only falls are
    terminal for bootstrapping; hitting the horizon still bootstraps from
    ``V(s')``. ``progress(episode, log)`` is called after every episode.
    """
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        model = init_model(rng, cfg.hidden, obs_scale=cfg.obs_scale, action_repeat=cfg.action_repeat)
    k = model.action_repeat
    ep_sim = replace(sim, horizon=cfg.horizon * k * sim.dt)
    env = BalanceEnv(params, imu, ep_sim)
    F = params.force_limit
    log = TrainLog(max_reward=float(cfg.horizon))
    for ep in range(cfg.n_episodes):
        phi0 = float(rng.uniform(-cfg.init_phi, cfg.init_phi))
        m = env.reset(RobotState(phi=phi0), seed=cfg.seed * 1_000_003 + ep)
        obs = observe(m, F, model.obs_scale)
        total, steps, done = 0.0, 0, False
        while not done:
            action, _, _ = select_action(model, obs, rng, explore=True)
            force = model.force(action, F)
            reward = 0.0
            try:
                for _ in range(k):
                    m, r, done = env.step(force)
                    reward += r
                    if done:
                        break
            except IntegrationDivergedError as exc:
                raise TrainingDivergedError(f"simulation diverged in episode {ep}", log=log) from exc
            # a fall ends the decision early; the missing ticks count as zero reward
            reward /= k
            next_obs = observe(m, F, model.obs_scale)
            tr = Transition(obs, action, reward, next_obs, env.termination == "fell")
            try:
                model, _ = a2c_update(model, tr, cfg)
            except TrainingDivergedError as exc:
                exc.log = log
                raise
            obs = next_obs
            total += reward
            steps += 1
        log.rewards.append(total)
        log.steps.append(steps)
        log.terminations.append(env.termination)
        if progress is not None:
            progress(ep, log)
    return model, log


class PolicyController:
    """Greedy policy in the closed loop.

    A new action is chosen every ``model.action_repeat`` ticks and held in
    between; ``last_action`` is the index currently applied.
    """

    def __init__(self, model: PolicyModel, force_limit: float):
        self.model = model
        self.force_limit = force_limit
        self.last_action = None
        self.ticks = 0

    def __call__(self, m: Measurement) -> float:
        if self.ticks % self.model.action_repeat == 0:
            obs = observe(m, self.force_limit, self.model.obs_scale)
            self.last_action, _, _ = select_action(self.model, obs, explore=False)
        self.ticks += 1
        return self.model.force(self.last_action, self.force_limit)


def run_rl_episode(model: PolicyModel, initial: RobotState, params: PhysicalParams = PhysicalParams(),
                   imu: ImuConfig = ImuConfig(), sim: SimConfig = SimConfig(),
                   seed: int | None = None) -> Trajectory:
    """Greedy closed-loop run of ``model``; records action indices and rewards."""
    ctrl = PolicyController(model, params.force_limit)
    meta = {"controller": "rl", "config": config_hash(params, imu, sim)}
    return run_closed_loop(ctrl, initial, params, imu, sim, seed=seed, meta=meta,
                           action_of=lambda: ctrl.last_action)
