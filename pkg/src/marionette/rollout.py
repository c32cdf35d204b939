"""Episode execution: directives, physics, policy, and rewards in one loop.

EpisodeRunner advances a single control step at a time so the same code
drives both batch collection for training and the interactive service.
run_episode executes a sampled EpisodeSpec end to end and returns the
flat arrays PPO consumes.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .curriculum import EpisodeSpec
from .model import HumanoidModel, randomize_model
from .motion import Directive, DirectiveStep, directive_step
from .policy import MHCPolicy, build_observation, compose_setpoints, directive_input
from .reward import RewardContext, root_commands, term_rewards, total_reward
from .rotations import yaw_of
from .sim import CONTROL_DT, Simulator, tilted_gravity

# encoder noise bound, rad and rad/s, on the observed joint channels
ENCODER_NOISE = 0.05
# ground is modeled flat; slope enters through a tilted gravity vector
GROUND_SLOPE_MAX = 0.05
# single-support lookback: 0.2 s at the control rate
SUPPORT_WINDOW_STEPS = 10


def episode_rngs(run_seed: int, iteration: int, episode_index: int):
    """Independent (sampling, observation-noise, action) streams.

    Derived from the triple alone, so any episode can be replayed without
    running the ones before it.
    """
    ss = np.random.SeedSequence([run_seed, iteration, episode_index])
    sample, noise, action = (np.random.default_rng(c) for c in ss.spawn(3))
    return sample, noise, action


def episode_environment(model: HumanoidModel, dynamics_seed: int,
                        randomize: bool = True):
    """Per-episode physics: randomized parameters plus a tilted gravity vector."""
    if not randomize:
        return model, None
    rng = np.random.default_rng(dynamics_seed)
    randomized = randomize_model(model, rng)
    gravity = tilted_gravity(rng.uniform(0.0, GROUND_SLOPE_MAX),
                             rng.uniform(0.0, 2.0 * np.pi))
    return randomized, gravity


def force_schedule(perturbations, length: int):
    """Dense per-step external force table from sparse perturbation events."""
    forces = np.zeros((length, 3))
    active = np.zeros(length, dtype=bool)
    for p in perturbations:
        lo = max(p.start_step, 0)
        hi = min(p.start_step + p.duration_steps, length)
        for s in range(lo, hi):
            forces[s] += p.force
            active[s] = True
    return forces, active


@dataclass
class StepResult:
    """Everything one control step produced."""

    obs: np.ndarray
    dir_input: np.ndarray
    action: np.ndarray
    log_prob: float
    value: float
    reward: float
    breakdown: object
    setpoints: np.ndarray
    info: object
    fell: bool


@dataclass
class EpisodeRecord:
    """One finished episode, flattened for PPO and metrics."""

    obs: np.ndarray          # (T, obs_dim), raw (pre-normalization)
    dir_inputs: np.ndarray   # (T, 2 * pose_dim)
    actions: np.ndarray      # (T, J)
    log_probs: np.ndarray    # (T,)
    values: np.ndarray       # (T,)
    rewards: np.ndarray      # (T,)
    breakdowns: list         # per-step RewardBreakdown
    perturbed: np.ndarray    # (T,) bool
    bootstrap_value: float
    terminal: str            # "fall" | "length"
    seed: tuple | None = None

    @property
    def length(self) -> int:
        return self.obs.shape[0]

    @property
    def fell(self) -> bool:
        return self.terminal == "fall"

    def term_means(self) -> dict:
        """Mean raw value per reward term over the steps it was active."""
        sums: dict = {}
        counts: dict = {}
        for b in self.breakdowns:
            for name, value in b.terms.items():
                sums[name] = sums.get(name, 0.0) + value
                counts[name] = counts.get(name, 0) + 1
        return {k: sums[k] / counts[k] for k in sums}


class EpisodeRunner:
    """Steps one episode; the active directive can be swapped between steps.

    policy_directive, when given, is what the policy is conditioned on while
    rewards and setpoint routing still follow the task directive.  The
    baselines in the evaluation module use this split; training leaves it
    None so both roles coincide.
    """

    def __init__(self, model: HumanoidModel, policy: MHCPolicy,
                 directive: Directive, gravity: np.ndarray | None = None,
                 noise_rng: np.random.Generator | None = None,
                 encoder_noise: float = ENCODER_NOISE,
                 policy_directive: Directive | None = None,
                 setpoint_hook=None):
        self.model = model
        self.policy = policy
        self.sim = Simulator(model, gravity)
        self.directive = directive
        self.policy_directive = policy_directive
        self.noise_rng = noise_rng
        self.encoder_noise = encoder_noise
        self.setpoint_hook = setpoint_hook
        self.reset()

    def reset(self) -> None:
        self.state = self.sim.default_state()
        self.hidden = self.policy.init_hidden()
        self.prev_action = np.zeros(self.model.num_joints)
        self.target_heading = yaw_of(self.state.base_quat)
        self.support = deque(maxlen=SUPPORT_WINDOW_STEPS)
        self.directive_t = 0
        self.step_index = 0
        self.fallen = False

    def set_directive(self, directive: Directive,
                      policy_directive: Directive | None = None) -> None:
        """Swap directives at a step boundary; playback restarts at frame 0."""
        self.directive = directive
        if policy_directive is not None:
            self.policy_directive = policy_directive
        self.directive_t = 0

    def current_steps(self) -> tuple[DirectiveStep, DirectiveStep]:
        task = directive_step(self.directive, self.directive_t)
        if self.policy_directive is None:
            return task, task
        return task, directive_step(self.policy_directive, self.directive_t)

    def markers(self) -> np.ndarray:
        return self.sim.marker_positions(self.state)

    @property
    def single_support_recent(self) -> bool:
        return any(self.support)

    def _observe(self, task: DirectiveStep) -> np.ndarray:
        aux = task.pose_hat.theta if self.policy.aux_target_input else None
        obs = build_observation(self.state.qpos(), self.state.qvel(),
                                self.model, aux)
        if self.encoder_noise > 0.0 and self.noise_rng is not None:
            j2 = 2 * self.model.num_joints
            obs[:j2] += self.noise_rng.uniform(-self.encoder_noise,
                                               self.encoder_noise, j2)
        return obs

    def peek_value(self) -> float:
        """Critic value of the upcoming state; used to bootstrap truncation."""
        task, pol = self.current_steps()
        obs = self._observe(task)
        _, _, value, _ = self.policy.act(obs, directive_input(pol),
                                         self.hidden, deterministic=True)
        return value

    def step(self, external_force: np.ndarray | None = None,
             action_rng: np.random.Generator | None = None,
             deterministic: bool = False) -> StepResult:
        if self.fallen:
            raise RuntimeError("episode has already terminated")
        task, pol = self.current_steps()
        obs = self._observe(task)
        dirvec = directive_input(pol)
        action, log_prob, value, self.hidden = self.policy.act(
            obs, dirvec, self.hidden, action_rng, deterministic)
        setpoints = compose_setpoints(action, pol, self.model)
        if self.setpoint_hook is not None:
            setpoints = self.setpoint_hook(setpoints, task)

        _, w_cmd, _, _, _ = root_commands(task, self.model)
        self.target_heading += w_cmd * CONTROL_DT
        self.state, info = self.sim.control_step(self.state, setpoints,
                                                 external_force)
        self.support.append(int(self.state.contact.sum()) == 1)

        ctx = RewardContext(
            target_heading=self.target_heading,
            base_acc=info.base_acc,
            touchdown=info.touchdown,
            air_at_touchdown=info.air_at_touchdown,
            single_support_recent=self.single_support_recent,
            mean_abs_tau=info.mean_abs_tau,
        )
        breakdown = term_rewards(self.state, task, ctx, self.prev_action,
                                 action, self.model)
        reward = total_reward(breakdown, task.mask)

        self.prev_action = action
        self.directive_t += 1
        self.step_index += 1
        self.fallen = self.sim.detect_fall(self.state)
        return StepResult(obs, dirvec, action, log_prob, value, reward,
                          breakdown, setpoints, info, self.fallen)


def run_episode(model: HumanoidModel, policy: MHCPolicy, spec: EpisodeSpec,
                noise_rng: np.random.Generator | None = None,
                action_rng: np.random.Generator | None = None,
                deterministic: bool = False, randomize: bool = True,
                seed: tuple | None = None) -> EpisodeRecord:
    """Execute one sampled episode and flatten it into a record."""
    env_model, gravity = episode_environment(model, spec.dynamics_seed,
                                             randomize)
    length = spec.length
    forces, active = force_schedule(spec.perturbations, length)
    runner = EpisodeRunner(env_model, policy, spec.segments[0].directive,
                           gravity=gravity, noise_rng=noise_rng)

    rows: list[StepResult] = []
    t = 0
    terminal = "length"
    for segment in spec.segments:
        runner.set_directive(segment.directive)
        for _ in range(segment.window):
            res = runner.step(forces[t], action_rng, deterministic)
            rows.append(res)
            t += 1
            if res.fell:
                terminal = "fall"
                break
        if terminal == "fall":
            break

    bootstrap = 0.0 if terminal == "fall" else runner.peek_value()
    return EpisodeRecord(
        obs=np.stack([r.obs for r in rows]),
        dir_inputs=np.stack([r.dir_input for r in rows]),
        actions=np.stack([r.action for r in rows]),
        log_probs=np.array([r.log_prob for r in rows]),
        values=np.array([r.value for r in rows]),
        rewards=np.array([r.reward for r in rows]),
        breakdowns=[r.breakdown for r in rows],
        perturbed=active[:t].copy(),
        bootstrap_value=float(bootstrap),
        terminal=terminal,
        seed=seed,
    )
