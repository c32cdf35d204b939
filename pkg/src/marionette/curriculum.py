"""Episode generation for the three-stage training curriculum.

Stages differ in episode length, command window range, perturbation regime,
and which mask patterns appear.  Sampling is pure given an rng so workers can
regenerate any episode from its seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import HumanoidModel
from .motion import Directive, Motion, make_directive, pose_dim
from .sim import Perturbation

# command sampling ranges for locomotion directives (config-level choice)
V_FORWARD_RANGE = (-0.5, 1.0)   # m/s
V_LATERAL_RANGE = (-0.3, 0.3)   # m/s
TURN_RATE_RANGE = (-0.5, 0.5)   # rad/s
STAND_PROBABILITY = 0.2         # fraction of loco segments commanding v=0

CONTINUOUS_START_PROBABILITY = 0.005    # per-step chance a stage-2/3 event begins


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str                       # "instantaneous" | "continuous"
    force_range: tuple
    duration_range: tuple           # policy steps
    probability: float              # per-step start probability

    def __post_init__(self):
        if self.kind not in ("instantaneous", "continuous"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")


@dataclass(frozen=True)
class StageSpec:
    stage: int
    episode_len: int
    window_range: tuple
    perturbation: PerturbationSpec | None
    patterns: tuple
    pattern_weights: tuple

    def __post_init__(self):
        if len(self.patterns) != len(self.pattern_weights):
            raise ValueError("pattern weight count mismatch")
        if abs(sum(self.pattern_weights) - 1.0) > 1e-9:
            raise ValueError("pattern weights must sum to 1")


STAGE_1 = StageSpec(
    stage=1, episode_len=300, window_range=(40, 100),
    perturbation=PerturbationSpec("instantaneous", (80.0, 800.0), (1, 1), 0.01),
    patterns=("LOCO",), pattern_weights=(1.0,))

STAGE_2 = StageSpec(
    stage=2, episode_len=800, window_range=(100, 400),
    perturbation=PerturbationSpec("continuous", (20.0, 150.0), (20, 50),
                                  CONTINUOUS_START_PROBABILITY),
    patterns=("LOCO",), pattern_weights=(1.0,))

STAGE_3 = StageSpec(
    stage=3, episode_len=800, window_range=(100, 400),
    perturbation=PerturbationSpec("continuous", (20.0, 150.0), (20, 50),
                                  CONTINUOUS_START_PROBABILITY),
    patterns=("FULL", "LOCO", "UPPER_STAND", "UPPER_LOCO"),
    pattern_weights=(0.25, 0.25, 0.25, 0.25))

STAGES = {1: STAGE_1, 2: STAGE_2, 3: STAGE_3}


@dataclass(frozen=True)
class EpisodeSegment:
    directive: Directive
    window: int             # policy steps this directive stays active


@dataclass(frozen=True)
class EpisodeSpec:
    segments: list
    perturbations: list
    dynamics_seed: int

    @property
    def length(self) -> int:
        return sum(s.window for s in self.segments)


def locomotion_directive(v, w: float, height: float, model: HumanoidModel,
                         horizon: int = 2) -> Directive:
    """Constant-command directive masking everything but the root fields."""
    v = np.asarray(v, dtype=float)
    if not (np.all(np.isfinite(v)) and np.isfinite(w) and np.isfinite(height)):
        raise ValueError("locomotion command must be finite")
    j = model.num_joints
    row = np.zeros(pose_dim(j))
    row[2 * j + 0:2 * j + 2] = v
    row[2 * j + 2] = w
    row[2 * j + 5] = height
    frames = np.tile(row, (max(horizon, 2), 1))
    motion = Motion(frames, j, 0.02, source_tag="loco_command")
    return make_directive(motion, "LOCO", model)


def with_root_commands(motion: Motion, v, w: float, height: float) -> Motion:
    """Copy of a motion whose root rows carry fixed locomotion commands."""
    j = motion.num_joints
    frames = motion.frames.copy()
    frames[:, 2 * j + 0:2 * j + 2] = np.asarray(v, dtype=float)
    frames[:, 2 * j + 2] = w
    frames[:, 2 * j + 3:2 * j + 5] = 0.0    # level base
    frames[:, 2 * j + 5] = height
    return Motion(frames, j, motion.dt, motion.source_tag)


def _sample_commands(rng: np.random.Generator):
    if rng.random() < STAND_PROBABILITY:
        return np.zeros(2), 0.0
    v = np.array([rng.uniform(*V_FORWARD_RANGE), rng.uniform(*V_LATERAL_RANGE)])
    w = rng.uniform(*TURN_RATE_RANGE)
    return v, float(w)


def build_directive(pattern: str, model: HumanoidModel,
                    rng: np.random.Generator, dataset: list,
                    horizon_hint: int = 2) -> Directive:
    """One directive of the requested pattern, with sampled free variables."""
    height = model.nominal_height
    if pattern == "LOCO":
        v, w = _sample_commands(rng)
        return locomotion_directive(v, w, height, model, horizon=horizon_hint)
    if not dataset:
        raise ValueError(f"pattern {pattern} needs a non-empty motion dataset")
    motion = dataset[int(rng.integers(len(dataset)))]
    if pattern == "UPPER_STAND":
        motion = with_root_commands(motion, (0.0, 0.0), 0.0, height)
    elif pattern == "UPPER_LOCO":
        v, w = _sample_commands(rng)
        motion = with_root_commands(motion, v, w, height)
    elif pattern != "FULL":
        raise ValueError(f"unknown pattern {pattern!r}")
    start = int(rng.integers(motion.horizon))
    return make_directive(motion, pattern, model, start_offset=start)


def perturbation_events(stage: StageSpec, episode_len: int,
                        rng: np.random.Generator) -> list:
    """Sampled external-force events for one episode."""
    spec = stage.perturbation
    if spec is None or spec.probability <= 0.0:
        return []
    events = []
    step = 0
    while step < episode_len:
        if rng.random() < spec.probability:
            magnitude = rng.uniform(*spec.force_range)
            duration = int(rng.integers(spec.duration_range[0],
                                        spec.duration_range[1] + 1))
            angle = rng.uniform(0.0, 2.0 * np.pi)
            force = magnitude * np.array([np.cos(angle), np.sin(angle), 0.0])
            events.append(Perturbation(force, step, duration))
            step += duration     # no overlapping events
        else:
            step += 1
    return events


def sample_episode(stage: StageSpec, dataset: list, model: HumanoidModel,
                   rng: np.random.Generator) -> EpisodeSpec:
    """Window/directive segments plus perturbations for one episode."""
    needs_motions = any(p != "LOCO" for p in stage.patterns)
    if needs_motions and not dataset:
        raise ValueError(f"stage {stage.stage} needs a non-empty motion dataset")
    segments = []
    remaining = stage.episode_len
    lo, hi = stage.window_range
    while remaining > 0:
        window = int(rng.integers(lo, hi + 1))
        window = min(window, remaining)     # final segment absorbs the tail
        pattern = stage.patterns[int(rng.choice(len(stage.patterns),
                                                p=stage.pattern_weights))]
        directive = build_directive(pattern, model, rng, dataset)
        segments.append(EpisodeSegment(directive, window))
        remaining -= window
    events = perturbation_events(stage, stage.episode_len, rng)
    return EpisodeSpec(segments, events, dynamics_seed=int(rng.integers(2 ** 31)))


def validate_episode(spec: EpisodeSpec, stage: StageSpec) -> None:
    """Raise if an episode does not conform to its stage."""
    if spec.length != stage.episode_len:
        raise ValueError("segment windows do not cover the episode")
    lo, hi = stage.window_range
    for i, seg in enumerate(spec.segments):
        if seg.directive.pattern not in stage.patterns:
            raise ValueError(f"pattern {seg.directive.pattern} not allowed")
        last = i == len(spec.segments) - 1
        if seg.window > hi or (not last and seg.window < lo):
            raise ValueError(f"window {seg.window} outside {stage.window_range}")
    p = stage.perturbation
    for ev in spec.perturbations:
        mag = float(np.linalg.norm(ev.force))
        if not (p.force_range[0] - 1e-9 <= mag <= p.force_range[1] + 1e-9):
            raise ValueError(f"force magnitude {mag} outside {p.force_range}")
        if not (p.duration_range[0] <= ev.duration_steps <= p.duration_range[1]):
            raise ValueError(f"duration {ev.duration_steps} outside range")
        if ev.start_step < 0 or ev.start_step >= stage.episode_len:
            raise ValueError("perturbation starts outside the episode")


@dataclass
class GateConfig:
    min_episodes: int = 200
    completion_threshold: float = 0.9   # mean fraction of episode survived
    reward_threshold: float = 0.7       # mean per-step task reward


def stage_gate(completions, rewards, config: GateConfig | None = None) -> bool:
    """Advance when recent episodes mostly run to length and track well.

    Inclusive thresholds: exactly meeting both advances.
    """
    config = config or GateConfig()
    completions = np.asarray(completions, dtype=float)
    rewards = np.asarray(rewards, dtype=float)
    if completions.shape[0] < config.min_episodes:
        return False
    recent = slice(-config.min_episodes, None)
    return (float(completions[recent].mean()) >= config.completion_threshold
            and float(rewards[recent].mean()) >= config.reward_threshold)
