"""Regenerate the bundled assets: model JSON, source clips, and motions.

Clips are authored in joint space and rendered to marker targets with the
model's own forward kinematics, so the retargeting solver always has an
exactly realizable answer.  Run from the repository root:

    python3 scripts/generate_assets.py
"""

import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from marionette import retarget as rt              # noqa: E402
from marionette.cli import main as cli_main        # noqa: E402
from marionette.model import default_model, save_model   # noqa: E402

MODEL = default_model()
ASSETS = ROOT / "src" / "marionette" / "assets"

# Standing-leg drop: both 0.4 m segments bend from the nominal 0.2/0.4 pose.


def leg_drop(hip: float, knee: float) -> float:
    nominal = 0.4 * np.cos(-0.2) + 0.4 * np.cos(-0.2 + 0.4)
    return 0.4 * np.cos(hip) + 0.4 * np.cos(hip + knee) - nominal


def standing_pose(t: float) -> np.ndarray:
    return MODEL.nominal_theta.copy()


def make_clip(name: str, duration: float, pose_fn, fps: float = 20.0,
              base_fn=None):
    times = np.arange(0.0, duration + 1e-9, 1.0 / fps)
    frames = []
    for t in times:
        theta = pose_fn(t)
        if base_fn is not None:
            base = base_fn(t, theta)
        else:
            base = np.array([0.0, 0.0, MODEL.nominal_height])
        quat = np.array([1.0, 0.0, 0.0, 0.0])
        frames.append(rt.marker_fk(MODEL, base, quat, theta))
    return rt.SourceClip(list(MODEL.marker_names), np.array(frames), times,
                         name=name)


def osc(t, period, lo, hi, phase=0.0):
    return lo + (hi - lo) * 0.5 * (1.0 - np.cos(2.0 * np.pi * t / period + phase))


# -- arm clips (legs stay in the nominal stance) ----------------------------


def wave(t):
    th = standing_pose(t)
    th[3] = osc(t, 2.4, 0.0, 2.4)            # raise the right arm
    th[4] = 0.3
    th[5] = -0.9 + 0.5 * np.sin(2.0 * np.pi * t / 0.6) * min(t / 0.6, 1.0)
    return th


def reach(side):
    base_idx = 0 if side == "l" else 3

    def pose(t):
        th = standing_pose(t)
        a = osc(t, 2.0, 0.0, 1.0)
        th[base_idx] = 1.5 * a               # shoulder forward
        th[base_idx + 2] = -1.2 * (1.0 - a)  # elbow straightens as it reaches
        return th
    return pose


def clap(t):
    th = standing_pose(t)
    raise_a = min(t / 0.5, 1.0)
    flex = 0.5 + 0.45 * np.cos(2.0 * np.pi * t / 0.5)
    for s in (0, 3):
        th[s] = 1.2 * raise_a
        th[s + 1] = 0.35 * raise_a
        th[s + 2] = -flex * raise_a
    return th


def stretch(t):
    th = standing_pose(t)
    a = osc(t, 3.0, 0.0, 1.0)
    th[0] = th[3] = 2.6 * a
    th[1] = th[4] = 0.25 * a
    th[2] = th[5] = -0.3 * (1.0 - a)
    return th


def punch(side):
    base_idx = 0 if side == "l" else 3

    def pose(t):
        th = standing_pose(t)
        guard = -1.8
        jab = osc(t, 0.8, 0.0, 1.0)
        th[base_idx] = 0.9 + 0.5 * jab
        th[base_idx + 2] = guard * (1.0 - jab) - 0.1 * jab
        other = 3 - base_idx
        th[other] = 0.9
        th[other + 2] = guard
        return th
    return pose


def circles(t):
    th = standing_pose(t)
    ph = 2.0 * np.pi * t / 2.5
    th[0] = 1.2 + 0.8 * np.sin(ph)
    th[1] = 0.5 + 0.4 * np.cos(ph)
    th[3] = 1.2 + 0.8 * np.sin(ph + np.pi)
    th[4] = 0.5 + 0.4 * np.cos(ph + np.pi)
    th[2] = th[5] = -0.4
    return th


def sway(t):
    # Arms only: a hip roll here would drag the planted foot markers
    # sideways into the stance locks and the solves would all fail.
    th = standing_pose(t)
    roll = 0.35 * np.sin(2.0 * np.pi * t / 2.0)
    th[1] = 0.8 + roll
    th[4] = 0.8 - roll
    th[2] = th[5] = -0.6
    return th


# -- whole-body clips -------------------------------------------------------


def squat(t):
    th = standing_pose(t)
    bend = osc(t, 2.4, 0.0, 1.0)
    th[6] = th[10] = -0.2 - 0.7 * bend
    th[8] = th[12] = 0.4 + 1.4 * bend
    th[9] = th[13] = -0.2 - 0.7 * bend
    th[0] = th[3] = 0.9 * bend               # arms forward for balance
    th[2] = th[5] = -0.2 * bend
    return th


def squat_base(t, th):
    return np.array([0.0, 0.0, MODEL.nominal_height + leg_drop(th[6], th[8])])


def crouch_reach(t):
    th = standing_pose(t)
    bend = osc(t, 2.8, 0.0, 0.6)
    th[6] = th[10] = -0.2 - 0.6 * bend
    th[8] = th[12] = 0.4 + 1.2 * bend
    th[9] = th[13] = -0.2 - 0.6 * bend
    th[0] = osc(t, 2.8, 0.0, 2.0)
    th[2] = -0.3
    return th


CLIPS = [
    ("wave", 2.4, wave, 20.0, None),
    ("reach_l", 2.0, reach("l"), 20.0, None),
    ("reach_r", 2.0, reach("r"), 20.0, None),
    ("clap", 2.0, clap, 30.0, None),
    ("stretch", 3.0, stretch, 20.0, None),
    ("punch_l", 1.6, punch("l"), 25.0, None),
    ("punch_r", 1.6, punch("r"), 25.0, None),
    ("circles", 2.5, circles, 20.0, None),
    ("sway", 2.0, sway, 20.0, None),
    ("squat", 2.4, squat, 20.0, squat_base),
    ("crouch_reach", 2.8, crouch_reach, 20.0, squat_base),
]


def main() -> int:
    (ASSETS / "models").mkdir(parents=True, exist_ok=True)
    (ASSETS / "clips").mkdir(parents=True, exist_ok=True)
    save_model(MODEL, ASSETS / "models" / "reduced_humanoid.json")
    print(f"model -> {ASSETS / 'models' / 'reduced_humanoid.json'}")

    for name, duration, pose_fn, fps, base_fn in CLIPS:
        clip = make_clip(name, duration, pose_fn, fps, base_fn)
        rt.save_clip(clip, ASSETS / "clips" / f"{name}.json")
        print(f"clip {name}: {clip.frames.shape[0]} frames @ {fps:g} Hz")

    return cli_main(["retarget",
                     "--clips", str(ASSETS / "clips"),
                     "--out", str(ASSETS / "motions")])


if __name__ == "__main__":
    sys.exit(main())
