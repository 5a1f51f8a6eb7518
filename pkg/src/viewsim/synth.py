"""Deterministic synthetic content and trajectories with planted structure.

Every generated byte is a pure function of the scenario (including its
seed).  Randomness comes from an explicit splitmix-style 64-bit generator,
never from platform RNGs, so outputs are stable across machines and runs.
Groups of users share a motion anchor (orbit, static point, or a seeded
random walk) with an optional per-member offset inside a small ball; gaze
models aim at the content centroid, a fixed direction, or a jittered
centroid aim.  The planted partition is the generator's own group split,
used to score recovered clusters.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InvalidParamsError
from .geometry import PointCloudFrame, unit
from .ply import write_ply
from .trajectories import Trajectory, TrajectorySample, write_trajectories

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """Tiny deterministic RNG; the whole sequence is pinned by the seed."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN_GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return (z ^ (z >> 31)) & _MASK64

    def uniform(self) -> float:
        """[0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def gauss(self) -> float:
        """Box-Muller; one fresh pair per call, cosine branch only."""
        u1 = self.uniform()
        while u1 == 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def gauss_vec3(self, sigma: float) -> np.ndarray:
        return np.array([self.gauss() * sigma for _ in range(3)])

    def uniform_ball(self, radius: float) -> np.ndarray:
        """Rejection-sampled point in the closed ball of given radius."""
        while True:
            v = np.array([2.0 * self.uniform() - 1.0 for _ in range(3)])
            if float(v @ v) <= 1.0:
                return v * radius


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


def derive_stream(seed: int, *tags) -> SplitMix64:
    """Independent substream for one (user, purpose) pair."""
    return SplitMix64((seed & _MASK64) ^ _fnv1a64("/".join(str(t) for t in tags)))


@dataclass(frozen=True)
class OrbitMotion:
    """Circular path in the horizontal plane around the content centre."""

    radius: float
    angular_speed: float
    phase: float = 0.0
    height: float = 0.0

    kind = "orbit"

    def __post_init__(self):
        if not self.radius > 0.0:
            raise InvalidParamsError(f"orbit radius must be > 0, got {self.radius}")

    def position(self, t: float, rng: SplitMix64 | None) -> np.ndarray:
        a = self.phase + self.angular_speed * t
        return np.array([self.radius * math.cos(a), self.height, self.radius * math.sin(a)])


@dataclass(frozen=True)
class StaticMotion:
    position_xyz: tuple

    kind = "static"

    def position(self, t: float, rng: SplitMix64 | None) -> np.ndarray:
        return np.asarray(self.position_xyz, dtype=np.float64).copy()


@dataclass(frozen=True)
class RandomWalkMotion:
    """Gaussian steps per frame from a fixed start (per-member stream)."""

    step_sigma: float
    start: tuple = (0.0, 0.0, 2.5)

    kind = "random_walk"

    def position(self, t: float, rng: SplitMix64 | None) -> np.ndarray:
        raise NotImplementedError("random walks are generated sequentially")


@dataclass(frozen=True)
class AtCentroidGaze:
    kind = "at-centroid"


@dataclass(frozen=True)
class FixedDirectionGaze:
    direction: tuple

    kind = "fixed-direction"


@dataclass(frozen=True)
class JitteredGaze:
    """Centroid aim plus a per-frame Gaussian offset of given sigma."""

    sigma: float

    kind = "jittered"


@dataclass(frozen=True)
class GroupSpec:
    """A block of users sharing one motion anchor and gaze model.

    ``jitter`` is the radius of the per-member constant offset ball, so
    intra-group position distances stay bounded by 2 * jitter.
    """

    size: int
    motion: object
    gaze: object
    jitter: float = 0.0

    def __post_init__(self):
        if self.size < 1:
            raise InvalidParamsError(f"group size must be >= 1, got {self.size}")
        if self.jitter < 0.0:
            raise InvalidParamsError(f"jitter must be >= 0, got {self.jitter}")


@dataclass(frozen=True)
class SynthScenario:
    seed: int
    cloud_kind: str
    points_per_frame: int
    n_frames: int
    fps: float
    groups: tuple

    def __post_init__(self):
        if self.cloud_kind not in ("sphere", "cylinder", "humanoid-blocks"):
            raise InvalidParamsError(f"unknown cloud_kind '{self.cloud_kind}'")
        if self.points_per_frame < 1 or self.n_frames < 1:
            raise InvalidParamsError("points_per_frame and n_frames must be >= 1")
        if not (self.fps > 0.0 and math.isfinite(self.fps)):
            raise InvalidParamsError(f"fps must be positive, got {self.fps}")
        if not self.groups:
            raise InvalidParamsError("scenario needs at least one group")
        object.__setattr__(self, "groups", tuple(self.groups))

    @property
    def n_users(self) -> int:
        return sum(g.size for g in self.groups)

    @property
    def content_id(self) -> str:
        return f"synth-{self.cloud_kind}-{self.seed}"


_BODY_RADIUS = 0.9  # 1.8 m extent, human-body scale


def _fibonacci_sphere(n: int, radius: float) -> np.ndarray:
    i = np.arange(n, dtype=np.float64)
    y = 1.0 - 2.0 * (i + 0.5) / n
    rho = np.sqrt(np.maximum(0.0, 1.0 - y * y))
    theta = math.pi * (3.0 - math.sqrt(5.0)) * i
    return radius * np.column_stack([rho * np.cos(theta), y, rho * np.sin(theta)])


def _cylinder(n: int, radius: float, half_height: float) -> np.ndarray:
    i = np.arange(n, dtype=np.float64)
    y = -half_height + 2.0 * half_height * (i + 0.5) / n
    theta = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.column_stack([radius * np.cos(theta), y, radius * np.sin(theta)])


def _low_discrepancy(n: int, dim: int = 3) -> np.ndarray:
    # Additive recurrence on powers of the plastic constant.
    g = 1.32471795724474602596
    alphas = np.array([(1.0 / g) ** (d + 1) for d in range(dim)])
    i = np.arange(1, n + 1, dtype=np.float64)
    return np.mod(0.5 + np.outer(i, alphas), 1.0)


def _box(n: int, lo, hi) -> np.ndarray:
    u = _low_discrepancy(n)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    return lo + u * (hi - lo)


def _humanoid_blocks(n: int) -> np.ndarray:
    # Crude body: two legs, torso, head; 1.8 m tall, centred on the origin.
    shares = [
        (0.15, (-0.18, -0.9, -0.10), (-0.02, 0.0, 0.10)),   # left leg
        (0.15, (0.02, -0.9, -0.10), (0.18, 0.0, 0.10)),     # right leg
        (0.40, (-0.22, 0.0, -0.12), (0.22, 0.6, 0.12)),     # torso
        (0.10, (-0.42, 0.25, -0.08), (-0.22, 0.55, 0.08)),  # left arm
        (0.10, (0.22, 0.25, -0.08), (0.42, 0.55, 0.08)),    # right arm
    ]
    blocks = []
    used = 0
    for share, lo, hi in shares:
        cnt = int(round(share * n))
        blocks.append(_box(cnt, lo, hi))
        used += cnt
    head = max(n - used, 0)
    if head:
        sphere = _fibonacci_sphere(head, 0.15)
        sphere[:, 1] += 0.75
        blocks.append(sphere)
    pts = np.concatenate(blocks, axis=0)
    return pts[:n]


def generate_cloud(scenario: SynthScenario) -> list:
    """Rigid content repeated across frames (one shared coordinate array)."""
    n = scenario.points_per_frame
    if scenario.cloud_kind == "sphere":
        pts = _fibonacci_sphere(n, _BODY_RADIUS)
    elif scenario.cloud_kind == "cylinder":
        pts = _cylinder(n, 0.3, _BODY_RADIUS)
    else:
        pts = _humanoid_blocks(n)
    return [PointCloudFrame(frame_index=k, points=pts) for k in range(scenario.n_frames)]


def _member_positions(scenario: SynthScenario, gi: int, group: GroupSpec) -> list:
    """(n_frames, 3) positions per member of one group."""
    times = np.arange(scenario.n_frames) / scenario.fps
    out = []
    for mi in range(group.size):
        offset = np.zeros(3)
        if group.jitter > 0.0:
            offset = derive_stream(scenario.seed, "offset", gi, mi).uniform_ball(group.jitter)
        if isinstance(group.motion, RandomWalkMotion):
            rng = derive_stream(scenario.seed, "walk", gi, mi)
            pos = np.empty((scenario.n_frames, 3))
            cur = np.asarray(group.motion.start, dtype=np.float64) + offset
            for k in range(scenario.n_frames):
                pos[k] = cur
                cur = cur + rng.gauss_vec3(group.motion.step_sigma)
        else:
            pos = np.stack([group.motion.position(t, None) + offset for t in times])
        out.append(pos)
    return out


def _gaze_direction(gaze, x: np.ndarray, centroid: np.ndarray, rng: SplitMix64 | None) -> np.ndarray:
    if isinstance(gaze, FixedDirectionGaze):
        return unit(np.asarray(gaze.direction, dtype=np.float64))
    aim = centroid - x
    if float(aim @ aim) == 0.0:
        aim = np.array([0.0, 0.0, -1.0])
    if isinstance(gaze, JitteredGaze) and gaze.sigma > 0.0:
        aim = unit(aim) + rng.gauss_vec3(gaze.sigma)
        if float(aim @ aim) == 0.0:
            aim = np.array([0.0, 0.0, -1.0])
    return unit(aim)


def generate_trajectories(scenario: SynthScenario, clouds: list | None = None) -> list:
    """Aligned trajectories (one sample per frame); p/r left underived."""
    if clouds is None:
        clouds = generate_cloud(scenario)
    if len(clouds) < scenario.n_frames:
        raise InvalidParamsError("cloud sequence shorter than the scenario")
    width = max(2, len(str(scenario.n_users - 1)))
    trajs = []
    uid = 0
    for gi, group in enumerate(scenario.groups):
        positions = _member_positions(scenario, gi, group)
        for mi in range(group.size):
            rng = derive_stream(scenario.seed, "gaze", gi, mi)
            samples = []
            for k in range(scenario.n_frames):
                x = positions[mi][k]
                view = _gaze_direction(group.gaze, x, clouds[k].centroid, rng)
                samples.append(
                    TrajectorySample(t=k / scenario.fps, frame=k, x=x, view=view)
                )
            trajs.append(Trajectory(user_id=f"u{uid:0{width}d}", samples=samples))
            uid += 1
    return trajs


def planted_labels(scenario: SynthScenario) -> dict:
    """user id -> group index; the partition holds at every frame."""
    width = max(2, len(str(scenario.n_users - 1)))
    labels = {}
    uid = 0
    for gi, group in enumerate(scenario.groups):
        for _ in range(group.size):
            labels[f"u{uid:0{width}d}"] = gi
            uid += 1
    return labels


_MOTION_KINDS = {"orbit": OrbitMotion, "static": StaticMotion, "random_walk": RandomWalkMotion}
_GAZE_KINDS = {"at-centroid": AtCentroidGaze, "fixed-direction": FixedDirectionGaze, "jittered": JitteredGaze}


def _motion_to_json(m) -> dict:
    if isinstance(m, OrbitMotion):
        return {"kind": m.kind, "radius": m.radius, "angular_speed": m.angular_speed, "phase": m.phase, "height": m.height}
    if isinstance(m, StaticMotion):
        return {"kind": m.kind, "position": list(m.position_xyz)}
    if isinstance(m, RandomWalkMotion):
        return {"kind": m.kind, "step_sigma": m.step_sigma, "start": list(m.start)}
    raise InvalidParamsError(f"unknown motion {m!r}")


def _gaze_to_json(g) -> dict:
    if isinstance(g, AtCentroidGaze):
        return {"kind": g.kind}
    if isinstance(g, FixedDirectionGaze):
        return {"kind": g.kind, "direction": list(g.direction)}
    if isinstance(g, JitteredGaze):
        return {"kind": g.kind, "sigma": g.sigma}
    raise InvalidParamsError(f"unknown gaze {g!r}")


def scenario_to_json(scenario: SynthScenario) -> dict:
    return {
        "seed": scenario.seed,
        "cloud_kind": scenario.cloud_kind,
        "points_per_frame": scenario.points_per_frame,
        "n_frames": scenario.n_frames,
        "fps": scenario.fps,
        "groups": [
            {
                "size": g.size,
                "motion": _motion_to_json(g.motion),
                "gaze": _gaze_to_json(g.gaze),
                "jitter": g.jitter,
            }
            for g in scenario.groups
        ],
    }


def _take(d: dict, required: tuple, optional: dict, where: str) -> dict:
    unknown = set(d) - set(required) - set(optional)
    if unknown:
        raise DataError(f"unknown keys {sorted(unknown)} in {where}")
    missing = [k for k in required if k not in d]
    if missing:
        raise DataError(f"missing keys {missing} in {where}")
    out = dict(optional)
    out.update(d)
    return out


def _motion_from_json(d: dict):
    kind = d.get("kind")
    if kind == "orbit":
        v = _take(d, ("kind", "radius", "angular_speed"), {"phase": 0.0, "height": 0.0}, "orbit motion")
        return OrbitMotion(radius=float(v["radius"]), angular_speed=float(v["angular_speed"]), phase=float(v["phase"]), height=float(v["height"]))
    if kind == "static":
        v = _take(d, ("kind", "position"), {}, "static motion")
        return StaticMotion(position_xyz=tuple(float(c) for c in v["position"]))
    if kind == "random_walk":
        v = _take(d, ("kind", "step_sigma"), {"start": [0.0, 0.0, 2.5]}, "random_walk motion")
        return RandomWalkMotion(step_sigma=float(v["step_sigma"]), start=tuple(float(c) for c in v["start"]))
    raise DataError(f"unknown motion kind '{kind}'")


def _gaze_from_json(d: dict):
    kind = d.get("kind")
    if kind == "at-centroid":
        _take(d, ("kind",), {}, "gaze")
        return AtCentroidGaze()
    if kind == "fixed-direction":
        v = _take(d, ("kind", "direction"), {}, "gaze")
        return FixedDirectionGaze(direction=tuple(float(c) for c in v["direction"]))
    if kind == "jittered":
        v = _take(d, ("kind", "sigma"), {}, "gaze")
        return JitteredGaze(sigma=float(v["sigma"]))
    raise DataError(f"unknown gaze kind '{kind}'")


def scenario_from_json(d: dict) -> SynthScenario:
    v = _take(
        d,
        ("seed", "cloud_kind", "points_per_frame", "n_frames", "fps", "groups"),
        {},
        "scenario",
    )
    groups = []
    for g in v["groups"]:
        gv = _take(g, ("size", "motion", "gaze"), {"jitter": 0.0}, "group")
        groups.append(
            GroupSpec(
                size=int(gv["size"]),
                motion=_motion_from_json(gv["motion"]),
                gaze=_gaze_from_json(gv["gaze"]),
                jitter=float(gv["jitter"]),
            )
        )
    return SynthScenario(
        seed=int(v["seed"]),
        cloud_kind=str(v["cloud_kind"]),
        points_per_frame=int(v["points_per_frame"]),
        n_frames=int(v["n_frames"]),
        fps=float(v["fps"]),
        groups=tuple(groups),
    )


def three_orbit_groups(
    seed: int = 7,
    users_per_group: int = 4,
    n_frames: int = 60,
    points_per_frame: int = 4000,
    fps: float = 30.0,
    cloud_kind: str = "sphere",
) -> SynthScenario:
    """Three well-separated orbiting groups; the standard planted scenario."""
    groups = tuple(
        GroupSpec(
            size=users_per_group,
            motion=OrbitMotion(radius=2.0, angular_speed=0.25, phase=g * 2.0 * math.pi / 3.0),
            gaze=AtCentroidGaze(),
            jitter=0.02,
        )
        for g in range(3)
    )
    return SynthScenario(
        seed=seed,
        cloud_kind=cloud_kind,
        points_per_frame=points_per_frame,
        n_frames=n_frames,
        fps=fps,
        groups=groups,
    )


def write_scenario(scenario: SynthScenario, out_dir) -> dict:
    """Materialize clouds (PLY), trajectories (CSV), labels, and a manifest.

    Returns the manifest dictionary (also written as manifest.json).
    """
    out_dir = os.fspath(out_dir)
    cloud_dir = os.path.join(out_dir, "clouds")
    os.makedirs(cloud_dir, exist_ok=True)
    clouds = generate_cloud(scenario)
    for c in clouds:
        write_ply(os.path.join(cloud_dir, f"frame_{c.frame_index:06d}.ply"), c.points)
    trajs = generate_trajectories(scenario, clouds)
    traj_path = os.path.join(out_dir, "trajectories.csv")
    write_trajectories(traj_path, trajs)
    with open(os.path.join(out_dir, "labels.json"), "w") as fh:
        json.dump({"groups": planted_labels(scenario)}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "scenario.json"), "w") as fh:
        json.dump(scenario_to_json(scenario), fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest = {
        "content_id": scenario.content_id,
        "cloud_dir": "clouds",
        "trajectory_csv": "trajectories.csv",
        "fps": scenario.fps,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
