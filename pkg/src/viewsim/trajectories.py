"""User navigation traces and their alignment to the content frame clock.

A trajectory is a time series of samples ``(t, x, view)`` per user, with
two derived quantities filled in later: ``p`` (the viewport centre, a point
on the content surface) and ``r`` (viewing distance).  A sample whose gaze
misses the content, or that falls in a capture gap after alignment, is
marked ``off_content`` and keeps ``p = r = None``.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataError,
    EmptyTrajectoryError,
    InvalidParamsError,
    MissingFrameError,
    ParseError,
    PreconditionError,
)
from .geometry import (
    DEFAULT_CONE_HALF_ANGLE,
    FrustumParams,
    Pose,
    as_vec3,
    pose_from_view,
    quat_to_matrix,
    ray_cast_center,
    unit,
)

_BASE_COLUMNS = [
    "user_id",
    "t",
    "pos_x",
    "pos_y",
    "pos_z",
    "quat_w",
    "quat_x",
    "quat_y",
    "quat_z",
]
_PR_COLUMNS = ["p_x", "p_y", "p_z", "r"]


@dataclass
class TrajectorySample:
    t: float
    frame: int
    x: np.ndarray
    view: np.ndarray
    p: np.ndarray | None = None
    r: float | None = None
    off_content: bool = False

    def __post_init__(self):
        self.x = as_vec3(self.x)
        self.view = unit(self.view)
        if self.p is not None:
            self.p = as_vec3(self.p)
        if (self.p is None) != (self.r is None):
            raise ValueError("p and r must be set together")
        if self.off_content and self.p is not None:
            raise ValueError("off-content sample cannot carry p/r")

    def pose(self) -> Pose:
        """Viewer pose; roll is fixed by the world-up convention."""
        return pose_from_view(self.x, self.view)


@dataclass
class Trajectory:
    user_id: str
    samples: list

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def has_pr(self) -> bool:
        """True when some sample already carries derived p/r."""
        return any(s.p is not None for s in self.samples)


@dataclass
class SessionDataset:
    """Aligned trajectories of one content item plus its cloud sequence."""

    content_id: str
    fps: float
    trajectories: list
    clouds: object = None
    frustum: FrustumParams = field(default_factory=FrustumParams)

    def __post_init__(self):
        ids = [t.user_id for t in self.trajectories]
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate user ids in dataset '{self.content_id}'")
        self.trajectories = sorted(self.trajectories, key=lambda t: t.user_id)

    @property
    def users(self) -> tuple:
        return tuple(t.user_id for t in self.trajectories)

    @property
    def n_frames(self) -> int:
        lengths = {len(t) for t in self.trajectories}
        if len(lengths) != 1:
            raise DataError("trajectories are not aligned to a common frame clock")
        return lengths.pop()


def _parse_float(tok, path, line, col):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"bad float '{tok}' in column {col}", path=path, line=line)
    if not np.isfinite(v):
        raise ParseError(f"non-finite value in column {col}", path=path, line=line)
    return v


def load_trajectories(path) -> list:
    """Read per-user traces from CSV.

    Columns: ``user_id,t,pos_x,pos_y,pos_z,quat_w,quat_x,quat_y,quat_z`` with
    optional trailing ``p_x,p_y,p_z,r``.  Rows are grouped by user and sorted
    by time; duplicate (user, t) pairs are rejected.  Quaternions are
    normalized on load (zero-norm rows are rejected).  Empty p/r fields on a
    row with the optional columns present mark that sample off-content.
    """
    rows_by_user: dict = {}
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty trajectory file", path=path, line=1)
        header = [h.strip() for h in header]
        if header[: len(_BASE_COLUMNS)] != _BASE_COLUMNS:
            raise ParseError(
                f"header must start with {','.join(_BASE_COLUMNS)}", path=path, line=1
            )
        extra = header[len(_BASE_COLUMNS):]
        if extra not in ([], _PR_COLUMNS):
            raise ParseError(
                f"optional columns must be exactly {','.join(_PR_COLUMNS)}", path=path, line=1
            )
        has_pr = bool(extra)
        ncols = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != ncols:
                raise ParseError(f"expected {ncols} fields, got {len(row)}", path=path, line=lineno)
            uid = row[0].strip()
            if not uid:
                raise ParseError("empty user_id", path=path, line=lineno)
            t = _parse_float(row[1], path, lineno, "t")
            if t < 0.0:
                raise ParseError(f"negative timestamp {t}", path=path, line=lineno)
            x = np.array([_parse_float(row[i], path, lineno, header[i]) for i in (2, 3, 4)])
            q = np.array([_parse_float(row[i], path, lineno, header[i]) for i in (5, 6, 7, 8)])
            qn = float(np.linalg.norm(q))
            if qn == 0.0:
                raise ParseError("zero-norm quaternion", path=path, line=lineno)
            q = q / qn
            p = None
            r = None
            off = False
            if has_pr:
                pr = [row[i].strip() for i in range(9, 13)]
                if all(pr):
                    p = np.array([_parse_float(v, path, lineno, c) for v, c in zip(pr[:3], _PR_COLUMNS)])
                    r = _parse_float(pr[3], path, lineno, "r")
                    if r < 0.0:
                        raise ParseError(f"negative r {r}", path=path, line=lineno)
                elif any(pr):
                    raise ParseError("p_x,p_y,p_z,r must be all present or all empty", path=path, line=lineno)
                else:
                    off = True
            view = quat_to_matrix(q) @ np.array([0.0, 0.0, -1.0])
            rows_by_user.setdefault(uid, []).append((t, x, view, p, r, off))
    if not rows_by_user:
        raise ParseError("trajectory file has no data rows", path=path)
    trajs = []
    for uid in sorted(rows_by_user):
        rows = sorted(rows_by_user[uid], key=lambda r: r[0])
        times = [r[0] for r in rows]
        if len(set(times)) != len(times):
            raise ParseError(f"duplicate timestamps for user '{uid}'", path=path)
        samples = [
            TrajectorySample(t=t, frame=-1, x=x, view=v, p=p, r=r, off_content=off)
            for (t, x, v, p, r, off) in rows
        ]
        trajs.append(Trajectory(user_id=uid, samples=samples))
    return trajs


def align_to_frames(trajs: list, fps: float, n_frames: int | None = None) -> list:
    """Resample every trajectory onto the shared frame clock k / fps.

    Nearest-sample-in-time selection, no interpolation.  A frame farther
    than half a frame period from every raw sample is marked off-content.
    The frame count defaults to the shortest trajectory's span.  Aligning an
    already aligned trajectory at the same fps is the identity.
    """
    if fps <= 0.0 or not np.isfinite(fps):
        raise InvalidParamsError(f"fps must be positive, got {fps}")
    for tr in trajs:
        if not tr.samples:
            raise EmptyTrajectoryError(f"user '{tr.user_id}' has no samples")
    if n_frames is None:
        n_frames = min(int(round(tr.samples[-1].t * fps)) + 1 for tr in trajs)
    if n_frames < 1:
        raise EmptyTrajectoryError("trajectories span less than one frame interval")
    half = 0.5 / fps
    out = []
    for tr in trajs:
        times = np.array([s.t for s in tr.samples])
        aligned = []
        for k in range(n_frames):
            tk = k / fps
            j = int(np.searchsorted(times, tk))
            if j == len(times):
                j -= 1
            elif j > 0 and tk - times[j - 1] <= times[j] - tk:
                j -= 1  # earlier sample on exact ties
            src = tr.samples[j]
            gap = abs(src.t - tk) > half + 1e-12
            off = gap or src.off_content
            aligned.append(
                TrajectorySample(
                    t=tk,
                    frame=k,
                    x=src.x.copy(),
                    view=src.view.copy(),
                    p=None if off or src.p is None else src.p.copy(),
                    r=None if off or src.p is None else src.r,
                    off_content=off,
                )
            )
        out.append(Trajectory(user_id=tr.user_id, samples=aligned))
    return out


def derive_pr(
    traj: Trajectory,
    clouds,
    params: FrustumParams | None = None,
    cone: float = DEFAULT_CONE_HALF_ANGLE,
    r_mode: str = "viewport",
) -> Trajectory:
    """Fill p and r by casting the gaze ray into each frame's cloud.

    ``r_mode='viewport'`` sets r = |x - p|; ``'centroid'`` measures to the
    cloud centroid instead (p is still the ray hit).  Samples whose ray
    misses the cone are marked off-content.  Rejects trajectories that
    already carry p/r.
    """
    if r_mode not in ("viewport", "centroid"):
        raise InvalidParamsError(f"unknown r_mode '{r_mode}'")
    if traj.has_pr:
        raise PreconditionError(f"user '{traj.user_id}' already carries p/r")
    if params is None:
        params = FrustumParams()
    max_frame = max((s.frame for s in traj.samples), default=-1)
    if max_frame >= len(clouds):
        raise MissingFrameError(
            f"trajectory needs frame {max_frame} but cloud sequence has {len(clouds)}"
        )
    out = []
    for s in traj.samples:
        if s.off_content:
            out.append(dataclasses.replace(s))
            continue
        cloud = clouds[s.frame]
        hit = ray_cast_center(s.pose(), cloud, cone_half_angle=cone)
        if hit is None:
            out.append(
                TrajectorySample(t=s.t, frame=s.frame, x=s.x.copy(), view=s.view.copy(), off_content=True)
            )
            continue
        p, r = hit
        if r_mode == "centroid":
            r = float(np.linalg.norm(s.x - cloud.centroid))
        out.append(
            TrajectorySample(t=s.t, frame=s.frame, x=s.x.copy(), view=s.view.copy(), p=p, r=r)
        )
    return Trajectory(user_id=traj.user_id, samples=out)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trajectories(path, trajs: list, with_pr: bool = False) -> None:
    """Write traces back to CSV (inverse of load, quaternions roll-free)."""
    cols = _BASE_COLUMNS + (_PR_COLUMNS if with_pr else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for tr in trajs:
            for s in tr.samples:
                q = s.pose().orientation
                row = [tr.user_id, _fmt(s.t)] + [_fmt(v) for v in s.x] + [_fmt(v) for v in q]
                if with_pr:
                    if s.p is None:
                        row += ["", "", "", ""]
                    else:
                        row += [_fmt(v) for v in s.p] + [_fmt(s.r)]
                w.writerow(row)
