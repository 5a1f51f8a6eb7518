"""Similarity metrics between users navigating the same content frame.

The exact ground truth is the viewport overlap ratio: the Jaccard index of
the two sets of cloud points falling inside each user's frustum.  The eight
proxy metrics (w1..w8) combine up to three pose-level features instead:

* E(x)  Euclidean distance between user positions;
* |Δr|  absolute difference of viewing distances, or a tanh-of-distance
        weighting for w7/w8;
* gaze  distance between viewport centres, geodesic on the content surface
        (w3, w5, w7) or Euclidean (w4, w6, w8).

Features enter through the exponential kernel ``exp(-a*d)`` with
non-negative regulators, so every proxy except w7/w8 lives in [0, 1];
w7/w8 live in [0, 2*beta].  Pairs missing a required feature (a user
off-content, no surface graph) are invalid, not zero.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidParamsError, MissingGraphError, ParseError, PreconditionError
from .geometry import (
    FrustumParams,
    SurfaceGraph,
    build_frustum,
    contains_points,
    euclidean_distance,
    geodesic_distance,
    geodesic_rows,
)


class MetricId(str, Enum):
    W1 = "w1"
    W2 = "w2"
    W3 = "w3"
    W4 = "w4"
    W5 = "w5"
    W6 = "w6"
    W7 = "w7"
    W8 = "w8"
    OVERLAP = "overlap"

    @property
    def is_overlap(self) -> bool:
        return self is MetricId.OVERLAP

    @property
    def multi_feature(self) -> bool:
        return self in (MetricId.W5, MetricId.W6, MetricId.W7, MetricId.W8)

    @property
    def needs_geodesic(self) -> bool:
        return self in (MetricId.W3, MetricId.W5, MetricId.W7)

    @property
    def uses_tanh(self) -> bool:
        return self in (MetricId.W7, MetricId.W8)

    @property
    def needs_pr(self) -> bool:
        """True when the metric reads p or r (every proxy except w1)."""
        return self not in (MetricId.W1, MetricId.OVERLAP)


PROXY_METRICS = tuple(m for m in MetricId if m is not MetricId.OVERLAP)


@dataclass(frozen=True)
class RegulatorSet:
    """Non-negative kernel regulators; beta/gamma unused by w1..w4."""

    alpha: float
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise InvalidParamsError(f"{name} must be finite and >= 0, got {v}")

    def as_tuple(self) -> tuple:
        return (self.alpha, self.beta, self.gamma)


@dataclass(frozen=True)
class MetricConfig:
    """A metric together with its regulators and decision threshold."""

    metric: MetricId
    regulators: RegulatorSet | None
    threshold: float

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise InvalidParamsError(f"threshold must be finite, got {self.threshold}")
        if self.metric.is_overlap:
            if self.regulators is not None:
                raise InvalidParamsError("overlap takes no regulators")
        elif self.regulators is None:
            raise InvalidParamsError(f"{self.metric.value} needs regulators")


def default_configs() -> dict:
    """Per-metric regulators and thresholds used when a run overrides nothing."""
    r = RegulatorSet
    return {
        MetricId.W1: MetricConfig(MetricId.W1, r(1.0), 0.64),
        MetricId.W2: MetricConfig(MetricId.W2, r(1.0), 0.80),
        MetricId.W3: MetricConfig(MetricId.W3, r(1.0), 0.63),
        MetricId.W4: MetricConfig(MetricId.W4, r(1.0), 0.84),
        MetricId.W5: MetricConfig(MetricId.W5, r(0.1, 0.5, 1.0), 0.54),
        MetricId.W6: MetricConfig(MetricId.W6, r(0.1, 0.125, 0.2), 0.87),
        MetricId.W7: MetricConfig(MetricId.W7, r(0.25, 0.5, 0.5), 0.60),
        MetricId.W8: MetricConfig(MetricId.W8, r(0.5, 0.5, 0.5), 0.62),
        MetricId.OVERLAP: MetricConfig(MetricId.OVERLAP, None, 0.75),
    }


def gaussian_kernel(alpha: float, d: float) -> float:
    """exp(-alpha * d) for d >= 0, with d = +inf mapped to 0.

    The infinity rule comes first so a zero regulator still kills
    unreachable pairs instead of producing 0 * inf = nan.
    """
    if not (math.isfinite(alpha) and alpha >= 0.0):
        raise InvalidParamsError(f"alpha must be finite and >= 0, got {alpha}")
    if math.isnan(d) or d < 0.0:
        raise ValueError(f"distance must be >= 0 or +inf, got {d}")
    if math.isinf(d):
        return 0.0
    return math.exp(-alpha * d)


def _kernel_arr(alpha: float, d: np.ndarray) -> np.ndarray:
    """Vectorized gaussian_kernel; NaN entries (invalid pairs) propagate."""
    inf = np.isinf(d)
    out = np.exp(-alpha * np.where(inf, 0.0, d))
    out[inf] = 0.0
    return out


def tanh_kernel(r: float) -> float:
    """Saturating weight of a viewing distance."""
    if not (r >= 0.0):
        raise ValueError(f"viewing distance must be >= 0, got {r}")
    return math.tanh(r)


def overlap_ratio(set_i, set_j) -> float:
    """Jaccard index of two viewport index sets.

    Undefined (raises) when both sets are empty; the pairwise driver marks
    such pairs invalid instead of calling this.
    """
    a = np.unique(np.array(list(set_i), dtype=np.int64))
    b = np.unique(np.array(list(set_j), dtype=np.int64))
    inter = np.intersect1d(a, b, assume_unique=True).size
    union = a.size + b.size - inter
    if union == 0:
        raise PreconditionError("overlap ratio of two empty viewport sets is undefined")
    return inter / union


def metric_value(metric: MetricId, reg: RegulatorSet, si, sj, graph: SurfaceGraph | None = None) -> float:
    """One proxy similarity for a pair of aligned samples.

    Returns NaN when the pair is invalid for this metric (a user is
    off-content, or a required p/r is missing).  Geodesic metrics require a
    surface graph.
    """
    if metric.is_overlap:
        raise InvalidParamsError("overlap is computed from viewport sets, not metric_value")
    if si.off_content or sj.off_content:
        return math.nan
    pos_kernel = gaussian_kernel(reg.alpha, euclidean_distance(si.x, sj.x))
    if metric is MetricId.W1:
        return pos_kernel
    if metric.needs_geodesic and graph is None:
        raise MissingGraphError(f"{metric.value} needs a surface graph")
    if si.p is None or sj.p is None:
        return math.nan
    if metric is MetricId.W2:
        return gaussian_kernel(reg.alpha, abs(si.r - sj.r))
    if metric is MetricId.W3:
        return gaussian_kernel(reg.alpha, geodesic_distance(graph, si.p, sj.p))
    if metric is MetricId.W4:
        return gaussian_kernel(reg.alpha, euclidean_distance(si.p, sj.p))
    if metric is MetricId.W5:
        return (
            pos_kernel
            * gaussian_kernel(reg.beta, abs(si.r - sj.r))
            * gaussian_kernel(reg.gamma, geodesic_distance(graph, si.p, sj.p))
        )
    if metric is MetricId.W6:
        return (
            pos_kernel
            * gaussian_kernel(reg.beta, abs(si.r - sj.r))
            * gaussian_kernel(reg.gamma, euclidean_distance(si.p, sj.p))
        )
    if metric is MetricId.W7:
        return (
            pos_kernel
            * (reg.beta * (tanh_kernel(si.r) + tanh_kernel(sj.r)))
            * gaussian_kernel(reg.gamma, geodesic_distance(graph, si.p, sj.p))
        )
    if metric is MetricId.W8:
        return (
            pos_kernel
            * (reg.beta * (tanh_kernel(si.r) + tanh_kernel(sj.r)))
            * gaussian_kernel(reg.gamma, euclidean_distance(si.p, sj.p))
        )
    raise InvalidParamsError(f"unknown metric {metric}")


@dataclass
class SimilarityMatrix:
    """Symmetric per-frame (or per-chunk) pair values with a validity mask.

    Diagonal and invalid entries hold NaN; ``valid`` is False there.
    """

    frame: int
    users: tuple
    metric: MetricId
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        n = len(self.users)
        if self.values.shape != (n, n) or self.valid.shape != (n, n):
            raise ValueError("matrix shapes must be (n_users, n_users)")

    @property
    def n(self) -> int:
        return len(self.users)

    def pair(self, i: int, j: int) -> float:
        return float(self.values[i, j])

    def pairs(self):
        """Upper-triangle iterator: (i, j, value, valid)."""
        n = self.n
        for i in range(n):
            for j in range(i + 1, n):
                yield i, j, float(self.values[i, j]), bool(self.valid[i, j])


@dataclass
class PairFeatures:
    """Per-frame pair feature matrices shared by all proxy metrics.

    Regulators factor out of the features, so a parameter sweep computes
    this once per frame and reapplies kernels per grid point.  ``gaze_geo``
    is None when no surface graph was supplied.
    """

    frame: int
    users: tuple
    pos_dist: np.ndarray
    range_diff: np.ndarray
    gaze_euc: np.ndarray
    eta_sum: np.ndarray
    pos_valid: np.ndarray
    pr_valid: np.ndarray
    gaze_geo: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.users)

    def metric_matrix(self, metric: MetricId, reg: RegulatorSet) -> SimilarityMatrix:
        """Apply one metric's kernels to the precomputed features."""
        if metric.is_overlap:
            raise InvalidParamsError("overlap is not derived from pair features")
        n = self.n
        if metric.needs_geodesic and self.gaze_geo is None:
            raise MissingGraphError(f"{metric.value} needs a surface graph")
        if metric is MetricId.W1:
            values = _kernel_arr(reg.alpha, self.pos_dist)
            valid = self.pos_valid & ~np.eye(n, dtype=bool)
        else:
            gaze = self.gaze_geo if metric.needs_geodesic else self.gaze_euc
            if metric is MetricId.W2:
                values = _kernel_arr(reg.alpha, self.range_diff)
            elif metric in (MetricId.W3, MetricId.W4):
                values = _kernel_arr(reg.alpha, gaze)
            elif metric in (MetricId.W5, MetricId.W6):
                values = (
                    _kernel_arr(reg.alpha, self.pos_dist)
                    * _kernel_arr(reg.beta, self.range_diff)
                    * _kernel_arr(reg.gamma, gaze)
                )
            elif metric in (MetricId.W7, MetricId.W8):
                values = (
                    _kernel_arr(reg.alpha, self.pos_dist)
                    * (reg.beta * self.eta_sum)
                    * _kernel_arr(reg.gamma, gaze)
                )
            else:
                raise InvalidParamsError(f"unknown metric {metric}")
            valid = self.pr_valid & ~np.eye(n, dtype=bool)
        values = values.copy()
        values[~valid] = np.nan
        return SimilarityMatrix(frame=self.frame, users=self.users, metric=metric, values=values, valid=valid)


def compute_pair_features(frame_index: int, users: tuple, samples: list, graph: SurfaceGraph | None = None) -> PairFeatures:
    """Build the feature matrices for one aligned frame.

    Geodesic gaze distances are taken between graph vertices nearest each
    p, one shortest-path sweep per distinct source vertex; the row of the
    smaller vertex index is used for both orientations so the matrix is
    symmetric by construction.
    """
    n = len(users)
    if len(samples) != n:
        raise ValueError("one sample per user required")
    xs = np.stack([s.x for s in samples])
    diff = xs[:, None, :] - xs[None, :, :]
    pos_dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    present = np.array([not s.off_content for s in samples])
    on = np.array([s.p is not None for s in samples])
    rs = np.array([s.r if s.p is not None else np.nan for s in samples])
    ps = np.stack([s.p if s.p is not None else np.full(3, np.nan) for s in samples])
    range_diff = np.abs(rs[:, None] - rs[None, :])
    pdiff = ps[:, None, :] - ps[None, :, :]
    gaze_euc = np.sqrt(np.einsum("ijk,ijk->ij", pdiff, pdiff))
    eta = np.tanh(rs)
    eta_sum = eta[:, None] + eta[None, :]
    pos_valid = present[:, None] & present[None, :]
    pr_valid = pos_valid & on[:, None] & on[None, :]
    gaze_geo = None
    if graph is not None:
        gaze_geo = np.full((n, n), np.nan)
        on_idx = np.flatnonzero(on)
        if on_idx.size:
            snapped = np.array([graph.nearest_index(samples[i].p) for i in on_idx])
            uniq, inv = np.unique(snapped, return_inverse=True)
            rows = geodesic_rows(graph, uniq)
            for a in range(on_idx.size):
                for b in range(a + 1, on_idx.size):
                    va, vb = snapped[a], snapped[b]
                    if va == vb:
                        d = 0.0
                    elif va < vb:
                        d = float(rows[inv[a], vb])
                    else:
                        d = float(rows[inv[b], va])
                    i, j = on_idx[a], on_idx[b]
                    gaze_geo[i, j] = d
                    gaze_geo[j, i] = d
            gaze_geo[on_idx, on_idx] = 0.0
    return PairFeatures(
        frame=frame_index,
        users=users,
        pos_dist=pos_dist,
        range_diff=range_diff,
        gaze_euc=gaze_euc,
        eta_sum=eta_sum,
        pos_valid=pos_valid,
        pr_valid=pr_valid,
        gaze_geo=gaze_geo,
    )


def overlap_matrix(frame_index: int, users: tuple, samples: list, cloud, params: FrustumParams) -> SimilarityMatrix:
    """Exact pairwise viewport overlap for one frame.

    Each user's viewport set is computed once; intersection counts come
    from one integer-exact matrix product.  A pair is invalid when its
    union is empty or either user is off-content for the frame.
    """
    n = len(users)
    if len(samples) != n:
        raise ValueError("one sample per user required")
    present = np.array([not s.off_content for s in samples])
    masks = np.zeros((n, cloud.points.shape[0]), dtype=np.float64)
    for k, s in enumerate(samples):
        if present[k]:
            masks[k] = contains_points(build_frustum(s.pose(), params), cloud.points)
    inter = masks @ masks.T  # exact: counts < 2**53
    sizes = np.diag(inter).copy()
    union = sizes[:, None] + sizes[None, :] - inter
    valid = (union > 0) & present[:, None] & present[None, :] & ~np.eye(n, dtype=bool)
    values = np.full((n, n), np.nan)
    values[valid] = inter[valid] / union[valid]
    return SimilarityMatrix(
        frame=frame_index, users=users, metric=MetricId.OVERLAP, values=values, valid=valid
    )


def _fmt(v: float) -> str:
    return repr(float(v))


def write_matrices_csv(path, matrices: list) -> None:
    """Long-form pair rows: frame,user_i,user_j,metric,value,valid."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "user_i", "user_j", "metric", "value", "valid"])
        for m in matrices:
            for i, j, value, ok in m.pairs():
                w.writerow([m.frame, m.users[i], m.users[j], m.metric.value, _fmt(value), int(ok)])


def read_matrices_csv(path) -> list:
    """Inverse of write_matrices_csv; requires full pair coverage per frame."""
    groups: dict = {}
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["frame", "user_i", "user_j", "metric", "value", "valid"]:
            raise ParseError("bad matrices header", path=path, line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise ParseError(f"expected 6 fields, got {len(row)}", path=path, line=lineno)
            try:
                frame = int(row[0])
                metric = MetricId(row[3])
                value = float(row[4])
                ok = bool(int(row[5]))
            except ValueError as e:
                raise ParseError(f"bad row: {e}", path=path, line=lineno)
            groups.setdefault((frame, metric), {})[(row[1], row[2])] = (value, ok)
    out = []
    for (frame, metric), pairs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        users = tuple(sorted({u for pair in pairs for u in pair}))
        n = len(users)
        index = {u: i for i, u in enumerate(users)}
        if len(pairs) != n * (n - 1) // 2:
            raise ParseError(
                f"frame {frame}/{metric.value}: {len(pairs)} pairs for {n} users", path=path
            )
        values = np.full((n, n), np.nan)
        valid = np.zeros((n, n), dtype=bool)
        for (ua, ub), (value, ok) in pairs.items():
            if ua == ub:
                raise ParseError(f"self pair for user '{ua}'", path=path)
            i, j = index[ua], index[ub]
            values[i, j] = values[j, i] = value
            valid[i, j] = valid[j, i] = ok
        values[~valid] = np.nan
        out.append(SimilarityMatrix(frame=frame, users=users, metric=metric, values=values, valid=valid))
    return out
