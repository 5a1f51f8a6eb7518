"""Wall-clock comparison: naive exact overlap vs the proxy metrics.

The baseline is the cost an unoptimized exact evaluation pays per user
pair: rebuild both frusta, test every cloud point against six planes in
pure Python, and intersect the index sets.  Proxies are costed the way the
pipeline actually runs them: per-frame feature construction (including
geodesic shortest paths where needed) divided by the number of pairs the
frame serves, plus the kernel application.  The one-off surface graph build
is amortized over a configurable frame horizon and reported separately.
Timings are machine-dependent; counts and ratios are what the report is
for.  Repeats expose run-to-run variance as a coefficient of variation.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .geometry import FrustumParams, build_frustum, build_surface_graph
from .metrics import MetricId, compute_pair_features, overlap_matrix
from .synth import (
    AtCentroidGaze,
    GroupSpec,
    OrbitMotion,
    SynthScenario,
    generate_cloud,
    generate_trajectories,
)
from .trajectories import derive_pr


def _naive_planes(pose, params: FrustumParams):
    fr = build_frustum(pose, params)
    return [
        (float(n[0]), float(n[1]), float(n[2]), float(d))
        for n, d in zip(fr.normals, fr.offsets)
    ]


def _naive_viewport(points, planes) -> set:
    # literal transcription: every point is tested against all six planes
    out = set()
    add = out.add
    for idx, (x, y, z) in enumerate(points):
        inside = True
        for a, b, c, d in planes:
            if a * x + b * y + c * z + d < 0.0:
                inside = False
        if inside:
            add(idx)
    return out


def naive_pair_overlap(points, pose_i, pose_j, params: FrustumParams) -> float:
    """Exact overlap of one pair the slow way (fresh work per pair)."""
    si = _naive_viewport(points, _naive_planes(pose_i, params))
    sj = _naive_viewport(points, _naive_planes(pose_j, params))
    union = len(si | sj)
    if union == 0:
        return math.nan
    return len(si & sj) / union


def _bench_scenario(n_users: int, n_points: int, seed: int) -> SynthScenario:
    sizes = []
    remaining = n_users
    while remaining > 0:
        sizes.append(min(4, remaining))
        remaining -= sizes[-1]
    groups = []
    for g, size in enumerate(sizes):
        # distinct anchors keep every user's gaze hit a distinct graph source
        groups.append(
            GroupSpec(
                size=size,
                motion=OrbitMotion(radius=2.0, angular_speed=0.25, phase=g * 2.0 * math.pi / len(sizes)),
                gaze=AtCentroidGaze(),
                jitter=0.05,
            )
        )
    return SynthScenario(
        seed=seed,
        cloud_kind="sphere",
        points_per_frame=n_points,
        n_frames=1,
        fps=30.0,
        groups=tuple(groups),
    )


def _stats(samples) -> tuple:
    arr = np.asarray(samples, dtype=np.float64)
    mean = float(arr.mean())
    cv = float(arr.std(ddof=0) / mean) if mean > 0 else 0.0
    return mean, cv


def run_bench(
    n_users: int = 32,
    n_points: int = 100_000,
    naive_pairs: int = 6,
    repeats: int = 3,
    seed: int = 0,
    knn: int = 8,
    amortize_frames: int = 300,
) -> dict:
    """Time the oracle and each proxy; returns a JSON-ready report."""
    params = FrustumParams()
    scenario = _bench_scenario(n_users, n_points, seed)
    clouds = generate_cloud(scenario)
    cloud = clouds[0]
    trajs = [derive_pr(tr, clouds, params) for tr in generate_trajectories(scenario, clouds)]
    users = tuple(tr.user_id for tr in trajs)
    samples = [tr.samples[0] for tr in trajs]
    n = len(users)
    n_pairs = n * (n - 1) // 2
    report: dict = {
        "n_users": n,
        "n_points": int(cloud.points.shape[0]),
        "n_pairs_per_frame": n_pairs,
        "repeats": repeats,
        "amortize_frames": amortize_frames,
        "rows": [],
        "speedups": {},
        "accounting": (
            "naive oracle: fresh pure-python frustum tests per pair; "
            "proxies: per-frame feature build divided by pairs served, plus kernels; "
            "surface graph build amortized over amortize_frames"
        ),
    }
    if n_pairs == 0:
        report["note"] = "fewer than two users: nothing to compare"
        return report

    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    timed_pairs = pairs[: max(0, min(naive_pairs, n_pairs))]
    points_list = [tuple(map(float, p)) for p in cloud.points]

    # Exact reference values for the sanity check below.
    exact = overlap_matrix(0, users, samples, cloud, params)

    naive_means = []
    if timed_pairs:
        for _ in range(repeats):
            t0 = time.perf_counter()
            for i, j in timed_pairs:
                got = naive_pair_overlap(points_list, samples[i].pose(), samples[j].pose(), params)
                ref = exact.pair(i, j)
                if not (math.isnan(got) and math.isnan(ref)) and abs(got - ref) > 1e-9:
                    raise AssertionError(f"naive oracle disagrees with production path: {got} vs {ref}")
            naive_means.append((time.perf_counter() - t0) / len(timed_pairs))
    naive_per_pair, naive_cv = _stats(naive_means) if naive_means else (math.nan, 0.0)
    report["rows"].append(
        {"label": "overlap_naive", "per_pair_s": naive_per_pair, "cv": naive_cv, "pairs_timed": len(timed_pairs)}
    )

    vec = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        overlap_matrix(0, users, samples, cloud, params)
        vec.append((time.perf_counter() - t0) / n_pairs)
    m, cv = _stats(vec)
    report["rows"].append({"label": "overlap_vectorized", "per_pair_s": m, "cv": cv})

    t0 = time.perf_counter()
    graph = build_surface_graph(cloud, k=knn)
    graph_build_s = time.perf_counter() - t0
    report["graph_build_s"] = graph_build_s
    graph_share = graph_build_s / max(1, amortize_frames) / n_pairs

    for metric in (m for m in MetricId if not m.is_overlap):
        needs_geo = metric.needs_geodesic
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            feats = compute_pair_features(0, users, samples, graph=graph if needs_geo else None)
            feats.metric_matrix(metric, _default_reg(metric))
            times.append((time.perf_counter() - t0) / n_pairs + (graph_share if needs_geo else 0.0))
        m, cv = _stats(times)
        row = {"label": metric.value, "per_pair_s": m, "cv": cv}
        report["rows"].append(row)
        if not math.isnan(naive_per_pair) and m > 0:
            report["speedups"][metric.value] = naive_per_pair / m
    if report["speedups"]:
        report["min_speedup"] = min(report["speedups"].values())
    return report


def _default_reg(metric: MetricId):
    from .metrics import default_configs

    return default_configs()[metric].regulators
