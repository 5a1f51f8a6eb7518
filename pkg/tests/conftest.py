import math
import sys

import numpy as np
import pytest

sys.path.insert(0, str(__import__("pathlib").Path(__file__).parent))

from viewsim import (
    FrustumParams,
    MetricId,
    PointCloudFrame,
    SimilarityMatrix,
    TrajectorySample,
)
from viewsim.geometry import pose_from_view

# One line per acceptance criterion, printed after the run.
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


def record_criterion(number, name, ok, detail=""):
    status = "PASS" if ok is True else ("SKIP" if ok is None else "FAIL")
    suffix = f"  ({detail})" if detail else ""
    ACCEPTANCE_LINES.append(f"criterion {number:>2} {name:<28} {status}{suffix}")
    # also emit inline for -s runs / captured logs
    print(ACCEPTANCE_LINES[-1])


def random_pose(rng):
    position = rng.uniform(-3.0, 3.0, 3)
    view = rng.normal(size=3)
    while np.linalg.norm(view) < 1e-6:
        view = rng.normal(size=3)
    # avoid the world-up singularity; the loader never produces it either
    if abs(view[1]) / np.linalg.norm(view) > 0.999:
        view[0] += 0.1
    return pose_from_view(position, view)


def make_sample(x, view=None, p=None, r=None, t=0.0, frame=0, off_content=False):
    x = np.asarray(x, dtype=np.float64)
    if view is None:
        view = -x if np.linalg.norm(x) > 1e-9 else np.array([0.0, 0.0, -1.0])
    return TrajectorySample(t=t, frame=frame, x=x, view=view, p=p, r=r, off_content=off_content)


def square_matrix(values, users=None, metric=MetricId.W1, frame=0):
    """SimilarityMatrix from a plain value grid; NaN marks invalid."""
    vals = np.asarray(values, dtype=np.float64)
    n = vals.shape[0]
    if users is None:
        users = tuple(f"u{k:02d}" for k in range(n))
    valid = ~np.isnan(vals)
    np.fill_diagonal(valid, False)
    out = vals.copy()
    out[~valid] = np.nan
    return SimilarityMatrix(frame=frame, users=tuple(users), metric=metric, values=out, valid=valid)


@pytest.fixture(scope="session")
def unit_sphere_cloud():
    from viewsim.synth import _fibonacci_sphere

    return PointCloudFrame(0.0, _fibonacci_sphere(20000, 1.0))


@pytest.fixture(scope="session")
def small_cloud():
    rng = np.random.default_rng(42)
    return PointCloudFrame(0.0, rng.uniform(-1.0, 1.0, (300, 3)))


@pytest.fixture(scope="session")
def narrow_content():
    """Prepared content whose frusta clip the object: non-trivial overlaps."""
    from viewsim.pipeline import prepare_scenario
    from viewsim.synth import three_orbit_groups

    scenario = three_orbit_groups(seed=11, users_per_group=3, n_frames=6, points_per_frame=2500)
    return prepare_scenario(scenario, frustum=FrustumParams(hfov=0.5, vfov=0.5))


@pytest.fixture(scope="session")
def default_params():
    return FrustumParams()


def assert_close(a, b, tol=1e-12, rel=False):
    a, b = float(a), float(b)
    if math.isnan(a) and math.isnan(b):
        return
    err = abs(a - b) / max(abs(b), 1e-300) if rel else abs(a - b)
    assert err <= tol, f"{a} vs {b} (err {err:g} > {tol:g})"
