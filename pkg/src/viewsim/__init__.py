"""Behavioural similarity toolkit for 6-DoF navigation over point clouds.

Computes an exact viewport-overlap ground truth between users, eight fast
proxy similarity metrics built from pose-level features, clique-based user
clusters per frame or time chunk, ROC threshold calibration, a regulator
ablation sweep, and evaluation against the ground truth; plus deterministic
synthetic scenarios and a CLI driving the whole pipeline.
"""

from .calibration import (
    AblationRecord,
    DEFAULT_GRID,
    ParameterSets,
    RocPoint,
    ablate,
    roc_curve,
    select_parameter_sets,
    select_threshold,
)
from .clustering import (
    ChunkSpec,
    Cluster,
    ClusteringResult,
    SimilarityGraph,
    build_adjacency,
    chunk_adjacency,
    clique_clustering,
    max_clique,
    mean_matrix,
    persistence_scores,
)
from .errors import ComputeError, DataError, ToolError, UsageError
from .evaluation import (
    AggregateStats,
    ClusterPerformance,
    adjusted_rand_index,
    aggregate,
    evaluate_result,
    overlap_per_cluster,
    precision,
    relevant_population,
)
from .geometry import (
    Frustum,
    FrustumParams,
    PointCloudFrame,
    Pose,
    SurfaceGraph,
    build_frustum,
    build_surface_graph,
    contains,
    euclidean_distance,
    geodesic_distance,
    look_at,
    ray_cast_center,
    viewport_set,
)
from .manifest import ContentManifest, load_manifest
from .metrics import (
    MetricConfig,
    MetricId,
    PairFeatures,
    RegulatorSet,
    SimilarityMatrix,
    compute_pair_features,
    default_configs,
    gaussian_kernel,
    metric_value,
    overlap_matrix,
    overlap_ratio,
    tanh_kernel,
)
from .pipeline import (
    PreparedContent,
    calibrate_contents,
    cluster_content,
    evaluate_content,
    overlap_matrices,
    prepare,
    prepare_scenario,
    run_ablation,
)
from .synth import (
    GroupSpec,
    SplitMix64,
    SynthScenario,
    generate_cloud,
    generate_trajectories,
    planted_labels,
    three_orbit_groups,
)
from .trajectories import (
    SessionDataset,
    Trajectory,
    TrajectorySample,
    align_to_frames,
    derive_pr,
    load_trajectories,
)

__version__ = "0.1.0"
