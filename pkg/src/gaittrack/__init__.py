"""Multi-target tracking and gait identification from sparse radar point-clouds.

The package covers the full desk-scale chain:

* ``frontend``    -- synthetic FMCW front-end (IF samples, range-Doppler maps,
  MTI, CA-CFAR, angle estimation) producing radar point-clouds.
* ``clustering``  -- DBSCAN on the horizontal plane plus per-cluster
  position/extension observations.
* ``tracking``    -- converted-measurements Kalman filter over position,
  velocity, body-ellipse extension and orientation.
* ``association`` -- cheap-JPDA scoring, optimal assignment, m/n track
  lifecycle and proximity pruning.
* ``classifier``  -- point-cloud feature extractor + causal dilated temporal
  convolutions, trained from scratch in numpy.
* ``identify``    -- smoothed, uniqueness-constrained identity assignment and
  identity-driven track error correction.
* ``simulator``   -- synthetic walker scenarios with per-subject gait
  signatures, blockage and distance-dependent sparsity.
* ``pipeline``    -- per-frame orchestration of the full loop.
* ``metrics``     -- MOTA and identification-accuracy evaluation.
* ``formats``     -- line-oriented file formats and config parsing.
* ``cli``         -- the ``gaittrack`` command line tool.
"""

from gaittrack.clustering import (
    Cluster,
    ExtensionObservation,
    Frame,
    RadarPoint,
    dbscan,
    extension_observation,
)
from gaittrack.frontend import (
    RadarConfig,
    RangeDopplerMap,
    Reflector,
    cfar_detect,
    default_radar_config,
    estimate_point,
    mti_filter,
    range_doppler,
    synthesize_cube,
)
from gaittrack.tracking import (
    NoiseConfig,
    Track,
    TrackState,
    build_F,
    build_Q,
    make_track,
    measurement_covariance,
    observation_matrix,
    predict,
    update,
)
from gaittrack.association import (
    Assignment,
    cjpda_scores,
    gate_and_associate,
    hungarian,
    lifecycle,
    proximity_prune,
)
from gaittrack.identify import (
    UNKNOWN,
    IdentityBelief,
    correct_tracks,
    joint_identify,
)
from gaittrack.simulator import (
    GaitProfile,
    Scenario,
    default_profiles,
    generate,
    generate_training_corpus,
)
from gaittrack.pipeline import FrameReport, Pipeline, PipelineConfig, run
from gaittrack.metrics import EvalResult, evaluate, id_accuracy, mota

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "Cluster",
    "EvalResult",
    "ExtensionObservation",
    "Frame",
    "FrameReport",
    "GaitProfile",
    "IdentityBelief",
    "NoiseConfig",
    "Pipeline",
    "PipelineConfig",
    "RadarConfig",
    "RadarPoint",
    "RangeDopplerMap",
    "Reflector",
    "Scenario",
    "Track",
    "TrackState",
    "UNKNOWN",
    "build_F",
    "build_Q",
    "cfar_detect",
    "cjpda_scores",
    "correct_tracks",
    "dbscan",
    "default_profiles",
    "default_radar_config",
    "estimate_point",
    "evaluate",
    "extension_observation",
    "gate_and_associate",
    "generate",
    "generate_training_corpus",
    "hungarian",
    "id_accuracy",
    "joint_identify",
    "lifecycle",
    "make_track",
    "measurement_covariance",
    "mota",
    "mti_filter",
    "observation_matrix",
    "predict",
    "proximity_prune",
    "range_doppler",
    "run",
    "synthesize_cube",
    "update",
]
