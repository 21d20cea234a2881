"""Desk-scale parking RL workbench.

A 2D kinematic parking simulator with dense safety-aware rewards, a
multi-level failure/correction replay memory with snapshot rollback, a
from-scratch soft actor-critic learner, and a live operator session
server for corrective interventions.
"""

from .errors import (
    BufferModeError,
    GeometryError,
    IllegalEventError,
    InvalidRegionError,
    LifecycleError,
    NotEnoughDataError,
    ParkbenchError,
    SceneInfeasibleError,
    SchemaError,
    SnapshotMismatchError,
    StoreError,
    VersionError,
)
from .geometry import (
    EsdfGrid,
    OccupancyGrid,
    Polygon,
    Pose2D,
    build_esdf,
    esdf_query,
    footprint,
    overlap_score,
    ray_cast,
    wrap_angle,
)
from .vehicle import Action, IkResult, VehicleParams, inverse_kinematics, kinematic_step, substep_rollout

__version__ = "0.1.0"
