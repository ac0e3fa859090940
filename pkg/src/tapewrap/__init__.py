"""Bimanual tape-placement trajectory planning on convex surface meshes.

Plans end-effector pose and tension-direction trajectories that lay an
adhesive tape smoothly, tensioned, and wrinkle-free onto a triangle-mesh
surface, with an independent verifier for constraint residuals and coverage.
"""

from .errors import (
    DegenerateHull,
    DegenerateTriangle,
    EmptyMesh,
    FormatError,
    InconsistentPlan,
    InvalidAxis,
    InvalidConfig,
    InvalidDirection,
    InvalidMesh,
    InvalidSpec,
    InvalidVector,
    NoFreeSegment,
    OracleFailed,
    TapewrapError,
    TapeTooShort,
)
from .geometry import (
    SurfaceMesh,
    SurfacePoint,
    closest_point_on_surface,
    closest_point_on_triangle,
    convex_hull,
    convexify,
    rodrigues,
)
from .mesh_io import MeshSpec, generate_mesh, load_mesh, save_mesh
from .planner import (
    IterationRecord,
    PlacementPlan,
    PlannerConfig,
    PlanStatus,
    StepKind,
    apply_residual,
    initial_axis,
    initialize_tape,
    load_plan,
    plan_bimanual,
    plan_single_sided,
    save_plan,
    step_side,
    step_side_concave,
)
from .scene import export_scene
from .tape_model import (
    AdhesionParams,
    Side,
    TapeElement,
    TapeState,
    c_length,
    c_tension,
    c_wrinkle,
    is_adhered,
)
from .verifier import (
    RefinementComparison,
    Tolerances,
    VerificationReport,
    emit_report,
    refinement_oracle,
    verify_plan,
)

__version__ = "0.1.0"
