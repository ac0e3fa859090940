"""Discrete tape chain: element state, constraint functionals, adhesion test.

The tape centerline is an ordered chain of N point elements spaced
element_length apart. A contiguous run [i_s, i_e] is attached (glued to the
surface, immutable); the runs outside it are the free segments, each a rigid
straight extension of its pivot (the outermost attached element on that side).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidVector, NoFreeSegment
from .geometry import SurfaceMesh, SurfacePoint, closest_point_on_surface

DEFAULT_TAPE_WIDTH = 0.025  # meters; visualization only


class Side(str, Enum):
    START = "start"
    END = "end"


@dataclass(frozen=True)
class TapeElement:
    """One tape segment: position, orientation, adhesion flag, initial position."""

    position: np.ndarray
    rotation: np.ndarray
    attached: bool
    initial_position: np.ndarray


@dataclass
class AdhesionParams:
    """Contact threshold for declaring an element adhered."""

    epsilon: float
    penetration_counts_as_contact: bool = True

    def __post_init__(self):
        if not (self.epsilon > 0.0):
            raise InvalidVector(f"adhesion threshold must be > 0, got {self.epsilon}")


@dataclass
class TapeState:
    """Full tape chain with adhesion fronts and per-side accumulated rotations.

    positions/rotations/attached/init_positions are (N, ...) arrays indexed by
    element. attached_normals caches the mesh face normal at each attached
    element's landed position (planner-internal; the verifier re-queries).
    """

    positions: np.ndarray
    rotations: np.ndarray
    attached: np.ndarray
    init_positions: np.ndarray
    i_mid: int
    i_s: int
    i_e: int
    rot_acc_start: np.ndarray
    rot_acc_end: np.ndarray
    axis_start: np.ndarray
    axis_end: np.ndarray
    element_length: float
    tape_length: float
    tangent_dir: np.ndarray
    attached_normals: np.ndarray
    width: float = DEFAULT_TAPE_WIDTH

    @property
    def n(self) -> int:
        return len(self.positions)

    def element(self, j: int) -> TapeElement:
        return TapeElement(
            position=self.positions[j].copy(),
            rotation=self.rotations[j].copy(),
            attached=bool(self.attached[j]),
            initial_position=self.init_positions[j].copy(),
        )

    @property
    def elements(self) -> tuple[TapeElement, ...]:
        return tuple(self.element(j) for j in range(self.n))

    def free_indices(self, side: Side) -> range:
        if side is Side.END:
            return range(self.i_e + 1, self.n)
        return range(0, self.i_s)

    def pivot_index(self, side: Side) -> int:
        return self.i_e if side is Side.END else self.i_s

    def tail_index(self, side: Side) -> int:
        return self.n - 1 if side is Side.END else 0

    @property
    def attached_count(self) -> int:
        return int(self.attached.sum())


def c_length(state: TapeState, j: int) -> float:
    """Inextensibility residual at joint j: ||p_j - p_{j-1}|| - element_length."""
    if not (1 <= j <= state.n - 1):
        raise IndexError(f"joint index must be in [1, {state.n - 1}], got {j}")
    gap = np.linalg.norm(state.positions[j] - state.positions[j - 1])
    return float(gap - state.element_length)


def c_tension(state: TapeState, side: Side) -> float:
    """Slack residual of a side's free segment (pivot link included).

    Straight-line pivot-to-tail distance minus the chain path length; <= 0 by
    the triangle inequality, and 0 exactly when the free segment is taut.
    """
    side = Side(side)
    free = state.free_indices(side)
    if len(free) == 0:
        raise NoFreeSegment(f"{side.value} side has no free elements")
    pivot = state.positions[state.pivot_index(side)]
    tail = state.positions[state.tail_index(side)]
    if side is Side.END:
        chain = state.positions[state.i_e: state.n]
    else:
        chain = state.positions[state.i_s:: -1]  # pivot down to element 0
    path = float(np.linalg.norm(np.diff(chain, axis=0), axis=1).sum())
    return float(np.linalg.norm(tail - pivot)) - path


def c_wrinkle(axis: np.ndarray, pivot_normal: np.ndarray) -> float:
    """Wrinkle residual: alignment of the rotation axis with the pivot yaw axis.

    Zero iff the axis is orthogonal to the surface normal at the last attached
    element; rotation about that normal would yaw the free tape and wrinkle it.
    """
    axis = np.asarray(axis, dtype=float)
    pivot_normal = np.asarray(pivot_normal, dtype=float)
    for name, v in (("axis", axis), ("pivot_normal", pivot_normal)):
        if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise InvalidVector(f"{name} must be a unit 3-vector")
    return float(np.dot(axis, pivot_normal))


def adhered(sp: SurfacePoint, params: AdhesionParams) -> bool:
    """Adhesion predicate on a precomputed closest-point query result."""
    if sp.distance < params.epsilon:
        return True
    return params.penetration_counts_as_contact and sp.signed_distance <= 0.0


def is_adhered(p: np.ndarray, mesh: SurfaceMesh, params: AdhesionParams) -> bool:
    """True iff p is within the adhesion threshold of the surface.

    With penetration_counts_as_contact, points on or below the surface count
    as contact regardless of depth (prevents tunneling past the threshold
    band when step motion exceeds epsilon).
    """
    return adhered(closest_point_on_surface(mesh, p), params)
