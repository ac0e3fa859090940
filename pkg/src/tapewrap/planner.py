"""Bimanual pivot-and-rotate tape placement planner.

The tape chain starts collinear through the initial adhesion point. Each
iteration advances both adhesion fronts independently: a side either attaches
its next free element (when it is within the adhesion threshold of the
surface, projecting it onto its closest point) or rotates its whole free
segment by one angle step about the current rotation axis through the pivot.
The rotation axis is the cross product of the surface normals at the last two
attached elements, which keeps it orthogonal to the pivot normal (no wrinkle),
falling back to the previous axis where the normals are parallel.

Free element positions are always recomputed from the pivot as the
accumulated rotation applied to the initial collinear offsets, so free
segments stay rigid and taut by construction.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    FormatError,
    InvalidConfig,
    InvalidDirection,
    TapeTooShort,
)
from .geometry import (
    SurfaceMesh,
    closest_point_on_surface,
    quat_to_rot,
    rodrigues,
    rot_to_quat,
    unit,
)
from .tape_model import (
    DEFAULT_TAPE_WIDTH,
    AdhesionParams,
    Side,
    TapeState,
    adhered,
)

log = logging.getLogger(__name__)

TANGENT_PROJECTION_MIN = 1e-6
PARALLEL_NORMAL_TOL = 1e-9


@dataclass
class PlannerConfig:
    """Numerical parameters of the placement planner.

    angle_step is in radians. max_iterations=None resolves to
    N * ceil(2*pi / angle_step) when planning starts.
    """

    element_length: float = 0.005
    angle_step: float = math.radians(0.5)
    epsilon: float = 1e-3
    residual_distance: float = 3e-3
    max_iterations: int | None = None
    concave_mode: bool = False
    penetration_counts_as_contact: bool = True

    def __post_init__(self):
        if not (self.element_length > 0.0):
            raise InvalidConfig(f"element_length must be > 0, got {self.element_length}")
        if not (self.angle_step > 0.0):
            raise InvalidConfig(f"angle_step must be > 0, got {self.angle_step}")
        if not (self.epsilon > 0.0):
            raise InvalidConfig(f"epsilon must be > 0, got {self.epsilon}")
        if self.residual_distance < 0.0:
            raise InvalidConfig(f"residual_distance must be >= 0, got {self.residual_distance}")
        if self.max_iterations is not None and self.max_iterations <= 0:
            raise InvalidConfig(f"max_iterations must be > 0, got {self.max_iterations}")
        if (self.angle_step * self.element_length > self.epsilon
                and not self.penetration_counts_as_contact):
            log.warning(
                "per-step motion of the adhesion candidate (%.3g m) exceeds epsilon "
                "(%.3g m); elements may tunnel through the contact band",
                self.angle_step * self.element_length, self.epsilon,
            )

    def resolved_max_iterations(self, n_elements: int) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        return n_elements * math.ceil(2.0 * math.pi / self.angle_step)

    @property
    def adhesion(self) -> AdhesionParams:
        return AdhesionParams(
            epsilon=self.epsilon,
            penetration_counts_as_contact=self.penetration_counts_as_contact,
        )


class StepKind(str, Enum):
    ADVANCED = "advanced"
    ROTATED = "rotated"
    DONE = "done"


@dataclass(frozen=True)
class StepReport:
    kind: StepKind
    side: Side
    front: int
    attached_indices: tuple[int, ...] = ()


class PlanStatus(str, Enum):
    COMPLETE = "complete"
    MAX_ITERATIONS_EXCEEDED = "max_iterations_exceeded"


@dataclass(frozen=True)
class IterationRecord:
    """Both end-effector poses and tension directions after one iteration.

    Tension directions are unit vectors while the side still has free
    elements and the zero vector once it is fully attached.
    """

    index: int
    start_position: np.ndarray
    start_rotation: np.ndarray
    end_position: np.ndarray
    end_rotation: np.ndarray
    tension_start: np.ndarray
    tension_end: np.ndarray
    i_s: int
    i_e: int


@dataclass(frozen=True)
class PlacementPlan:
    records: tuple[IterationRecord, ...]
    state: TapeState
    iterations: int
    status: PlanStatus
    p_init: np.ndarray
    d_init: np.ndarray
    tape_length: float
    config: PlannerConfig
    residual_applied: float = 0.0

    @property
    def complete(self) -> bool:
        return self.status is PlanStatus.COMPLETE


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def initial_axis(mesh: SurfaceMesh, p_mid: np.ndarray, d_init: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Initial rotation axes (v_s, v_e) at the snapped midpoint.

    v_e = normalize(n x d) so that a positive angle step rotates the end-side
    tail toward the surface (a tangent direction d maps to
    d*cos(theta) - n*sin(theta)); the start side mirrors with v_s = -v_e.
    """
    n = closest_point_on_surface(mesh, p_mid).normal
    v_e = unit(np.cross(n, d_init))
    return -v_e, v_e


def initialize_tape(
    mesh: SurfaceMesh,
    p_init: np.ndarray,
    d_init: np.ndarray,
    tape_length: float,
    cfg: PlannerConfig,
    pivot_index: int | None = None,
    width: float = DEFAULT_TAPE_WIDTH,
) -> TapeState:
    """Lay out the collinear chain, snap the pivot element to the surface.

    The taping direction is re-projected into the tangent plane at the snapped
    point. pivot_index=None places the pivot at the middle element (bimanual);
    0 pins the start (single-sided).
    """
    p_init = np.asarray(p_init, dtype=float)
    d_init = np.asarray(d_init, dtype=float)
    if np.linalg.norm(d_init) < 1e-12:
        raise InvalidDirection("initial tape direction must be non-zero")
    l_e = cfg.element_length
    if tape_length < 3.0 * l_e:
        raise TapeTooShort(f"tape length {tape_length} m below 3 elements ({3 * l_e} m)")
    n_elements = int(round(tape_length / l_e))
    i_mid = n_elements // 2 if pivot_index is None else int(pivot_index)

    snap = closest_point_on_surface(mesh, p_init)
    p_mid = snap.position
    n_mid = closest_point_on_surface(mesh, p_mid).normal  # normal at the landed point
    d_tangent = d_init - np.dot(d_init, n_mid) * n_mid
    if np.linalg.norm(d_tangent) < TANGENT_PROJECTION_MIN:
        raise InvalidDirection("taping direction is parallel to the surface normal")
    d = d_tangent / np.linalg.norm(d_tangent)

    offsets = (np.arange(n_elements) - i_mid)[:, None] * l_e * d
    init_positions = p_init + offsets
    positions = init_positions.copy()
    positions[i_mid] = p_mid
    rotations = np.tile(np.eye(3), (n_elements, 1, 1))
    attached = np.zeros(n_elements, dtype=bool)
    attached[i_mid] = True
    attached_normals = np.zeros((n_elements, 3))
    attached_normals[i_mid] = n_mid

    v_s, v_e = initial_axis(mesh, p_mid, d)
    state = TapeState(
        positions=positions,
        rotations=rotations,
        attached=attached,
        init_positions=init_positions,
        i_mid=i_mid,
        i_s=i_mid,
        i_e=i_mid,
        rot_acc_start=np.eye(3),
        rot_acc_end=np.eye(3),
        axis_start=v_s,
        axis_end=v_e,
        element_length=l_e,
        tape_length=tape_length,
        tangent_dir=d,
        attached_normals=attached_normals,
        width=width,
    )
    _recompute_free(state, Side.END)
    _recompute_free(state, Side.START)
    return state


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------

def _recompute_free(state: TapeState, side: Side) -> None:
    """Place free elements as the rotated initial offsets hung off the pivot."""
    if side is Side.END:
        if state.i_e >= state.n - 1:
            return
        sl = slice(state.i_e + 1, state.n)
        pivot, pivot_init, rot = state.positions[state.i_e], state.init_positions[state.i_e], state.rot_acc_end
    else:
        if state.i_s <= 0:
            return
        sl = slice(0, state.i_s)
        pivot, pivot_init, rot = state.positions[state.i_s], state.init_positions[state.i_s], state.rot_acc_start
    state.positions[sl] = pivot + (state.init_positions[sl] - pivot_init) @ rot.T
    state.rotations[sl] = rot


def _attach(state: TapeState, mesh: SurfaceMesh, j: int, landing: np.ndarray, side: Side) -> None:
    state.positions[j] = landing
    state.attached[j] = True
    state.rotations[j] = state.rot_acc_end if side is Side.END else state.rot_acc_start
    # Re-query at the landed position so the cached normal is exactly what an
    # independent query of the recorded point returns (edge ties included).
    state.attached_normals[j] = closest_point_on_surface(mesh, landing).normal


def _rotate(state: TapeState, cfg: PlannerConfig, side: Side) -> None:
    """Update the rotation axis (past the pivot element) and compose one step."""
    if side is Side.END:
        if state.i_e > state.i_mid:
            n_curr = state.attached_normals[state.i_e]
            n_prev = state.attached_normals[state.i_e - 1]
            v_new = np.cross(n_prev, n_curr)
            if np.linalg.norm(v_new) >= PARALLEL_NORMAL_TOL:
                state.axis_end = v_new / np.linalg.norm(v_new)
        state.rot_acc_end = rodrigues(state.axis_end, cfg.angle_step) @ state.rot_acc_end
    else:
        if state.i_s < state.i_mid:
            n_curr = state.attached_normals[state.i_s]
            n_prev = state.attached_normals[state.i_s + 1]
            v_new = np.cross(n_prev, n_curr)
            if np.linalg.norm(v_new) >= PARALLEL_NORMAL_TOL:
                state.axis_start = v_new / np.linalg.norm(v_new)
        state.rot_acc_start = rodrigues(state.axis_start, cfg.angle_step) @ state.rot_acc_start


def step_side(state: TapeState, mesh: SurfaceMesh, cfg: PlannerConfig, side: Side) -> StepReport:
    """One iteration body for one side: advance the front or rotate the free segment."""
    side = Side(side)
    done = state.i_e >= state.n - 1 if side is Side.END else state.i_s <= 0
    if done:
        return StepReport(StepKind.DONE, side, state.pivot_index(side))
    _recompute_free(state, side)
    j = state.i_e + 1 if side is Side.END else state.i_s - 1
    sp = closest_point_on_surface(mesh, state.positions[j])
    if adhered(sp, cfg.adhesion):
        if side is Side.END:
            state.i_e = j
        else:
            state.i_s = j
        _attach(state, mesh, j, sp.position, side)
        return StepReport(StepKind.ADVANCED, side, j, attached_indices=(j,))
    _rotate(state, cfg, side)
    return StepReport(StepKind.ROTATED, side, state.pivot_index(side))


def step_side_concave(state: TapeState, mesh: SurfaceMesh, cfg: PlannerConfig, side: Side) -> StepReport:
    """Concave-surface variant: test every free element, jump to the furthest contact.

    Equivalent to step_side on convex surfaces, where only the next element
    can be the first to contact; on concave geometry the free segment may
    bridge a depression and touch down further along, in which case the front
    skips there and every skipped element is projected onto the surface.
    """
    side = Side(side)
    done = state.i_e >= state.n - 1 if side is Side.END else state.i_s <= 0
    if done:
        return StepReport(StepKind.DONE, side, state.pivot_index(side))
    _recompute_free(state, side)
    free = state.free_indices(side)
    queries = {j: closest_point_on_surface(mesh, state.positions[j]) for j in free}
    contacts = [j for j, sp in queries.items() if adhered(sp, cfg.adhesion)]
    if contacts:
        target = max(contacts) if side is Side.END else min(contacts)
        skipped = (range(state.i_e + 1, target + 1) if side is Side.END
                   else range(state.i_s - 1, target - 1, -1))
        for j in skipped:
            _attach(state, mesh, j, queries[j].position, side)
        if side is Side.END:
            state.i_e = target
        else:
            state.i_s = target
        return StepReport(StepKind.ADVANCED, side, target, attached_indices=tuple(skipped))
    _rotate(state, cfg, side)
    return StepReport(StepKind.ROTATED, side, state.pivot_index(side))


# ---------------------------------------------------------------------------
# Plan drivers
# ---------------------------------------------------------------------------

def _make_record(state: TapeState, index: int) -> IterationRecord:
    if state.i_s == 0:
        tension_start = np.zeros(3)
    else:
        tension_start = unit(state.positions[0] - state.positions[state.i_s])
    if state.i_e == state.n - 1:
        tension_end = np.zeros(3)
    else:
        tension_end = unit(state.positions[state.n - 1] - state.positions[state.i_e])
    return IterationRecord(
        index=index,
        start_position=state.positions[0].copy(),
        start_rotation=state.rot_acc_start.copy(),
        end_position=state.positions[state.n - 1].copy(),
        end_rotation=state.rot_acc_end.copy(),
        tension_start=tension_start,
        tension_end=tension_end,
        i_s=state.i_s,
        i_e=state.i_e,
    )


def _run_plan(
    mesh: SurfaceMesh,
    p_init,
    d_init,
    tape_length: float,
    cfg: PlannerConfig,
    pivot_index: int | None,
    width: float,
) -> PlacementPlan:
    state = initialize_tape(mesh, p_init, d_init, tape_length, cfg,
                            pivot_index=pivot_index, width=width)
    step = step_side_concave if cfg.concave_mode else step_side
    limit = cfg.resolved_max_iterations(state.n)
    records: list[IterationRecord] = []
    iteration = 0
    while (state.i_s > 0 or state.i_e < state.n - 1) and iteration < limit:
        iteration += 1
        step(state, mesh, cfg, Side.END)
        step(state, mesh, cfg, Side.START)
        records.append(_make_record(state, iteration))
    complete = state.i_s == 0 and state.i_e == state.n - 1
    status = PlanStatus.COMPLETE if complete else PlanStatus.MAX_ITERATIONS_EXCEEDED
    if status is PlanStatus.MAX_ITERATIONS_EXCEEDED:
        log.warning("plan hit the %d-iteration guard with fronts (%d, %d) of %d elements",
                    limit, state.i_s, state.i_e, state.n)
    return PlacementPlan(
        records=tuple(records),
        state=state,
        iterations=iteration,
        status=status,
        p_init=np.asarray(p_init, dtype=float),
        d_init=np.asarray(d_init, dtype=float),
        tape_length=float(tape_length),
        config=cfg,
    )


def plan_bimanual(mesh: SurfaceMesh, p_init, d_init, tape_length: float,
                  cfg: PlannerConfig | None = None,
                  width: float = DEFAULT_TAPE_WIDTH) -> PlacementPlan:
    """Plan pose and tension trajectories for both tape ends.

    The middle element adheres at (the projection of) p_init; both fronts then
    expand symmetrically until the whole tape is attached or the iteration
    guard trips (which yields a partial, inspectable plan rather than an
    error).
    """
    return _run_plan(mesh, p_init, d_init, tape_length, cfg or PlannerConfig(),
                     pivot_index=None, width=width)


def plan_single_sided(mesh: SurfaceMesh, p_init, d_init, tape_length: float,
                      cfg: PlannerConfig | None = None,
                      width: float = DEFAULT_TAPE_WIDTH) -> PlacementPlan:
    """Plan with element 0 pinned at the initial adhesion point; only the end
    front advances. Start-side records carry the zero tension sentinel."""
    return _run_plan(mesh, p_init, d_init, tape_length, cfg or PlannerConfig(),
                     pivot_index=0, width=width)


def apply_residual(plan: PlacementPlan, cfg: PlannerConfig | None = None) -> PlacementPlan:
    """Offset every recorded pose along its own tension direction.

    Models the impedance residual that keeps the tape taut during execution:
    each side's end-effector translation moves residual_distance along that
    record's tension direction. Zero-sentinel records are unchanged (their
    tension vector is zero); rotations and tension directions are preserved.
    """
    cfg = cfg or plan.config
    d = cfg.residual_distance
    if d < 0.0:
        raise InvalidConfig(f"residual_distance must be >= 0, got {d}")
    if d == 0.0:
        return plan
    records = tuple(
        dataclasses.replace(
            r,
            start_position=r.start_position + d * r.tension_start,
            end_position=r.end_position + d * r.tension_end,
        )
        for r in plan.records
    )
    return dataclasses.replace(plan, records=records, residual_applied=d)


# ---------------------------------------------------------------------------
# Trajectory file I/O
# ---------------------------------------------------------------------------

TRAJECTORY_FORMAT = "tapewrap-trajectory"
TRAJECTORY_VERSION = 1


def _vec(a: np.ndarray) -> list[float]:
    return [float(x) for x in a]


def plan_to_dict(plan: PlacementPlan) -> dict:
    cfg = plan.config
    state = plan.state
    return {
        "meta": {
            "format": TRAJECTORY_FORMAT,
            "version": TRAJECTORY_VERSION,
            "p_init": _vec(plan.p_init),
            "d_init": _vec(plan.d_init),
            "tape_length": plan.tape_length,
            "tape_width": state.width,
            "residual_applied": plan.residual_applied,
            "config": {
                "element_length": cfg.element_length,
                "angle_step": cfg.angle_step,
                "epsilon": cfg.epsilon,
                "residual_distance": cfg.residual_distance,
                "max_iterations": cfg.max_iterations,
                "concave_mode": cfg.concave_mode,
                "penetration_counts_as_contact": cfg.penetration_counts_as_contact,
            },
        },
        "status": plan.status.value,
        "iterations": plan.iterations,
        "records": [
            {
                "i": r.index,
                "start": {"p": _vec(r.start_position), "q": _vec(rot_to_quat(r.start_rotation))},
                "end": {"p": _vec(r.end_position), "q": _vec(rot_to_quat(r.end_rotation))},
                "tension_start": _vec(r.tension_start),
                "tension_end": _vec(r.tension_end),
                "fronts": [r.i_s, r.i_e],
            }
            for r in plan.records
        ],
        "final_state": {
            "i_mid": state.i_mid,
            "i_s": state.i_s,
            "i_e": state.i_e,
            "element_length": state.element_length,
            "tape_length": state.tape_length,
            "tangent_dir": _vec(state.tangent_dir),
            "positions": [_vec(p) for p in state.positions],
            "init_positions": [_vec(p) for p in state.init_positions],
            "quaternions": [_vec(rot_to_quat(r)) for r in state.rotations],
            "attached": [bool(a) for a in state.attached],
            "axis_start": _vec(state.axis_start),
            "axis_end": _vec(state.axis_end),
            "rot_acc_start_q": _vec(rot_to_quat(state.rot_acc_start)),
            "rot_acc_end_q": _vec(rot_to_quat(state.rot_acc_end)),
        },
    }


def save_plan(plan: PlacementPlan, path) -> None:
    """Write the trajectory JSON (deterministic: no timestamps, sorted keys)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(plan_to_dict(plan), fh, indent=1, sort_keys=True)
        fh.write("\n")


def plan_from_dict(data: dict) -> PlacementPlan:
    meta = data["meta"]
    if meta.get("format") != TRAJECTORY_FORMAT:
        raise FormatError(f"not a trajectory file (format={meta.get('format')!r})")
    cfg_d = meta["config"]
    cfg = PlannerConfig(
        element_length=cfg_d["element_length"],
        angle_step=cfg_d["angle_step"],
        epsilon=cfg_d["epsilon"],
        residual_distance=cfg_d["residual_distance"],
        max_iterations=cfg_d["max_iterations"],
        concave_mode=cfg_d["concave_mode"],
        penetration_counts_as_contact=cfg_d["penetration_counts_as_contact"],
    )
    records = tuple(
        IterationRecord(
            index=r["i"],
            start_position=np.array(r["start"]["p"]),
            start_rotation=quat_to_rot(np.array(r["start"]["q"])),
            end_position=np.array(r["end"]["p"]),
            end_rotation=quat_to_rot(np.array(r["end"]["q"])),
            tension_start=np.array(r["tension_start"]),
            tension_end=np.array(r["tension_end"]),
            i_s=r["fronts"][0],
            i_e=r["fronts"][1],
        )
        for r in data["records"]
    )
    fs = data["final_state"]
    positions = np.array(fs["positions"])
    state = TapeState(
        positions=positions,
        rotations=np.array([quat_to_rot(np.array(q)) for q in fs["quaternions"]]),
        attached=np.array(fs["attached"], dtype=bool),
        init_positions=np.array(fs["init_positions"]),
        i_mid=fs["i_mid"],
        i_s=fs["i_s"],
        i_e=fs["i_e"],
        rot_acc_start=quat_to_rot(np.array(fs["rot_acc_start_q"])),
        rot_acc_end=quat_to_rot(np.array(fs["rot_acc_end_q"])),
        axis_start=np.array(fs["axis_start"]),
        axis_end=np.array(fs["axis_end"]),
        element_length=fs["element_length"],
        tape_length=fs["tape_length"],
        tangent_dir=np.array(fs["tangent_dir"]),
        attached_normals=np.zeros((len(positions), 3)),
        width=meta.get("tape_width", DEFAULT_TAPE_WIDTH),
    )
    return PlacementPlan(
        records=records,
        state=state,
        iterations=data["iterations"],
        status=PlanStatus(data["status"]),
        p_init=np.array(meta["p_init"]),
        d_init=np.array(meta["d_init"]),
        tape_length=meta["tape_length"],
        config=cfg,
        residual_applied=meta.get("residual_applied", 0.0),
    )


def load_plan(path) -> PlacementPlan:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    return plan_from_dict(data)
