"""Independent audit of placement plans.

verify_plan re-derives everything from recorded data rather than trusting
planner-internal flags: it rebuilds the initial frame from the raw inputs,
replays free-segment geometry from recorded fronts and accumulated rotations,
extracts per-iteration rotation increments from consecutive records, and
re-queries the mesh for normals and adhesion distances. Coverage is the
kinematic analogue of the photographic placement metric: the fraction of
elements whose final distance to the surface is below the adhesion threshold.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InconsistentPlan, InvalidConfig, OracleFailed
from .geometry import (
    SurfaceMesh,
    closest_point_on_surface,
    rotation_axis_angle,
)
from .planner import (
    IterationRecord,
    PlacementPlan,
    PlannerConfig,
    PlanStatus,
    plan_bimanual,
)
from .tape_model import Side, TapeState, c_length

MISMATCH_FACTOR = 10.0  # attached elements farther than this * epsilon => inconsistent


@dataclass
class Tolerances:
    """Per-check tolerances. length_tol=None resolves to 2 * epsilon."""

    length_tol: float | None = None
    wrinkle_tol: float = 1e-9
    tension_tol: float = 1e-7
    coverage_min: float = 100.0
    orthonormality_tol: float = 1e-9
    replay_tol: float = 1e-9
    step_rotation_tol: float = 1e-9

    def __post_init__(self):
        values = dataclasses.asdict(self)
        for name, value in values.items():
            if value is not None and not (value > 0.0):
                raise InvalidConfig(f"tolerance {name} must be > 0, got {value}")


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class VerificationReport:
    coverage_percent: float
    checks: tuple[CheckResult, ...]
    status: str
    iterations: int
    worst_length_residual: float
    worst_length_joint: int
    worst_wrinkle_residual: float
    worst_wrinkle_iteration: int
    worst_tension_residual: float
    worst_tension_iteration: int
    max_trajectory_step: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failing(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.checks if not c.passed)

    def to_dict(self) -> dict:
        return {
            "coverage_percent": self.coverage_percent,
            "checks": [
                {
                    "name": c.name,
                    "value": c.value,
                    "tolerance": c.tolerance,
                    "pass": c.passed,
                    "detail": c.detail,
                }
                for c in self.checks
            ],
            "status": self.status,
            "iterations": self.iterations,
            "pass": self.passed,
            "coverage_basis": "kinematic",
            "details": {
                "worst_length_joint": self.worst_length_joint,
                "worst_wrinkle_iteration": self.worst_wrinkle_iteration,
                "worst_tension_iteration": self.worst_tension_iteration,
                "max_trajectory_step": self.max_trajectory_step,
            },
        }


def _derive_frame(mesh: SurfaceMesh, plan: PlacementPlan) -> tuple[np.ndarray, np.ndarray]:
    """Re-derive the snapped midpoint and tangent taping direction from raw inputs."""
    snap = closest_point_on_surface(mesh, plan.p_init)
    n_mid = closest_point_on_surface(mesh, snap.position).normal
    d = plan.d_init - np.dot(plan.d_init, n_mid) * n_mid
    return snap.position, d / np.linalg.norm(d)


@dataclass
class _SideView:
    """Per-side accessors over an iteration record."""

    side: Side
    front: int
    rotation: np.ndarray
    position: np.ndarray
    tension: np.ndarray


def _views(record: IterationRecord) -> tuple[_SideView, _SideView]:
    return (
        _SideView(Side.START, record.i_s, record.start_rotation, record.start_position,
                  record.tension_start),
        _SideView(Side.END, record.i_e, record.end_rotation, record.end_position,
                  record.tension_end),
    )


def verify_plan(
    plan: PlacementPlan,
    mesh: SurfaceMesh,
    cfg: PlannerConfig | None = None,
    tol: Tolerances | None = None,
) -> VerificationReport:
    """Audit a plan against the mesh it was produced on.

    Raises InconsistentPlan when elements claimed attached sit farther than
    10 * epsilon from the surface (plan/mesh mismatch); every other defect is
    reported as a failing check, not an exception.
    """
    cfg = cfg or plan.config
    tol = tol or Tolerances()
    length_tol = tol.length_tol if tol.length_tol is not None else 2.0 * cfg.epsilon
    state = plan.state
    n = state.n
    l_e = cfg.element_length
    tail_index = {Side.START: 0, Side.END: n - 1}

    # Final-element adhesion distances, recomputed from the mesh.
    final_sp = [closest_point_on_surface(mesh, state.positions[j]) for j in range(n)]
    distances = np.array([sp.distance for sp in final_sp])
    claimed = np.asarray(state.attached, dtype=bool)
    far = claimed & (distances > MISMATCH_FACTOR * cfg.epsilon)
    if far.any():
        bad = np.nonzero(far)[0].tolist()
        raise InconsistentPlan(
            f"elements {bad} claimed attached but lie farther than "
            f"{MISMATCH_FACTOR * cfg.epsilon:.3g} m from the mesh"
        )
    adhered_mask = distances < cfg.epsilon
    coverage = 100.0 * float(adhered_mask.sum()) / float(n)

    p_mid, d = _derive_frame(mesh, plan)

    # Worst joint-length residual over the final chain.
    worst_length, worst_joint = 0.0, 0
    for j in range(1, n):
        r = abs(c_length(state, j))
        if r > worst_length:
            worst_length, worst_joint = r, j

    # Pose orthonormality over every recorded rotation.
    worst_ortho = 0.0
    for record in plan.records:
        for rot in (record.start_rotation, record.end_rotation):
            err = max(
                float(np.max(np.abs(rot.T @ rot - np.eye(3)))),
                abs(float(np.linalg.det(rot)) - 1.0),
            )
            worst_ortho = max(worst_ortho, err)

    # Synthetic pre-plan record for the replay walk.
    def initial_tail(side: Side) -> np.ndarray:
        return p_mid + (tail_index[side] - state.i_mid) * l_e * d

    prev = IterationRecord(
        index=0,
        start_position=initial_tail(Side.START),
        start_rotation=np.eye(3),
        end_position=initial_tail(Side.END),
        end_rotation=np.eye(3),
        tension_start=np.zeros(3),
        tension_end=np.zeros(3),
        i_s=state.i_mid,
        i_e=state.i_mid,
    )

    normal_cache: dict[int, np.ndarray] = {}

    def normal_at(j: int) -> np.ndarray:
        if j not in normal_cache:
            normal_cache[j] = closest_point_on_surface(mesh, state.positions[j]).normal
        return normal_cache[j]

    d_res = plan.residual_applied
    monotonic = True
    worst_step_rot = 0.0
    worst_wrinkle, worst_wrinkle_iter = 0.0, 0
    worst_tension, worst_tension_iter = 0.0, 0
    worst_replay = 0.0
    max_step, worst_excess = 0.0, -math.inf
    half_chord = 2.0 * math.sin(cfg.angle_step / 2.0)

    for record in plan.records:
        for view, prev_view in zip(_views(record), _views(prev)):
            side, front = view.side, view.front
            if side is Side.END:
                monotonic &= front >= prev_view.front
            else:
                monotonic &= front <= prev_view.front
            monotonic &= 0 <= front <= n - 1

            raw_pos = view.position - d_res * view.tension
            prev_raw = prev_view.position - d_res * prev_view.tension

            delta = view.rotation @ prev_view.rotation.T
            rot_dev = float(np.max(np.abs(delta - np.eye(3))))
            if front != prev_view.front:
                # Advance step: the accumulated rotation must be untouched.
                worst_step_rot = max(worst_step_rot, rot_dev)
            elif rot_dev > 1e-9:
                # Rotation step: exactly one angle step about an axis
                # orthogonal to the pivot normal.
                axis, angle = rotation_axis_angle(delta)
                worst_step_rot = max(worst_step_rot, abs(angle - cfg.angle_step))
                wrinkle = abs(float(np.dot(axis, normal_at(front))))
                if wrinkle > worst_wrinkle:
                    worst_wrinkle, worst_wrinkle_iter = wrinkle, record.index

            # Free-segment replay from the recorded pivot and rotation.
            tail = tail_index[side]
            if front != tail:
                pivot = state.positions[front]
                span = tail - front
                tail_replay = pivot + view.rotation @ (span * l_e * d)
                worst_replay = max(worst_replay, float(np.linalg.norm(tail_replay - raw_pos)))
                tension_replay = raw_pos - pivot
                tension_replay = tension_replay / np.linalg.norm(tension_replay)
                worst_replay = max(worst_replay, float(np.linalg.norm(tension_replay - view.tension)))
                # Taut-segment residual with the recorded tail as the chain tip.
                ks = np.arange(front, tail + 1) if side is Side.END else np.arange(front, -1, -1)
                chain = pivot + np.outer(ks - front, l_e * (view.rotation @ d))
                chain[-1] = raw_pos
                path = float(np.linalg.norm(np.diff(chain, axis=0), axis=1).sum())
                direct = float(np.linalg.norm(raw_pos - pivot))
                tension_res = abs(direct - path)
                if tension_res > worst_tension:
                    worst_tension, worst_tension_iter = tension_res, record.index
            else:
                worst_replay = max(
                    worst_replay,
                    float(np.linalg.norm(view.position - state.positions[tail])),
                    float(np.linalg.norm(view.tension)),
                )

            # Trajectory continuity against the previous record.
            step = float(np.linalg.norm(raw_pos - prev_raw))
            free_len = abs(tail - prev_view.front) * l_e
            bound = half_chord * free_len + cfg.epsilon + 1e-12
            max_step = max(max_step, step)
            worst_excess = max(worst_excess, step - bound)
        prev = record

    checks = (
        CheckResult("coverage", coverage, tol.coverage_min, coverage >= tol.coverage_min,
                    "percent of elements within epsilon of the surface"),
        CheckResult("status_complete", 1.0 if plan.status is PlanStatus.COMPLETE else 0.0,
                    1.0, plan.status is PlanStatus.COMPLETE, plan.status.value),
        CheckResult("length_residual", worst_length, length_tol, worst_length <= length_tol,
                    f"joint {worst_joint}"),
        CheckResult("tension_residual", worst_tension, tol.tension_tol,
                    worst_tension <= tol.tension_tol, f"iteration {worst_tension_iter}"),
        CheckResult("wrinkle_residual", worst_wrinkle, tol.wrinkle_tol,
                    worst_wrinkle <= tol.wrinkle_tol, f"iteration {worst_wrinkle_iter}"),
        CheckResult("pose_orthonormality", worst_ortho, tol.orthonormality_tol,
                    worst_ortho <= tol.orthonormality_tol, "max |R^T R - I|, |det - 1|"),
        CheckResult("front_monotonicity", 0.0 if monotonic else 1.0, 0.5, monotonic,
                    "fronts must expand outward monotonically"),
        CheckResult("step_rotation", worst_step_rot, tol.step_rotation_tol,
                    worst_step_rot <= tol.step_rotation_tol,
                    "one angle step per rotation, none per advance"),
        CheckResult("replay_consistency", worst_replay, tol.replay_tol,
                    worst_replay <= tol.replay_tol,
                    "recorded poses/tensions match the free-segment replay"),
        CheckResult("trajectory_continuity", worst_excess, 0.0, worst_excess <= 0.0,
                    f"max step {max_step:.6g} m vs per-record bound"),
    )
    return VerificationReport(
        coverage_percent=coverage,
        checks=checks,
        status=plan.status.value,
        iterations=plan.iterations,
        worst_length_residual=worst_length,
        worst_length_joint=worst_joint,
        worst_wrinkle_residual=worst_wrinkle,
        worst_wrinkle_iteration=worst_wrinkle_iter,
        worst_tension_residual=worst_tension,
        worst_tension_iteration=worst_tension_iter,
        max_trajectory_step=max_step,
    )


# ---------------------------------------------------------------------------
# Refinement oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RefinementComparison:
    deviation: float
    base: PlacementPlan
    refined: PlacementPlan


def _resample_side(state: TapeState, side: Side, s_values: np.ndarray) -> np.ndarray:
    """Points along one side's attached centerline at absolute arclengths from the pivot."""
    if side is Side.END:
        pts = state.positions[state.i_mid:]
    else:
        pts = state.positions[state.i_mid::-1]
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    return np.stack([np.interp(s_values, cum, pts[:, k]) for k in range(3)], axis=1)


def _side_length(state: TapeState, side: Side) -> float:
    pts = state.positions[state.i_mid:] if side is Side.END else state.positions[state.i_mid::-1]
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def refinement_oracle(
    mesh: SurfaceMesh,
    p_init,
    d_init,
    tape_length: float,
    cfg: PlannerConfig,
    angle_factor: float = 4.0,
    length_factor: float = 2.0,
    samples: int = 256,
) -> RefinementComparison:
    """Compare a plan against a finer-discretization re-plan of the same task.

    Both attached centerlines are resampled at matching absolute arclengths
    from the shared initial adhesion element, per side, over the common
    domain; the result is the maximum pointwise deviation. Raises OracleFailed
    if either plan does not complete.
    """
    base = plan_bimanual(mesh, p_init, d_init, tape_length, cfg)
    refined_cfg = dataclasses.replace(
        cfg,
        angle_step=cfg.angle_step / angle_factor,
        element_length=cfg.element_length / length_factor,
        max_iterations=None,
    )
    refined = plan_bimanual(mesh, p_init, d_init, tape_length, refined_cfg)
    for name, plan in (("base", base), ("refined", refined)):
        if plan.status is not PlanStatus.COMPLETE:
            raise OracleFailed(f"{name} plan did not complete ({plan.status.value})")
    deviation = 0.0
    for side in (Side.START, Side.END):
        common = min(_side_length(base.state, side), _side_length(refined.state, side))
        s = np.linspace(0.0, common, samples)
        a = _resample_side(base.state, side, s)
        b = _resample_side(refined.state, side, s)
        deviation = max(deviation, float(np.linalg.norm(a - b, axis=1).max()))
    return RefinementComparison(deviation=deviation, base=base, refined=refined)


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

def emit_report(report: VerificationReport, path, format: str = "json") -> None:
    """Write the report as JSON (machine-readable) or aligned text."""
    path = Path(path)
    if format == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
    elif format == "text":
        lines = [
            f"status      : {report.status}",
            f"iterations  : {report.iterations}",
            f"coverage    : {report.coverage_percent:.2f} %",
            f"overall     : {'PASS' if report.passed else 'FAIL'}",
            "",
            f"{'check':<24}{'value':>14}{'tolerance':>14}  result",
        ]
        for c in report.checks:
            lines.append(
                f"{c.name:<24}{c.value:>14.4e}{c.tolerance:>14.4e}  "
                f"{'pass' if c.passed else 'FAIL'}  {c.detail}"
            )
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        raise InvalidConfig(f"unknown report format {format!r} (expected json or text)")
