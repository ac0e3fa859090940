"""OBJ scene export: surface mesh plus a ribbon swept along the attached tape.

The ribbon is the tape centerline extruded laterally to the configured width,
with the lateral direction taken as normal x tangent at each attached element.
Per-iteration free-segment snapshots are emitted as OBJ polylines in their own
groups so external viewers can toggle them.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .geometry import SurfaceMesh, closest_point_on_surface, unit
from .planner import PlacementPlan

log = logging.getLogger(__name__)


def build_ribbon(mesh: SurfaceMesh, plan: PlacementPlan, width: float | None = None):
    """Ribbon vertices/quadstrip faces along the attached centerline.

    Returns (vertices, faces) or None when fewer than two elements are
    attached (nothing to sweep).
    """
    state = plan.state
    width = state.width if width is None else width
    idx = np.nonzero(state.attached)[0]
    if len(idx) < 2:
        return None
    centers = state.positions[idx]
    normals = np.array([closest_point_on_surface(mesh, p).normal for p in centers])
    vertices = []
    for k, p in enumerate(centers):
        lo = max(k - 1, 0)
        hi = min(k + 1, len(centers) - 1)
        tangent = unit(centers[hi] - centers[lo])
        lateral = unit(np.cross(normals[k], tangent))
        vertices.append(p - 0.5 * width * lateral)
        vertices.append(p + 0.5 * width * lateral)
    faces = []
    for k in range(len(centers) - 1):
        a, b, c, d = 2 * k, 2 * k + 1, 2 * k + 3, 2 * k + 2
        faces.append([a, b, c])
        faces.append([a, c, d])
    return np.array(vertices), np.array(faces, dtype=np.int64)


def _free_segment_polyline(plan: PlacementPlan, record_index: int) -> list[np.ndarray]:
    """Tail positions recorded at one iteration, as two short marker segments."""
    record = plan.records[record_index]
    segments = []
    if record.i_s > 0:
        segments.append(np.array([record.start_position,
                                  plan.state.positions[record.i_s]]))
    if record.i_e < plan.state.n - 1:
        segments.append(np.array([record.end_position,
                                  plan.state.positions[record.i_e]]))
    return segments


def export_scene(
    mesh: SurfaceMesh,
    plan: PlacementPlan,
    path,
    width: float | None = None,
    include_free_segments: bool = True,
) -> None:
    """Write mesh + ribbon (+ per-iteration tail chords) as a grouped OBJ."""
    path = Path(path)
    ribbon = build_ribbon(mesh, plan, width)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# tapewrap scene export\n")
        fh.write("g surface\n")
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
        offset = mesh.num_vertices
        if ribbon is None:
            log.warning("plan has fewer than two attached elements; scene contains the mesh only")
        else:
            verts, faces = ribbon
            fh.write("g ribbon\n")
            for v in verts:
                fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
            for f in faces:
                fh.write(f"f {f[0] + offset + 1} {f[1] + offset + 1} {f[2] + offset + 1}\n")
            offset += len(verts)
        if include_free_segments:
            for k in range(len(plan.records)):
                segments = _free_segment_polyline(plan, k)
                if not segments:
                    continue
                fh.write(f"g free_segment_iter_{plan.records[k].index:05d}\n")
                for seg in segments:
                    for v in seg:
                        fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
                    fh.write(f"l {offset + 1} {offset + 2}\n")
                    offset += 2
