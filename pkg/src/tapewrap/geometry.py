"""Numeric kernel: 3-vectors, rotations, triangle meshes, closest-point queries,
and 3-D convex hull construction.

Conventions: positions in meters, angles in radians, direction/normal vectors
unit length. Vectors are numpy arrays of shape (3,), rotations are (3, 3)
orthonormal matrices with determinant +1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DegenerateHull,
    DegenerateTriangle,
    EmptyMesh,
    InvalidAxis,
    InvalidMesh,
    InvalidVector,
)

Vec3 = np.ndarray
Rot3 = np.ndarray

UNIT_TOL = 1e-9
DEGENERATE_AREA = 1e-12
CONVEXITY_TOL = 1e-7
HULL_EPS = 1e-10


def norm(v: Vec3) -> float:
    return float(np.linalg.norm(v))


def unit(v: Vec3) -> Vec3:
    """Return v normalized to unit length; raises InvalidVector on ~zero input."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise InvalidVector("cannot normalize a (near-)zero vector")
    return v / n


def is_unit(v: Vec3, tol: float = UNIT_TOL) -> bool:
    return abs(np.linalg.norm(v) - 1.0) <= tol


def rodrigues(axis: Vec3, angle: float) -> Rot3:
    """Rotation matrix for a rotation of `angle` radians about the unit `axis`."""
    axis = np.asarray(axis, dtype=float)
    if axis.shape != (3,) or not is_unit(axis):
        raise InvalidAxis(f"rotation axis must be a unit 3-vector, got {axis!r}")
    if not np.isfinite(angle):
        raise InvalidAxis(f"rotation angle must be finite, got {angle!r}")
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rotation_angle(rot: Rot3) -> float:
    """Rotation angle in [0, pi] recovered from the matrix trace."""
    c = (np.trace(rot) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def rotation_axis_angle(rot: Rot3) -> tuple[Vec3, float]:
    """Recover (axis, angle) from a rotation matrix.

    For angles below ~1e-12 the axis is ill-defined and (0,0,0) is returned.
    Angles near pi are not needed by the planner (steps are small) and fall
    back to the skew-part formula, which degrades gracefully.
    """
    angle = rotation_angle(rot)
    if angle < 1e-12:
        return np.zeros(3), 0.0
    skew = np.array([rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]])
    axis = skew / (2.0 * np.sin(angle))
    n = np.linalg.norm(axis)
    if n < 1e-12:
        return np.zeros(3), angle
    return axis / n, angle


def is_rotation(rot: Rot3, tol: float = UNIT_TOL) -> bool:
    """True iff rot is orthonormal with det +1 within tol (elementwise)."""
    rot = np.asarray(rot, dtype=float)
    if rot.shape != (3, 3):
        return False
    ortho = np.max(np.abs(rot.T @ rot - np.eye(3)))
    return ortho <= tol and abs(np.linalg.det(rot) - 1.0) <= tol


def rot_to_quat(rot: Rot3) -> np.ndarray:
    """Convert a rotation matrix to a unit quaternion (w, x, y, z)."""
    m = np.asarray(rot, dtype=float)
    t = np.trace(m)
    if t > 0.0:
        s = 2.0 * np.sqrt(t + 1.0)
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        w = (m[2, 1] - m[1, 2]) / s
        x = 0.25 * s
        y = (m[0, 1] + m[1, 0]) / s
        z = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] >= m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        w = (m[0, 2] - m[2, 0]) / s
        x = (m[0, 1] + m[1, 0]) / s
        y = 0.25 * s
        z = (m[1, 2] + m[2, 1]) / s
    else:
        s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        w = (m[1, 0] - m[0, 1]) / s
        x = (m[0, 2] + m[2, 0]) / s
        y = (m[1, 2] + m[2, 1]) / s
        z = 0.25 * s
    q = np.array([w, x, y, z])
    return q / np.linalg.norm(q)


def quat_to_rot(q: np.ndarray) -> Rot3:
    """Convert a quaternion (w, x, y, z) to a rotation matrix."""
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


# ---------------------------------------------------------------------------
# Point-to-triangle
# ---------------------------------------------------------------------------

def _closest_on_triangles(a: np.ndarray, b: np.ndarray, c: np.ndarray, p: Vec3) -> np.ndarray:
    """Closest point to p on each triangle (a[i], b[i], c[i]), vectorized.

    Voronoi-region walk after Ericson, "Real-Time Collision Detection", 5.1.5.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    out = np.empty_like(a)
    done = np.zeros(len(a), dtype=bool)

    def take(mask: np.ndarray, pts: np.ndarray) -> None:
        m = mask & ~done
        if m.any():
            out[m] = pts[m] if pts.ndim == 2 else pts
        done[m] = True

    take((d1 <= 0.0) & (d2 <= 0.0), a)  # vertex region A
    take((d3 >= 0.0) & (d4 <= d3), b)  # vertex region B
    take((d6 >= 0.0) & (d5 <= d6), c)  # vertex region C
    with np.errstate(divide="ignore", invalid="ignore"):
        v = d1 / (d1 - d3)
        take((vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0), a + v[:, None] * ab)
        w = d2 / (d2 - d6)
        take((vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0), a + w[:, None] * ac)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        take((va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0), b + w[:, None] * (c - b))
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        take(np.ones(len(a), dtype=bool), a + v[:, None] * ab + w[:, None] * ac)
    return out


def triangle_area(tri: np.ndarray) -> float:
    tri = np.asarray(tri, dtype=float)
    return 0.5 * float(np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0])))


def closest_point_on_triangle(p: Vec3, tri: np.ndarray) -> Vec3:
    """Closest point of the closed triangle `tri` (3x3, one vertex per row) to p."""
    tri = np.asarray(tri, dtype=float)
    if triangle_area(tri) <= DEGENERATE_AREA:
        raise DegenerateTriangle(f"triangle area below {DEGENERATE_AREA} m^2")
    p = np.asarray(p, dtype=float)
    return _closest_on_triangles(tri[None, 0], tri[None, 1], tri[None, 2], p)[0]


def barycentric_coordinates(p: Vec3, tri: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of p with respect to tri (least squares in-plane)."""
    tri = np.asarray(tri, dtype=float)
    m = np.stack([tri[1] - tri[0], tri[2] - tri[0]], axis=1)
    st, *_ = np.linalg.lstsq(m, np.asarray(p, dtype=float) - tri[0], rcond=None)
    s, t = st
    return np.array([1.0 - s - t, s, t])


# ---------------------------------------------------------------------------
# Surface mesh
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SurfacePoint:
    """Result of a mesh closest-point query.

    position lies on triangle `face_index`; normal is that face's outward
    normal; signed_distance is negative iff the query point is on the interior
    side of the surface.
    """

    position: Vec3
    normal: Vec3
    face_index: int
    signed_distance: float

    @property
    def distance(self) -> float:
        return abs(self.signed_distance)


class SurfaceMesh:
    """Triangle mesh with outward per-face normals and closest-point support.

    Vertices are (V, 3) float64, faces (F, 3) int indices. Faces are validated
    for index range and non-degeneracy (area > 1e-12 m^2). With
    orient_from_centroid=True (the default, correct for convex meshes) face
    windings are flipped so normals point away from the vertex centroid;
    otherwise the given winding defines the normal (right-hand rule).
    """

    def __init__(self, vertices, faces, orient_from_centroid: bool = True):
        vertices = np.ascontiguousarray(np.asarray(vertices, dtype=float).reshape(-1, 3))
        faces = np.ascontiguousarray(np.asarray(faces, dtype=np.int64).reshape(-1, 3))
        if len(faces) and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise InvalidMesh("face indices out of range")

        a = vertices[faces[:, 0]] if len(faces) else np.zeros((0, 3))
        b = vertices[faces[:, 1]] if len(faces) else np.zeros((0, 3))
        c = vertices[faces[:, 2]] if len(faces) else np.zeros((0, 3))
        cross = np.cross(b - a, c - a)
        areas = 0.5 * np.linalg.norm(cross, axis=1)
        bad = np.nonzero(areas <= DEGENERATE_AREA)[0]
        if bad.size:
            raise InvalidMesh(
                f"degenerate faces (area <= {DEGENERATE_AREA} m^2): {bad.tolist()}",
                faces=bad.tolist(),
            )
        normals = cross / (2.0 * areas[:, None]) if len(faces) else cross

        centroid = vertices.mean(axis=0) if len(vertices) else np.zeros(3)
        if orient_from_centroid and len(faces):
            face_centers = (a + b + c) / 3.0
            flip = np.einsum("ij,ij->i", normals, face_centers - centroid) < 0.0
            if flip.any():
                faces[flip] = faces[flip][:, ::-1]
                normals[flip] = -normals[flip]
                b = vertices[faces[:, 1]]
                c = vertices[faces[:, 2]]

        self.vertices = vertices
        self.faces = faces
        self.face_normals = normals
        self.face_areas = areas
        self.centroid = centroid
        self.plane_offsets = np.einsum("ij,ij->i", normals, a) if len(faces) else np.zeros(0)
        self._a, self._b, self._c = a, b, c
        for arr in (self.vertices, self.faces, self.face_normals):
            arr.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def triangle(self, face_index: int) -> np.ndarray:
        return self.vertices[self.faces[face_index]]

    def convexity_violation(self) -> float:
        """Worst outward plane-distance of any vertex to any face plane.

        <= 0 means every vertex is on or inside every face half-space.
        """
        if not self.num_faces:
            raise EmptyMesh("mesh has no faces")
        d = self.vertices @ self.face_normals.T - self.plane_offsets[None, :]
        return float(d.max())

    @cached_property
    def is_convex(self) -> bool:
        return self.convexity_violation() <= CONVEXITY_TOL

    def contains(self, p: Vec3) -> bool:
        """Half-space membership test; exact for convex meshes."""
        if not self.num_faces:
            raise EmptyMesh("mesh has no faces")
        d = self.face_normals @ np.asarray(p, dtype=float) - self.plane_offsets
        return bool(d.max() <= 0.0)


def closest_point_on_surface(mesh: SurfaceMesh, p: Vec3) -> SurfacePoint:
    """Globally nearest surface point over all triangles of the mesh.

    Ties between faces resolve to the lowest face index. The signed distance
    is negative iff p lies inside the surface: via the exact half-space test
    when the mesh is convex, else via the winning face's normal side.
    """
    if not mesh.num_faces:
        raise EmptyMesh("mesh has no faces")
    p = np.asarray(p, dtype=float)
    pts = _closest_on_triangles(mesh._a, mesh._b, mesh._c, p)
    diff = pts - p
    d2 = np.einsum("ij,ij->i", diff, diff)
    f = int(np.argmin(d2))
    position = pts[f].copy()
    unsigned = float(np.sqrt(d2[f]))
    if mesh.is_convex:
        inside = bool(np.max(mesh.face_normals @ p - mesh.plane_offsets) <= 0.0)
    else:
        inside = float(np.dot(mesh.face_normals[f], p - position)) < 0.0
    signed = -unsigned if inside else unsigned
    return SurfacePoint(
        position=position,
        normal=mesh.face_normals[f].copy(),
        face_index=f,
        signed_distance=signed,
    )


# ---------------------------------------------------------------------------
# Convex hull
# ---------------------------------------------------------------------------

def _initial_simplex(pts: np.ndarray, eps: float) -> list[int]:
    spread = pts.max(axis=0) - pts.min(axis=0)
    axis = int(np.argmax(spread))
    i0 = int(np.argmin(pts[:, axis]))
    i1 = int(np.argmax(pts[:, axis]))
    if np.linalg.norm(pts[i1] - pts[i0]) <= eps:
        raise DegenerateHull("all points coincide")
    d = pts[i1] - pts[i0]
    dist_line = np.linalg.norm(np.cross(pts - pts[i0], d), axis=1) / np.linalg.norm(d)
    i2 = int(np.argmax(dist_line))
    if dist_line[i2] <= eps:
        raise DegenerateHull("points are collinear")
    n = np.cross(pts[i1] - pts[i0], pts[i2] - pts[i0])
    n = n / np.linalg.norm(n)
    dist_plane = np.abs((pts - pts[i0]) @ n)
    i3 = int(np.argmax(dist_plane))
    if dist_plane[i3] <= eps:
        raise DegenerateHull("points are coplanar")
    return [i0, i1, i2, i3]


def convex_hull(points, eps: float = HULL_EPS) -> tuple[np.ndarray, np.ndarray]:
    """Convex hull of a 3-D point set by incremental insertion.

    Returns (vertices, faces) with outward-oriented triangles. Points within
    `eps` of the running hull are skipped, so coplanar/collinear extras never
    produce sliver faces. Raises DegenerateHull for flat or collinear input.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 4:
        raise DegenerateHull("need at least 4 points for a 3-D hull")

    simplex = _initial_simplex(pts, eps)
    interior = pts[simplex].mean(axis=0)

    faces: list[tuple[int, int, int]] = []
    for f in ([simplex[0], simplex[1], simplex[2]],
              [simplex[0], simplex[1], simplex[3]],
              [simplex[0], simplex[2], simplex[3]],
              [simplex[1], simplex[2], simplex[3]]):
        a, b, c = (pts[i] for i in f)
        n = np.cross(b - a, c - a)
        if np.dot(n, interior - a) > 0.0:
            f = [f[0], f[2], f[1]]
        faces.append(tuple(f))

    def planes(face_list):
        arr = np.array(face_list, dtype=np.int64)
        a = pts[arr[:, 0]]
        n = np.cross(pts[arr[:, 1]] - a, pts[arr[:, 2]] - a)
        lens = np.linalg.norm(n, axis=1)
        lens[lens == 0.0] = 1.0
        n = n / lens[:, None]
        return n, np.einsum("ij,ij->i", n, a)

    normals, offsets = planes(faces)

    order = [i for i in range(len(pts)) if i not in set(simplex)]
    order.sort(key=lambda i: (-np.linalg.norm(pts[i] - interior), i))

    for idx in order:
        dists = normals @ pts[idx] - offsets
        visible = dists > eps
        if not visible.any():
            continue
        visible_faces = [faces[k] for k in np.nonzero(visible)[0]]
        hidden_faces = [faces[k] for k in np.nonzero(~visible)[0]]

        # Horizon: directed edges of visible faces whose undirected twin
        # appears only once within the visible set.
        counts: dict[tuple[int, int], int] = {}
        for fa, fb, fc in visible_faces:
            for e in ((fa, fb), (fb, fc), (fc, fa)):
                key = (min(e), max(e))
                counts[key] = counts.get(key, 0) + 1
        new_faces = []
        for fa, fb, fc in visible_faces:
            for e in ((fa, fb), (fb, fc), (fc, fa)):
                if counts[(min(e), max(e))] == 1:
                    tri = (e[0], e[1], idx)
                    a, b, c = pts[tri[0]], pts[tri[1]], pts[tri[2]]
                    n = np.cross(b - a, c - a)
                    if np.dot(n, interior - a) > 0.0:
                        tri = (tri[0], tri[2], tri[1])
                    new_faces.append(tri)
        faces = hidden_faces + new_faces
        normals, offsets = planes(faces)

    used = sorted({i for f in faces for i in f})
    remap = {old: new for new, old in enumerate(used)}
    out_vertices = pts[used]
    out_faces = np.array([[remap[i] for i in f] for f in faces], dtype=np.int64)
    return out_vertices, out_faces


def convexify(mesh: SurfaceMesh) -> SurfaceMesh:
    """Convex hull of the mesh's vertices as a new outward-oriented mesh."""
    vertices, faces = convex_hull(mesh.vertices)
    return SurfaceMesh(vertices, faces, orient_from_centroid=True)
