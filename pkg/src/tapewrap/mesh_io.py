"""Mesh loading, saving, validation, and parametric anatomy stand-ins.

Supported file formats: ASCII OBJ (v/f lines, triangles only) and binary STL.
Units are meters; a scale factor can be applied at load time (e.g. 0.001 for
millimeter files).
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidMesh, InvalidSpec
from .geometry import CONVEXITY_TOL, SurfaceMesh, convex_hull

log = logging.getLogger(__name__)

MESH_KINDS = ("plane", "cylinder", "hemisphere", "heel_composite")


@dataclass(frozen=True)
class MeshSpec:
    """Parametric surface description.

    kind-specific dimensions (meters):
      plane          width, depth
      cylinder       radius, length
      hemisphere     radius
      heel_composite heel_radius, sole_length, ankle_radius
    resolution is the facet count per curved quarter-turn (>= 4); for the
    plane it is the grid cell count per side.
    """

    kind: str
    width: float = 0.0
    depth: float = 0.0
    radius: float = 0.0
    length: float = 0.0
    heel_radius: float = 0.0
    sole_length: float = 0.0
    ankle_radius: float = 0.0
    resolution: int = 16

    _REQUIRED = {
        "plane": ("width", "depth"),
        "cylinder": ("radius", "length"),
        "hemisphere": ("radius",),
        "heel_composite": ("heel_radius", "sole_length", "ankle_radius"),
    }

    def validate(self) -> None:
        if self.kind not in MESH_KINDS:
            raise InvalidSpec(f"unknown mesh kind {self.kind!r}; expected one of {MESH_KINDS}")
        for name in self._REQUIRED[self.kind]:
            value = getattr(self, name)
            if not (value > 0.0):
                raise InvalidSpec(f"{self.kind} dimension {name!r} must be > 0, got {value}")
        if self.resolution < 4:
            raise InvalidSpec(f"resolution must be >= 4, got {self.resolution}")

    @classmethod
    def plane(cls, width: float, depth: float, resolution: int = 8) -> "MeshSpec":
        return cls(kind="plane", width=width, depth=depth, resolution=resolution)

    @classmethod
    def cylinder(cls, radius: float, length: float, resolution: int = 32) -> "MeshSpec":
        return cls(kind="cylinder", radius=radius, length=length, resolution=resolution)

    @classmethod
    def hemisphere(cls, radius: float, resolution: int = 16) -> "MeshSpec":
        return cls(kind="hemisphere", radius=radius, resolution=resolution)

    @classmethod
    def heel_composite(
        cls,
        heel_radius: float = 0.04,
        sole_length: float = 0.18,
        ankle_radius: float = 0.035,
        resolution: int = 16,
    ) -> "MeshSpec":
        return cls(
            kind="heel_composite",
            heel_radius=heel_radius,
            sole_length=sole_length,
            ankle_radius=ankle_radius,
            resolution=resolution,
        )


def _grid_faces(nx: int, ny: int, index, flip: bool = False) -> list[list[int]]:
    """Two triangles per cell over an (nx+1) x (ny+1) vertex grid."""
    faces = []
    for i in range(nx):
        for j in range(ny):
            v00, v10 = index(i, j), index(i + 1, j)
            v01, v11 = index(i, j + 1), index(i + 1, j + 1)
            if flip:
                faces.append([v00, v11, v10])
                faces.append([v00, v01, v11])
            else:
                faces.append([v00, v10, v11])
                faces.append([v00, v11, v01])
    return faces


def _generate_plane(width: float, depth: float, res: int) -> SurfaceMesh:
    # Thin watertight slab; the tape operates on the z=0 top grid.
    thickness = min(width, depth) / 10.0
    xs = np.linspace(-width / 2.0, width / 2.0, res + 1)
    ys = np.linspace(-depth / 2.0, depth / 2.0, res + 1)
    top = np.array([[x, y, 0.0] for x in xs for y in ys])
    bottom = top + np.array([0.0, 0.0, -thickness])
    vertices = np.vstack([top, bottom])

    def tidx(i, j):
        return i * (res + 1) + j

    def bidx(i, j):
        return len(top) + i * (res + 1) + j

    faces = _grid_faces(res, res, tidx)
    faces += _grid_faces(res, res, bidx, flip=True)
    # Side walls around the rim.
    for i in range(res):
        faces.append([tidx(i, 0), bidx(i, 0), bidx(i + 1, 0)])
        faces.append([tidx(i, 0), bidx(i + 1, 0), tidx(i + 1, 0)])
        faces.append([tidx(i, res), bidx(i + 1, res), bidx(i, res)])
        faces.append([tidx(i, res), tidx(i + 1, res), bidx(i + 1, res)])
        faces.append([tidx(0, i), bidx(0, i + 1), bidx(0, i)])
        faces.append([tidx(0, i), tidx(0, i + 1), bidx(0, i + 1)])
        faces.append([tidx(res, i), bidx(res, i), bidx(res, i + 1)])
        faces.append([tidx(res, i), bidx(res, i + 1), tidx(res, i + 1)])
    return SurfaceMesh(vertices, faces)


def _generate_cylinder(radius: float, length: float, res: int) -> SurfaceMesh:
    m = 4 * res  # facets per full turn
    n_rings = max(2, int(round(length / radius)) + 1)
    phis = np.arange(m) * (2.0 * np.pi / m)
    zs = np.linspace(-length / 2.0, length / 2.0, n_rings)
    vertices = np.array([[radius * np.cos(p), radius * np.sin(p), z] for z in zs for p in phis])

    def idx(ring, k):
        return ring * m + k % m

    faces = []
    for ring in range(n_rings - 1):
        for k in range(m):
            faces.append([idx(ring, k), idx(ring, k + 1), idx(ring + 1, k + 1)])
            faces.append([idx(ring, k), idx(ring + 1, k + 1), idx(ring + 1, k)])
    # Caps as fans anchored at a rim vertex (no center vertex).
    for k in range(1, m - 1):
        faces.append([idx(0, 0), idx(0, k + 1), idx(0, k)])
        faces.append([idx(n_rings - 1, 0), idx(n_rings - 1, k), idx(n_rings - 1, k + 1)])
    return SurfaceMesh(vertices, faces)


def _generate_hemisphere(radius: float, res: int) -> SurfaceMesh:
    m = 4 * res
    thetas = np.arange(1, res + 1) * (np.pi / 2.0 / res)  # apex excluded
    phis = np.arange(m) * (2.0 * np.pi / m)
    vertices = [np.array([0.0, 0.0, radius])]  # apex
    for t in thetas:
        ring_r = radius * np.sin(t)
        z = radius * np.cos(t)
        vertices.extend(np.array([ring_r * np.cos(p), ring_r * np.sin(p), z]) for p in phis)
    vertices = np.array(vertices)

    def idx(ring, k):
        return 1 + ring * m + k % m

    faces = [[0, idx(0, k), idx(0, k + 1)] for k in range(m)]
    for ring in range(res - 1):
        for k in range(m):
            faces.append([idx(ring, k), idx(ring + 1, k), idx(ring + 1, k + 1)])
            faces.append([idx(ring, k), idx(ring + 1, k + 1), idx(ring, k + 1)])
    # Base disk: fan anchored at equator vertex 0 (all vertices stay on the sphere).
    eq = res - 1
    for k in range(1, m - 1):
        faces.append([idx(eq, 0), idx(eq, k + 1), idx(eq, k)])
    return SurfaceMesh(vertices, faces)


def _generate_heel(heel_radius: float, sole_length: float, ankle_radius: float, res: int) -> SurfaceMesh:
    width = 2.5 * heel_radius
    ys = (-width / 2.0, width / 2.0)
    pts = []
    # Quarter-cylinder heel: from the sole plane (z=0) curling up the back.
    for t in np.linspace(0.0, np.pi / 2.0, res + 1):
        for y in ys:
            pts.append([-heel_radius * np.sin(t), y, heel_radius * (1.0 - np.cos(t))])
    # Thin sole box extending forward.
    for x in (0.0, sole_length):
        for y in ys:
            for z in (0.0, 0.25 * heel_radius):
                pts.append([x, y, z])
    # Ankle bulge above the heel; the hull keeps only its outer arc.
    cx, cz = -0.6 * heel_radius, 3.0 * heel_radius
    for t in np.linspace(0.0, 2.0 * np.pi, 4 * res, endpoint=False):
        for y in ys:
            pts.append([cx + ankle_radius * np.cos(t), y, cz + ankle_radius * np.sin(t)])
    vertices, faces = convex_hull(np.array(pts))
    return SurfaceMesh(vertices, faces)


def generate_mesh(spec: MeshSpec) -> SurfaceMesh:
    """Generate a watertight convex mesh for the given spec.

    Chordal deviation from the analytic surface for curved kinds stays below
    r * (1 - cos(pi / (2 * resolution))).
    """
    spec.validate()
    if spec.kind == "plane":
        mesh = _generate_plane(spec.width, spec.depth, spec.resolution)
    elif spec.kind == "cylinder":
        mesh = _generate_cylinder(spec.radius, spec.length, spec.resolution)
    elif spec.kind == "hemisphere":
        mesh = _generate_hemisphere(spec.radius, spec.resolution)
    else:
        mesh = _generate_heel(spec.heel_radius, spec.sole_length, spec.ankle_radius, spec.resolution)
    violation = mesh.convexity_violation()
    if violation > CONVEXITY_TOL:
        raise InvalidMesh(f"generated {spec.kind} mesh failed the convexity audit ({violation:.3g} m)")
    return mesh


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def _load_obj(path: Path) -> tuple[np.ndarray, np.ndarray]:
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tag, *rest = line.split()
            if tag == "v":
                if len(rest) < 3:
                    raise FormatError(f"{path}:{lineno}: vertex needs 3 coordinates")
                try:
                    vertices.append([float(x) for x in rest[:3]])
                except ValueError as exc:
                    raise FormatError(f"{path}:{lineno}: bad vertex coordinate") from exc
            elif tag == "f":
                if len(rest) != 3:
                    raise FormatError(f"{path}:{lineno}: only triangular faces are supported")
                try:
                    idx = [int(tok.split("/")[0]) for tok in rest]
                except ValueError as exc:
                    raise FormatError(f"{path}:{lineno}: bad face index") from exc
                faces.append([i - 1 for i in idx])
            # Other OBJ tags (vn, vt, o, g, s, l, ...) are ignored on load.
    if not vertices or not faces:
        raise FormatError(f"{path}: no triangles found")
    return np.array(vertices, dtype=float), np.array(faces, dtype=np.int64)


def _load_stl(path: Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        header = fh.read(80)
        if len(header) < 80:
            raise FormatError(f"{path}: truncated STL header")
        (count,) = struct.unpack("<I", fh.read(4))
        data = fh.read(50 * count)
    if len(data) != 50 * count:
        raise FormatError(f"{path}: truncated STL body (expected {count} faces)")
    records = np.frombuffer(data, dtype=np.uint8).reshape(count, 50)
    tris = records[:, 12:48].copy().view("<f4").reshape(count, 3, 3).astype(float)
    flat = tris.reshape(-1, 3)
    unique, inverse = np.unique(flat, axis=0, return_inverse=True)
    faces = inverse.reshape(count, 3)
    return unique, faces.astype(np.int64)


def _save_obj(mesh: SurfaceMesh, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# tapewrap surface mesh: {mesh.num_vertices} vertices, {mesh.num_faces} faces\n")
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def _save_stl(mesh: SurfaceMesh, path: Path) -> None:
    with open(path, "wb") as fh:
        fh.write(b"tapewrap binary STL".ljust(80, b" "))
        fh.write(struct.pack("<I", mesh.num_faces))
        for f, n in zip(mesh.faces, mesh.face_normals):
            rec = struct.pack("<3f", *n.astype(np.float32))
            for vi in f:
                rec += struct.pack("<3f", *mesh.vertices[vi].astype(np.float32))
            rec += struct.pack("<H", 0)
            fh.write(rec)


def load_mesh(path, scale: float = 1.0, convexify: bool = True) -> SurfaceMesh:
    """Load and validate an OBJ or STL mesh, applying `scale` to coordinates.

    The mesh is returned convex: if it already passes the convexity audit its
    triangulation is preserved, otherwise the convex hull of its vertices is
    built. Pass convexify=False (concave planning mode) to keep the surface
    as-is.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        vertices, faces = _load_obj(path)
    elif suffix == ".stl":
        vertices, faces = _load_stl(path)
    else:
        raise FormatError(f"unsupported mesh format {suffix!r} (expected .obj or .stl)")
    if scale != 1.0:
        vertices = vertices * float(scale)
    mesh = SurfaceMesh(vertices, faces, orient_from_centroid=convexify)
    if convexify and not mesh.is_convex:
        log.info("loaded mesh is not convex (violation %.3g m); rebuilding as its hull",
                 mesh.convexity_violation())
        hull_vertices, hull_faces = convex_hull(mesh.vertices)
        mesh = SurfaceMesh(hull_vertices, hull_faces)
    return mesh


def save_mesh(mesh: SurfaceMesh, path) -> None:
    """Write the mesh as ASCII OBJ (default) or binary STL by extension."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".stl":
        _save_stl(mesh, path)
    elif suffix in (".obj", ""):
        _save_obj(mesh, path if suffix else path.with_suffix(".obj"))
    else:
        raise FormatError(f"unsupported mesh format {suffix!r} (expected .obj or .stl)")
