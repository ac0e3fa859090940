"""Exception types raised across the package."""


class TapewrapError(Exception):
    """Base class for all tapewrap errors."""


class InvalidAxis(TapewrapError):
    """Rotation axis is not a unit vector."""


class DegenerateTriangle(TapewrapError):
    """Triangle has (near-)zero area."""


class EmptyMesh(TapewrapError):
    """Mesh has no faces to query."""


class DegenerateHull(TapewrapError):
    """Input points are coplanar/collinear; no 3-D hull exists."""


class InvalidMesh(TapewrapError):
    """Mesh failed validation.

    ``faces`` lists the offending face indices when applicable.
    """

    def __init__(self, message, faces=()):
        super().__init__(message)
        self.faces = tuple(faces)


class InvalidSpec(TapewrapError):
    """Mesh generation spec has invalid dimensions or resolution."""


class FormatError(TapewrapError):
    """Mesh file could not be parsed."""


class InvalidVector(TapewrapError):
    """Vector argument violates a unit-norm or non-zero precondition."""


class NoFreeSegment(TapewrapError):
    """Requested side of the tape has no free elements."""


class InvalidDirection(TapewrapError):
    """Taping direction is parallel to the surface normal (or zero)."""


class TapeTooShort(TapewrapError):
    """Tape length below the 3-element minimum."""


class InvalidConfig(TapewrapError):
    """Planner configuration violates its invariants."""


class InconsistentPlan(TapewrapError):
    """Plan and mesh disagree (claimed-attached elements far off the surface)."""


class OracleFailed(TapewrapError):
    """Refinement oracle could not produce a complete comparison plan."""
