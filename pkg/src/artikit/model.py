"""Domain types for articulated objects, validation, JSON serialization and URDF export.

All geometry lives in canonical object coordinates: the object fits inside the
axis-aligned cube [-0.5, 0.5]^3 and every joint frame coincides with the object
frame in the canonical (rest) state.  Part ids are integers; the reserved
parent id ``ROOT_ID`` (-1) marks attachment to the static base.
"""

from __future__ import annotations

import enum
import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError

ROOT_ID = -1

UNIT_AXIS_TOL = 1e-6


def _vec3(value, name="vector"):
    """Coerce to a read-only float64 array of shape (3,)."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {arr.shape}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


def _points(value, name="points"):
    """Coerce to a read-only float64 array of shape (M, 3)."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (M, 3), got {arr.shape}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


def _indices(value, name="indices"):
    arr = np.asarray(value, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d index array, got shape {arr.shape}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


class JointType(enum.Enum):
    FIXED = "fixed"
    REVOLUTE = "revolute"
    PRISMATIC = "prismatic"
    CONTINUOUS = "continuous"


#: Category order used wherever joint types are encoded as class indices.
JOINT_TYPE_ORDER = (
    JointType.FIXED,
    JointType.REVOLUTE,
    JointType.PRISMATIC,
    JointType.CONTINUOUS,
)


@dataclass(frozen=True)
class JointLimits:
    """Symmetric motion range [center - span, center + span].

    Units are radians for revolute/continuous joints and normalized object
    lengths for prismatic joints.  Fixed joints carry center = span = 0.
    """

    center: float = 0.0
    span: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", float(self.center))
        object.__setattr__(self, "span", float(self.span))

    @property
    def lower(self) -> float:
        return self.center - self.span

    @property
    def upper(self) -> float:
        return self.center + self.span


@dataclass(frozen=True, eq=False)
class JointSpec:
    """One joint: type, unit axis direction, pivot point and motion limits.

    The pivot is kept for prismatic joints for schema symmetry even though
    translation ignores it.
    """

    jtype: JointType
    axis: np.ndarray
    pivot: np.ndarray
    limits: JointLimits = field(default_factory=JointLimits)

    def __post_init__(self):
        object.__setattr__(self, "axis", _vec3(self.axis, "axis"))
        object.__setattr__(self, "pivot", _vec3(self.pivot, "pivot"))

    def __eq__(self, other):
        if not isinstance(other, JointSpec):
            return NotImplemented
        return (
            self.jtype is other.jtype
            and np.array_equal(self.axis, other.axis)
            and np.array_equal(self.pivot, other.pivot)
            and self.limits == other.limits
        )


@dataclass(frozen=True, eq=False)
class PartSpec:
    """A rigid part: category label, owned point indices and its joint."""

    id: int
    label: int
    point_indices: np.ndarray
    joint: JointSpec

    def __post_init__(self):
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "point_indices", _indices(self.point_indices, "point_indices"))

    def __eq__(self, other):
        if not isinstance(other, PartSpec):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and np.array_equal(self.point_indices, other.point_indices)
            and self.joint == other.joint
        )


@dataclass(frozen=True)
class KinematicTree:
    """Parent map part-id -> parent part-id, with ROOT_ID for root attachment."""

    parent: dict

    def __post_init__(self):
        object.__setattr__(
            self, "parent", {int(k): int(v) for k, v in self.parent.items()}
        )

    def children(self, part_id: int) -> list:
        return sorted(k for k, v in self.parent.items() if v == part_id)

    def path_to_root(self, part_id: int) -> list:
        """Part ids from ``part_id`` up to (excluding) ROOT. Raises on cycles."""
        path = []
        seen = set()
        cur = part_id
        while cur != ROOT_ID:
            if cur in seen:
                raise ValidationError(f"tree: cycle reached from part {part_id}")
            seen.add(cur)
            path.append(cur)
            if cur not in self.parent:
                raise ValidationError(f"tree: unknown part id {cur}")
            cur = self.parent[cur]
        return path


@dataclass(frozen=True, eq=False)
class ArticulatedModel:
    """Canonical points, their partition into parts/base, and the kinematic tree."""

    points: np.ndarray
    parts: tuple
    tree: KinematicTree
    base_indices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _points(self.points, "points"))
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "base_indices", _indices(self.base_indices, "base_indices"))

    def part_by_id(self, part_id: int) -> PartSpec:
        for part in self.parts:
            if part.id == part_id:
                return part
        raise KeyError(f"no part with id {part_id}")

    @property
    def num_points(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ArticulatedModel):
            return NotImplemented
        return (
            np.array_equal(self.points, other.points)
            and self.parts == other.parts
            and self.tree == other.tree
            and np.array_equal(self.base_indices, other.base_indices)
        )


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle mesh: (V, 3) float vertices and (F, 3) integer faces."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", _points(self.vertices, "vertices"))
        faces = np.asarray(self.faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError(f"faces must have shape (F, 3), got {faces.shape}")
        faces = faces.copy()
        faces.setflags(write=False)
        object.__setattr__(self, "faces", faces)

    def face_areas(self) -> np.ndarray:
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def validate(self) -> list:
        out = []
        if not np.all(np.isfinite(self.vertices)):
            out.append("mesh: vertex component not finite")
        if self.faces.shape[0] == 0:
            out.append("mesh: no faces")
        else:
            if self.faces.min() < 0 or self.faces.max() >= self.vertices.shape[0]:
                out.append("mesh: face index out of range")
            elif not np.any(self.face_areas() > 0.0):
                out.append("mesh: no face with nonzero area")
        return out

    def __eq__(self, other):
        if not isinstance(other, TriMesh):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices) and np.array_equal(
            self.faces, other.faces
        )


# ---------------------------------------------------------------------------
# validation


def _tree_cycles(parent: dict) -> list:
    """Return cycles in a parent map as sorted id lists."""
    cycles = []
    color = {}  # 0 visiting, 1 done
    for start in parent:
        if start in color:
            continue
        chain = []
        cur = start
        while True:
            if cur == ROOT_ID or cur not in parent:
                break
            state = color.get(cur)
            if state == 1:
                break
            if state == 0:
                # found a cycle: the tail of chain from cur onwards
                idx = chain.index(cur)
                cycles.append(sorted(chain[idx:]))
                break
            color[cur] = 0
            chain.append(cur)
            cur = parent[cur]
        for node in chain:
            color[node] = 1
    return cycles


def validate_model(model: ArticulatedModel) -> list:
    """Check every type invariant; return human-readable violations (empty = valid).

    Violations are data, not failures: callers decide whether to raise.
    """
    out = []
    m = model.num_points

    if not np.all(np.isfinite(model.points)):
        bad = int(np.flatnonzero(~np.isfinite(model.points).all(axis=1))[0])
        out.append(f"points[{bad}]: component not finite")

    part_ids = [p.id for p in model.parts]
    if len(set(part_ids)) != len(part_ids):
        out.append("parts: duplicate part id")

    for part in model.parts:
        tag = f"part {part.id}"
        j = part.joint
        if not np.all(np.isfinite(j.axis)):
            out.append(f"{tag}: joint axis not finite")
        if not np.all(np.isfinite(j.pivot)):
            out.append(f"{tag}: joint pivot not finite")
        if not (math.isfinite(j.limits.center) and math.isfinite(j.limits.span)):
            out.append(f"{tag}: joint limits not finite")
        elif j.limits.span < 0.0:
            out.append(f"{tag}: joint limits violate span >= 0 (span={j.limits.span!r})")
        if j.jtype is JointType.FIXED:
            if j.limits.center != 0.0 or j.limits.span != 0.0:
                out.append(f"{tag}: fixed joint must have center = span = 0")
        else:
            norm = float(np.linalg.norm(j.axis))
            if abs(norm - 1.0) > UNIT_AXIS_TOL:
                out.append(f"{tag}: joint axis not unit length (norm={norm:.6g})")

        if part.point_indices.size == 0:
            out.append(f"{tag}: point_indices empty")
        else:
            if part.point_indices.min() < 0 or part.point_indices.max() >= m:
                out.append(f"{tag}: point_indices out of range")
            if np.unique(part.point_indices).size != part.point_indices.size:
                out.append(f"{tag}: point_indices contains duplicates")

    # tree structure
    id_set = set(part_ids)
    parent = model.tree.parent
    for pid in sorted(id_set):
        if pid not in parent:
            out.append(f"tree: missing part {pid}")
    for pid in sorted(parent):
        if pid not in id_set:
            out.append(f"tree: unknown part id {pid}")
        pa = parent[pid]
        if pa != ROOT_ID and pa not in id_set:
            out.append(f"tree: parent {pa} of part {pid} is not a part")
        if pa == pid:
            out.append(f"tree: part {pid} is its own parent")
    for cycle in _tree_cycles(parent):
        out.append("tree: cycle {%s}" % ", ".join(str(c) for c in cycle))

    # coverage: parts + base partition all point indices
    if m > 0:
        owner = np.zeros(m, dtype=np.int64)
        ok_range = True
        for part in model.parts:
            idx = part.point_indices
            if idx.size and (idx.min() < 0 or idx.max() >= m):
                ok_range = False
                continue
            owner[idx] += 1
        bidx = model.base_indices
        if bidx.size:
            if bidx.min() < 0 or bidx.max() >= m:
                out.append("base_indices: index out of range")
                ok_range = False
            else:
                owner[bidx] += 1
        if ok_range:
            over = np.flatnonzero(owner > 1)
            under = np.flatnonzero(owner == 0)
            if over.size:
                out.append(f"points: index {int(over[0])} assigned more than once")
            if under.size:
                out.append(f"points: index {int(under[0])} not covered by any part or base")

    return out


def require_valid(model: ArticulatedModel) -> None:
    violations = validate_model(model)
    if violations:
        raise ValidationError(
            "model validation failed: " + "; ".join(violations), violations
        )


# ---------------------------------------------------------------------------
# JSON serialization

_MODEL_KEYS = {"points", "base_indices", "parts", "tree"}
_PART_KEYS = {"id", "label", "point_indices", "joint"}
_JOINT_KEYS = {"type", "axis", "pivot", "center", "span"}


def _reject_unknown(mapping, allowed, where):
    unknown = set(mapping) - allowed
    if unknown:
        raise ParseError(f"{where}: unknown key {sorted(unknown)[0]!r}")


def _require(mapping, key, where):
    if key not in mapping:
        raise ParseError(f"{where}: missing field {key!r}")
    return mapping[key]


def model_to_dict(model: ArticulatedModel) -> dict:
    return {
        "points": [[float(c) for c in row] for row in model.points],
        "base_indices": [int(i) for i in model.base_indices],
        "parts": [
            {
                "id": part.id,
                "label": part.label,
                "point_indices": [int(i) for i in part.point_indices],
                "joint": {
                    "type": part.joint.jtype.value,
                    "axis": [float(c) for c in part.joint.axis],
                    "pivot": [float(c) for c in part.joint.pivot],
                    "center": part.joint.limits.center,
                    "span": part.joint.limits.span,
                },
            }
            for part in model.parts
        ],
        "tree": {str(pid): model.tree.parent[pid] for pid in sorted(model.tree.parent)},
    }


def model_from_dict(data: dict) -> ArticulatedModel:
    """Build a model from the articulation JSON schema; reject unknown keys.

    Raises ParseError for structural problems and ValidationError when the
    parsed model violates an invariant.
    """
    if not isinstance(data, dict):
        raise ParseError("document: expected a JSON object at top level")
    _reject_unknown(data, _MODEL_KEYS, "document")

    points = _require(data, "points", "document")
    base_indices = _require(data, "base_indices", "document")
    raw_parts = _require(data, "parts", "document")
    raw_tree = _require(data, "tree", "document")

    try:
        points = _points(points, "points")
    except (ValueError, TypeError) as exc:
        raise ParseError(f"points: {exc}") from exc

    parts = []
    for k, raw in enumerate(raw_parts):
        where = f"parts[{k}]"
        if not isinstance(raw, dict):
            raise ParseError(f"{where}: expected an object")
        _reject_unknown(raw, _PART_KEYS, where)
        raw_joint = _require(raw, "joint", where)
        if not isinstance(raw_joint, dict):
            raise ParseError(f"{where}.joint: expected an object")
        _reject_unknown(raw_joint, _JOINT_KEYS, f"{where}.joint")
        jtype_name = _require(raw_joint, "type", f"{where}.joint")
        try:
            jtype = JointType(jtype_name)
        except ValueError as exc:
            raise ParseError(f"{where}.joint: unknown type {jtype_name!r}") from exc
        try:
            joint = JointSpec(
                jtype=jtype,
                axis=_require(raw_joint, "axis", f"{where}.joint"),
                pivot=_require(raw_joint, "pivot", f"{where}.joint"),
                limits=JointLimits(
                    center=_require(raw_joint, "center", f"{where}.joint"),
                    span=_require(raw_joint, "span", f"{where}.joint"),
                ),
            )
            part = PartSpec(
                id=_require(raw, "id", where),
                label=_require(raw, "label", where),
                point_indices=_require(raw, "point_indices", where),
                joint=joint,
            )
        except (ValueError, TypeError) as exc:
            raise ParseError(f"{where}: {exc}") from exc
        parts.append(part)

    if not isinstance(raw_tree, dict):
        raise ParseError("tree: expected an object")
    tree = {}
    for key, value in raw_tree.items():
        try:
            tree[int(key)] = int(value)
        except (ValueError, TypeError) as exc:
            raise ParseError(f"tree: bad entry {key!r}: {value!r}") from exc

    try:
        model = ArticulatedModel(
            points=points,
            parts=tuple(parts),
            tree=KinematicTree(tree),
            base_indices=base_indices,
        )
    except (ValueError, TypeError) as exc:
        raise ParseError(f"document: {exc}") from exc

    require_valid(model)
    return model


def load_model(path) -> ArticulatedModel:
    """Load and validate an articulation JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ParseError(f"{path}: file not found") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    return model_from_dict(data)


def save_model(model: ArticulatedModel, path) -> None:
    """Write the articulation JSON document; load(save(m)) == m field-for-field."""
    require_valid(model)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# URDF export

_URDF_TYPE = {
    JointType.FIXED: "fixed",
    JointType.REVOLUTE: "revolute",
    JointType.PRISMATIC: "prismatic",
    JointType.CONTINUOUS: "continuous",
}


def _f9(x: float) -> str:
    return format(float(x), ".9g")


def _xyz(vec) -> str:
    return " ".join(_f9(c) for c in vec)


def export_urdf(model: ArticulatedModel, mesh_paths=None, name="artikit_object") -> str:
    """Render the model as a URDF document string.

    One link per part plus a base link; one joint per tree edge.  Joint
    origins and axes are expressed in the parent frame, which coincides with
    the object frame in the canonical state.  ``mesh_paths`` optionally maps
    part ids (and ROOT_ID for the base) to mesh filenames used for visual and
    collision geometry.
    """
    require_valid(model)
    mesh_paths = dict(mesh_paths) if mesh_paths else {}

    def link_name(pid):
        return "base" if pid == ROOT_ID else f"part_{pid}"

    robot = ET.Element("robot", {"name": name})

    def add_link(pid):
        link = ET.SubElement(robot, "link", {"name": link_name(pid)})
        path = mesh_paths.get(pid)
        if path is not None:
            for kind in ("visual", "collision"):
                node = ET.SubElement(link, kind)
                geom = ET.SubElement(node, "geometry")
                ET.SubElement(geom, "mesh", {"filename": str(path)})

    add_link(ROOT_ID)
    ordered = sorted(model.parts, key=lambda p: p.id)
    for part in ordered:
        add_link(part.id)

    for part in ordered:
        j = part.joint
        joint = ET.SubElement(
            robot,
            "joint",
            {"name": f"joint_{part.id}", "type": _URDF_TYPE[j.jtype]},
        )
        ET.SubElement(joint, "origin", {"xyz": _xyz(j.pivot), "rpy": "0 0 0"})
        ET.SubElement(joint, "parent", {"link": link_name(model.tree.parent[part.id])})
        ET.SubElement(joint, "child", {"link": link_name(part.id)})
        if j.jtype is not JointType.FIXED:
            ET.SubElement(joint, "axis", {"xyz": _xyz(j.axis)})
        if j.jtype in (JointType.REVOLUTE, JointType.PRISMATIC):
            ET.SubElement(
                joint,
                "limit",
                {
                    "lower": _f9(j.limits.lower),
                    "upper": _f9(j.limits.upper),
                    "effort": "100",
                    "velocity": "1",
                },
            )

    ET.indent(robot, space="  ")
    return '<?xml version="1.0"?>\n' + ET.tostring(robot, encoding="unicode") + "\n"
