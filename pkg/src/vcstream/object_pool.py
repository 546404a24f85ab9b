"""Authoritative registry of scene object transforms.

The pool holds every registered object (meshes and the client camera) and
applies control updates with last-writer-wins semantics keyed on the sender's
message sequence number. Snapshots are consistent copies: a transform in a
snapshot always comes from exactly one update.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import quat


class PoolError(Exception):
    pass


class RegistrationError(PoolError):
    pass


class SealedError(PoolError):
    pass


class NotFound(PoolError):
    pass


class ValidationError(PoolError):
    pass


class ObjectKind(str, Enum):
    CAMERA = "camera"
    MESH = "mesh"


class UpdateOp(str, Enum):
    SET_TRANSFORM = "set_transform"
    TRANSLATE = "translate"
    ROTATE = "rotate"
    SCALE = "scale"


def _vec3(value, what: str) -> np.ndarray:
    v = np.asarray(value, dtype=np.float64).reshape(-1)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValidationError(f"{what} must be a finite 3-vector")
    return v.copy()


def _unit_quat(value, what: str) -> np.ndarray:
    v = np.asarray(value, dtype=np.float64).reshape(-1)
    if v.shape != (4,) or not quat.is_unit(v):
        raise ValidationError(f"{what} must be a unit quaternion (x, y, z, w)")
    return v.copy()


@dataclass(eq=False)
class Transform:
    position: np.ndarray
    rotation: np.ndarray  # unit quaternion (x, y, z, w)
    scale: np.ndarray

    def __post_init__(self):
        self.position = _vec3(self.position, "position")
        self.rotation = _unit_quat(self.rotation, "rotation")
        self.scale = _vec3(self.scale, "scale")
        if np.any(self.scale <= 0.0):
            raise ValidationError("scale components must be > 0")

    @classmethod
    def identity(cls) -> "Transform":
        return cls(np.zeros(3), quat.IDENTITY.copy(), np.ones(3))

    def copy(self) -> "Transform":
        return Transform(self.position.copy(), self.rotation.copy(), self.scale.copy())

    def to_payload(self) -> dict:
        return {
            "position": [float(v) for v in self.position],
            "rotation": [float(v) for v in self.rotation],
            "scale": [float(v) for v in self.scale],
        }

    @classmethod
    def from_payload(cls, d: dict) -> "Transform":
        return cls(d["position"], d["rotation"], d["scale"])

    def allclose(self, other: "Transform", tol: float = 1e-12) -> bool:
        return (
            np.allclose(self.position, other.position, atol=tol)
            and np.allclose(self.rotation, other.rotation, atol=tol)
            and np.allclose(self.scale, other.scale, atol=tol)
        )


@dataclass(eq=False)
class ObjectState:
    id: int
    name: str
    kind: ObjectKind
    transform: Transform
    updated_seq: int = 0

    def to_payload(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "kind": self.kind.value,
            "transform": self.transform.to_payload(),
        }

    @classmethod
    def from_payload(cls, d: dict) -> "ObjectState":
        return cls(
            id=int(d["id"]),
            name=str(d["name"]),
            kind=ObjectKind(d["kind"]),
            transform=Transform.from_payload(d["transform"]),
        )


def parse_control_value(op: UpdateOp, value: Sequence[float]):
    """Convert the flat wire value of an object_control message to a typed op value."""
    op = UpdateOp(op)
    v = np.asarray(value, dtype=np.float64).reshape(-1)
    if op is UpdateOp.SET_TRANSFORM:
        if v.shape != (10,):
            raise ValidationError("set_transform value must have 10 components")
        return Transform(v[0:3], v[3:7], v[7:10])
    if op is UpdateOp.TRANSLATE:
        return _vec3(v, "translate value")
    if op is UpdateOp.ROTATE:
        return _unit_quat(v, "rotate value")
    if op is UpdateOp.SCALE:
        v = _vec3(v, "scale value")
        if np.any(v <= 0.0):
            raise ValidationError("scale factors must be > 0")
        return v
    raise ValidationError(f"unknown op {op}")


class ObjectPool:
    """Thread-safe object registry with last-writer-wins updates.

    Registration is only allowed before ``seal()``; updates and snapshots are
    allowed at any time. Updates whose source_seq is not newer than the
    object's last applied seq are dropped (stale) and counted.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._objects: list[ObjectState] = []
        self._names: set[str] = set()
        self._sealed = False
        self.stale_dropped = 0

    def register(self, name: str, kind: ObjectKind | str, initial: Transform) -> int:
        kind = ObjectKind(kind)
        with self._lock:
            if self._sealed:
                raise SealedError("pool is sealed; registration is closed")
            if name in self._names:
                raise RegistrationError(f"object name {name!r} already registered")
            oid = len(self._objects)
            self._objects.append(ObjectState(oid, name, kind, initial.copy()))
            self._names.add(name)
            return oid

    def seal(self):
        with self._lock:
            self._sealed = True

    @property
    def sealed(self) -> bool:
        return self._sealed

    def __len__(self) -> int:
        with self._lock:
            return len(self._objects)

    def find(self, kind: ObjectKind | str) -> int | None:
        """Id of the first object of the given kind, or None."""
        kind = ObjectKind(kind)
        with self._lock:
            for obj in self._objects:
                if obj.kind is kind:
                    return obj.id
        return None

    def apply_update(self, oid: int, op: UpdateOp | str, value, source_seq: int) -> bool:
        """Apply one control op; returns False if dropped as stale."""
        op = UpdateOp(op)
        if not isinstance(value, Transform):
            value = parse_control_value(op, value)
        with self._lock:
            if not (0 <= oid < len(self._objects)):
                raise NotFound(f"no object with id {oid}")
            obj = self._objects[oid]
            if source_seq <= obj.updated_seq:
                self.stale_dropped += 1
                return False
            t = obj.transform
            if op is UpdateOp.SET_TRANSFORM:
                obj.transform = value.copy()
            elif op is UpdateOp.TRANSLATE:
                t.position = t.position + value
            elif op is UpdateOp.ROTATE:
                # renormalize after every multiply so composed rotations cannot drift
                t.rotation = quat.normalize(quat.multiply(value, t.rotation))
            elif op is UpdateOp.SCALE:
                t.scale = t.scale * value
            obj.updated_seq = source_seq
            return True

    def snapshot(self) -> list[ObjectState]:
        """Consistent copy of all objects, sorted by id."""
        with self._lock:
            return [
                ObjectState(o.id, o.name, o.kind, o.transform.copy(), o.updated_seq)
                for o in self._objects
            ]
