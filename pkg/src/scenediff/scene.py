"""Concrete scene representation: placed object instances and layout codecs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

#: Layout matrix column order.
LAYOUT_COLUMNS = ("t_x", "t_y", "t_z", "s_x", "s_y", "s_z", "cos_r", "sin_r")
LAYOUT_DIM = len(LAYOUT_COLUMNS)


def normalize_angle(r: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    return (float(r) + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class ObjectInstance:
    """One placed object.

    Attributes:
        category: integer category label in [0, k_c).
        location: (t_x, t_y, t_z) center position in meters.
        size: (s_x, s_y, s_z) full axis-aligned extents in meters.
        rotation: yaw around Z in radians, normalized to [-pi, pi).
        feature: appearance feature vector of dimension d.
        asset_id: optional identifier of the retrieved library asset.
    """

    category: int
    location: tuple[float, float, float]
    size: tuple[float, float, float]
    rotation: float
    feature: np.ndarray
    asset_id: str | None = None

    def __post_init__(self):
        if self.category < 0:
            raise ValueError("category label must be non-negative")
        loc = tuple(float(v) for v in self.location)
        size = tuple(float(v) for v in self.size)
        if len(loc) != 3 or len(size) != 3:
            raise ValueError("location and size must have three components")
        if any(s <= 0 for s in size):
            raise ValueError("sizes are full extents and must be positive")
        feature = np.asarray(self.feature, dtype=np.float64).reshape(-1).copy()
        feature.flags.writeable = False
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "rotation", normalize_angle(self.rotation))
        object.__setattr__(self, "feature", feature)


@dataclass(frozen=True)
class Scene:
    """A set of placed objects with a stable identifier."""

    id: str
    objects: tuple[ObjectInstance, ...] = field(default_factory=tuple)

    def __post_init__(self):
        objects = tuple(self.objects)
        if len(objects) < 1:
            raise ValueError("a scene holds at least one object")
        object.__setattr__(self, "objects", objects)

    @property
    def n_objects(self) -> int:
        return len(self.objects)


def scene_to_layout(scene: Scene) -> np.ndarray:
    """Stack the scene into an (n, 8) layout matrix.

    Columns follow LAYOUT_COLUMNS; rotation is stored as the unit vector
    (cos r, sin r).
    """
    rows = np.empty((scene.n_objects, LAYOUT_DIM), dtype=np.float64)
    for i, obj in enumerate(scene.objects):
        rows[i, 0:3] = obj.location
        rows[i, 3:6] = obj.size
        rows[i, 6] = math.cos(obj.rotation)
        rows[i, 7] = math.sin(obj.rotation)
    return rows


def layout_row_to_pose(row) -> tuple[tuple[float, float, float], tuple[float, float, float], float]:
    """Split one layout row into (location, size, rotation).

    Sizes are clamped to a small positive floor so a decoded row always
    yields a valid object.
    """
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (LAYOUT_DIM,):
        raise ValueError(f"layout row must have {LAYOUT_DIM} entries")
    location = (float(row[0]), float(row[1]), float(row[2]))
    size = tuple(max(float(v), 1e-3) for v in row[3:6])
    rotation = math.atan2(float(row[7]), float(row[6]))
    return location, size, rotation
