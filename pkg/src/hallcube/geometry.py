"""Cuboid geometry: faces, embedded magnets, Hall sensors, pixel grid.

All lengths are millimeters. The world frame sits at the cuboid center.
Each active face carries a right-handed local frame whose origin lies at
the center of the outer surface and whose +Z axis is the outward normal;
magnet and sensor positions are stored in that frame (negative Z is into
the material).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ConfigurationError, UsageError

MAGNET_MOMENT_AM2 = 0.032
MAGNET_DEPTH_MM = 3.0  # below the inner shell surface; face-frame z = -(wall - depth_offset)
SENSOR_DEPTH_MM = 8.0  # face-frame z of the sensing plane


class GridCoord(NamedTuple):
    """1-based pixel coordinate on a face, x right and y up in the face frame."""

    x: int
    y: int


@dataclass
class MagnetSpec:
    position: np.ndarray  # (3,) face frame, mm
    moment_magnitude: float = MAGNET_MOMENT_AM2  # A*m^2
    moment_direction: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 1.0])
    )  # unit vector, face frame


@dataclass
class SensorSpec:
    position: np.ndarray  # (3,) face frame, mm
    orientation: np.ndarray  # (3,3) rows are sensor axes expressed in world coordinates


@dataclass
class FaceConfig:
    index: int
    rotation: np.ndarray  # (3,3) columns are the face axes in world coordinates
    origin: np.ndarray  # (3,) world position of the outer-surface center, mm
    magnets: list[MagnetSpec]
    sensors: list[SensorSpec]

    def to_world(self, p: np.ndarray) -> np.ndarray:
        """Map a face-frame point (mm) to world coordinates."""
        return self.rotation @ np.asarray(p, dtype=float) + self.origin

    def direction_to_world(self, v: np.ndarray) -> np.ndarray:
        """Rotate a face-frame direction into the world frame."""
        return self.rotation @ np.asarray(v, dtype=float)


@dataclass
class ObjectConfig:
    core_edge: float = 26.0
    shell_outer_edge: float = 42.0
    grid_size: int = 10
    faces: list[FaceConfig] = field(default_factory=list)

    @property
    def wall_thickness(self) -> float:
        return (self.shell_outer_edge - self.core_edge) / 2.0

    @property
    def pixel_pitch(self) -> float:
        return self.core_edge / self.grid_size

    def face(self, index: int) -> FaceConfig:
        for f in self.faces:
            if f.index == index:
                return f
        raise ConfigurationError(f"no face with index {index}")

    @property
    def face_indices(self) -> list[int]:
        return [f.index for f in self.faces]


# Face axes in world coordinates: (x_axis, y_axis, outward normal).
# Faces 2/4 and 3/5 are opposite pairs; there is no face on -Z.
_FACE_AXES: dict[int, tuple[tuple[float, ...], tuple[float, ...], tuple[float, ...]]] = {
    1: ((1, 0, 0), (0, 1, 0), (0, 0, 1)),
    2: ((0, 1, 0), (0, 0, 1), (1, 0, 0)),
    3: ((0, 0, 1), (1, 0, 0), (0, 1, 0)),
    4: ((0, -1, 0), (0, 0, 1), (-1, 0, 0)),
    5: ((0, 0, -1), (1, 0, 0), (0, -1, 0)),
}

# Face-frame XY of the five magnets (quincunx) and three sensors (diagonal).
_MAGNET_XY = [(0.0, 0.0), (-7.5, -7.5), (-7.5, 7.5), (7.5, -7.5), (7.5, 7.5)]
_SENSOR_XY = [(-6.5, -6.5), (0.0, 0.0), (6.5, 6.5)]


def _build_face(index: int, core_edge: float, shell_outer_edge: float) -> FaceConfig:
    ax, ay, az = (np.array(v, dtype=float) for v in _FACE_AXES[index])
    rotation = np.column_stack([ax, ay, az])
    origin = az * (shell_outer_edge / 2.0)
    wall = (shell_outer_edge - core_edge) / 2.0
    magnet_z = -(wall - MAGNET_DEPTH_MM)
    magnets = [MagnetSpec(position=np.array([x, y, magnet_z])) for x, y in _MAGNET_XY]
    sensors = [
        SensorSpec(position=np.array([x, y, -SENSOR_DEPTH_MM]), orientation=rotation.T.copy())
        for x, y in _SENSOR_XY
    ]
    return FaceConfig(index=index, rotation=rotation, origin=origin, magnets=magnets, sensors=sensors)


def default_config() -> ObjectConfig:
    """Five active faces, 26 mm core, 42 mm outer shell, 10x10 pixel grid."""
    cfg = ObjectConfig()
    cfg.faces = [_build_face(i, cfg.core_edge, cfg.shell_outer_edge) for i in range(1, 6)]
    return cfg


def pixel_to_point(config: ObjectConfig, face: int, coord: tuple[float, float]) -> np.ndarray:
    """Face-frame point (mm) of a pixel center on the outer surface.

    Accepts fractional coordinates for sub-pixel positions; the grid is
    1-based, so coordinate (5.5, 5.5) of a 10x10 grid is the face center.
    """
    x, y = coord
    m = config.grid_size
    pitch = config.pixel_pitch
    half = (m + 1) / 2.0
    return np.array([(x - half) * pitch, (y - half) * pitch, 0.0])


def point_to_pixel(config: ObjectConfig, face: int, point_xy: tuple[float, float]) -> GridCoord:
    """Nearest grid pixel to a face-frame XY position (mm)."""
    pitch = config.pixel_pitch
    half = (config.grid_size + 1) / 2.0
    x = int(round(point_xy[0] / pitch + half))
    y = int(round(point_xy[1] / pitch + half))
    x = min(max(x, 1), config.grid_size)
    y = min(max(y, 1), config.grid_size)
    return GridCoord(x, y)


def validate_coord(config: ObjectConfig, coord: tuple[int, int]) -> GridCoord:
    """Check a 1-based integer pixel coordinate, returning it as GridCoord."""
    x, y = coord
    m = config.grid_size
    if not (isinstance(x, (int, np.integer)) and isinstance(y, (int, np.integer))):
        raise UsageError(f"pixel coordinate must be integer, got {coord!r}")
    if not (1 <= x <= m and 1 <= y <= m):
        raise UsageError(f"pixel coordinate {coord!r} outside 1..{m} grid")
    return GridCoord(int(x), int(y))


def validate(config: ObjectConfig) -> list[str]:
    """Return a list of invariant violations (empty when the config is sound)."""
    problems: list[str] = []
    if config.shell_outer_edge <= config.core_edge:
        problems.append("shell_outer_edge must exceed core_edge")
    if config.grid_size < 2:
        problems.append("grid_size must be at least 2")
    wall = config.wall_thickness
    if wall <= MAGNET_DEPTH_MM:
        problems.append("wall thickness must exceed magnet depth offset")
    seen: set[int] = set()
    half_face = config.shell_outer_edge / 2.0
    for f in config.faces:
        tag = f"face {f.index}"
        if f.index in seen:
            problems.append(f"{tag}: duplicate face index")
        seen.add(f.index)
        rtr = f.rotation.T @ f.rotation
        if not np.allclose(rtr, np.eye(3), atol=1e-10):
            problems.append(f"{tag}: rotation is not orthonormal")
        elif np.linalg.det(f.rotation) < 0:
            problems.append(f"{tag}: rotation is left-handed")
        if len(f.magnets) != 5:
            problems.append(f"{tag}: expected 5 magnets, found {len(f.magnets)}")
        if len(f.sensors) != 3:
            problems.append(f"{tag}: expected 3 sensors, found {len(f.sensors)}")
        expected_mz = -(wall - MAGNET_DEPTH_MM)
        for i, mag in enumerate(f.magnets):
            if np.max(np.abs(mag.position[:2])) > half_face:
                problems.append(f"{tag}: magnet {i} outside the face footprint")
            if abs(mag.position[2] - expected_mz) > 1e-9:
                problems.append(f"{tag}: magnet {i} not at face-frame z={expected_mz}")
            if abs(np.linalg.norm(mag.moment_direction) - 1.0) > 1e-12:
                problems.append(f"{tag}: magnet {i} moment direction is not unit length")
            if mag.moment_direction[2] <= 0:
                problems.append(f"{tag}: magnet {i} moment must point outward (+Z)")
            if mag.moment_magnitude <= 0:
                problems.append(f"{tag}: magnet {i} moment magnitude must be positive")
        for i, sen in enumerate(f.sensors):
            if abs(sen.position[2] + SENSOR_DEPTH_MM) > 1e-9:
                problems.append(f"{tag}: sensor {i} not at face-frame z=-{SENSOR_DEPTH_MM}")
            if not np.allclose(sen.orientation @ sen.orientation.T, np.eye(3), atol=1e-10):
                problems.append(f"{tag}: sensor {i} orientation is not orthonormal")
    return problems


def config_to_dict(config: ObjectConfig) -> dict:
    return {
        "core_edge": config.core_edge,
        "shell_outer_edge": config.shell_outer_edge,
        "grid_size": config.grid_size,
        "faces": [
            {
                "index": f.index,
                "rotation": f.rotation.tolist(),
                "origin": f.origin.tolist(),
                "magnets": [
                    {
                        "position": m.position.tolist(),
                        "moment_magnitude": m.moment_magnitude,
                        "moment_direction": m.moment_direction.tolist(),
                    }
                    for m in f.magnets
                ],
                "sensors": [
                    {
                        "position": s.position.tolist(),
                        "orientation": s.orientation.tolist(),
                    }
                    for s in f.sensors
                ],
            }
            for f in config.faces
        ],
    }


def config_from_dict(data: dict) -> ObjectConfig:
    try:
        faces = [
            FaceConfig(
                index=int(fd["index"]),
                rotation=np.array(fd["rotation"], dtype=float),
                origin=np.array(fd["origin"], dtype=float),
                magnets=[
                    MagnetSpec(
                        position=np.array(md["position"], dtype=float),
                        moment_magnitude=float(md["moment_magnitude"]),
                        moment_direction=np.array(md["moment_direction"], dtype=float),
                    )
                    for md in fd["magnets"]
                ],
                sensors=[
                    SensorSpec(
                        position=np.array(sd["position"], dtype=float),
                        orientation=np.array(sd["orientation"], dtype=float),
                    )
                    for sd in fd["sensors"]
                ],
            )
            for fd in data["faces"]
        ]
        return ObjectConfig(
            core_edge=float(data["core_edge"]),
            shell_outer_edge=float(data["shell_outer_edge"]),
            grid_size=int(data["grid_size"]),
            faces=faces,
        )
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed geometry config: {exc}") from exc


def save_config(config: ObjectConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path: str) -> ObjectConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))
