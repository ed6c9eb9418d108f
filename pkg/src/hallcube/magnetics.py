"""Point-dipole magnetostatics and Hall-sensor frame synthesis.

Dipole positions are world millimeters, moments A*m^2, returned flux
densities tesla; sensor frames are reported in microtesla. The dipole
list for a config is always ordered face by face, five magnets per face,
so per-face slices of it are well defined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularityError
from .geometry import ObjectConfig

MU0_OVER_4PI = 1e-7  # T*m/A
EXCLUSION_RADIUS_MM = 0.1
MAGNETS_PER_FACE = 5


@dataclass
class DipoleState:
    position: np.ndarray  # (3,) world mm
    moment: np.ndarray  # (3,) world A*m^2


@dataclass
class HallFrame:
    values: np.ndarray  # (9,) microtesla: (s1x, s1y, s1z, s2x, ..., s3z)
    face_index: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (9,):
            raise ValueError(f"HallFrame needs 9 values, got shape {self.values.shape}")


def dipole_field(dipole: DipoleState, point_mm: np.ndarray) -> np.ndarray:
    """Flux density (tesla) of one dipole at a world point (mm)."""
    pts = np.asarray(point_mm, dtype=float)[None, :]
    return total_field(dipole.position[None, :], dipole.moment[None, :], pts)[0]


def total_field(positions_mm: np.ndarray, moments: np.ndarray, points_mm: np.ndarray) -> np.ndarray:
    """Superposed dipole field (tesla) at each point.

    positions_mm: (n, K, 3) or (K, 3); moments broadcastable to the same;
    points_mm: (P, 3). Returns (n, P, 3) (or (P, 3) for unbatched input).
    """
    pos = np.asarray(positions_mm, dtype=float)
    mom = np.asarray(moments, dtype=float)
    pts = np.asarray(points_mm, dtype=float)
    unbatched = pos.ndim == 2
    if unbatched:
        pos = pos[None]
    mom = np.broadcast_to(mom, pos.shape)
    r = pts[None, :, None, :] - pos[:, None, :, :]  # (n, P, K, 3) mm
    dist = np.linalg.norm(r, axis=-1)  # mm
    if np.any(dist <= EXCLUSION_RADIUS_MM):
        raise SingularityError(
            f"field requested within {EXCLUSION_RADIUS_MM} mm of a dipole"
        )
    rhat = r / dist[..., None]
    m = mom[:, None, :, :]
    mdot = np.sum(m * rhat, axis=-1)  # (n, P, K)
    dist_m3 = (dist * 1e-3) ** 3
    b = MU0_OVER_4PI * (3.0 * mdot[..., None] * rhat - m) / dist_m3[..., None]
    out = b.sum(axis=2)  # (n, P, 3)
    return out[0] if unbatched else out


def rest_dipoles(config: ObjectConfig) -> list[DipoleState]:
    """All magnets at rest, ordered by config face order then magnet order."""
    out: list[DipoleState] = []
    for f in config.faces:
        for mag in f.magnets:
            out.append(
                DipoleState(
                    position=f.to_world(mag.position),
                    moment=mag.moment_magnitude * f.direction_to_world(mag.moment_direction),
                )
            )
    return out


def dipole_arrays(dipoles: list[DipoleState]) -> tuple[np.ndarray, np.ndarray]:
    """Stack a dipole list into (K,3) position and moment arrays."""
    pos = np.array([d.position for d in dipoles], dtype=float)
    mom = np.array([d.moment for d in dipoles], dtype=float)
    return pos, mom


def sensor_arrays(config: ObjectConfig, face: int) -> tuple[np.ndarray, np.ndarray]:
    """World sensor positions (3,3) and stacked orientations (3,3,3) for a face."""
    f = config.face(face)
    pts = np.array([f.to_world(s.position) for s in f.sensors])
    orient = np.array([s.orientation for s in f.sensors])
    return pts, orient


def frames_from_fields(fields_t: np.ndarray, orientations: np.ndarray) -> np.ndarray:
    """Rotate world fields (n, 3 sensors, 3) tesla into sensor axes, in microtesla.

    Returns (n, 9) ordered sensor-major.
    """
    # einsum over: sensor s, world axis w, sensor axis a
    local = np.einsum("saw,nsw->nsa", orientations, fields_t)
    return local.reshape(local.shape[0], 9) * 1e6


def _face_slice(config: ObjectConfig, face: int) -> slice:
    for i, f in enumerate(config.faces):
        if f.index == face:
            return slice(i * MAGNETS_PER_FACE, (i + 1) * MAGNETS_PER_FACE)
    raise ValueError(f"no face with index {face}")


def _read(
    config: ObjectConfig,
    dipoles: list[DipoleState],
    face: int,
    noise_sd: float,
    rng,
    only_own_face: bool,
) -> HallFrame:
    if only_own_face:
        dipoles = dipoles[_face_slice(config, face)]
    pos, mom = dipole_arrays(dipoles)
    pts, orient = sensor_arrays(config, face)
    fields = total_field(pos[None], mom[None], pts)  # (1, 3, 3)
    values = frames_from_fields(fields, orient)[0]
    if noise_sd > 0.0:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        values = values + noise_sd * gen.standard_normal(9)
    return HallFrame(values=values, face_index=face)


def read_sensors(
    config: ObjectConfig,
    dipoles: list[DipoleState],
    face: int,
    noise_sd: float = 0.0,
    rng=None,
) -> HallFrame:
    """Hall frame of one face from the fields of all magnets on all faces.

    `rng` accepts a numpy Generator or a seed; with noise_sd 0 it is unused
    and the frame is a pure function of geometry and dipole states.
    """
    return _read(config, dipoles, face, noise_sd, rng, only_own_face=False)


def read_sensors_isolated(
    config: ObjectConfig,
    dipoles: list[DipoleState],
    face: int,
    noise_sd: float = 0.0,
    rng=None,
) -> HallFrame:
    """Like read_sensors but summing only the five magnets of `face` itself.

    The difference to read_sensors is the cross-face background field; the
    cross-face studies use this to test the per-face independence assumption.
    """
    return _read(config, dipoles, face, noise_sd, rng, only_own_face=True)
