"""Silicone-shell stand-in: contact depth to force, and magnet displacement.

A contact pressed to depth d at a pixel produces normal force
F = stiffness(face, pixel) * (k1*d + k3*d^3), and drags every magnet of
that face inward through a Gaussian kernel of the in-plane distance.
Faces deform independently; cross-face effects are purely magnetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, RangeError, UsageError
from .geometry import GridCoord, ObjectConfig, default_config, pixel_to_point, validate_coord

# Fixed displacement limits of the data-collection sweeps (mm). The upper
# limit stays clear of the deformation clamp so multi-tip cases saturate
# rather than error out.
SWEEP_MIN_DEPTH_MM = 0.2
SWEEP_MAX_DEPTH_MM = 2.0

_BISECT_ITERS = 80


@dataclass
class Contact:
    face: int
    coord: GridCoord
    force: float  # N


@dataclass
class ContactSpec:
    contacts: list[Contact] = field(default_factory=list)

    def validate(self, config: ObjectConfig) -> None:
        per_face: dict[int, list[GridCoord]] = {}
        for c in self.contacts:
            config.face(c.face)
            validate_coord(config, c.coord)
            if c.force < 0:
                raise UsageError(f"negative contact force {c.force}")
            per_face.setdefault(c.face, []).append(GridCoord(*c.coord))
        for face, coords in per_face.items():
            if len(coords) > 3:
                raise UsageError(f"face {face} has {len(coords)} contacts, max 3")

    def by_face(self) -> dict[int, list[Contact]]:
        out: dict[int, list[Contact]] = {}
        for c in self.contacts:
            out.setdefault(c.face, []).append(c)
        return out


@dataclass
class DeformationParams:
    kernel_sigma: float = 6.0  # mm
    k1: float = 4.0  # N/mm
    k3: float = 0.5  # N/mm^3
    max_depth: float = 2.5  # mm, displacement clamp
    stiffness_maps: dict[int, np.ndarray] = field(default_factory=dict)  # face -> (M, M)

    def stiffness(self, face: int, coord: tuple[int, int]) -> float:
        if face not in self.stiffness_maps:
            raise ConfigurationError(f"no stiffness map for face {face}")
        x, y = coord
        return float(self.stiffness_maps[face][x - 1, y - 1])


def radial_stiffness_map(config: ObjectConfig) -> np.ndarray:
    """Multiplier grid rising linearly with radius, 1.0 center to 1.5 corners."""
    m = config.grid_size
    xs = np.arange(1, m + 1)
    px = np.array([pixel_to_point(config, 1, (x, 1))[0] for x in xs])
    gx, gy = np.meshgrid(px, px, indexing="ij")
    r = np.hypot(gx, gy)
    return 1.0 + 0.5 * r / r.max()


def default_params(config: ObjectConfig | None = None) -> DeformationParams:
    config = config if config is not None else default_config()
    base = radial_stiffness_map(config)
    params = DeformationParams()
    params.stiffness_maps = {f.index: base.copy() for f in config.faces}
    return params


def force_from_depth(depth: float, face: int, coord: tuple[int, int], params: DeformationParams) -> float:
    """Normal force (N) at a pixel for a press of `depth` mm."""
    if not 0.0 <= depth <= params.max_depth:
        raise DomainError(f"depth {depth} outside [0, {params.max_depth}] mm")
    s = params.stiffness(face, coord)
    return s * (params.k1 * depth + params.k3 * depth**3)


def depth_for_force(force: float, face: int, coord: tuple[int, int], params: DeformationParams) -> float:
    """Invert force_from_depth by bisection; |F(depth) - force| <= 1e-9 N."""
    if force < 0:
        raise DomainError(f"negative force {force}")
    if force == 0.0:
        return 0.0
    fmax = force_from_depth(params.max_depth, face, coord, params)
    if force > fmax:
        raise RangeError(f"force {force} N exceeds maximum {fmax} N at {coord} on face {face}")
    lo, hi = 0.0, params.max_depth
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if force_from_depth(mid, face, coord, params) < force:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def kernel_weights(config: ObjectConfig, params: DeformationParams, face: int,
                   coords: list[tuple[int, int]]) -> np.ndarray:
    """Gaussian coupling of each magnet of `face` to each contact pixel.

    Returns (5 magnets, n contacts): exp(-||m_xy - c_xy||^2 / (2 sigma^2)).
    """
    f = config.face(face)
    mag_xy = np.array([m.position[:2] for m in f.magnets])
    c_xy = np.array([pixel_to_point(config, face, c)[:2] for c in coords])
    d2 = np.sum((mag_xy[:, None, :] - c_xy[None, :, :]) ** 2, axis=-1)
    return np.exp(-d2 / (2.0 * params.kernel_sigma**2))


def displacements_from_depths(
    config: ObjectConfig,
    params: DeformationParams,
    depths_by_face: dict[int, list[tuple[tuple[int, int], float]]],
):
    """Magnet dipole states for per-face lists of (pixel, depth) presses.

    Each magnet of a pressed face moves inward by the kernel-weighted sum
    of contact depths, clamped to params.max_depth. Other faces rest.
    """
    from .magnetics import DipoleState

    out = []
    for f in config.faces:
        presses = depths_by_face.get(f.index, [])
        if presses:
            coords = [p[0] for p in presses]
            depths = np.array([p[1] for p in presses], dtype=float)
            disp = np.minimum(kernel_weights(config, params, f.index, coords) @ depths,
                              params.max_depth)
        else:
            disp = np.zeros(len(f.magnets))
        for mag, d in zip(f.magnets, disp):
            pos = mag.position.copy()
            pos[2] -= d
            out.append(
                DipoleState(
                    position=f.to_world(pos),
                    moment=mag.moment_magnitude * f.direction_to_world(mag.moment_direction),
                )
            )
    return out


def magnet_displacements(contacts: ContactSpec, config: ObjectConfig, params: DeformationParams):
    """All dipole states under a contact specification (forces in N).

    Per-contact depths are recovered from the forces via depth_for_force,
    then summed per magnet through the Gaussian kernel.
    """
    contacts.validate(config)
    depths_by_face: dict[int, list[tuple[tuple[int, int], float]]] = {}
    for c in contacts.contacts:
        d = depth_for_force(c.force, c.face, tuple(c.coord), params)
        depths_by_face.setdefault(c.face, []).append((tuple(c.coord), d))
    return displacements_from_depths(config, params, depths_by_face)


def location_force_range(
    face: int,
    coord: tuple[int, int],
    params: DeformationParams,
    min_depth: float = SWEEP_MIN_DEPTH_MM,
    max_depth: float = SWEEP_MAX_DEPTH_MM,
) -> tuple[float, float]:
    """(min N, max N) reachable at a pixel under the sweep depth limits."""
    return (
        force_from_depth(min_depth, face, coord, params),
        force_from_depth(max_depth, face, coord, params),
    )


def force_range_grid(params: DeformationParams, face: int) -> np.ndarray:
    """Per-pixel (M, M, 2) array of sweep force (min, max) for one face."""
    smap = params.stiffness_maps.get(face)
    if smap is None:
        raise ConfigurationError(f"no stiffness map for face {face}")
    m = smap.shape[0]
    grid = np.zeros((m, m, 2))
    for x in range(1, m + 1):
        for y in range(1, m + 1):
            grid[x - 1, y - 1] = location_force_range(face, (x, y), params)
    return grid


def params_to_dict(params: DeformationParams) -> dict:
    return {
        "kernel_sigma": params.kernel_sigma,
        "k1": params.k1,
        "k3": params.k3,
        "max_depth": params.max_depth,
        "stiffness_maps": {str(k): v.tolist() for k, v in params.stiffness_maps.items()},
    }


def params_from_dict(data: dict) -> DeformationParams:
    try:
        return DeformationParams(
            kernel_sigma=float(data["kernel_sigma"]),
            k1=float(data["k1"]),
            k3=float(data["k3"]),
            max_depth=float(data["max_depth"]),
            stiffness_maps={
                int(k): np.array(v, dtype=float) for k, v in data["stiffness_maps"].items()
            },
        )
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed deformation params: {exc}") from exc
