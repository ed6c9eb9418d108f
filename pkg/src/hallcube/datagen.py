"""Data-collection campaign: probes, sweeps, noise, and dataset files.

A campaign presses 1/2/3-tip probes into every covered location of a face
with a triangle depth waveform, reads the face's Hall sensors under all
magnets' fields, and labels each sample with the per-contact force
(measured total, quantized, split equally across tips). Case streams are
seeded independently, so generation order and worker count do not change
the data.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .deformation import (
    SWEEP_MAX_DEPTH_MM,
    SWEEP_MIN_DEPTH_MM,
    DeformationParams,
    kernel_weights,
)
from .errors import ConfigurationError, ParseError, UsageError
from .geometry import ObjectConfig
from .magnetics import (
    MAGNETS_PER_FACE,
    HallFrame,
    dipole_arrays,
    frames_from_fields,
    rest_dipoles,
    sensor_arrays,
    total_field,
)

FORCE_QUANTUM_N = 0.12  # load-cell accuracy emulated as uniform rounding
DEFAULT_NOISE_SD_UT = 2.0
STORE_DECIMALS = 6  # CSV carries 6 fraction digits; rounding at generation
                    # time makes write -> read bit-exact

CSV_HEADER = (
    "face,case_id,sample,cx1,cy1,f1,cx2,cy2,f2,cx3,cy3,f3,"
    "s1,s2,s3,s4,s5,s6,s7,s8,s9"
)


@dataclass
class Probe:
    contact_count: int
    offsets: list[tuple[int, int]]


PROBES = {
    1: Probe(1, [(0, 0)]),
    2: Probe(2, [(0, 0), (0, 2)]),
    3: Probe(3, [(0, 0), (2, 0), (0, 2)]),
}


@dataclass
class CoverageSpec:
    anchors: dict[int, list[tuple[int, int]]]  # probe contact_count -> anchor pixels
    non_contact_cases: int = 3


def default_coverage() -> CoverageSpec:
    """Anchor sets sized to the paper's 100/26/14 case counts per face.

    Dual anchors: the odd 5x4 sublattice plus six even-lattice extras; probe
    offset (0,2). Triple anchors: a coarse 3x3 lattice plus five extras;
    offsets {(0,0),(2,0),(0,2)}. All resulting tips are on-grid.
    """
    single = [(x, y) for x in range(1, 11) for y in range(1, 11)]
    dual = [(x, y) for x in (1, 3, 5, 7, 9) for y in (1, 3, 5, 7)]
    dual += [(2, 2), (2, 6), (6, 2), (6, 6), (10, 2), (10, 6)]
    triple = [(x, y) for x in (1, 4, 7) for y in (1, 4, 7)]
    triple += [(2, 2), (2, 6), (6, 2), (6, 6), (8, 8)]
    return CoverageSpec(anchors={1: single, 2: dual, 3: triple})


@dataclass
class CaseDescriptor:
    case_id: str
    face: int
    contact_count: int  # 0 for non-contact
    tips: list[tuple[int, int]]


@dataclass
class SweepProtocol:
    samples_per_case: int = 1000
    cycles: int = 5
    min_depth: float = SWEEP_MIN_DEPTH_MM
    max_depth: float = SWEEP_MAX_DEPTH_MM


@dataclass
class Dataset:
    face: int
    case_ids: np.ndarray  # (n,) unicode
    samples: np.ndarray  # (n,) int
    coords: np.ndarray  # (n, 3, 2) int, 0 marks an absent slot
    forces: np.ndarray  # (n, 3) float N, stored per-contact labels
    hall: np.ndarray  # (n, 9) float microtesla

    def __len__(self) -> int:
        return len(self.case_ids)

    @property
    def n_contacts(self) -> np.ndarray:
        return (self.coords[:, :, 0] > 0).sum(axis=1)

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            face=self.face,
            case_ids=self.case_ids[idx],
            samples=self.samples[idx],
            coords=self.coords[idx],
            forces=self.forces[idx],
            hall=self.hall[idx],
        )


def case_rng(master_seed: int, face: int, case_id: str) -> np.random.Generator:
    """Independent stream per (seed, face, case); order-insensitive."""
    digest = hashlib.sha256(case_id.encode()).digest()
    w0 = int.from_bytes(digest[:4], "little")
    w1 = int.from_bytes(digest[4:8], "little")
    return np.random.default_rng([master_seed, face, w0, w1])


def triangle_depths(n: int, cycles: int, min_depth: float, max_depth: float) -> np.ndarray:
    """Triangle waveform sampled at n points: starts at min, peaks at max."""
    phase = np.arange(n) * cycles / n
    frac = phase % 1.0
    tri = np.where(frac <= 0.5, 2.0 * frac, 2.0 - 2.0 * frac)
    return min_depth + (max_depth - min_depth) * tri


def enumerate_cases(face: int, probe: Probe, coverage: CoverageSpec,
                    grid_size: int = 10) -> list[CaseDescriptor]:
    """Probe cases for one face; anchors whose tips leave the grid are dropped."""
    anchors = coverage.anchors.get(probe.contact_count)
    if not anchors:
        raise ConfigurationError(f"no coverage anchors for {probe.contact_count}-contact probe")
    prefix = {1: "s", 2: "d", 3: "t"}[probe.contact_count]
    cases = []
    for ax, ay in anchors:
        tips = [(ax + dx, ay + dy) for dx, dy in probe.offsets]
        if any(not (1 <= x <= grid_size and 1 <= y <= grid_size) for x, y in tips):
            continue
        cases.append(
            CaseDescriptor(
                case_id=f"{prefix}-x{ax:02d}y{ay:02d}",
                face=face,
                contact_count=probe.contact_count,
                tips=tips,
            )
        )
    return cases


def enumerate_campaign(face: int, coverage: CoverageSpec) -> list[CaseDescriptor]:
    """All contact and non-contact cases of the campaign for one face."""
    cases: list[CaseDescriptor] = []
    for count in (1, 2, 3):
        cases.extend(enumerate_cases(face, PROBES[count], coverage))
    for i in range(coverage.non_contact_cases):
        cases.append(CaseDescriptor(case_id=f"nc-{i}", face=face, contact_count=0, tips=[]))
    return cases


def scaled_samples(protocol: SweepProtocol, scale: float) -> int:
    if not 0.0 < scale <= 1.0:
        raise UsageError(f"scale factor {scale} outside (0, 1]")
    return max(1, round(protocol.samples_per_case * scale))


def sweep_magnet_positions(
    config: ObjectConfig,
    params: DeformationParams,
    presses: dict[int, tuple[list[tuple[int, int]], np.ndarray]],
) -> np.ndarray:
    """World magnet positions (n, 25, 3) for per-face equal-depth presses.

    `presses` maps face index to (tips, depths-(n,)); tips share the depth
    at each sample. Untouched faces stay at rest.
    """
    rest = rest_dipoles(config)
    rest_pos, _ = dipole_arrays(rest)
    n = next(iter(presses.values()))[1].shape[0] if presses else 1
    pos = np.broadcast_to(rest_pos, (n,) + rest_pos.shape).copy()
    for fi, (tips, depths) in presses.items():
        face_idx = [f.index for f in config.faces].index(fi)
        sl = slice(face_idx * MAGNETS_PER_FACE, (face_idx + 1) * MAGNETS_PER_FACE)
        wsum = kernel_weights(config, params, fi, list(tips)).sum(axis=1)  # (5,)
        disp = np.minimum(depths[:, None] * wsum[None, :], params.max_depth)  # (n, 5)
        normal = config.face(fi).rotation[:, 2]
        pos[:, sl, :] = pos[:, sl, :] - disp[:, :, None] * normal[None, None, :]
    return pos


def sweep_face_frames(
    config: ObjectConfig,
    positions: np.ndarray,
    face: int,
    isolated: bool = False,
) -> np.ndarray:
    """Noise-free (n, 9) microtesla frames of one face over a position sweep."""
    _, moments = dipole_arrays(rest_dipoles(config))
    if isolated:
        face_idx = [f.index for f in config.faces].index(face)
        sl = slice(face_idx * MAGNETS_PER_FACE, (face_idx + 1) * MAGNETS_PER_FACE)
        positions = positions[:, sl, :]
        moments = moments[sl]
    pts, orient = sensor_arrays(config, face)
    fields = total_field(positions, moments, pts)
    return frames_from_fields(fields, orient)


def rest_frame(config: ObjectConfig, face: int, isolated: bool = False) -> HallFrame:
    """Noise-free rest frame of a face (all magnets, or own magnets only)."""
    rest_pos, _ = dipole_arrays(rest_dipoles(config))
    values = sweep_face_frames(config, rest_pos[None], face, isolated=isolated)[0]
    return HallFrame(values=values, face_index=face)


def quantize_force(force: np.ndarray) -> np.ndarray:
    """Round measured force to the nearest FORCE_QUANTUM_N multiple."""
    return np.round(np.asarray(force, dtype=float) / FORCE_QUANTUM_N) * FORCE_QUANTUM_N


def generate_case(
    case: CaseDescriptor,
    protocol: SweepProtocol,
    config: ObjectConfig,
    params: DeformationParams,
    seed: int,
    noise_sd: float = DEFAULT_NOISE_SD_UT,
    quantize: bool = True,
    n_samples: int | None = None,
) -> Dataset:
    """All records of one sweep case, as a single-case Dataset."""
    n = n_samples if n_samples is not None else protocol.samples_per_case
    rng = case_rng(seed, case.face, case.case_id)
    coords = np.zeros((n, 3, 2), dtype=np.int64)
    forces = np.zeros((n, 3))
    if case.contact_count > 0:
        depths = triangle_depths(n, protocol.cycles, protocol.min_depth, protocol.max_depth)
        stiff = np.array([params.stiffness(case.face, t) for t in case.tips])
        per_tip = stiff[None, :] * (params.k1 * depths[:, None] + params.k3 * depths[:, None] ** 3)
        total = per_tip.sum(axis=1)
        if quantize:
            total = quantize_force(total)
        label = np.round(total / case.contact_count, STORE_DECIMALS)
        for j, tip in enumerate(case.tips):
            coords[:, j, 0] = tip[0]
            coords[:, j, 1] = tip[1]
            forces[:, j] = label
        positions = sweep_magnet_positions(config, params, {case.face: (case.tips, depths)})
    else:
        rest_pos, _ = dipole_arrays(rest_dipoles(config))
        positions = np.broadcast_to(rest_pos, (n,) + rest_pos.shape)
    hall = sweep_face_frames(config, positions, case.face)
    if noise_sd > 0.0:
        hall = hall + noise_sd * rng.standard_normal((n, 9))
    return Dataset(
        face=case.face,
        case_ids=np.full(n, case.case_id, dtype="U16"),
        samples=np.arange(n, dtype=np.int64),
        coords=coords,
        forces=forces,
        hall=np.round(hall, STORE_DECIMALS),
    )


def concat_datasets(parts: list[Dataset], face: int) -> Dataset:
    if not parts:
        empty = Dataset(face, np.empty(0, "U16"), np.empty(0, np.int64),
                        np.empty((0, 3, 2), np.int64), np.empty((0, 3)), np.empty((0, 9)))
        return empty
    ds = Dataset(
        face=face,
        case_ids=np.concatenate([p.case_ids for p in parts]),
        samples=np.concatenate([p.samples for p in parts]),
        coords=np.concatenate([p.coords for p in parts]),
        forces=np.concatenate([p.forces for p in parts]),
        hall=np.concatenate([p.hall for p in parts]),
    )
    order = np.lexsort((ds.samples, ds.case_ids))
    return ds.subset(order)


def generate_face_dataset(
    face: int,
    scale: float,
    config: ObjectConfig,
    params: DeformationParams,
    seed: int,
    noise_sd: float = DEFAULT_NOISE_SD_UT,
    quantize: bool = True,
    protocol: SweepProtocol | None = None,
    coverage: CoverageSpec | None = None,
    jobs: int = 1,
) -> Dataset:
    """The full campaign for one face at a record-count scale in (0, 1]."""
    protocol = protocol or SweepProtocol()
    coverage = coverage or default_coverage()
    n = scaled_samples(protocol, scale)
    cases = enumerate_campaign(face, coverage)

    def one(case: CaseDescriptor) -> Dataset:
        return generate_case(case, protocol, config, params, seed,
                             noise_sd=noise_sd, quantize=quantize, n_samples=n)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(one, cases))
    else:
        parts = [one(c) for c in cases]
    return concat_datasets(parts, face)


def inject_core_shift(dataset: Dataset, offset: np.ndarray) -> Dataset:
    """Add a constant 9-channel offset to every frame (calibration drift).

    Offset and result are stored at CSV precision so that applying the
    negated offset restores the original dataset exactly.
    """
    offset = np.round(np.asarray(offset, dtype=float), STORE_DECIMALS)
    if offset.shape != (9,):
        raise UsageError(f"offset must have 9 channels, got {offset.shape}")
    out = dataset.subset(np.arange(len(dataset)))
    out.hall = np.round(dataset.hall + offset, STORE_DECIMALS)
    return out


def offset_compensate(frame: HallFrame, reference_rest: HallFrame, calib_rest: HallFrame) -> HallFrame:
    """Re-reference a frame: subtract the current rest, add the calibration rest."""
    if not frame.face_index == reference_rest.face_index == calib_rest.face_index:
        raise UsageError("offset compensation frames must come from one face")
    return HallFrame(
        values=frame.values - reference_rest.values + calib_rest.values,
        face_index=frame.face_index,
    )


def offset_compensate_batch(hall: np.ndarray, reference_rest: np.ndarray, calib_rest: np.ndarray) -> np.ndarray:
    return hall - reference_rest[None, :] + calib_rest[None, :]


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def write_dataset(dataset: Dataset, path: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for i in range(len(dataset)):
            cells = [str(dataset.face), str(dataset.case_ids[i]), str(dataset.samples[i])]
            for j in range(3):
                x, y = dataset.coords[i, j]
                if x > 0:
                    cells += [str(x), str(y), _fmt(dataset.forces[i, j])]
                else:
                    cells += ["", "", ""]
            cells += [_fmt(v) for v in dataset.hall[i]]
            fh.write(",".join(cells) + "\n")


def read_dataset(path: str) -> Dataset:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ParseError("missing or wrong dataset header", line=1)
    n = len(lines) - 1
    case_ids = np.empty(n, dtype="U16")
    samples = np.empty(n, dtype=np.int64)
    coords = np.zeros((n, 3, 2), dtype=np.int64)
    forces = np.zeros((n, 3))
    hall = np.empty((n, 9))
    face = -1
    for i, line in enumerate(lines[1:]):
        lineno = i + 2
        cells = line.split(",")
        if len(cells) != 21:
            raise ParseError(f"expected 21 columns, found {len(cells)}", line=lineno)
        try:
            row_face = int(cells[0])
            case_ids[i] = cells[1]
            samples[i] = int(cells[2])
            for j in range(3):
                cx, cy, f = cells[3 + 3 * j : 6 + 3 * j]
                if cx == "" and cy == "" and f == "":
                    continue
                coords[i, j] = (int(cx), int(cy))
                forces[i, j] = float(f)
            hall[i] = [float(v) for v in cells[12:21]]
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
        if face == -1:
            face = row_face
        elif row_face != face:
            raise ParseError(f"face changed from {face} to {row_face}", line=lineno)
    return Dataset(face=face, case_ids=case_ids, samples=samples,
                   coords=coords, forces=forces, hall=hall)


def dataset_equal(a: Dataset, b: Dataset) -> bool:
    return (
        a.face == b.face
        and np.array_equal(a.case_ids, b.case_ids)
        and np.array_equal(a.samples, b.samples)
        and np.array_equal(a.coords, b.coords)
        and np.array_equal(a.forces, b.forces)
        and np.array_equal(a.hall, b.hall)
    )


def dataset_sha256(dataset: Dataset) -> str:
    h = hashlib.sha256()
    h.update(str(dataset.face).encode())
    h.update("".join(dataset.case_ids.tolist()).encode())
    for arr in (dataset.samples, dataset.coords, dataset.forces, dataset.hall):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
