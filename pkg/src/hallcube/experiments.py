"""Study orchestration: per-face accuracy, seen/unseen, ablation,
cross-face grasps, and force sensitivity.

Every study is a pure function of (inputs, seed): datasets, splits,
training streams, hull directions, and artifact bytes all derive from
the master seed, so a rerun into a fresh directory is byte-identical.
Artifacts per run: config snapshot, dataset hashes, checkpoints,
per-sample CSVs, a JSON summary, a text table, and P2 figures.
"""

import hashlib
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import spearmanr

from . import figures
from .datagen import (
    Dataset,
    SweepProtocol,
    case_rng,
    concat_datasets,
    dataset_sha256,
    generate_face_dataset,
    inject_core_shift,
    offset_compensate_batch,
    quantize_force,
    rest_frame,
    scaled_samples,
    sweep_face_frames,
    sweep_magnet_positions,
    triangle_depths,
    STORE_DECIMALS,
)
from .deformation import DeformationParams, default_params, force_range_grid
from .errors import ConfigurationError, UsageError
from .geometry import ObjectConfig, default_config
from .heatmap import (
    fit_norm_stats,
    flatten_maps,
    heatmaps_from_rows,
    non_contact_threshold,
    normalize_frames,
    normalize_heatmaps,
    denormalize_heatmaps,
    unflatten_maps,
)
from .metrics import MetricsReport, SensitivityMap, evaluate, force_sensitivity, samples_csv
from .model import (
    COMPACT_SIZES,
    Checkpoint,
    MLP,
    TrainConfig,
    init_mlp,
    predict,
    save_checkpoint,
    train,
)

STUDIES = ("table1", "unseen", "ablation", "crossface", "sensitivity")

SEEN_LATTICE = tuple((x, y) for x in (1, 3, 5, 7, 9) for y in (1, 3, 5, 7, 9))

DEFAULT_BINS = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
DEFAULT_FACTORS = tuple(2 ** k for k in range(11))

# grasp probe layout: five single, three dual, two triple bases, shared
# by both jaw faces; offsets follow the calibration probes
GRASP_SINGLES = ((2, 2), (8, 2), (5, 5), (2, 8), (8, 8))
GRASP_DUALS = ((3, 3), (7, 7), (5, 2))
GRASP_TRIPLES = ((3, 5), (6, 3))
_GRASP_OFFSETS = {1: ((0, 0),), 2: ((0, 0), (0, 2)), 3: ((0, 0), (2, 0), (0, 2))}

# manual-label tolerance reported (not enforced) in cross-face summaries
MANUAL_E_LOC_PX = 2.8

_TYPE_PREFIXES = ("s-", "d-", "t-", "nc-")


def derive_seed(master: int, *parts) -> int:
    """Stable stage seed from the master seed and a label path."""
    text = json.dumps([int(master), *[str(p) for p in parts]])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass
class SplitSpec:
    train_frac: float = 0.6
    val_frac: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.train_frac < 1 and 0 < self.val_frac < 1
                and self.train_frac + self.val_frac < 1):
            raise ConfigurationError("split fractions must be positive and sum below 1")


@dataclass
class Split:
    train: Dataset
    val: Dataset
    test: Dataset
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray


def _partition(n: int, spec: SplitSpec, rng: np.random.Generator):
    n_tr = round(spec.train_frac * n)
    n_val = round(spec.val_frac * n)
    perm = rng.permutation(n)
    return perm[:n_tr], perm[n_tr:n_tr + n_val], perm[n_tr + n_val:]


def split_dataset(dataset: Dataset, spec: SplitSpec) -> Split:
    """60/20/20 partition stratified per case, deterministic per seed.

    Cases with fewer than 5 samples cannot honor the ratio; the split
    then degrades to a single global shuffle with a warning.
    """
    n = len(dataset)
    if n == 0:
        raise UsageError("cannot split an empty dataset")
    ids = dataset.case_ids
    cases = sorted(set(ids.tolist()))
    counts = {c: int(np.sum(ids == c)) for c in cases}
    if min(counts.values()) < 5:
        warnings.warn("a case has fewer than 5 samples; "
                      "falling back to a global unstratified split")
        rng = np.random.default_rng(derive_seed(spec.seed, "split-global"))
        tr, va, te = _partition(n, spec, rng)
    else:
        tr_parts, va_parts, te_parts = [], [], []
        for c in cases:
            rows = np.nonzero(ids == c)[0]
            rng = np.random.default_rng(derive_seed(spec.seed, "split", c))
            tr_i, va_i, te_i = _partition(len(rows), spec, rng)
            tr_parts.append(rows[tr_i])
            va_parts.append(rows[va_i])
            te_parts.append(rows[te_i])
        tr = np.concatenate(tr_parts)
        va = np.concatenate(va_parts)
        te = np.concatenate(te_parts)
    tr, va, te = np.sort(tr), np.sort(va), np.sort(te)
    return Split(dataset.subset(tr), dataset.subset(va), dataset.subset(te),
                 tr, va, te)


def _type_of(case_id: str) -> str:
    for p in _TYPE_PREFIXES:
        if case_id.startswith(p):
            return p
    raise UsageError(f"unknown case id shape {case_id!r}")


def downsample_training(dataset: Dataset, factor: int) -> Dataset:
    """Keep every factor-th row per contact type, preserving row order."""
    if factor < 1:
        raise UsageError("downsample factor must be >= 1")
    if factor == 1:
        return dataset
    picks = []
    types = np.array([_type_of(c) for c in dataset.case_ids])
    for prefix in _TYPE_PREFIXES:
        rows = np.nonzero(types == prefix)[0]
        picks.append(rows[::factor])
    return dataset.subset(np.sort(np.concatenate(picks)))


def ablation_training_counts(scale: float, factor: int,
                             spec: SplitSpec | None = None,
                             protocol: SweepProtocol | None = None) -> dict:
    """Training-row counts per contact type for a factor, without data.

    The calibration campaign is 100 single, 26 dual, 14 triple and 3
    non-contact cases; each contributes round(train_frac * n) training
    rows, and the per-type downsample keeps ceil(rows / factor).
    """
    spec = spec or SplitSpec()
    protocol = protocol or SweepProtocol()
    n = scaled_samples(protocol, scale)
    per_case = round(spec.train_frac * n)
    totals = {"s-": 100 * per_case, "d-": 26 * per_case,
              "t-": 14 * per_case, "nc-": 3 * per_case}
    kept = {k: math.ceil(v / factor) for k, v in totals.items()}
    kept["total"] = sum(kept[k] for k in totals)
    return kept


@dataclass
class StudyConfig:
    study: str
    faces: tuple[int, ...] = (1, 2, 3, 4, 5)
    scale: float = 0.05
    seed: int = 0
    sizes: list[int] = field(default_factory=lambda: list(COMPACT_SIZES))
    train: TrainConfig | None = None
    noise_sd: float = 2.0
    jobs: int = 1
    out_dir: str | None = None
    factors: tuple[int, ...] = DEFAULT_FACTORS
    bins: tuple[float, ...] = DEFAULT_BINS
    unseen_face: int = 1
    warm_start: bool = True

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ConfigurationError(f"unknown study {self.study!r}")
        if not 0.0 < self.scale <= 1.0:
            raise ConfigurationError(f"scale {self.scale} outside (0, 1]")
        if any(f not in (1, 2, 3, 4, 5) for f in self.faces):
            raise ConfigurationError("faces must be within 1..5")
        if not self.bins or any(not 0.0 < b <= 1.0 for b in self.bins):
            raise ConfigurationError("bins must be fractions in (0, 1]")
        if not self.factors or any(f < 1 for f in self.factors):
            raise ConfigurationError("factors must be integers >= 1")
        if self.train is None:
            self.train = default_train_config()


def default_train_config(seed: int = 0) -> TrainConfig:
    """From-scratch settings tuned for the compact net at desk scale.

    High peak rate with warmup and exponential decay; float32 batches
    keep the epoch budget affordable on one core.
    """
    return TrainConfig(learning_rate=0.02, batch_size=512, max_epochs=2000,
                       seed=seed, lr_decay=0.99865, warmup_epochs=100,
                       dtype="float32", val_every=5)


def finetune_train_config(seed: int = 0) -> TrainConfig:
    """Short adaptation schedule for nets warm-started from another face."""
    return TrainConfig(learning_rate=0.004, batch_size=512, max_epochs=300,
                       seed=seed, lr_decay=0.991, warmup_epochs=15,
                       dtype="float32", val_every=5)


def _face_train_cfg(base: TrainConfig, master: int, face: int, tag: str = "train") -> TrainConfig:
    return replace(base, seed=derive_seed(master, tag, face))


def train_face_pipeline(train_ds: Dataset, val_ds: Dataset, sizes: list[int],
                        cfg: TrainConfig, grid_size: int,
                        init_from: MLP | None = None):
    """Fit norm stats and threshold on training rows only, then train."""
    stats = fit_norm_stats(train_ds.hall, train_ds.forces)
    threshold = non_contact_threshold(train_ds.forces)
    x_tr = normalize_frames(train_ds.hall, stats)
    y_tr = flatten_maps(normalize_heatmaps(
        heatmaps_from_rows(train_ds.coords, train_ds.forces, grid_size), stats))
    x_val = normalize_frames(val_ds.hall, stats)
    y_val = flatten_maps(normalize_heatmaps(
        heatmaps_from_rows(val_ds.coords, val_ds.forces, grid_size), stats))
    cfg = replace(cfg, batch_size=min(cfg.batch_size, len(x_tr)))
    mlp = init_from.copy() if init_from is not None else init_mlp(sizes, seed=cfg.seed)
    ckpt = train(mlp, x_tr, y_tr, x_val, y_val, cfg, norm_stats=stats,
                 data_hash=dataset_sha256(train_ds))
    return ckpt, threshold


def predict_heatmaps(ckpt: Checkpoint, hall: np.ndarray, grid_size: int) -> np.ndarray:
    """Newton-valued heatmaps from raw microtesla frames."""
    x = normalize_frames(hall, ckpt.norm_stats)
    return denormalize_heatmaps(unflatten_maps(predict(ckpt.mlp, x), grid_size),
                                ckpt.norm_stats)


def evaluate_dataset(ckpt: Checkpoint, threshold: float, ds: Dataset,
                     range_map: np.ndarray, grid_size: int) -> MetricsReport:
    preds = predict_heatmaps(ckpt, ds.hall, grid_size)
    gts = heatmaps_from_rows(ds.coords, ds.forces, grid_size)
    return evaluate(preds, gts, range_map, threshold, face=ds.face,
                    case_ids=ds.case_ids, samples=ds.samples)


def _grid_to_json(grid: np.ndarray) -> list:
    return [[None if not np.isfinite(v) else float(v) for v in row] for row in grid]


def report_to_dict(report: MetricsReport) -> dict:
    out = report.summary_dict()
    out["loc_counts"] = report.loc_counts.tolist()
    out["loc_a_sim"] = _grid_to_json(report.loc_a_sim)
    out["loc_e_loc"] = _grid_to_json(report.loc_e_loc)
    out["loc_e_f_pct"] = _grid_to_json(report.loc_e_f_pct)
    out["loc_e_f_newton"] = _grid_to_json(report.loc_e_f_newton)
    return out


def scrub_json(obj):
    """Copy with non-finite floats as None, so output stays strict JSON."""
    if isinstance(obj, dict):
        return {k: scrub_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [scrub_json(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(scrub_json(obj), sort_keys=True, indent=2,
                            allow_nan=False) + "\n")


def _write_text(path: str, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def _config_snapshot(cfg: StudyConfig) -> dict:
    snap = asdict(cfg)
    snap["train"] = asdict(cfg.train)
    return snap


def _face_artifacts(out_dir: str, face: int, ckpt: Checkpoint,
                    report: MetricsReport, ds: Dataset,
                    grid_size: int, tag: str = "") -> None:
    sub = os.path.join(out_dir, f"face{face}{tag}")
    os.makedirs(sub, exist_ok=True)
    save_checkpoint(ckpt, os.path.join(sub, "checkpoint"))
    _write_text(os.path.join(sub, "samples.csv"), samples_csv(report))
    figdir = os.path.join(sub, "figures")
    os.makedirs(figdir, exist_ok=True)
    contact_rows = np.nonzero(ds.n_contacts > 0)[0]
    if contact_rows.size:
        i = int(contact_rows[0])
        pred = predict_heatmaps(ckpt, ds.hall[i:i + 1], grid_size)[0]
        gt = heatmaps_from_rows(ds.coords[i:i + 1], ds.forces[i:i + 1], grid_size)[0]
        top = max(gt.max(), pred.max(), 1e-9)
        figures.write_pgm(pred, os.path.join(figdir, "pred_example.pgm"),
                          comment=f"face {face} predicted heatmap", scale_max=top)
        figures.write_pgm(gt, os.path.join(figdir, "gt_example.pgm"),
                          comment=f"face {face} ground truth heatmap", scale_max=top)
    figures.write_pgm(report.loc_e_f_pct, os.path.join(figdir, "loc_e_f_pct.pgm"),
                      comment=f"face {face} per-location force error %")
    figures.write_pgm(report.loc_a_sim, os.path.join(figdir, "loc_a_sim.pgm"),
                      comment=f"face {face} per-location similarity")


def run_table1(cfg: StudyConfig,
               config: ObjectConfig | None = None,
               params: DeformationParams | None = None) -> dict:
    """Per-face pipeline: generate, split, train, evaluate the test split.

    Faces share the sensing layout in their local frames, so the first
    face trains from scratch and later faces warm-start from it and
    adapt on their own data with a short schedule.
    """
    config = config or default_config()
    params = params or default_params(config)
    grid = config.grid_size
    reports: dict[int, MetricsReport] = {}
    checkpoints: dict[int, Checkpoint] = {}
    thresholds: dict[int, float] = {}
    hashes: dict[str, str] = {}
    test_sets: dict[int, Dataset] = {}
    base_mlp: MLP | None = None

    for face in cfg.faces:
        ds = generate_face_dataset(face, cfg.scale, config, params, cfg.seed,
                                   noise_sd=cfg.noise_sd, jobs=cfg.jobs)
        hashes[f"face{face}"] = dataset_sha256(ds)
        split = split_dataset(ds, SplitSpec(seed=derive_seed(cfg.seed, "split", face)))
        if cfg.warm_start and base_mlp is not None:
            face_cfg = _face_train_cfg(finetune_train_config(), cfg.seed, face)
            ckpt, threshold = train_face_pipeline(split.train, split.val, cfg.sizes,
                                                  face_cfg, grid, init_from=base_mlp)
        else:
            face_cfg = _face_train_cfg(cfg.train, cfg.seed, face)
            ckpt, threshold = train_face_pipeline(split.train, split.val, cfg.sizes,
                                                  face_cfg, grid)
            base_mlp = ckpt.mlp
        report = evaluate_dataset(ckpt, threshold, split.test,
                                  force_range_grid(params, face), grid)
        reports[face] = report
        checkpoints[face] = ckpt
        thresholds[face] = threshold
        test_sets[face] = split.test

    summaries = {f: report_to_dict(r) for f, r in reports.items()}
    result = {
        "study": "table1",
        "config": _config_snapshot(cfg),
        "dataset_hashes": hashes,
        "faces": summaries,
        "reports": reports,
        "checkpoints": checkpoints,
        "thresholds": thresholds,
    }
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        write_json(os.path.join(cfg.out_dir, "config.json"), _config_snapshot(cfg))
        write_json(os.path.join(cfg.out_dir, "summary.json"), {
            "study": "table1", "dataset_hashes": hashes,
            "faces": {str(f): s for f, s in summaries.items()},
            "thresholds": {str(f): thresholds[f] for f in thresholds},
        })
        _write_text(os.path.join(cfg.out_dir, "summary.txt"),
                    figures.face_table_text(
                        {f: reports[f].summary_dict() for f in reports}))
        for face in cfg.faces:
            _face_artifacts(cfg.out_dir, face, checkpoints[face],
                            reports[face], test_sets[face], grid)
    return result


def _cases_matching(ds: Dataset, wanted: set[str]) -> np.ndarray:
    return np.nonzero(np.isin(ds.case_ids, sorted(wanted)))[0]


def run_unseen(cfg: StudyConfig,
               config: ObjectConfig | None = None,
               params: DeformationParams | None = None) -> dict:
    """Calibrate on a 5x5 location lattice, probe the full 10x10 grid.

    Training uses only single-contact sweeps at the 25 seen locations
    plus one of the three non-contact cases; evaluation reports the
    seen test split and every sample at the 75 unseen locations.
    """
    config = config or default_config()
    params = params or default_params(config)
    grid = config.grid_size
    face = cfg.unseen_face

    ds = generate_face_dataset(face, cfg.scale, config, params, cfg.seed,
                               noise_sd=cfg.noise_sd, jobs=cfg.jobs)
    split = split_dataset(ds, SplitSpec(seed=derive_seed(cfg.seed, "split", face)))

    seen_ids = {f"s-x{x:02d}y{y:02d}" for x, y in SEEN_LATTICE}
    train_ids = seen_ids | {"nc-0"}
    train_ds = split.train.subset(_cases_matching(split.train, train_ids))
    val_ds = split.val.subset(_cases_matching(split.val, train_ids))
    seen_test = split.test.subset(_cases_matching(split.test, train_ids))

    all_singles = {c for c in set(ds.case_ids.tolist()) if c.startswith("s-")}
    unseen_ids = all_singles - seen_ids
    unseen_ds = ds.subset(_cases_matching(ds, unseen_ids))

    ckpt, threshold = train_face_pipeline(
        train_ds, val_ds, cfg.sizes,
        _face_train_cfg(cfg.train, cfg.seed, face, tag="train-unseen"), grid)
    range_map = force_range_grid(params, face)
    seen_report = evaluate_dataset(ckpt, threshold, seen_test, range_map, grid)
    unseen_report = evaluate_dataset(ckpt, threshold, unseen_ds, range_map, grid)

    unseen_locs = [(x - 1, y - 1) for x, y in
                   sorted((int(c[3:5]), int(c[6:8])) for c in unseen_ids)]
    e_loc_vals = np.array([unseen_report.loc_e_loc[i, j] for i, j in unseen_locs])
    within = float(np.mean(e_loc_vals <= math.sqrt(2) + 1e-12))

    summary = {
        "face": face,
        "seen_locations": len(SEEN_LATTICE),
        "unseen_locations": len(unseen_ids),
        "seen": report_to_dict(seen_report),
        "unseen": report_to_dict(unseen_report),
        "e_f_ratio": unseen_report.e_f_pct / seen_report.e_f_pct
        if seen_report.e_f_pct > 0 else float("inf"),
        "unseen_within_sqrt2_frac": within,
    }
    result = {
        "study": "unseen",
        "config": _config_snapshot(cfg),
        "dataset_hashes": {f"face{face}": dataset_sha256(ds)},
        "summary": summary,
        "seen_report": seen_report,
        "unseen_report": unseen_report,
        "checkpoint": ckpt,
        "threshold": threshold,
    }
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        write_json(os.path.join(cfg.out_dir, "config.json"), _config_snapshot(cfg))
        write_json(os.path.join(cfg.out_dir, "summary.json"), {
            "study": "unseen",
            "dataset_hashes": result["dataset_hashes"],
            "summary": summary,
        })
        _write_text(os.path.join(cfg.out_dir, "summary.txt"),
                    figures.keyed_table_text(
                        {"seen": seen_report.summary_dict(),
                         "unseen": unseen_report.summary_dict()},
                        key_header="split",
                        title=f"Seen vs unseen locations, face {face}"))
        sub = os.path.join(cfg.out_dir, f"face{face}")
        os.makedirs(sub, exist_ok=True)
        save_checkpoint(ckpt, os.path.join(sub, "checkpoint"))
        _write_text(os.path.join(sub, "seen_samples.csv"), samples_csv(seen_report))
        _write_text(os.path.join(sub, "unseen_samples.csv"), samples_csv(unseen_report))
        figdir = os.path.join(sub, "figures")
        os.makedirs(figdir, exist_ok=True)
        figures.write_pgm(unseen_report.loc_e_loc,
                          os.path.join(figdir, "unseen_loc_e_loc.pgm"),
                          comment=f"face {face} unseen-location E_loc")
        # mean prediction at one unseen location: mass should sit on
        # nearby seen lattice pixels
        probe = unseen_ds.subset(np.nonzero(unseen_ds.case_ids == "s-x02y02")[0])
        if len(probe):
            mean_pred = predict_heatmaps(ckpt, probe.hall, grid).mean(axis=0)
            figures.write_pgm(mean_pred, os.path.join(figdir, "unseen_x02y02_mean_pred.pgm"),
                              comment=f"face {face} mean prediction at unseen (2,2)")
    return result


def run_ablation(cfg: StudyConfig,
                 config: ObjectConfig | None = None,
                 params: DeformationParams | None = None) -> dict:
    """Retrain per downsample factor; validation and test stay fixed."""
    config = config or default_config()
    params = params or default_params(config)
    grid = config.grid_size
    face = cfg.faces[0]

    ds = generate_face_dataset(face, cfg.scale, config, params, cfg.seed,
                               noise_sd=cfg.noise_sd, jobs=cfg.jobs)
    split = split_dataset(ds, SplitSpec(seed=derive_seed(cfg.seed, "split", face)))
    range_map = force_range_grid(params, face)
    train_cfg = _face_train_cfg(cfg.train, cfg.seed, face)

    reports: dict[int, MetricsReport] = {}
    checkpoints: dict[int, Checkpoint] = {}
    counts: dict[int, int] = {}
    for factor in cfg.factors:
        if factor > len(split.train):
            raise UsageError(f"factor {factor} exceeds the training split size")
        sub = downsample_training(split.train, factor)
        counts[factor] = len(sub)
        # heavy factors can shrink the subset below the batch size
        face_cfg = replace(train_cfg, batch_size=min(train_cfg.batch_size, len(sub)))
        ckpt, threshold = train_face_pipeline(sub, split.val, cfg.sizes,
                                              face_cfg, grid)
        reports[factor] = evaluate_dataset(ckpt, threshold, split.test,
                                           range_map, grid)
        checkpoints[factor] = ckpt

    summaries = {int(f): report_to_dict(r) for f, r in reports.items()}
    for f in summaries:
        summaries[f]["train_rows"] = counts[f]
    result = {
        "study": "ablation",
        "config": _config_snapshot(cfg),
        "dataset_hashes": {f"face{face}": dataset_sha256(ds)},
        "factors": summaries,
        "reports": reports,
        "checkpoints": checkpoints,
        "train_counts": counts,
    }
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        write_json(os.path.join(cfg.out_dir, "config.json"), _config_snapshot(cfg))
        write_json(os.path.join(cfg.out_dir, "summary.json"), {
            "study": "ablation",
            "dataset_hashes": result["dataset_hashes"],
            "factors": {str(f): summaries[f] for f in summaries},
        })
        _write_text(os.path.join(cfg.out_dir, "summary.txt"),
                    figures.keyed_table_text(
                        {f: reports[f].summary_dict() for f in sorted(reports)},
                        key_header="factor",
                        title=f"Training-amount ablation, face {face}"))
        for factor in cfg.factors:
            sub = os.path.join(cfg.out_dir, f"factor_{factor:05d}")
            os.makedirs(sub, exist_ok=True)
            save_checkpoint(checkpoints[factor], os.path.join(sub, "checkpoint"))
            _write_text(os.path.join(sub, "samples.csv"),
                        samples_csv(reports[factor]))
    return result


def _grasp_cases() -> list[dict]:
    cases = []
    for kind, bases, n in (("s", GRASP_SINGLES, 1), ("d", GRASP_DUALS, 2),
                           ("t", GRASP_TRIPLES, 3)):
        for bx, by in bases:
            tips = tuple((bx + ox, by + oy) for ox, oy in _GRASP_OFFSETS[n])
            cases.append({"id": f"g{kind}-x{bx:02d}y{by:02d}",
                          "kind": kind, "tips": tips})
    return cases


def _total_force(tips, face: int, depth: float, params: DeformationParams) -> float:
    stiff = sum(params.stiffness(face, t) for t in tips)
    return stiff * (params.k1 * depth + params.k3 * depth ** 3)


def _depth_for_total(target: float, tips, face: int,
                     params: DeformationParams, max_depth: float) -> float:
    lo, hi = 0.0, max_depth
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _total_force(tips, face, mid, params) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _case_labels(tips, face: int, depths: np.ndarray,
                 params: DeformationParams) -> np.ndarray:
    """Per-contact force labels for an equal-depth press, as (n, 3)."""
    n = len(depths)
    total = np.zeros(n)
    for t in tips:
        stiff = params.stiffness(face, t)
        total += stiff * (params.k1 * depths + params.k3 * depths ** 3)
    label = np.round(quantize_force(total) / len(tips), STORE_DECIMALS)
    coords = np.zeros((n, 3, 2), dtype=np.int64)
    forces = np.zeros((n, 3))
    for j, t in enumerate(tips):
        coords[:, j, 0] = t[0]
        coords[:, j, 1] = t[1]
        forces[:, j] = label
    return coords, forces


def _grasp_sweep(config: ObjectConfig, params: DeformationParams,
                 target_face: int, opposite_face: int, bin_frac: float,
                 n: int, protocol: SweepProtocol, seed: int,
                 read_faces: tuple[int, ...]):
    """One grasp sweep: target face runs the full depth sweep, the
    opposite face follows with its total force capped at the bin.

    Returns noise-free frames per read face plus target-face labels.
    """
    depths = triangle_depths(n, protocol.cycles, protocol.min_depth,
                             protocol.max_depth)
    cases = _grasp_cases()
    frames = {f: [] for f in read_faces}
    frames_iso = {f: [] for f in read_faces}
    labels = []
    for case in cases:
        tips = case["tips"]
        presses = {target_face: (list(tips), depths)}
        if bin_frac > 0:
            t_max = _total_force(tips, opposite_face, protocol.max_depth, params)
            cap = _depth_for_total(bin_frac * t_max, tips, opposite_face,
                                   params, protocol.max_depth)
            presses[opposite_face] = (list(tips), np.minimum(depths, cap))
        pos = sweep_magnet_positions(config, params, presses)
        for f in read_faces:
            frames[f].append(sweep_face_frames(config, pos, f))
            frames_iso[f].append(sweep_face_frames(config, pos, f, isolated=True))
        coords, forces = _case_labels(tips, target_face, depths, params)
        labels.append((case["id"], coords, forces))
    return frames, frames_iso, labels


def _grasp_noise(seed: int, face: int, case_id: str, n: int) -> np.ndarray:
    return case_rng(seed, face, case_id).standard_normal((n, 9))


def _assemble(face: int, labels, frame_list, noise_sd: float, seed: int,
              contact: bool) -> Dataset:
    """Stack per-case frames into a Dataset with shared per-case noise."""
    parts = []
    for (case_id, coords, forces), hall in zip(labels, frame_list):
        n = hall.shape[0]
        noisy = hall + noise_sd * _grasp_noise(seed, face, case_id, n)
        parts.append(Dataset(
            face=face,
            case_ids=np.full(n, case_id, dtype="U16"),
            samples=np.arange(n, dtype=np.int64),
            coords=coords if contact else np.zeros((n, 3, 2), dtype=np.int64),
            forces=forces if contact else np.zeros((n, 3)),
            hall=np.round(noisy, STORE_DECIMALS),
        ))
    return concat_datasets(parts, face)


def run_crossface(cfg: StudyConfig,
                  config: ObjectConfig | None = None,
                  params: DeformationParams | None = None,
                  checkpoints: dict[int, Checkpoint] | None = None,
                  thresholds: dict[int, float] | None = None) -> dict:
    """Parallel-jaw grasp emulation across opposite-face force bins.

    Faces 3 and 5 take simultaneous probes; each face's single-face
    model is evaluated under full shared-field physics per bin, under
    isolated own-face fields (re-referenced to the calibration rest),
    and against a single-face reference sweep. A core-shift offset is
    injected and compensated as a sub-experiment. Extra faces with
    available models report non-contact accuracy.
    """
    config = config or default_config()
    params = params or default_params(config)
    grid = config.grid_size
    jaw_faces = tuple(cfg.faces) if len(cfg.faces) == 2 else (3, 5)
    protocol = SweepProtocol()
    n = scaled_samples(protocol, cfg.scale)

    checkpoints = dict(checkpoints or {})
    thresholds = dict(thresholds or {})
    nc_faces = tuple(f for f in sorted(checkpoints) if f not in jaw_faces)
    hashes = {}
    base_mlp = checkpoints[jaw_faces[0]].mlp if jaw_faces[0] in checkpoints else None
    for face in jaw_faces:
        if face in checkpoints:
            continue
        ds = generate_face_dataset(face, cfg.scale, config, params, cfg.seed,
                                   noise_sd=cfg.noise_sd, jobs=cfg.jobs)
        hashes[f"face{face}"] = dataset_sha256(ds)
        split = split_dataset(ds, SplitSpec(seed=derive_seed(cfg.seed, "split", face)))
        if cfg.warm_start and base_mlp is not None:
            face_cfg = _face_train_cfg(finetune_train_config(), cfg.seed, face)
            ckpt, threshold = train_face_pipeline(split.train, split.val, cfg.sizes,
                                                  face_cfg, grid, init_from=base_mlp)
        else:
            face_cfg = _face_train_cfg(cfg.train, cfg.seed, face)
            ckpt, threshold = train_face_pipeline(split.train, split.val, cfg.sizes,
                                                  face_cfg, grid)
            base_mlp = ckpt.mlp
        checkpoints[face] = ckpt
        thresholds[face] = threshold

    rng = np.random.default_rng(derive_seed(cfg.seed, "core-shift"))
    shift = np.round(rng.uniform(-30.0, 30.0, 9), STORE_DECIMALS)

    rests_full = {f: rest_frame(config, f).values for f in (1, 2, 3, 4, 5)}
    rests_iso = {f: rest_frame(config, f, isolated=True).values
                 for f in (1, 2, 3, 4, 5)}

    def eval_ds(face: int, ds: Dataset) -> MetricsReport:
        return evaluate_dataset(checkpoints[face], thresholds[face], ds,
                                force_range_grid(params, face), grid)

    def summarize(report: MetricsReport) -> dict:
        out = report.summary_dict()
        contact = [r for r in report.samples if r.probe > 0]
        if contact:
            out["e_loc_within_manual_frac"] = float(np.mean(
                [r.e_loc < MANUAL_E_LOC_PX for r in contact]))
        return out

    full: dict[str, dict] = {}
    shifted: dict[str, dict] = {}
    compensated: dict[str, dict] = {}
    isolated: dict[str, dict] = {}
    reference: dict[str, dict] = {}
    nc_acc: dict[str, dict] = {}
    sample_files: dict[str, str] = {}

    for face in jaw_faces:
        opposite = jaw_faces[1] if face == jaw_faces[0] else jaw_faces[0]
        read_faces = (face,) + nc_faces

        # single-face reference: opposite jaw never touches
        ref_frames, _, ref_labels = _grasp_sweep(
            config, params, face, opposite, 0.0, n, protocol, cfg.seed, (face,))
        ref_ds = _assemble(face, ref_labels, ref_frames[face], cfg.noise_sd,
                           cfg.seed, contact=True)
        reference[str(face)] = summarize(eval_ds(face, ref_ds))

        for b in cfg.bins:
            frames, frames_iso, labels = _grasp_sweep(
                config, params, face, opposite, b, n, protocol, cfg.seed,
                read_faces)
            key = f"{b:.1f}"
            ds_full = _assemble(face, labels, frames[face], cfg.noise_sd,
                                cfg.seed, contact=True)
            full_report = eval_ds(face, ds_full)
            full.setdefault(str(face), {})[key] = summarize(full_report)
            if cfg.out_dir:
                sample_files[f"face{face}_bin{key}"] = samples_csv(full_report)

            ds_shift = inject_core_shift(ds_full, shift)
            shifted.setdefault(str(face), {})[key] = summarize(eval_ds(face, ds_shift))
            ds_comp = ds_shift.subset(np.arange(len(ds_shift)))
            ds_comp.hall = np.round(offset_compensate_batch(
                ds_shift.hall, rests_full[face] + shift, rests_full[face]),
                STORE_DECIMALS)
            compensated.setdefault(str(face), {})[key] = summarize(eval_ds(face, ds_comp))

            for ncf in nc_faces:
                iso_key = f"face{ncf}"
                nc_ds = _assemble(ncf, labels, frames[ncf], cfg.noise_sd,
                                  cfg.seed, contact=False)
                nc_acc.setdefault(str(face), {}).setdefault(key, {})[iso_key] = (
                    eval_ds(ncf, nc_ds).a_non)

        # isolated reads ignore the opposite jaw entirely, so one bin
        # stands for all of them; re-reference to the calibration rest
        iso_frames = [offset_compensate_batch(h, rests_iso[face], rests_full[face])
                      for h in frames_iso[face]]
        ds_iso = _assemble(face, labels, iso_frames, cfg.noise_sd, cfg.seed,
                           contact=True)
        isolated[str(face)] = summarize(eval_ds(face, ds_iso))

    summary = {
        "jaw_faces": list(jaw_faces),
        "bins": [float(b) for b in cfg.bins],
        "full": full,
        "isolated": isolated,
        "single_face": reference,
        "core_shift": {
            "offset_ut": shift.tolist(),
            "uncompensated": shifted,
            "compensated": compensated,
        },
        "non_contact_a_non": nc_acc,
        "manual_e_loc_tolerance_px": MANUAL_E_LOC_PX,
    }
    result = {
        "study": "crossface",
        "config": _config_snapshot(cfg),
        "dataset_hashes": hashes,
        "summary": summary,
        "checkpoints": checkpoints,
        "thresholds": thresholds,
    }
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        write_json(os.path.join(cfg.out_dir, "config.json"), _config_snapshot(cfg))
        write_json(os.path.join(cfg.out_dir, "summary.json"), {
            "study": "crossface", "dataset_hashes": hashes, "summary": summary,
        })
        lines = []
        for face in jaw_faces:
            lines.append(figures.keyed_table_text(
                full[str(face)], key_header="bin",
                title=f"Face {face} under opposite-face load (full fields)"))
        _write_text(os.path.join(cfg.out_dir, "summary.txt"), "\n".join(lines))
        for name, text in sample_files.items():
            _write_text(os.path.join(cfg.out_dir, f"{name}_samples.csv"), text)
    return result


def run_sensitivity(cfg: StudyConfig,
                    config: ObjectConfig | None = None,
                    params: DeformationParams | None = None,
                    table1_report: MetricsReport | None = None,
                    n_rays: int = 512) -> dict:
    """Per-location hull sensitivity, rank-correlated with test errors."""
    config = config or default_config()
    params = params or default_params(config)
    grid = config.grid_size
    face = cfg.faces[0]

    ds = generate_face_dataset(face, cfg.scale, config, params, cfg.seed,
                               noise_sd=cfg.noise_sd, jobs=cfg.jobs)
    if table1_report is None:
        split = split_dataset(ds, SplitSpec(seed=derive_seed(cfg.seed, "split", face)))
        ckpt, threshold = train_face_pipeline(
            split.train, split.val, cfg.sizes,
            _face_train_cfg(cfg.train, cfg.seed, face), grid)
        table1_report = evaluate_dataset(ckpt, threshold, split.test,
                                         force_range_grid(params, face), grid)

    delta = np.full((grid, grid), np.nan)
    for x in range(1, grid + 1):
        for y in range(1, grid + 1):
            rows = np.nonzero(ds.case_ids == f"s-x{x:02d}y{y:02d}")[0]
            if rows.size < 10:
                continue
            delta[x - 1, y - 1] = force_sensitivity(
                ds.hall[rows], ds.forces[rows, 0], n_rays=n_rays,
                seed=derive_seed(cfg.seed, "hull", face, x, y))
    sens = SensitivityMap(face=face, delta=delta)

    correlations = {}
    for name, grid_vals in (("e_f_pct", table1_report.loc_e_f_pct),
                            ("a_sim", table1_report.loc_a_sim),
                            ("e_loc", table1_report.loc_e_loc)):
        mask = np.isfinite(delta) & np.isfinite(grid_vals)
        if mask.sum() >= 3:
            rho, p = spearmanr(delta[mask], grid_vals[mask])
            correlations[name] = {"rho": float(rho), "p": float(p),
                                  "locations": int(mask.sum())}
    summary = {
        "face": face,
        "delta": _grid_to_json(delta),
        "correlations": correlations,
    }
    result = {
        "study": "sensitivity",
        "config": _config_snapshot(cfg),
        "dataset_hashes": {f"face{face}": dataset_sha256(ds)},
        "summary": summary,
        "sensitivity_map": sens,
        "table1_report": table1_report,
    }
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        write_json(os.path.join(cfg.out_dir, "config.json"), _config_snapshot(cfg))
        write_json(os.path.join(cfg.out_dir, "summary.json"), {
            "study": "sensitivity",
            "dataset_hashes": result["dataset_hashes"],
            "summary": summary,
        })
        rows = [[name, f"{c['rho']:+.4f}", f"{c['p']:.3g}", str(c["locations"])]
                for name, c in sorted(correlations.items())]
        _write_text(os.path.join(cfg.out_dir, "summary.txt"),
                    figures.table_text(
                        ["metric", "spearman_rho", "p", "locations"], rows,
                        title=f"Force sensitivity vs test metrics, face {face}"))
        figdir = os.path.join(cfg.out_dir, "figures")
        os.makedirs(figdir, exist_ok=True)
        figures.write_pgm(delta, os.path.join(figdir, "delta.pgm"),
                          comment=f"face {face} force sensitivity")
        figures.write_pgm(table1_report.loc_e_f_pct,
                          os.path.join(figdir, "loc_e_f_pct.pgm"),
                          comment=f"face {face} per-location force error %")
    return result


def _grid_from_json(rows) -> np.ndarray:
    return np.array([[np.nan if v is None else float(v) for v in row]
                     for row in rows], dtype=float)


def render_report(run_dir: str, out_dir: str | None = None) -> list[str]:
    """Re-render a finished study directory: text table plus P2 figures.

    Reads only summary.json, so a run can be reported from another
    machine or after deleting the heavyweight artifacts.
    """
    path = os.path.join(run_dir, "summary.json")
    if not os.path.isfile(path):
        raise UsageError(f"no summary.json under {run_dir}")
    with open(path) as fh:
        summary = json.load(fh)
    study = summary.get("study")
    if study not in STUDIES:
        raise ParseError(f"summary.json names unknown study {study!r}")
    out_dir = out_dir or run_dir
    figdir = os.path.join(out_dir, "report_figures")
    os.makedirs(figdir, exist_ok=True)
    written: list[str] = []

    def emit_text(text: str) -> None:
        p = os.path.join(out_dir, "report.txt")
        _write_text(p, text)
        written.append(p)

    def emit_grid(grid_json, name: str, comment: str) -> None:
        p = os.path.join(figdir, name)
        figures.write_pgm(_grid_from_json(grid_json), p, comment=comment)
        written.append(p)

    if study == "table1":
        faces = {int(k.removeprefix("face")): v
                 for k, v in summary["faces"].items()}
        emit_text(figures.face_table_text(faces))
        for f in sorted(faces):
            emit_grid(faces[f]["loc_a_sim"], f"face{f}_loc_a_sim.pgm",
                      f"face {f} per-location similarity")
            emit_grid(faces[f]["loc_e_f_pct"], f"face{f}_loc_e_f_pct.pgm",
                      f"face {f} per-location force error %")
    elif study == "unseen":
        s = summary["summary"]
        parts = [figures.keyed_table_text(
            {"seen": s["seen"], "unseen": s["unseen"]},
            key_header="locations",
            title=f"Seen vs unseen locations, face {s['face']}")]
        ratio = s.get("e_f_ratio")
        within = s.get("unseen_within_sqrt2_frac")
        parts.append(f"\nunseen/seen E_f ratio: "
                     f"{'inf' if ratio is None else format(ratio, '.2f')}\n")
        parts.append(f"unseen locations within sqrt(2) px: {within:.0%}\n")
        emit_text("".join(parts))
        emit_grid(s["unseen"]["loc_e_loc"], "unseen_loc_e_loc.pgm",
                  "unseen per-location localization error px")
        emit_grid(s["seen"]["loc_e_loc"], "seen_loc_e_loc.pgm",
                  "seen per-location localization error px")
    elif study == "ablation":
        factors = {int(k): v for k, v in summary["factors"].items()}
        emit_text(figures.keyed_table_text(
            {f: factors[f] for f in sorted(factors)}, key_header="factor",
            title="Training-amount ablation"))
    elif study == "crossface":
        s = summary["summary"]
        parts = []
        for face in s["jaw_faces"]:
            parts.append(figures.keyed_table_text(
                s["full"][str(face)], key_header="bin",
                title=f"Face {face} under opposite-face load (full fields)"))
            parts.append("\n")
            rows = {"single-face": s["single_face"][str(face)],
                    "isolated": s["isolated"][str(face)]}
            parts.append(figures.keyed_table_text(
                rows, key_header="reads",
                title=f"Face {face} isolated reads vs single-face reference"))
            parts.append("\n")
        emit_text("".join(parts))
    else:
        s = summary["summary"]
        rows = [[name, f"{c['rho']:+.4f}", f"{c['p']:.3g}",
                 str(c["locations"])]
                for name, c in sorted(s["correlations"].items())]
        emit_text(figures.table_text(
            ["metric", "spearman_rho", "p", "locations"], rows,
            title=f"Force sensitivity vs test metrics, face {s['face']}"))
        emit_grid(s["delta"], "delta.pgm",
                  f"face {s['face']} force sensitivity")
    return written
