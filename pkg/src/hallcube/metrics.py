"""Heatmap evaluation metrics and hull-based force sensitivity.

Four per-sample measures mirror the evaluation protocol: template
similarity (max ZNCC over integer displacements), localization error
(the displacement of that maximum), force error at ground-truth contact
pixels (percent of the per-location force range, and newtons), and
binary non-contact accuracy. All heatmaps entering this module are in
newtons; normalization belongs to the training pipeline.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, UsageError
from .heatmap import classify_non_contact_batch
from .hullvol import convex_hull_volume

# search windows narrower than this many pixels are skipped
MIN_OVERLAP_PX = 4

METRIC_FIELDS = ("a_sim", "e_loc", "e_loc_x", "e_loc_y", "e_f_pct", "e_f_newton")

_DISP_CACHE: dict[int, list[tuple[int, int]]] = {}


def search_displacements(grid_size: int) -> list[tuple[int, int]]:
    """All integer displacements, nearest first, then lexicographic.

    Scanning in this order with a strict best-so-far comparison breaks
    ZNCC ties toward the smaller displacement deterministically.
    """
    if grid_size not in _DISP_CACHE:
        disps = [(dx, dy)
                 for dx in range(-(grid_size - 1), grid_size)
                 for dy in range(-(grid_size - 1), grid_size)]
        disps.sort(key=lambda t: (t[0] * t[0] + t[1] * t[1], t[0], t[1]))
        _DISP_CACHE[grid_size] = disps
    return _DISP_CACHE[grid_size]


def _overlap_slices(m: int, dx: int, dy: int):
    x0, x1 = max(0, -dx), m - max(0, dx)
    y0, y1 = max(0, -dy), m - max(0, dy)
    gt_sl = (slice(x0, x1), slice(y0, y1))
    pred_sl = (slice(x0 + dx, x1 + dx), slice(y0 + dy, y1 + dy))
    return gt_sl, pred_sl, (x1 - x0) * (y1 - y0)


def zncc_at(pred: np.ndarray, gt: np.ndarray, displacement: tuple[int, int]) -> float:
    """ZNCC of gt against pred shifted by (dx, dy), on the overlap.

    Returns nan when the overlap is empty or either side is constant
    there; callers decide how to treat the undefined case.
    """
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    m = gt.shape[0]
    dx, dy = displacement
    gt_sl, pred_sl, area = _overlap_slices(m, dx, dy)
    if area <= 0:
        return float("nan")
    g = gt[gt_sl]
    p = pred[pred_sl]
    dg = g - g.mean()
    dp = p - p.mean()
    denom = np.sqrt(np.sum(dg * dg) * np.sum(dp * dp))
    if denom == 0.0:
        return float("nan")
    return float(np.sum(dg * dp) / denom)


def match(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float, float, float]:
    """(A_sim, E_loc_x, E_loc_y, E_loc) for one contact heatmap pair."""
    a, ex, ey, el = match_batch(pred[None], gt[None])
    return float(a[0]), float(ex[0]), float(ey[0]), float(el[0])


def match_batch(preds: np.ndarray, gts: np.ndarray):
    """Vectorized max-ZNCC search over (n, M, M) heatmap stacks.

    Constant predictions never produce a defined window; those samples
    fall back to A_sim = 0 with the maximum displacement, penalizing
    degenerate outputs instead of crashing on them.
    """
    preds = np.asarray(preds, dtype=float)
    gts = np.asarray(gts, dtype=float)
    if preds.shape != gts.shape or preds.ndim != 3:
        raise UsageError("expected matching (n, M, M) stacks")
    n, m, _ = gts.shape
    if not np.all(np.any(gts > 0, axis=(1, 2))):
        raise DomainError("every ground truth must contain a contact pixel")

    best_r = np.full(n, -np.inf)
    best_dx = np.zeros(n, dtype=np.int64)
    best_dy = np.zeros(n, dtype=np.int64)
    for dx, dy in search_displacements(m):
        gt_sl, pred_sl, area = _overlap_slices(m, dx, dy)
        if area < MIN_OVERLAP_PX:
            continue
        g = gts[(slice(None),) + gt_sl]
        p = preds[(slice(None),) + pred_sl]
        dg = g - g.mean(axis=(1, 2), keepdims=True)
        dp = p - p.mean(axis=(1, 2), keepdims=True)
        denom = np.sqrt(np.sum(dg * dg, axis=(1, 2)) * np.sum(dp * dp, axis=(1, 2)))
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.sum(dg * dp, axis=(1, 2)) / denom
        better = (denom > 0.0) & (r > best_r)
        best_r[better] = r[better]
        best_dx[better] = dx
        best_dy[better] = dy

    none = ~np.isfinite(best_r)
    a_sim = np.where(none, 0.0, best_r)
    ex = np.where(none, m - 1, np.abs(best_dx)).astype(float)
    ey = np.where(none, m - 1, np.abs(best_dy)).astype(float)
    return a_sim, ex, ey, np.hypot(ex, ey)


def _ranges_from_map(range_map: np.ndarray, m: int) -> np.ndarray:
    range_map = np.asarray(range_map, dtype=float)
    if range_map.shape != (m, m, 2):
        raise ConfigurationError(f"range map must be ({m}, {m}, 2)")
    spans = range_map[:, :, 1] - range_map[:, :, 0]
    if not np.all(np.isfinite(spans)) or np.any(spans <= 0):
        raise ConfigurationError("force range missing or empty at some location")
    return spans


def force_error(pred: np.ndarray, gt: np.ndarray,
                range_map: np.ndarray) -> tuple[float, float]:
    """(percent of location range, newtons), averaged over contact pixels."""
    pct, newton = force_error_batch(pred[None], gt[None], range_map)
    return float(pct[0]), float(newton[0])


def force_error_batch(preds: np.ndarray, gts: np.ndarray, range_map: np.ndarray):
    preds = np.asarray(preds, dtype=float)
    gts = np.asarray(gts, dtype=float)
    if preds.shape != gts.shape or preds.ndim != 3:
        raise UsageError("expected matching (n, M, M) stacks")
    m = gts.shape[1]
    spans = _ranges_from_map(range_map, m)
    mask = gts > 0
    counts = mask.sum(axis=(1, 2))
    if np.any(counts == 0):
        raise DomainError("every ground truth must contain a contact pixel")
    err = np.abs(preds - gts) * mask
    newton = err.sum(axis=(1, 2)) / counts
    pct = (err / spans * 100.0).sum(axis=(1, 2)) / counts
    return pct, newton


def non_contact_accuracy(preds: np.ndarray, threshold: float) -> float:
    """Fraction of predictions classified non-contact."""
    preds = np.asarray(preds, dtype=float)
    if preds.ndim != 3 or preds.shape[0] == 0:
        raise UsageError("expected a non-empty (n, M, M) stack")
    return float(np.mean(classify_non_contact_batch(preds, threshold)))


def force_sensitivity(signals: np.ndarray, forces: np.ndarray,
                      n_rays: int = 512, seed: int = 0) -> float:
    """delta = hull volume of the signal cloud / force range of the sweep."""
    signals = np.asarray(signals, dtype=float)
    forces = np.asarray(forces, dtype=float)
    if signals.ndim != 2 or signals.shape[0] < 10:
        raise DomainError("need at least 10 sweep records")
    span = float(forces.max() - forces.min())
    if span <= 0:
        raise DomainError("sweep has no force range")
    return convex_hull_volume(signals, n_rays=n_rays, seed=seed) / span


@dataclass
class SampleMetrics:
    """One evaluated sample; non-contact samples carry nan metric fields."""
    face: int
    case_id: str
    sample: int
    probe: int  # ground-truth contact count, 0 for non-contact
    location: tuple[int, int]  # first contact pixel, (0, 0) when none
    a_sim: float
    e_loc_x: float
    e_loc_y: float
    e_loc: float
    e_f_pct: float
    e_f_newton: float
    non_contact_ok: bool | None = None


@dataclass
class GroupStats:
    count: int
    mean: dict[str, float]
    p10: dict[str, float]
    p50: dict[str, float]
    p90: dict[str, float]
    a_non: float  # nan when the group has no non-contact records


@dataclass
class MetricsReport:
    grid_size: int
    n_samples: int
    n_contact: int
    n_non_contact: int
    a_sim: float
    e_loc: float
    e_loc_x: float
    e_loc_y: float
    e_f_pct: float
    e_f_newton: float
    a_non: float
    samples: list[SampleMetrics] = field(repr=False)
    loc_counts: np.ndarray = field(repr=False)
    loc_a_sim: np.ndarray = field(repr=False)
    loc_e_loc: np.ndarray = field(repr=False)
    loc_e_f_pct: np.ndarray = field(repr=False)
    loc_e_f_newton: np.ndarray = field(repr=False)

    def summary_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "n_contact": self.n_contact,
            "n_non_contact": self.n_non_contact,
            "a_sim": self.a_sim,
            "e_loc": self.e_loc,
            "e_loc_x": self.e_loc_x,
            "e_loc_y": self.e_loc_y,
            "e_f_pct": self.e_f_pct,
            "e_f_newton": self.e_f_newton,
            "a_non": self.a_non,
        }


@dataclass
class SensitivityMap:
    """Per-location force sensitivity for one face."""
    face: int
    delta: np.ndarray  # (M, M), nan where no sweep exists

    def __post_init__(self):
        finite = self.delta[np.isfinite(self.delta)]
        if finite.size and finite.min() < 0:
            raise DomainError("sensitivity must be non-negative")


def evaluate(preds: np.ndarray, gts: np.ndarray, range_map: np.ndarray,
             threshold: float, face: int = 1,
             case_ids: np.ndarray | None = None,
             samples: np.ndarray | None = None) -> MetricsReport:
    """Score newton-valued predictions against ground-truth heatmaps.

    Contact samples get similarity, localization, and force errors;
    non-contact samples only contribute to A_non, per the metric
    definitions. Location grids average single-contact samples.
    """
    preds = np.asarray(preds, dtype=float)
    gts = np.asarray(gts, dtype=float)
    if preds.shape != gts.shape or preds.ndim != 3:
        raise UsageError("expected matching (n, M, M) stacks")
    n, m, _ = gts.shape
    if n == 0:
        raise UsageError("no samples to evaluate")
    if case_ids is None:
        case_ids = np.full(n, "", dtype="U16")
    if samples is None:
        samples = np.arange(n, dtype=np.int64)

    contact = np.any(gts > 0, axis=(1, 2))
    idx_c = np.nonzero(contact)[0]
    idx_n = np.nonzero(~contact)[0]

    records: list[SampleMetrics | None] = [None] * n
    if idx_c.size:
        a_sim, ex, ey, el = match_batch(preds[idx_c], gts[idx_c])
        pct, newton = force_error_batch(preds[idx_c], gts[idx_c], range_map)
        for k, i in enumerate(idx_c):
            xs, ys = np.nonzero(gts[i] > 0)
            records[i] = SampleMetrics(
                face=face, case_id=str(case_ids[i]), sample=int(samples[i]),
                probe=int(xs.size), location=(int(xs[0]) + 1, int(ys[0]) + 1),
                a_sim=float(a_sim[k]), e_loc_x=float(ex[k]), e_loc_y=float(ey[k]),
                e_loc=float(el[k]), e_f_pct=float(pct[k]),
                e_f_newton=float(newton[k]))
    if idx_n.size:
        ok = classify_non_contact_batch(preds[idx_n], threshold)
        for k, i in enumerate(idx_n):
            records[i] = SampleMetrics(
                face=face, case_id=str(case_ids[i]), sample=int(samples[i]),
                probe=0, location=(0, 0), a_sim=float("nan"),
                e_loc_x=float("nan"), e_loc_y=float("nan"), e_loc=float("nan"),
                e_f_pct=float("nan"), e_f_newton=float("nan"),
                non_contact_ok=bool(ok[k]))
    return report_from_samples(records, grid_size=m)


def report_from_samples(records: list[SampleMetrics], grid_size: int) -> MetricsReport:
    if not records:
        raise UsageError("no samples to evaluate")
    contact = [r for r in records if r.probe > 0]
    non = [r for r in records if r.probe == 0]

    def avg(vals):
        return float(np.mean(vals)) if len(vals) else float("nan")

    grids = {name: np.full((grid_size, grid_size), np.nan)
             for name in ("a_sim", "e_loc", "e_f_pct", "e_f_newton")}
    counts = np.zeros((grid_size, grid_size), dtype=np.int64)
    singles = [r for r in contact if r.probe == 1]
    for x in range(1, grid_size + 1):
        for y in range(1, grid_size + 1):
            here = [r for r in singles if r.location == (x, y)]
            counts[x - 1, y - 1] = len(here)
            if here:
                for name in grids:
                    grids[name][x - 1, y - 1] = avg([getattr(r, name) for r in here])

    return MetricsReport(
        grid_size=grid_size,
        n_samples=len(records),
        n_contact=len(contact),
        n_non_contact=len(non),
        a_sim=avg([r.a_sim for r in contact]),
        e_loc=avg([r.e_loc for r in contact]),
        e_loc_x=avg([r.e_loc_x for r in contact]),
        e_loc_y=avg([r.e_loc_y for r in contact]),
        e_f_pct=avg([r.e_f_pct for r in contact]),
        e_f_newton=avg([r.e_f_newton for r in contact]),
        a_non=avg([1.0 if r.non_contact_ok else 0.0 for r in non]),
        samples=records,
        loc_counts=counts,
        loc_a_sim=grids["a_sim"],
        loc_e_loc=grids["e_loc"],
        loc_e_f_pct=grids["e_f_pct"],
        loc_e_f_newton=grids["e_f_newton"],
    )


_GROUP_KEYS = ("face", "location", "probe", "case_id")


def aggregate(records: list[SampleMetrics], key) -> dict:
    """Group records and reduce each metric to mean and P10/50/90.

    key is one of the record fields face, location, probe, case_id, or
    an explicit sequence of labels aligned with the records (used for
    force bins and downsample factors).
    """
    if not records:
        raise UsageError("no records to aggregate")
    if isinstance(key, str):
        if key not in _GROUP_KEYS:
            raise UsageError(f"unknown group key {key!r}; use one of {_GROUP_KEYS}")
        labels = [getattr(r, key) for r in records]
    else:
        labels = list(key)
        if len(labels) != len(records):
            raise UsageError("label sequence must align with records")

    out: dict = {}
    for label in sorted(set(labels), key=repr):
        group = [r for r, lab in zip(records, labels) if lab == label]
        stats = {}
        for name in METRIC_FIELDS:
            vals = np.array([getattr(r, name) for r in group], dtype=float)
            defined = vals[np.isfinite(vals)]
            if defined.size:
                q10, q50, q90 = np.percentile(defined, [10, 50, 90])
                stats[name] = (float(defined.mean()), float(q10), float(q50), float(q90))
            else:
                nan = float("nan")
                stats[name] = (nan, nan, nan, nan)
        non = [r for r in group if r.probe == 0]
        out[label] = GroupStats(
            count=len(group),
            mean={k: v[0] for k, v in stats.items()},
            p10={k: v[1] for k, v in stats.items()},
            p50={k: v[2] for k, v in stats.items()},
            p90={k: v[3] for k, v in stats.items()},
            a_non=float(np.mean([r.non_contact_ok for r in non])) if non else float("nan"),
        )
    return out


SAMPLE_CSV_HEADER = ("face,case_id,sample,probe,loc_x,loc_y,"
                     "a_sim,e_loc_x,e_loc_y,e_loc,e_f_pct,e_f_newton,non_contact_ok")


def samples_csv(report: MetricsReport) -> str:
    """Per-sample records as CSV; nan marks fields a sample does not have."""
    lines = [SAMPLE_CSV_HEADER]
    for r in report.samples:
        nc = "" if r.non_contact_ok is None else str(int(r.non_contact_ok))
        lines.append(
            f"{r.face},{r.case_id},{r.sample},{r.probe},{r.location[0]},"
            f"{r.location[1]},{r.a_sim:.6f},{r.e_loc_x:.6f},{r.e_loc_y:.6f},"
            f"{r.e_loc:.6f},{r.e_f_pct:.6f},{r.e_f_newton:.6f},{nc}")
    return "\n".join(lines) + "\n"
