"""Plain-text figure and table export for study reports.

Figures are P2 (ASCII) graymaps so reports stay dependency-free and
byte-reproducible; tables are fixed-width text in the layout of the
per-face results table.
"""

import numpy as np

from .errors import UsageError


def heatmap_to_pgm(values: np.ndarray, comment: str = "", maxval: int = 255,
                   scale_max: float | None = None) -> str:
    """Render an (M, M) grid as a P2 graymap string.

    Rows follow the x axis, columns the y axis, matching the grid
    indexing. NaN cells render as 0. Intensities are scaled by
    scale_max (default: the grid's own maximum) so 255 = strongest.
    """
    grid = np.asarray(values, dtype=float)
    if grid.ndim != 2:
        raise UsageError("expected a 2-D grid")
    clean = np.where(np.isfinite(grid), grid, 0.0)
    clean = np.maximum(clean, 0.0)
    top = scale_max if scale_max is not None else (clean.max() if clean.max() > 0 else 1.0)
    if top <= 0:
        top = 1.0
    pixels = np.rint(np.clip(clean / top, 0.0, 1.0) * maxval).astype(int)
    lines = ["P2"]
    if comment:
        lines.append(f"# {comment}")
    lines.append(f"{grid.shape[1]} {grid.shape[0]}")
    lines.append(str(maxval))
    for row in pixels:
        lines.append(" ".join(str(v) for v in row))
    return "\n".join(lines) + "\n"


def write_pgm(values: np.ndarray, path: str, comment: str = "",
              scale_max: float | None = None) -> None:
    with open(path, "w") as fh:
        fh.write(heatmap_to_pgm(values, comment=comment, scale_max=scale_max))


def _fmt(v, spec=".4f"):
    if v is None:
        return "-"
    fv = float(v)
    return format(fv, spec) if np.isfinite(fv) else "-"


def table_text(headers: list[str], rows: list[list[str]], title: str = "") -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    out = []
    if title:
        out.append(title)
    out.append("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    out.append("  ".join("-" * w for w in widths))
    for r in rows:
        out.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(out) + "\n"


def face_table_text(summaries: dict, title: str = "Per-face test metrics") -> str:
    """Table-layout text from {face: summary dict} mappings."""
    headers = ["face", "A_sim", "E_loc px (x, y)", "E_f % (N)", "A_non", "samples"]
    rows = []
    for face in sorted(summaries):
        s = summaries[face]
        rows.append([
            str(face),
            _fmt(s["a_sim"]),
            f"{_fmt(s['e_loc'])} ({_fmt(s['e_loc_x'])}, {_fmt(s['e_loc_y'])})",
            f"{_fmt(s['e_f_pct'], '.2f')} ({_fmt(s['e_f_newton'], '.3f')}N)",
            _fmt(s["a_non"], ".3f"),
            str(s["n_samples"]),
        ])
    return table_text(headers, rows, title=title)


def keyed_table_text(summaries: dict, key_header: str, title: str) -> str:
    """Same layout keyed by an arbitrary label (bin, factor, split)."""
    headers = [key_header, "A_sim", "E_loc px", "E_f % (N)", "A_non", "samples"]
    rows = []
    for label in summaries:
        s = summaries[label]
        rows.append([
            str(label),
            _fmt(s["a_sim"]),
            _fmt(s["e_loc"]),
            f"{_fmt(s['e_f_pct'], '.2f')} ({_fmt(s['e_f_newton'], '.3f')}N)",
            _fmt(s["a_non"], ".3f"),
            str(s["n_samples"]),
        ])
    return table_text(headers, rows, title=title)
