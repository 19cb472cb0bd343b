"""File outputs: CSV tables, little-endian PFM float images and 8-bit PNG
colormap panels with an explicit value-range sidecar."""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .run import FieldGrid

__all__ = [
    "FIELD_CSV_HEADER", "CONVERGENCE_CSV_HEADER", "COMPARE_CSV_HEADER",
    "write_field_csv", "write_convergence_csv", "write_compare_csv",
    "write_pfm", "read_pfm", "write_png", "write_outputs",
]

FIELD_CSV_HEADER = "px,py,pz,mean,var,n,grad_x,grad_y,grad_z,ref,abs_err"
CONVERGENCE_CSV_HEADER = "formulation,M,N,rmse,wall_time,rays"
COMPARE_CSV_HEADER = "method,param,N,rmse,wall_time,rays"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_field_csv(path: str | Path, grid: FieldGrid) -> Path:
    path = Path(path)
    lines = [FIELD_CSV_HEADER]
    P = grid.points.shape[0]
    grad = grid.grad if grid.grad is not None else np.full((P, 3), np.nan)
    ref = grid.ref if grid.ref is not None else np.full(P, np.nan)
    err = grid.abs_err if grid.abs_err is not None else np.full(P, np.nan)
    for i in range(P):
        row = [grid.points[i, 0], grid.points[i, 1], grid.points[i, 2],
               grid.mean[i], grid.var[i], grid.n,
               grad[i, 0], grad[i, 1], grad[i, 2], ref[i], err[i]]
        lines.append(",".join(_fmt(v) if j != 5 else str(int(v))
                              for j, v in enumerate(row)))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_convergence_csv(path: str | Path, rows: Sequence[dict]) -> Path:
    path = Path(path)
    lines = [CONVERGENCE_CSV_HEADER]
    for r in rows:
        lines.append(",".join([str(r["formulation"]), str(int(r["M"])),
                               str(int(r["N"])), _fmt(r["rmse"]),
                               _fmt(r["wall_time"]), str(int(r["rays"]))]))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_compare_csv(path: str | Path, rows: Sequence[dict]) -> Path:
    path = Path(path)
    lines = [COMPARE_CSV_HEADER]
    for r in rows:
        lines.append(",".join([str(r["method"]), _fmt(r["param"]),
                               str(int(r["N"])), _fmt(r["rmse"]),
                               _fmt(r["wall_time"]), str(int(r["rays"]))]))
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------------------
# PFM (float image, little-endian, bottom-up scanlines)
# ---------------------------------------------------------------------------


def write_pfm(path: str | Path, img: np.ndarray) -> Path:
    path = Path(path)
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 2:
        raise ValueError("PFM writer expects a 2D grayscale image")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")  # negative scale marks little-endian
        f.write(img[::-1].astype("<f4").tobytes())
    return path


def read_pfm(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.readline().strip() != b"Pf":
            raise ValueError("not a grayscale PFM file")
        w, h = (int(v) for v in f.readline().split())
        scale = float(f.readline())
        data = np.frombuffer(f.read(w * h * 4),
                             dtype="<f4" if scale < 0 else ">f4")
    return data.reshape(h, w)[::-1].copy()


# ---------------------------------------------------------------------------
# PNG colormap panel
# ---------------------------------------------------------------------------

# fixed diverging blue-white-red map
_CMAP_STOPS = np.array([
    [0.0, 59, 76, 192],
    [0.5, 255, 255, 255],
    [1.0, 180, 4, 38],
])


def _colormap(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    rgb = np.empty(t.shape + (3,), dtype=np.float64)
    for lo, hi in zip(_CMAP_STOPS[:-1], _CMAP_STOPS[1:]):
        sel = (t >= lo[0]) & (t <= hi[0])
        f = np.zeros_like(t)
        span = hi[0] - lo[0]
        f[sel] = (t[sel] - lo[0]) / span
        for c in range(3):
            rgb[sel, c] = lo[1 + c] + (hi[1 + c] - lo[1 + c]) * f[sel]
    return rgb.astype(np.uint8)


def write_png(path: str | Path, img: np.ndarray,
              range_mode: str = "symmetric",
              vmin: Optional[float] = None,
              vmax: Optional[float] = None,
              scale: int = 1) -> tuple[Path, Path]:
    """Colormapped 8-bit PNG plus a sidecar recording the value range.

    range_mode 'symmetric' centers the map on zero; 'minmax' stretches to
    the data extrema.  NaN cells render gray.  Returns (png, sidecar)."""
    path = Path(path)
    img = np.asarray(img, dtype=np.float64)
    finite = np.isfinite(img)
    data_min = float(np.nanmin(img)) if finite.any() else 0.0
    data_max = float(np.nanmax(img)) if finite.any() else 0.0
    if vmin is None or vmax is None:
        if range_mode == "symmetric":
            a = max(abs(data_min), abs(data_max))
            vmin, vmax = -a, a
        elif range_mode == "minmax":
            vmin, vmax = data_min, data_max
        else:
            raise ValueError(f"unknown range_mode {range_mode!r}")
    if vmax <= vmin:
        vmax = vmin + 1.0
    t = (img - vmin) / (vmax - vmin)
    rgb = _colormap(np.where(finite, t, 0.5))
    rgb[~finite] = (128, 128, 128)
    if scale > 1:
        rgb = np.repeat(np.repeat(rgb, scale, axis=0), scale, axis=1)
    Image.fromarray(rgb[::-1], mode="RGB").save(path)
    sidecar = path.with_suffix(path.suffix + ".range.txt")
    sidecar.write_text(
        f"min={_fmt(vmin)}\nmax={_fmt(vmax)}\n"
        f"data_min={_fmt(data_min)}\ndata_max={_fmt(data_max)}\n")
    return path, sidecar


def write_outputs(grid: FieldGrid, out_dir: str | Path,
                  formats: Sequence[str] = ("csv", "pfm", "png"),
                  basename: str = "field") -> list[Path]:
    """Write a field grid in the requested formats into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if "csv" in formats:
        written.append(write_field_csv(out_dir / f"{basename}.csv", grid))
    wants_image = ("pfm" in formats) or ("png" in formats)
    if wants_image and grid.grid_shape is not None:
        img = grid.raster()
        if "pfm" in formats:
            written.append(write_pfm(out_dir / f"{basename}.pfm", img))
        if "png" in formats:
            png, sidecar = write_png(out_dir / f"{basename}.png", img)
            written += [png, sidecar]
    return written
