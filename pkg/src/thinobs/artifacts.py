"""Plain-text and binary artifact writers with fixed schemas."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

import numpy as np

from .frequency import DecayFit, FrequencyProfile
from .grid import Grid, GridFunction

PROFILE_HEADER = ("r", "F", "G", "branch", "Phi", "d_r")
FITS_HEADER = ("name", "exponent", "constant", "residual", "r_lo", "r_hi")


def _num(x: float) -> str:
    return repr(float(x))


def write_solution(path: Path, u: GridFunction, extra: dict | None = None) -> tuple[Path, Path]:
    """Row-major little-endian float64 dump plus a ``key = value`` sidecar."""
    path = Path(path)
    grid = u.grid
    u.values.astype("<f8").tofile(path)
    side = path.with_suffix(".txt")
    lines = [
        f"dims = {' '.join(str(s) for s in grid.shape)}",
        f"n = {grid.n}",
        f"h = {_num(grid.h)}",
        f"L = {_num(grid.L)}",
        "dtype = float64 little-endian row-major",
    ]
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    side.write_text("\n".join(lines) + "\n")
    return path, side


def read_solution(path: Path) -> GridFunction:
    path = Path(path)
    meta = {}
    for line in path.with_suffix(".txt").read_text().splitlines():
        k, _, v = line.partition("=")
        meta[k.strip()] = v.strip()
    dims = [int(s) for s in meta["dims"].split()]
    grid = Grid(int(meta["n"]), float(meta["L"]), dims[0])
    vals = np.fromfile(path, dtype="<f8")
    if vals.size != grid.size:
        raise ValueError(f"{path}: {vals.size} values, sidecar says {grid.size}")
    return GridFunction(grid, vals)


def write_profile(path: Path, profile: FrequencyProfile) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_HEADER)
        for r, F, G, b, phi, d in zip(profile.r, profile.F, profile.G, profile.branch, profile.phi, profile.d):
            w.writerow([_num(r), _num(F), _num(G), b, _num(phi), _num(d)])
    return Path(path)


def write_fits(path: Path, fits: Iterable[DecayFit]) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FITS_HEADER)
        for f in fits:
            w.writerow([f.name, _num(f.exponent), _num(f.constant), _num(f.residual), _num(f.r_lo), _num(f.r_hi)])
    return Path(path)


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
