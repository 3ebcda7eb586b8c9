"""Readers for the sweep-result file formats this package consumes.

Two formats, both produced by the simulation driver and treated here as
frozen external contracts:

* results CSV -- one row per grid point, columns
  method, n, spacing, rabi, detuning, seed, epsilon, p1_bar, p1_bar_se,
  p2_bar, ratio, excited, n_realizations, std
  (empty string = not applicable). Steady-state rows have p1_bar/p2_bar;
  disorder rows have method == "disorder" plus mean (in p1_bar), std and
  n_realizations.
* far-field map grid text -- '#' comment lines, one '# meta: {json}' line,
  then three columns "theta phi intensity" forming a dense grid with theta
  as the outer loop.

This module only parses and validates; it contains no physics constants and
never recomputes simulation results.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = ["InputError", "SweepRow", "FarFieldMap", "read_rows", "read_map"]

_COLUMNS = [
    "method", "n", "spacing", "rabi", "detuning", "seed", "epsilon",
    "p1_bar", "p1_bar_se", "p2_bar", "ratio", "excited",
    "n_realizations", "std",
]


class InputError(ValueError):
    """An input file is missing, malformed, or from the wrong parameter point."""


@dataclass(frozen=True)
class SweepRow:
    """One grid point of a persisted sweep, as projected into the CSV."""

    method: str
    n: int
    spacing: Optional[float]
    rabi: float
    detuning: float
    seed: Optional[int]
    epsilon: Optional[float]
    p1_bar: float
    p1_bar_se: Optional[float]
    p2_bar: Optional[float]
    ratio: Optional[float]
    excited: Optional[float]
    n_realizations: Optional[int]
    std: Optional[float]
    source: str  # file the row came from, for error messages and legends


def _opt_float(text: str) -> Optional[float]:
    return float(text) if text != "" else None


def _opt_int(text: str) -> Optional[int]:
    return int(text) if text != "" else None


def read_rows(path: str) -> list:
    """Parse one results CSV; raises InputError on wrong shape or no rows."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read input file {path!r}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != _COLUMNS:
            raise InputError(
                f"{path!r} is not a results CSV: expected columns {_COLUMNS}, "
                f"got {reader.fieldnames}"
            )
        rows = []
        for i, raw in enumerate(reader, start=2):
            try:
                rows.append(SweepRow(
                    method=raw["method"],
                    n=int(raw["n"]),
                    spacing=_opt_float(raw["spacing"]),
                    rabi=float(raw["rabi"]),
                    detuning=float(raw["detuning"]),
                    seed=_opt_int(raw["seed"]),
                    epsilon=_opt_float(raw["epsilon"]),
                    p1_bar=float(raw["p1_bar"]),
                    p1_bar_se=_opt_float(raw["p1_bar_se"]),
                    p2_bar=_opt_float(raw["p2_bar"]),
                    ratio=_opt_float(raw["ratio"]),
                    excited=_opt_float(raw["excited"]),
                    n_realizations=_opt_int(raw["n_realizations"]),
                    std=_opt_float(raw["std"]),
                    source=path,
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise InputError(f"{path!r} line {i}: bad row ({exc})") from None
    if not rows:
        raise InputError(f"{path!r} contains no data rows")
    return rows


@dataclass(frozen=True)
class FarFieldMap:
    """Dense far-field intensity grid with its embedded run metadata."""

    theta: np.ndarray  # (n_theta,) radians, polar angle from +z
    phi: np.ndarray  # (n_phi,) radians, azimuth from +x
    intensity: np.ndarray  # (n_phi, n_theta)
    meta: dict
    source: str


def read_map(path: str) -> FarFieldMap:
    """Parse one far-field grid-text file; raises InputError when malformed."""
    meta: dict = {}
    rows = []
    try:
        fh = open(path)
    except OSError as exc:
        raise InputError(f"cannot read input file {path!r}: {exc}") from None
    with fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if body.startswith("meta:"):
                    try:
                        meta = json.loads(body[len("meta:"):].strip())
                    except json.JSONDecodeError as exc:
                        raise InputError(f"{path!r}: bad meta line ({exc})") from None
                continue
            parts = line.split()
            if len(parts) != 3:
                raise InputError(f"{path!r}: expected 3 columns, got {line!r}")
            rows.append([float(p) for p in parts])
    if not rows:
        raise InputError(f"{path!r} contains no data rows")
    data = np.asarray(rows)
    theta = np.unique(data[:, 0])
    phi = np.unique(data[:, 1])
    if theta.size * phi.size != data.shape[0]:
        raise InputError(f"{path!r} is not a dense (theta, phi) grid")
    intensity = np.full((phi.size, theta.size), np.nan)
    ti = np.searchsorted(theta, data[:, 0])
    pi = np.searchsorted(phi, data[:, 1])
    intensity[pi, ti] = data[:, 2]
    if np.isnan(intensity).any():
        raise InputError(f"{path!r} is not a dense (theta, phi) grid")
    return FarFieldMap(theta=theta, phi=phi, intensity=intensity, meta=meta, source=path)
