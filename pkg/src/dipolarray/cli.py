"""Experiment driver: config parsing, dispatch, persistence, quick-look plots.

One entry point (console script ``dipolarray``) runs every computation the
library offers and owns all file formats:

* results file -- one JSON object per line.  The first line is a header
  carrying the fully resolved config, its hash, the code version, and the
  seed; every later line is either a steady-state record (see
  observables.ResultRecord) or a disorder sweep (key "sweep").  Grid points
  appear in grid order regardless of how they were computed.
* companion CSV projection (same stem, ``.csv``) -- one row per grid point
  with the scalar columns only, for plotting tools.
* optional far-field maps (``<stem>_ff_n{N}_d{d}.dat``) in the dense grid
  text format of observables.save_intensity_map.
* ``<stem>.summary.txt`` -- the human-readable run summary (also printed).

Config files are INI (configparser) with sections [run], [disorder],
[farfield]; every key has a CLI flag of the same meaning that overrides it.
Grids are comma lists ("10,25,50") or colon ranges ("0.6:3.2:0.01",
inclusive of the endpoint up to float fuzz).

Each grid point derives its own seed from the master seed and the point's
content (method, n, d, epsilon), so a point's result does not depend on
which other points run, in which order, or on how many workers
(DIPOLARRAY_WORKERS, default sequential).  Reruns with --resume keep
finished points, compute only missing ones, and refuse to touch a file
whose embedded config hash disagrees.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .disorder import DisorderSweepResult, disorder_average
from .geometry import DisorderSpec, linear_chain
from .levels import DriveParams
from .meanfield import identical_atom_sweep, mf_steady_state
from .observables import (
    ResultRecord,
    intensity_map,
    populations,
    save_intensity_map,
)
from .qmcw import exact_master_equation, qmcw_steady_state

__all__ = [
    "ConfigError",
    "RunConfig",
    "DisorderConfig",
    "FarFieldConfig",
    "load_config",
    "run",
    "sweep",
    "main",
]

METHODS = ("meanfield", "qmcw", "exact", "identical-atom")
WORKERS_ENV = "DIPOLARRAY_WORKERS"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


class ConfigError(ValueError):
    """Invalid run configuration; carries the offending field's name."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DisorderConfig:
    epsilons: tuple
    n_realizations: int = 500

    def validate(self) -> None:
        if not self.epsilons:
            raise ConfigError("disorder.epsilon", "grid must not be empty")
        if any(e < 0 for e in self.epsilons):
            raise ConfigError("disorder.epsilon", "strengths must be >= 0")
        if self.n_realizations < 1:
            raise ConfigError("disorder.n_realizations", "must be >= 1")


@dataclass(frozen=True)
class FarFieldConfig:
    n_phi: int = 361
    n_theta: int = 181

    def validate(self) -> None:
        if self.n_phi < 2:
            raise ConfigError("farfield.n_phi", "must be >= 2")
        if self.n_theta < 2:
            raise ConfigError("farfield.n_theta", "must be >= 2")


@dataclass(frozen=True)
class RunConfig:
    """Everything one invocation computes; validated before any compute."""

    method: str = "meanfield"
    n_values: tuple = (10,)
    d_values: tuple = (2.0,)
    rabi: float = 0.01
    detuning: float = 0.0
    max_excitations: int = 1
    n_traj: int = 2400
    seed: int = 0
    out: str = "results.jsonl"
    disorder: Optional[DisorderConfig] = None
    far_field: Optional[FarFieldConfig] = None

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError("method", f"unknown method {self.method!r}; choose from {METHODS}")
        if not self.n_values:
            raise ConfigError("n", "grid must not be empty")
        if any(int(n) < 1 for n in self.n_values):
            raise ConfigError("n", "atom numbers must be >= 1")
        if not self.d_values:
            raise ConfigError("d", "grid must not be empty")
        if any(not d > 0 for d in self.d_values):
            raise ConfigError("d", "spacings must be positive (wavelengths)")
        if not self.rabi > 0:
            raise ConfigError("omega", "drive must be positive for steady-state pumping")
        if not math.isfinite(self.detuning):
            raise ConfigError("delta", "detuning must be finite")
        if self.max_excitations < 1:
            raise ConfigError("max-exc", "must be >= 1")
        if self.n_traj < 2:
            raise ConfigError("n-traj", "need at least two trajectories")
        if self.seed < 0:
            raise ConfigError("seed", "must be a nonnegative integer")
        if not self.out:
            raise ConfigError("out", "output path must not be empty")
        if self.disorder is not None:
            self.disorder.validate()
            if self.method != "meanfield":
                raise ConfigError("disorder", "disorder ensembles run the meanfield method only")
        if self.far_field is not None:
            self.far_field.validate()
            if self.method == "identical-atom":
                raise ConfigError("farfield", "identical-atom reduction has no far-field geometry")
            if self.disorder is not None:
                raise ConfigError(
                    "farfield",
                    "far-field maps describe a single geometry; drop the [disorder] section",
                )
        if self.method in ("qmcw", "exact") and max(self.n_values) > 200:
            raise ConfigError("n", f"{self.method} is limited to small arrays (n <= 200)")

    def drive(self) -> DriveParams:
        return DriveParams(rabi=self.rabi, detuning=self.detuning)

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "n_values": [int(v) for v in self.n_values],
            "d_values": [float(v) for v in self.d_values],
            "rabi": self.rabi,
            "detuning": self.detuning,
            "max_excitations": self.max_excitations,
            "n_traj": self.n_traj,
            "seed": self.seed,
        }
        if self.disorder is not None:
            out["disorder"] = {
                "epsilons": list(self.disorder.epsilons),
                "n_realizations": self.disorder.n_realizations,
            }
        if self.far_field is not None:
            out["farfield"] = {
                "n_phi": self.far_field.n_phi,
                "n_theta": self.far_field.n_theta,
            }
        return out

    def config_hash(self) -> str:
        # the output path is deliberately not part of the identity
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _parse_grid(text: str, kind, name: str) -> tuple:
    """Comma list or colon range (start:stop:step, stop included up to fuzz)."""
    text = text.strip()
    if not text:
        raise ConfigError(name, "grid must not be empty")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(name, f"range syntax is start:stop:step, got {text!r}")
        try:
            start, stop, step = (float(p) for p in parts)
        except ValueError:
            raise ConfigError(name, f"could not parse range {text!r}") from None
        if step <= 0 or stop < start:
            raise ConfigError(name, "range needs step > 0 and stop >= start")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        vals = [start + i * step for i in range(count)]
    else:
        try:
            vals = [float(tok) for tok in text.split(",") if tok.strip()]
        except ValueError:
            raise ConfigError(name, f"could not parse list {text!r}") from None
    if kind is int:
        out = []
        for v in vals:
            if abs(v - round(v)) > 1e-9:
                raise ConfigError(name, f"expected integers, got {v!r}")
            out.append(int(round(v)))
        return tuple(out)
    return tuple(float(v) for v in vals)


_RUN_KEYS = {
    "method", "n", "d", "omega", "delta", "max_exc", "n_traj", "seed", "out",
}


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Build a RunConfig from an INI file and/or flag overrides.

    `overrides` uses the flag names (method, n, d, omega, delta, max_exc,
    n_traj, seed, out) with string values for the grids; None entries are
    ignored.  Flags win over file keys.
    """
    raw: dict = {}
    disorder_raw: dict = {}
    farfield_raw: dict = {}
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError("config", f"cannot read config file {path!r}")
        if parser.has_section("run"):
            for key, val in parser.items("run"):
                key = key.replace("-", "_")
                if key not in _RUN_KEYS:
                    raise ConfigError(f"run.{key}", "unknown key")
                raw[key] = val
        if parser.has_section("disorder"):
            disorder_raw = dict(parser.items("disorder"))
        if parser.has_section("farfield"):
            farfield_raw = dict(parser.items("farfield"))
        known = {"run", "disorder", "farfield", "DEFAULT"}
        extra = set(parser.sections()) - known
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown config section")
    for key, val in (overrides or {}).items():
        if val is not None:
            raw[key] = val

    def grab(key, default, convert):
        val = raw.get(key)
        if val is None:
            return default
        try:
            return convert(val)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, str(exc)) from None

    disorder = None
    if disorder_raw:
        try:
            eps = _parse_grid(str(disorder_raw.get("epsilon", "")), float, "disorder.epsilon")
            n_real = int(disorder_raw.get("n_realizations", 500))
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError("disorder", str(exc)) from None
        disorder = DisorderConfig(epsilons=eps, n_realizations=n_real)

    far_field = None
    if farfield_raw:
        try:
            far_field = FarFieldConfig(
                n_phi=int(farfield_raw.get("n_phi", 361)),
                n_theta=int(farfield_raw.get("n_theta", 181)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError("farfield", str(exc)) from None

    return RunConfig(
        method=grab("method", "meanfield", lambda s: str(s).strip()),
        n_values=grab("n", (10,), lambda s: _parse_grid(str(s), int, "n")),
        d_values=grab("d", (2.0,), lambda s: _parse_grid(str(s), float, "d")),
        rabi=grab("omega", 0.01, float),
        detuning=grab("delta", 0.0, float),
        max_excitations=grab("max_exc", 1, int),
        n_traj=grab("n_traj", 2400, int),
        seed=grab("seed", 0, int),
        out=grab("out", "results.jsonl", str),
        disorder=disorder,
        far_field=far_field,
    )


# ---------------------------------------------------------------------------
# grid execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridPoint:
    method: str
    n: int
    d: float
    epsilon: Optional[float] = None

    def key(self) -> tuple:
        eps = None if self.epsilon is None else round(float(self.epsilon), 12)
        return (self.method, int(self.n), round(float(self.d), 12), eps)

    def label(self) -> str:
        bits = [f"{self.method} n={self.n} d={self.d:g}"]
        if self.epsilon is not None:
            bits.append(f"eps={self.epsilon:g}")
        return " ".join(bits)


def grid_points(config: RunConfig) -> list:
    """Grid order: d outer, then n, then (for disorder) epsilon."""
    points = []
    for d in config.d_values:
        for n in config.n_values:
            if config.disorder is not None:
                for eps in config.disorder.epsilons:
                    points.append(GridPoint("disorder", int(n), float(d), float(eps)))
            else:
                points.append(GridPoint(config.method, int(n), float(d)))
    return points


def derive_seed(master: int, point: GridPoint) -> int:
    """Content-keyed sub-seed: independent of grid shape, order, and workers."""
    blob = f"{master}|{point.method}|{point.n}|{point.d:.12g}|{point.epsilon}"
    return int.from_bytes(hashlib.blake2b(blob.encode(), digest_size=8).digest(), "big") >> 1


def _record_key(obj) -> tuple:
    if isinstance(obj, ResultRecord):
        eps = None if obj.epsilon is None else round(float(obj.epsilon), 12)
        return (obj.method, int(obj.n), round(float(obj.spacing), 12), eps)
    return ("disorder", int(obj.n), round(float(obj.spacing), 12), round(float(obj.epsilon), 12))


def compute_point(config: RunConfig, point: GridPoint):
    """Run one grid point; returns a ResultRecord or DisorderSweepResult."""
    drive = config.drive()
    sub_seed = derive_seed(config.seed, point)
    if point.method == "disorder":
        spec = DisorderSpec(
            epsilon=point.epsilon,
            n_realizations=config.disorder.n_realizations,
            seed=sub_seed,
        )
        return disorder_average(point.n, spec, drive, spacing=point.d)

    if point.method == "identical-atom":
        (result,) = identical_atom_sweep([point.n], point.d, drive)
        if not result.converged:
            raise RuntimeError(
                f"identical-atom solve did not converge (residual {result.residual:.2e})"
            )
        return populations(result, drive=drive)

    geometry = linear_chain(point.n, point.d)
    if point.method == "meanfield":
        report = mf_steady_state(geometry, drive=drive)
        if not report.converged:
            raise RuntimeError(
                f"meanfield solve did not converge (residual {report.residual:.2e}, "
                f"{report.iterations} iterations)"
            )
        state = report.state
        record = populations(state, geometry=geometry, drive=drive, seed=config.seed)
    elif point.method == "qmcw":
        result = qmcw_steady_state(
            geometry,
            drive=drive,
            max_excitations=config.max_excitations,
            n_traj=config.n_traj,
            seed=sub_seed,
        )
        state = result
        record = populations(result, geometry=geometry, drive=drive)
    elif point.method == "exact":
        exact = exact_master_equation(
            geometry, drive=drive, max_excitations=config.max_excitations
        )
        state = exact
        record = populations(exact, geometry=geometry, drive=drive, seed=config.seed)
    else:  # pragma: no cover - grid_points only emits known methods
        raise ValueError(f"unknown method {point.method!r}")

    if config.far_field is not None:
        imap = intensity_map(
            state,
            geometry,
            n_phi=config.far_field.n_phi,
            n_theta=config.far_field.n_theta,
            meta={"method": point.method, "n": point.n, "spacing": point.d,
                  "rabi": config.rabi, "detuning": config.detuning},
        )
        save_intensity_map(_map_path(config.out, point), imap)
    return record


def _stem(out: str) -> str:
    base, ext = os.path.splitext(out)
    return base if ext else out


def _map_path(out: str, point: GridPoint) -> str:
    return f"{_stem(out)}_ff_n{point.n}_d{point.d:g}.dat"


def _csv_path(out: str) -> str:
    return _stem(out) + ".csv"


def _summary_path(out: str) -> str:
    return _stem(out) + ".summary.txt"


# ---------------------------------------------------------------------------
# persistence (single committer; grid order)
# ---------------------------------------------------------------------------

_CSV_COLUMNS = [
    "method", "n", "spacing", "rabi", "detuning", "seed", "epsilon",
    "p1_bar", "p1_bar_se", "p2_bar", "ratio", "excited",
    "n_realizations", "std",
]


def _result_line(obj) -> str:
    if isinstance(obj, ResultRecord):
        return json.dumps(obj.to_dict(), sort_keys=True)
    data = {
        "sweep": {
            "epsilon": obj.epsilon, "n": obj.n, "spacing": obj.spacing,
            "n_realizations": obj.n_realizations, "n_converged": obj.n_converged,
            "n_failed": obj.n_failed, "mean": obj.mean, "std": obj.std,
            "p1_values": list(obj.p1_values), "failed_indices": list(obj.failed_indices),
            "seed": obj.seed, "failed": obj.failed,
        }
    }
    return json.dumps(data, sort_keys=True)


def _parse_line(line: str):
    data = json.loads(line)
    if "sweep" in data:
        s = data["sweep"]
        s["p1_values"] = tuple(s["p1_values"])
        s["failed_indices"] = tuple(s["failed_indices"])
        return DisorderSweepResult(**s)
    if "p1_bar" in data:
        return ResultRecord.from_dict(data)
    return None


def _csv_row(obj, config: RunConfig) -> dict:
    if isinstance(obj, ResultRecord):
        return {
            "method": obj.method, "n": obj.n, "spacing": obj.spacing,
            "rabi": obj.rabi, "detuning": obj.detuning, "seed": obj.seed,
            "epsilon": obj.epsilon, "p1_bar": obj.p1_bar,
            "p1_bar_se": obj.p1_bar_se, "p2_bar": obj.p2_bar,
            "ratio": obj.ratio, "excited": obj.excited,
            "n_realizations": None, "std": None,
        }
    return {
        "method": "disorder", "n": obj.n, "spacing": obj.spacing,
        "rabi": config.rabi, "detuning": config.detuning, "seed": obj.seed,
        "epsilon": obj.epsilon, "p1_bar": obj.mean, "p1_bar_se": None,
        "p2_bar": None, "ratio": None, "excited": None,
        "n_realizations": obj.n_realizations, "std": obj.std,
    }


def _commit(config: RunConfig, results: dict, failures: list) -> None:
    """Write the results file, CSV projection, and summary atomically-ish.

    `results` maps point.key() -> record/sweep; output is in grid order.
    """
    header = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "version": __version__,
        "seed": config.seed,
    }
    points = grid_points(config)
    tmp = config.out + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for point in points:
            obj = results.get(point.key())
            if obj is not None:
                fh.write(_result_line(obj) + "\n")
    os.replace(tmp, config.out)

    csv_tmp = _csv_path(config.out) + ".tmp"
    with open(csv_tmp, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_CSV_COLUMNS)
        writer.writeheader()
        for point in points:
            obj = results.get(point.key())
            if obj is not None:
                row = _csv_row(obj, config)
                writer.writerow({k: ("" if row[k] is None else row[k]) for k in _CSV_COLUMNS})
    os.replace(csv_tmp, _csv_path(config.out))

    lines = [f"# {config.method} run, seed {config.seed}, version {__version__}"]
    for point in points:
        obj = results.get(point.key())
        if obj is None:
            continue
        if isinstance(obj, ResultRecord):
            se = f" +- {obj.p1_bar_se:.2e}" if obj.p1_bar_se is not None else ""
            ratio = "undefined" if obj.ratio is None else f"{obj.ratio:.6g}"
            lines.append(
                f"{point.label()}: p1_bar={obj.p1_bar:.6g}{se} ratio={ratio} "
                f"excited={obj.excited:.3g}"
            )
        else:
            flag = "  ** FLAGGED FAILED **" if obj.failed else ""
            lines.append(
                f"{point.label()}: <p1_bar>={obj.mean:.6g} std={obj.std:.3g} "
                f"({obj.n_converged}/{obj.n_realizations} converged){flag}"
            )
    for label, message in failures:
        lines.append(f"FAILED {label}: {message}")
    text = "\n".join(lines) + "\n"
    with open(_summary_path(config.out), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)


def _load_existing(config: RunConfig) -> dict:
    """Parse a partial results file for resume; verify the config hash."""
    results: dict = {}
    with open(config.out) as fh:
        first = fh.readline().strip()
        try:
            header = json.loads(first) if first else {}
        except json.JSONDecodeError:
            header = {}
        if header.get("config_hash") != config.config_hash():
            raise ConfigError(
                "resume",
                f"existing file {config.out!r} was produced by a different config "
                f"(hash {header.get('config_hash')!r} != {config.config_hash()!r}); "
                "refusing to overwrite",
            )
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = _parse_line(line)
            if obj is not None:
                results[_record_key(obj)] = obj
    return results


def sweep(config: RunConfig, *, resume: bool = False, workers: Optional[int] = None) -> tuple:
    """Execute every grid point, honoring resume; returns (results, failures).

    Grid points are independent (content-derived sub-seeds); with
    DIPOLARRAY_WORKERS > 1 they run in a process pool, and the output is
    committed by this single caller in grid order either way.
    """
    config.validate()
    points = grid_points(config)
    results: dict = {}
    if resume and os.path.exists(config.out):
        results = _load_existing(config)
    todo = [p for p in points if p.key() not in results]

    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or "1")
    failures: list = []
    if workers > 1 and len(todo) > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(compute_point, config, p): p for p in todo}
            for fut in cf.as_completed(futures):
                point = futures[fut]
                try:
                    results[point.key()] = fut.result()
                except Exception as exc:  # surfaced verbatim in the summary
                    failures.append((point.label(), str(exc)))
    else:
        for point in todo:
            try:
                results[point.key()] = compute_point(config, point)
            except Exception as exc:
                failures.append((point.label(), str(exc)))
    failures.sort(key=lambda item: item[0])
    return results, failures


def run(config: RunConfig, *, resume: bool = False, workers: Optional[int] = None) -> int:
    """Validate, compute, persist, summarize; nonzero on any flagged failure."""
    config.validate()
    if os.path.exists(config.out) and not resume:
        raise ConfigError(
            "out",
            f"{config.out!r} already exists; pass --resume to continue it "
            "or choose another path",
        )
    results, failures = sweep(config, resume=resume, workers=workers)
    _commit(config, results, failures)
    flagged = any(
        isinstance(obj, DisorderSweepResult) and obj.failed for obj in results.values()
    )
    return EXIT_FAILED if (failures or flagged) else EXIT_OK


# ---------------------------------------------------------------------------
# quick-look report (matplotlib PNGs alongside the delimited output)
# ---------------------------------------------------------------------------

def report(results_path: str, out_dir: str, map_paths: Sequence[str] = ()) -> list:
    """Render quick-look figures from a results file; returns written paths.

    These are diagnostic plots (population vs grid axis, disorder errorbars,
    far-field map); they read only the persisted files, never recompute.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .observables import load_intensity_map, read_records

    records = read_records(results_path)
    sweeps = []
    with open(results_path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                obj = _parse_line(line)
                if isinstance(obj, DisorderSweepResult):
                    sweeps.append(obj)
    os.makedirs(out_dir, exist_ok=True)
    written = []

    if records:
        ds = sorted({r.spacing for r in records if r.spacing is not None})
        ns = sorted({r.n for r in records})
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        if len(ds) > 1:
            for n in ns:
                pts = sorted(
                    (r.spacing, r.p1_bar) for r in records if r.n == n and r.spacing is not None
                )
                ax.plot(*zip(*pts), marker=".", label=f"N={n}")
            ax.set_xlabel("spacing d (wavelengths)")
        else:
            for d in ds or [None]:
                pts = sorted(
                    (math.log10(r.n) ** 2, r.p1_bar)
                    for r in records
                    if d is None or r.spacing == d
                )
                label = "all" if d is None else f"d={d:g}"
                ax.plot(*zip(*pts), marker="o", label=label)
            ax.set_xlabel(r"(log10 N)^2")
        ax.set_ylabel("p1 (mean over atoms)")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(out_dir, "populations.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    if sweeps:
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        for n in sorted({s.n for s in sweeps}):
            pts = sorted((s.epsilon, s.mean, s.std) for s in sweeps if s.n == n)
            eps, mean, std = zip(*pts)
            ax.errorbar(eps, mean, yerr=std, marker="o", capsize=3, label=f"N={n}")
        ax.set_xlabel("disorder strength epsilon (wavelengths)")
        ax.set_ylabel("<p1> over realizations")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(out_dir, "disorder.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    for map_path in map_paths:
        imap = load_intensity_map(map_path)
        fig, ax = plt.subplots(figsize=(5.6, 3.2))
        mesh = ax.pcolormesh(
            np.degrees(imap.phi), np.degrees(imap.theta), imap.intensity.T, shading="auto"
        )
        fig.colorbar(mesh, ax=ax, label="intensity (1/r^2 factored)")
        ax.set_xlabel("phi (degrees)")
        ax.set_ylabel("theta (degrees)")
        fig.tight_layout()
        stem = os.path.splitext(os.path.basename(map_path))[0]
        path = os.path.join(out_dir, stem + ".png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dipolarray",
        description="Steady-state population mixing in driven six-level atom chains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="execute a run/sweep configuration")
    runp.add_argument("--config", help="INI config file (sections [run], [disorder], [farfield])")
    runp.add_argument("--method", help=f"one of {', '.join(METHODS)}")
    runp.add_argument("--n", help="atom number or grid (comma list or start:stop:step)")
    runp.add_argument("--d", help="spacing in wavelengths, or grid")
    runp.add_argument("--omega", help="drive Rabi frequency / Gamma (default 0.01)")
    runp.add_argument("--delta", help="drive detuning / Gamma (default 0)")
    runp.add_argument("--max-exc", dest="max_exc", help="excitation truncation (default 1)")
    runp.add_argument("--n-traj", dest="n_traj", help="trajectories per point (default 2400)")
    runp.add_argument("--seed", help="master seed (default 0)")
    runp.add_argument("--out", help="results file path (default results.jsonl)")
    runp.add_argument(
        "--resume", action="store_true",
        help="continue an interrupted sweep with the same config",
    )

    repp = sub.add_parser("report", help="render quick-look figures from persisted results")
    repp.add_argument("--results", required=True, help="results file from a run")
    repp.add_argument("--out-dir", required=True, help="directory for the PNGs")
    repp.add_argument("--map", action="append", default=[], help="far-field map file (repeatable)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            overrides = {
                key: getattr(args, key)
                for key in ("method", "n", "d", "omega", "delta", "max_exc", "n_traj", "seed", "out")
            }
            config = load_config(args.config, overrides)
            return run(config, resume=args.resume)
        if args.command == "report":
            written = report(args.results, args.out_dir, args.map)
            for path in written:
                print(path)
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
