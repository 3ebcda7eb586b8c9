"""Disorder ensembles: positional averaging of the mean-field steady state.

Each realization jitters every nearest-neighbour gap independently by
xi ~ U(0, epsilon) wavelengths (counter-based stream keyed by (seed,
realization index), so any subset of realizations can be recomputed bit-for-
bit in isolation).  The per-realization mean-field problems share no state,
which makes the sweep embarrassingly parallel; here they are dispatched as
stacked batches through the vectorized solver core, chunked to bound memory.

Realizations whose solver does not converge are excluded from the statistics
and counted; a sweep with more than 1% of them is flagged failed (the flag
travels with the result rather than raising, so partial data stays usable
for diagnosis).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import DisorderSpec, disordered_chain
from .green import coupling_matrices
from .levels import SCHEME, DriveParams, LevelScheme
from .meanfield import mf_steady_state_many

__all__ = [
    "DisorderSweepResult",
    "disorder_average",
    "save_sweep",
    "load_sweep",
    "DEFAULT_EPSILON_GRID",
]

# default strength grid for sweeps (a choice: the source text names no grid)
DEFAULT_EPSILON_GRID = (0.01, 0.02, 0.05, 0.1)

_FAIL_FRACTION = 0.01


@dataclass(frozen=True)
class DisorderSweepResult:
    """Aggregated p1_bar statistics over one disorder strength.

    `p1_values` holds the converged realizations' p1_bar in realization-index
    order; `failed_indices` lists the excluded ones.  `mean` is the plain
    arithmetic mean of `p1_values` (asserted to 1e-12 at construction), and
    `std` the ddof=1 sample standard deviation (0 when fewer than two values).
    """

    epsilon: float
    n: int
    spacing: float
    n_realizations: int
    n_converged: int
    n_failed: int
    mean: float
    std: float
    p1_values: tuple
    failed_indices: tuple
    seed: int
    failed: bool

    def __post_init__(self):
        object.__setattr__(self, "p1_values", tuple(float(v) for v in self.p1_values))
        object.__setattr__(self, "failed_indices", tuple(int(i) for i in self.failed_indices))
        if len(self.p1_values) != self.n_converged:
            raise ValueError("p1_values length disagrees with n_converged")
        if self.n_converged + self.n_failed != self.n_realizations:
            raise ValueError("realization bookkeeping does not add up")
        if self.p1_values:
            check = math.fsum(self.p1_values) / len(self.p1_values)
            if not (abs(self.mean - check) <= 1e-12):
                raise ValueError(f"mean {self.mean!r} != arithmetic mean {check!r}")


def _aggregate(
    epsilon: float,
    n: int,
    spacing: float,
    n_realizations: int,
    seed: int,
    values_by_index: dict,
) -> DisorderSweepResult:
    """Assemble the result from {realization index: p1_bar or None}."""
    p1_values = []
    failed_indices = []
    for idx in range(n_realizations):
        val = values_by_index[idx]
        if val is None:
            failed_indices.append(idx)
        else:
            p1_values.append(val)
    n_failed = len(failed_indices)
    n_conv = len(p1_values)
    mean = math.fsum(p1_values) / n_conv if n_conv else math.nan
    std = float(np.std(p1_values, ddof=1)) if n_conv > 1 else 0.0
    return DisorderSweepResult(
        epsilon=float(epsilon),
        n=int(n),
        spacing=float(spacing),
        n_realizations=int(n_realizations),
        n_converged=n_conv,
        n_failed=n_failed,
        mean=mean,
        std=std,
        p1_values=tuple(p1_values),
        failed_indices=tuple(failed_indices),
        seed=int(seed),
        failed=bool(n_failed > _FAIL_FRACTION * n_realizations),
    )


def disorder_average(
    n: int,
    spec: DisorderSpec,
    drive: DriveParams = DriveParams(),
    *,
    spacing: float = 2.0,
    scheme: LevelScheme = SCHEME,
    tol: float = 1e-10,
    max_iterations: int = 600,
    batch_size: int | None = None,
) -> DisorderSweepResult:
    """Disorder-averaged p1_bar at one strength.

    Runs the mean-field steady state for spec.n_realizations jittered chains
    (base spacing in wavelengths, default the canonical 2) and averages the
    per-realization p1_bar.  Deterministic given (spec.seed, spec.epsilon,
    n, spacing, drive): realization k never depends on the others.
    """
    if n < 1:
        raise ValueError("need at least one atom")
    total = spec.n_realizations
    if batch_size is None:
        # keep the stacked kernels near ~200 MB at worst
        per_kernel = n * n * 36 * 16
        batch_size = max(1, min(64, int(2e8 / max(per_kernel, 1))))

    values_by_index: dict = {}
    for lo in range(0, total, batch_size):
        hi = min(lo + batch_size, total)
        indices = range(lo, hi)
        kernels = []
        for idx in indices:
            geo = disordered_chain(n, spacing, spec.epsilon, spec.seed, idx)
            kernels.append(coupling_matrices(geo, scheme).mf_kernel())
        reports = mf_steady_state_many(
            kernels, drive, scheme, tol=tol, max_iterations=max_iterations
        )
        for idx, report in zip(indices, reports):
            if report.converged:
                values_by_index[idx] = float(report.state.populations()[:, 0].mean())
            else:
                values_by_index[idx] = None

    return _aggregate(spec.epsilon, n, spacing, total, spec.seed, values_by_index)


def save_sweep(path, result: DisorderSweepResult) -> None:
    """Persist one sweep result as a JSON document (re-aggregation source)."""
    with open(path, "w") as fh:
        json.dump(asdict(result), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_sweep(path) -> DisorderSweepResult:
    with open(path) as fh:
        data = json.load(fh)
    data["p1_values"] = tuple(data["p1_values"])
    data["failed_indices"] = tuple(data["failed_indices"])
    return DisorderSweepResult(**data)
