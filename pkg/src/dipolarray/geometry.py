"""Chain geometries: ordered and axially disordered, positions in wavelengths."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.random import Generator, Philox


@dataclass(frozen=True)
class DisorderSpec:
    """Axial gap disorder: each nearest-neighbour gap is (spacing + xi) with
    xi ~ U(0, epsilon) wavelengths, drawn independently per gap."""

    epsilon: float
    n_realizations: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")


@dataclass(frozen=True)
class ArrayGeometry:
    """Atom positions, shape (n, 3), plus the nominal chain parameters."""

    positions: np.ndarray
    spacing: float
    disorder: Optional[DisorderSpec] = None
    realization_index: Optional[int] = None

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("positions must have shape (n, 3)")
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def dump(self, path) -> None:
        """Plain-text table, one 'x y z' row per atom; round-trips exactly."""
        with open(path, "w") as fh:
            fh.write(self.dumps())

    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write(f"# chain geometry: n={self.n} spacing={self.spacing!r}")
        if self.disorder is not None:
            buf.write(
                f" epsilon={self.disorder.epsilon!r}"
                f" seed={self.disorder.seed} realization={self.realization_index}"
            )
        buf.write("\n# columns: x y z (wavelengths)\n")
        for row in self.positions:
            buf.write("%.17g %.17g %.17g\n" % tuple(row))
        return buf.getvalue()


def load_geometry(path) -> ArrayGeometry:
    """Read a table written by ArrayGeometry.dump."""
    spacing = float("nan")
    disorder = None
    realization = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].replace(":", " ").split():
                    if "=" in tok:
                        key, val = tok.split("=", 1)
                        if key == "spacing":
                            spacing = float(val)
                        elif key == "epsilon":
                            disorder = DisorderSpec(epsilon=float(val))
                        elif key == "seed" and disorder is not None:
                            disorder = DisorderSpec(disorder.epsilon, disorder.n_realizations, int(val))
                        elif key == "realization" and val != "None":
                            realization = int(val)
                continue
            rows.append([float(v) for v in line.split()])
    if not rows:
        raise ValueError(f"no positions found in {path}")
    return ArrayGeometry(np.array(rows), spacing, disorder, realization)


def linear_chain(n: int, spacing: float) -> ArrayGeometry:
    """Ordered chain along x: atom i at (i * spacing, 0, 0)."""
    if n < 1:
        raise ValueError("need at least one atom")
    if spacing <= 0 and n > 1:
        raise ValueError("spacing must be positive")
    pos = np.zeros((n, 3))
    pos[:, 0] = spacing * np.arange(n)
    return ArrayGeometry(pos, spacing)


def disordered_chain(
    n: int, spacing: float, epsilon: float, seed: int, realization_index: int
) -> ArrayGeometry:
    """Chain with independently jittered gaps, reproducible per realization.

    The generator is counter-based (Philox) and keyed by both the seed and
    the realization index, so realization k is identical no matter how many
    other realizations were drawn before it, in what order, or on how many
    workers.
    """
    if n < 1:
        raise ValueError("need at least one atom")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    rng = Generator(Philox(key=np.array([seed, realization_index], dtype=np.uint64)))
    gaps = spacing + rng.uniform(0.0, epsilon, size=max(n - 1, 0))
    pos = np.zeros((n, 3))
    pos[1:, 0] = np.cumsum(gaps)
    spec = DisorderSpec(epsilon=epsilon, seed=seed)
    return ArrayGeometry(pos, spacing, spec, realization_index)
