"""Level structure, polarization basis, and drive parameters.

The atom is a fixed six-level system: a J=1/2 ground manifold and a J=3/2
excited manifold coupled by an electric-dipole transition,

        |3>       |4>       |5>       |6>        m = -3/2 .. +3/2
          \\       /  \\       /  \\      /
           \\  q=0|    |q=-1  |q=0|    | q=+1
        q=-1\\    |    |      |   |    |
             \\   |    |      |   |    |
              |1>          |2>                   m = -1/2, +1/2

Labels 1..6 order the states by manifold and then by increasing m.  A
transition (g, e) is dipole-allowed when q = m_e - m_g is in {-1, 0, +1};
there are exactly six such pairs.

Conventions used throughout the package (units: Gamma = 1, lambda = 1,
so k = 2*pi):

* quantization axis z; the chain lies along x; the drive propagates along z
* spherical unit vectors  sigma+ = -(x + iy)/sqrt(2),
  sigma- = +(x - iy)/sqrt(2),  pi = z
* Clebsch-Gordan coefficients are <1/2 m_g; 1 q | 3/2 m_e> in the
  Condon-Shortley convention, which makes all six coefficients positive and
  the stretched ones (|1>-|3>, |2>-|6>) exactly 1.  Relative signs within a
  fixed convention are all that can matter; a global sign flip of the q=0
  coefficients is equivalent to redefining pi -> -pi.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

# exact coefficient table keyed by (2*m_g, 2*m_e); squares are 1, 2/3, 1/3
_CG_TABLE = {
    (-1, -3): 1.0,
    (-1, -1): math.sqrt(2.0 / 3.0),
    (-1, +1): math.sqrt(1.0 / 3.0),
    (+1, -1): math.sqrt(1.0 / 3.0),
    (+1, +1): math.sqrt(2.0 / 3.0),
    (+1, +3): 1.0,
}

GROUND_LABELS = (1, 2)
EXCITED_LABELS = (3, 4, 5, 6)

# m quantum number per label, stored doubled so everything stays integer
_TWO_M = {1: -1, 2: +1, 3: -3, 4: -1, 5: +1, 6: +3}


class Polarization(enum.Enum):
    """Spherical polarization basis, indexed by the photon angular momentum q."""

    SIGMA_MINUS = -1
    PI = 0
    SIGMA_PLUS = +1

    @property
    def q(self) -> int:
        return self.value

    @property
    def vector(self) -> np.ndarray:
        """Complex unit 3-vector; orthonormal under the conjugate inner product."""
        if self is Polarization.SIGMA_PLUS:
            return np.array([-1.0, -1.0j, 0.0]) / math.sqrt(2.0)
        if self is Polarization.SIGMA_MINUS:
            return np.array([+1.0, -1.0j, 0.0]) / math.sqrt(2.0)
        return np.array([0.0, 0.0, 1.0], dtype=complex)

    @classmethod
    def from_q(cls, q: int) -> "Polarization":
        return cls(q)

    @classmethod
    def parse(cls, name: str) -> "Polarization":
        key = name.strip().lower().replace("_", "").replace(" ", "")
        table = {
            "sigma+": cls.SIGMA_PLUS, "sigmaplus": cls.SIGMA_PLUS, "+1": cls.SIGMA_PLUS,
            "sigma-": cls.SIGMA_MINUS, "sigmaminus": cls.SIGMA_MINUS, "-1": cls.SIGMA_MINUS,
            "pi": cls.PI, "0": cls.PI,
        }
        if key not in table:
            raise ValueError(f"unknown polarization {name!r}; use sigma+, sigma- or pi")
        return table[key]


def spherical_vector(q: int) -> np.ndarray:
    return Polarization.from_q(q).vector


@dataclass(frozen=True)
class LevelScheme:
    """The fixed six-level structure.  Instantiate via LevelScheme()."""

    ground: tuple = GROUND_LABELS
    excited: tuple = EXCITED_LABELS
    # the six dipole-allowed (g, e) pairs, ordered by g then e -- this
    # ordering defines the transition index t = 0..5 used by every matrix
    # in the package
    transitions: tuple = ((1, 3), (1, 4), (1, 5), (2, 4), (2, 5), (2, 6))

    @property
    def dim(self) -> int:
        return 6

    @property
    def n_transitions(self) -> int:
        return len(self.transitions)

    def m(self, label: int) -> float:
        """m quantum number of a state label."""
        if label not in _TWO_M:
            raise ValueError(f"invalid state label {label}; labels are 1..6")
        return _TWO_M[label] / 2.0

    def is_ground(self, label: int) -> bool:
        if label not in _TWO_M:
            raise ValueError(f"invalid state label {label}; labels are 1..6")
        return label in GROUND_LABELS

    def index(self, label: int) -> int:
        """0-based matrix index of a state label."""
        if label not in _TWO_M:
            raise ValueError(f"invalid state label {label}; labels are 1..6")
        return label - 1

    def q(self, g: int, e: int) -> int:
        """Photon angular momentum m_e - m_g of a transition."""
        self._check_pair(g, e)
        return (_TWO_M[e] - _TWO_M[g]) // 2

    def cg(self, g: int, e: int) -> float:
        """Clebsch-Gordan coefficient of the (g, e) transition (0 if forbidden)."""
        self._check_pair(g, e)
        return _CG_TABLE.get((_TWO_M[g], _TWO_M[e]), 0.0)

    def transition_index(self, g: int, e: int) -> int:
        self._check_pair(g, e)
        try:
            return self.transitions.index((g, e))
        except ValueError:
            raise ValueError(f"({g}, {e}) is not dipole-allowed") from None

    def decay_rate(self, g: int, e: int) -> float:
        """Independent-decay rate Gamma * cg^2 of the (g, e) channel."""
        c = self.cg(g, e)
        return c * c

    def _check_pair(self, g: int, e: int) -> None:
        if g not in GROUND_LABELS:
            raise ValueError(f"{g} is not a ground-state label (1 or 2)")
        if e not in EXCITED_LABELS:
            raise ValueError(f"{e} is not an excited-state label (3..6)")


SCHEME = LevelScheme()


def clebsch_gordan(m_g: float, m_e: float) -> float:
    """<1/2 m_g; 1 q | 3/2 m_e> with q = m_e - m_g; 0 when |q| > 1.

    Raises ValueError if (m_g, m_e) are not valid sublevel m values.
    """
    key = (round(2 * m_g), round(2 * m_e))
    if key[0] not in (-1, 1) or key[1] not in (-3, -1, 1, 3):
        raise ValueError(f"no sublevels with m_g={m_g}, m_e={m_e}")
    if abs(2 * m_e - 2 * m_g) > 2:
        return 0.0
    return _CG_TABLE.get(key, 0.0)


@dataclass(frozen=True)
class DriveParams:
    """Plane-wave drive: Rabi scale, detuning, polarization content.

    rabi is the Rabi frequency of the stretched |2>-|6> transition under the
    principal circular component (units of Gamma); detuning is the laser
    detuning from the bare atomic transition.  opposite_ratio adds a second
    circular component of relative amplitude r on the opposite helicity, so
    for the default sigma+ drive the field is  E (sigma+ + r sigma-)  and the
    stretched Rabi frequency stays exactly `rabi`.
    """

    rabi: float = 0.01
    detuning: float = 0.0
    polarization: Polarization = Polarization.SIGMA_PLUS
    opposite_ratio: float = 0.0

    def __post_init__(self):
        if isinstance(self.polarization, str):
            object.__setattr__(self, "polarization", Polarization.parse(self.polarization))
        if self.opposite_ratio and self.polarization is Polarization.PI:
            raise ValueError("opposite_ratio is only meaningful for circular drives")
        if self.opposite_ratio < 0:
            raise ValueError("opposite_ratio must be >= 0 (it is |E_-/E_+|)")

    def amplitude(self, q: int) -> float:
        """Field amplitude on spherical component q, in stretched-Rabi units."""
        if q == self.polarization.q:
            return self.rabi
        if q == -self.polarization.q and self.polarization is not Polarization.PI:
            return self.rabi * self.opposite_ratio
        return 0.0


def transition_rabi(drive: DriveParams, g: int, e: int, scheme: LevelScheme = SCHEME) -> float:
    """Rabi frequency of transition (g, e): cg * field amplitude on its q.

    Normalized so that transition_rabi(drive, 2, 6) == drive.rabi exactly for
    a sigma+ drive.
    """
    q = scheme.q(g, e)
    if abs(q) > 1:
        return 0.0
    return scheme.cg(g, e) * drive.amplitude(q)


def rabi_vector(drive: DriveParams, scheme: LevelScheme = SCHEME) -> np.ndarray:
    """All six transition Rabi frequencies in transition-index order."""
    return np.array([transition_rabi(drive, g, e, scheme) for g, e in scheme.transitions])
