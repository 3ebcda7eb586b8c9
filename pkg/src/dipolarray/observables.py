"""Population records, scattered-field decompositions, and far-field maps.

Everything here is a pure function of an already-computed state (mean-field,
trajectory ensemble, exact reference, or identical-atom reduction) plus the
geometry.  Two normalization conventions tie the module together:

* Fields are quoted in "Rabi units": the amplitude E_q(r) of spherical
  component q is defined so that the Rabi frequency it induces on a
  transition t with photon index q_t = q is  cg_t * E_q(r).  The incident
  sigma+ amplitude of the standard drive is then exactly the drive's `rabi`
  (the stretched coefficients are 1).
* Far-field intensity is |E|^2 with the 1/r^2 factored out and evaluated
  analytically in the r -> infinity limit, so doubling any nominal radius
  cannot change it; a finite-radius evaluator built on the exact propagator
  exists purely to validate that limit.

With these choices the sphere integral of the intensity equals
(3 pi / 2 k^2) * sum_t cg_t^2 |<sigma_t>|^2 per atom plus cross-atom
interference, which at weak drive is the radiated power per Gamma -- the
energy-balance property the tests assert.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from typing import Optional, Union

import numpy as np

from .geometry import ArrayGeometry
from .green import CouplingMatrices, K_WAVE, green_tensor
from .levels import SCHEME, DriveParams, LevelScheme, spherical_vector
from .meanfield import IdenticalAtomResult, MeanFieldState, effective_drive
from .qmcw import EnsembleResult, ExactSteadyState

__all__ = [
    "UndefinedRatioError",
    "ResultRecord",
    "FieldDecomposition",
    "FarFieldQuery",
    "IntensityMap",
    "populations",
    "ground_ratio",
    "scattered_field_at_atoms",
    "far_field_amplitude",
    "far_field_intensity",
    "intensity_map",
    "intensity_at_radius",
    "phi_reflection_asymmetry",
    "append_records",
    "read_records",
    "save_intensity_map",
    "load_intensity_map",
]


class UndefinedRatioError(ValueError):
    """Raised when a population ratio p1/p2 is requested but p2 vanishes."""


# stretched transitions have cg = 1, so their effective-drive rows *are* the
# spherical field components; the lone q = 0 row just needs its cg divided out
_T_PLUS = SCHEME.transition_index(2, 6)
_T_MINUS = SCHEME.transition_index(1, 3)
_T_PI = SCHEME.transition_index(1, 4)
_CG_PI = SCHEME.cg(1, 4)

# dipole matrix: row t is cg_t * eps_{q_t}, so (coherences @ _DIPOLE) is the
# source polarization vector of each atom
_DIPOLE = np.array(
    [SCHEME.cg(g, e) * spherical_vector(SCHEME.q(g, e)) for g, e in SCHEME.transitions]
)

# Rabi-units prefactor of the radiated field, with the 1/(4 pi r) of the
# propagator split off: (3 pi / k) / (4 pi)
_FIELD_PREF = 3.0 / (4.0 * K_WAVE)


# ---------------------------------------------------------------------------
# uniform access to the different state containers
# ---------------------------------------------------------------------------

State = Union[MeanFieldState, EnsembleResult, ExactSteadyState, IdenticalAtomResult]


def _population_table(state: State) -> np.ndarray:
    """Level populations as (n, 6) regardless of the container."""
    if isinstance(state, MeanFieldState):
        return state.populations()
    if isinstance(state, (EnsembleResult, ExactSteadyState)):
        return np.asarray(state.populations, dtype=float)
    if isinstance(state, IdenticalAtomResult):
        return np.real(np.diag(state.rho))[None, :]
    raise TypeError(f"no population accessor for {type(state).__name__}")


def _coherence_table(state: State) -> np.ndarray:
    """<sigma_ge> per atom and transition as (n, 6) complex."""
    if isinstance(state, MeanFieldState):
        return state.coherences()
    if isinstance(state, (EnsembleResult, ExactSteadyState)):
        return np.asarray(state.coherences, dtype=complex)
    raise TypeError(f"no coherence accessor for {type(state).__name__}")


def _default_method(state: State) -> str:
    return {
        MeanFieldState: "meanfield",
        EnsembleResult: "qmcw",
        ExactSteadyState: "exact",
        IdenticalAtomResult: "identical-atom",
    }[type(state)]


# ---------------------------------------------------------------------------
# population records
# ---------------------------------------------------------------------------

_POP_TOL = 1e-9
_SUM_TOL = 1e-8


@dataclass(frozen=True)
class ResultRecord:
    """One steady-state result plus everything needed to reproduce it.

    Records serialize to a single JSON object each; a results file is one
    record per line (append-only).  `p1_atoms` is the per-atom population of
    level |1>; for the identical-atom reduction it holds the one shared value.
    """

    p1_bar: float
    p2_bar: float
    p1_atoms: tuple
    ratio: Optional[float]
    excited: float
    n: int
    spacing: Optional[float] = None
    rabi: Optional[float] = None
    detuning: Optional[float] = None
    method: Optional[str] = None
    seed: Optional[int] = None
    epsilon: Optional[float] = None
    p1_bar_se: Optional[float] = None
    p1_atoms_se: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "p1_atoms", tuple(float(v) for v in self.p1_atoms))
        if self.p1_atoms_se is not None:
            object.__setattr__(
                self, "p1_atoms_se", tuple(float(v) for v in self.p1_atoms_se)
            )
        vals = np.array([self.p1_bar, self.p2_bar, self.excited, *self.p1_atoms])
        if vals.min() < -_POP_TOL or vals.max() > 1.0 + _POP_TOL:
            raise ValueError(
                f"population outside [0, 1]: range [{vals.min():.3e}, {vals.max():.3e}]"
            )
        total = self.p1_bar + self.p2_bar + self.excited
        if abs(total - 1.0) > _SUM_TOL:
            raise ValueError(f"populations sum to {total!r}, not 1")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = list(val)
            out[f.name] = val
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ResultRecord":
        known = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in data.items() if k in known}
        for key in ("p1_atoms", "p1_atoms_se"):
            if kwargs.get(key) is not None:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def populations(
    state: State,
    *,
    geometry: Optional[ArrayGeometry] = None,
    drive: Optional[DriveParams] = None,
    method: Optional[str] = None,
    seed: Optional[int] = None,
    epsilon: Optional[float] = None,
) -> ResultRecord:
    """Extract the ground/excited population summary of a computed state.

    Metadata not derivable from the state itself (spacing, drive, ...) is
    taken from the optional keywords; the ensemble container contributes its
    own seed and standard errors.
    """
    pops = _population_table(state)
    p1_atoms = pops[:, 0]
    p1_bar = float(p1_atoms.mean())
    p2_bar = float(pops[:, 1].mean())
    excited = float(pops[:, 2:].sum(axis=1).mean())

    se = se_atoms = None
    if isinstance(state, EnsembleResult):
        se = state.p1_bar_se
        se_atoms = tuple(np.asarray(state.populations_se)[:, 0])
        if seed is None:
            seed = state.seed

    if isinstance(state, IdenticalAtomResult):
        n_atoms, spacing = state.n, state.spacing
    else:
        n_atoms = pops.shape[0]
        spacing = geometry.spacing if geometry is not None else None
    if geometry is not None and geometry.disorder is not None and epsilon is None:
        epsilon = geometry.disorder.epsilon

    return ResultRecord(
        p1_bar=p1_bar,
        p2_bar=p2_bar,
        p1_atoms=tuple(p1_atoms),
        ratio=(p1_bar / p2_bar) if p2_bar > 0 else None,
        excited=excited,
        n=int(n_atoms),
        spacing=spacing,
        rabi=drive.rabi if drive is not None else None,
        detuning=drive.detuning if drive is not None else None,
        method=method if method is not None else _default_method(state),
        seed=seed,
        epsilon=epsilon,
        p1_bar_se=se,
        p1_atoms_se=se_atoms,
    )


def ground_ratio(state) -> float:
    """p1_bar / p2_bar of a state or record; error when p2_bar vanishes."""
    if isinstance(state, ResultRecord):
        p1, p2 = state.p1_bar, state.p2_bar
    else:
        pops = _population_table(state)
        p1 = float(pops[:, 0].mean())
        p2 = float(pops[:, 1].mean())
    if p2 <= 0.0:
        raise UndefinedRatioError("p2 vanishes; the population ratio is undefined")
    return p1 / p2


# ---------------------------------------------------------------------------
# scattered field at the atom positions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldDecomposition:
    """Spherical-basis scattered field at each atom, in Rabi units.

    e_plus_sc / e_minus_sc / e_z_sc are the sigma+, sigma-, z amplitudes of
    the field radiated by all *other* atoms, evaluated at each atom's
    position; e_plus_inc is the incident sigma+ amplitude in the same units
    (the stretched-transition Rabi frequency of the drive).
    """

    e_plus_sc: np.ndarray
    e_minus_sc: np.ndarray
    e_z_sc: np.ndarray
    e_plus_inc: float = 0.0

    @property
    def n(self) -> int:
        return self.e_plus_sc.shape[0]

    def helicity_ratio(self) -> np.ndarray:
        """|E_-^sc / (E_+^inc + E_+^sc)| per atom (the pumping ratio's field side)."""
        return np.abs(self.e_minus_sc / (self.e_plus_inc + self.e_plus_sc))


def scattered_field_at_atoms(
    state: State,
    couplings: CouplingMatrices,
    drive: Optional[DriveParams] = None,
) -> FieldDecomposition:
    """Field radiated by all other atoms, decomposed at each atom's position.

    Uses the same retarded coupling kernel that sources the mean-field
    equations, so the decomposition is consistent with the dynamics by
    construction: the stretched rows of the effective drive are the sigma+-
    and sigma--amplitudes outright (cg = 1), the q = 0 row divided by its cg
    is the z amplitude.  Pass the drive to fill in the incident amplitude;
    without it only the scattered part is reported (e_plus_inc = 0).
    """
    coh = _coherence_table(state)
    vals = effective_drive(coh, couplings).values
    inc = float(drive.amplitude(+1)) if drive is not None else 0.0
    return FieldDecomposition(
        e_plus_sc=vals[:, _T_PLUS].copy(),
        e_minus_sc=vals[:, _T_MINUS].copy(),
        e_z_sc=vals[:, _T_PI] / _CG_PI,
        e_plus_inc=inc,
    )


# ---------------------------------------------------------------------------
# far field
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FarFieldQuery:
    """Observation directions: theta polar from +z, phi azimuthal from +x.

    theta and phi must broadcast against each other; phi is reduced mod 2 pi
    at construction so it always lies in [0, 2 pi).  The radius is *not* used
    by the analytic far-field evaluation (which works in the r -> infinity
    limit); it parameterizes the finite-radius validation path only.
    """

    theta: np.ndarray
    phi: np.ndarray
    radius: float = math.inf

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        if theta.size and (theta.min() < 0.0 or theta.max() > np.pi):
            raise ValueError("theta must lie in [0, pi]")
        phi = np.mod(phi, 2.0 * np.pi)
        np.broadcast_shapes(theta.shape, phi.shape)
        if not self.radius > 0.0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def grid(cls, n_phi: int = 361, n_theta: int = 181, radius: float = math.inf):
        """Full-sphere outer grid, phi fastest axis first: shapes (n_phi, 1) x (1, n_theta)."""
        theta = np.linspace(0.0, np.pi, n_theta)
        phi = np.linspace(0.0, 2.0 * np.pi, n_phi)
        return cls(theta[None, :], phi[:, None], radius)

    def directions(self) -> np.ndarray:
        """Unit observation vectors, shape broadcast(theta, phi) + (3,)."""
        theta, phi = np.broadcast_arrays(self.theta, self.phi)
        st, ct = np.sin(theta), np.cos(theta)
        return np.stack([st * np.cos(phi), st * np.sin(phi), ct], axis=-1)


def _source_dipoles(state: State) -> np.ndarray:
    """Polarization vector sum_t cg_t eps_{q_t} <sigma_t> per atom, (n, 3)."""
    return _coherence_table(state) @ _DIPOLE


def _largest_x_index(geometry: ArrayGeometry) -> int:
    return int(np.argmax(geometry.positions[:, 0]))


def far_field_amplitude(
    state: State,
    geometry: ArrayGeometry,
    scheme: LevelScheme = SCHEME,
    query: Optional[FarFieldQuery] = None,
    *,
    chunk: int = 8192,
) -> np.ndarray:
    """Complex far-field amplitude (r -> infinity, r e^{ikr} factored out).

    Shape broadcast(theta, phi) + (3,), in the Cartesian basis.  Phases are
    taken relative to the atom with the largest x coordinate; that choice is
    a global per-direction phase and cannot affect intensities.
    """
    if query is None:
        query = FarFieldQuery.grid()
    pos = geometry.positions - geometry.positions[_largest_x_index(geometry)]
    dipoles = _source_dipoles(state)
    nhat = query.directions()
    flat = nhat.reshape(-1, 3)
    out = np.empty((flat.shape[0], 3), dtype=complex)
    for lo in range(0, flat.shape[0], chunk):
        hi = min(lo + chunk, flat.shape[0])
        block = flat[lo:hi]
        phases = np.exp(-1j * K_WAVE * (block @ pos.T))  # (m, n)
        amp = phases @ dipoles  # (m, 3)
        amp -= block * np.sum(block * amp, axis=1, keepdims=True)  # transverse part
        out[lo:hi] = _FIELD_PREF * amp
    return out.reshape(nhat.shape)


def far_field_intensity(
    state: State,
    geometry: ArrayGeometry,
    scheme: LevelScheme = SCHEME,
    query: Optional[FarFieldQuery] = None,
    *,
    reference_max: Optional[float] = None,
    chunk: int = 8192,
) -> np.ndarray:
    """|far field|^2 with 1/r^2 factored out, per query direction.

    Raw by default; pass reference_max to normalize to another run's maximum
    (figure-style normalization).  Evaluated analytically at infinite radius.
    """
    amp = far_field_amplitude(state, geometry, scheme, query, chunk=chunk)
    intensity = np.sum(np.abs(amp) ** 2, axis=-1)
    if reference_max is not None:
        if not reference_max > 0.0:
            raise ValueError("reference_max must be positive")
        intensity = intensity / reference_max
    return intensity


def intensity_at_radius(
    state: State,
    geometry: ArrayGeometry,
    theta,
    phi,
    radius: float,
    scheme: LevelScheme = SCHEME,
) -> np.ndarray:
    """Exact-propagator intensity at finite radius, times radius^2.

    Observation points sit on the sphere of the given radius centered on the
    atom with the largest x coordinate.  This is the validation counterpart
    of far_field_intensity: it keeps every near-field term, so it must agree
    with the analytic limit to O(1/(k r)) and become radius-independent.
    """
    pos = geometry.positions
    extent = float(pos[:, 0].max() - pos[:, 0].min())
    if radius < 100.0 * max(extent, 1.0):
        raise ValueError("radius must greatly exceed the array extent")
    query = FarFieldQuery(theta, phi, radius)
    nhat = query.directions()
    flat = nhat.reshape(-1, 3)
    dipoles = _source_dipoles(state)
    center = pos[_largest_x_index(geometry)]
    pref = 3.0 * np.pi / K_WAVE
    out = np.empty(flat.shape[0])
    for i, n in enumerate(flat):
        point = center + radius * n
        field = np.zeros(3, dtype=complex)
        for j in range(pos.shape[0]):
            field += pref * green_tensor(point - pos[j]) @ dipoles[j]
        out[i] = radius**2 * np.sum(np.abs(field) ** 2)
    return out.reshape(nhat.shape[:-1])


# ---------------------------------------------------------------------------
# full-sphere maps and their file format
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntensityMap:
    """Dense far-field map on an outer (phi x theta) grid."""

    theta: np.ndarray  # (n_theta,)
    phi: np.ndarray  # (n_phi,) nominal axis values (2 pi column = wrapped 0)
    intensity: np.ndarray  # (n_phi, n_theta)
    meta: dict

    def max(self) -> float:
        return float(self.intensity.max())

    def reflection_asymmetry(self) -> float:
        return phi_reflection_asymmetry(self.intensity)


def phi_reflection_asymmetry(intensity: np.ndarray) -> float:
    """max |I(phi) - I(-phi)| / max I over a full uniform phi axis (first axis).

    Zero (to rounding) for any source pattern symmetric under y -> -y, e.g. a
    single atom; finite for the driven array, where it is reported as a
    diagnostic rather than asserted away.
    """
    n_phi = intensity.shape[0]
    closed = bool(n_phi > 1 and np.allclose(intensity[0], intensity[-1]))
    body = intensity[:-1] if closed else intensity
    mirrored = np.roll(body[::-1], 1, axis=0)
    return float(np.max(np.abs(body - mirrored)) / np.max(np.abs(intensity)))


def intensity_map(
    state: State,
    geometry: ArrayGeometry,
    scheme: LevelScheme = SCHEME,
    *,
    n_phi: int = 361,
    n_theta: int = 181,
    reference_max: Optional[float] = None,
    meta: Optional[dict] = None,
) -> IntensityMap:
    """Far-field intensity over the default full-sphere grid (phi x theta)."""
    query = FarFieldQuery.grid(n_phi=n_phi, n_theta=n_theta)
    intensity = far_field_intensity(
        state, geometry, scheme, query, reference_max=reference_max
    )
    info = {
        "n": geometry.n,
        "spacing": geometry.spacing,
        "normalization": "raw" if reference_max is None else "reference",
    }
    if reference_max is not None:
        info["reference_max"] = float(reference_max)
    if meta:
        info.update(meta)
    theta = np.linspace(0.0, np.pi, n_theta)
    phi = np.linspace(0.0, 2.0 * np.pi, n_phi)
    return IntensityMap(theta=theta, phi=phi, intensity=intensity, meta=info)


def save_intensity_map(path, imap: IntensityMap) -> None:
    """Dense text export: one 'theta phi intensity' row per grid point."""
    with open(path, "w") as fh:
        fh.write("# far-field intensity map (1/r^2 factored out)\n")
        fh.write(f"# meta: {json.dumps(imap.meta, sort_keys=True)}\n")
        fh.write(
            f"# grid: n_theta={imap.theta.size} n_phi={imap.phi.size} "
            "(theta polar from +z, phi azimuthal from +x, radians)\n"
        )
        fh.write("# columns: theta phi intensity\n")
        for it in range(imap.theta.size):
            for ip in range(imap.phi.size):
                fh.write(
                    "%.12g %.12g %.17g\n"
                    % (imap.theta[it], imap.phi[ip], imap.intensity[ip, it])
                )


def load_intensity_map(path) -> IntensityMap:
    """Read a map written by save_intensity_map."""
    meta: dict = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("# meta:"):
                    meta = json.loads(line[len("# meta:"):])
                continue
            rows.append([float(v) for v in line.split()])
    if not rows:
        raise ValueError(f"no grid rows found in {path}")
    data = np.array(rows)
    theta = np.unique(data[:, 0])
    phi = np.unique(data[:, 1])
    if theta.size * phi.size != data.shape[0]:
        raise ValueError(f"{path} is not a dense (theta, phi) grid")
    intensity = np.empty((phi.size, theta.size))
    it = np.searchsorted(theta, data[:, 0])
    ip = np.searchsorted(phi, data[:, 1])
    intensity[ip, it] = data[:, 2]
    return IntensityMap(theta=theta, phi=phi, intensity=intensity, meta=meta)


# ---------------------------------------------------------------------------
# results files (one JSON object per line)
# ---------------------------------------------------------------------------

def append_records(path, records) -> None:
    """Append ResultRecords to a results file, one JSON object per line."""
    if isinstance(records, ResultRecord):
        records = [records]
    with open(path, "a") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def read_records(path) -> list:
    """Read every ResultRecord from a results file (non-record lines skipped)."""
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            if isinstance(data, dict) and "p1_bar" in data:
                out.append(ResultRecord.from_dict(data))
    return out
