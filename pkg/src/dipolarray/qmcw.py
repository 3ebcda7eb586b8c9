"""Quantum-jump trajectories on a truncated few-excitation basis.

The driven array evolves under a master equation whose dissipative part is a
matrix of pairwise channel couplings.  This module unravels it into Monte
Carlo wave functions: deterministic no-jump evolution under a non-Hermitian
effective Hamiltonian, interrupted by collective jumps drawn from the
eigenchannels of the dissipative coupling matrix.

Because the drive is weak, jumps are separated by hundreds of lifetimes.
Trajectories therefore step through a three-scale ladder of cached
propagators: a long segment bridges the slow pumping dynamics, and whenever
the cumulative survival probability crosses the drawn threshold inside a
segment, that segment is replayed at the next finer scale until the jump is
localized at the finest resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .geometry import ArrayGeometry
from .green import CouplingMatrices, coupling_matrices
from .levels import SCHEME, DriveParams, LevelScheme, rabi_vector

__all__ = [
    "DissipationModelError",
    "PropagationError",
    "TruncatedBasis",
    "build_hamiltonian",
    "build_effective_hamiltonian",
    "JumpChannels",
    "jump_decomposition",
    "evolve_nojump",
    "TrajectorySystem",
    "prepare_system",
    "TrajectoryObservables",
    "run_trajectory",
    "EnsembleResult",
    "qmcw_steady_state",
    "ExactSteadyState",
    "exact_master_equation",
]

# segment lengths of the stepping ladder (units of 1/Gamma) and how many
# finer steps replay one failed coarser segment
LADDER_SPANS = (1000.0, 25.0, 1.0)
_RESCAN = (40, 25)
_SCALE_NAMES = ("long", "medium", "short")

# above this Hilbert-space dimension dense cached propagators stop paying
# for themselves and the engine falls back to Krylov stepping
DENSE_PROPAGATOR_LIMIT = 1024


class DissipationModelError(ValueError):
    """The pairwise dissipative coupling matrix is not positive semidefinite.

    At strongly subwavelength spacings the channel matrix built from
    pairwise blocks can acquire a significantly negative eigenvalue; no
    jump unraveling exists there and the caller must fall back to a
    different method or geometry.
    """


class PropagationError(RuntimeError):
    """No-jump propagation could not meet the requested tolerance."""


# ---------------------------------------------------------------------------
# basis
# ---------------------------------------------------------------------------


class TruncatedBasis:
    """Product states of ``n`` six-level atoms with a bounded excitation count.

    States are tuples of per-atom level indices (0..5, ground levels are 0
    and 1), enumerated lexicographically with atom 0 most significant.  Only
    configurations with at most ``max_excitations`` atoms in an excited level
    are kept; operators that would leave the truncated space simply drop the
    offending amplitudes.
    """

    def __init__(self, n_atoms: int, max_excitations: int = 1, scheme: LevelScheme = SCHEME):
        if n_atoms < 1:
            raise ValueError("need at least one atom")
        if not 0 <= max_excitations <= n_atoms:
            raise ValueError("max_excitations must be between 0 and n_atoms")
        self.n_atoms = int(n_atoms)
        self.max_excitations = int(max_excitations)
        self.scheme = scheme

        rows: list[tuple[int, ...]] = []

        def grow(prefix: tuple[int, ...], used: int) -> None:
            if len(prefix) == n_atoms:
                rows.append(prefix)
                return
            for lvl in range(6):
                cost = 1 if lvl >= 2 else 0
                if used + cost <= max_excitations:
                    grow(prefix + (lvl,), used + cost)

        grow((), 0)
        self.levels = np.array(rows, dtype=np.uint8)
        self.excitations = (self.levels >= 2).sum(axis=1).astype(np.int64)
        self._lookup = {row.tobytes(): i for i, row in enumerate(self.levels)}
        self._pairs: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    @property
    def dim(self) -> int:
        return self.levels.shape[0]

    @property
    def ground_state_index(self) -> int:
        return self.index([1] * self.n_atoms)

    def index(self, config: Sequence[int]) -> int:
        key = np.asarray(config, dtype=np.uint8).tobytes()
        try:
            return self._lookup[key]
        except KeyError:
            raise KeyError(f"configuration {tuple(config)} is not in the truncated basis")

    def transition_pairs(self, atom: int, transition: int) -> tuple[np.ndarray, np.ndarray]:
        """(source, target) state indices connected by lowering ``transition``.

        Sources have ``atom`` in the transition's excited level; targets are
        the same configuration with that atom dropped to the ground level.
        """
        key = (atom, transition)
        if key not in self._pairs:
            g, e = self.scheme.transitions[transition]
            g_idx, e_idx = self.scheme.index(g), self.scheme.index(e)
            src = np.where(self.levels[:, atom] == e_idx)[0]
            tgt = np.empty_like(src)
            for i, s in enumerate(src):
                row = self.levels[s].copy()
                row[atom] = g_idx
                tgt[i] = self._lookup[row.tobytes()]
            self._pairs[key] = (src, tgt)
        return self._pairs[key]

    def lowering_operator(self, atom: int, transition: int) -> sp.csr_matrix:
        """Sparse |g_t><e_t| acting on ``atom`` (unit matrix elements)."""
        src, tgt = self.transition_pairs(atom, transition)
        data = np.ones(src.size)
        return sp.csr_matrix((data, (tgt, src)), shape=(self.dim, self.dim))

    @cached_property
    def population_indicator(self) -> np.ndarray:
        """(dim, n*6) matrix mapping |amplitude|^2 onto per-atom populations."""
        ind = np.zeros((self.dim, self.n_atoms * 6))
        for j in range(self.n_atoms):
            ind[np.arange(self.dim), j * 6 + self.levels[:, j]] = 1.0
        return ind


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


def _lowering_table(basis: TruncatedBasis) -> list[list[sp.csr_matrix]]:
    return [
        [basis.lowering_operator(j, t) for t in range(6)] for j in range(basis.n_atoms)
    ]


def build_hamiltonian(
    basis: TruncatedBasis,
    couplings: CouplingMatrices,
    drive: DriveParams,
) -> sp.csr_matrix:
    """Detuning + drive + coherent photon exchange, truncated to the basis."""
    if couplings.n != basis.n_atoms:
        raise ValueError("coupling matrices and basis disagree on atom count")
    dim = basis.dim
    omega = rabi_vector(drive, basis.scheme).astype(complex)
    ops = _lowering_table(basis)

    h = sp.diags(-drive.detuning * basis.excitations.astype(float)).astype(complex)
    for j in range(basis.n_atoms):
        for t in range(6):
            if omega[t] != 0:
                s = ops[j][t]
                h = h - omega[t] * s.conj().T - np.conj(omega[t]) * s

    coherent = couplings.coherent
    for j in range(basis.n_atoms):
        for l in range(basis.n_atoms):
            if j == l:
                continue
            block = coherent[j, l]
            for tp, t in np.argwhere(np.abs(block) > 1e-15):
                h = h - block[tp, t] * (ops[j][tp].conj().T @ ops[l][t])
    return h.tocsr()


def build_effective_hamiltonian(
    basis: TruncatedBasis,
    couplings: CouplingMatrices,
    drive: DriveParams,
) -> sp.csr_matrix:
    """Non-Hermitian no-jump generator: H minus i times the dissipative form.

    The anti-Hermitian part is built from the full dissipative coupling
    matrix (on-site blocks included), so the norm decay of a propagated
    state is exactly the total scattering rate.
    """
    h = build_hamiltonian(basis, couplings, drive).astype(complex).tolil()
    ops = _lowering_table(basis)
    w = couplings.dissipative_compound()
    n6 = 6 * basis.n_atoms
    for a in range(n6):
        ja, ta = divmod(a, 6)
        sa = ops[ja][ta]
        for b in range(n6):
            if abs(w[a, b]) < 1e-15:
                continue
            jb, tb = divmod(b, 6)
            h = h - 1j * w[a, b] * (sa.conj().T @ ops[jb][tb])
    return h.tocsr()


@dataclass(frozen=True)
class JumpChannels:
    """Collective decay channels: eigenvectors of the dissipative coupling.

    ``coefficients[l]`` expands jump operator J_l over the site-transition
    lowering operators (index ``atom * 6 + transition``); channel ``l`` fires
    with rate ``rates[l] * ||J_l psi||^2``.
    """

    rates: np.ndarray
    coefficients: np.ndarray

    @property
    def n_channels(self) -> int:
        return self.rates.size

    def operators(self, basis: TruncatedBasis) -> list[sp.csr_matrix]:
        ops = _lowering_table(basis)
        flat = [ops[j][t] for j in range(basis.n_atoms) for t in range(6)]
        out = []
        for l in range(self.n_channels):
            acc = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
            for a, coeff in enumerate(self.coefficients[l]):
                if coeff != 0:
                    acc = acc + coeff * flat[a]
            out.append(acc.tocsr())
        return out

    def compound(self) -> np.ndarray:
        """Rebuild the dissipative coupling matrix from rates and channels."""
        return (np.conj(self.coefficients).T * (self.rates / 2.0)) @ self.coefficients


def jump_decomposition(couplings: CouplingMatrices, *, tol: float = 1e-10) -> JumpChannels:
    """Diagonalize the dissipative coupling into collective jump channels.

    Raises :class:`DissipationModelError` if the matrix has an eigenvalue
    below ``-tol`` (in units of Gamma): the pairwise-channel model admits no
    trajectory unraveling there.  Eigenvalues inside ``[-tol, 0]`` are
    rounding noise and are clamped to zero, and zero-rate channels are
    dropped.
    """
    w = couplings.dissipative_compound()
    vals, vecs = np.linalg.eigh(w)
    if vals[0] < -tol:
        raise DissipationModelError(
            "dissipative coupling matrix has eigenvalue "
            f"{vals[0]:.3e} Gamma; no jump unraveling exists for this geometry"
        )
    vals = np.clip(vals, 0.0, None)
    keep = vals > 0.0
    vals, vecs = vals[keep], vecs[:, keep]
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    # J_l = sum_a conj(U[a, l]) S_a reproduces sum 2 W[ab] S_b rho S_a^+
    return JumpChannels(rates=2.0 * vals, coefficients=np.conj(vecs.T))


# ---------------------------------------------------------------------------
# no-jump propagation
# ---------------------------------------------------------------------------


def evolve_nojump(
    hamiltonian,
    state: np.ndarray,
    duration: float,
    *,
    tol: float = 1e-9,
    krylov_dim: int = 30,
) -> np.ndarray:
    """Apply exp(-i H_eff * duration) to ``state`` without normalizing.

    Arnoldi projection with adaptive substeps: each substep is accepted only
    if the standard residual-based error estimate fits within its share of
    the total tolerance budget; otherwise the substep is halved.  Raises
    :class:`PropagationError` once the substep underflows a 1e-12 fraction
    of the requested duration, rather than silently returning an inaccurate
    state.
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    psi = np.asarray(state, dtype=complex).copy()
    if duration == 0 or np.linalg.norm(psi) == 0:
        return psi

    matvec = (lambda v: hamiltonian @ v)
    dim = psi.size
    m = min(krylov_dim, dim)
    done = 0.0
    dt = duration
    while done < duration:
        dt = min(dt, duration - done)
        beta = np.linalg.norm(psi)
        v = np.zeros((m + 1, dim), dtype=complex)
        hess = np.zeros((m + 1, m), dtype=complex)
        v[0] = psi / beta
        m_eff = m
        breakdown = False
        for j in range(m):
            w = -1j * matvec(v[j])
            # two Gram-Schmidt passes keep the basis orthogonal enough
            for _ in range(2):
                coeffs = v[: j + 1].conj() @ w
                hess[: j + 1, j] += coeffs
                w -= coeffs @ v[: j + 1]
            h_next = np.linalg.norm(w)
            hess[j + 1, j] = h_next
            if h_next < 1e-12 * max(1.0, abs(hess[: j + 1, : j + 1]).max()):
                m_eff, breakdown = j + 1, True
                break
            v[j + 1] = w / h_next

        small = scipy.linalg.expm(dt * hess[:m_eff, :m_eff])
        err = 0.0 if breakdown else float(
            beta * abs(hess[m_eff, m_eff - 1]) * abs(small[m_eff - 1, 0]) * dt
        )
        budget = tol * max(beta, 1e-300) * dt / duration
        if err <= budget:
            psi = beta * (small[:, 0] @ v[:m_eff])
            done += dt
            if err < 0.1 * budget:
                dt *= 1.5
        else:
            dt *= 0.5
            if dt < duration * 1e-12:
                raise PropagationError(
                    "no-jump step size underflowed before meeting tolerance "
                    f"{tol:g}; Hamiltonian may be too stiff for Krylov stepping"
                )
    return psi


# ---------------------------------------------------------------------------
# trajectory engine
# ---------------------------------------------------------------------------


@dataclass
class TrajectorySystem:
    """Everything a trajectory needs, prepared once and shared by the batch."""

    basis: TruncatedBasis
    couplings: CouplingMatrices
    drive: DriveParams
    h_eff: sp.csr_matrix
    channels: JumpChannels
    propagators: tuple[np.ndarray, ...] | None  # cached per ladder scale

    @cached_property
    def _pair_table(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [
            self.basis.transition_pairs(j, t)
            for j in range(self.basis.n_atoms)
            for t in range(6)
        ]

    def apply_channels(self, psi: np.ndarray) -> np.ndarray:
        """Stack of J_l psi for every channel, (n_channels, dim)."""
        n6 = 6 * self.basis.n_atoms
        lowered = np.zeros((n6, psi.size), dtype=complex)
        for a, (src, tgt) in enumerate(self._pair_table):
            lowered[a, tgt] = psi[src]
        return self.channels.coefficients @ lowered


def prepare_system(
    geometry: ArrayGeometry,
    scheme: LevelScheme = SCHEME,
    drive: DriveParams = DriveParams(),
    *,
    couplings: CouplingMatrices | None = None,
    max_excitations: int = 1,
    dense_limit: int = DENSE_PROPAGATOR_LIMIT,
) -> TrajectorySystem:
    """Build basis, effective Hamiltonian, jump channels and propagator cache."""
    if couplings is None:
        couplings = coupling_matrices(geometry, scheme)
    basis = TruncatedBasis(geometry.n, max_excitations, scheme)
    channels = jump_decomposition(couplings)
    h_eff = build_effective_hamiltonian(basis, couplings, drive)
    propagators = None
    if basis.dim <= dense_limit:
        dense = h_eff.toarray()
        propagators = tuple(scipy.linalg.expm(-1j * dense * span) for span in LADDER_SPANS)
    return TrajectorySystem(basis, couplings, drive, h_eff, channels, propagators)


def _philox_stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))


def _run_batch(
    system: TrajectorySystem,
    t_total: float,
    window: float,
    rngs: Sequence,
    trace: list[list] | None = None,
):
    """Advance a batch of trajectories in lockstep to ``t_total``.

    Returns per-trajectory time-averaged populations (B, n, 6), ground-state
    coherences <sigma_ge> (B, n, 6), jump counts and accumulated window
    weight.  All trajectories in the batch share the cached propagators;
    each consumes only its own random stream, so results are independent of
    how trajectories are grouped into batches.
    """
    basis = system.basis
    n_atoms, dim = basis.n_atoms, basis.dim
    batch = len(rngs)
    window_start = t_total * (1.0 - window)
    indicator = basis.population_indicator
    pair_table = system._pair_table

    psis = np.zeros((batch, dim), dtype=complex)
    psis[:, basis.ground_state_index] = 1.0
    t = np.zeros(batch)
    survival = np.ones(batch)
    threshold = np.array([r.uniform() for r in rngs])
    mode = np.zeros(batch, dtype=np.int8)
    counter = np.zeros(batch, dtype=np.int32)
    jumps = np.zeros(batch, dtype=np.int64)
    pop_acc = np.zeros((batch, n_atoms * 6))
    coh_acc = np.zeros((batch, n_atoms * 6), dtype=complex)
    weight = np.zeros(batch)

    def log(i, scale, event):
        if trace is not None:
            trace[i].append((_SCALE_NAMES[scale], event))

    def accumulate(idx, states, start):
        span_end = t[idx]
        w = np.minimum(span_end, t_total) - np.maximum(start, window_start)
        sel = w > 0
        if not np.any(sel):
            return
        rows = idx[sel]
        ww = w[sel]
        pop_acc[rows] += ww[:, None] * (np.abs(states[sel]) ** 2 @ indicator)
        for a, (src, tgt) in enumerate(pair_table):
            coh_acc[rows, a] += ww * np.sum(
                np.conj(states[sel][:, tgt]) * states[sel][:, src], axis=1
            )
        weight[rows] += ww

    def do_jump(i, psi):
        vecs = system.apply_channels(psi)
        wts = system.channels.rates * np.einsum("ld,ld->l", np.conj(vecs), vecs).real
        total = wts.sum()
        if total <= 0:
            # nothing can decay (e.g. forced crossing out of a dark state);
            # reset the survival clock and keep going
            survival[i] = 1.0
            threshold[i] = rngs[i].uniform()
            mode[i] = 0
            return
        u = rngs[i].uniform() * total
        chan = int(np.searchsorted(np.cumsum(wts), u, side="left"))
        chan = min(chan, wts.size - 1)
        out = vecs[chan]
        psis[i] = out / np.linalg.norm(out)
        jumps[i] += 1
        survival[i] = 1.0
        threshold[i] = rngs[i].uniform()
        mode[i] = 0
        counter[i] = 0
        log(i, 2, "jump")

    while True:
        active = t < t_total - 1e-9
        if not np.any(active):
            break
        remaining = t_total - t
        scale = mode.astype(np.int64).copy()
        tail = active & (mode == 0)
        scale[tail & (remaining < LADDER_SPANS[0])] = 1
        scale[tail & (remaining < LADDER_SPANS[1])] = 2

        for s in (0, 1, 2):
            grp = np.where(active & (scale == s))[0]
            if grp.size == 0:
                continue
            span = LADDER_SPANS[s]
            if system.propagators is not None:
                stepped = psis[grp] @ system.propagators[s].T
            else:
                stepped = np.stack(
                    [evolve_nojump(system.h_eff, psis[i], span) for i in grp]
                )
            prob = np.einsum("bd,bd->b", np.conj(stepped), stepped).real
            cand = survival[grp] * prob
            crossed = cand <= threshold[grp]

            ok = grp[~crossed]
            if ok.size:
                psis[ok] = stepped[~crossed] / np.sqrt(prob[~crossed])[:, None]
                survival[ok] = cand[~crossed]
                start = t[ok].copy()
                t[ok] += span
                accumulate(ok, psis[ok], start)
                for i in ok:
                    log(i, s, "ok")
                # rescan bookkeeping: exhausting a rescan without a crossing
                # means the threshold sits within rounding of the segment
                # boundary, so fire the jump right here
                scanning = ok[mode[ok] == s] if s > 0 else np.empty(0, dtype=int)
                if scanning.size:
                    counter[scanning] -= 1
                    exhausted = scanning[counter[scanning] == 0]
                    for i in exhausted:
                        do_jump(i, psis[i])

            ov = grp[crossed]
            if ov.size == 0:
                continue
            if s < 2:
                # replay the failed segment at the next finer scale; psis[ov]
                # still holds the segment-start state
                mode[ov] = s + 1
                counter[ov] = _RESCAN[s]
                for i in ov:
                    log(i, s, "rescan")
            else:
                start = t[ov].copy()
                t[ov] += span
                pre_jump = stepped[crossed] / np.sqrt(prob[crossed])[:, None]
                psis[ov] = pre_jump
                accumulate(ov, pre_jump, start)
                for k, i in enumerate(ov):
                    do_jump(i, pre_jump[k])

    bad = weight <= 0
    if np.any(bad):
        raise RuntimeError("observation window collected zero weight; t_total too short")
    pops = (pop_acc / weight[:, None]).reshape(batch, n_atoms, 6)
    coh = (coh_acc / weight[:, None]).reshape(batch, n_atoms, 6)
    return pops, coh, jumps, weight


@dataclass(frozen=True)
class TrajectoryObservables:
    """Time averages over the observation window of a single trajectory."""

    populations: np.ndarray  # (n, 6)
    coherences: np.ndarray  # (n, 6) complex, <sigma_ge> per transition
    jumps: int
    weight: float


def run_trajectory(
    system: TrajectorySystem,
    seed: int,
    traj_index: int = 0,
    *,
    t_total: float | None = None,
    window: float = 0.2,
    rng=None,
    trace: list | None = None,
) -> TrajectoryObservables:
    """Run one trajectory on its own counter-based random stream.

    ``trace``, if given, collects (scale, event) tuples for every attempted
    segment -- handy for exercising the ladder control flow in tests.
    """
    if t_total is None:
        t_total = _default_duration(system.drive)
    rngs = [rng if rng is not None else _philox_stream(seed, traj_index)]
    traces = [trace] if trace is not None else None
    pops, coh, jumps, weight = _run_batch(system, t_total, window, rngs, traces)
    return TrajectoryObservables(pops[0], coh[0], int(jumps[0]), float(weight[0]))


def _default_duration(drive: DriveParams) -> float:
    # the ground-state pumping rate scales as omega^2; ten pumping times
    # lets the slowest observable settle before the window opens
    if drive.rabi <= 0:
        return 10 * LADDER_SPANS[0]
    return 10.0 / drive.rabi**2


@dataclass(frozen=True)
class EnsembleResult:
    """Trajectory-ensemble estimate of the steady state."""

    populations: np.ndarray  # (n, 6) ensemble mean of time averages
    populations_se: np.ndarray  # (n, 6) standard error over trajectories
    coherences: np.ndarray  # (n, 6) complex
    traj_populations: np.ndarray  # (n_traj, n, 6)
    jumps: np.ndarray  # (n_traj,)
    n_traj: int
    t_total: float
    window: float
    seed: int
    max_excitations: int
    basis_dim: int

    @property
    def p1_bar(self) -> float:
        return float(self.populations[:, 0].mean())

    @property
    def p1_bar_se(self) -> float:
        per_traj = self.traj_populations[:, :, 0].mean(axis=1)
        return float(per_traj.std(ddof=1) / math.sqrt(self.n_traj))

    @property
    def p2_bar(self) -> float:
        return float(self.populations[:, 1].mean())

    @property
    def ground_ratio(self) -> float:
        return self.p1_bar / self.p2_bar

    @property
    def excited_population(self) -> float:
        return float(self.populations[:, 2:].sum(axis=1).mean())


def qmcw_steady_state(
    geometry: ArrayGeometry,
    scheme: LevelScheme = SCHEME,
    drive: DriveParams = DriveParams(),
    *,
    couplings: CouplingMatrices | None = None,
    max_excitations: int = 1,
    n_traj: int = 2400,
    seed: int = 0,
    traj_offset: int = 0,
    t_total: float | None = None,
    window: float = 0.2,
    batch_size: int | None = None,
    system: TrajectorySystem | None = None,
) -> EnsembleResult:
    """Monte Carlo wave-function estimate of the driven steady state.

    Trajectory ``i`` consumes the counter-based stream keyed by
    ``(seed, traj_offset + i)``, so ensembles can be split across calls (or
    machines) and merged without any overlap or order dependence.
    """
    if n_traj < 2:
        raise ValueError("need at least two trajectories for a standard error")
    if system is None:
        system = prepare_system(
            geometry, scheme, drive, couplings=couplings, max_excitations=max_excitations
        )
    if t_total is None:
        t_total = _default_duration(drive)
    if batch_size is None:
        batch_size = n_traj

    pops = np.empty((n_traj, system.basis.n_atoms, 6))
    coh = np.empty((n_traj, system.basis.n_atoms, 6), dtype=complex)
    jumps = np.empty(n_traj, dtype=np.int64)
    for lo in range(0, n_traj, batch_size):
        hi = min(lo + batch_size, n_traj)
        rngs = [_philox_stream(seed, traj_offset + i) for i in range(lo, hi)]
        p, c, j, _ = _run_batch(system, t_total, window, rngs)
        pops[lo:hi], coh[lo:hi], jumps[lo:hi] = p, c, j

    return EnsembleResult(
        populations=pops.mean(axis=0),
        populations_se=pops.std(axis=0, ddof=1) / math.sqrt(n_traj),
        coherences=coh.mean(axis=0),
        traj_populations=pops,
        jumps=jumps,
        n_traj=n_traj,
        t_total=float(t_total),
        window=float(window),
        seed=int(seed),
        max_excitations=int(max_excitations),
        basis_dim=system.basis.dim,
    )


# ---------------------------------------------------------------------------
# exact reference
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExactSteadyState:
    """Steady-state density matrix of the truncated master equation."""

    basis: TruncatedBasis
    rho: np.ndarray
    populations: np.ndarray  # (n, 6)
    coherences: np.ndarray  # (n, 6) complex

    @property
    def p1_bar(self) -> float:
        return float(self.populations[:, 0].mean())

    @property
    def p2_bar(self) -> float:
        return float(self.populations[:, 1].mean())


def exact_master_equation(
    geometry: ArrayGeometry,
    scheme: LevelScheme = SCHEME,
    drive: DriveParams = DriveParams(),
    *,
    couplings: CouplingMatrices | None = None,
    max_excitations: int | None = None,
    dense_limit: int = 80,
) -> ExactSteadyState:
    """Solve the truncated master equation directly for its steady state.

    The vectorized generator (row-major convention) has its first row
    replaced by the trace constraint; for basis dimensions above
    ``dense_limit`` the resulting linear system is solved sparse.
    """
    if couplings is None:
        couplings = coupling_matrices(geometry, scheme)
    if max_excitations is None:
        max_excitations = min(2, geometry.n)
    basis = TruncatedBasis(geometry.n, max_excitations, scheme)
    dim = basis.dim
    h_eff = build_effective_hamiltonian(basis, couplings, drive)
    channels = jump_decomposition(couplings)

    eye = sp.identity(dim, dtype=complex, format="csr")
    lind = -1j * (sp.kron(h_eff, eye) - sp.kron(eye, h_eff.conj()))
    for rate, op in zip(channels.rates, channels.operators(basis)):
        lind = lind + rate * sp.kron(op, op.conj())
    lind = lind.tolil()
    lind[0, :] = 0.0
    lind[0, np.arange(dim) * dim + np.arange(dim)] = 1.0
    rhs = np.zeros(dim * dim, dtype=complex)
    rhs[0] = 1.0

    if dim <= dense_limit:
        vec = np.linalg.solve(lind.toarray(), rhs)
    else:
        vec = spsolve(lind.tocsc(), rhs)
    rho = vec.reshape(dim, dim)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real

    pops = (np.real(np.diag(rho)) @ basis.population_indicator).reshape(basis.n_atoms, 6)
    coh = np.empty((basis.n_atoms, 6), dtype=complex)
    for j in range(basis.n_atoms):
        for t in range(6):
            src, tgt = basis.transition_pairs(j, t)
            coh[j, t] = rho[src, tgt].sum()
    return ExactSteadyState(basis=basis, rho=rho, populations=pops, coherences=coh)
