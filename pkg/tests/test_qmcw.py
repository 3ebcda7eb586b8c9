import numpy as np
import pytest
import scipy.linalg

from dipolarray.geometry import disordered_chain, linear_chain
from dipolarray.green import coupling_matrices
from dipolarray.levels import SCHEME, DriveParams
from dipolarray.meanfield import mf_steady_state
from dipolarray.qmcw import (
    DissipationModelError,
    PropagationError,
    TruncatedBasis,
    build_effective_hamiltonian,
    build_hamiltonian,
    evolve_nojump,
    exact_master_equation,
    jump_decomposition,
    prepare_system,
    qmcw_steady_state,
    run_trajectory,
)

DRIVE = DriveParams(rabi=0.01)


# ---------------------------------------------------------------------------
# basis
# ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "n,max_exc,dim",
    [(1, 1, 6), (2, 1, 20), (2, 2, 36), (3, 2, 152), (8, 1, 4352)],
)
def test_basis_dimensions(n, max_exc, dim):
    # 2^n ground configurations plus C(n,k) 4^k 2^(n-k) for k excited atoms
    assert TruncatedBasis(n, max_exc).dim == dim


def test_basis_is_lexicographic_and_invertible():
    basis = TruncatedBasis(3, 1)
    rows = [tuple(r) for r in basis.levels]
    assert rows == sorted(rows)
    assert rows[0] == (0, 0, 0)
    for i, row in enumerate(rows):
        assert basis.index(row) == i
    with pytest.raises(KeyError):
        basis.index((2, 2, 0))  # two excitations, truncated away


def test_lowering_operator_action():
    basis = TruncatedBasis(2, 1)
    t26 = SCHEME.transition_index(2, 6)
    s = basis.lowering_operator(0, t26)
    src = basis.index((5, 1))  # atom 0 in |6>, atom 1 in |2>
    tgt = basis.index((1, 1))
    vec = np.zeros(basis.dim)
    vec[src] = 1.0
    out = s @ vec
    assert out[tgt] == 1.0 and np.count_nonzero(out) == 1
    # lowering a ground configuration gives nothing
    assert np.count_nonzero(s @ np.eye(basis.dim)[basis.index((1, 1))]) == 0
    # raising out of the truncated space is silently dropped
    raised = s.conj().T @ np.eye(basis.dim)[basis.index((1, 5))]
    assert np.count_nonzero(raised) == 0


# ---------------------------------------------------------------------------
# hamiltonians
# ---------------------------------------------------------------------------

def test_single_atom_hamiltonian_matrix():
    mats = coupling_matrices(linear_chain(1, 1.0))
    drive = DriveParams(rabi=0.01, detuning=0.2)
    h = build_hamiltonian(TruncatedBasis(1, 1), mats, drive).toarray()
    want = np.zeros((6, 6), dtype=complex)
    want[2:, 2:] = -0.2 * np.eye(4)
    want[5, 1] = want[1, 5] = -0.01  # sigma+ on the stretched transition
    want[4, 0] = want[0, 4] = -0.01 / np.sqrt(3.0)
    np.testing.assert_allclose(h, want, atol=1e-15)


def test_hamiltonian_hermitian_and_block_structure():
    geom = disordered_chain(3, 1.1, 0.2, seed=9, realization_index=1)
    mats = coupling_matrices(geom)
    basis = TruncatedBasis(3, 2)
    h = build_hamiltonian(basis, mats, DRIVE).toarray()
    np.testing.assert_allclose(h, h.conj().T, atol=1e-14)
    # without drive the exchange term conserves the excitation number
    h0 = build_hamiltonian(basis, mats, DriveParams(rabi=0.0)).toarray()
    ii, jj = np.nonzero(np.abs(h0) > 1e-15)
    assert np.all(basis.excitations[ii] == basis.excitations[jj])


def test_exchange_matrix_element():
    mats = coupling_matrices(linear_chain(2, 2.0))
    basis = TruncatedBasis(2, 1)
    h = build_hamiltonian(basis, mats, DriveParams(rabi=0.0)).toarray()
    t26 = SCHEME.transition_index(2, 6)
    a = basis.index((5, 1))  # atom 0 excited
    b = basis.index((1, 5))  # atom 1 excited
    np.testing.assert_allclose(h[a, b], -mats.coherent[0, 1, t26, t26], atol=1e-15)


def test_effective_hamiltonian_decay_part():
    # single atom: anti-Hermitian part is half the excited-state projector
    mats = coupling_matrices(linear_chain(1, 1.0))
    h_eff = build_effective_hamiltonian(TruncatedBasis(1, 1), mats, DRIVE).toarray()
    anti = (h_eff - h_eff.conj().T) / -2j
    np.testing.assert_allclose(anti, 0.5 * np.diag([0, 0, 1, 1, 1, 1.0]), atol=1e-14)

    # two atoms: it must equal the dissipative coupling form exactly
    mats2 = coupling_matrices(linear_chain(2, 2.0))
    basis = TruncatedBasis(2, 1)
    h_eff2 = build_effective_hamiltonian(basis, mats2, DRIVE).toarray()
    anti2 = (h_eff2 - h_eff2.conj().T) / -2j
    w = mats2.dissipative_compound()
    want = np.zeros_like(anti2)
    ops = [basis.lowering_operator(j, t).toarray() for j in range(2) for t in range(6)]
    for a in range(12):
        for b in range(12):
            want += w[a, b] * ops[a].conj().T @ ops[b]
    np.testing.assert_allclose(anti2, want, atol=1e-14)


# ---------------------------------------------------------------------------
# jump channels
# ---------------------------------------------------------------------------

def test_single_atom_channel_rates():
    ch = jump_decomposition(coupling_matrices(linear_chain(1, 1.0)))
    want = np.array([1.0, 1.0, 2 / 3, 2 / 3, 1 / 3, 1 / 3])
    np.testing.assert_allclose(ch.rates, want, atol=1e-12)


def test_channels_reconstruct_coupling_matrix():
    for geom in [linear_chain(2, 2.0), disordered_chain(3, 1.4, 0.3, seed=4, realization_index=2)]:
        mats = coupling_matrices(geom)
        ch = jump_decomposition(mats)
        np.testing.assert_allclose(ch.compound(), mats.dissipative_compound(), atol=1e-12)


def test_two_atom_collective_rates():
    # super/subradiant pairs split symmetrically around the bare rates
    ch = jump_decomposition(coupling_matrices(linear_chain(2, 2.0)))
    want = np.array(
        [1.01917477, 1.00954355, 0.99054668, 0.98118618, 0.67933181, 0.66666667,
         0.66666667, 0.65400152, 0.33948886, 0.33645493, 0.3301215, 0.32681686]
    )
    np.testing.assert_allclose(ch.rates, want, atol=1e-7)


def test_distant_atoms_decay_independently():
    ch = jump_decomposition(coupling_matrices(linear_chain(2, 1e6)))
    want = np.repeat([1.0, 2 / 3, 1 / 3], 4)
    np.testing.assert_allclose(ch.rates, want, atol=1e-5)


def test_decomposition_refuses_indefinite_coupling():
    # tightly packed chains push the pairwise channel matrix indefinite
    with pytest.raises(DissipationModelError):
        jump_decomposition(coupling_matrices(linear_chain(4, 0.5)))


def test_dissipator_superoperator_reconstruction():
    # channel unraveling and the raw coupling-matrix dissipator must agree
    mats = coupling_matrices(linear_chain(2, 2.0))
    basis = TruncatedBasis(2, 1)
    ch = jump_decomposition(mats)
    dim = basis.dim
    via_channels = np.zeros((dim * dim, dim * dim), dtype=complex)
    for rate, op in zip(ch.rates, ch.operators(basis)):
        j = op.toarray()
        via_channels += rate * np.kron(j, j.conj())
    w = mats.dissipative_compound()
    ops = [basis.lowering_operator(j, t).toarray() for j in range(2) for t in range(6)]
    direct = np.zeros_like(via_channels)
    for a in range(12):
        for b in range(12):
            if abs(w[a, b]) > 1e-15:
                direct += 2 * w[a, b] * np.kron(ops[b], ops[a].conj())
    np.testing.assert_allclose(via_channels, direct, atol=1e-10)


# ---------------------------------------------------------------------------
# no-jump propagation
# ---------------------------------------------------------------------------

def test_krylov_propagation_matches_dense_exponential():
    system = prepare_system(linear_chain(2, 1.0), drive=DRIVE)
    rng = np.random.default_rng(3)
    psi = rng.normal(size=system.basis.dim) + 1j * rng.normal(size=system.basis.dim)
    psi /= np.linalg.norm(psi)
    got = evolve_nojump(system.h_eff, psi, 1000.0)
    want = scipy.linalg.expm(-1j * system.h_eff.toarray() * 1000.0) @ psi
    assert np.linalg.norm(got - want) / np.linalg.norm(want) < 1e-8


def test_krylov_propagation_edge_cases():
    system = prepare_system(linear_chain(1, 1.0), drive=DRIVE)
    psi = np.zeros(6, dtype=complex)
    psi[1] = 1.0
    np.testing.assert_array_equal(evolve_nojump(system.h_eff, psi, 0.0), psi)
    # a Krylov space smaller than the Hilbert space cannot reach an absurd
    # tolerance; the propagator must refuse instead of silently degrading
    wide = prepare_system(linear_chain(2, 1.0), drive=DRIVE)
    start = np.zeros(wide.basis.dim, dtype=complex)
    start[wide.basis.ground_state_index] = 1.0
    with pytest.raises(PropagationError):
        evolve_nojump(wide.h_eff, start, 100.0, tol=1e-30, krylov_dim=3)


def test_norm_decay_equals_scattering_rate():
    # 1 - |exp(-i H_eff dt) psi|^2  ->  dt * sum_l rate_l |J_l psi|^2
    system = prepare_system(linear_chain(2, 1.0), drive=DRIVE)
    rng = np.random.default_rng(11)
    psi = rng.normal(size=system.basis.dim) + 1j * rng.normal(size=system.basis.dim)
    psi /= np.linalg.norm(psi)
    dt = 1e-3
    evolved = scipy.linalg.expm(-1j * system.h_eff.toarray() * dt) @ psi
    lost = 1.0 - np.linalg.norm(evolved) ** 2
    vecs = system.apply_channels(psi)
    rate = float(system.channels.rates @ np.einsum("ld,ld->l", np.conj(vecs), vecs).real)
    np.testing.assert_allclose(lost, dt * rate, rtol=1e-3)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

def test_undriven_array_is_dark():
    system = prepare_system(linear_chain(3, 1.0), drive=DriveParams(rabi=0.0))
    obs = run_trajectory(system, seed=0, t_total=5000.0)
    assert obs.jumps == 0
    want = np.zeros((3, 6))
    want[:, 1] = 1.0
    np.testing.assert_allclose(obs.populations, want, atol=1e-12)


def test_single_atom_jump_statistics():
    # mean jump rate must equal Gamma times the excited population
    drive = DriveParams(rabi=0.05)
    system = prepare_system(linear_chain(1, 1.0), drive=drive)
    obs = run_trajectory(system, seed=42, t_total=40000.0)
    expected = 40000.0 * drive.rabi**2 / (0.25 + 2 * drive.rabi**2)
    assert obs.jumps >= 300  # enough statistics for the band below to mean much
    assert abs(obs.jumps - expected) < 3.0 * np.sqrt(expected)


class _ScriptedRng:
    """uniform() pops preset values, then pins the threshold to zero."""

    def __init__(self, values):
        self.values = list(values)

    def uniform(self):
        return self.values.pop(0) if self.values else 0.0


def test_ladder_rescans_before_fine_scan():
    # rig the survival threshold so the jump lands inside the 21st medium
    # segment: the trajectory must accept twenty medium steps after the long
    # overshoot, then localize the jump with short steps
    drive = DriveParams(rabi=0.05)
    system = prepare_system(linear_chain(1, 1.0), drive=drive)
    h = system.h_eff.toarray()
    psi0 = np.zeros(6, dtype=complex)
    psi0[1] = 1.0

    def survival(t):
        return np.linalg.norm(scipy.linalg.expm(-1j * h * t) @ psi0) ** 2

    x = 0.5 * (survival(500.0) + survival(525.0))
    assert survival(525.0) < x < survival(500.0)
    crossing = next(k for k in range(501, 526) if survival(float(k)) <= x)

    trace: list = []
    obs = run_trajectory(
        system, seed=0, t_total=2000.0, rng=_ScriptedRng([x, 0.5]), trace=trace
    )
    assert trace[0] == ("long", "rescan")
    assert trace[1:21] == [("medium", "ok")] * 20
    assert trace[21] == ("medium", "rescan")
    shorts = trace[22 : 22 + (crossing - 501)]
    assert shorts == [("short", "ok")] * (crossing - 501)
    assert trace[22 + (crossing - 501)] == ("short", "jump")
    assert sum(1 for _, event in trace if event == "jump") == 1
    assert obs.jumps == 1


def test_ensemble_is_deterministic_and_batch_invariant():
    geom = linear_chain(2, 1.0)
    kw = dict(drive=DRIVE, t_total=20000.0)
    a = qmcw_steady_state(geom, n_traj=8, seed=7, **kw)
    b = qmcw_steady_state(geom, n_traj=8, seed=7, **kw)
    np.testing.assert_array_equal(a.traj_populations, b.traj_populations)
    assert a.jumps.tolist() == b.jumps.tolist()

    lo = qmcw_steady_state(geom, n_traj=4, seed=7, **kw)
    hi = qmcw_steady_state(geom, n_traj=4, seed=7, traj_offset=4, **kw)
    merged = np.concatenate([lo.traj_populations, hi.traj_populations])
    # trajectories own independent random streams; only BLAS batching leaves
    # reassociation-level residue
    np.testing.assert_allclose(merged, a.traj_populations, rtol=1e-12, atol=1e-15)
    assert np.concatenate([lo.jumps, hi.jumps]).tolist() == a.jumps.tolist()


def test_ensemble_matches_exact_master_equation():
    drive = DriveParams(rabi=0.03)
    geom = linear_chain(2, 1.0)
    exact = exact_master_equation(geom, drive=drive, max_excitations=1)
    res = qmcw_steady_state(geom, drive=drive, n_traj=240, seed=3)
    assert abs(res.p1_bar - exact.p1_bar) < 4.0 * res.p1_bar_se
    # total scattering bookkeeping: jumps per time = Gamma * excited population
    rate = res.jumps.mean() / res.t_total
    np.testing.assert_allclose(rate, exact.populations[:, 2:].sum(), rtol=0.05)


# ---------------------------------------------------------------------------
# exact reference
# ---------------------------------------------------------------------------

def test_exact_single_atom_formulas():
    ex = exact_master_equation(linear_chain(1, 1.0), drive=DRIVE)
    p6 = DRIVE.rabi**2 / (0.25 + 2 * DRIVE.rabi**2)
    assert abs(ex.populations[0, 0]) < 1e-12
    np.testing.assert_allclose(ex.populations[0, 5], p6, rtol=1e-10)
    np.testing.assert_allclose(ex.coherences[0, 5], 2j * DRIVE.rabi, rtol=1e-3)


def test_exact_state_is_physical_and_symmetric():
    ex = exact_master_equation(linear_chain(2, 2.0), drive=DRIVE, max_excitations=1)
    np.testing.assert_allclose(np.trace(ex.rho).real, 1.0, atol=1e-12)
    np.testing.assert_allclose(ex.rho, ex.rho.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(ex.rho).min() > -1e-12
    np.testing.assert_allclose(ex.populations[0], ex.populations[1], atol=1e-12)


def test_exact_truncation_is_converged_at_weak_drive():
    geom = linear_chain(2, 2.0)
    one = exact_master_equation(geom, drive=DRIVE, max_excitations=1)
    two = exact_master_equation(geom, drive=DRIVE, max_excitations=2)
    np.testing.assert_allclose(one.p1_bar, two.p1_bar, rtol=2e-3)


def test_exact_agrees_with_mean_field_at_weak_drive():
    geom = linear_chain(2, 2.0)
    ex = exact_master_equation(geom, drive=DRIVE, max_excitations=1)
    mf = mf_steady_state(geom, drive=DRIVE)
    p1_mf = mf.state.ground_populations()[:, 0].mean()
    assert abs(p1_mf - ex.p1_bar) / ex.p1_bar < 0.02


def test_exact_distant_atoms_do_not_mix():
    ex = exact_master_equation(linear_chain(2, 1e6), drive=DRIVE, max_excitations=1)
    assert ex.p1_bar < 1e-9
