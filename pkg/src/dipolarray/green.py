"""Free-space dyadic field propagator and transition-basis coupling matrices.

A dipole oscillating at wavenumber k radiates a field whose amplitude at
separation r is carried by the dyadic kernel

    G_ab(r) = (1 / 4 pi k^2) (k^2 delta_ab + d_a d_b) e^{ikr} / r
            = (e^{ikr} / 4 pi r) [ (1 + (ikr - 1)/(kr)^2) delta_ab
                                   + ((3 - 3 ikr)/(kr)^2 - 1) rhat_a rhat_b ].

Everything the many-atom problem needs is built from projections of G onto
the spherical polarization vectors, weighted by Clebsch-Gordan factors: for
atoms j != l and transitions t' = (g', e'), t = (g, e),

    K[j, l, t', t] = (3 pi Gamma / k) conj(eps_{q'}) . G(r_j - r_l) . eps_q
                     * cg_{t'} * cg_t .

The projection of Re G enters the coherent exchange Hamiltonian, that of
Im G the collective dissipation.  Im G stays finite as r -> 0,
Im G_ab -> (k / 6 pi) delta_ab, which is exactly what makes the on-site
dissipation the independent single-atom decay Gamma cg^2; on-site blocks
are therefore the diagonal (Gamma/2) cg_t^2 and the divergent on-site
Re G (the free-space level shift) is dropped.

Units: Gamma = 1, lambda = 1, k = 2 pi.  For atoms on a line along x the
3x3 dyad is diagonal, so every projected block is real; the assembly below
exploits that and returns float arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import ArrayGeometry
from .levels import SCHEME, LevelScheme

K_WAVE = 2.0 * np.pi  # wavenumber in units lambda = 1


def green_tensor(r_vec, k: float = K_WAVE) -> np.ndarray:
    """Closed-form G_ab(r) as a complex (3, 3) array.

    r_vec is the observation-minus-source separation in wavelengths.
    Raises ValueError at zero separation, where Re G diverges.
    """
    r_vec = np.asarray(r_vec, dtype=float)
    r = np.linalg.norm(r_vec)
    if r == 0.0:
        raise ValueError("green_tensor is singular at zero separation")
    kr = k * r
    rhat = r_vec / r
    a = 1.0 + (1j * kr - 1.0) / kr**2
    b = -1.0 + (3.0 - 3j * kr) / kr**2
    prefactor = np.exp(1j * kr) / (4.0 * np.pi * r)
    return prefactor * (a * np.eye(3) + b * np.outer(rhat, rhat))


def far_field_green(direction, source_position, radius: float, k: float = K_WAVE) -> np.ndarray:
    """Leading 1/R transverse form of G for an observer at R * nhat.

        G_ff = (e^{ikR} / 4 pi R) (1 - nhat nhat) e^{-ik nhat . r_source}

    Phase-exact in the source position; agrees with green_tensor to O(1/R).
    """
    n = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(n)
    if norm == 0.0:
        raise ValueError("direction must be a nonzero vector")
    n = n / norm
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    src = np.asarray(source_position, dtype=float)
    phase = np.exp(1j * k * (radius - n @ src)) / (4.0 * np.pi * radius)
    return phase * (np.eye(3) - np.outer(n, n))


# ---------------------------------------------------------------------------
# coupling assembly
# ---------------------------------------------------------------------------

def _axial_projections(x: np.ndarray, k: float):
    """Spherical projections of G(x * xhat) for an array of distances |x| > 0.

    Returns (p_same, p_cross, p_pi):
        p_same  = eps_q'^dag G eps_q  for q' = q = +-1   ( = (G_xx + G_yy)/2 )
        p_cross = the +1 <-> -1 helicity mixing term     ( = -(G_xx - G_yy)/2 )
        p_pi    = the q' = q = 0 term                    ( = G_zz )
    Cross terms between q = 0 and q = +-1 vanish identically on the axis.
    """
    r = np.abs(x)
    kr = k * r
    phase = np.exp(1j * kr) / (4.0 * np.pi * r)
    a = 1.0 + (1j * kr - 1.0) / kr**2
    b = -1.0 + (3.0 - 3j * kr) / kr**2
    gxx = phase * (a + b)   # longitudinal
    gyy = phase * a         # transverse; equals G_zz
    return 0.5 * (gxx + gyy), -0.5 * (gxx - gyy), gyy


@dataclass
class CouplingMatrices:
    """Transition-basis couplings for one geometry.

    coherent[j, l, t', t]    -- (3 pi / k) eps'* . Re G . eps * cg' cg, zero on-site
    dissipative[j, l, t', t] -- same with Im G off-site; (1/2) cg_t^2 diagonal on-site

    Both are real for chain geometries (the dyad is diagonal on the axis).
    The compound (n*6, n*6) views flatten (atom, transition) with transition
    fastest; `mf_kernel` is the full complex off-site coupling
    coherent + i * dissipative_offsite that sources the mean-field drive.
    """

    geometry: ArrayGeometry
    coherent: np.ndarray
    dissipative: np.ndarray
    scheme: LevelScheme = field(default_factory=LevelScheme)

    @property
    def n(self) -> int:
        return self.geometry.n

    def compound(self, blocks: np.ndarray) -> np.ndarray:
        n = self.n
        return blocks.transpose(0, 2, 1, 3).reshape(6 * n, 6 * n)

    def coherent_compound(self) -> np.ndarray:
        return self.compound(self.coherent)

    def dissipative_compound(self) -> np.ndarray:
        return self.compound(self.dissipative)

    def mf_kernel(self) -> np.ndarray:
        kernel = self.coherent + 1j * self.dissipative
        idx = np.arange(self.n)
        kernel[idx, idx] = 0.0
        return kernel


def _transition_masks(scheme: LevelScheme):
    """cg outer product and the three axial projection masks over (t', t)."""
    cg = np.array([scheme.cg(g, e) for g, e in scheme.transitions])
    qs = np.array([scheme.q(g, e) for g, e in scheme.transitions])
    same_q = qs[:, None] == qs[None, :]
    circ = np.abs(qs) == 1
    mask_same = same_q & circ[:, None] & circ[None, :]
    mask_cross = (qs[:, None] == -qs[None, :]) & circ[:, None] & circ[None, :]
    mask_pi = (qs[:, None] == 0) & (qs[None, :] == 0)
    return np.outer(cg, cg), mask_same, mask_cross, mask_pi


def axial_coupling_block(distances, scheme: LevelScheme = SCHEME, k: float = K_WAVE) -> np.ndarray:
    """Full complex coupling block K(r) for each axial separation, shape (..., 6, 6)."""
    distances = np.atleast_1d(np.asarray(distances, dtype=float))
    cgcg, mask_same, mask_cross, mask_pi = _transition_masks(scheme)
    p_same, p_cross, p_pi = _axial_projections(distances, k)
    pref = 3.0 * np.pi / k
    return pref * (
        p_same[..., None, None] * mask_same
        + p_cross[..., None, None] * mask_cross
        + p_pi[..., None, None] * mask_pi
    ) * cgcg


def coupling_matrices(
    geometry: ArrayGeometry,
    scheme: LevelScheme = SCHEME,
    k: float = K_WAVE,
) -> CouplingMatrices:
    """Assemble the coherent and dissipative coupling blocks for a chain.

    Positions must be collinear along x (ordered or axially disordered
    chains); that keeps every projected block real.  Atom pairs at identical
    positions are rejected.
    """
    pos = geometry.positions
    n = geometry.n
    if n > 1 and (np.any(pos[:, 1] != 0.0) or np.any(pos[:, 2] != 0.0)):
        raise ValueError("coupling assembly expects a chain along x")

    cg = np.array([scheme.cg(g, e) for g, e in scheme.transitions])

    coherent = np.zeros((n, n, 6, 6))
    dissipative = np.zeros((n, n, 6, 6))

    if n > 1:
        dx = pos[:, 0][:, None] - pos[:, 0][None, :]
        iu, il = np.triu_indices(n, 1)
        dists = np.abs(dx[iu, il])
        if np.any(dists == 0.0):
            raise ValueError("two atoms coincide; couplings are singular")
        # chains are often equally spaced: evaluate each distinct distance once
        uniq, inverse = np.unique(np.round(dists, 12), return_inverse=True)
        block = axial_coupling_block(uniq, scheme, k)[inverse]
        coherent[iu, il] = block.real
        coherent[il, iu] = block.real.transpose(0, 2, 1)
        dissipative[iu, il] = block.imag
        dissipative[il, iu] = block.imag.transpose(0, 2, 1)

    # on-site: independent decay, diagonal in the transition index
    onsite = 0.5 * np.diag(cg**2)
    idx = np.arange(n)
    dissipative[idx, idx] = onsite

    return CouplingMatrices(geometry, coherent, dissipative, scheme)
