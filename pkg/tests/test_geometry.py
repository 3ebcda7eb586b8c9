import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dipolarray.geometry import (
    ArrayGeometry,
    DisorderSpec,
    disordered_chain,
    linear_chain,
    load_geometry,
)


def test_ordered_chain_equally_spaced():
    g = linear_chain(17, 2.0)
    gaps = np.diff(g.positions[:, 0])
    assert np.all(np.abs(gaps - 2.0) < 1e-12)
    assert np.all(g.positions[:, 1:] == 0.0)


def test_single_atom_and_empty():
    g = linear_chain(1, 2.0)
    assert g.n == 1
    with pytest.raises(ValueError):
        linear_chain(0, 2.0)


@given(
    n=st.integers(min_value=2, max_value=40),
    eps=st.floats(min_value=0.0, max_value=0.5),
    seed=st.integers(min_value=0, max_value=2**31),
    idx=st.integers(min_value=0, max_value=10_000),
)
@settings(max_examples=50, deadline=None)
def test_disordered_gaps_within_bounds(n, eps, seed, idx):
    g = disordered_chain(n, 2.0, eps, seed, idx)
    gaps = np.diff(g.positions[:, 0])
    assert np.all(gaps >= 2.0 - 1e-12)
    assert np.all(gaps <= 2.0 + eps + 1e-12)
    assert np.all(g.positions[:, 1:] == 0.0)  # axial-only displacement


def test_disorder_reproducible_and_realizations_distinct():
    a = disordered_chain(12, 2.0, 0.05, seed=7, realization_index=3)
    b = disordered_chain(12, 2.0, 0.05, seed=7, realization_index=3)
    c = disordered_chain(12, 2.0, 0.05, seed=7, realization_index=4)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, c.positions)


def test_dump_load_roundtrip_exact(tmp_path):
    g = disordered_chain(9, 2.0, 0.05, seed=1, realization_index=2)
    path = tmp_path / "chain.txt"
    g.dump(path)
    back = load_geometry(path)
    np.testing.assert_array_equal(back.positions, g.positions)
    assert back.spacing == g.spacing
    assert back.disorder is not None and back.disorder.epsilon == 0.05
    assert back.realization_index == 2


def test_geometry_validation():
    with pytest.raises(ValueError):
        ArrayGeometry(np.zeros((3, 2)), 1.0)
    with pytest.raises(ValueError):
        DisorderSpec(epsilon=-0.1)
    with pytest.raises(ValueError):
        disordered_chain(5, 2.0, -0.01, 0, 0)
