import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kitaev_edge.lattice import build_lattice
from kitaev_edge.pauli import DimensionError, PauliString, apply_to_state, commutes, multiply
from kitaev_edge.statevector import StateVector, expectation

N = 4


@st.composite
def paulis(draw, n=N, hermitian=False):
    x = draw(st.integers(0, (1 << n) - 1))
    z = draw(st.integers(0, (1 << n) - 1))
    e = draw(st.sampled_from([0, 2] if hermitian else [0, 1, 2, 3]))
    return PauliString(n, x, z, e)


def test_single_qubit_products():
    x0 = PauliString.single(1, 0, "X")
    y0 = PauliString.single(1, 0, "Y")
    z0 = PauliString.single(1, 0, "Z")
    assert x0 * y0 == z0.with_phase(1j)
    assert (x0 * x0).is_identity()
    assert y0 * x0 == z0.with_phase(-1j)


def test_plaquette_squares_to_identity():
    lat = build_lattice(2, 3)
    for p in range(len(lat.plaquettes)):
        w = lat.plaquette_operator(p)
        assert (w * w).is_identity()


def test_commutation_examples():
    xx = PauliString.from_factors(2, {0: "X", 1: "X"})
    zz = PauliString.from_factors(2, {0: "Z", 1: "Z"})
    assert commutes(xx, zz)
    assert not commutes(PauliString.single(1, 0, "X"), PauliString.single(1, 0, "Z"))


def test_plaquettes_commute_with_bonds():
    lat = build_lattice(2, 3)
    for p in range(len(lat.plaquettes)):
        w = lat.plaquette_operator(p)
        assert all(commutes(w, lat.bond_pauli(b)) for b in lat.bonds)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        multiply(PauliString(2), PauliString(3))
    with pytest.raises(DimensionError):
        commutes(PauliString(2), PauliString(3))
    with pytest.raises(DimensionError):
        apply_to_state(PauliString(2), StateVector.zeros(3))


def test_apply_examples():
    s = StateVector.zeros(3)
    apply_to_state(PauliString.single(3, 0, "Z"), s)
    assert s.amplitudes[0] == 1
    apply_to_state(PauliString.single(3, 0, "X"), s)
    assert s.amplitudes[1] == 1 and abs(s.norm() - 1) < 1e-15


@pytest.mark.parametrize("text", ["+ X3 Y7 Z12", "-i Z0", "+ I", "-1 X0", "+i Y2 X5"])
def test_text_round_trip(text):
    p = PauliString.parse(text.replace("-1 ", "- "), 13)
    assert PauliString.parse(str(p), 13) == p


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        PauliString.parse("+ Q3", 4)
    with pytest.raises(ValueError):
        PauliString.parse("+ X1 Z1", 4)
    with pytest.raises(ValueError):
        PauliString.parse("+ X9", 4)


@given(paulis(), paulis())
def test_multiply_matches_dense(a, b):
    assert np.allclose((a * b).to_matrix(), a.to_matrix() @ b.to_matrix(), atol=1e-14)


@given(paulis(), paulis(), paulis())
def test_multiply_associative(a, b, c):
    assert (a * b) * c == a * (b * c)


@given(paulis(), paulis())
def test_commutes_iff_products_agree(a, b):
    ab, ba = a * b, b * a
    if commutes(a, b):
        assert ab == ba
    else:
        assert ab == -ba
    dense = a.to_matrix() @ b.to_matrix() - b.to_matrix() @ a.to_matrix()
    assert commutes(a, b) == np.allclose(dense, 0)


@given(paulis(), st.integers(0, 2**31 - 1))
def test_apply_matches_dense_and_preserves_norm(p, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(1 << N) + 1j * rng.standard_normal(1 << N)
    v /= np.linalg.norm(v)
    s = StateVector(v.copy())
    apply_to_state(p, s)
    assert np.allclose(s.amplitudes, p.to_matrix() @ v, atol=1e-14)
    assert abs(s.norm() - 1) < 1e-12


@given(paulis(hermitian=True), st.integers(0, 2**31 - 1))
def test_hermitian_expectation_is_real(p, seed):
    from kitaev_edge import _kernels

    s = StateVector.random(N, np.random.default_rng(seed))
    val = _kernels.expval(s.amplitudes, p.x, p.z, p.kernel_phase)
    assert abs(val.imag) < 1e-12
    assert abs(val.real - expectation(s, p)) < 1e-12
