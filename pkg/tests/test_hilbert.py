import numpy as np
import pytest
import scipy.sparse as sp

from dicke_dtc import hilbert
from dicke_dtc.hilbert import AtomSector, CavitySpace


def test_single_atom_ladder():
    lad = hilbert.atom_ladder(AtomSector(1)).toarray()
    np.testing.assert_array_equal(lad, [[0, 0], [1, 0]])
    x = hilbert.atom_observables(AtomSector(1))["X"].toarray()
    np.testing.assert_array_equal(x, [[0, 1], [1, 0]])


def test_two_atom_matrix_element():
    lad = hilbert.atom_ladder(AtomSector(2)).toarray()
    assert lad[1, 0] == pytest.approx(np.sqrt(2))


@pytest.mark.parametrize("n", [1, 2, 5, 12])
def test_ladder_commutator(n):
    s = AtomSector(n)
    obs = hilbert.atom_observables(s)
    lad = hilbert.atom_ladder(s)
    comm = obs["n_up"] @ lad - lad @ obs["n_up"]
    assert abs(comm - lad).max() < 1e-14


def test_single_atom_paulis():
    obs = hilbert.atom_observables(AtomSector(1))
    np.testing.assert_allclose(obs["X"].toarray(), [[0, 1], [1, 0]])
    # sigma_y with |up> as the second basis vector
    np.testing.assert_allclose(obs["Y"].toarray(), [[0, 1j], [-1j, 0]])
    np.testing.assert_allclose(obs["Z"].toarray(), [[-1, 0], [0, 1]])


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_casimir(n):
    obs = hilbert.atom_observables(AtomSector(n))
    c = (obs["X"] @ obs["X"] + obs["Y"] @ obs["Y"] + obs["Z"] @ obs["Z"]).toarray()
    np.testing.assert_allclose(c, n * (n + 2) * np.eye(n + 1), atol=1e-12)


def test_all_excited_eigenvalue():
    n = 7
    z = hilbert.atom_observables(AtomSector(n))["Z"]
    e = np.zeros(n + 1)
    e[-1] = 1
    np.testing.assert_allclose(z @ e, n * e)


@pytest.mark.parametrize("n", [1, 3, 8])
def test_observables_hermitian(n):
    for name, o in hilbert.atom_observables(AtomSector(n)).items():
        assert hilbert.is_hermitian(o), name


def test_cavity_ops():
    c = hilbert.cavity_ops(CavitySpace(4))
    one = np.zeros(5)
    one[1] = 1
    np.testing.assert_allclose(c["a"] @ one, np.eye(5)[0])
    np.testing.assert_allclose((c["a_dag"] @ c["a"]).diagonal().real, np.arange(5))
    comm = (c["a"] @ c["a_dag"] - c["a_dag"] @ c["a"]).toarray()
    expected = np.eye(5)
    expected[4, 4] = -4
    np.testing.assert_allclose(comm, expected, atol=1e-14)


def test_kron_properties():
    s, c = AtomSector(3), CavitySpace(2)
    obs = hilbert.atom_observables(s)
    cv = hilbert.cavity_ops(c)
    a = hilbert.kron(c.identity(), obs["X"])
    b = hilbert.kron(cv["number"], s.identity())
    assert a.shape == (12, 12)
    assert abs(a @ b - b @ a).max() < 1e-14
    lhs = hilbert.kron(cv["a"], s.identity()) @ hilbert.kron(cv["a_dag"], s.identity())
    rhs = hilbert.kron(cv["a"] @ cv["a_dag"], s.identity())
    assert abs(lhs - rhs).max() < 1e-14


@pytest.mark.parametrize("bad", [0, -1])
def test_invalid_sizes(bad):
    with pytest.raises(ValueError):
        AtomSector(bad)
    with pytest.raises(ValueError):
        CavitySpace(bad)


def test_densify_threshold():
    small = sp.identity(4, format="csr")
    big = sp.identity(100, format="csr")
    assert isinstance(hilbert.densify(small), np.ndarray)
    assert sp.issparse(hilbert.densify(big))


@pytest.mark.parametrize("n", [1, 4, 6])
def test_matrix_round_trip(n, tmp_path):
    m = hilbert.atom_observables(AtomSector(n))["Y"]
    path = tmp_path / "y.txt"
    hilbert.dump_matrix(m, path)
    back = hilbert.load_matrix(path)
    assert back.shape == m.shape
    assert abs(back - m).max() == 0
