import numpy as np
import pytest
import scipy.sparse as sp

from teqsci.determinants import hartree_fock_determinant, sector_determinants
from teqsci.hamio import IntegralTable, random_integral_table
from teqsci.oracle import casci, sector_hamiltonian
from teqsci.qsci import (
    ConvergenceError,
    build_subspace_hamiltonian,
    davidson,
    qsci_energies,
    solve,
)


@pytest.mark.parametrize("m, n, ms2", [(2, 2, 0), (3, 3, 1), (4, 4, 0), (5, 4, 0), (5, 5, 1)])
def test_full_sector_build_equals_oracle_matrix(m, n, ms2):
    table = random_integral_table(m, n, ms2, seed=m * 7 + n)
    basis, ref = sector_hamiltonian(table)
    mat = build_subspace_hamiltonian(table, basis.tolist())
    assert abs(mat - ref).max() < 1e-12


def test_build_follows_input_order():
    table = random_integral_table(3, 2, seed=1)
    dets = sector_determinants(3, 2, 0).tolist()
    perm = np.random.default_rng(0).permutation(len(dets))
    a = build_subspace_hamiltonian(table, dets).toarray()
    b = build_subspace_hamiltonian(table, [dets[i] for i in perm]).toarray()
    assert np.allclose(b, a[np.ix_(perm, perm)], atol=1e-14)


@pytest.mark.parametrize(
    "configs, message",
    [([0b0111], "outside the sector"), ([0b0011, 0b0011], "duplicate"), ([1 << 10 | 1], "wider")],
)
def test_build_rejects_bad_configurations(configs, message):
    with pytest.raises(ValueError, match=message):
        build_subspace_hamiltonian(random_integral_table(2, 2, seed=0), configs)


def test_davidson_matches_dense():
    rng = np.random.default_rng(3)
    n = 600
    a = rng.normal(scale=0.01, size=(n, n))
    a = sp.csr_matrix(a + a.T + np.diag(np.arange(n, dtype=float)))
    w, v = davidson(a, 4)
    ref = np.linalg.eigvalsh(a.toarray())[:4]
    assert np.allclose(w, ref, atol=1e-9)
    assert np.allclose(np.linalg.norm(a @ v - v * w, axis=0), 0, atol=1e-7)


def test_davidson_reports_nonconvergence():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(300, 300))
    with pytest.raises(ConvergenceError) as info:
        davidson(sp.csr_matrix(a + a.T), 3, max_iter=2)
    assert info.value.residuals.shape == (3,)


def test_solve_validates_input():
    with pytest.raises(ValueError, match="symmetric"):
        solve(np.array([[0.0, 1.0], [0.0, 0.0]]), 1)
    with pytest.raises(ValueError):
        solve(np.eye(2), 3)


def test_solve_sign_convention():
    _, v = solve(np.diag([1.0, 2.0, 3.0]) - 0.1, 2)
    assert np.all(v[np.abs(v).argmax(axis=0), [0, 1]] > 0)


@pytest.mark.parametrize("m, n, ms2", [(4, 4, 0), (6, 6, 0), (5, 5, 1)])
def test_dense_and_davidson_paths_agree_with_oracle(m, n, ms2):
    table = random_integral_table(m, n, ms2, seed=2)
    basis = sector_determinants(m, n, ms2).tolist()
    res = qsci_energies(table, basis, 3)
    assert np.allclose(res.eigenvalues, casci(table, 3).eigenvalues, atol=1e-10)


def test_single_determinant_gives_its_energy():
    table = random_integral_table(4, 4, seed=4)
    hf = hartree_fock_determinant(4, 4, 0)
    res = qsci_energies(table, [hf], 3)
    assert res.n_roots == 1
    assert res.eigenvalues[0] == pytest.approx(build_subspace_hamiltonian(table, [hf])[0, 0])


def test_result_helpers():
    table = random_integral_table(3, 2, seed=8)
    dets = sector_determinants(3, 2, 0).tolist()
    res = qsci_energies(table, dets, 2)
    st = res.state(0)
    assert set(st) == set(dets)
    top = res.top_amplitudes(0, 3, table.n_qubits)
    assert len(top) == 3 and abs(top[0][1]) >= abs(top[1][1]) >= abs(top[2][1])
    assert res.sector == (2, 0)


def test_degenerate_roots_are_ordered_by_leading_bitstring():
    m = 3
    table = IntegralTable(m, 2, 0, 0.0, np.zeros((m, m)), np.zeros((m,) * 4))
    dets = sector_determinants(m, 2, 0).tolist()
    a = qsci_energies(table, dets, 4)
    keys = [a.top_amplitudes(k, 1, 6)[0][0] for k in range(4)]
    assert keys == sorted(keys)
    again = qsci_energies(table, dets, 4)
    assert np.array_equal(a.eigenvectors, again.eigenvectors)


def test_solve_small_analytic_cases():
    w, _ = solve(np.diag([3.0, 1.0, 2.0]), 2)
    assert np.allclose(w, [1.0, 2.0])
    a, b = 0.4, -0.3
    w, v = solve(np.array([[a, b], [b, a]]), 2)
    assert np.allclose(w, [a + b, a - b])
    assert np.allclose(np.abs(v), 1 / np.sqrt(2))


def test_matrix_elements_match_statevector_inner_products():
    from teqsci.fermion_qubit import jordan_wigner

    table = random_integral_table(4, 4, seed=31)
    op = jordan_wigner(table)
    dets = sector_determinants(4, 4, 0).tolist()
    rng = np.random.default_rng(1)
    pairs = rng.choice(len(dets), size=(100, 2))
    chosen = sorted({dets[i] for i in pairs.ravel()})
    mat = build_subspace_hamiltonian(table, chosen).toarray()
    pos = {d: k for k, d in enumerate(chosen)}
    for i, j in pairs:
        x, y = dets[i], dets[j]
        ey = np.zeros(256)
        ey[y] = 1.0
        assert mat[pos[x], pos[y]] == pytest.approx(op.apply(ey)[x].real, abs=1e-10)


def test_energies_do_not_depend_on_order_and_vectors_are_orthonormal():
    table = random_integral_table(5, 4, seed=12)
    dets = sector_determinants(5, 4, 0).tolist()
    rng = np.random.default_rng(5)
    subset = rng.choice(dets, size=60, replace=False).tolist()
    a = qsci_energies(table, subset, 3)
    b = qsci_energies(table, subset[::-1], 3)
    assert np.allclose(a.eigenvalues, b.eigenvalues, atol=1e-10)
    assert np.allclose(a.eigenvectors.T @ a.eigenvectors, np.eye(3), atol=1e-10)
    assert np.all(np.diff(a.eigenvalues) >= 0)
    assert np.all(a.eigenvalues >= casci(table, 3).eigenvalues - 1e-10)
