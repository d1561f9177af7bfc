"""Subspace Hamiltonians over selected determinants and their eigenpairs."""

from __future__ import annotations

import itertools
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from teqsci.determinants import ALPHA_MASK, occupied_lists, to_bitstring
from teqsci.fermion_qubit import spin_orbital_integrals
from teqsci.hamio import IntegralTable

DENSE_CROSSOVER = 512
RESIDUAL_TOL = 1e-8
MAX_ITER = 200
DEGENERACY_TOL = 1e-10


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residuals: np.ndarray):
        super().__init__(f"{message}; residuals={np.array2string(residuals, precision=3)}")
        self.residuals = residuals


def _parity(dets: np.ndarray, k: np.ndarray) -> np.ndarray:
    return (np.bitwise_count(dets & ((np.int64(1) << k) - 1)) & 1).astype(np.int64)


def _as_array(configs: Iterable[int]) -> np.ndarray:
    return np.fromiter((int(d) for d in configs), dtype=np.int64)


def build_subspace_hamiltonian(table: IntegralTable, configs: Iterable[int]) -> sp.csr_matrix:
    """Sparse ``<x_i|H|x_j>`` over ``configs`` by the Slater-Condon rules.

    Connected pairs are found by generating every single and double
    excitation of each determinant and looking it up in the set, so the cost
    grows with ``len(configs)`` times the excitation count, not quadratically.
    """
    dets = _as_array(configs)
    n = table.n_qubits
    ne = table.n_electrons
    dim = len(dets)
    if dim == 0:
        return sp.csr_matrix((0, 0))
    if dets.min() < 0 or dets.max() >= (1 << n):
        raise ValueError(f"configuration wider than the {n}-qubit register")
    alpha = np.bitwise_count(dets & np.int64(ALPHA_MASK)).astype(np.int64)
    beta = np.bitwise_count(dets).astype(np.int64) - alpha
    bad = (alpha + beta != ne) | (alpha - beta != table.ms2)
    if bad.any():
        raise ValueError(
            f"configuration {to_bitstring(int(dets[bad][0]), n)} is outside the sector "
            f"(N={ne}, ms2={table.ms2})"
        )
    if len(np.unique(dets)) != dim:
        raise ValueError("duplicate configurations")

    h, g = spin_orbital_integrals(table)
    # A[k, l, m, n] = <kl||mn> = (km|ln) - (kn|lm)
    A = np.einsum("kmln->klmn", g) - np.einsum("knlm->klmn", g)
    coulomb_exchange = np.einsum("klkl->kl", A)
    single_tensor = np.einsum("pkqk->pqk", A)

    occ = occupied_lists(dets, n, ne)
    vir = occupied_lists(((1 << n) - 1) ^ dets, n, n - ne)

    diag = table.e_core + h[occ, occ].sum(axis=1)
    diag = diag + 0.5 * coulomb_exchange[occ[:, :, None], occ[:, None, :]].sum(axis=(1, 2))

    order = np.argsort(dets)
    sorted_dets = dets[order]

    def lookup(new):
        pos = np.searchsorted(sorted_dets, new)
        pos = np.minimum(pos, dim - 1)
        hit = sorted_dets[pos] == new
        return hit, order[pos]

    one = np.int64(1)
    rows, cols, vals = [np.arange(dim)], [np.arange(dim)], [diag]
    jdx = np.arange(dim)

    for a, b in itertools.product(range(ne), range(n - ne)):
        q, p = occ[:, a], vir[:, b]
        hit, i = lookup(dets ^ (one << q) ^ (one << p))
        if not hit.any():
            continue
        y, q, p, i, j, o = dets[hit], q[hit], p[hit], i[hit], jdx[hit], occ[hit]
        sign = 1 - 2 * (_parity(y, q) ^ _parity(y ^ (one << q), p))
        val = h[p, q] + single_tensor[p[:, None], q[:, None], o].sum(axis=1)
        rows.append(i)
        cols.append(j)
        vals.append(sign * val)

    occ_pairs = list(itertools.combinations(range(ne), 2))
    vir_pairs = list(itertools.combinations(range(n - ne), 2))
    for (a1, a2), (b1, b2) in itertools.product(occ_pairs, vir_pairs):
        q, s = occ[:, a1], occ[:, a2]
        p, r = vir[:, b1], vir[:, b2]
        hit, i = lookup(dets ^ (one << q) ^ (one << s) ^ (one << p) ^ (one << r))
        if not hit.any():
            continue
        y, q, s, p, r = dets[hit], q[hit], s[hit], p[hit], r[hit]
        # x = a_p^dag a_r^dag a_s a_q y
        t = y
        par = _parity(t, q)
        t = t ^ (one << q)
        par ^= _parity(t, s)
        t = t ^ (one << s)
        par ^= _parity(t, r)
        t = t ^ (one << r)
        par ^= _parity(t, p)
        rows.append(i[hit])
        cols.append(jdx[hit])
        vals.append((1 - 2 * par) * A[p, r, q, s])

    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    ).tocsr()
    mat.eliminate_zeros()
    return mat


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each vector positive (first on ties)."""
    for k in range(vecs.shape[1]):
        mag = np.abs(vecs[:, k])
        lead = int(np.argmax(mag > mag.max() - 1e-12))
        if vecs[lead, k] < 0:
            vecs[:, k] *= -1
    return vecs


def davidson(
    matrix,
    n_roots: int,
    tol: float = RESIDUAL_TOL,
    max_iter: int = MAX_ITER,
    max_space: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Block Davidson for the lowest eigenpairs of a real symmetric matrix.

    Uses the diagonal as preconditioner and collapses the search space to
    the current Ritz vectors when it exceeds ``max_space``.
    """
    dim = matrix.shape[0]
    diag = np.asarray(matrix.diagonal(), dtype=np.float64)
    block = min(dim, max(2 * n_roots, n_roots + 4))
    max_space = max_space or min(dim, max(20 * n_roots, 8 * block))

    V = np.zeros((dim, block))
    V[np.argsort(diag, kind="stable")[:block], np.arange(block)] = 1.0
    AV = np.asarray(matrix @ V)
    residuals = np.full(n_roots, np.inf)

    for _ in range(max_iter):
        S = V.T @ AV
        theta, s = np.linalg.eigh(0.5 * (S + S.T))
        X = V @ s[:, :block]
        AX = AV @ s[:, :block]
        R = AX[:, :n_roots] - X[:, :n_roots] * theta[:n_roots]
        residuals = np.linalg.norm(R, axis=0)
        if np.all(residuals < tol):
            return theta[:n_roots], _fix_signs(X[:, :n_roots].copy())
        if V.shape[1] >= dim:
            break

        new = []
        for k in np.nonzero(residuals >= tol)[0]:
            denom = theta[k] - diag
            denom[np.abs(denom) < 1e-8] = 1e-8
            new.append(R[:, k] / denom)
        T = np.array(new).T

        if V.shape[1] + T.shape[1] > max_space:
            V, AV = X, AX
        for _ in range(2):
            T -= V @ (V.T @ T)
        T, _ = np.linalg.qr(T)
        keep = np.linalg.norm(T - V @ (V.T @ T), axis=0) > 1e-6
        T = T[:, keep]
        if T.shape[1] == 0:
            # preconditioned residuals fell inside the space; fall back to raw residuals
            T = R[:, residuals >= tol]
            T -= V @ (V.T @ T)
            T, _ = np.linalg.qr(T)
            T = T[:, np.linalg.norm(T - V @ (V.T @ T), axis=0) > 1e-10]
            if T.shape[1] == 0:
                break
        V = np.hstack([V, T])
        AV = np.hstack([AV, np.asarray(matrix @ T)])

    raise ConvergenceError(f"Davidson did not converge {n_roots} roots in {max_iter} iterations", residuals)


def solve(matrix, n_roots: int) -> tuple[np.ndarray, np.ndarray]:
    """Lowest ``n_roots`` eigenpairs, ascending.

    Dense diagonalization below ``DENSE_CROSSOVER`` rows, Davidson above.
    """
    dim = matrix.shape[0]
    if n_roots < 1 or n_roots > dim:
        raise ValueError(f"n_roots={n_roots} must lie in [1, {dim}]")
    if sp.issparse(matrix):
        asym = abs(matrix - matrix.T).max() if matrix.nnz else 0.0
    else:
        matrix = np.asarray(matrix, dtype=np.float64)
        asym = np.abs(matrix - matrix.T).max()
    if asym > 1e-10:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.2e})")
    if dim < DENSE_CROSSOVER:
        dense = matrix.toarray() if sp.issparse(matrix) else matrix
        w, v = scipy.linalg.eigh(0.5 * (dense + dense.T), subset_by_index=(0, n_roots - 1))
        v = _fix_signs(v)
    else:
        w, v = davidson(matrix, n_roots)
    return np.asarray(w), np.asarray(v)


@dataclass(frozen=True, eq=False)
class SubspaceResult:
    configurations: tuple[int, ...]
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    n_roots: int
    sector: tuple[int, int]

    def state(self, root: int) -> dict[int, float]:
        return dict(zip(self.configurations, self.eigenvectors[:, root].tolist()))

    def top_amplitudes(self, root: int, k: int, n_qubits: int) -> list[tuple[str, float]]:
        vec = self.eigenvectors[:, root]
        idx = np.argsort(-np.abs(vec), kind="stable")[:k]
        return [(to_bitstring(self.configurations[i], n_qubits), float(vec[i])) for i in idx]


def _order_degenerate(w: np.ndarray, v: np.ndarray, dets: Sequence[int], n_qubits: int):
    """Within eigenvalue ties, order roots by their leading configuration's bitstring."""
    keys = []
    group = 0
    for k in range(len(w)):
        if k and w[k] - w[k - 1] > DEGENERACY_TOL * max(1.0, abs(w[k])):
            group += 1
        lead = int(np.argmax(np.abs(v[:, k])))
        keys.append((group, to_bitstring(dets[lead], n_qubits)))
    perm = sorted(range(len(w)), key=lambda k: keys[k])
    return w[perm], v[:, perm]


def qsci_energies(table: IntegralTable, configs: Iterable[int], n_roots: int) -> SubspaceResult:
    """Diagonalize ``H`` projected onto ``configs``."""
    dets = tuple(int(d) for d in configs)
    mat = build_subspace_hamiltonian(table, dets)
    w, v = solve(mat, min(n_roots, len(dets)))
    w, v = _order_degenerate(w, v, dets, table.n_qubits)
    return SubspaceResult(dets, w, v, len(w), (table.n_electrons, table.ms2))
