"""Brute-force references: CASCI, Slater-Condon elements, S^2 and fidelities.

The CASCI Hamiltonian here is assembled from spin-resolved excitation
operators on alpha and beta strings, not from Slater-Condon rules, so it
is an independent route to the matrices built in :mod:`teqsci.qsci`.
"""

from __future__ import annotations

import itertools
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from teqsci.determinants import popcount, sector_counts
from teqsci.hamio import IntegralTable

DENSE_LIMIT = 4096
MAX_BASIS = 1_000_000


class BasisTooLarge(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CasciSolution:
    """Exact eigenpairs of one (N, ms2) sector.

    ``eigenvectors[:, k]`` holds root ``k`` over ``basis`` (ascending
    determinant integers, blocked spin-orbital convention).
    """

    n_electrons: int
    ms2: int
    basis: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def sector(self) -> tuple[int, int]:
        return self.n_electrons, self.ms2

    def state(self, root: int) -> dict[int, float]:
        return dict(zip(self.basis.tolist(), self.eigenvectors[:, root].tolist()))


def _strings(n_orbitals: int, n_occ: int) -> list[int]:
    return [sum(1 << p for p in c) for c in itertools.combinations(range(n_orbitals), n_occ)]


def _excitation_matrices(strings: list[int], n_orbitals: int) -> list[list[sp.csr_matrix]]:
    """E[p][q] = a_p^dag a_q on same-spin strings, with the in-string sign."""
    index = {s: i for i, s in enumerate(strings)}
    dim = len(strings)
    mats = [[None] * n_orbitals for _ in range(n_orbitals)]
    for p in range(n_orbitals):
        for q in range(n_orbitals):
            rows, cols, vals = [], [], []
            for j, s in enumerate(strings):
                if not (s >> q) & 1:
                    continue
                t = s ^ (1 << q)
                if (t >> p) & 1:
                    continue
                sign = (-1) ** (popcount(s & ((1 << q) - 1)) + popcount(t & ((1 << p) - 1)))
                rows.append(index[t | (1 << p)])
                cols.append(j)
                vals.append(float(sign))
            mats[p][q] = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))
    return mats


def _interleave(alpha: int, beta: int, n_orbitals: int) -> tuple[int, int]:
    """Blocked determinant for an (alpha, beta) string pair and its reordering sign.

    The product state (alpha creators)(beta creators)|0> equals
    sign * |det> where |det> creates spin orbitals in ascending order; each
    beta electron below an alpha electron costs one transposition.
    """
    det = 0
    swaps = 0
    betas_below = 0
    for p in range(n_orbitals):
        if (alpha >> p) & 1:
            det |= 1 << (2 * p)
            swaps += betas_below
        if (beta >> p) & 1:
            det |= 1 << (2 * p + 1)
            betas_below += 1
    return det, (-1) ** swaps


def sector_hamiltonian(table: IntegralTable) -> tuple[np.ndarray, sp.csr_matrix]:
    """Sector basis (ascending blocked determinants) and sparse Hamiltonian.

    H = e_core + sum_pq k_pq E_pq + 1/2 sum_pqrs (pq|rs) E_pq E_rs with
    E_pq = E^a_pq + E^b_pq and k_pq = h_pq - 1/2 sum_r (pr|rq).
    """
    m = table.n_orbitals
    na, nb = sector_counts(table.n_electrons, table.ms2)
    sa, sb = _strings(m, na), _strings(m, nb)
    dim = len(sa) * len(sb)
    if dim > MAX_BASIS:
        raise BasisTooLarge(f"sector basis of {dim} determinants exceeds {MAX_BASIS}")
    ea, eb = _excitation_matrices(sa, m), _excitation_matrices(sb, m)
    ia, ib = sp.identity(len(sa), format="csr"), sp.identity(len(sb), format="csr")
    E = [[sp.kron(ea[p][q], ib, format="csr") + sp.kron(ia, eb[p][q], format="csr") for q in range(m)] for p in range(m)]

    g = table.h2
    k = table.h1 - 0.5 * np.einsum("prrq->pq", g)
    ham = sp.identity(dim, format="csr") * table.e_core
    for p in range(m):
        for q in range(m):
            w = k[p, q] * sp.identity(dim, format="csr")
            for r in range(m):
                for s in range(m):
                    if g[p, q, r, s] != 0.0:
                        w = w + 0.5 * g[p, q, r, s] * E[r][s]
            ham = ham + E[p][q] @ w

    dets, signs = zip(*(_interleave(a, b, m) for a in sa for b in sb))
    dets = np.array(dets, dtype=np.int64)
    signs = np.array(signs, dtype=np.float64)
    # rotate into the blocked determinant basis and sort
    d = sp.diags(signs)
    ham = (d @ ham @ d).tocsr()
    order = np.argsort(dets)
    ham = ham[order][:, order]
    return dets[order], ham.tocsr()


def casci(table: IntegralTable, n_roots: int = 1) -> CasciSolution:
    """Lowest ``n_roots`` eigenpairs of the full sector of ``table``."""
    basis, ham = sector_hamiltonian(table)
    dim = len(basis)
    n_roots = min(n_roots, dim)
    if dim <= DENSE_LIMIT:
        dense = ham.toarray()
        dense = 0.5 * (dense + dense.T)
        w, v = scipy.linalg.eigh(dense, subset_by_index=(0, n_roots - 1))
    else:
        from teqsci.qsci import davidson

        w, v = davidson(ham, n_roots)
    for k in range(v.shape[1]):
        lead = np.argmax(np.abs(v[:, k]) > np.abs(v[:, k]).max() - 1e-12)
        if v[lead, k] < 0:
            v[:, k] *= -1
    return CasciSolution(table.n_electrons, table.ms2, basis, np.asarray(w), np.asarray(v))


# ---------------------------------------------------------------------------
# Pairwise rules


def _phase(det: int, k: int) -> int:
    return -1 if popcount(det & ((1 << k) - 1)) % 2 else 1


def _antisym(table: IntegralTable, p: int, q: int, r: int, s: int) -> float:
    """<pq||rs> in physicists' notation over spin orbitals."""
    g = table.h2
    val = 0.0
    if p % 2 == r % 2 and q % 2 == s % 2:
        val += g[p // 2, r // 2, q // 2, s // 2]
    if p % 2 == s % 2 and q % 2 == r % 2:
        val -= g[p // 2, s // 2, q // 2, r // 2]
    return val


def _h(table: IntegralTable, p: int, q: int) -> float:
    return table.h1[p // 2, q // 2] if p % 2 == q % 2 else 0.0


def slater_condon(table: IntegralTable, x: int, y: int) -> float:
    """<x|H|y> between two determinants by the Slater-Condon rules."""
    n = table.n_qubits
    occ_y = [k for k in range(n) if (y >> k) & 1]
    if x == y:
        e = table.e_core + sum(_h(table, k, k) for k in occ_y)
        for i, k in enumerate(occ_y):
            for l in occ_y[i + 1 :]:
                e += _antisym(table, k, l, k, l)
        return float(e)
    diff = x ^ y
    if popcount(x) != popcount(y) or popcount(diff) > 4:
        return 0.0
    parts = [k for k in range(n) if (diff >> k) & 1 and (x >> k) & 1]
    holes = [k for k in range(n) if (diff >> k) & 1 and (y >> k) & 1]
    if len(parts) == 1:
        p, q = parts[0], holes[0]
        mid = y ^ (1 << q)
        sign = _phase(y, q) * _phase(mid, p)
        val = _h(table, p, q)
        for k in occ_y:
            if k != q:
                val += _antisym(table, p, k, q, k)
        return float(sign * val)
    p, r = parts
    q, s = holes
    # x = a_p^dag a_r^dag a_s a_q y
    t = y
    sign = _phase(t, q)
    t ^= 1 << q
    sign *= _phase(t, s)
    t ^= 1 << s
    sign *= _phase(t, r)
    t ^= 1 << r
    sign *= _phase(t, p)
    return float(sign * _antisym(table, p, r, q, s))


def determinant_energy(table: IntegralTable, det: int) -> float:
    return slater_condon(table, det, det)


# ---------------------------------------------------------------------------
# State comparisons


def fidelity(a: Mapping[int, complex], b: Mapping[int, complex]) -> float:
    """|<a|b>|^2 for states given as determinant -> coefficient maps.

    Coefficients missing from either map count as zero.  Both states are
    renormalised first so the result lies in [0, 1].
    """
    na = sum(abs(c) ** 2 for c in a.values())
    nb = sum(abs(c) ** 2 for c in b.values())
    if na == 0.0 or nb == 0.0:
        return 0.0
    overlap = sum(np.conj(c) * b[d] for d, c in a.items() if d in b)
    return float(min(1.0, abs(overlap) ** 2 / (na * nb)))


def s_squared(state: Mapping[int, complex], n_orbitals: int) -> float:
    """<S^2> = |S+ psi|^2 + Sz (Sz + 1) for a normalised state.

    In the blocked ordering a_{p,alpha}^dag a_{p,beta} carries no sign: the
    removed beta bit sits directly above the created alpha bit.
    """
    raised: dict[int, complex] = {}
    sz = None
    norm = 0.0
    for det, c in state.items():
        if c == 0:
            continue
        norm += abs(c) ** 2
        m2 = popcount(det & int("01" * 32, 2)) - popcount(det & int("10" * 32, 2))
        sz = m2 / 2 if sz is None else sz
        for p in range(n_orbitals):
            a, b = 1 << (2 * p), 1 << (2 * p + 1)
            if det & b and not det & a:
                t = det ^ a ^ b
                raised[t] = raised.get(t, 0.0) + c
    if sz is None:
        return 0.0
    return float((sum(abs(v) ** 2 for v in raised.values()) + norm * sz * (sz + 1)) / norm)
