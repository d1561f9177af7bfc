"""Second-quantized Hamiltonians, the Jordan-Wigner map, and Pauli-sum algebra.

Pauli strings are plain ``str`` of letters ``I, X, Y, Z`` with character
``q`` acting on qubit ``q``.  Internally operators are assembled in the
"XZ form" ``c * X^x Z^z`` (``x``, ``z`` bit masks), where multiplication is

    (X^x1 Z^z1)(X^x2 Z^z2) = (-1)^|z1 & x2| X^(x1^x2) Z^(z1^z2)

and a letter ``Y`` corresponds to ``i X Z`` on that qubit.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from teqsci.hamio import IntegralTable

PRUNE_TOL = 1e-12
_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}


def pauli_weight(letters: str) -> int:
    return len(letters) - letters.count("I")


def pauli_masks(letters: str) -> tuple[int, int, int]:
    """Return ``(x_mask, z_mask, n_y)`` for a Pauli string."""
    x = z = 0
    for q, c in enumerate(letters):
        bx, bz = _LETTER_BITS[c]
        x |= bx << q
        z |= bz << q
    return x, z, letters.count("Y")


class PauliSum:
    """Weighted sum of Pauli strings on ``n_qubits`` qubits.

    Terms are canonical: one entry per string, coefficients with modulus
    below ``PRUNE_TOL`` removed.  Instances are treated as immutable.
    """

    __slots__ = ("n_qubits", "_terms", "_masks")

    def __init__(self, n_qubits: int, terms: Mapping[str, complex] | Iterable[tuple[str, complex]] = ()):
        self.n_qubits = int(n_qubits)
        acc: dict[str, complex] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for letters, c in items:
            if len(letters) != self.n_qubits:
                raise ValueError(f"Pauli string {letters!r} has length {len(letters)}, expected {self.n_qubits}")
            if set(letters) - set("IXYZ"):
                raise ValueError(f"invalid Pauli letters in {letters!r}")
            acc[letters] = acc.get(letters, 0.0) + complex(c)
        self._terms = {k: v for k, v in sorted(acc.items()) if abs(v) >= PRUNE_TOL}
        self._masks = None

    @classmethod
    def from_xz(cls, n_qubits: int, x: np.ndarray, z: np.ndarray, coeffs: np.ndarray) -> PauliSum:
        """Build from XZ-form arrays, summing duplicate ``(x, z)`` pairs."""
        x = np.asarray(x, dtype=np.int64)
        z = np.asarray(z, dtype=np.int64)
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        keys = (x << n_qubits) | z
        uniq, inv = np.unique(keys, return_inverse=True)
        total = np.bincount(inv, weights=coeffs.real, minlength=len(uniq)) + 1j * np.bincount(
            inv, weights=coeffs.imag, minlength=len(uniq)
        )
        ux, uz = uniq >> n_qubits, uniq & ((1 << n_qubits) - 1)
        # X^x Z^z = (-i)^{n_y} * letters, since XZ = -iY on each qubit
        ny = np.bitwise_count(ux & uz).astype(np.int64)
        total = total * (-1j) ** ny
        keep = np.abs(total) >= PRUNE_TOL
        terms = {}
        for xi, zi, c in zip(ux[keep].tolist(), uz[keep].tolist(), total[keep].tolist()):
            terms["".join("IXZY"[((xi >> q) & 1) | (((zi >> q) & 1) << 1)] for q in range(n_qubits))] = c
        return cls(n_qubits, terms)

    @classmethod
    def identity(cls, n_qubits: int, coeff: complex = 1.0) -> PauliSum:
        return cls(n_qubits, {"I" * n_qubits: coeff})

    @property
    def terms(self) -> dict[str, complex]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms.items())

    def __eq__(self, other):
        return isinstance(other, PauliSum) and self.n_qubits == other.n_qubits and self._terms == other._terms

    def __repr__(self):
        return f"PauliSum(n_qubits={self.n_qubits}, n_terms={len(self)})"

    def __sub__(self, other: PauliSum) -> PauliSum:
        return subtract(self, other)

    def __add__(self, other: PauliSum) -> PauliSum:
        if other.n_qubits != self.n_qubits:
            raise ValueError(f"qubit-count mismatch: {self.n_qubits} vs {other.n_qubits}")
        return PauliSum(self.n_qubits, list(self.items()) + list(other.items()))

    def scaled(self, factor: complex) -> PauliSum:
        return PauliSum(self.n_qubits, {k: factor * v for k, v in self.items()})

    def coefficient(self, letters: str) -> complex:
        return self._terms.get(letters, 0.0)

    def max_imag(self) -> float:
        return max((abs(c.imag) for c in self._terms.values()), default=0.0)

    def is_hermitian(self, atol: float = PRUNE_TOL) -> bool:
        return self.max_imag() < atol

    def masks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[str]]:
        """Arrays ``(x, z, phase, letters)`` with ``P = phase * X^x Z^z`` per term."""
        if self._masks is None:
            letters = list(self._terms)
            xs, zs, ph = [], [], []
            for s in letters:
                x, z, ny = pauli_masks(s)
                xs.append(x)
                zs.append(z)
                ph.append(1j**ny)
            self._masks = (
                np.array(xs, dtype=np.int64),
                np.array(zs, dtype=np.int64),
                np.array(ph, dtype=np.complex128),
                letters,
            )
        return self._masks

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """Matrix-vector product on a ``2**n_qubits`` amplitude vector."""
        vec = np.asarray(vec, dtype=np.complex128)
        idx = np.arange(vec.shape[0], dtype=np.int64)
        out = np.zeros_like(vec)
        xs, zs, ph, _ = self.masks()
        for x, z, p, c in zip(xs.tolist(), zs.tolist(), ph, self._terms.values()):
            sign = 1 - 2 * (np.bitwise_count(idx & z) & 1).astype(np.int8)
            out[idx ^ x] += (c * p) * sign * vec
        return out

    def expectation(self, vec: np.ndarray) -> complex:
        return complex(np.vdot(vec, self.apply(vec)))

    def to_sparse(self) -> sp.csr_matrix:
        dim = 1 << self.n_qubits
        idx = np.arange(dim, dtype=np.int64)
        rows, cols, vals = [], [], []
        xs, zs, ph, _ = self.masks()
        for x, z, p, c in zip(xs.tolist(), zs.tolist(), ph, self._terms.values()):
            sign = 1 - 2 * (np.bitwise_count(idx & z) & 1).astype(np.int8)
            rows.append(idx ^ x)
            cols.append(idx)
            vals.append((c * p) * sign)
        if not rows:
            return sp.csr_matrix((dim, dim), dtype=np.complex128)
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
        )

    def to_dense(self) -> np.ndarray:
        if self.n_qubits > 14:
            raise ValueError("dense matrices are limited to 14 qubits")
        return self.to_sparse().toarray()

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_qubits": self.n_qubits,
                "terms": [{"letters": k, "re": v.real, "im": v.imag} for k, v in self.items()],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> PauliSum:
        data = json.loads(text)
        return cls(data["n_qubits"], [(t["letters"], complex(t["re"], t["im"])) for t in data["terms"]])


def subtract(a: PauliSum, b: PauliSum) -> PauliSum:
    """Canonical ``a - b``; embed ``b`` first if it lives on fewer qubits."""
    if a.n_qubits != b.n_qubits:
        raise ValueError(f"qubit-count mismatch: {a.n_qubits} vs {b.n_qubits}")
    return PauliSum(a.n_qubits, list(a.items()) + [(k, -v) for k, v in b.items()])


def embed_operator(op: PauliSum, placement: Sequence[int], n_total: int) -> PauliSum:
    """Place ``op`` on qubits ``placement[q]`` of an ``n_total``-qubit register."""
    placement = [int(t) for t in placement]
    if len(placement) != op.n_qubits:
        raise ValueError(f"placement has {len(placement)} entries for {op.n_qubits} qubits")
    if len(set(placement)) != len(placement):
        raise ValueError(f"placement {placement} is not injective")
    if any(t < 0 or t >= n_total for t in placement):
        raise ValueError(f"placement {placement} out of range for {n_total} qubits")
    terms = []
    for letters, c in op.items():
        out = ["I"] * n_total
        for q, ch in enumerate(letters):
            out[placement[q]] = ch
        terms.append(("".join(out), c))
    return PauliSum(n_total, terms)


def orbital_placement(small_orbitals: Sequence[int], large_orbitals: Sequence[int]) -> list[int]:
    """Qubit placement of a sub-space's spin orbitals inside a larger space.

    Both arguments list parent-table orbital indices; the result maps qubit
    ``2a + s`` of the small register to the qubit of the same spin orbital in
    the large register.
    """
    pos = {p: i for i, p in enumerate(large_orbitals)}
    try:
        return [2 * pos[p] + s for p in small_orbitals for s in (0, 1)]
    except KeyError as exc:
        raise ValueError(f"orbital {exc.args[0]} is not part of the larger space") from exc


# ---------------------------------------------------------------------------
# Jordan-Wigner


def _ladder_xz(k: int, dagger: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """XZ form of a_k^(dagger) = 1/2 (X_k -/+ i Y_k) Z_{<k}.

    With Y = iXZ:  a_k = 1/2 (X - XZ) Z_{<k},  a_k^dag = 1/2 (X + XZ) Z_{<k}.
    """
    below = (1 << k) - 1
    x = np.array([1 << k, 1 << k], dtype=np.int64)
    z = np.array([below, below | (1 << k)], dtype=np.int64)
    c = np.array([0.5, 0.5 if dagger else -0.5], dtype=np.complex128)
    return x, z, c


def _product(a, b):
    """Product of two XZ-form sums given as (x, z, c) arrays (flattened)."""
    xa, za, ca = a
    xb, zb, cb = b
    sign = 1 - 2 * (np.bitwise_count(za[..., :, None] & xb[..., None, :]) & 1).astype(np.int64)
    x = xa[..., :, None] ^ xb[..., None, :]
    z = za[..., :, None] ^ zb[..., None, :]
    c = ca[..., :, None] * cb[..., None, :] * sign
    shape = x.shape[:-2] + (x.shape[-2] * x.shape[-1],)
    return x.reshape(shape), z.reshape(shape), c.reshape(shape)


def _excitation_table(n_so: int):
    """XZ forms of E_kl = a_k^dag a_l for all spin-orbital pairs, shape (n_so, n_so, 4)."""
    cre = [_ladder_xz(k, True) for k in range(n_so)]
    ann = [_ladder_xz(k, False) for k in range(n_so)]
    xs = np.zeros((n_so, n_so, 4), dtype=np.int64)
    zs = np.zeros_like(xs)
    cs = np.zeros((n_so, n_so, 4), dtype=np.complex128)
    for k in range(n_so):
        for l in range(n_so):
            xs[k, l], zs[k, l], cs[k, l] = _product(cre[k], ann[l])
    return xs, zs, cs


def spin_orbital_integrals(table: IntegralTable) -> tuple[np.ndarray, np.ndarray]:
    """Spin-orbital one-body matrix and chemists' two-body tensor.

    ``g[k, l, m, n] = (kl|mn)`` with spin selection (spin k == spin l and
    spin m == spin n).
    """
    m = table.n_orbitals
    n = 2 * m
    spat = np.arange(n) // 2
    spin = np.arange(n) % 2
    same = spin[:, None] == spin[None, :]
    h = np.where(same, table.h1[np.ix_(spat, spat)], 0.0)
    g = table.h2[np.ix_(spat, spat, spat, spat)] * (same[:, :, None, None] & same[None, None, :, :])
    return h, g


def jordan_wigner(table: IntegralTable) -> PauliSum:
    """Qubit Hamiltonian under the blocked (alpha, beta per orbital) ordering.

    H = e_core + sum_kl h_kl a_k^dag a_l
        + 1/2 sum_klmn (kl|mn) a_k^dag a_m^dag a_n a_l
      = e_core + sum_kl h_kl E_kl + 1/2 sum_klmn (kl|mn) (E_kl E_mn - delta_lm E_kn)
    """
    n = table.n_qubits
    h, g = spin_orbital_integrals(table)
    ex, ez, ec = _excitation_table(n)

    # one-body part with the contraction from reordering the two-body term
    h_eff = h - 0.5 * np.einsum("kllm->km", g)
    parts_x = [np.zeros(1, dtype=np.int64), ex.reshape(-1)]
    parts_z = [np.zeros(1, dtype=np.int64), ez.reshape(-1)]
    parts_c = [np.array([table.e_core], dtype=np.complex128), (ec * h_eff[:, :, None]).reshape(-1)]

    kl = np.argwhere(np.abs(g).reshape(n * n, n * n).max(axis=1) > 0).ravel()
    gm = g.reshape(n * n, n * n)
    exf, ezf, ecf = ex.reshape(n * n, 4), ez.reshape(n * n, 4), ec.reshape(n * n, 4)
    for a in kl.tolist():
        mn = np.nonzero(gm[a])[0]
        if not len(mn):
            continue
        left = (np.broadcast_to(exf[a], (len(mn), 4)), np.broadcast_to(ezf[a], (len(mn), 4)), np.broadcast_to(ecf[a], (len(mn), 4)))
        x, z, c = _product(left, (exf[mn], ezf[mn], ecf[mn]))
        parts_x.append(x.reshape(-1))
        parts_z.append(z.reshape(-1))
        parts_c.append((0.5 * gm[a, mn][:, None] * c).reshape(-1))

    return PauliSum.from_xz(n, np.concatenate(parts_x), np.concatenate(parts_z), np.concatenate(parts_c))


def number_operator(n_qubits: int) -> PauliSum:
    terms = [("I" * n_qubits, n_qubits / 2)]
    terms += [("I" * q + "Z" + "I" * (n_qubits - q - 1), -0.5) for q in range(n_qubits)]
    return PauliSum(n_qubits, terms)


def sz_operator(n_qubits: int) -> PauliSum:
    """Sz = 1/2 sum_p (n_p,alpha - n_p,beta) = -1/4 sum_q (+/-) Z_q."""
    terms = [("I" * q + "Z" + "I" * (n_qubits - q - 1), -0.25 if q % 2 == 0 else 0.25) for q in range(n_qubits)]
    return PauliSum(n_qubits, terms)


def ladder_operator(k: int, n_qubits: int, dagger: bool = False) -> PauliSum:
    x, z, c = _ladder_xz(k, dagger)
    return PauliSum.from_xz(n_qubits, x, z, c)
