"""Occupation-bitstring helpers shared by the sampling, selection and CI code.

A determinant is an integer whose bit ``k`` is the occupation of spin orbital
``k``.  Spin orbitals are blocked by spatial orbital: ``k = 2 * p + s`` with
``s = 0`` for alpha and ``s = 1`` for beta.  The same integer is the index of
the computational basis state in a statevector (qubit ``k`` is bit ``k``).
When rendered as text, qubit 0 is the leftmost character.
"""

from __future__ import annotations

import itertools
from collections.abc import Iterable

import numpy as np

ALPHA_MASK = int("01" * 32, 2)  # bits 0, 2, 4, ...
BETA_MASK = ALPHA_MASK << 1


def popcount(x: int) -> int:
    return bin(x).count("1")


def to_bitstring(det: int, n_qubits: int) -> str:
    """Render ``det`` with qubit 0 as the leftmost character."""
    return "".join("1" if (det >> q) & 1 else "0" for q in range(n_qubits))


def from_bitstring(bits: str) -> int:
    det = 0
    for q, c in enumerate(bits):
        if c == "1":
            det |= 1 << q
        elif c != "0":
            raise ValueError(f"invalid character {c!r} in bitstring {bits!r}")
    return det


def n_alpha(det: int) -> int:
    return popcount(det & ALPHA_MASK)


def n_beta(det: int) -> int:
    return popcount(det & BETA_MASK)


def ms2_of(det: int) -> int:
    """Twice the Sz projection of ``det``."""
    return n_alpha(det) - n_beta(det)


def in_sector(det: int, n_electrons: int, ms2: int) -> bool:
    a, b = n_alpha(det), n_beta(det)
    return a + b == n_electrons and a - b == ms2


def sector_counts(n_electrons: int, ms2: int) -> tuple[int, int]:
    """Return ``(n_alpha, n_beta)`` for a sector, validating parity."""
    if (n_electrons + ms2) % 2:
        raise ValueError(f"n_electrons={n_electrons} and ms2={ms2} have different parity")
    na, nb = (n_electrons + ms2) // 2, (n_electrons - ms2) // 2
    if na < 0 or nb < 0:
        raise ValueError(f"|ms2|={abs(ms2)} exceeds n_electrons={n_electrons}")
    return na, nb


def spatial_occupancy(det: int, n_orbitals: int) -> tuple[int, ...]:
    """Occupation number (0, 1 or 2) of every spatial orbital."""
    return tuple(((det >> (2 * p)) & 1) + ((det >> (2 * p + 1)) & 1) for p in range(n_orbitals))


def sector_determinants(n_orbitals: int, n_electrons: int, ms2: int) -> np.ndarray:
    """All determinants of a (N, ms2) sector, sorted ascending."""
    na, nb = sector_counts(n_electrons, ms2)
    if na > n_orbitals or nb > n_orbitals:
        return np.zeros(0, dtype=np.int64)
    alphas = [sum(1 << (2 * p) for p in c) for c in itertools.combinations(range(n_orbitals), na)]
    betas = [sum(1 << (2 * p + 1) for p in c) for c in itertools.combinations(range(n_orbitals), nb)]
    dets = np.array([a | b for a in alphas for b in betas], dtype=np.int64)
    return np.sort(dets)


def hartree_fock_determinant(n_orbitals: int, n_electrons: int, ms2: int) -> int:
    """Aufbau determinant: lowest alpha and beta orbitals filled."""
    na, nb = sector_counts(n_electrons, ms2)
    if na > n_orbitals or nb > n_orbitals:
        raise ValueError("too many electrons for the orbital count")
    det = 0
    for p in range(na):
        det |= 1 << (2 * p)
    for p in range(nb):
        det |= 1 << (2 * p + 1)
    return det


def remap_bits(dets: Iterable[int] | np.ndarray, placement: list[int] | tuple[int, ...]) -> np.ndarray:
    """Move bit ``q`` of every determinant to bit ``placement[q]``."""
    dets = np.asarray(dets, dtype=np.int64)
    out = np.zeros_like(dets)
    for q, target in enumerate(placement):
        out |= ((dets >> q) & 1) << target
    return out


def occupied_lists(dets: np.ndarray, n_qubits: int, n_occupied: int) -> np.ndarray:
    """Row ``i`` holds the ascending occupied spin orbitals of ``dets[i]``.

    All determinants must have exactly ``n_occupied`` set bits.
    """
    bits = ((dets[:, None] >> np.arange(n_qubits, dtype=np.int64)) & 1).astype(bool)
    rows, cols = np.nonzero(bits)
    if len(rows) != len(dets) * n_occupied:
        raise ValueError("determinants do not share a common particle number")
    return cols.reshape(len(dets), n_occupied)
