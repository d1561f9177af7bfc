"""Statevector simulation of the time-evolution sampling circuit.

The circuit sets the frozen extra orbitals with X gates, loads an
eigenvector of the small-space Hamiltonian into its sub-register, applies a
first-order product formula for ``exp(-i (H - H0) t)`` and measures every
qubit in the computational basis.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from teqsci.determinants import remap_bits, to_bitstring
from teqsci.fermion_qubit import PauliSum, pauli_masks, pauli_weight

MAX_QUBITS = 24
NORM_TOL = 1e-10


class QubitLimitError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Statevector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.n_qubits > MAX_QUBITS:
            raise QubitLimitError(f"{self.n_qubits} qubits exceeds the simulator cap of {MAX_QUBITS}")
        amps = np.array(self.amplitudes, dtype=np.complex128)
        if amps.shape != (1 << self.n_qubits,):
            raise ValueError(f"expected {1 << self.n_qubits} amplitudes, got shape {amps.shape}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis_state(cls, det: int, n_qubits: int) -> Statevector:
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[det] = 1.0
        return cls(n_qubits, amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def prepare_initial_state(
    dets: Sequence[int],
    coeffs: Sequence[complex],
    placement: Sequence[int],
    extra_occupied: Sequence[int],
    n_total: int,
) -> Statevector:
    """Embed a small-register state and set the extra occupied qubits.

    ``dets``/``coeffs`` give the small-register state in the determinant
    basis; qubit ``q`` of the small register lands on ``placement[q]``.
    """
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    norm2 = float(np.sum(np.abs(coeffs) ** 2))
    if abs(norm2 - 1.0) > NORM_TOL:
        raise ValueError(f"initial state is not normalized (|psi|^2 = {norm2!r})")
    overlap = set(placement) & set(extra_occupied)
    if overlap:
        raise ValueError(f"qubits {sorted(overlap)} are both in the placement and set by X gates")
    if len(set(placement)) != len(placement):
        raise ValueError(f"placement {list(placement)} is not injective")
    if any(q < 0 or q >= n_total for q in list(placement) + list(extra_occupied)):
        raise ValueError(f"qubit index out of range for a {n_total}-qubit register")
    if n_total > MAX_QUBITS:
        raise QubitLimitError(f"{n_total} qubits exceeds the simulator cap of {MAX_QUBITS}")
    extra = sum(1 << q for q in extra_occupied)
    big = remap_bits(dets, list(placement)) | extra
    amps = np.zeros(1 << n_total, dtype=np.complex128)
    np.add.at(amps, big, coeffs)
    return Statevector(n_total, amps)


def two_qubit_cost(letters: str) -> int:
    """CNOT count of a Pauli exponential built from a CNOT ladder."""
    w = pauli_weight(letters)
    return 2 * (w - 1) if w > 1 else 0


@dataclass(frozen=True)
class TrotterPlan:
    """A truncated first-order product formula.

    ``ranked`` lists every term by descending ``|coefficient|`` (ties by
    letters) with ``truncated[i]`` marking the dropped ones.  ``terms`` holds
    the retained terms in application order: terms sharing the same X/Y
    support commute and are kept adjacent, groups ordered by their largest
    coefficient.
    """

    n_qubits: int
    terms: tuple[tuple[str, float], ...]
    n_steps: int
    dt: float
    gate_budget_per_step: float
    ranked: tuple[tuple[str, float], ...] = field(repr=False)
    truncated: tuple[bool, ...] = field(repr=False)

    @property
    def gates_per_step(self) -> int:
        return sum(two_qubit_cost(s) for s, _ in self.terms)

    @property
    def n_retained(self) -> int:
        return len(self.terms)

    @property
    def total_time(self) -> float:
        return self.n_steps * self.dt


def build_trotter_plan(op: PauliSum, dt: float, n_steps: int, gate_budget: float = math.inf) -> TrotterPlan:
    """Rank terms, keep the greedy prefix that fits ``gate_budget`` per step.

    Walking the ranked list, two-qubit-gate cost accumulates until the first
    costly term that would overflow the budget; that term and every later
    costly term are dropped.  Terms of weight <= 1 (including the identity)
    cost nothing and are always kept.
    """
    if not op.is_hermitian():
        raise ValueError(f"operator is not hermitian (max imaginary part {op.max_imag():.2e})")
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    if gate_budget < 0:
        raise ValueError("gate_budget must be non-negative")
    ranked = sorted(((s, c.real) for s, c in op.items()), key=lambda t: (-abs(t[1]), t[0]))
    used = 0
    closed = False
    truncated = []
    for letters, _ in ranked:
        cost = two_qubit_cost(letters)
        if cost == 0:
            truncated.append(False)
        elif not closed and used + cost <= gate_budget:
            used += cost
            truncated.append(False)
        else:
            closed = True
            truncated.append(True)

    groups: dict[int, list[tuple[str, float]]] = {}
    for (letters, c), cut in zip(ranked, truncated):
        if not cut:
            groups.setdefault(pauli_masks(letters)[0], []).append((letters, c))
    terms = tuple(t for g in groups.values() for t in g)
    return TrotterPlan(op.n_qubits, terms, int(n_steps), float(dt), gate_budget, tuple(ranked), tuple(truncated))


def evolve(state: Statevector, plan: TrotterPlan) -> Statevector:
    """Apply ``prod_terms exp(-i c dt P)`` in plan order, ``n_steps`` times."""
    if plan.n_qubits != state.n_qubits:
        raise ValueError(f"plan acts on {plan.n_qubits} qubits, state has {state.n_qubits}")
    psi = state.amplitudes.copy()
    if plan.n_steps == 0 or plan.dt == 0.0 or not plan.terms:
        return Statevector(state.n_qubits, psi)

    idx = np.arange(psi.shape[0], dtype=np.int64)

    def signs(z: int) -> np.ndarray:
        return 1.0 - 2.0 * (np.bitwise_count(idx & z) & 1)

    # diagonal runs collapse into one phase vector; X/Y terms act pairwise
    ops = []
    diag = None
    for letters, c in plan.terms:
        x, z, ny = pauli_masks(letters)
        theta = c * plan.dt
        if x == 0:
            part = theta * signs(z) if z else np.full(psi.shape[0], theta)
            diag = part if diag is None else diag + part
            continue
        if diag is not None:
            ops.append(("diag", np.exp(-1j * diag)))
            diag = None
        ops.append(("flip", (x, z, 1j**ny, math.cos(theta), math.sin(theta))))
    if diag is not None:
        ops.append(("diag", np.exp(-1j * diag)))

    for _ in range(plan.n_steps):
        for kind, data in ops:
            if kind == "diag":
                psi *= data
            else:
                x, z, phase, cos, sin = data
                # (P psi)[i ^ x] = phase * (-1)^{|i & z|} psi[i]
                p_psi = np.empty_like(psi)
                p_psi[idx ^ x] = phase * signs(z) * psi
                psi = cos * psi - 1j * sin * p_psi
    return Statevector(state.n_qubits, psi)


@dataclass(frozen=True)
class ShotBatch:
    """Measurement record of one circuit: ``(bitstring, count)`` sorted by bitstring."""

    outcomes: tuple[tuple[str, int], ...]
    n_shots: int
    dt: float | None = None
    j: int | None = None

    def __post_init__(self):
        if sum(c for _, c in self.outcomes) != self.n_shots:
            raise ValueError("outcome multiplicities do not sum to n_shots")

    @property
    def width(self) -> int | None:
        return len(self.outcomes[0][0]) if self.outcomes else None


def sample(state: Statevector, n_shots: int, seed: int, dt: float | None = None, j: int | None = None) -> ShotBatch:
    """Draw ``n_shots`` computational-basis outcomes from ``|amplitude|^2``.

    Randomness comes from a Philox-4x64 counter-based generator keyed by
    ``SeedSequence(seed)``; shot ``k`` takes the ``k``-th uniform ``u`` of
    ``Generator.random`` and reports the first basis index whose cumulative
    probability exceeds ``u`` times the total.
    """
    if n_shots < 0:
        raise ValueError("n_shots must be non-negative")
    probs = state.probabilities()
    total = probs.sum()
    if total == 0.0:
        raise ValueError("cannot sample a zero-norm state")
    if n_shots == 0:
        return ShotBatch((), 0, dt, j)
    rng = np.random.Generator(np.random.Philox(seed))
    cdf = np.cumsum(probs)
    u = rng.random(n_shots) * cdf[-1]
    # cdf[i] > u >= cdf[i-1] implies probs[i] > 0, so empty states are never reported
    picks = np.minimum(np.searchsorted(cdf, u, side="right"), len(probs) - 1)
    values, counts = np.unique(picks, return_counts=True)
    outcomes = sorted((to_bitstring(int(v), state.n_qubits), int(c)) for v, c in zip(values, counts))
    return ShotBatch(tuple(outcomes), int(n_shots), dt, j)
