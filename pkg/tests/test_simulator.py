import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from teqsci.determinants import hartree_fock_determinant
from teqsci.fermion_qubit import PauliSum, jordan_wigner, number_operator, sz_operator
from teqsci.hamio import random_integral_table
from teqsci.simulator import (
    QubitLimitError,
    Statevector,
    build_trotter_plan,
    evolve,
    prepare_initial_state,
    sample,
    two_qubit_cost,
)


def random_state(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return Statevector(n, v / np.linalg.norm(v))


@pytest.mark.parametrize("letters", ["XIZ", "YYI", "ZZZ", "IXY", "III", "ZIY"])
def test_single_term_is_exact(letters):
    op = PauliSum(3, {letters: 0.7})
    psi = random_state(3, 1)
    out = evolve(psi, build_trotter_plan(op, 0.3, 2))
    ref = scipy.linalg.expm(-1j * 0.6 * op.to_dense()) @ psi.amplitudes
    assert np.allclose(out.amplitudes, ref, atol=1e-12)


def test_commuting_diagonal_sum_is_exact():
    op = PauliSum(4, {"ZZII": 0.3, "IZIZ": -1.1, "ZIII": 0.5, "IIII": 2.0})
    psi = random_state(4, 2)
    out = evolve(psi, build_trotter_plan(op, 0.25, 3))
    ref = scipy.linalg.expm(-1j * 0.75 * op.to_dense()) @ psi.amplitudes
    assert np.allclose(out.amplitudes, ref, atol=1e-12)


def test_first_order_error_is_small_for_small_steps():
    op = jordan_wigner(random_integral_table(3, 2, seed=0))
    psi = random_state(6, 3)
    ref = scipy.linalg.expm(-1j * 1e-3 * op.to_dense()) @ psi.amplitudes
    out = evolve(psi, build_trotter_plan(op, 1e-3, 1))
    assert np.linalg.norm(out.amplitudes - ref) < 1e-5


def test_untruncated_evolution_conserves_n_and_sz():
    table = random_integral_table(4, 4, seed=5)
    op = jordan_wigner(table)
    psi = Statevector.basis_state(hartree_fock_determinant(4, 4, 0), 8)
    out = evolve(psi, build_trotter_plan(op, 1.5, 2))
    probs = out.probabilities()
    occupied = np.array([bin(i).count("1") for i in range(256)])
    assert probs[occupied != 4].sum() < 1e-24
    for o in (number_operator(8), sz_operator(8)):
        assert o.expectation(out.amplitudes) == pytest.approx(o.expectation(psi.amplitudes), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 5.0), st.integers(1, 4), st.sampled_from([0, 20, 100, math.inf]))
def test_evolution_is_unitary(seed, dt, steps, budget):
    op = jordan_wigner(random_integral_table(3, 3, 1, seed=seed))
    psi = random_state(6, seed)
    out = evolve(psi, build_trotter_plan(op, dt, steps, budget))
    assert out.norm() == pytest.approx(1.0, abs=1e-12)


def test_plan_truncation_rules():
    op = PauliSum(
        4,
        {"XXII": 1.0, "YYYY": 0.9, "ZZII": 0.8, "XIIX": 0.7, "ZIII": 0.1, "IIII": 0.05},
    )
    costs = {s: two_qubit_cost(s) for s in op.terms}
    assert costs == {"XXII": 2, "YYYY": 6, "ZZII": 2, "XIIX": 2, "ZIII": 0, "IIII": 0}

    full = build_trotter_plan(op, 0.1, 1)
    assert full.n_retained == 6 and not any(full.truncated)
    assert full.gates_per_step == 12

    # 2 + 6 > 5: YYYY overflows and closes the prefix, so ZZII and XIIX go too
    plan = build_trotter_plan(op, 0.1, 1, gate_budget=5)
    kept = {s for s, _ in plan.terms}
    assert kept == {"XXII", "ZIII", "IIII"}
    assert plan.gates_per_step <= 5

    zero = build_trotter_plan(op, 0.1, 1, gate_budget=0)
    assert {s for s, _ in zero.terms} == {"ZIII", "IIII"}
    assert [s for s, _ in plan.ranked][:2] == ["XXII", "YYYY"]


def test_plan_rejects_non_hermitian_and_bad_arguments():
    with pytest.raises(ValueError, match="hermitian"):
        build_trotter_plan(PauliSum(1, {"X": 1j}), 0.1, 1)
    with pytest.raises(ValueError):
        build_trotter_plan(PauliSum(1, {"X": 1.0}), 0.1, -1)
    with pytest.raises(ValueError):
        build_trotter_plan(PauliSum(1, {"X": 1.0}), 0.1, 1, gate_budget=-1)


def test_prepare_initial_state():
    psi = prepare_initial_state([0b01, 0b10], [0.6, 0.8], [2, 3], [0, 1], 6)
    nz = {i: psi.amplitudes[i] for i in np.nonzero(psi.amplitudes)[0]}
    assert nz == {0b000111: 0.6, 0b001011: 0.8}
    with pytest.raises(ValueError, match="normalized"):
        prepare_initial_state([0b01], [0.5], [0, 1], [], 2)
    with pytest.raises(ValueError, match="both"):
        prepare_initial_state([0b01], [1.0], [0, 1], [1], 3)
    with pytest.raises(QubitLimitError):
        prepare_initial_state([0b01], [1.0], [0, 1], [], 26)


def test_statevector_guards():
    with pytest.raises(QubitLimitError):
        Statevector(25, np.zeros(1))
    with pytest.raises(ValueError):
        Statevector(2, np.zeros(3))
    sv = Statevector.basis_state(3, 2)
    with pytest.raises(ValueError):
        sv.amplitudes[0] = 1.0


def test_sampling_is_deterministic_and_complete():
    psi = random_state(5, 7)
    a = sample(psi, 1000, seed=42, dt=0.5, j=1)
    b = sample(psi, 1000, seed=42, dt=0.5, j=1)
    assert a == b
    assert sum(c for _, c in a.outcomes) == 1000
    assert [s for s, _ in a.outcomes] == sorted(s for s, _ in a.outcomes)
    assert a.width == 5 and (a.dt, a.j) == (0.5, 1)
    assert sample(psi, 1000, seed=43) != sample(psi, 1000, seed=42)


def test_sampling_never_reports_zero_probability_outcomes():
    amps = np.zeros(16, dtype=complex)
    amps[[0, 5, 15]] = [0.6, 0.0, 0.8]
    batch = sample(Statevector(4, amps), 5000, seed=1)
    assert {s for s, _ in batch.outcomes} == {"0000", "1111"}


def test_sampling_frequencies_follow_born_rule():
    psi = random_state(3, 11)
    n = 200_000
    batch = sample(psi, n, seed=5)
    freq = np.zeros(8)
    for bits, c in batch.outcomes:
        freq[int(bits[::-1], 2)] = c / n
    p = psi.probabilities()
    assert np.all(np.abs(freq - p) < 5 * np.sqrt(p * (1 - p) / n) + 1e-12)


def test_zero_shots_and_errors():
    psi = random_state(2, 0)
    assert sample(psi, 0, seed=1).outcomes == ()
    with pytest.raises(ValueError):
        sample(psi, -1, seed=1)
    with pytest.raises(ValueError):
        sample(Statevector(2, np.zeros(4)), 10, seed=1)


def test_initial_state_examples():
    psi = prepare_initial_state([0b11], [1.0], [2, 3], [0, 1], 4)
    assert psi.amplitudes[0b1111] == 1.0 and psi.norm() == 1.0
    h = 1 / np.sqrt(2)
    psi = prepare_initial_state([0b01, 0b10], [h, h], [2, 3], [0, 1], 4)
    from teqsci.determinants import to_bitstring

    nz = sorted(to_bitstring(int(i), 4) for i in np.nonzero(psi.amplitudes)[0])
    assert nz == ["1101", "1110"]
    assert np.allclose(np.abs(psi.amplitudes[[0b0111, 0b1011]]), h)


def h4_generator(data_dir):
    from teqsci.fermion_qubit import embed_operator, orbital_placement, subtract
    from teqsci.hamio import ActiveSpaceSpec, read_fcidump, restrict_active_space

    parent = read_fcidump(data_dir / "h4.fcidump")
    t = restrict_active_space(parent, ActiveSpaceSpec(4, (0, 1, 2, 3)))
    t0 = restrict_active_space(parent, ActiveSpaceSpec(2, (1, 2)))
    placement = orbital_placement((1, 2), (0, 1, 2, 3))
    h0 = embed_operator(jordan_wigner(t0), placement, 8)
    return t0, placement, h0, subtract(jordan_wigner(t), h0)


def test_embedded_h0_eigenstate_energy(data_dir):
    from teqsci.oracle import casci

    t0, placement, h0, _ = h4_generator(data_dir)
    sol = casci(t0, 3)
    for k in range(3):
        psi = prepare_initial_state(sol.basis.tolist(), sol.eigenvectors[:, k], placement, [0, 1], 8)
        assert h0.expectation(psi.amplitudes).real == pytest.approx(sol.eigenvalues[k], abs=1e-10)


@pytest.mark.parametrize("budget", [0, 10, 50, 200, 500, math.inf])
def test_retained_count_matches_independent_greedy(data_dir, budget):
    _, _, _, gen = h4_generator(data_dir)
    items = sorted(gen.terms.items(), key=lambda kv: (-abs(kv[1]), kv[0]))
    spent, blocked, expected = 0, False, 0
    for letters, _ in items:
        w = sum(ch != "I" for ch in letters)
        cost = 0 if w <= 1 else 2 * (w - 1)
        if cost == 0:
            expected += 1
        elif not blocked and spent + cost <= budget:
            spent += cost
            expected += 1
        else:
            blocked = True
    plan = build_trotter_plan(gen, 0.5, 2, budget)
    assert plan.n_retained == expected
    assert plan.gates_per_step <= budget
    assert sum(not t for t in plan.truncated) == expected


def test_zero_time_is_identity():
    op = jordan_wigner(random_integral_table(2, 2, seed=1))
    psi = random_state(4, 9)
    assert np.array_equal(evolve(psi, build_trotter_plan(op, 0.0, 2)).amplitudes, psi.amplitudes)
    with pytest.raises(ValueError):
        evolve(random_state(3, 0), build_trotter_plan(op, 0.1, 1))


def test_basis_state_sampling_and_uniform_statistics():
    batch = sample(Statevector.basis_state(0b0110, 4), 500, seed=3)
    assert batch.outcomes == (("0110", 500),)
    n = 1_000_000
    uniform = sample(Statevector(2, np.full(4, 0.5)), n, seed=8)
    sigma = np.sqrt(0.25 * 0.75 / n)
    assert len(uniform.outcomes) == 4
    assert all(abs(c / n - 0.25) < 5 * sigma for _, c in uniform.outcomes)


def test_out_of_support_mass_grows_and_symmetries_hold(data_dir):
    from teqsci.oracle import casci

    t0, placement, _, gen = h4_generator(data_dir)
    sol = casci(t0, 1)
    psi0 = prepare_initial_state(sol.basis.tolist(), sol.eigenvectors[:, 0], placement, [0, 1], 8)
    support = np.abs(psi0.amplitudes) > 0
    masses = []
    n_e = np.array([bin(i).count("1") for i in range(256)])
    ms2 = np.array([bin(i & 0x55).count("1") - bin(i & 0xAA).count("1") for i in range(256)])
    for t in (1e-3, 0.5, 1.0):
        out = evolve(psi0, build_trotter_plan(gen, t, 2)).probabilities()
        masses.append(out[~support].sum())
        assert out[(n_e != 4) | (ms2 != 0)].sum() < 1e-20
    assert masses[0] <= masses[1] <= masses[2]


def test_untruncated_run_loses_almost_no_shots(data_dir):
    from teqsci.oracle import casci
    from teqsci.selection import postselect

    t0, placement, _, gen = h4_generator(data_dir)
    sol = casci(t0, 1)
    psi = prepare_initial_state(sol.basis.tolist(), sol.eigenvectors[:, 0], placement, [0, 1], 8)
    out = evolve(psi, build_trotter_plan(gen, 5.0, 2))
    batch = sample(out, 100_000, seed=3)
    _, rejected = postselect(batch, 4, 0)
    assert rejected / batch.n_shots < 1e-6
