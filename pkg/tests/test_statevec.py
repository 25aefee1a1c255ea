import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pairscope.errors import ConfigError, EnumerationOverflowError, LayoutError
from pairscope.statevec import (
    Branch,
    RegisterLayout,
    SparseState,
    apply_gate,
    bitstring_to_key,
    enumerate_branches,
    init_basis_state,
    key_to_bitstring,
    measure_pauli_string,
    measure_qubit_x,
    sample_pauli_measurement,
)
from pairscope.seeds import substream

from dense_ref import DenseState, apply_named_gate

SQ2 = 1.0 / math.sqrt(2.0)


def bell_phi(n: int, sign: float, a: int = 0, b: int = 1) -> SparseState:
    return SparseState.from_amplitudes(n, {0: SQ2, (1 << a) | (1 << b): sign * SQ2})


def random_sparse(rng, n: int, entries: int) -> SparseState:
    keys = rng.choice(2**n, size=min(entries, 2**n), replace=False)
    amps = {int(k): complex(rng.normal(), rng.normal()) for k in keys}
    return SparseState.from_amplitudes(n, amps, normalize=True)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


class TestBasisState:
    def test_all_zeros(self):
        st0 = init_basis_state(RegisterLayout(M=1, K=1), 0)
        assert st0.num_entries == 1
        assert st0.norm_sq() == pytest.approx(1.0, abs=1e-15)
        assert st0.amplitude(0) == 1.0

    def test_single_excitation_bitstring(self):
        st1 = SparseState.basis_state(4, "0100")
        assert st1.amplitude("0100") == 1.0
        assert st1.amplitude(0) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(LayoutError):
            SparseState.basis_state(4, "010")
        with pytest.raises(LayoutError):
            SparseState.basis_state(2, 7)

    def test_bitstring_round_trip(self):
        key = bitstring_to_key("0110")
        assert key == 0b0110
        assert key_to_bitstring(key, 4) == "0110"


# ---------------------------------------------------------------------------
# gates
# ---------------------------------------------------------------------------


class TestGates:
    def test_x_flips(self):
        assert SparseState.basis_state(1, 0).x(0).amplitude(1) == 1.0

    def test_cz_sign(self):
        st11 = SparseState.basis_state(2, 0b11).cz(0, 1)
        assert st11.amplitude(0b11) == -1.0

    def test_h_involution_on_random_state(self):
        rng = substream(77, "h-invol")
        state = random_sparse(rng, 3, 5)
        back = state.h(1).h(1)
        assert back.max_amplitude_diff(state) < 1e-12

    def test_entry_growth_contracts(self):
        rng = substream(78, "growth")
        state = random_sparse(rng, 4, 6)
        assert state.h(2).num_entries <= 2 * state.num_entries
        for new in (state.x(0), state.z(1), state.phase(0.3, 2), state.cnot(0, 1), state.cz(1, 2)):
            assert new.num_entries == state.num_entries

    def test_duplicate_and_out_of_range_targets(self):
        state = SparseState.basis_state(2, 0)
        with pytest.raises(LayoutError):
            state.cnot(1, 1)
        with pytest.raises(LayoutError):
            state.x(5)

    def test_apply_gate_dispatch(self):
        state = SparseState.basis_state(2, 0)
        assert apply_gate(state, "X", 0).amplitude(1) == 1.0
        assert apply_gate(state, "PHASE", 0, phi=0.5).amplitude(0) == 1.0
        with pytest.raises(ConfigError):
            apply_gate(state, "TOFFOLI", (0, 1))
        with pytest.raises(ConfigError):
            apply_gate(state, "PHASE", 0)

    @given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
    @settings(max_examples=40, deadline=None)
    def test_phase_composition(self, p1, p2):
        state = SparseState.from_amplitudes(1, {0: SQ2, 1: SQ2})
        once = state.phase(p1, 0).phase(p2, 0)
        combined = state.phase(p1 + p2, 0)
        assert once.max_amplitude_diff(combined) < 1e-12

    @given(st.lists(st.sampled_from(["X", "Z", "H", "CNOT", "CZ"]), min_size=1, max_size=12),
           st.integers(0, 2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_norm_preservation(self, gates, seed):
        rng = substream(seed, "norm-prop")
        state = random_sparse(rng, 4, 6)
        for g in gates:
            if g in ("CNOT", "CZ"):
                a, b_q = rng.choice(4, size=2, replace=False)
                state = apply_gate(state, g, (int(a), int(b_q)))
            else:
                state = apply_gate(state, g, int(rng.integers(0, 4)))
        assert state.norm_sq() == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# measurement
# ---------------------------------------------------------------------------


class TestMeasurePauliString:
    def test_xx_on_phi_plus_is_deterministic(self):
        branches = measure_pauli_string(bell_phi(2, +1.0), [(0, "X"), (1, "X")])
        assert len(branches) == 1
        assert branches[0].outcome == 1
        assert branches[0].probability == pytest.approx(1.0, abs=1e-12)

    def test_xx_on_phi_minus_flips(self):
        branches = measure_pauli_string(bell_phi(2, -1.0), [(0, "X"), (1, "X")])
        assert len(branches) == 1
        assert branches[0].outcome == -1

    def test_z_on_plus_state_splits_evenly(self):
        plus = SparseState.from_amplitudes(1, {0: SQ2, 1: SQ2})
        branches = measure_pauli_string(plus, [(0, "Z")])
        assert [b.outcome for b in branches] == [1, -1]
        for b in branches:
            assert b.probability == pytest.approx(0.5, abs=1e-12)
            assert b.state.norm_sq() == pytest.approx(1.0, abs=1e-12)

    def test_empty_string_rejected(self):
        with pytest.raises(ConfigError):
            measure_pauli_string(SparseState.basis_state(1, 0), [])

    def test_duplicate_qubit_rejected(self):
        with pytest.raises(LayoutError):
            measure_pauli_string(SparseState.basis_state(2, 0), [(0, "X"), (0, "Z")])

    def test_bad_letter_rejected(self):
        with pytest.raises(ConfigError):
            measure_pauli_string(SparseState.basis_state(1, 0), [(0, "Y")])


class TestMeasureQubitX:
    def test_vacuum_qubit_is_fair_coin(self):
        branches = measure_qubit_x(SparseState.basis_state(2, 0), 0)
        assert len(branches) == 2
        for b in branches:
            assert b.probability == pytest.approx(0.5, abs=1e-12)

    def test_plus_state_deterministic(self):
        plus = SparseState.from_amplitudes(1, {0: SQ2, 1: SQ2})
        branches = measure_qubit_x(plus, 0)
        assert len(branches) == 1
        assert branches[0].outcome == 1

    def test_one_excitation_pair_against_dense_oracle(self):
        # Second qubit of (|01> + |10>)/sqrt(2): the two branches differ by a
        # Z on the partner qubit.
        state = SparseState.from_amplitudes(2, {0b01: SQ2, 0b10: SQ2})
        branches = measure_qubit_x(state, 1)
        dense = DenseState.from_sparse(state).measure_pauli_string([(1, "X")])
        assert len(branches) == len(dense) == 2
        for sparse_b, (eig, prob, post) in zip(branches, dense):
            assert sparse_b.outcome == eig
            assert sparse_b.probability == pytest.approx(prob, abs=1e-12)
            assert post.max_diff_from_sparse(sparse_b.state) < 1e-12
        plus_post, minus_post = (b.state for b in branches)
        flipped = minus_post.z(0)
        assert plus_post.max_amplitude_diff(flipped) < 1e-12


class TestEnumerateBranches:
    def test_empty_plan(self):
        state = SparseState.basis_state(2, 0)
        leaves = enumerate_branches(state, [])
        assert len(leaves) == 1
        assert leaves[0].probability == 1.0
        assert leaves[0].outcome == ()

    def test_phi_plus_correlated_x_outcomes(self):
        leaves = enumerate_branches(bell_phi(2, +1.0), [[(0, "X")], [(1, "X")]])
        outcomes = {leaf.outcome: leaf.probability for leaf in leaves}
        assert set(outcomes) == {(1, 1), (-1, -1)}
        for p in outcomes.values():
            assert p == pytest.approx(0.5, abs=1e-12)

    def test_completeness(self):
        rng = substream(5150, "enum-complete")
        state = random_sparse(rng, 4, 8)
        plan = [[(0, "X")], [(1, "Z"), (2, "X")], [(3, "X")]]
        leaves = enumerate_branches(state, plan)
        assert sum(leaf.probability for leaf in leaves) == pytest.approx(1.0, abs=1e-10)

    def test_overflow_cap(self):
        rng = substream(5151, "enum-cap")
        state = random_sparse(rng, 4, 8)
        plan = [[(q, "Z")] for q in range(4)]
        with pytest.raises(EnumerationOverflowError):
            enumerate_branches(state, plan, cap=3)


class TestSamplingConsistency:
    def test_sampled_branch_matches_enumerated(self):
        rng = substream(31, "sample-consistency")
        for _ in range(50):
            state = random_sparse(rng, 4, 7)
            string = [(0, "X"), (2, "X"), (3, "Z")]
            sampled = sample_pauli_measurement(state, string, rng)
            matching = [b for b in measure_pauli_string(state, string) if b.outcome == sampled.outcome]
            assert len(matching) == 1
            assert sampled.probability == pytest.approx(matching[0].probability, abs=1e-12)
            assert sampled.state.max_amplitude_diff(matching[0].state) < 1e-12


# ---------------------------------------------------------------------------
# register layout
# ---------------------------------------------------------------------------


class TestRegisterLayout:
    @pytest.mark.parametrize("M,K", [(1, 1), (3, 2), (7, 3), (4, 2)])
    def test_index_map_injective_and_covering(self, M, K):
        layout = RegisterLayout(M=M, K=K)
        assert M + 1 <= 2**layout.mbar
        seen = set()
        for site in ("A", "B"):
            for j in range(1, M + 1):
                for i in range(K):
                    seen.add(layout.photonic(site, j, i))
        for site in ("A", "B"):
            for k in range(1, layout.mbar + 1):
                for i in range(K):
                    seen.add(layout.memory(site, k, i))
        for side in ("C", "D"):
            for k in range(1, layout.mbar + 1):
                for i in range(K):
                    seen.add(layout.ancilla(side, k, i))
        assert seen == set(range(layout.n_qubits))
        assert layout.n_qubits == 2 * M * K + 4 * layout.mbar * K

    def test_m7_k3_is_78_qubits(self):
        assert RegisterLayout(M=7, K=3).n_qubits == 78

    def test_masks_are_disjoint(self):
        layout = RegisterLayout(M=3, K=2)
        assert layout.memory_mask() & layout.ancilla_mask() == 0
        assert layout.memory_mask().bit_count() == layout.n_memory
        assert layout.ancilla_mask().bit_count() == layout.n_ancilla

    def test_rejects_bad_indices(self):
        layout = RegisterLayout(M=3, K=2)
        with pytest.raises(LayoutError):
            layout.photonic("A", 0, 0)
        with pytest.raises(LayoutError):
            layout.photonic("C", 1, 0)
        with pytest.raises(LayoutError):
            layout.memory("A", 3, 0)
        with pytest.raises(LayoutError):
            layout.ancilla("D", 1, 2)

    def test_qubit_names(self):
        layout = RegisterLayout(M=3, K=2)
        assert layout.qubit_name(layout.photonic("B", 2, 1)) == "ph[B,j=2,i=1]"
        assert layout.qubit_name(layout.memory("A", 1, 0)) == "mem[A,k=1,i=0]"
        assert layout.qubit_name(layout.ancilla("D", 2, 1)) == "anc[D,k=2,i=1]"


class TestJsonDump:
    def test_entries_round_trip(self):
        state = SparseState.from_amplitudes(3, {0b001: SQ2, 0b110: -SQ2 * 1j})
        entries = state.to_json_entries()
        assert entries == [
            {"bitstring": "100", "re": pytest.approx(SQ2), "im": 0.0},
            {"bitstring": "011", "re": 0.0, "im": pytest.approx(-SQ2)},
        ]


# ---------------------------------------------------------------------------
# dense-oracle equivalence on random programs
# ---------------------------------------------------------------------------


def run_random_program(seed: int, n_gates: int = 15) -> float:
    """Drive sparse and dense engines through one random program; worst deviation."""
    rng = substream(seed, "rand-prog")
    n = int(rng.integers(2, 7))
    sparse = SparseState.basis_state(n, int(rng.integers(0, 2**n)))
    dense = DenseState.from_sparse(sparse)
    worst = 0.0
    for _ in range(n_gates):
        roll = rng.random()
        if roll < 0.75:
            gate = ("X", "Z", "H", "PHASE", "CNOT", "CZ")[int(rng.integers(0, 6))]
            if gate in ("CNOT", "CZ"):
                a, b_q = (int(v) for v in rng.choice(n, size=2, replace=False))
                sparse = apply_gate(sparse, gate, (a, b_q))
                dense = apply_named_gate(dense, gate, (a, b_q))
            elif gate == "PHASE":
                q = int(rng.integers(0, n))
                phi = float(rng.uniform(-math.pi, math.pi))
                sparse = apply_gate(sparse, gate, q, phi=phi)
                dense = apply_named_gate(dense, gate, q, phi=phi)
            else:
                q = int(rng.integers(0, n))
                sparse = apply_gate(sparse, gate, q)
                dense = apply_named_gate(dense, gate, q)
        else:
            qubits = rng.choice(n, size=int(rng.integers(1, min(n, 3) + 1)), replace=False)
            string = [(int(q), "X" if rng.random() < 0.5 else "Z") for q in qubits]
            sparse_branches = measure_pauli_string(sparse, string)
            dense_branches = dense.measure_pauli_string(string)
            assert len(sparse_branches) == len(dense_branches)
            pick = int(rng.integers(0, len(sparse_branches)))
            for sb, (eig, prob, post) in zip(sparse_branches, dense_branches):
                assert sb.outcome == eig
                worst = max(worst, abs(sb.probability - prob))
                worst = max(worst, post.max_diff_from_sparse(sb.state))
            sparse = sparse_branches[pick].state
            dense = dense_branches[pick][2]
    worst = max(worst, dense.max_diff_from_sparse(sparse))
    return worst


class TestDenseOracle:
    def test_random_programs_match(self):
        worst = max(run_random_program(seed) for seed in range(100))
        assert worst < 1e-12
