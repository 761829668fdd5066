import numpy as np
import pytest

from oracles import qasm_grammar_errors
from qtree.circuits import (
    NATIVE_BLOCK_PHASE,
    build_gate_circuit,
    export_qasm,
    import_qasm,
    kraus_from_block,
    qasm_filename,
    reconstruct_kraus_check,
    two_qubit_gate_count,
    u3_angles,
    u3_matrix,
    validate_schedule,
    verify_variant_equivalence,
    weak_block_unitary,
)
from qtree.model import build_instance, rng_stream
from qtree.qmath import CNOT, haar_unitary, kraus_pair


class TestWeakBlocks:
    def test_standard_projective_limit(self):
        # At theta = pi the ancilla rotation is R_Y(pi); together with the
        # CNOT the ancilla ends anti-correlated with the data qubit.
        u = weak_block_unitary(np.pi, "standard")
        psi0 = u @ np.array([1, 0, 0, 0], dtype=complex)  # data |0>, anc |0>
        assert abs(psi0[1]) == pytest.approx(1.0, abs=1e-12)  # anc -> |1>
        psi1 = u @ np.array([0, 0, 1, 0], dtype=complex)  # data |1>
        assert abs(psi1[2]) == pytest.approx(1.0, abs=1e-12)  # anc -> |0>

    def test_native_weakest_limit(self):
        # phi = 0: the two-qubit coupling disappears and only single-qubit
        # gates act on the ancilla.
        u = weak_block_unitary(np.pi / 2, "native")
        reshaped = u.reshape(2, 2, 2, 2)
        off = reshaped[0, :, 1, :]
        assert np.max(np.abs(off)) < 1e-12  # no data dependence

    @pytest.mark.parametrize("theta", np.linspace(np.pi / 2, np.pi, 10))
    def test_kraus_reconstruction(self, theta):
        assert reconstruct_kraus_check(theta) < 1e-12

    def test_kraus_from_block_values(self):
        kp = kraus_pair(2.3)
        for variant in ("standard", "native"):
            got = kraus_from_block(2.3, variant)
            assert np.max(np.abs(got[0] - kp.k0)) < 1e-12
            assert np.max(np.abs(got[1] - kp.k1)) < 1e-12

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            weak_block_unitary(2.0, "fancy")


class TestVariantEquivalence:
    @pytest.mark.parametrize("theta", np.linspace(np.pi / 2, np.pi, 10))
    def test_equivalent_up_to_phase(self, theta):
        worst, phase = verify_variant_equivalence(theta, 100, rng_stream(1))
        assert worst < 1e-12
        assert abs(phase - NATIVE_BLOCK_PHASE) < 1e-12

    def test_weakest_limit_trivial(self):
        worst, _ = verify_variant_equivalence(np.pi / 2, 10, rng_stream(2))
        assert worst < 1e-12


class TestU3:
    def test_round_trip_random(self):
        rng = rng_stream(3)
        for u in haar_unitary(rng, size=300):
            v = u3_matrix(*u3_angles(u))
            overlap = abs(np.trace(u.conj().T @ v)) / 2.0
            assert overlap == pytest.approx(1.0, abs=1e-12)

    def test_corner_cases(self):
        for u in (
            np.eye(2, dtype=complex),
            np.diag([np.exp(0.4j), np.exp(-1.1j)]),
            np.array([[0, 1], [1, 0]], dtype=complex),
            np.array([[0, -1j], [1j, 0]], dtype=complex),
        ):
            v = u3_matrix(*u3_angles(u))
            assert abs(np.trace(u.conj().T @ v)) / 2.0 == pytest.approx(1.0, abs=1e-12)


class TestBuildCircuit:
    def test_qubit_count_t4_l4(self):
        inst = build_instance(4, 2.2, seed=1)
        gc = build_gate_circuit(inst, l=4)
        assert gc.n_qubits == 20
        assert gc.n_clbits == 31

    def test_two_qubit_counts(self):
        inst = build_instance(4, 2.2, seed=1)
        native = build_gate_circuit(inst, l=4, variant="native")
        assert two_qubit_gate_count(native) == 45  # CNOT + two ZZ per node
        standard = build_gate_circuit(inst, l=4, variant="standard")
        assert two_qubit_gate_count(standard) == 45  # CNOT + two block CX

    def test_measure_count(self):
        inst = build_instance(3, 2.4, seed=2)
        gc = build_gate_circuit(inst, l=2)
        measures = [op for op in gc.ops if op.gate == "measure"]
        assert len(measures) == gc.n_clbits == 15

    def test_root_measurement_is_first_clbit(self):
        inst = build_instance(2, 2.0, seed=3)
        gc = build_gate_circuit(inst, l=1)
        first = next(op for op in gc.ops if op.gate == "measure")
        assert first.qubits == (0,) and first.clbit == 0

    def test_clbit_order_matches_record(self):
        inst = build_instance(3, 2.4, seed=4)
        gc = build_gate_circuit(inst, l=3)
        seen = [op.clbit for op in gc.ops if op.gate == "measure"]
        assert seen == list(range(gc.n_clbits))  # BFS node order, r before s

    def test_schedule_safety(self):
        for l in (1, 2, 4):
            inst = build_instance(3, 2.2, seed=5)
            validate_schedule(build_gate_circuit(inst, l=l))

    def test_schedule_checker_catches_violations(self):
        from qtree.circuits import GateCircuit, Op

        bad = GateCircuit(
            n_qubits=3, n_clbits=3,
            ops=(
                Op("measure", (), (2,), 1),
                Op("cx", (), (0, 2)),  # reuse without reset
            ),
            meta={},
        )
        with pytest.raises(ValueError):
            validate_schedule(bad)

    def test_l_validated(self):
        inst = build_instance(2, 2.2, seed=6)
        with pytest.raises(ValueError):
            build_gate_circuit(inst, l=0)


class TestQasm:
    def test_grammar(self):
        inst = build_instance(1, 2.3, seed=7)
        for variant in ("standard", "native"):
            text = export_qasm(build_gate_circuit(inst, l=2, variant=variant))
            assert qasm_grammar_errors(text) == []
            assert f"qreg q[{2 + 2}];" in text

    def test_round_trip(self):
        inst = build_instance(3, 2.15, seed=8)
        gc = build_gate_circuit(inst, l=4)
        back = import_qasm(export_qasm(gc))
        assert back.ops == gc.ops
        assert back.n_qubits == gc.n_qubits and back.n_clbits == gc.n_clbits
        assert back.meta == gc.meta

    def test_deterministic_export(self):
        inst = build_instance(2, 2.6, seed=9)
        a = export_qasm(build_gate_circuit(inst, l=2))
        b = export_qasm(build_gate_circuit(inst, l=2))
        assert a == b

    def test_header_embeds_config(self):
        inst = build_instance(2, 2.6, seed=42)
        text = export_qasm(build_gate_circuit(inst, l=3, variant="standard"))
        head = text.splitlines()[0]
        for token in ("t=2", "seed=42", "variant=standard", "l=3"):
            assert token in head

    def test_filename_pattern(self):
        assert qasm_filename(7, 4, 2.1991) == "7_4_2199.qasm"

    def test_semantics_root_coin(self):
        # Simulate the exported depth-1 circuit and check m0 is a fair coin
        # and the block acts like the Kraus pair: statevector walk over the
        # op list using dense gates.
        inst = build_instance(1, 2.0, seed=10)
        gc = build_gate_circuit(inst, l=1, variant="standard")
        counts = {0: 0, 1: 0}
        for shot in range(400):
            bits = _simulate_ops(gc, rng_stream(30, shot))
            counts[bits[0]] += 1
        assert abs(counts[0] - 200) < 4 * 10  # binomial 4 sigma


def _simulate_ops(gc, rng):
    """Tiny dense simulator for exported circuits (test helper)."""
    from qtree.circuits import _h, _rx, _ry, _rzz

    n = gc.n_qubits
    psi = np.zeros((2,) * n, dtype=complex)
    psi[(0,) * n] = 1.0
    bits = {}

    def apply(gate, wires):
        nonlocal psi
        k = len(wires)
        psi = np.moveaxis(psi, wires, range(k))
        shape = psi.shape
        psi = (gate @ psi.reshape(2**k, -1)).reshape(shape)
        psi = np.moveaxis(psi, range(k), wires)

    for op in gc.ops:
        if op.gate == "h":
            apply(_h(), op.qubits)
        elif op.gate == "u3":
            apply(u3_matrix(*op.params), op.qubits)
        elif op.gate == "ry":
            apply(_ry(op.params[0]), op.qubits)
        elif op.gate == "rx":
            apply(_rx(op.params[0]), op.qubits)
        elif op.gate == "cx":
            apply(CNOT, op.qubits)
        elif op.gate == "rzz":
            apply(_rzz(op.params[0]), op.qubits)
        elif op.gate in ("measure", "reset"):
            q = op.qubits[0]
            probs = np.abs(psi) ** 2
            p1 = probs.sum(axis=tuple(i for i in range(n) if i != q))[1]
            m = 1 if rng.random() < p1 else 0
            sel = [slice(None)] * n
            sel[q] = 1 - m
            psi[tuple(sel)] = 0.0
            psi /= np.sqrt(max((np.abs(psi) ** 2).sum(), 1e-300))
            if op.gate == "measure":
                bits[op.clbit] = m
            elif m == 1:  # reset flips |1> back to |0>
                psi = np.roll(psi, 1, axis=q)
    return bits
