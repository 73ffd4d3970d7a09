import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from sqss.adversary import (
    PAIRINGS,
    PROBE_B,
    PROBE_C,
    ZERO_SET,
    AttackConstructionError,
    EntangleMeasureParams,
    bob_participant_attack,
    build_entangle_measure,
    compliant_attack,
    compliant_bob_params,
    e_vectors,
    eval_zero_error_constraints,
    identity_attack,
    intercept_resend_z,
    load_attack_params,
    params_from_dict,
    random_compliant_attack,
    random_entangle_measure_params,
)
from sqss.analysis import estimate_detection, probe_information
from sqss.chi_states import chi00
from sqss.protocol import Case, ProtocolConfig, run_protocol
from sqss.qcore import RngStream, fidelity, random_unitary, reduced_density_matrix, tensor

CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def forward_state(attack):
    return attack.apply_forward(tensor(chi00(), attack.probe_init))


def copy_params(uncopy: bool) -> EntangleMeasureParams:
    """CNOT copy of each travelling qubit into a qubit probe, optionally undone
    on the way back."""
    uf = None
    if uncopy:
        # kron orders (q1, e1, q2, e2); the hook wants (q1, q2, e1, e2)
        u = np.kron(CNOT, CNOT).reshape([2] * 8)
        uf = u.transpose(0, 2, 1, 3, 4, 6, 5, 7).reshape(16, 16)
    return EntangleMeasureParams.from_unitary(CNOT, uf)


class TestIdentity:
    def test_probe_untouched(self):
        a = identity_attack()
        s = forward_state(a)
        assert fidelity(s, tensor(chi00(), a.probe_init)) == pytest.approx(1)

    def test_honest_run(self):
        out = run_protocol(ProtocolConfig(n=8, seed=3), identity_attack())
        assert not out.aborted


class TestInterceptResend:
    def test_targets(self):
        assert intercept_resend_z(["particle4"]).probe_labels == (PROBE_C,)
        assert intercept_resend_z(["particle1", "particle4"]).probe_labels == (PROBE_B, PROBE_C)
        with pytest.raises(ValueError):
            intercept_resend_z(["particle2"])
        with pytest.raises(ValueError):
            intercept_resend_z([])

    @pytest.mark.parametrize("case", ["A", "B", "C", "D"])
    def test_single_target_matches_oracle(self, case):
        est = estimate_detection(intercept_resend_z(["particle1"]), ProtocolConfig(seed=17), 2000, case=Case(case))
        det = est.per_case[Case(case)]
        expected = oracles.z_intercept_failure(case, (0,))
        assert det.interval[0] - 1e-12 <= expected <= det.interval[1] + 1e-12

    def test_particle4_case_d_half(self):
        det = estimate_detection(intercept_resend_z(["particle4"]), ProtocolConfig(seed=2), 2000, case=Case.D)
        lo, hi = det.per_case[Case.D].interval
        assert lo <= 0.5 <= hi
        assert oracles.z_intercept_failure("D", (3,)) == pytest.approx(0.5)

    def test_both_targets_at_least_single(self):
        assert oracles.z_intercept_failure("D", (0, 3)) >= oracles.z_intercept_failure("D", (0,))


class TestEntangleMeasure:
    def test_no_entangling_case(self):
        v = random_unitary(4, RngStream(0, "v"))[:, 0]
        p = EntangleMeasureParams([1, 0, 0, 1], np.stack([v] * 4))
        s = forward_state(build_entangle_measure(p))
        expected = tensor(chi00(), tensor(_probe(PROBE_B, v), _probe(PROBE_C, v)))
        assert fidelity(s, expected) == pytest.approx(1)
        assert eval_zero_error_constraints(p).max_residual == 0

    def test_gram_condition(self):
        x = np.eye(2)
        with pytest.raises(AttackConstructionError):
            EntangleMeasureParams(
                [1 / np.sqrt(2), 1 / np.sqrt(2), 1 / np.sqrt(2), 1 / np.sqrt(2)], [x[0], x[0], x[0], x[0]]
            ).ue_matrix()

    def test_normalization(self):
        with pytest.raises(ValueError):
            EntangleMeasureParams([1, 1, 0, 1], np.ones((4, 1)))

    def test_completed_unitary_keeps_columns(self):
        p = random_entangle_measure_params(3, RngStream(4, "p"))
        u = p.ue_matrix()
        col0, col1 = p.columns()
        assert np.allclose(u[:, 0], col0) and np.allclose(u[:, 3], col1)

    def test_orthogonal_xi_evectors_match_construction(self):
        x = np.eye(4)
        p = EntangleMeasureParams([1, 0, 0, 1], [x[0], x[1], x[2], x[3]])
        self._compare(p)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 4))
    def test_evectors_match_simulation(self, seed, d):
        self._compare(random_entangle_measure_params(d, RngStream(seed, "p")))

    def _compare(self, p):
        d = p.probe_dim
        s = forward_state(build_entangle_measure(p)).tensor_view().reshape(16, d * d)
        oracle = oracles.forward_probe_vectors(p.ue_matrix(), d)
        vecs = e_vectors(p)
        for k, vec in vecs.items():
            assert np.max(np.abs(s[int(k, 2)] - np.sqrt(2) / 4 * vec)) < 1e-9
            assert np.max(np.abs(oracle[k] - vec)) < 1e-9

    def test_wrong_uf_dim(self):
        p = EntangleMeasureParams([1, 0, 0, 1], np.ones((4, 1)), np.eye(8))
        with pytest.raises(AttackConstructionError):
            build_entangle_measure(p)


def _probe(label, v):
    from sqss.qcore import from_amplitudes

    return from_amplitudes([(label, len(v))], v)


class TestConstraints:
    def test_names(self):
        r = eval_zero_error_constraints(random_entangle_measure_params(2, RngStream(0, "p")))
        assert len(r.residuals) == len(ZERO_SET) + len(PAIRINGS)
        assert "E0100" in r.residuals and "E0101+E0011" in r.residuals

    def test_hadamard_like_nonzero(self):
        x = np.eye(4)
        h = 1 / np.sqrt(2)
        p = EntangleMeasureParams([h, h, h, -h], [x[0], x[1], x[2], x[3]])
        r = eval_zero_error_constraints(p)
        assert r.residuals["E0001"] == pytest.approx(np.sqrt(2) / 2)
        assert r.max_residual > 0

    def test_global_phase(self):
        p = random_entangle_measure_params(2, RngStream(8, "p"))
        q = EntangleMeasureParams(p.beta, p.xi * np.exp(0.7j), p.uf)
        a, b = eval_zero_error_constraints(p).residuals, eval_zero_error_constraints(q).residuals
        assert all(abs(a[k] - b[k]) < 1e-12 for k in a)

    def test_pairings_hold_for_compliant(self):
        a = random_compliant_attack(3, RngStream(1, "c"))
        assert eval_zero_error_constraints(a.params).max_residual < 1e-12


class TestCompliant:
    def test_identity_reduces(self):
        a = compliant_attack(2)
        assert fidelity(forward_state(a), tensor(chi00(), a.probe_init)) == pytest.approx(1)

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            compliant_attack(2, np.eye(3))

    def test_zero_detection_and_information(self):
        a = random_compliant_attack(2, RngStream(5, "c"))
        cfg = ProtocolConfig(seed=5)
        assert estimate_detection(a, cfg, 1000).total_failures == 0
        assert probe_information(a, cfg, 1000).trace_distance < 1e-9

    def test_copy_uncopy_is_compliant(self):
        p = copy_params(uncopy=True)
        assert eval_zero_error_constraints(p).max_residual < 1e-12
        a = build_entangle_measure(p)
        cfg = ProtocolConfig(seed=9)
        assert estimate_detection(a, cfg, 2000).total_failures == 0
        info = probe_information(a, cfg, 2000)
        assert info.trace_distance < 1e-9 and info.holevo_bound < 1e-9

    def test_copy_without_uncopy_detected(self):
        # same forward leg, zero residuals, but the probe stays entangled
        p = copy_params(uncopy=False)
        assert eval_zero_error_constraints(p).max_residual < 1e-12
        est = estimate_detection(build_entangle_measure(p), ProtocolConfig(seed=9), 500, case=Case.D)
        assert est.detected

    def test_probe_independent_of_outcomes(self):
        a = random_compliant_attack(2, RngStream(6, "c"))
        from sqss.protocol import PartyStreams, RoundRunner

        runner = RoundRunner(a, PartyStreams.from_seed(6))
        rhos = {}
        for i in range(400):
            rec, state = runner.run(i)
            if rec.case is Case.A:
                rhos.setdefault((rec.bob_z, rec.charlie_z), reduced_density_matrix(state, a.probe_labels))
        assert len(rhos) == 4
        ref = next(iter(rhos.values()))
        for rho in rhos.values():
            assert 0.5 * np.abs(np.linalg.eigvalsh(rho - ref)).sum() < 1e-9


class TestBobParticipant:
    def test_identity_inner(self):
        a = bob_participant_attack(compliant_bob_params(2))
        out = run_protocol(ProtocolConfig(n=16, seed=1), a)
        assert not out.aborted

    def test_wrong_uf(self):
        p = EntangleMeasureParams([1, 0, 0, 1], np.ones((4, 2)) / np.sqrt(2), np.eye(16))
        with pytest.raises(AttackConstructionError):
            bob_participant_attack(p)


class TestParamFiles:
    def doc(self):
        return {"beta": [1, 0, 0, 1], "xi": [[1, 0], [1, 0], [0, 1], [0, 1]]}

    def test_compliant_default(self, tmp_path):
        path = tmp_path / "p.json"
        path.write_text(json.dumps(self.doc()))
        p = load_attack_params(path)
        assert p.uf.shape == (16, 16)
        assert np.allclose(p.uf, np.eye(16))

    def test_complex_forms(self):
        doc = self.doc()
        doc["beta"] = ["1+0i", [0, 0], 0, 1]
        assert params_from_dict(doc).b("00") == 1

    def test_haar_mode(self):
        doc = dict(self.doc(), uf={"mode": "haar-random", "seed": 3})
        a, b = params_from_dict(doc), params_from_dict(doc)
        assert np.array_equal(a.uf, b.uf)

    def test_explicit_mode(self):
        doc = dict(self.doc(), uf={"mode": "explicit-matrix", "matrix": np.eye(4).tolist()})
        assert params_from_dict(doc, returning_qubits=1).uf.shape == (4, 4)

    def test_bad_mode(self):
        with pytest.raises(ValueError, match="unknown uf mode"):
            params_from_dict(dict(self.doc(), uf={"mode": "magic"}))

    def test_missing_key(self):
        with pytest.raises(ValueError, match="missing"):
            params_from_dict({"beta": [1, 0, 0, 1]})
