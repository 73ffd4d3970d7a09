from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from sqss.adversary import identity_attack, intercept_resend_z
from sqss.chi_states import BellLabel, ChiIndex, chi00
from sqss.protocol import (
    CASES,
    Case,
    Choice,
    PartyStreams,
    ProtocolConfig,
    RoundRecord,
    RoundRunner,
    apply_action,
    check_round,
    classify_case,
    derive_key,
    run_protocol,
    sift_and_check,
)
from sqss.qcore import RngStream


def record(case, **kw):
    choices = {
        Case.A: (Choice.SIFT, Choice.SIFT), Case.B: (Choice.SIFT, Choice.CTRL),
        Case.C: (Choice.CTRL, Choice.SIFT), Case.D: (Choice.CTRL, Choice.CTRL),
    }[case]
    return RoundRecord(0, *choices, case, **kw)


class TestConfig:
    def test_defaults(self):
        c = ProtocolConfig()
        assert c.rounds == 128 and c.abort_threshold == 0

    @pytest.mark.parametrize("kw", [
        {"n": 0}, {"check_fraction": 0}, {"check_fraction": 1.0}, {"abort_threshold": 1.5},
        {"probe_dim": 0}, {"seed": -1}, {"seed": 2**64},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ProtocolConfig(**kw)


class TestClassify:
    def test_table(self):
        assert classify_case(Choice.SIFT, Choice.SIFT) is Case.A
        assert classify_case(Choice.SIFT, Choice.CTRL) is Case.B
        assert classify_case(Choice.CTRL, Choice.SIFT) is Case.C
        assert classify_case(Choice.CTRL, Choice.CTRL) is Case.D


class TestCheckRound:
    def test_case_a_pass(self):
        r = record(Case.A, bob_z=1, charlie_z=0, fresh_bob=1, fresh_charlie=0,
                   alice_bell=BellLabel.PSI_PLUS, alice_fresh_bob=1, alice_fresh_charlie=0)
        assert check_round(r)

    def test_case_a_fresh_mismatch(self):
        r = record(Case.A, bob_z=0, charlie_z=0, fresh_bob=0, fresh_charlie=0,
                   alice_bell=BellLabel.PHI_PLUS, alice_fresh_bob=1, alice_fresh_charlie=0)
        assert not check_round(r)

    def test_case_a_wrong_bell(self):
        r = record(Case.A, bob_z=0, charlie_z=1, fresh_bob=0, fresh_charlie=1,
                   alice_bell=BellLabel.PSI_PLUS, alice_fresh_bob=0, alice_fresh_charlie=1)
        assert not check_round(r)

    def test_case_d(self):
        assert check_round(record(Case.D, alice_fmb=ChiIndex(0, 0)))
        assert not check_round(record(Case.D, alice_fmb=ChiIndex(2, 1)))

    def test_case_b(self):
        r = record(Case.B, bob_z=1, fresh_bob=1, alice_z2=1, alice_bell=BellLabel.PHI_MINUS, alice_fresh_bob=1)
        assert check_round(r)
        assert not check_round(replace(r, alice_bell=BellLabel.PHI_PLUS))


class TestApplyAction:
    def test_missing_subsystem(self):
        with pytest.raises(RuntimeError, match="needs subsystems"):
            apply_action(Case.A, chi00(), RngStream(0, "a"))

    def test_case_d_honest(self):
        for seed in range(20):
            result, _ = apply_action(Case.D, chi00(), RngStream(seed, "a"))
            assert result.fmb == ChiIndex(0, 0)


def _honest_rounds(case, count, seed=0):
    choices = {Case.A: (Choice.SIFT, Choice.SIFT), Case.B: (Choice.SIFT, Choice.CTRL),
               Case.C: (Choice.CTRL, Choice.SIFT), Case.D: (Choice.CTRL, Choice.CTRL)}[case]
    runner = RoundRunner(identity_attack(), PartyStreams.from_seed(seed))
    return [runner.run(i, choices)[0] for i in range(count)]


class TestRounds:
    def test_case_a_bob0_charlie1_gives_psi_minus(self):
        hits = [r for r in _honest_rounds(Case.A, 200) if (r.bob_z, r.charlie_z) == (0, 1)]
        assert hits and all(r.alice_bell is BellLabel.PSI_MINUS for r in hits)

    @pytest.mark.parametrize("case", CASES)
    def test_honest_rounds_pass(self, case):
        assert all(check_round(r) for r in _honest_rounds(case, 100, seed=4))

    def test_case_b_table(self):
        for r in _honest_rounds(Case.B, 100):
            assert r.alice_fresh_bob == r.bob_z
            assert r.alice_z2 is not None and r.alice_bell is not None

    def test_fresh_echo(self):
        for r in _honest_rounds(Case.A, 50):
            assert (r.alice_fresh_bob, r.alice_fresh_charlie) == (r.bob_z, r.charlie_z)


class TestSift:
    def test_too_few_case_a(self):
        recs = [record(Case.D, alice_fmb=ChiIndex(0, 0), check_selected=True, check_pass=True)] * 8
        out = sift_and_check(recs, ProtocolConfig(n=1), RngStream(0, "s"))
        assert out.aborted and "Case A" in out.diagnostic

    def test_single_failure_aborts(self):
        recs = _honest_rounds(Case.A, 10) + [
            record(Case.D, alice_fmb=ChiIndex(1, 0), check_selected=True, check_pass=False)
        ]
        out = sift_and_check(recs, ProtocolConfig(n=4), RngStream(0, "s"))
        assert out.aborted and out.error_rates[Case.D] == 1.0

    def test_check_count(self):
        recs = _honest_rounds(Case.A, 11)
        out = sift_and_check(recs, ProtocolConfig(n=100, check_fraction=0.5), RngStream(0, "s"))
        assert len(out.checked) == 6 and len(out.key_positions) == 5
        assert not set(out.checked) & set(out.key_positions)


class TestDeriveKey:
    def test_table(self):
        recs = [record(Case.A, bob_z=b, charlie_z=c, alice_fresh_bob=b, alice_fresh_charlie=c)
                for b, c in [(0, 0), (0, 1), (1, 0), (1, 1)]]
        k = derive_key(recs)
        assert k.r_a == (0, 1, 1, 0)
        assert k.alice_agrees and k.alice_r_a == k.r_a

    def test_empty(self):
        with pytest.raises(ValueError):
            derive_key([])


class TestRunProtocol:
    def test_honest_small(self):
        out = run_protocol(ProtocolConfig(n=8, seed=2))
        assert not out.aborted
        assert all(v == 0 for v in out.error_rates.values())
        n_a = out.case_counts()[Case.A]
        assert len(out.keys) == min(8, n_a - len(out.checked))
        assert out.keys.r_a == tuple(b ^ c for b, c in zip(out.keys.r_b, out.keys.r_c))
        assert out.keys.alice_agrees

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**63), st.integers(2, 12))
    def test_honest_completeness(self, seed, n):
        out = run_protocol(ProtocolConfig(n=n, seed=seed))
        assert all(r.check_pass for r in out.records if r.check_selected)
        if not out.aborted:
            assert out.keys.alice_agrees

    def test_deterministic(self):
        a = run_protocol(ProtocolConfig(n=8, seed=5))
        b = run_protocol(ProtocolConfig(n=8, seed=5))
        assert a.records == b.records and a.keys == b.keys

    def test_n_one(self):
        out = run_protocol(ProtocolConfig(n=1, seed=0))
        assert len(out.records) == 8
        assert out.aborted == (out.keys is None)

    def test_intercept_particle1_aborts(self):
        out = run_protocol(ProtocolConfig(n=64, seed=7), intercept_resend_z(["particle1"]))
        assert out.aborted
        assert abs(out.error_rates[Case.D] - 0.5) < 0.2
        assert out.error_rates[Case.A] == 0 and out.error_rates[Case.B] == 0

    def test_observer_sees_every_round(self):
        seen = []
        run_protocol(ProtocolConfig(n=4, seed=1), observer=lambda r, s: seen.append(r.round_index))
        assert seen == list(range(32))

    def test_case_frequencies(self):
        runner = RoundRunner(identity_attack(1), PartyStreams.from_seed(13))
        counts = np.zeros(4)
        for i in range(4096):
            counts[CASES.index(runner.run(i)[0].case)] += 1
        assert stats.chisquare(counts).pvalue > 0.001

    def test_key_pairs_uniform(self):
        out = run_protocol(ProtocolConfig(n=1200, seed=21, probe_dim=1))
        assert len(out.keys) >= 1024
        counts = np.zeros(4)
        for b, c in zip(out.keys.r_b, out.keys.r_c):
            counts[2 * b + c] += 1
        assert stats.chisquare(counts).pvalue > 0.001
