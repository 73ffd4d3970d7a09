"""Detection statistics, probe-information metrics, leakage tests and qubit
efficiency accounting."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy import stats

from .adversary import AttackModel
from .protocol import (
    CASES,
    Case,
    Choice,
    PartyStreams,
    ProtocolConfig,
    ProtocolOutcome,
    RoundRecord,
    RoundRunner,
    check_round,
    run_protocol,
)
from .qcore import ProjectorSet, RngStream, Statevector, measure_projective, reduced_density_matrix

EIG_CLAMP = 1e-12

_CHOICES_FOR = {
    Case.A: (Choice.SIFT, Choice.SIFT),
    Case.B: (Choice.SIFT, Choice.CTRL),
    Case.C: (Choice.CTRL, Choice.SIFT),
    Case.D: (Choice.CTRL, Choice.CTRL),
}


class AnalysisError(ValueError):
    pass


def wilson_interval(failures: int, trials: int, confidence: float = 0.99) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    z = float(stats.norm.ppf(0.5 + confidence / 2))
    p = failures / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo, hi = max(0.0, centre - half), min(1.0, centre + half)
    if failures == 0:
        lo = 0.0
    if failures == trials:
        hi = 1.0
    return lo, hi


@dataclass(frozen=True)
class CaseDetection:
    trials: int
    failures: int
    rate: float
    interval: tuple[float, float]

    def as_dict(self) -> dict:
        return {
            "trials": self.trials,
            "failures": self.failures,
            "rate": self.rate,
            "interval_99": list(self.interval),
        }


@dataclass(frozen=True)
class DetectionEstimate:
    per_case: dict

    @property
    def detected(self) -> bool:
        """True when some case's interval excludes zero."""
        return any(c.interval[0] > 0 for c in self.per_case.values())

    @property
    def total_failures(self) -> int:
        return sum(c.failures for c in self.per_case.values())

    def as_dict(self) -> dict:
        return {str(case): det.as_dict() for case, det in self.per_case.items()}


@dataclass(frozen=True)
class ProbeInfoMetrics:
    trace_distance: float
    holevo_bound: float
    condition_on: str = "r_a"
    rounds: tuple[int, int] = (0, 0)

    def as_dict(self) -> dict:
        return {
            "condition_on": self.condition_on,
            "trace_distance": self.trace_distance,
            "holevo_bound": self.holevo_bound,
            "rounds": list(self.rounds),
        }


def von_neumann_entropy(rho: np.ndarray) -> float:
    """Entropy in bits; eigenvalues below 1e-12 count as zero."""
    evals = np.linalg.eigvalsh((rho + rho.conj().T) / 2)
    evals = evals[evals > EIG_CLAMP]
    return float(max(0.0, -np.sum(evals * np.log2(evals))))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    diff = rho - sigma
    evals = np.linalg.eigvalsh((diff + diff.conj().T) / 2)
    return float(min(1.0, 0.5 * np.sum(np.abs(evals))))


def holevo_quantity(rho0: np.ndarray, rho1: np.ndarray) -> float:
    """Holevo quantity of the equiprobable ensemble {rho0, rho1}."""
    chi = von_neumann_entropy((rho0 + rho1) / 2) - 0.5 * von_neumann_entropy(rho0) - 0.5 * von_neumann_entropy(rho1)
    return max(0.0, chi)


def _key_bit(record: RoundRecord, which: str) -> int:
    if which == "r_b":
        return record.bob_z
    if which == "r_c":
        return record.charlie_z
    if which == "r_a":
        return record.bob_z ^ record.charlie_z
    raise ValueError(f"condition_on must be r_a, r_b or r_c, got {which!r}")


class RoundAccumulator:
    """Per-case check tallies and probe density sums split by one key bit.

    Accumulators over disjoint sets of rounds merge associatively.
    """

    def __init__(self, probe_labels=(), condition_on: str = "r_a"):
        self.probe_labels = tuple(probe_labels)
        self.condition_on = condition_on
        self.trials = {c: 0 for c in CASES}
        self.failures = {c: 0 for c in CASES}
        self.rho_sums: list[Optional[np.ndarray]] = [None, None]
        self.counts = [0, 0]

    def add(self, record: RoundRecord, state: Statevector) -> None:
        self.trials[record.case] += 1
        self.failures[record.case] += not check_round(record)
        if record.case is Case.A and self.probe_labels:
            bit = _key_bit(record, self.condition_on)
            rho = reduced_density_matrix(state, self.probe_labels)
            self.rho_sums[bit] = rho if self.rho_sums[bit] is None else self.rho_sums[bit] + rho
            self.counts[bit] += 1

    def merge(self, other: "RoundAccumulator") -> "RoundAccumulator":
        out = RoundAccumulator(self.probe_labels, self.condition_on)
        for c in CASES:
            out.trials[c] = self.trials[c] + other.trials[c]
            out.failures[c] = self.failures[c] + other.failures[c]
        for b in (0, 1):
            parts = [s for s in (self.rho_sums[b], other.rho_sums[b]) if s is not None]
            out.rho_sums[b] = sum(parts[1:], parts[0]) if parts else None
            out.counts[b] = self.counts[b] + other.counts[b]
        return out

    def detection(self, confidence: float = 0.99) -> DetectionEstimate:
        per_case = {}
        for c in CASES:
            t, f = self.trials[c], self.failures[c]
            per_case[c] = CaseDetection(t, f, f / t if t else 0.0, wilson_interval(f, t, confidence))
        return DetectionEstimate(per_case)

    def probe_metrics(self) -> ProbeInfoMetrics:
        if not self.probe_labels:
            return ProbeInfoMetrics(0.0, 0.0, self.condition_on, tuple(self.counts))
        if min(self.counts) == 0:
            raise AnalysisError(
                f"need Case A rounds with both values of {self.condition_on}, got counts {self.counts}"
            )
        rho0 = self.rho_sums[0] / self.counts[0]
        rho1 = self.rho_sums[1] / self.counts[1]
        return ProbeInfoMetrics(
            trace_distance(rho0, rho1), holevo_quantity(rho0, rho1), self.condition_on, tuple(self.counts)
        )


@dataclass(frozen=True)
class AttackAnalysis:
    detection: DetectionEstimate
    probe: ProbeInfoMetrics

    def as_dict(self) -> dict:
        return {"detection": self.detection.as_dict(), "probe": self.probe.as_dict()}


def _accumulate(attack: AttackModel, config: ProtocolConfig, trials: int, case: Case | None, condition_on: str):
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    runner = RoundRunner(attack, PartyStreams.from_seed(config.seed))
    acc = RoundAccumulator(attack.probe_labels, condition_on)
    choices = None if case is None else _CHOICES_FOR[case]
    for i in range(trials):
        record, state = runner.run(i, choices)
        acc.add(record, state)
    return acc


def analyze_attack(
    attack: AttackModel,
    config: ProtocolConfig,
    trials: int,
    condition_on: str = "r_a",
    case: Case | None = None,
) -> AttackAnalysis:
    """Detection estimate and probe metrics from one pass of ``trials`` rounds.

    Every round is checked, Case A included. With ``case`` set, all rounds
    are forced into that case.
    """
    acc = _accumulate(attack, config, trials, case, condition_on)
    probe = acc.probe_metrics() if (case in (None, Case.A)) else ProbeInfoMetrics(0.0, 0.0, condition_on)
    return AttackAnalysis(acc.detection(), probe)


def estimate_detection(
    attack: AttackModel, config: ProtocolConfig, trials: int, case: Case | None = None
) -> DetectionEstimate:
    return _accumulate(attack, config, trials, case, "r_a").detection()


def probe_information(
    attack: AttackModel, config: ProtocolConfig, trials: int, condition_on: str = "r_a"
) -> ProbeInfoMetrics:
    """Distinguishability of the final probe state across key-bit values.

    Density matrices are exact partial traces of each Case A round's final
    pure state, averaged per value of ``condition_on``.
    """
    if not attack.probe_labels:
        raise AnalysisError(f"attack {attack.name!r} has no probe subsystems")
    return _accumulate(attack, config, trials, None, condition_on).probe_metrics()


@dataclass(frozen=True)
class LeakageReport:
    statistic: float
    dof: int
    p_value: float
    key_bits: int
    table: dict = field(default_factory=dict)

    def rejects_uniformity(self, alpha: float = 0.001) -> bool:
        return self.p_value < alpha

    def as_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "key_bits": self.key_bits,
            "table": {f"{rb},{m}": list(v) for (rb, m), v in sorted(self.table.items())},
        }


def uniformity_test(groups: dict) -> tuple[float, int, float]:
    """Chi-squared test that r_a is a fair coin inside every group.

    ``groups`` maps a group key to counts (n0, n1).
    """
    stat, dof = 0.0, 0
    for n0, n1 in groups.values():
        total = n0 + n1
        if total:
            stat += (n0 - n1) ** 2 / total
            dof += 1
    if dof == 0:
        raise AnalysisError("no observations")
    return stat, dof, float(stats.chi2.sf(stat, dof))


def bob_leakage(
    config: ProtocolConfig,
    attack: AttackModel,
    probe_basis: np.ndarray | None = None,
    min_key_bits: int = 64,
) -> tuple[LeakageReport, ProtocolOutcome]:
    """Run the protocol with Bob attacking and test r_a given (r_b, probe outcome).

    Bob measures his probe at the end of every Case A round, by default in
    its computational basis.
    """
    labels = attack.probe_labels
    if not labels:
        raise AnalysisError("attack has no probe for Bob to measure")
    readout_rng = RngStream(config.seed, "bob-probe")
    readouts: dict[int, int] = {}
    projset: list[ProjectorSet] = []

    def observe(record: RoundRecord, state: Statevector) -> None:
        if record.case is not Case.A:
            return
        if not projset:
            dim = int(np.prod([d for lbl, d in state.subsystems if lbl in labels]))
            basis = np.eye(dim) if probe_basis is None else probe_basis
            projset.append(ProjectorSet.from_basis(basis))
        m = measure_projective(state, list(labels), projset[0], readout_rng)
        readouts[record.round_index] = m.outcome_index

    outcome = run_protocol(config, attack, observer=observe)
    if outcome.aborted or outcome.keys is None:
        raise AnalysisError(f"run aborted: {outcome.diagnostic}")
    if len(outcome.keys) < min_key_bits:
        raise AnalysisError(f"only {len(outcome.keys)} key bits, need at least {min_key_bits}")

    groups: dict[tuple[int, int], list[int]] = {}
    for pos, r_a in zip(outcome.key_positions, outcome.keys.r_a):
        rec = outcome.records[pos]
        cell = groups.setdefault((rec.bob_z, readouts[pos]), [0, 0])
        cell[r_a] += 1
    stat, dof, p = uniformity_test({k: tuple(v) for k, v in groups.items()})
    table = {k: tuple(v) for k, v in groups.items()}
    return LeakageReport(stat, dof, p, len(outcome.keys), table), outcome


@dataclass(frozen=True)
class EfficiencyReport:
    n: int
    lambda_s: int
    lambda_q: int
    lambda_c: int
    realized: Optional[dict] = None

    @property
    def eta(self) -> Fraction:
        return Fraction(self.lambda_s, self.lambda_q + self.lambda_c)

    def as_dict(self) -> dict:
        out = {
            "n": self.n,
            "lambda_s": self.lambda_s,
            "lambda_q": self.lambda_q,
            "lambda_c": self.lambda_c,
            "eta": str(self.eta),
            "eta_float": float(self.eta),
        }
        if self.realized is not None:
            out["realized"] = dict(self.realized)
        return out


def qubit_efficiency(n: int, outcome: ProtocolOutcome | None = None) -> EfficiencyReport:
    """Nominal accounting: n key bits; 8n four-qubit states plus 4n expected
    fresh qubits from each classical party; no classical message bits beyond
    security checks."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    realized = None
    if outcome is not None:
        rounds = len(outcome.records)
        fresh_b, fresh_c = outcome.fresh_qubits()
        lam_q = 4 * rounds + fresh_b + fresh_c
        sigma = math.sqrt(2 * rounds * 0.25)
        realized = {
            "rounds": rounds,
            "fresh_bob": fresh_b,
            "fresh_charlie": fresh_c,
            "lambda_q": lam_q,
            "lambda_s": 0 if outcome.keys is None else len(outcome.keys),
            "sigma": sigma,
            "z_score": (lam_q - 40 * n) / sigma if sigma else 0.0,
        }
    return EfficiencyReport(n=n, lambda_s=n, lambda_q=8 * n * 4 + 4 * n * 2, lambda_c=0, realized=realized)


def detection_from_outcome(outcome: ProtocolOutcome, confidence: float = 0.99) -> DetectionEstimate:
    """Per-case estimate from the rounds a run actually checked."""
    per_case = {}
    for c in CASES:
        t, f = outcome.totals.get(c, 0), outcome.failures.get(c, 0)
        per_case[c] = CaseDetection(t, f, f / t if t else 0.0, wilson_interval(f, t, confidence))
    return DetectionEstimate(per_case)


def run_with_probe_metrics(
    config: ProtocolConfig, attack: AttackModel, observer=None, condition_on: str = "r_a"
) -> tuple[ProtocolOutcome, Optional[ProbeInfoMetrics]]:
    """Run the protocol and compute probe metrics over its key positions.

    Metrics are None when the attack has no probe or some key-bit value never
    occurs on the key positions.
    """
    rhos: dict[int, np.ndarray] = {}

    def observe(record: RoundRecord, state: Statevector) -> None:
        if attack.probe_labels and record.case is Case.A:
            rhos[record.round_index] = reduced_density_matrix(state, attack.probe_labels)
        if observer is not None:
            observer(record, state)

    outcome = run_protocol(config, attack, observer=observe)
    acc = RoundAccumulator(attack.probe_labels, condition_on)
    for pos in outcome.key_positions:
        bit = _key_bit(outcome.records[pos], condition_on)
        acc.rho_sums[bit] = rhos[pos] if acc.rho_sums[bit] is None else acc.rho_sums[bit] + rhos[pos]
        acc.counts[bit] += 1
    if not attack.probe_labels or min(acc.counts) == 0:
        return outcome, None
    return outcome, acc.probe_metrics()
