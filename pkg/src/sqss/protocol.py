"""Three-party semiquantum secret sharing over chi-type states.

Alice keeps particles 2 and 3 of every chi00 and sends particle 1 to Bob and
particle 4 to Charlie, one round at a time. Each classical party either
SIFTs (Z-measure, resend a fresh qubit in the observed state) or CTRLs
(reflect). The pair of choices fixes the case and Alice's measurement:

    A  SIFT/SIFT  Bell(2,3), Z(fresh from Bob), Z(fresh from Charlie)
    B  SIFT/CTRL  Bell(3,4), Z(2), Z(fresh from Bob)
    C  CTRL/SIFT  Bell(1,2), Z(3), Z(fresh from Charlie)
    D  CTRL/CTRL  four-qubit chi basis on (1,2,3,4)

Case A rounds are split into check positions and key positions; every B, C
and D round is a check.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .adversary import AttackModel, identity_attack
from .chi_states import (
    BellLabel,
    ChiIndex,
    Regrouping,
    chi00,
    correlation_table,
    projectors_bell,
    projectors_fmb,
    projectors_z,
)
from .qcore import RngStream, Statevector, basis_state, measure_projective, tensor

FRESH_BOB = "1f"
FRESH_CHARLIE = "4f"


class Choice(enum.Enum):
    SIFT = "SIFT"
    CTRL = "CTRL"

    def __str__(self) -> str:
        return self.value


class Case(enum.Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"

    def __str__(self) -> str:
        return self.value


CASES = (Case.A, Case.B, Case.C, Case.D)

_CASE_OF = {
    (Choice.SIFT, Choice.SIFT): Case.A,
    (Choice.SIFT, Choice.CTRL): Case.B,
    (Choice.CTRL, Choice.SIFT): Case.C,
    (Choice.CTRL, Choice.CTRL): Case.D,
}


def classify_case(bob: Choice, charlie: Choice) -> Case:
    return _CASE_OF[(bob, charlie)]


@dataclass(frozen=True)
class ProtocolConfig:
    n: int = 16
    check_fraction: float = 0.5
    abort_threshold: float = 0.0
    probe_dim: int = 4
    seed: int = 0

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 0 < self.check_fraction < 1:
            raise ValueError(f"check_fraction must lie in (0, 1), got {self.check_fraction}")
        if not 0 <= self.abort_threshold <= 1:
            raise ValueError(f"abort_threshold must lie in [0, 1], got {self.abort_threshold}")
        if int(self.probe_dim) < 1:
            raise ValueError(f"probe_dim must be >= 1, got {self.probe_dim}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def rounds(self) -> int:
        return 8 * self.n


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    bob_choice: Choice
    charlie_choice: Choice
    case: Case
    bob_z: Optional[int] = None
    charlie_z: Optional[int] = None
    fresh_bob: Optional[int] = None
    fresh_charlie: Optional[int] = None
    alice_bell: Optional[BellLabel] = None
    alice_z2: Optional[int] = None
    alice_z3: Optional[int] = None
    alice_fresh_bob: Optional[int] = None
    alice_fresh_charlie: Optional[int] = None
    alice_fmb: Optional[ChiIndex] = None
    check_selected: bool = False
    used_for_key: bool = False
    check_pass: Optional[bool] = None


@dataclass(frozen=True)
class ActionResult:
    bell: Optional[BellLabel] = None
    z: dict = field(default_factory=dict)
    fmb: Optional[ChiIndex] = None


@dataclass(frozen=True)
class KeyTriple:
    """Key bits of the three parties on the key positions.

    ``r_b`` and ``r_c`` are Bob's and Charlie's own Z outcomes and ``r_a`` is
    their XOR. ``alice_r_b``/``alice_r_c`` are what Alice read off the fresh
    particles.
    """

    r_a: tuple[int, ...]
    r_b: tuple[int, ...]
    r_c: tuple[int, ...]
    alice_r_b: tuple[int, ...]
    alice_r_c: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.r_a)

    @property
    def alice_r_a(self) -> tuple[int, ...]:
        return tuple(b ^ c for b, c in zip(self.alice_r_b, self.alice_r_c))

    @property
    def alice_agrees(self) -> bool:
        return self.alice_r_b == self.r_b and self.alice_r_c == self.r_c


@dataclass(frozen=True)
class SiftResult:
    records: tuple[RoundRecord, ...]
    checked: tuple[int, ...]
    key_positions: tuple[int, ...]
    error_rates: dict
    failures: dict
    totals: dict
    aborted: bool
    diagnostic: Optional[str] = None


@dataclass(frozen=True)
class ProtocolOutcome:
    config: ProtocolConfig
    records: tuple[RoundRecord, ...]
    aborted: bool
    error_rates: dict
    keys: Optional[KeyTriple]
    checked: tuple[int, ...] = ()
    key_positions: tuple[int, ...] = ()
    failures: dict = field(default_factory=dict)
    totals: dict = field(default_factory=dict)
    diagnostic: Optional[str] = None

    def case_counts(self) -> dict:
        counts = {c: 0 for c in CASES}
        for r in self.records:
            counts[r.case] += 1
        return counts

    def fresh_qubits(self) -> tuple[int, int]:
        bob = sum(r.bob_choice is Choice.SIFT for r in self.records)
        charlie = sum(r.charlie_choice is Choice.SIFT for r in self.records)
        return bob, charlie


@dataclass
class PartyStreams:
    bob: RngStream
    charlie: RngStream
    alice: RngStream

    @classmethod
    def from_seed(cls, seed: int) -> "PartyStreams":
        return cls(RngStream(seed, "bob"), RngStream(seed, "charlie"), RngStream(seed, "alice"))


def _bit(x) -> int:
    return int(x)


def _classical_party(state: Statevector, particle: str, fresh_label: str, choice: Choice, rng: RngStream):
    """SIFT or CTRL on ``particle``; returns (state, returning label, z, fresh)."""
    if choice is Choice.CTRL:
        return state, particle, None, None
    m = measure_projective(state, [particle], projectors_z(), rng)
    z = _bit(m.label)
    # the measured original stays in the register, collapsed
    state = tensor(m.post_state, basis_state([(fresh_label, 2)], [z]))
    return state, fresh_label, z, z


def apply_action(case: Case, state: Statevector, rng: RngStream) -> tuple[ActionResult, Statevector]:
    """Alice's measurement for ``case``: Bell first, then her own Z, then fresh Z."""
    labels = set(state.labels)

    def need(*names):
        missing = [n for n in names if n not in labels]
        if missing:
            raise RuntimeError(f"case {case} needs subsystems {missing}, state has {sorted(labels)}")

    if case is Case.D:
        need("1", "2", "3", "4")
        m = measure_projective(state, ["1", "2", "3", "4"], projectors_fmb(), rng)
        return ActionResult(fmb=m.label), m.post_state

    bell_pair, z_order = {
        Case.A: (("2", "3"), (FRESH_BOB, FRESH_CHARLIE)),
        Case.B: (("3", "4"), ("2", FRESH_BOB)),
        Case.C: (("1", "2"), ("3", FRESH_CHARLIE)),
    }[case]
    need(*bell_pair, *z_order)
    m = measure_projective(state, list(bell_pair), projectors_bell(), rng)
    bell, state = m.label, m.post_state
    z = {}
    for label in z_order:
        m = measure_projective(state, [label], projectors_z(), rng)
        z[label] = _bit(m.label)
        state = m.post_state
    return ActionResult(bell=bell, z=z), state


_TABLE_A = correlation_table(Regrouping.BELL_23)
_TABLE_B = correlation_table(Regrouping.BELL_34)
_TABLE_C = correlation_table(Regrouping.BELL_12)
_CHI00_INDEX = ChiIndex(0, 0)


def check_round(record: RoundRecord) -> bool:
    """Whether the round's data are consistent with an undisturbed channel."""
    case = record.case
    if case is Case.A:
        return (
            _TABLE_A[(record.bob_z, record.charlie_z)] is record.alice_bell
            and record.alice_fresh_bob == record.fresh_bob
            and record.alice_fresh_charlie == record.fresh_charlie
        )
    if case is Case.B:
        return (
            _TABLE_B[(record.bob_z, record.alice_z2)] is record.alice_bell
            and record.alice_fresh_bob == record.fresh_bob
        )
    if case is Case.C:
        return (
            _TABLE_C[(record.alice_z3, record.charlie_z)] is record.alice_bell
            and record.alice_fresh_charlie == record.fresh_charlie
        )
    return record.alice_fmb == _CHI00_INDEX


RoundObserver = Callable[[RoundRecord, Statevector], None]


class RoundRunner:
    """Executes single rounds for a fixed attack, caching the post-forward state.

    The state before Bob and Charlie act is the same every round, so it is
    built once.
    """

    def __init__(self, attack: AttackModel, streams: PartyStreams):
        self.attack = attack
        self.streams = streams
        initial = chi00()
        if attack.probe_init is not None:
            initial = tensor(initial, attack.probe_init)
        self._outbound = attack.apply_forward(initial)

    def run(self, index: int, choices: tuple[Choice, Choice] | None = None) -> tuple[RoundRecord, Statevector]:
        s = self.streams
        if choices is None:
            bob_choice = Choice.SIFT if s.bob.bit() == 0 else Choice.CTRL
            charlie_choice = Choice.SIFT if s.charlie.bit() == 0 else Choice.CTRL
        else:
            bob_choice, charlie_choice = choices
        state = self._outbound
        state, ret_b, bob_z, fresh_b = _classical_party(state, "1", FRESH_BOB, bob_choice, s.bob)
        state, ret_c, charlie_z, fresh_c = _classical_party(state, "4", FRESH_CHARLIE, charlie_choice, s.charlie)
        state = self.attack.apply_backward(state, ret_b, ret_c)

        case = classify_case(bob_choice, charlie_choice)
        result, state = apply_action(case, state, s.alice)
        record = RoundRecord(
            round_index=index,
            bob_choice=bob_choice,
            charlie_choice=charlie_choice,
            case=case,
            bob_z=bob_z,
            charlie_z=charlie_z,
            fresh_bob=fresh_b,
            fresh_charlie=fresh_c,
            alice_bell=result.bell,
            alice_z2=result.z.get("2"),
            alice_z3=result.z.get("3"),
            alice_fresh_bob=result.z.get(FRESH_BOB),
            alice_fresh_charlie=result.z.get(FRESH_CHARLIE),
            alice_fmb=result.fmb,
        )
        if case is not Case.A:
            record = replace(record, check_selected=True, check_pass=check_round(record))
        return record, state


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def sift_and_check(records, config: ProtocolConfig, rng: RngStream) -> SiftResult:
    """Pick Case A check positions, compute per-case error rates, decide abort."""
    records = list(records)
    case_a = [i for i, r in enumerate(records) if r.case is Case.A]
    if len(case_a) < 2:
        return SiftResult(
            tuple(records), (), (), {c: 0.0 for c in CASES}, {c: 0 for c in CASES}, {c: 0 for c in CASES},
            aborted=True,
            diagnostic=f"only {len(case_a)} Case A rounds; need at least 2 to both check and share a key",
        )
    n_check = min(max(1, _round_half_up(config.check_fraction * len(case_a))), len(case_a) - 1)
    picked = set(case_a[j] for j in rng.sample(len(case_a), n_check))
    remainder = [i for i in case_a if i not in picked]
    key_pos = remainder[: config.n]

    key_set = set(key_pos)
    failures = {c: 0 for c in CASES}
    totals = {c: 0 for c in CASES}
    for i, r in enumerate(records):
        if r.case is Case.A:
            if i in picked:
                r = replace(r, check_selected=True, check_pass=check_round(r))
            elif i in key_set:
                r = replace(r, used_for_key=True)
            records[i] = r
        if r.check_selected:
            totals[r.case] += 1
            failures[r.case] += not r.check_pass
    rates = {c: (failures[c] / totals[c] if totals[c] else 0.0) for c in CASES}
    aborted = any(rate > config.abort_threshold for rate in rates.values())
    diagnostic = None
    if aborted:
        worst = max(CASES, key=lambda c: rates[c])
        diagnostic = f"error rate {rates[worst]:.4f} in case {worst} exceeds threshold {config.abort_threshold}"
    return SiftResult(
        tuple(records), tuple(sorted(picked)), tuple(key_pos), rates, failures, totals, aborted, diagnostic
    )


def derive_key(key_records) -> KeyTriple:
    key_records = list(key_records)
    if not key_records:
        raise ValueError("no key positions: cannot derive a key")
    r_b = tuple(r.bob_z for r in key_records)
    r_c = tuple(r.charlie_z for r in key_records)
    return KeyTriple(
        r_a=tuple(b ^ c for b, c in zip(r_b, r_c)),
        r_b=r_b,
        r_c=r_c,
        alice_r_b=tuple(r.alice_fresh_bob for r in key_records),
        alice_r_c=tuple(r.alice_fresh_charlie for r in key_records),
    )


def run_protocol(
    config: ProtocolConfig,
    attack: AttackModel | None = None,
    observer: RoundObserver | None = None,
) -> ProtocolOutcome:
    """Run all 8n rounds, sift, check and (unless aborted) derive the key.

    ``observer`` sees every round's record and final global state; analysis
    code uses it to read probe states without re-running the protocol.
    """
    attack = attack if attack is not None else identity_attack(config.probe_dim)
    runner = RoundRunner(attack, PartyStreams.from_seed(config.seed))
    records = []
    for i in range(config.rounds):
        record, state = runner.run(i)
        if observer is not None:
            observer(record, state)
        records.append(record)

    sift = sift_and_check(records, config, RngStream(config.seed, "sift"))
    keys = None
    aborted, diagnostic = sift.aborted, sift.diagnostic
    if not aborted:
        keys = derive_key(sift.records[i] for i in sift.key_positions)
    return ProtocolOutcome(
        config=config,
        records=sift.records,
        aborted=aborted,
        error_rates=sift.error_rates,
        keys=keys,
        checked=sift.checked,
        key_positions=sift.key_positions,
        failures=sift.failures,
        totals=sift.totals,
        diagnostic=diagnostic,
    )
