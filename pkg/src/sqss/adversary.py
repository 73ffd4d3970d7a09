"""Attack models on the two quantum channels.

An attack is a pair of unitary hooks sharing probe subsystems: the forward
hook acts while particles 1 and 4 travel from Alice to Bob and Charlie, the
backward hook on whatever travels back (the reflected original under CTRL,
a fresh qubit under SIFT). Backward targets may use the placeholders
``FROM_BOB`` and ``FROM_CHARLIE``; the protocol substitutes the actual
labels each round.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .qcore import TOL, RngStream, Statevector, apply_unitary, as_unitary, basis_state, random_unitary

TO_BOB = "1"
TO_CHARLIE = "4"
FROM_BOB = "<from-bob>"
FROM_CHARLIE = "<from-charlie>"
PROBE_B = "E_b"
PROBE_C = "E_c"
BOB_PROBE = "bob_probe"

GRAM_TOL = 1e-6

_BETA_KEYS = ("00", "01", "10", "11")

# Explicit forward-leg expansion: for each ket |a>_1|bc>_23|d>_4, the probe
# vector is a sum of sign * beta_i * beta_j * |xi_i>|xi_j>, with the overall
# factor sqrt(2)/4 left out.
E_FORMULAS: dict[str, tuple[tuple[int, str, str], ...]] = {
    "0000": ((+1, "00", "00"), (+1, "10", "10")),
    "0001": ((+1, "00", "01"), (+1, "10", "11")),
    "1000": ((+1, "01", "00"), (+1, "11", "10")),
    "1001": ((+1, "01", "01"), (+1, "11", "11")),
    "0100": ((+1, "10", "00"), (-1, "00", "10")),
    "0101": ((+1, "10", "01"), (-1, "00", "11")),
    "1100": ((+1, "11", "00"), (-1, "01", "10")),
    "1101": ((+1, "11", "01"), (-1, "01", "11")),
    "0010": ((+1, "00", "10"), (+1, "10", "00")),
    "0011": ((+1, "00", "11"), (+1, "10", "01")),
    "1010": ((+1, "01", "10"), (+1, "11", "00")),
    "1011": ((+1, "01", "11"), (+1, "11", "01")),
    "0110": ((+1, "00", "00"), (-1, "10", "10")),
    "0111": ((+1, "00", "01"), (-1, "10", "11")),
    "1110": ((+1, "01", "00"), (-1, "11", "10")),
    "1111": ((+1, "01", "01"), (-1, "11", "11")),
}

# Probe vectors that must vanish for Case (a) to stay error-free.
ZERO_SET = ("0100", "0010", "0001", "0111", "1000", "1110", "1101", "1011")
# (left, right, sign): left - sign * right must vanish.
PAIRINGS = (("0000", "0110", +1), ("0101", "0011", -1), ("1100", "1010", +1), ("1001", "1111", -1))


class AttackConstructionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HookOp:
    unitary: np.ndarray
    targets: tuple[str, ...]


@dataclass(frozen=True, eq=False)
class EntangleMeasureParams:
    """Forward-leg action on |0>|xi> and |1>|xi>, plus the backward unitary.

    ``beta`` is ordered (b00, b01, b10, b11); ``xi`` has rows xi00, xi01,
    xi10, xi11. ``uf`` may be None for the identity.
    """

    beta: np.ndarray
    xi: np.ndarray
    uf: np.ndarray | None = None

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.complex128).reshape(-1)
        xi = np.atleast_2d(np.asarray(self.xi, dtype=np.complex128))
        if beta.shape != (4,):
            raise ValueError(f"beta must have 4 entries, got {beta.shape}")
        if xi.shape[0] != 4:
            raise ValueError(f"xi must have 4 rows, got shape {xi.shape}")
        for row in (0, 2):
            norm = abs(beta[row]) ** 2 + abs(beta[row + 1]) ** 2
            if abs(norm - 1) > TOL:
                raise ValueError(
                    f"|beta{_BETA_KEYS[row]}|^2 + |beta{_BETA_KEYS[row + 1]}|^2 = {norm:.12g}, expected 1"
                )
        norms = np.linalg.norm(xi, axis=1)
        if np.max(np.abs(norms - 1)) > TOL:
            raise ValueError(f"probe vectors must be normalized, norms {norms}")
        uf = None if self.uf is None else as_unitary(self.uf)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "uf", uf)

    @property
    def probe_dim(self) -> int:
        return self.xi.shape[1]

    def b(self, key: str) -> complex:
        return self.beta[_BETA_KEYS.index(key)]

    def x(self, key: str) -> np.ndarray:
        return self.xi[_BETA_KEYS.index(key)]

    def columns(self) -> tuple[np.ndarray, np.ndarray]:
        """Images of |0>|xi> and |1>|xi> in the (qubit, probe) space."""
        b00, b01, b10, b11 = self.beta
        x00, x01, x10, x11 = self.xi
        col0 = np.concatenate([b00 * x00, b01 * x01])
        col1 = np.concatenate([b10 * x10, b11 * x11])
        return col0, col1

    def gram_overlap(self) -> complex:
        col0, col1 = self.columns()
        return complex(np.vdot(col0, col1))

    def ue_matrix(self) -> np.ndarray:
        """Complete the two prescribed columns to a unitary on (qubit, probe).

        The probe starts in its first basis state, so the prescribed columns
        sit at indices 0 and d. The rest come from Gram-Schmidt against the
        standard basis, taken in order.
        """
        overlap = self.gram_overlap()
        if abs(overlap) > GRAM_TOL:
            raise AttackConstructionError(
                "forward columns are not orthogonal: "
                f"conj(b00)b10<xi00|xi10> + conj(b01)b11<xi01|xi11> = {overlap:.3g}"
            )
        d = self.probe_dim
        col0, col1 = self.columns()
        col1 = col1 - np.vdot(col0, col1) * col0
        col1 = col1 / np.linalg.norm(col1)
        basis = [col0, col1]
        for e in np.eye(2 * d, dtype=np.complex128):
            if len(basis) == 2 * d:
                break
            v = e - sum(np.vdot(q, e) * q for q in basis)
            n = np.linalg.norm(v)
            if n > 1e-8:
                basis.append(v / n)
        u = np.empty((2 * d, 2 * d), dtype=np.complex128)
        u[:, 0] = basis[0]
        u[:, d] = basis[1]
        free = [i for i in range(2 * d) if i not in (0, d)]
        for col, vec in zip(free, basis[2:]):
            u[:, col] = vec
        return as_unitary(u)

    @classmethod
    def from_unitary(cls, ue, uf=None) -> "EntangleMeasureParams":
        """Read beta and xi off a unitary on (qubit, probe), probe starting at |0>."""
        ue = as_unitary(ue)
        d = ue.shape[0] // 2
        beta, xi = [], []
        for col in (0, d):
            for half in (ue[:d, col], ue[d:, col]):
                n = np.linalg.norm(half)
                beta.append(n)
                if n > 1e-12:
                    xi.append(half / n)
                else:
                    xi.append(np.eye(d, dtype=np.complex128)[0])
        return cls(np.array(beta), np.array(xi), uf)


@dataclass(frozen=True, eq=False)
class AttackModel:
    name: str
    probe_init: Statevector | None = None
    forward: tuple[HookOp, ...] = ()
    backward: tuple[HookOp, ...] = ()
    descriptor: dict = field(default_factory=dict)
    params: EntangleMeasureParams | None = None

    @property
    def probe_labels(self) -> tuple[str, ...]:
        return () if self.probe_init is None else self.probe_init.labels

    def apply_forward(self, state: Statevector) -> Statevector:
        for op in self.forward:
            state = apply_unitary(state, op.unitary, op.targets)
        return state

    def apply_backward(self, state: Statevector, from_bob: str, from_charlie: str) -> Statevector:
        subst = {FROM_BOB: from_bob, FROM_CHARLIE: from_charlie}
        for op in self.backward:
            state = apply_unitary(state, op.unitary, [subst.get(t, t) for t in op.targets])
        return state


def _probes(*specs: tuple[str, int]) -> Statevector:
    return basis_state(list(specs), [0] * len(specs))


def identity_attack(probe_dim: int = 4) -> AttackModel:
    return AttackModel(
        "none",
        probe_init=_probes((PROBE_B, probe_dim), (PROBE_C, probe_dim)),
        descriptor={"name": "none", "probe_dim": probe_dim},
    )


_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128)

_TARGET_ALIASES = {
    "particle1": TO_BOB, "1": TO_BOB, 1: TO_BOB,
    "particle4": TO_CHARLIE, "4": TO_CHARLIE, 4: TO_CHARLIE,
}


def _normalize_targets(targets: Iterable) -> list[str]:
    out = []
    for t in targets:
        if t not in _TARGET_ALIASES:
            raise ValueError(f"unknown intercept target {t!r}; use particle1 or particle4")
        label = _TARGET_ALIASES[t]
        if label not in out:
            out.append(label)
    if not out:
        raise ValueError("intercept-resend needs at least one target")
    return sorted(out)


def intercept_resend_z(targets: Iterable = ("particle1",)) -> AttackModel:
    """Z-basis intercept-resend on the chosen forward legs.

    Modeled as a CNOT copy of the travelling qubit onto a fresh two-level
    probe, which dephases the qubit exactly as a measurement would.
    """
    labels = _normalize_targets(targets)
    probe_of = {TO_BOB: PROBE_B, TO_CHARLIE: PROBE_C}
    probes = [(probe_of[t], 2) for t in labels]
    forward = tuple(HookOp(_CNOT, (t, probe_of[t])) for t in labels)
    names = ["particle" + t for t in labels]
    return AttackModel(
        "intercept-resend",
        probe_init=_probes(*probes),
        forward=forward,
        descriptor={"name": "intercept-resend", "targets": names},
    )


def build_entangle_measure(params: EntangleMeasureParams) -> AttackModel:
    d = params.probe_dim
    ue = params.ue_matrix()
    forward = (HookOp(ue, (TO_BOB, PROBE_B)), HookOp(ue, (TO_CHARLIE, PROBE_C)))
    backward: tuple[HookOp, ...] = ()
    if params.uf is not None:
        if params.uf.shape[0] != 4 * d * d:
            raise AttackConstructionError(
                f"backward unitary must act on 2 qubits and 2 probes (dim {4 * d * d}), got {params.uf.shape[0]}"
            )
        backward = (HookOp(params.uf, (FROM_BOB, FROM_CHARLIE, PROBE_B, PROBE_C)),)
    return AttackModel(
        "entangle-measure",
        probe_init=_probes((PROBE_B, d), (PROBE_C, d)),
        forward=forward,
        backward=backward,
        descriptor={"name": "entangle-measure", "probe_dim": d},
        params=params,
    )


def compliant_attack(probe_dim: int, v=None, w=None) -> AttackModel:
    """Probe-local attack: identity on every qubit, ``v`` on each probe going
    out and ``w`` on the joint probe coming back."""
    d = probe_dim
    v = np.eye(d) if v is None else v
    w = np.eye(d * d) if w is None else w
    v = as_unitary(v)
    w = as_unitary(w)
    if v.shape[0] != d or w.shape[0] != d * d:
        raise ValueError(f"expected V of dim {d} and W of dim {d * d}, got {v.shape[0]} and {w.shape[0]}")
    ue = np.kron(np.eye(2), v)
    uf = np.kron(np.eye(4), w)
    xi0 = v[:, 0]
    params = EntangleMeasureParams(np.array([1, 0, 0, 1]), np.stack([xi0] * 4), uf)
    return AttackModel(
        "compliant",
        probe_init=_probes((PROBE_B, d), (PROBE_C, d)),
        forward=(HookOp(ue, (TO_BOB, PROBE_B)), HookOp(ue, (TO_CHARLIE, PROBE_C))),
        backward=(HookOp(uf, (FROM_BOB, FROM_CHARLIE, PROBE_B, PROBE_C)),),
        descriptor={"name": "compliant", "probe_dim": d},
        params=params,
    )


def random_compliant_attack(probe_dim: int, rng: RngStream) -> AttackModel:
    return compliant_attack(probe_dim, random_unitary(probe_dim, rng), random_unitary(probe_dim**2, rng))


def random_entangle_measure_params(probe_dim: int, rng: RngStream) -> EntangleMeasureParams:
    """Haar-random forward unitary on (qubit, probe) and backward unitary on
    (two returning qubits, both probes)."""
    ue = random_unitary(2 * probe_dim, rng)
    uf = random_unitary(4 * probe_dim * probe_dim, rng)
    return EntangleMeasureParams.from_unitary(ue, uf)


def bob_participant_attack(inner: EntangleMeasureParams) -> AttackModel:
    """Bob attacks only Alice<->Charlie traffic, keeping a private probe.

    ``inner.uf`` (if given) acts on (qubit returning from Charlie, Bob's probe).
    """
    d = inner.probe_dim
    ue = inner.ue_matrix()
    backward: tuple[HookOp, ...] = ()
    if inner.uf is not None:
        if inner.uf.shape[0] != 2 * d:
            raise AttackConstructionError(
                f"Bob's backward unitary must act on 1 qubit and his probe (dim {2 * d}), got {inner.uf.shape[0]}"
            )
        backward = (HookOp(inner.uf, (FROM_CHARLIE, BOB_PROBE)),)
    return AttackModel(
        "bob-participant",
        probe_init=_probes((BOB_PROBE, d)),
        forward=(HookOp(ue, (TO_CHARLIE, BOB_PROBE)),),
        backward=backward,
        descriptor={"name": "bob-participant", "probe_dim": d},
        params=inner,
    )


def compliant_bob_params(probe_dim: int, v=None, w=None) -> EntangleMeasureParams:
    d = probe_dim
    v = as_unitary(np.eye(d) if v is None else v)
    w = as_unitary(np.eye(d) if w is None else w)
    return EntangleMeasureParams.from_unitary(np.kron(np.eye(2), v), np.kron(np.eye(2), w))


@dataclass(frozen=True, eq=False)
class ConstraintReport:
    e_vectors: dict[str, np.ndarray]
    residuals: dict[str, float]

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    def as_dict(self) -> dict:
        return {"max_residual": self.max_residual, "residuals": dict(self.residuals)}


def e_vectors(params: EntangleMeasureParams) -> dict[str, np.ndarray]:
    out = {}
    for ket, terms in E_FORMULAS.items():
        vec = np.zeros(params.probe_dim**2, dtype=np.complex128)
        for sign, i, j in terms:
            vec += sign * params.b(i) * params.b(j) * np.kron(params.x(i), params.x(j))
        out[ket] = vec
    return out


def eval_zero_error_constraints(params: EntangleMeasureParams) -> ConstraintReport:
    vecs = e_vectors(params)
    residuals = {f"E{k}": float(np.linalg.norm(vecs[k])) for k in ZERO_SET}
    for left, right, sign in PAIRINGS:
        op = "-" if sign > 0 else "+"
        residuals[f"E{left}{op}E{right}"] = float(np.linalg.norm(vecs[left] - sign * vecs[right]))
    return ConstraintReport(vecs, residuals)


# --- parameter files --------------------------------------------------------

def _parse_complex(value) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, str):
        return complex(value.replace(" ", "").replace("i", "j"))
    if isinstance(value, Sequence) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise ValueError(f"cannot read a complex number from {value!r}")


def _parse_matrix(rows) -> np.ndarray:
    return np.array([[_parse_complex(v) for v in row] for row in rows], dtype=np.complex128)


def params_from_dict(doc: dict, returning_qubits: int = 2) -> EntangleMeasureParams:
    """Build parameters from a decoded parameter document.

    ``returning_qubits`` is 2 for an outside eavesdropper (both legs, two
    probes) and 1 for Bob's participant attack (one leg, one probe).
    """
    try:
        beta = np.array([_parse_complex(b) for b in doc["beta"]])
        xi = np.array([[_parse_complex(v) for v in row] for row in doc["xi"]])
    except KeyError as exc:
        raise ValueError(f"parameter file missing key {exc.args[0]!r}") from None
    d = xi.shape[1]
    probe_space = d**returning_qubits
    qubit_space = 2**returning_qubits
    uf_doc = doc.get("uf", {"mode": "compliant"})
    mode = uf_doc.get("mode", "compliant")
    if mode == "compliant":
        w = uf_doc.get("probe_unitary")
        w = np.eye(probe_space) if w is None else _parse_matrix(w)
        uf = np.kron(np.eye(qubit_space), w)
    elif mode == "explicit-matrix":
        uf = _parse_matrix(uf_doc["matrix"])
    elif mode == "haar-random":
        uf = random_unitary(qubit_space * probe_space, RngStream(int(uf_doc.get("seed", 0)), "uf"))
    else:
        raise ValueError(f"unknown uf mode {mode!r}; expected compliant, explicit-matrix or haar-random")
    return EntangleMeasureParams(beta, xi, uf)


def load_attack_params(path, returning_qubits: int = 2) -> EntangleMeasureParams:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ValueError("parameter file must hold a JSON object")
    return params_from_dict(doc, returning_qubits)
