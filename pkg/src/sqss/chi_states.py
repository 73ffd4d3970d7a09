"""The chi-type state, its Pauli-orbit basis, Bell states and projector sets."""
from __future__ import annotations

import enum
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .qcore import ProjectorSet, Statevector, apply_unitary, fidelity, from_amplitudes

PARTICLES = ("1", "2", "3", "4")
QUBITS = tuple((p, 2) for p in PARTICLES)

_S = np.sqrt(2) / 4
# (ket string over particles 1234, sign)
_CHI00_TERMS = (
    ("0000", +1), ("0101", -1), ("0011", +1), ("0110", +1),
    ("1001", +1), ("1010", +1), ("1100", +1), ("1111", -1),
)


class ChiIndex(NamedTuple):
    k: int
    l: int

    def check(self) -> "ChiIndex":
        if not (0 <= self.k <= 3 and 0 <= self.l <= 3):
            raise ValueError(f"chi index out of range: {tuple(self)}")
        return self

    def __str__(self) -> str:
        return f"{self.k},{self.l}"


class BellLabel(enum.Enum):
    PHI_PLUS = "Phi+"
    PHI_MINUS = "Phi-"
    PSI_PLUS = "Psi+"
    PSI_MINUS = "Psi-"

    def __str__(self) -> str:
        return self.value


BELL_ORDER = (BellLabel.PHI_PLUS, BellLabel.PHI_MINUS, BellLabel.PSI_PLUS, BellLabel.PSI_MINUS)


class Regrouping(enum.Enum):
    """Which particle pair carries the Bell state in a rewriting of chi00.

    The remaining two particles are in Z eigenstates |x>|y>, with x the
    lower-numbered particle.
    """

    BELL_12 = "bell-12"  # Z on 3,4
    BELL_34 = "bell-34"  # Z on 1,2
    BELL_23 = "bell-23"  # Z on 1,4


def chi00() -> Statevector:
    return _chi00()


@lru_cache(maxsize=None)
def _chi00() -> Statevector:
    amps = np.zeros(16, dtype=np.complex128)
    for ket, sign in _CHI00_TERMS:
        amps[int(ket, 2)] = sign * _S
    return Statevector(amps, QUBITS)


_PAULI = (
    np.array([[1, 0], [0, 1]], dtype=np.complex128),
    np.array([[0, 1], [1, 0]], dtype=np.complex128),
    # |0><1| - |1><0|: real antisymmetric, not the usual i*sigma_y convention
    np.array([[0, 1], [-1, 0]], dtype=np.complex128),
    np.array([[1, 0], [0, -1]], dtype=np.complex128),
)


def pauli(k: int) -> np.ndarray:
    if k not in (0, 1, 2, 3):
        raise ValueError(f"Pauli index must be 0..3, got {k}")
    return _PAULI[k].copy()


def fmb_state(k: int, l: int) -> Statevector:
    idx = ChiIndex(k, l).check()
    return _fmb_state(idx.k, idx.l)


# Paulis on particles 1 and 3 do not give an orthonormal set for this chi00
# (X on 1 and 3 together stabilizes it); particles 1 and 4 do.
FMB_PARTICLES = ("1", "4")


@lru_cache(maxsize=None)
def _fmb_state(k: int, l: int) -> Statevector:
    first, second = FMB_PARTICLES
    state = apply_unitary(chi00(), _PAULI[k], [first])
    return apply_unitary(state, _PAULI[l], [second])


def fmb_basis() -> list[ChiIndex]:
    return [ChiIndex(k, l) for k in range(4) for l in range(4)]


_BELL_VECTORS = {
    BellLabel.PHI_PLUS: np.array([1, 0, 0, 1]) / np.sqrt(2),
    BellLabel.PHI_MINUS: np.array([1, 0, 0, -1]) / np.sqrt(2),
    BellLabel.PSI_PLUS: np.array([0, 1, 1, 0]) / np.sqrt(2),
    BellLabel.PSI_MINUS: np.array([0, 1, -1, 0]) / np.sqrt(2),
}


def bell_vector(label: BellLabel) -> np.ndarray:
    return _BELL_VECTORS[label].astype(np.complex128)


def bell_state(label: BellLabel, labels: tuple[str, str] = ("a", "b")) -> Statevector:
    return from_amplitudes([(labels[0], 2), (labels[1], 2)], bell_vector(label))


@lru_cache(maxsize=None)
def projectors_z() -> ProjectorSet:
    return ProjectorSet.from_basis(np.eye(2), (0, 1))


@lru_cache(maxsize=None)
def projectors_bell() -> ProjectorSet:
    basis = np.stack([bell_vector(b) for b in BELL_ORDER], axis=1)
    return ProjectorSet.from_basis(basis, BELL_ORDER)


@lru_cache(maxsize=None)
def projectors_fmb() -> ProjectorSet:
    indices = fmb_basis()
    basis = np.stack([_fmb_state(i.k, i.l).amplitudes for i in indices], axis=1)
    return ProjectorSet.from_basis(basis, tuple(indices))


# Rewritings of chi00 as (sign, Bell label, x, y), one per regrouping, with the
# overall factor 1/2 left implicit.
_REGROUPING_TERMS = {
    Regrouping.BELL_12: (
        (+1, BellLabel.PHI_PLUS, 0, 0), (+1, BellLabel.PHI_MINUS, 1, 1),
        (-1, BellLabel.PSI_MINUS, 0, 1), (+1, BellLabel.PSI_PLUS, 1, 0),
    ),
    Regrouping.BELL_34: (
        (+1, BellLabel.PHI_PLUS, 0, 0), (+1, BellLabel.PHI_MINUS, 1, 1),
        (-1, BellLabel.PSI_MINUS, 0, 1), (+1, BellLabel.PSI_PLUS, 1, 0),
    ),
    Regrouping.BELL_23: (
        (+1, BellLabel.PHI_PLUS, 0, 0), (+1, BellLabel.PSI_MINUS, 0, 1),
        (+1, BellLabel.PSI_PLUS, 1, 0), (+1, BellLabel.PHI_MINUS, 1, 1),
    ),
}


def _ket(bit: int) -> np.ndarray:
    v = np.zeros(2, dtype=np.complex128)
    v[bit] = 1.0
    return v


def regrouping_expansion(grouping: Regrouping) -> np.ndarray:
    """The 16-amplitude vector obtained by expanding one rewriting term by term."""
    total = np.zeros(16, dtype=np.complex128)
    for sign, bell, x, y in _REGROUPING_TERMS[grouping]:
        b = bell_vector(bell)
        if grouping is Regrouping.BELL_12:
            term = np.kron(b, np.kron(_ket(x), _ket(y)))
        elif grouping is Regrouping.BELL_34:
            term = np.kron(np.kron(_ket(x), _ket(y)), b)
        else:
            term = np.kron(_ket(x), np.kron(b, _ket(y)))
        total += sign * term
    return total / 2


def correlation_table(grouping: Regrouping) -> dict[tuple[int, int], BellLabel]:
    """Map the Z-eigenvalue pair (x, y) to the Bell state it heralds."""
    return {(x, y): bell for _, bell, x, y in _REGROUPING_TERMS[grouping]}


def regrouping_fidelities() -> dict[Regrouping, float]:
    target = chi00()
    return {
        g: fidelity(target, from_amplitudes(QUBITS, regrouping_expansion(g)))
        for g in Regrouping
    }


def check_regroupings(tol: float = 1e-9) -> bool:
    return all(f >= 1.0 - tol for f in regrouping_fidelities().values())
