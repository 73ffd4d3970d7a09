"""Dense statevector engine over labeled subsystems.

States carry an explicit ordered list of ``(label, dim)`` pairs. Amplitude
indices follow the ket string read left to right: the first subsystem is the
most significant digit. Every operation addresses subsystems by label.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TOL = 1e-9

Subsystems = tuple[tuple[str, int], ...]


class RngStream:
    """Named, seeded random stream.

    The same ``(seed, stream_id)`` pair always yields the same draws, and
    distinct stream ids give statistically independent streams.
    """

    def __init__(self, seed: int, stream_id: str):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.stream_id = stream_id
        key = zlib.crc32(stream_id.encode("utf-8"))
        self.generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, key]))
        )

    def random(self) -> float:
        return float(self.generator.random())

    def bit(self) -> int:
        return int(self.generator.random() < 0.5)

    def sample(self, population: int, k: int) -> list[int]:
        """k distinct integers from range(population), uniformly."""
        return sorted(int(i) for i in self.generator.choice(population, size=k, replace=False))

    def normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)

    def spawn(self, child_id: str) -> "RngStream":
        return RngStream(self.seed, f"{self.stream_id}/{child_id}")

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id!r})"


def _check_subsystems(subsystems) -> Subsystems:
    subs = tuple((str(label), int(dim)) for label, dim in subsystems)
    labels = [label for label, _ in subs]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate subsystem labels in {labels}")
    if any(dim < 1 for _, dim in subs):
        raise ValueError(f"subsystem dimensions must be positive: {subs}")
    return subs


@dataclass(frozen=True, eq=False)
class Statevector:
    amplitudes: np.ndarray
    subsystems: Subsystems

    def __post_init__(self):
        subs = _check_subsystems(self.subsystems)
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        expected = int(np.prod([d for _, d in subs], dtype=np.int64)) if subs else 1
        if amps.size != expected:
            raise ValueError(f"{amps.size} amplitudes for subsystems of total dimension {expected}")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > TOL:
            raise ValueError(f"statevector not normalized (norm^2 = {norm:.12g})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "subsystems", subs)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.subsystems)

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no subsystem {label!r} in {self.labels}") from None

    def tensor_view(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)

    def amplitude(self, digits: Sequence[int]) -> complex:
        return complex(self.amplitudes[encode_index(self.dims, digits)])


@dataclass(frozen=True)
class MeasurementOutcome:
    outcome_index: int
    probability: float
    post_state: Statevector
    label: object = None


def encode_index(dims: Sequence[int], digits: Sequence[int]) -> int:
    if len(dims) != len(digits):
        raise ValueError(f"{len(digits)} digits for {len(dims)} subsystems")
    index = 0
    for dim, digit in zip(dims, digits):
        if not 0 <= digit < dim:
            raise ValueError(f"digit {digit} out of range for dimension {dim}")
        index = index * dim + int(digit)
    return index


def decode_index(dims: Sequence[int], index: int) -> tuple[int, ...]:
    total = int(np.prod(dims, dtype=np.int64)) if dims else 1
    if not 0 <= index < total:
        raise ValueError(f"index {index} out of range for total dimension {total}")
    digits = []
    for dim in reversed(dims):
        index, digit = divmod(index, dim)
        digits.append(digit)
    return tuple(reversed(digits))


def basis_state(subsystems, digits: Sequence[int]) -> Statevector:
    subs = _check_subsystems(subsystems)
    dims = [d for _, d in subs]
    amps = np.zeros(int(np.prod(dims, dtype=np.int64)) if dims else 1, dtype=np.complex128)
    amps[encode_index(dims, digits)] = 1.0
    return Statevector(amps, subs)


def from_amplitudes(subsystems, amplitudes, normalize: bool = False) -> Statevector:
    amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
    if normalize:
        norm = np.linalg.norm(amps)
        if norm < TOL:
            raise ValueError("cannot normalize a zero vector")
        amps = amps / norm
    return Statevector(amps, subsystems)


def tensor(a: Statevector, b: Statevector) -> Statevector:
    clash = set(a.labels) & set(b.labels)
    if clash:
        raise ValueError(f"label collision in tensor product: {sorted(clash)}")
    return Statevector(np.kron(a.amplitudes, b.amplitudes), a.subsystems + b.subsystems)


def as_unitary(matrix, tol: float = TOL) -> np.ndarray:
    """Validate and return ``matrix`` as a complex unitary array."""
    u = np.asarray(matrix, dtype=np.complex128)
    if u.ndim == 0:
        u = u.reshape(1, 1)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"unitary must be square, got shape {u.shape}")
    err = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if err > tol:
        raise ValueError(f"matrix is not unitary (max |U^dag U - I| = {err:.3g})")
    return u


def _targets_to_front(state: Statevector, targets: Sequence[str]):
    axes = [state.axis(t) for t in targets]
    if len(set(axes)) != len(axes):
        raise ValueError(f"repeated target labels: {list(targets)}")
    rest = [i for i in range(len(state.dims)) if i not in axes]
    order = axes + rest
    tdim = int(np.prod([state.dims[i] for i in axes], dtype=np.int64))
    moved = np.transpose(state.tensor_view(), order).reshape(tdim, -1)
    return moved, order, tdim


def _restore(matrix: np.ndarray, state: Statevector, order: list[int]) -> np.ndarray:
    dims = state.dims
    shaped = matrix.reshape([dims[i] for i in order])
    return np.transpose(shaped, np.argsort(order)).reshape(-1)


def apply_unitary(state: Statevector, u: np.ndarray, targets: Sequence[str]) -> Statevector:
    """Apply ``u`` to the joint space of ``targets`` (in the given order)."""
    u = np.asarray(u, dtype=np.complex128)
    moved, order, tdim = _targets_to_front(state, targets)
    if u.shape != (tdim, tdim):
        raise ValueError(f"unitary of shape {u.shape} does not match target dimension {tdim}")
    return Statevector(_restore(u @ moved, state, order), state.subsystems)


@dataclass(frozen=True, eq=False)
class ProjectorSet:
    """A complete family of orthogonal projectors on a fixed target space.

    ``basis`` is kept when every projector is rank one; measurement then
    uses it directly instead of the full projector stack.
    """

    projectors: np.ndarray
    labels: tuple = ()
    basis: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        p = np.asarray(self.projectors, dtype=np.complex128)
        if p.ndim != 3 or p.shape[1] != p.shape[2]:
            raise ValueError(f"projector stack must have shape (m, D, D), got {p.shape}")
        m, dim, _ = p.shape
        if np.max(np.abs(p - np.conj(np.transpose(p, (0, 2, 1))))) > TOL:
            raise ValueError("projectors must be Hermitian")
        if np.max(np.abs(p.sum(axis=0) - np.eye(dim))) > TOL:
            raise ValueError("projector set is incomplete: sum differs from identity")
        prod = np.einsum("iab,jbc->ijac", p, p)
        expected = np.einsum("ij,iac->ijac", np.eye(m), p)
        if np.max(np.abs(prod - expected)) > TOL:
            raise ValueError("projectors are not mutually orthogonal idempotents")
        labels = tuple(self.labels) if self.labels else tuple(range(m))
        if len(labels) != m:
            raise ValueError(f"{len(labels)} labels for {m} projectors")
        p.setflags(write=False)
        object.__setattr__(self, "projectors", p)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.projectors.shape[1]

    @classmethod
    def from_basis(cls, basis, labels=()) -> "ProjectorSet":
        """Rank-one projectors onto the columns of an orthonormal basis."""
        b = np.asarray(basis, dtype=np.complex128)
        proj = np.einsum("am,bm->mab", b, b.conj())
        return cls(proj, tuple(labels), b)


def measure_projective(state: Statevector, targets: Sequence[str], projectors, rng: RngStream) -> MeasurementOutcome:
    """Born-rule measurement of ``targets`` followed by collapse."""
    if not isinstance(projectors, ProjectorSet):
        projectors = ProjectorSet(np.asarray(list(projectors), dtype=np.complex128))
    moved, order, tdim = _targets_to_front(state, targets)
    if projectors.dim != tdim:
        raise ValueError(f"projectors act on dimension {projectors.dim}, targets have {tdim}")

    if projectors.basis is not None:
        coeffs = projectors.basis.conj().T @ moved  # (m, rest)
        probs = np.einsum("mr,mr->m", coeffs, coeffs.conj()).real
    else:
        branches = np.einsum("mij,jr->mir", projectors.projectors, moved)
        probs = np.einsum("mir,mir->m", branches, branches.conj()).real

    total = probs.sum()
    if abs(total - 1.0) > TOL:
        raise RuntimeError(f"branch probabilities sum to {total:.12g}")
    u = rng.random() * total
    k = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    k = min(k, len(probs) - 1)
    p = float(probs[k])
    if p < 1e-12:
        raise RuntimeError(f"sampled a zero-probability branch ({k}, p={p:.3g})")

    if projectors.basis is not None:
        collapsed = np.outer(projectors.basis[:, k], coeffs[k])
    else:
        collapsed = branches[k]
    post = Statevector(_restore(collapsed / np.sqrt(p), state, order), state.subsystems)
    return MeasurementOutcome(k, p, post, projectors.labels[k])


def branch_probabilities(state: Statevector, targets: Sequence[str], projectors: ProjectorSet) -> np.ndarray:
    moved, _, _ = _targets_to_front(state, targets)
    branches = np.einsum("mij,jr->mir", projectors.projectors, moved)
    return np.einsum("mir,mir->m", branches, branches.conj()).real


def fidelity(a: Statevector, b: Statevector) -> float:
    """|<a|b>|^2 for states over identical subsystem structure."""
    if a.subsystems != b.subsystems:
        raise ValueError(f"subsystem mismatch: {a.subsystems} vs {b.subsystems}")
    return float(min(1.0, abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2))


def reduced_density_matrix(state: Statevector, keep: Sequence[str]) -> np.ndarray:
    """Partial trace over every subsystem not in ``keep`` (kept in given order)."""
    moved, _, _ = _targets_to_front(state, keep)
    return moved @ moved.conj().T


def random_unitary(dim: int, rng: RngStream) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix with phase fix."""
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    z = (rng.normal((dim, dim)) + 1j * rng.normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))
