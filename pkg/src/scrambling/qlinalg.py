"""Dense linear algebra, Pauli strings, permutation operators and Weingarten data.

Operators and states are plain complex ``numpy`` arrays. Qubit 0 is the
leftmost (most significant) tensor factor. Permutations are 0-based: a
:class:`Permutation` with ``images[i] = j`` sends position ``i`` to ``j``, and
its operator acts as ``T|a_0 ... a_{k-1}> = |a_{pi(0)} ... a_{pi(k-1)}>``.
With this convention ``Tr{T_pi A_0 (x) ... (x) A_{k-1}}`` is the product over
cycles ``(i, pi(i), pi(pi(i)), ...)`` of ``Tr{A_i A_pi(i) ...}``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Iterable, Sequence

import numpy as np

ATOL = 1e-10

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# Y is the only Pauli that is imaginary, hence antisymmetric under transpose.
_TRANSPOSE_SIGN = {"I": 1, "X": 1, "Y": -1, "Z": 1}

_PHASES = (1, -1, 1j, -1j)


def kron(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of any number of operators (left factor most significant)."""
    if not ops:
        return np.eye(1, dtype=complex)
    return reduce(np.kron, ops)


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def is_unitary(a: np.ndarray, atol: float = ATOL) -> bool:
    return np.allclose(a @ dagger(a), np.eye(a.shape[0]), atol=atol)


def is_hermitian(a: np.ndarray, atol: float = ATOL) -> bool:
    return np.allclose(a, dagger(a), atol=atol)


def check_state(rho: np.ndarray, atol: float = 1e-9) -> None:
    """Raise ``ValueError`` unless ``rho`` is a unit-trace PSD matrix."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if not is_hermitian(rho, atol):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > atol:
        raise ValueError(f"density matrix has trace {np.trace(rho).real:.3g}, expected 1")
    if np.linalg.eigvalsh(rho).min() < -atol:
        raise ValueError("density matrix is not positive semidefinite")


def num_qubits_of(dim: int) -> int:
    n = dim.bit_length() - 1
    if 1 << n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True)
class PauliString:
    """Signed tensor product of single-qubit Paulis, e.g. ``PauliString("ZI")``."""

    letters: str
    phase: complex = 1

    def __post_init__(self):
        letters = self.letters.upper()
        if not letters or set(letters) - set("IXYZ"):
            raise ValueError(f"invalid Pauli letters {self.letters!r}")
        if not any(np.isclose(self.phase, p) for p in _PHASES):
            raise ValueError(f"phase must be one of +-1, +-i, got {self.phase}")
        ph = complex(self.phase)
        object.__setattr__(self, "letters", letters)
        object.__setattr__(self, "phase", complex(round(ph.real), round(ph.imag)))

    @classmethod
    def single(cls, num_qubits: int, qubit: int, letter: str) -> "PauliString":
        """Single non-identity letter on ``qubit`` (0-based)."""
        if not 0 <= qubit < num_qubits:
            raise ValueError(f"qubit {qubit} out of range for {num_qubits} qubits")
        s = ["I"] * num_qubits
        s[qubit] = letter
        return cls("".join(s))

    @classmethod
    def from_sparse(cls, num_qubits: int, terms: dict[int, str], phase: complex = 1) -> "PauliString":
        s = ["I"] * num_qubits
        for q, letter in terms.items():
            s[q] = letter
        return cls("".join(s), phase)

    @property
    def num_qubits(self) -> int:
        return len(self.letters)

    @property
    def support(self) -> frozenset[int]:
        return frozenset(i for i, c in enumerate(self.letters) if c != "I")

    @property
    def is_hermitian(self) -> bool:
        return self.phase.imag == 0

    def matrix(self) -> np.ndarray:
        return self.phase * kron(*(PAULI_MATRICES[c] for c in self.letters))

    def dagger(self) -> "PauliString":
        return PauliString(self.letters, self.phase.conjugate())

    def transpose(self) -> "PauliString":
        sign = math.prod(_TRANSPOSE_SIGN[c] for c in self.letters)
        return PauliString(self.letters, sign * self.phase)

    def conj(self) -> "PauliString":
        return self.dagger().transpose()

    def __str__(self) -> str:
        prefix = {1: "+", -1: "-", 1j: "+i", -1j: "-i"}[self.phase]
        return prefix + self.letters


def pauli_matrix(p: PauliString) -> np.ndarray:
    return p.matrix()


class Permutation:
    """Permutation of ``range(size)`` in one-line (image) form."""

    __slots__ = ("images",)

    def __init__(self, images: Iterable[int]):
        images = tuple(int(i) for i in images)
        if sorted(images) != list(range(len(images))):
            raise ValueError(f"{images} is not a permutation of 0..{len(images) - 1}")
        self.images = images

    @classmethod
    def identity(cls, size: int) -> "Permutation":
        return cls(range(size))

    @classmethod
    def from_cycles(cls, size: int, cycles: Iterable[Sequence[int]]) -> "Permutation":
        """Build from 0-based cycles; ``(0, 1, 2)`` sends 0->1->2->0."""
        images = list(range(size))
        seen: set[int] = set()
        for cyc in cycles:
            for pos, i in enumerate(cyc):
                if i in seen or not 0 <= i < size:
                    raise ValueError(f"bad cycle {cyc}")
                seen.add(i)
                images[i] = cyc[(pos + 1) % len(cyc)]
        return cls(images)

    @classmethod
    def cycle(cls, size: int) -> "Permutation":
        """The full cycle ``0 -> 1 -> ... -> size-1 -> 0``."""
        return cls.from_cycles(size, [tuple(range(size))])

    @property
    def size(self) -> int:
        return len(self.images)

    def __call__(self, i: int) -> int:
        return self.images[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, Permutation) and self.images == other.images

    def __hash__(self) -> int:
        return hash(self.images)

    def __repr__(self) -> str:
        body = "".join("(" + ",".join(map(str, c)) + ")" for c in self.cycles())
        return f"Permutation{body or '()'}"

    def inverse(self) -> "Permutation":
        inv = [0] * self.size
        for i, j in enumerate(self.images):
            inv[j] = i
        return Permutation(inv)

    def compose(self, other: "Permutation") -> "Permutation":
        """Functional composition ``(self o other)(i) = self(other(i))``."""
        if self.size != other.size:
            raise ValueError("size mismatch")
        return Permutation(self.images[j] for j in other.images)

    def __mul__(self, other: "Permutation") -> "Permutation":
        """Product in operator order: ``T(p * q) == T(p) @ T(q)``.

        Since ``T_p T_q`` applies ``q``'s relabeling on top of ``p``'s, this is
        ``q o p`` in functional notation.
        """
        return other.compose(self)

    def cycles(self, include_fixed: bool = False) -> list[tuple[int, ...]]:
        out, seen = [], set()
        for start in range(self.size):
            if start in seen:
                continue
            cyc = [start]
            seen.add(start)
            j = self.images[start]
            while j != start:
                cyc.append(j)
                seen.add(j)
                j = self.images[j]
            if include_fixed or len(cyc) > 1:
                out.append(tuple(cyc))
        return out

    def num_cycles(self) -> int:
        """f(pi): number of cycles, fixed points included."""
        return len(self.cycles(include_fixed=True))

    def cycle_type(self) -> tuple[int, ...]:
        return tuple(sorted((len(c) for c in self.cycles(include_fixed=True)), reverse=True))

    def has_fixed_point(self) -> bool:
        return any(i == j for i, j in enumerate(self.images))

    def only_even_cycles(self) -> bool:
        return all(len(c) % 2 == 0 for c in self.cycles(include_fixed=True))


def permutation_operator(perm: Permutation, local_dim: int) -> np.ndarray:
    """Dense ``T_pi`` on ``(local_dim)^k`` sending ``|a_0..a_{k-1}>`` to ``|a_pi(0)..a_pi(k-1)>``."""
    if local_dim < 2:
        raise ValueError("local_dim must be >= 2")
    k = perm.size
    dim = local_dim**k
    digits = np.indices((local_dim,) * k).reshape(k, -1)
    rows = np.ravel_multi_index(digits[list(perm.images)], (local_dim,) * k)
    T = np.zeros((dim, dim))
    T[rows, np.arange(dim)] = 1.0
    return T


def trace_with_permutation(perm: Permutation, ops: Sequence[np.ndarray]) -> complex:
    """``Tr{T_pi A_0 (x) ... (x) A_{k-1}}`` as a product of cycle traces."""
    if len(ops) != perm.size:
        raise ValueError(f"{len(ops)} operators for a permutation of size {perm.size}")
    shape = np.shape(ops[0])
    if any(np.shape(a) != shape for a in ops) or len(shape) != 2 or shape[0] != shape[1]:
        raise ValueError("operators must be square and share one dimension")
    value = 1.0 + 0j
    for cyc in perm.cycles(include_fixed=True):
        prod = ops[cyc[0]]
        for i in cyc[1:]:
            prod = prod @ ops[i]
        value *= np.trace(prod)
    return complex(value)


def all_permutations(k: int) -> list[Permutation]:
    """S_k in lexicographic order of images (identity first)."""
    return [Permutation(p) for p in itertools.permutations(range(k))]


def derangements(k: int) -> list[Permutation]:
    """Fixed-point-free elements of S_k, lexicographic order."""
    if not 1 <= k <= 6:
        raise ValueError("derangements supported for 1 <= k <= 6")
    return [p for p in all_permutations(k) if not p.has_fixed_point()]


@dataclass(frozen=True)
class WeingartenMatrix:
    """Inverse of the Gram matrix ``d^{f(pi o sigma)}`` indexed by :func:`all_permutations`."""

    k: int
    d: int
    perms: tuple[Permutation, ...]
    matrix: np.ndarray

    def index(self, p: Permutation) -> int:
        return self.perms.index(p)

    def __getitem__(self, key: tuple[Permutation, Permutation]) -> float:
        p, s = key
        return float(self.matrix[self.index(p), self.index(s)])

    def gram(self) -> np.ndarray:
        return gram_matrix(self.k, self.d)


def gram_matrix(k: int, d: int) -> np.ndarray:
    perms = all_permutations(k)
    return np.array([[float(d) ** p.compose(s).num_cycles() for s in perms] for p in perms])


@lru_cache(maxsize=None)
def weingarten_matrix(k: int, d: int) -> WeingartenMatrix:
    if not 1 <= k <= 4:
        raise ValueError("weingarten_matrix supports 1 <= k <= 4")
    if d < k:
        raise ValueError(f"Gram matrix is singular for d={d} < k={k}")
    C = np.linalg.inv(gram_matrix(k, d))
    C.setflags(write=False)
    return WeingartenMatrix(k, d, tuple(all_permutations(k)), C)


def haar_unitary(d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-random unitary (or a stack of ``size`` of them).

    QR of a complex Ginibre matrix, with the phases of R's diagonal absorbed
    into Q so the distribution is exactly Haar.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    shape = (d, d) if size is None else (size, d, d)
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    ph = diag / np.abs(diag)
    return q * ph[..., None, :]
