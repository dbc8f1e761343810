"""Mixed-field Ising chain, exact evolution and the protocol input states.

Qubit 0 is the leftmost tensor factor. Ancilla registers are appended after
the system qubits, so system qubit ``q`` pairs with ancilla ``n + q`` in the
doubled (Bell) register and the single ancilla of the one-pair protocol is
qubit ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .qlinalg import PauliString, dagger, kron

MAX_QUBITS = 12


@dataclass(frozen=True)
class IsingParams:
    J: float = 1.0
    hx: float = 1.05
    hz: float = 0.5
    E0: float | None = None

    def __post_init__(self):
        if self.E0 is None:
            object.__setattr__(self, "E0", math.sqrt(4 * self.J**2 + 2 * self.hx**2 + 2 * self.hz**2))
        if not self.E0 > 0:
            raise ValueError("E0 must be positive")


def build_ising_hamiltonian(n: int, params: IsingParams = IsingParams()) -> np.ndarray:
    """Dense open-chain H = -(J sum Z_i Z_{i+1} + hx sum X_i + hz sum Z_i) / E0."""
    if not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"n must be in 1..{MAX_QUBITS}, got {n}")
    dim = 1 << n
    # Z-type terms are diagonal; build them from bit patterns directly.
    idx = np.arange(dim)
    z = 1 - 2 * ((idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1)
    diag = params.hz * z.sum(axis=1) + params.J * (z[:, :-1] * z[:, 1:]).sum(axis=1)
    h = np.diag(diag.astype(float))
    for q in range(n):
        h[idx, idx ^ (1 << (n - 1 - q))] += params.hx
    return -h / params.E0


@dataclass(frozen=True)
class HamiltonianSpectrum:
    num_qubits: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    params: IsingParams = field(default_factory=IsingParams)

    @property
    def dim(self) -> int:
        return 1 << self.num_qubits

    def hamiltonian(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ dagger(v)


def diagonalize(h: np.ndarray, params: IsingParams | None = None) -> HamiltonianSpectrum:
    n = int(round(math.log2(h.shape[0])))
    evals, evecs = np.linalg.eigh(h)
    return HamiltonianSpectrum(n, evals, evecs, params or IsingParams())


def ising_spectrum(n: int, params: IsingParams = IsingParams()) -> HamiltonianSpectrum:
    return diagonalize(build_ising_hamiltonian(n, params), params)


def evolution_operator(spec: HamiltonianSpectrum, t: float) -> np.ndarray:
    """U(t) = exp(-iHt) from the eigendecomposition."""
    if t == 0:
        # exact, rather than V V^dag up to rounding
        return np.eye(spec.dim, dtype=complex)
    v = spec.eigenvectors
    return (v * np.exp(-1j * spec.eigenvalues * t)) @ dagger(v)


def heisenberg_operator(w: PauliString | np.ndarray, u: np.ndarray) -> np.ndarray:
    """W(t) = U^dag W U."""
    wm = w.matrix() if isinstance(w, PauliString) else np.asarray(w)
    if wm.shape != u.shape:
        raise ValueError(f"operator shape {wm.shape} does not match evolution {u.shape}")
    return dagger(u) @ wm @ u


# ---------------------------------------------------------------------------
# protocol states


def mixed_protocol_input(n: int) -> np.ndarray:
    """rho_in = I/2^{n-1} (x) |0><0|, the last qubit pure."""
    if n < 2:
        raise ValueError("the mixed protocol needs n >= 2")
    return kron(np.eye(1 << (n - 1)) / (1 << (n - 1)), np.diag([1.0, 0.0]).astype(complex))


def prepare_mixed_protocol_state(n: int, spec: HamiltonianSpectrum, t: float) -> np.ndarray:
    u = evolution_operator(spec, t)
    return u @ mixed_protocol_input(n) @ dagger(u)


def mixed_protocol_ensemble(n: int, spec: HamiltonianSpectrum, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Uniform ensemble ``U|x,0>`` whose average is rho_V. Rows are states."""
    if n < 2:
        raise ValueError("the mixed protocol needs n >= 2")
    u = evolution_operator(spec, t)
    states = np.ascontiguousarray(u[:, ::2].T)
    return states, np.full(len(states), 1.0 / len(states))


def bell_dual_vector(n: int, spec: HamiltonianSpectrum, t: float) -> np.ndarray:
    """(U (x) I)|Phi> on 2n qubits; amplitude [a, i] = U[a, i] / sqrt(d)."""
    u = evolution_operator(spec, t)
    return u.reshape(-1) / math.sqrt(u.shape[0])


def prepare_bell_dual_state(n: int, spec: HamiltonianSpectrum, t: float) -> np.ndarray:
    if 2 * n > MAX_QUBITS:
        raise ValueError("dense doubled state limited to 2n <= 12; use bell_dual_vector")
    psi = bell_dual_vector(n, spec, t)
    return np.outer(psi, psi.conj())


def _check_bell_qubit(n: int, bell_qubit: int) -> None:
    if bell_qubit not in (0, n - 1):
        raise ValueError(f"bell_qubit must be 0 or {n - 1}, got {bell_qubit}")


def single_bell_ensemble(
    n: int, spec: HamiltonianSpectrum, t: float, bell_qubit: int
) -> tuple[np.ndarray, np.ndarray]:
    """Pure states on n+1 qubits (ancilla last) averaging to rho_{H,bell_qubit,a}.

    Every system qubit except ``bell_qubit`` starts in a uniformly random
    basis state; ``bell_qubit`` shares a Bell pair with the ancilla.
    """
    _check_bell_qubit(n, bell_qubit)
    u = evolution_operator(spec, t)
    d = 1 << n
    shift = n - 1 - bell_qubit
    others = [i for i in range(d) if not (i >> shift) & 1]
    states = np.empty((len(others), 2 * d), dtype=complex)
    for row, x in enumerate(others):
        # amplitude [a, b] = U[a, x with bit b at bell_qubit] / sqrt 2
        states[row] = np.stack([u[:, x], u[:, x | (1 << shift)]], axis=1).reshape(-1) / math.sqrt(2)
    return states, np.full(len(others), 1.0 / len(others))


def prepare_single_bell_state(n: int, spec: HamiltonianSpectrum, t: float, bell_qubit: int) -> np.ndarray:
    states, weights = single_bell_ensemble(n, spec, t, bell_qubit)
    return np.einsum("e,ei,ej->ij", weights, states, states.conj())


def ensemble_density(states: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return np.einsum("e,ei,ej->ij", weights, states, states.conj())


def partial_trace(rho: np.ndarray, keep: list[int], num_qubits: int) -> np.ndarray:
    """Reduced state on the qubits in ``keep`` (in the order given)."""
    t = rho.reshape((2,) * (2 * num_qubits))
    traced = [q for q in range(num_qubits) if q not in keep]
    letters = [chr(97 + i) for i in range(2 * num_qubits)]
    for q in traced:
        letters[num_qubits + q] = letters[q]
    out = [letters[q] for q in keep] + [letters[num_qubits + q] for q in keep]
    r = np.einsum("".join(letters) + "->" + "".join(out), t)
    m = 1 << len(keep)
    return r.reshape(m, m)


__all__ = [
    "IsingParams",
    "HamiltonianSpectrum",
    "build_ising_hamiltonian",
    "diagonalize",
    "ising_spectrum",
    "evolution_operator",
    "heisenberg_operator",
    "mixed_protocol_input",
    "prepare_mixed_protocol_state",
    "mixed_protocol_ensemble",
    "bell_dual_vector",
    "prepare_bell_dual_state",
    "single_bell_ensemble",
    "prepare_single_bell_state",
    "ensemble_density",
    "partial_trace",
]
