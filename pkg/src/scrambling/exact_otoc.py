"""Brute-force reference values for every correlator used in the package.

Nothing here goes through the shadow or estimator code: all values are plain
dense matrix products, so they can serve as an independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .dynamics import HamiltonianSpectrum, evolution_operator, heisenberg_operator
from .qlinalg import PauliString, Permutation, all_permutations, check_state, dagger, haar_unitary, weingarten_matrix


@dataclass(frozen=True)
class OtocPoint:
    t: float
    k: int
    value: complex
    n_qubits: int
    w_label: str
    v_label: str


def default_w(n: int) -> PauliString:
    """Z on the first qubit."""
    return PauliString.single(n, 0, "Z")


def default_v(n: int) -> PauliString:
    """Z on the last qubit."""
    return PauliString.single(n, n - 1, "Z")


def _check_pair(spec: HamiltonianSpectrum, w: PauliString, v: PauliString) -> None:
    n = spec.num_qubits
    if w.num_qubits != n or v.num_qubits != n:
        raise ValueError(f"operators must act on {n} qubits")
    if w.support & v.support:
        raise ValueError(f"W={w} and V={v} overlap; they must act on disjoint qubits")


def _otoc_block(wt: np.ndarray, vm: np.ndarray) -> np.ndarray:
    return dagger(wt) @ dagger(vm) @ wt @ vm


def otoc_from_unitary(u: np.ndarray, w: np.ndarray, v: np.ndarray, k: int) -> complex:
    """(1/d) Tr{(W(t)^dag V^dag W(t) V)^k} with W(t) = U^dag W U."""
    wt = dagger(u) @ w @ u
    block = _otoc_block(wt, v)
    return complex(np.trace(np.linalg.matrix_power(block, k))) / u.shape[0]


def otoc_4k(spec: HamiltonianSpectrum, t: float, w: PauliString, v: PauliString, k: int) -> complex:
    if k < 1:
        raise ValueError("k must be >= 1")
    _check_pair(spec, w, v)
    return otoc_from_unitary(evolution_operator(spec, t), w.matrix(), v.matrix(), k)


def general_otoc(
    spec: HamiltonianSpectrum, t: float, w: PauliString, v: PauliString, k: int, rho: np.ndarray
) -> complex:
    """Tr{rho (W(t)^dag V^dag W(t) V)^k} for an arbitrary state rho."""
    if k < 1:
        raise ValueError("k must be >= 1")
    _check_pair(spec, w, v)
    check_state(rho)
    wt = heisenberg_operator(w, evolution_operator(spec, t))
    block = np.linalg.matrix_power(_otoc_block(wt, v.matrix()), k)
    return complex(np.trace(rho @ block))


def commutator(spec: HamiltonianSpectrum, t: float, w: PauliString, v: PauliString) -> np.ndarray:
    wt = heisenberg_operator(w, evolution_operator(spec, t))
    vm = v.matrix()
    return wt @ vm - vm @ wt


def commutator_schatten_norm(spec: HamiltonianSpectrum, t: float, w: PauliString, v: PauliString, n: int) -> float:
    """[Tr |[W(t), V]|^{2n}]^{1/2n} from the singular values of the commutator."""
    if n < 1:
        raise ValueError("n must be >= 1")
    s = np.linalg.svd(commutator(spec, t, w, v), compute_uv=False)
    return float(np.sum(s ** (2 * n)) ** (1.0 / (2 * n)))


def _raw_coefficients(n: int) -> list[float]:
    # |[A,V]|^2 = 2 - B - B^{-1} with B = (AV)^2 unitary, and
    # (2 - x - 1/x)^n = (-1)^n (x^{1/2} - x^{-1/2})^{2n}.
    b = [float(math.comb(2 * n, n))]
    b += [2.0 * (-1) ** j * math.comb(2 * n, n - j) for j in range(1, n + 1)]
    return b


@lru_cache(maxsize=None)
def _coefficient_self_check(n: int) -> None:
    """Compare the closed form against singular values on a random instance."""
    rng = np.random.default_rng(1234 + n)
    d = 8
    z = np.diag([1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0]).astype(complex)
    a_u, v_u = haar_unitary(d, rng), haar_unitary(d, rng)
    a, v = a_u @ z @ dagger(a_u), v_u @ z @ dagger(v_u)
    s = np.linalg.svd(a @ v - v @ a, compute_uv=False)
    direct = float(np.sum(s ** (2 * n)))
    b = _raw_coefficients(n)
    block = a @ v @ a @ v
    via = sum(b[j] * np.trace(np.linalg.matrix_power(block, j)).real for j in range(n + 1))
    if abs(direct - via) > 1e-8 * max(1.0, abs(direct)):
        raise RuntimeError(
            f"expansion coefficients for n={n} disagree with the singular-value route: {via} vs {direct}"
        )


def expansion_coefficients(n: int) -> list[float]:
    """b_0..b_n with Tr|[W(t),V]|^{2n} = d sum_k b_k Re C_{4k} for Hermitian unitary W, V.

    The closed form is cross-checked against a direct singular-value evaluation
    the first time each ``n`` is requested; a mismatch raises RuntimeError.
    """
    if not 1 <= n <= 6:
        raise ValueError("n must be in 1..6")
    _coefficient_self_check(n)
    return _raw_coefficients(n)


def schatten_norm_from_otocs(
    spec: HamiltonianSpectrum, t: float, w: PauliString, v: PauliString, n: int, check: bool = True
) -> float:
    """Schatten 2n-norm assembled from C_4 ... C_{4n}; optionally cross-checked."""
    b = expansion_coefficients(n)
    d = spec.dim
    total = b[0] * d + sum(b[k] * d * otoc_4k(spec, t, w, v, k).real for k in range(1, n + 1))
    value = max(total, 0.0) ** (1.0 / (2 * n))
    if check:
        direct = commutator_schatten_norm(spec, t, w, v, n)
        if abs(direct ** (2 * n) - total) > 1e-7 * max(1.0, direct ** (2 * n)):
            raise RuntimeError(f"Schatten norm mismatch at t={t}: expansion {value}, singular values {direct}")
    return value


def protocol_state(spec: HamiltonianSpectrum, t: float, v: PauliString) -> np.ndarray:
    """rho_V = U (I + V)/d U^dag; for V = Z on the last qubit this is the mixed-protocol state."""
    u = evolution_operator(spec, t)
    d = spec.dim
    rho_in = (np.eye(d) + v.matrix()) / d
    return u @ rho_in @ dagger(u)


def leading_term_L8(
    spec: HamiltonianSpectrum, t: float, w: PauliString | None = None, v: PauliString | None = None
) -> float:
    """L_8 = d^3 Tr{(rho_V W)^4}, by default with W = Z_0 and V = Z_{n-1}."""
    n = spec.num_qubits
    if n < 2:
        raise ValueError("needs at least two qubits")
    w = w or default_w(n)
    v = v or default_v(n)
    _check_pair(spec, w, v)
    m = protocol_state(spec, t, v) @ w.matrix()
    m2 = m @ m
    val = spec.dim**3 * np.trace(m2 @ m2)
    return float(val.real)


def _even_only(p: Permutation) -> bool:
    return p.only_even_cycles()


def late_time_haar_average(k: int, d: int) -> float:
    """Haar average of C_{4k} for traceless Pauli W, V, by the Weingarten sum."""
    if k not in (1, 2):
        raise ValueError("late_time_haar_average supports k in {1, 2}")
    if d < 2 * k:
        raise ValueError(f"need d >= {2 * k}")
    wg = weingarten_matrix(2 * k, d)
    sigma0 = Permutation.cycle(2 * k)
    perms = all_permutations(2 * k)
    total = 0.0
    for i, pi in enumerate(perms):
        if not _even_only(pi):
            continue
        for j, sigma in enumerate(perms):
            sp = sigma0.compose(sigma)
            if not _even_only(sp):
                continue
            total += wg.matrix[i, j] * float(d) ** (pi.num_cycles() + sp.num_cycles())
    return total / d


def commutator_type_from_unitary(u: np.ndarray, w: np.ndarray, v: np.ndarray) -> complex:
    """(1/d) Tr{W(t) W V(t) V W(t) V V(t) W} with X(t) = U^dag X U."""
    ud = dagger(u)
    wt, vt = ud @ w @ u, ud @ v @ u
    prod = wt @ w @ vt @ v @ wt @ v @ vt @ w
    return complex(np.trace(prod)) / u.shape[0]


def commutator_type_paulis(n: int) -> tuple[PauliString, PauliString]:
    """W = Z on the first qubit, V = X on the last."""
    return PauliString.single(n, 0, "Z"), PauliString.single(n, n - 1, "X")


def commutator_type_correlator(spec: HamiltonianSpectrum, t: float) -> complex:
    n = spec.num_qubits
    if n < 2:
        raise ValueError("needs at least two qubits")
    w, v = commutator_type_paulis(n)
    return commutator_type_from_unitary(evolution_operator(spec, t), w.matrix(), v.matrix())


def otoc_curve(
    spec: HamiltonianSpectrum, ts: Sequence[float], w: PauliString, v: PauliString, ks: Sequence[int] = (1, 2, 3)
) -> list[OtocPoint]:
    """C_{4k} over a time grid, reusing each W(t) for all k."""
    _check_pair(spec, w, v)
    wm, vm = w.matrix(), v.matrix()
    d = spec.dim
    out = []
    for t in ts:
        u = evolution_operator(spec, t)
        block = _otoc_block(dagger(u) @ wm @ u, vm)
        power = np.eye(d, dtype=complex)
        for k in range(1, max(ks) + 1):
            power = power @ block
            if k in ks:
                out.append(OtocPoint(float(t), k, complex(np.trace(power)) / d, spec.num_qubits, str(w), str(v)))
    return out


__all__ = [
    "OtocPoint",
    "default_w",
    "default_v",
    "otoc_from_unitary",
    "otoc_4k",
    "general_otoc",
    "commutator",
    "commutator_schatten_norm",
    "expansion_coefficients",
    "schatten_norm_from_otocs",
    "protocol_state",
    "leading_term_L8",
    "late_time_haar_average",
    "commutator_type_from_unitary",
    "commutator_type_paulis",
    "commutator_type_correlator",
    "otoc_curve",
]
