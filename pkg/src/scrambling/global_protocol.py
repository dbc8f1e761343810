"""Global random-unitary protocol for C4 and C8, and the Haar identities behind it.

For a Haar-random U and a pure probe state rho_0 we record

    x_U = <U^dag W(t) U>,    y_U = <U^dag V^dag W(t) V U>

and combine them as

    C4 = (d+1) mean(x y)
    C8 = (d+1)(d+2)(d+3)/2 mean(x^2 y^2) - d C4^2 - (d+4)/2.

Only ``U|psi_0>`` enters, but we still draw full Haar unitaries so the
sampled object is exactly the one the protocol prescribes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import IsingParams, evolution_operator, heisenberg_operator, ising_spectrum
from .qlinalg import (
    PauliString,
    all_permutations,
    dagger,
    derangements,
    haar_unitary,
    is_hermitian,
    is_unitary,
    trace_with_permutation,
    weingarten_matrix,
)

MAX_DIM = 256


@dataclass(frozen=True)
class GlobalRunConfig:
    n_qubits: int
    t: float
    w: PauliString
    v: PauliString
    num_unitaries: int
    shots: int | None = None  # None means exact expectation values
    probe_state: np.ndarray | None = None  # defaults to |0...0>
    seed: int = 0
    params: IsingParams = field(default_factory=IsingParams)
    threads: int = 1

    def __post_init__(self):
        if self.num_unitaries < 1:
            raise ValueError("num_unitaries must be >= 1")
        if 2**self.n_qubits > MAX_DIM:
            raise ValueError(f"dense Haar sampling limited to d <= {MAX_DIM}")
        if self.shots is not None and self.shots < 2:
            raise ValueError("shots must be >= 2 (or None for exact expectations)")
        for p in (self.w, self.v):
            if p.num_qubits != self.n_qubits:
                raise ValueError(f"Pauli {p} does not act on {self.n_qubits} qubits")
        if self.probe_state is not None:
            psi = np.asarray(self.probe_state, dtype=complex)
            if psi.shape != (2**self.n_qubits,) or not math.isclose(np.linalg.norm(psi), 1.0, abs_tol=1e-10):
                raise ValueError("probe_state must be a normalized pure state vector")

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def probe(self) -> np.ndarray:
        if self.probe_state is not None:
            return np.asarray(self.probe_state, dtype=complex)
        psi = np.zeros(self.dim, dtype=complex)
        psi[0] = 1.0
        return psi


@dataclass
class GlobalRunResult:
    c4_estimate: float
    c8_estimate: float
    c4_stderr: float
    c8_stderr: float
    x: np.ndarray
    y: np.ndarray
    d: int

    @property
    def per_unitary_records(self) -> list[tuple[int, float, float]]:
        return [(i, float(a), float(b)) for i, (a, b) in enumerate(zip(self.x, self.y))]


def _batch_size(d: int) -> int:
    return max(1, min(4096, (1 << 22) // (d * d)))


def _shot_average(rng: np.random.Generator, mean: np.ndarray, shots: int) -> np.ndarray:
    """Average of ``shots`` +-1 outcomes with expectation ``mean``."""
    p_plus = np.clip((1 + mean) / 2, 0.0, 1.0)
    return 2 * rng.binomial(shots, p_plus) / shots - 1


def sample_expectations(cfg: GlobalRunConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-unitary (x, y) and unbiased per-unitary estimates of (x^2, y^2)."""
    spec = ising_spectrum(cfg.n_qubits, cfg.params)
    u_h = evolution_operator(spec, cfg.t)
    a1 = heisenberg_operator(cfg.w, u_h)
    vm = cfg.v.matrix()
    a2 = dagger(vm) @ a1 @ vm
    psi0 = cfg.probe()
    d, M = cfg.dim, cfg.num_unitaries
    bs = _batch_size(d)
    batches = [(j, min(bs, M - j * bs)) for j in range(math.ceil(M / bs))]

    def work(item):
        j, count = item
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed, spawn_key=(j,))))
        phi = haar_unitary(d, rng, size=count) @ psi0
        x = np.einsum("bi,ij,bj->b", phi.conj(), a1, phi).real
        y = np.einsum("bi,ij,bj->b", phi.conj(), a2, phi).real
        if cfg.shots is None:
            return x, y, x**2, y**2
        s = cfg.shots
        xs, ys = _shot_average(rng, x, s), _shot_average(rng, y, s)
        # E[xs^2] = x^2 + (1 - x^2)/s, so this rescaling is unbiased for x^2
        return xs, ys, (s * xs**2 - 1) / (s - 1), (s * ys**2 - 1) / (s - 1)

    if cfg.threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            parts = list(pool.map(work, batches))
    else:
        parts = [work(b) for b in batches]
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(4))


def combine_global(x: np.ndarray, y: np.ndarray, x2: np.ndarray, y2: np.ndarray, d: int) -> tuple[float, float, float, float]:
    """C4, C8 and their standard errors from per-unitary records."""
    M = len(x)
    z = x * y
    q = x2 * y2
    c4 = (d + 1) * z.mean()
    a = 0.5 * (d + 1) * (d + 2) * (d + 3)
    # unbiased estimate of C4^2 from distinct pairs of unitaries
    if M > 1:
        c4_sq = (d + 1) ** 2 * (z.sum() ** 2 - (z**2).sum()) / (M * (M - 1))
    else:
        c4_sq = c4**2
    c8 = a * q.mean() - d * c4_sq - 0.5 * (d + 4)
    if M > 1:
        c4_se = (d + 1) * z.std(ddof=1) / math.sqrt(M)
        influence = a * q - 2 * d * c4 * (d + 1) * z
        c8_se = influence.std(ddof=1) / math.sqrt(M)
    else:
        c4_se = c8_se = float("nan")
    return float(c4), float(c8), float(c4_se), float(c8_se)


def run_global_protocol(cfg: GlobalRunConfig) -> GlobalRunResult:
    x, y, x2, y2 = sample_expectations(cfg)
    c4, c8, c4_se, c8_se = combine_global(x, y, x2, y2, cfg.dim)
    return GlobalRunResult(c4, c8, c4_se, c8_se, x, y, cfg.dim)


# ---------------------------------------------------------------------------
# Haar identities


@dataclass(frozen=True)
class Fact2Result:
    lhs: complex
    rhs_weingarten: complex
    rhs_montecarlo: complex
    montecarlo_stderr: float


def _check_traceless(ops: Sequence[np.ndarray], atol: float = 1e-10) -> int:
    d = ops[0].shape[0]
    for a in ops:
        if a.shape != (d, d):
            raise ValueError("operators must be square and share one dimension")
        if abs(np.trace(a)) > atol:
            raise ValueError("operators must be traceless")
    return d


def derangement_sum(ops: Sequence[np.ndarray]) -> complex:
    return complex(sum(trace_with_permutation(s, ops) for s in derangements(len(ops))))


def haar_moment_weingarten(ops: Sequence[np.ndarray], rho0: np.ndarray) -> complex:
    """Exact Haar average of prod_i <U^dag A_i U>_{rho0} via the Weingarten matrix."""
    k, d = len(ops), ops[0].shape[0]
    wg = weingarten_matrix(k, d)
    perms = all_permutations(k)
    probe = np.array([trace_with_permutation(p, [rho0] * k) for p in perms])
    traces = np.array([trace_with_permutation(s, ops) for s in perms])
    return complex(probe @ wg.matrix @ traces)


def verify_fact2(
    k: int,
    d: int,
    ops: Sequence[np.ndarray],
    samples: int = 20000,
    seed: int = 0,
    rho0: np.ndarray | None = None,
) -> Fact2Result:
    """Both sides of the derangement-sum identity for traceless operators."""
    if not 1 <= k <= 4 or len(ops) != k:
        raise ValueError("need 1 <= k <= 4 operators")
    ops = [np.asarray(a, dtype=complex) for a in ops]
    if _check_traceless(ops) != d:
        raise ValueError(f"operators are not {d}x{d}")
    if rho0 is None:
        rho0 = np.zeros((d, d), dtype=complex)
        rho0[0, 0] = 1.0
    scale = math.factorial(d - 1 + k) / math.factorial(d - 1)
    lhs = derangement_sum(ops)
    rhs_w = scale * haar_moment_weingarten(ops, rho0)
    if samples > 0:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        vals = np.ones(samples, dtype=complex)
        # the Haar average only depends on U|psi0>; take psi0 as the top eigenvector of rho0
        psi0 = np.linalg.eigh(rho0)[1][:, -1]
        done = 0
        while done < samples:
            count = min(_batch_size(d), samples - done)
            phi = haar_unitary(d, rng, size=count) @ psi0
            for a in ops:
                vals[done : done + count] *= np.einsum("bi,ij,bj->b", phi.conj(), a, phi)
            done += count
        rhs_mc = scale * vals.mean()
        mc_se = scale * float(np.std(vals.real, ddof=1)) / math.sqrt(samples) if samples > 1 else float("nan")
    else:
        rhs_mc, mc_se = complex("nan"), float("nan")
    return Fact2Result(lhs, rhs_w, complex(rhs_mc), mc_se)


@dataclass(frozen=True)
class DerangementSumResult:
    lhs: complex
    rhs: complex


def verify_derangement_sum(d: int, a1: np.ndarray, a2: np.ndarray) -> DerangementSumResult:
    """Sum over D_4 of Tr{T A1 (x) A2 (x) A1 (x) A2} against its closed form."""
    a1, a2 = np.asarray(a1, dtype=complex), np.asarray(a2, dtype=complex)
    for a in (a1, a2):
        if a.shape != (d, d):
            raise ValueError(f"operators must be {d}x{d}")
        if not is_hermitian(a) or not is_unitary(a):
            raise ValueError("operators must be Hermitian and unitary")
        if abs(np.trace(a)) > 1e-10:
            raise ValueError("operators must be traceless")
    lhs = derangement_sum([a1, a2, a1, a2])
    avg = np.trace(a1 @ a2) / d
    rhs = 2 * np.trace(a1 @ a2 @ a1 @ a2) + 2 * d**2 * avg**2 + d * (d + 4)
    return DerangementSumResult(lhs, complex(rhs))


__all__ = [
    "GlobalRunConfig",
    "GlobalRunResult",
    "sample_expectations",
    "combine_global",
    "run_global_protocol",
    "Fact2Result",
    "derangement_sum",
    "haar_moment_weingarten",
    "verify_fact2",
    "DerangementSumResult",
    "verify_derangement_sum",
]
