"""Random single-qubit Clifford measurements and factorized classical shadows.

A snapshot is stored as two small integer arrays: the Clifford index per
qubit (0..23) and the measured bit. Each per-qubit factor
``3 u^dag|b><b|u - I`` is one of six matrices ``3|s><s| - I`` over the
single-qubit stabilizer states, so everything downstream works with the
stabilizer label ``LABEL[clifford, bit]`` in 0..5:

    0: |0>   1: |1>   2: |+>   3: |->   4: |+i>   5: |-i>
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .dynamics import (
    HamiltonianSpectrum,
    bell_dual_vector,
    mixed_protocol_ensemble,
    single_bell_ensemble,
)
from .qlinalg import PAULI_MATRICES, kron

MAX_SAMPLING_QUBITS = 14
MAX_DENSE_QUBITS = 6
BLOCK_SIZE = 256


# ---------------------------------------------------------------------------
# Clifford group and stabilizer tables


@dataclass(frozen=True)
class SingleQubitClifford:
    index: int
    matrix: np.ndarray


def _canonical_phase(u: np.ndarray) -> np.ndarray:
    flat = u.reshape(-1)
    first = flat[np.argmax(np.abs(flat) > 1e-9)]
    return u * (abs(first) / first)


def _key(u: np.ndarray) -> tuple:
    return tuple(np.round(u.reshape(-1), 8).view(float))


@lru_cache(maxsize=1)
def clifford_table() -> tuple[SingleQubitClifford, ...]:
    """The 24 single-qubit Cliffords mod phase, in BFS order from the identity over {H, S}."""
    h = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    s = np.array([[1, 0], [0, 1j]], dtype=complex)
    found = [np.eye(2, dtype=complex)]
    seen = {_key(found[0])}
    frontier = list(found)
    while frontier:
        nxt = []
        for u in frontier:
            for g in (h, s):
                cand = _canonical_phase(g @ u)
                key = _key(cand)
                if key not in seen:
                    seen.add(key)
                    found.append(cand)
                    nxt.append(cand)
        frontier = nxt
    if len(found) != 24:
        raise RuntimeError(f"Clifford closure produced {len(found)} elements")
    out = []
    for i, u in enumerate(found):
        u.setflags(write=False)
        out.append(SingleQubitClifford(i, u))
    return tuple(out)


CLIFFORD_MATRICES = np.stack([c.matrix for c in clifford_table()])
CLIFFORD_MATRICES.setflags(write=False)

_r2 = 1 / math.sqrt(2)
STABILIZER_STATES = np.array(
    [[1, 0], [0, 1], [_r2, _r2], [_r2, -_r2], [_r2, 1j * _r2], [_r2, -1j * _r2]], dtype=complex
)
STABILIZER_NAMES = ("0", "1", "+", "-", "+i", "-i")

# 3|s><s| - I for each stabilizer label
STABILIZER_FACTORS = np.stack([3 * np.outer(s, s.conj()) - np.eye(2) for s in STABILIZER_STATES])
STABILIZER_FACTORS.setflags(write=False)


def _outcome_labels() -> np.ndarray:
    table = np.empty((24, 2), dtype=np.int8)
    for c, u in enumerate(CLIFFORD_MATRICES):
        for b in range(2):
            post = u.conj().T[:, b]  # u^dag |b>
            overlaps = np.abs(STABILIZER_STATES.conj() @ post)
            label = int(np.argmax(overlaps))
            if not math.isclose(overlaps[label], 1.0, abs_tol=1e-9):
                raise RuntimeError("Clifford does not map basis states to stabilizer states")
            table[c, b] = label
    return table


OUTCOME_LABEL = _outcome_labels()
OUTCOME_LABEL.setflags(write=False)

PAULI_LETTERS = "IXYZ"
# PAULI_TRACE[label, letter] = Tr{P_letter (3|s><s| - I)}; real for these factors.
PAULI_TRACE = np.array(
    [[np.trace(PAULI_MATRICES[p] @ f).real for p in PAULI_LETTERS] for f in STABILIZER_FACTORS]
)


# ---------------------------------------------------------------------------
# states to sample from


@dataclass(frozen=True)
class StatePrep:
    """A normalized state as an ensemble of pure states (rows of ``states``)."""

    tag: str
    states: np.ndarray
    weights: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=complex))
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (states.shape[0],):
            raise ValueError("one weight per ensemble member required")
        if np.any(weights < 0) or not math.isclose(weights.sum(), 1.0, abs_tol=1e-10):
            raise ValueError("weights must be nonnegative and sum to 1")
        norms = np.linalg.norm(states, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-10):
            raise ValueError("ensemble members must be normalized")
        dim = states.shape[1]
        if dim < 2 or dim & (dim - 1):
            raise ValueError("state dimension must be a power of two")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "weights", weights)

    @property
    def num_qubits(self) -> int:
        return self.states.shape[1].bit_length() - 1

    def density_matrix(self) -> np.ndarray:
        if self.num_qubits > 2 * MAX_DENSE_QUBITS:
            raise ValueError("too many qubits for a dense density matrix")
        return np.einsum("e,ei,ej->ij", self.weights, self.states, self.states.conj())

    @classmethod
    def explicit(cls, psi: np.ndarray) -> "StatePrep":
        psi = np.asarray(psi, dtype=complex)
        return cls("explicit", psi[None, :], np.ones(1))

    @classmethod
    def explicit_mixture(cls, states: np.ndarray, weights: np.ndarray) -> "StatePrep":
        return cls("explicit_mixture", states, weights)

    @classmethod
    def from_density(cls, rho: np.ndarray) -> "StatePrep":
        """Eigen-ensemble of a density matrix."""
        evals, evecs = np.linalg.eigh(rho)
        keep = evals > 1e-14
        w = evals[keep] / evals[keep].sum()
        return cls("explicit_mixture", evecs[:, keep].T, w)

    @classmethod
    def mixed_protocol(cls, n: int, spec: HamiltonianSpectrum, t: float) -> "StatePrep":
        states, weights = mixed_protocol_ensemble(n, spec, t)
        return cls("mixed", states, weights, {"n": n, "t": float(t)})

    @classmethod
    def bell_dual(cls, n: int, spec: HamiltonianSpectrum, t: float) -> "StatePrep":
        return cls("multi_bell", bell_dual_vector(n, spec, t)[None, :], np.ones(1), {"n": n, "t": float(t)})

    @classmethod
    def single_bell(cls, n: int, spec: HamiltonianSpectrum, t: float, bell_qubit: int) -> "StatePrep":
        states, weights = single_bell_ensemble(n, spec, t, bell_qubit)
        return cls("single_bell", states, weights, {"n": n, "t": float(t), "bell_qubit": bell_qubit})


# ---------------------------------------------------------------------------
# snapshots and shadows


@dataclass(frozen=True)
class Snapshot:
    cliffords: np.ndarray
    outcomes: np.ndarray

    @property
    def num_qubits(self) -> int:
        return len(self.cliffords)

    @property
    def labels(self) -> np.ndarray:
        return OUTCOME_LABEL[self.cliffords, self.outcomes]

    def factors(self) -> np.ndarray:
        """Per-qubit 2x2 factors, shape (m, 2, 2)."""
        return STABILIZER_FACTORS[self.labels]


@dataclass
class Shadow:
    """K snapshots as arrays of shape (K, m) plus provenance."""

    cliffords: np.ndarray
    outcomes: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.cliffords = np.asarray(self.cliffords, dtype=np.int8)
        self.outcomes = np.asarray(self.outcomes, dtype=np.int8)
        if self.cliffords.ndim != 2 or self.cliffords.shape != self.outcomes.shape:
            raise ValueError("cliffords and outcomes must be matching (K, m) arrays")
        if len(self.cliffords) < 1:
            raise ValueError("a shadow needs at least one snapshot")
        self.meta = {**self.meta, "K": len(self.cliffords)}

    def __len__(self) -> int:
        return len(self.cliffords)

    @property
    def num_qubits(self) -> int:
        return self.cliffords.shape[1]

    @property
    def labels(self) -> np.ndarray:
        return OUTCOME_LABEL[self.cliffords, self.outcomes]

    def __getitem__(self, i: int) -> Snapshot:
        return Snapshot(self.cliffords[i], self.outcomes[i])

    @property
    def snapshots(self) -> list[Snapshot]:
        return [self[i] for i in range(len(self))]

    def subset(self, idx) -> "Shadow":
        return Shadow(self.cliffords[idx], self.outcomes[idx], dict(self.meta))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Shadow)
            and np.array_equal(self.cliffords, other.cliffords)
            and np.array_equal(self.outcomes, other.outcomes)
            and self.meta == other.meta
        )


def _apply_local(psi: np.ndarray, cliffs: np.ndarray) -> np.ndarray:
    """Apply per-row products of single-qubit Cliffords; psi has shape (B, 2, ..., 2)."""
    m = cliffs.shape[1]
    for q in range(m):
        u = CLIFFORD_MATRICES[cliffs[:, q]]  # (B, 2, 2)
        psi = np.moveaxis(psi, q + 1, -1)
        psi = np.einsum("b...j,bij->b...i", psi, u)
        psi = np.moveaxis(psi, -1, q + 1)
    return psi


def _sample_rows(prep: StatePrep, rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
    m = prep.num_qubits
    if m > MAX_SAMPLING_QUBITS:
        raise ValueError(f"sampling limited to {MAX_SAMPLING_QUBITS} qubits, got {m}")
    if len(prep.weights) == 1:
        members = np.zeros(count, dtype=int)
    else:
        members = rng.choice(len(prep.weights), size=count, p=prep.weights)
    cliffs = rng.integers(0, 24, size=(count, m))
    psi = prep.states[members].reshape((count,) + (2,) * m)
    psi = _apply_local(psi, cliffs).reshape(count, -1)
    probs = np.abs(psi) ** 2
    cdf = np.cumsum(probs, axis=1)
    r = rng.random(count) * cdf[:, -1]
    idx = np.minimum((cdf < r[:, None]).sum(axis=1), psi.shape[1] - 1)
    bits = (idx[:, None] >> np.arange(m - 1, -1, -1)[None, :]) & 1
    return cliffs.astype(np.int8), bits.astype(np.int8)


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Counter-based substream for snapshot block ``block``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def sample_snapshot(prep: StatePrep, rng: np.random.Generator) -> Snapshot:
    c, b = _sample_rows(prep, rng, 1)
    return Snapshot(c[0], b[0])


def build_shadow(
    prep: StatePrep,
    K: int,
    seed: int,
    threads: int = 1,
    protocol: str | None = None,
    t: float | None = None,
) -> Shadow:
    """K independent snapshots; identical for a given seed whatever ``threads`` is."""
    if K < 1:
        raise ValueError("K must be >= 1")
    blocks = [(j, min(BLOCK_SIZE, K - j * BLOCK_SIZE)) for j in range(math.ceil(K / BLOCK_SIZE))]

    def work(item):
        j, count = item
        return _sample_rows(prep, block_rng(seed, j), count)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    cliffs = np.concatenate([p[0] for p in parts])
    bits = np.concatenate([p[1] for p in parts])
    meta = {
        "protocol": protocol or prep.tag,
        "n": int(prep.params.get("n", prep.num_qubits)),
        "t": float(t if t is not None else prep.params.get("t", 0.0)),
        "seed": int(seed),
    }
    if "bell_qubit" in prep.params:
        meta["bell_qubit"] = int(prep.params["bell_qubit"])
    return Shadow(cliffs, bits, meta)


def snapshot_to_dense(s: Snapshot) -> np.ndarray:
    if s.num_qubits > MAX_DENSE_QUBITS:
        raise ValueError(f"dense snapshots limited to {MAX_DENSE_QUBITS} qubits")
    return kron(*s.factors())


def pauli_expectations(shadow: Shadow, letters: str) -> np.ndarray:
    """Per-snapshot Tr{P rho_hat} for a Pauli string (phase +1)."""
    if len(letters) != shadow.num_qubits:
        raise ValueError("Pauli string length does not match the shadow")
    cols = np.array([PAULI_LETTERS.index(c) for c in letters])
    return PAULI_TRACE[shadow.labels, cols[None, :]].prod(axis=1)


def shadow_mean(shadow: Shadow) -> np.ndarray:
    """Average dense snapshot, via a histogram over label tuples."""
    m = shadow.num_qubits
    if m > MAX_DENSE_QUBITS:
        raise ValueError(f"dense reconstruction limited to {MAX_DENSE_QUBITS} qubits")
    flat = np.ravel_multi_index(tuple(shadow.labels.T.astype(int)), (6,) * m)
    hist = np.bincount(flat, minlength=6**m).reshape((6,) * m) / len(shadow)
    out = hist
    for _ in range(m):
        # contract the leading label axis into a growing operator
        out = np.tensordot(out, STABILIZER_FACTORS, axes=([0], [0]))
    # axes are now (r0, c0, r1, c1, ...) in qubit order
    perm = list(range(0, 2 * m, 2)) + list(range(1, 2 * m, 2))
    return out.transpose(perm).reshape(2**m, 2**m)


# ---------------------------------------------------------------------------
# serialization


def save_shadow(shadow: Shadow, path: str | Path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` (one row per qubit measurement) and ``<path>.json`` header."""
    path = Path(path)
    csv_path, json_path = path.with_suffix(".csv"), path.with_suffix(".json")
    header = {k: shadow.meta.get(k) for k in ("protocol", "n", "t", "K", "seed")}
    header["num_qubits"] = shadow.num_qubits
    if "bell_qubit" in shadow.meta:
        header["bell_qubit"] = shadow.meta["bell_qubit"]
    json_path.write_text(json.dumps(header, indent=2) + "\n")
    with open(csv_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["snapshot_index", "qubit_index", "clifford_index", "outcome_bit"])
        K, m = shadow.cliffords.shape
        for i in range(K):
            for q in range(m):
                wr.writerow([i, q, int(shadow.cliffords[i, q]), int(shadow.outcomes[i, q])])
    return csv_path, json_path


def load_shadow(path: str | Path) -> Shadow:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    K, m = int(header["K"]), int(header["num_qubits"])
    data = np.loadtxt(path.with_suffix(".csv"), delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    if data.shape != (K * m, 4):
        raise ValueError(f"expected {K * m} records, found {data.shape[0]}")
    cliffs = np.empty((K, m), dtype=np.int8)
    bits = np.empty((K, m), dtype=np.int8)
    cliffs[data[:, 0], data[:, 1]] = data[:, 2]
    bits[data[:, 0], data[:, 1]] = data[:, 3]
    meta = {k: header[k] for k in ("protocol", "n", "t", "seed", "bell_qubit") if k in header}
    return Shadow(cliffs, bits, meta)


__all__ = [
    "SingleQubitClifford",
    "clifford_table",
    "CLIFFORD_MATRICES",
    "STABILIZER_STATES",
    "STABILIZER_FACTORS",
    "OUTCOME_LABEL",
    "PAULI_TRACE",
    "StatePrep",
    "Snapshot",
    "Shadow",
    "block_rng",
    "sample_snapshot",
    "build_shadow",
    "snapshot_to_dense",
    "pauli_expectations",
    "shadow_mean",
    "save_shadow",
    "load_shadow",
]
