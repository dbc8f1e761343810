"""Shadow estimators of OTOCs as factorized U-statistics.

Every estimator here has the form

    prefactor * mean over ordered tuples of distinct snapshots of
    Tr{T (x)_j (rho_j P_j)}          (side="right")
    Tr{T (x)_j (P_j rho_j)}          (side="left")

where ``T`` permutes the copies independently on each qubit. Because snapshots
and Paulis are tensor products, the trace factorizes over qubits, and each
per-qubit factor only depends on the stabilizer labels (0..5) of the snapshots
involved. We tabulate those per-qubit kernels once (shape ``6**copies``) and
then either

* ``exhaustive``: sum over all tuples through label histograms. Sums over
  tuples with repeated indices are removed by Moebius inversion over set
  partitions of the copies, so the cost is independent of K beyond the
  histogram; or
* ``Subsampled``: average over random subsets of snapshots, each subset
  averaged over its orderings modulo the symmetries of the observable.
"""

from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .qlinalg import PAULI_MATRICES, PauliString, Permutation, trace_with_permutation
from .shadows import STABILIZER_FACTORS, Shadow, Snapshot

MAX_HISTOGRAM_QUBITS = 6
MAX_ENUMERATED_TUPLES = 2_000_000
_CHUNK = 1 << 16
# numpy's default caps intermediates at the largest input, which forces a
# naive summation for four copies; allow intermediates up to 64M elements.
_EINSUM_OPT = ("greedy", 1 << 26)


@dataclass(frozen=True)
class Subsampled:
    """Average over ``num_subsets`` uniformly random snapshot subsets."""

    num_subsets: int
    seed: int = 0

    def __post_init__(self):
        if self.num_subsets < 1:
            raise ValueError("num_subsets must be >= 1")


@dataclass(frozen=True)
class ObservableSpec:
    factors: tuple[PauliString, ...]
    qubit_perms: tuple[Permutation, ...]
    prefactor: float = 1.0
    side: str = "right"
    sources: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "qubit_perms", tuple(self.qubit_perms))
        c = len(self.factors)
        if c < 1:
            raise ValueError("need at least one copy")
        m = self.factors[0].num_qubits
        if any(f.num_qubits != m for f in self.factors):
            raise ValueError("all factors must act on the same number of qubits")
        if len(self.qubit_perms) != m or any(p.size != c for p in self.qubit_perms):
            raise ValueError("need one permutation of the copies per qubit")
        if self.side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        sources = tuple(self.sources) if self.sources is not None else (0,) * c
        if len(sources) != c:
            raise ValueError("one source per copy")
        object.__setattr__(self, "sources", sources)

    @property
    def copies(self) -> int:
        return len(self.factors)

    @property
    def num_qubits(self) -> int:
        return self.factors[0].num_qubits

    @property
    def phase(self) -> complex:
        return complex(math.prod(f.phase for f in self.factors))

    @property
    def num_sources(self) -> int:
        return max(self.sources) + 1

    def copies_of(self, source: int) -> list[int]:
        return [j for j, s in enumerate(self.sources) if s == source]


@dataclass(frozen=True)
class EstimatorResult:
    value: complex
    num_terms: int
    protocol: str
    k: int
    t: float
    subsampled: bool
    seed: int | None = None
    stderr: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def mode(self) -> str:
        return "subsampled" if self.subsampled else "exhaustive"

    def to_json(self) -> dict:
        return {
            "protocol": self.protocol,
            "k": self.k,
            "t": self.t,
            "value_re": float(np.real(self.value)),
            "value_im": float(np.imag(self.value)),
            "num_terms": int(self.num_terms),
            "mode": self.mode,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# per-tuple evaluation


def _local_ops(obs: ObservableSpec, copy: int, qubit: int, factor: np.ndarray) -> np.ndarray:
    p = PAULI_MATRICES[obs.factors[copy].letters[qubit]]
    return p @ factor if obs.side == "left" else factor @ p


def factorized_tuple_trace(snapshots: Sequence[Snapshot], obs: ObservableSpec) -> complex:
    """Tr{T (x) Pauli (x) snapshots} as a product over qubits of 2x2 cycle traces."""
    if len(snapshots) != obs.copies:
        raise ValueError(f"{len(snapshots)} snapshots for an observable on {obs.copies} copies")
    if any(s.num_qubits != obs.num_qubits for s in snapshots):
        raise ValueError("snapshot qubit count does not match the observable")
    factors = [s.factors() for s in snapshots]
    value = obs.phase
    for q, perm in enumerate(obs.qubit_perms):
        ops = [_local_ops(obs, j, q, factors[j][q]) for j in range(obs.copies)]
        value *= trace_with_permutation(perm, ops)
    return complex(value)


@lru_cache(maxsize=256)
def kernel_tables(obs: ObservableSpec) -> tuple[np.ndarray, ...]:
    """Per-qubit kernels kappa_q[l_0, ..., l_{c-1}] over stabilizer labels (phase excluded)."""
    c = obs.copies
    lab = string.ascii_letters[:c]
    rows = string.ascii_letters[c : 2 * c]
    tables = []
    for q, perm in enumerate(obs.qubit_perms):
        operands, subs = [], []
        for j in range(c):
            p = PAULI_MATRICES[obs.factors[j].letters[q]]
            a = p @ STABILIZER_FACTORS if obs.side == "left" else STABILIZER_FACTORS @ p
            operands.append(a)
            # the column index of A_j is contracted with the row index of A_{perm(j)}
            subs.append(lab[j] + rows[j] + rows[perm(j)])
        kappa = np.einsum(",".join(subs) + "->" + lab, *operands)
        kappa.setflags(write=False)
        tables.append(kappa)
    return tuple(tables)


def tuple_values(labels: np.ndarray, obs: ObservableSpec) -> np.ndarray:
    """Kernel values for label tuples of shape (T, copies, qubits)."""
    tables = kernel_tables(obs)
    out = np.full(labels.shape[0], obs.phase, dtype=complex)
    for q, kappa in enumerate(tables):
        out *= kappa[tuple(labels[:, j, q] for j in range(obs.copies))]
    return out


# ---------------------------------------------------------------------------
# exhaustive U-statistic


def set_partitions(items: Sequence[int]) -> list[list[list[int]]]:
    items = list(items)
    if not items:
        return [[]]
    first, rest = items[0], items[1:]
    out = []
    for part in set_partitions(rest):
        out.append([[first]] + part)
        for i in range(len(part)):
            out.append(part[:i] + [[first] + part[i]] + part[i + 1 :])
    return out


def _moebius(partition: list[list[int]]) -> int:
    return math.prod((-1) ** (len(b) - 1) * math.factorial(len(b) - 1) for b in partition)


def _source_partitions(obs: ObservableSpec) -> list[list[list[int]]]:
    per_source = [set_partitions(obs.copies_of(s)) for s in range(obs.num_sources)]
    return [sum(combo, []) for combo in itertools.product(*per_source)]


def _histogram(labels: np.ndarray) -> np.ndarray:
    m = labels.shape[1]
    flat = np.ravel_multi_index(tuple(labels.T.astype(np.intp)), (6,) * m)
    return np.bincount(flat, minlength=6**m).reshape((6,) * m).astype(float)


def _partition_contraction(part: list[list[int]], obs: ObservableSpec) -> str:
    """einsum subscripts: one histogram per block, then one kernel per qubit."""
    m, c = obs.num_qubits, obs.copies
    block_of = {j: b for b, block in enumerate(part) for j in block}
    letter = lambda b, q: string.ascii_letters[b * m + q]  # noqa: E731
    subs = ["".join(letter(b, q) for q in range(m)) for b in range(len(part))]
    subs += ["".join(letter(block_of[j], q) for j in range(c)) for q in range(m)]
    return ",".join(subs) + "->"


def _histogram_cost(obs: ObservableSpec) -> float:
    """Estimated flops of the most expensive (all copies distinct) contraction."""
    m, c = obs.num_qubits, obs.copies
    part = [[j] for j in range(c)]
    shapes = [np.empty((6,) * m)] * c + [np.empty((6,) * c)] * m
    _, info = np.einsum_path(_partition_contraction(part, obs), *shapes, optimize=_EINSUM_OPT)
    line = next(ln for ln in info.splitlines() if "Optimized FLOP count" in ln)
    return float(line.split(":")[1])


def _histogram_sum(label_sets: list[np.ndarray], obs: ObservableSpec) -> complex:
    """Sum of kernels over ordered tuples of distinct snapshots (phase excluded)."""
    if obs.copies * obs.num_qubits > len(string.ascii_letters):
        raise ValueError("observable too large for the histogram contraction")
    hists = [_histogram(lab) for lab in label_sets]
    tables = kernel_tables(obs)
    total = 0.0 + 0.0j
    for part in _source_partitions(obs):
        operands = [hists[obs.sources[block[0]]] for block in part] + list(tables)
        s_p = np.einsum(_partition_contraction(part, obs), *operands, optimize=_EINSUM_OPT)
        total += _moebius(part) * s_p
    return complex(total)


def _ordered_tuple_count(sizes: Sequence[int], obs: ObservableSpec) -> int:
    return math.prod(math.perm(sizes[s], len(obs.copies_of(s))) for s in range(obs.num_sources))


def _subset_count(sizes: Sequence[int], obs: ObservableSpec) -> int:
    return math.prod(math.comb(sizes[s], len(obs.copies_of(s))) for s in range(obs.num_sources))


def _enumerated_sum(label_sets: list[np.ndarray], obs: ObservableSpec) -> complex:
    per_source = [
        itertools.permutations(range(len(label_sets[s])), len(obs.copies_of(s))) for s in range(obs.num_sources)
    ]
    total = 0.0 + 0.0j
    it = itertools.product(*per_source)
    while True:
        chunk = list(itertools.islice(it, _CHUNK))
        if not chunk:
            break
        labels = np.empty((len(chunk), obs.copies, obs.num_qubits), dtype=np.intp)
        for s in range(obs.num_sources):
            idx = np.array([row[s] for row in chunk])
            for pos, j in enumerate(obs.copies_of(s)):
                labels[:, j, :] = label_sets[s][idx[:, pos]]
        total += tuple_values(labels, obs).sum()
    return complex(total) / obs.phase


def exhaustive_mean(label_sets: list[np.ndarray], obs: ObservableSpec) -> tuple[complex, int]:
    """Mean kernel over all ordered distinct tuples and the number of unordered subsets."""
    sizes = [len(lab) for lab in label_sets]
    for s in range(obs.num_sources):
        if sizes[s] < len(obs.copies_of(s)):
            raise ValueError(f"source {s} has {sizes[s]} snapshots, need {len(obs.copies_of(s))}")
    count = _ordered_tuple_count(sizes, obs)
    enumerable = count <= MAX_ENUMERATED_TUPLES
    if obs.num_qubits <= MAX_HISTOGRAM_QUBITS and not (
        enumerable and 8 * count * obs.num_qubits < _histogram_cost(obs)
    ):
        total = _histogram_sum(label_sets, obs)
    elif enumerable:
        total = _enumerated_sum(label_sets, obs)
    else:
        raise ValueError(
            f"exhaustive evaluation over {count} tuples on {obs.num_qubits} qubits is too large; "
            "use Subsampled mode"
        )
    return obs.phase * total / count, _subset_count(sizes, obs)


# ---------------------------------------------------------------------------
# subsampled U-statistic


def symmetry_group(obs: ObservableSpec) -> list[Permutation]:
    """Relabelings of copies that leave every tuple value unchanged."""
    c = obs.copies
    out = []
    for g in itertools.permutations(range(c)):
        gp = Permutation(g)
        if any(obs.sources[g[j]] != obs.sources[j] or obs.factors[g[j]] != obs.factors[j] for j in range(c)):
            continue
        if all(gp.compose(p) == p.compose(gp) for p in obs.qubit_perms):
            out.append(gp)
    return out


def ordering_representatives(obs: ObservableSpec) -> list[tuple[int, ...]]:
    """One source-preserving ordering per coset of the symmetry group."""
    c = obs.copies
    group = symmetry_group(obs)
    reps, seen = [], set()
    for tau in itertools.permutations(range(c)):
        if any(obs.sources[tau[j]] != obs.sources[j] for j in range(c)):
            continue
        if tau in seen:
            continue
        reps.append(tau)
        for g in group:
            seen.add(tuple(tau[g(j)] for j in range(c)))
    return reps


def _draw_subsets(rng: np.random.Generator, K: int, size: int, count: int) -> np.ndarray:
    """``count`` uniform random ``size``-subsets of range(K) by rejection."""
    out = np.empty((0, size), dtype=np.intp)
    while len(out) < count:
        need = count - len(out)
        draw = rng.integers(0, K, size=(max(need + need // 4, 16), size))
        srt = np.sort(draw, axis=1)
        ok = np.all(srt[:, 1:] != srt[:, :-1], axis=1)
        out = np.concatenate([out, draw[ok]])
    return out[:count]


def subsampled_mean(
    label_sets: list[np.ndarray], obs: ObservableSpec, mode: Subsampled
) -> tuple[complex, int, float]:
    """Mean over random subsets, plus the naive standard error of the subset averages."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(mode.seed)))
    M = mode.num_subsets
    drawn = np.empty((M, obs.copies), dtype=np.intp)
    for s in range(obs.num_sources):
        slots = obs.copies_of(s)
        if len(label_sets[s]) < len(slots):
            raise ValueError(f"source {s} has too few snapshots")
        drawn[:, slots] = _draw_subsets(rng, len(label_sets[s]), len(slots), M)
    reps = ordering_representatives(obs)
    per_subset = np.zeros(M, dtype=complex)
    for start in range(0, M, _CHUNK):
        idx = drawn[start : start + _CHUNK]
        acc = np.zeros(len(idx), dtype=complex)
        for tau in reps:
            labels = np.empty((len(idx), obs.copies, obs.num_qubits), dtype=np.intp)
            for j in range(obs.copies):
                labels[:, j, :] = label_sets[obs.sources[j]][idx[:, tau[j]]]
            acc += tuple_values(labels, obs)
        per_subset[start : start + len(idx)] = acc / len(reps)
    se = float(np.std(per_subset.real, ddof=1) / math.sqrt(M)) if M > 1 else float("nan")
    return complex(per_subset.mean()), M, se


def evaluate(
    shadows: Sequence[Shadow], obs: ObservableSpec, mode: str | Subsampled = "exhaustive"
) -> tuple[complex, int, bool]:
    """prefactor * U-statistic of the observable over the given shadows (one per source)."""
    if len(shadows) != obs.num_sources:
        raise ValueError(f"observable needs {obs.num_sources} shadows, got {len(shadows)}")
    label_sets = [sh.labels.astype(np.intp) for sh in shadows]
    if any(lab.shape[1] != obs.num_qubits for lab in label_sets):
        raise ValueError("shadow qubit count does not match the observable")
    if isinstance(mode, Subsampled):
        mean, terms, _ = subsampled_mean(label_sets, obs, mode)
        return obs.prefactor * mean, terms, True
    if mode != "exhaustive":
        raise ValueError(f"unknown mode {mode!r}")
    mean, terms = exhaustive_mean(label_sets, obs)
    return obs.prefactor * mean, terms, False


# ---------------------------------------------------------------------------
# protocol observables


def multibell_observable(w: PauliString, v: PauliString, k: int) -> ObservableSpec:
    """O_{4k} on 2k copies of the doubled register (system qubits, then ancillas).

    Even copies carry W^dag (x) V*, odd copies W (x) V^T; the ancillas are
    cycled across copies and the system wires are not.
    """
    n = w.num_qubits
    if v.num_qubits != n:
        raise ValueError("W and V must act on the same number of qubits")
    c = 2 * k
    factors = []
    for j in range(c):
        s, a = (w.dagger(), v.conj()) if j % 2 == 0 else (w, v.transpose())
        factors.append(PauliString(s.letters + a.letters, s.phase * a.phase))
    back = Permutation.cycle(c).inverse()
    perms = [Permutation.identity(c)] * n + [back] * n
    return ObservableSpec(tuple(factors), tuple(perms), float(2**n) ** (2 * k - 1), side="left")


def _mixed_w(n: int, w: PauliString | None) -> PauliString:
    w = w or PauliString.single(n, 0, "Z")
    if w.num_qubits != n:
        raise ValueError(f"W must act on {n} qubits")
    if not w.is_hermitian:
        raise ValueError("W must be Hermitian")
    if n - 1 in w.support:
        raise ValueError("W must not act on the last qubit, which carries V = Z in the mixed protocol")
    return w


def mixed_c4_observable(n: int, w: PauliString | None = None) -> ObservableSpec:
    w = _mixed_w(n, w)
    swap = Permutation.cycle(2)
    return ObservableSpec((w, w), (swap,) * n, float(2**n), side="right")


def mixed_l8_observable(n: int, w: PauliString | None = None) -> ObservableSpec:
    w = _mixed_w(n, w)
    cyc = Permutation.cycle(4)
    return ObservableSpec((w,) * 4, (cyc,) * n, float(2**n) ** 3, side="right")


def single_bell_observable(n: int, k: int) -> ObservableSpec:
    """B^{(x)2k} with B = Z on qubit 0 and X^T on the ancilla; system wires cycled."""
    b = PauliString.from_sparse(n + 1, {0: "Z", n: "X"})
    cyc = Permutation.cycle(2 * k)
    perms = [cyc] * n + [Permutation.identity(2 * k)]
    return ObservableSpec((b,) * (2 * k), tuple(perms), float(2**n) ** (2 * k - 1), side="right")


def commutator_observable(n: int) -> ObservableSpec:
    """O_ct on four copies; copies 0 and 3 come from the qubit-0 Bell shadow, 1 and 2 from the qubit-(n-1) one."""
    last = n - 1
    factors = (
        PauliString.from_sparse(n + 1, {last: "X", n: "Z"}),
        PauliString.from_sparse(n + 1, {0: "Z", n: "X"}),
        PauliString.from_sparse(n + 1, {last: "X", n: "X"}),
        PauliString.from_sparse(n + 1, {0: "Z", n: "Z"}),
    )
    cyc = Permutation.cycle(4)
    perms = [cyc] * n + [Permutation.identity(4)]
    return ObservableSpec(factors, tuple(perms), float(2**n) ** 3, side="right", sources=(0, 1, 1, 0))


# ---------------------------------------------------------------------------
# protocol estimators


def _t(shadow: Shadow) -> float:
    return float(shadow.meta.get("t", float("nan")))


def _seed(mode) -> int | None:
    return mode.seed if isinstance(mode, Subsampled) else None


def _system_qubits(shadow: Shadow, doubled: bool) -> int:
    m = shadow.num_qubits
    if doubled:
        if m % 2:
            raise ValueError("multi-Bell shadows have an even number of qubits")
        return m // 2
    return m - 1


def estimate_c4k_multibell(
    shadow: Shadow, w: PauliString, v: PauliString, k: int, mode: str | Subsampled = "exhaustive"
) -> EstimatorResult:
    n = _system_qubits(shadow, doubled=True)
    if w.num_qubits != n or v.num_qubits != n:
        raise ValueError(f"W and V must act on {n} qubits for this shadow")
    if w.support & v.support:
        raise ValueError("W and V must act on disjoint qubits")
    if len(shadow) < 2 * k:
        raise ValueError(f"need K >= {2 * k}")
    value, terms, sub = evaluate([shadow], multibell_observable(w, v, k), mode)
    return EstimatorResult(value, terms, "multi_bell", k, _t(shadow), sub, _seed(mode))


def estimate_c4_mixed(
    shadow: Shadow, w: PauliString | None = None, mode: str | Subsampled = "exhaustive"
) -> EstimatorResult:
    if len(shadow) < 2:
        raise ValueError("need K >= 2")
    obs = mixed_c4_observable(shadow.num_qubits, w)
    value, terms, sub = evaluate([shadow], obs, mode)
    return EstimatorResult(value - 1, terms, "mixed", 1, _t(shadow), sub, _seed(mode))


def estimate_L8_mixed(
    shadow: Shadow, w: PauliString | None = None, mode: str | Subsampled = "exhaustive"
) -> EstimatorResult:
    if len(shadow) < 4:
        raise ValueError("need K >= 4")
    obs = mixed_l8_observable(shadow.num_qubits, w)
    value, terms, sub = evaluate([shadow], obs, mode)
    return EstimatorResult(value, terms, "mixed_L8", 2, _t(shadow), sub, _seed(mode))


def _derived_mode(mode, offset: int):
    if isinstance(mode, Subsampled):
        return Subsampled(mode.num_subsets, mode.seed + offset)
    return mode


def estimate_c8_mixed(
    shadow: Shadow, w: PauliString | None = None, mode: str | Subsampled = "exhaustive"
) -> EstimatorResult:
    """C8 = L8 - 4 C4 - 3 on one shadow."""
    l8 = estimate_L8_mixed(shadow, w, mode)
    c4 = estimate_c4_mixed(shadow, w, _derived_mode(mode, 1))
    value = l8.value - 4 * c4.value - 3
    return EstimatorResult(
        value, l8.num_terms, "mixed", 2, _t(shadow), l8.subsampled, _seed(mode), extra={"L8": l8.value, "C4": c4.value}
    )


def estimate_c4k_single_bell(shadow: Shadow, k: int, mode: str | Subsampled = "exhaustive") -> EstimatorResult:
    n = _system_qubits(shadow, doubled=False)
    if n < 2:
        raise ValueError("single-Bell shadows need at least two system qubits")
    if len(shadow) < 2 * k:
        raise ValueError(f"need K >= {2 * k}")
    bq = shadow.meta.get("bell_qubit")
    if bq is not None and bq != n - 1:
        raise ValueError("the single-Bell estimator needs the Bell pair on the last system qubit")
    value, terms, sub = evaluate([shadow], single_bell_observable(n, k), mode)
    return EstimatorResult(value, terms, "single_bell", k, _t(shadow), sub, _seed(mode))


def estimate_commutator_type(
    shadow_a: Shadow, shadow_b: Shadow, mode: str | Subsampled = "exhaustive"
) -> EstimatorResult:
    """shadow_a: Bell pair on system qubit 0; shadow_b: Bell pair on the last system qubit."""
    if shadow_a.num_qubits != shadow_b.num_qubits:
        raise ValueError("the two shadows must have the same qubit count")
    if len(shadow_a) < 2 or len(shadow_b) < 2:
        raise ValueError("need K >= 2 for each shadow")
    ta, tb = shadow_a.meta.get("t"), shadow_b.meta.get("t")
    if ta is not None and tb is not None and not math.isclose(ta, tb):
        raise ValueError("shadows were taken at different times")
    n = _system_qubits(shadow_a, doubled=False)
    value, terms, sub = evaluate([shadow_a, shadow_b], commutator_observable(n), mode)
    return EstimatorResult(value, terms, "commutator", 2, _t(shadow_a), sub, _seed(mode))


__all__ = [
    "Subsampled",
    "ObservableSpec",
    "EstimatorResult",
    "factorized_tuple_trace",
    "kernel_tables",
    "tuple_values",
    "set_partitions",
    "exhaustive_mean",
    "subsampled_mean",
    "symmetry_group",
    "ordering_representatives",
    "evaluate",
    "multibell_observable",
    "mixed_c4_observable",
    "mixed_l8_observable",
    "single_bell_observable",
    "commutator_observable",
    "estimate_c4k_multibell",
    "estimate_c4_mixed",
    "estimate_L8_mixed",
    "estimate_c8_mixed",
    "estimate_c4k_single_bell",
    "estimate_commutator_type",
]
