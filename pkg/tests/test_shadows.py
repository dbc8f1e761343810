import itertools
import math

import numpy as np
import pytest

from oracles import PAULI, pauli_dense, random_density, random_pure
from scrambling.dynamics import ising_spectrum, prepare_mixed_protocol_state, prepare_single_bell_state
from scrambling.qlinalg import dagger
from scrambling.shadows import (
    BLOCK_SIZE,
    CLIFFORD_MATRICES,
    OUTCOME_LABEL,
    PAULI_TRACE,
    STABILIZER_FACTORS,
    Shadow,
    Snapshot,
    StatePrep,
    block_rng,
    build_shadow,
    clifford_table,
    load_shadow,
    pauli_expectations,
    sample_snapshot,
    save_shadow,
    shadow_mean,
    snapshot_to_dense,
)


def test_clifford_table():
    table = clifford_table()
    assert len(table) == 24
    paulis = [PAULI[c] for c in "XYZ"]
    for c in table:
        u = c.matrix
        assert np.allclose(u @ dagger(u), np.eye(2), atol=1e-12)
        for p in paulis:
            q = u @ p @ dagger(u)
            assert any(np.allclose(q, s * r, atol=1e-12) for r in paulis for s in (1, -1))
    # distinct modulo a global phase
    for a, b in itertools.combinations(table, 2):
        assert abs(abs(np.trace(dagger(a.matrix) @ b.matrix)) - 2) > 1e-6


def test_stabilizer_factors():
    for f in STABILIZER_FACTORS:
        assert abs(np.trace(f) - 1) < 1e-12
        assert np.allclose(np.sort(np.linalg.eigvalsh(f)), [-1, 2])
    assert OUTCOME_LABEL.shape == (24, 2)
    assert set(OUTCOME_LABEL.reshape(-1)) == set(range(6))
    for lab, f in enumerate(STABILIZER_FACTORS):
        for col, letter in enumerate("IXYZ"):
            assert math.isclose(PAULI_TRACE[lab, col], np.trace(PAULI[letter] @ f).real, abs_tol=1e-12)


def test_measurement_channel_inverse_exact(rng):
    # enumerate all Cliffords and outcomes: E[3 U^dag|b><b|U - I] = rho for one qubit
    rho = random_density(2, rng)
    acc = np.zeros((2, 2), dtype=complex)
    for c, u in enumerate(CLIFFORD_MATRICES):
        for b in range(2):
            e = np.zeros(2)
            e[b] = 1
            p = (e @ u @ rho @ dagger(u) @ e).real
            post = dagger(u) @ np.outer(e, e) @ u
            assert np.allclose(3 * post - np.eye(2), STABILIZER_FACTORS[OUTCOME_LABEL[c, b]])
            acc += p * (3 * post - np.eye(2)) / 24
    assert np.allclose(acc, rho, atol=1e-12)


def test_snapshot_to_dense():
    s = Snapshot(np.array([5], dtype=np.int8), np.array([1], dtype=np.int8))
    assert np.allclose(snapshot_to_dense(s), s.factors()[0])
    with pytest.raises(ValueError):
        snapshot_to_dense(Snapshot(np.zeros(7, dtype=np.int8), np.zeros(7, dtype=np.int8)))


def test_snapshot_pauli_factorization(rng):
    prep = StatePrep.explicit(random_pure(8, rng))
    sh = build_shadow(prep, 50, seed=11)
    for i, s in enumerate(sh.snapshots):
        dense = snapshot_to_dense(s)
        assert abs(np.trace(dense) - 1) < 1e-12
        letters = "".join(rng.choice(list("IXYZ"), size=3))
        p = pauli_dense(letters)
        direct = np.trace(p @ dense)
        per_qubit = np.prod([np.trace(PAULI[c] @ f) for c, f in zip(letters, s.factors())])
        assert abs(direct - per_qubit) < 1e-10
        assert abs(direct - pauli_expectations(sh, letters)[i]) < 1e-10


def test_sample_snapshot_single(rng):
    prep = StatePrep.explicit(random_pure(4, rng))
    s = sample_snapshot(prep, block_rng(0, 0))
    assert s.num_qubits == 2
    assert abs(np.trace(snapshot_to_dense(s)) - 1) < 1e-12


def test_build_shadow_deterministic_and_thread_independent(rng):
    prep = StatePrep.explicit(random_pure(8, rng))
    a = build_shadow(prep, 1000, seed=5)
    b = build_shadow(prep, 1000, seed=5, threads=4)
    assert a == b
    c = build_shadow(prep, 1000, seed=6)
    assert not np.array_equal(a.cliffords, c.cliffords)
    # complete blocks do not depend on K
    short = build_shadow(prep, 300, seed=5)
    assert np.array_equal(short.cliffords[:BLOCK_SIZE], a.cliffords[:BLOCK_SIZE])
    assert np.array_equal(short.outcomes[:BLOCK_SIZE], a.outcomes[:BLOCK_SIZE])


def test_disjoint_seeds_collision_rate(rng):
    prep = StatePrep.explicit(random_pure(4, rng))
    a, b = build_shadow(prep, 2000, seed=1), build_shadow(prep, 2000, seed=2)
    # consecutive (clifford, outcome) pairs coincide with probability about 1/(24^2 * 2) per qubit pair
    same = np.all((a.cliffords == b.cliffords) & (a.outcomes == b.outcomes), axis=1).mean()
    assert same < 0.01


def test_bell_dual_arity():
    sh = build_shadow(StatePrep.bell_dual(1, ising_spectrum(1), 0.0), 4, seed=0)
    assert len(sh) == 4 and sh.num_qubits == 2


def test_state_prep_validation():
    with pytest.raises(ValueError):
        StatePrep.explicit(np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        StatePrep.explicit_mixture(np.eye(2), np.array([0.7, 0.7]))
    with pytest.raises(ValueError):
        StatePrep.explicit(np.ones(3) / math.sqrt(3))


@pytest.mark.parametrize(
    "make",
    [
        lambda spec: (StatePrep.mixed_protocol(3, spec, 1.1), prepare_mixed_protocol_state(3, spec, 1.1)),
        lambda spec: (StatePrep.single_bell(3, spec, 0.4, 2), prepare_single_bell_state(3, spec, 0.4, 2)),
    ],
)
def test_state_prep_matches_dense(make):
    prep, rho = make(ising_spectrum(3))
    assert np.allclose(prep.density_matrix(), rho, atol=1e-12)


def test_from_density_round_trip(rng):
    rho = random_density(4, rng, rank=2)
    assert np.allclose(StatePrep.from_density(rho).density_matrix(), rho, atol=1e-12)


def test_shadow_mean_matches_dense_average(rng):
    sh = build_shadow(StatePrep.explicit(random_pure(4, rng)), 200, seed=3)
    dense = sum(snapshot_to_dense(s) for s in sh.snapshots) / len(sh)
    assert np.allclose(shadow_mean(sh), dense, atol=1e-12)


def test_pauli_unbiasedness(rng):
    rho = random_density(8, rng)
    sh = build_shadow(StatePrep.from_density(rho), 100_000, seed=9)
    for letters in ("ZII", "XYZ", "IXX", "YIZ"):
        vals = pauli_expectations(sh, letters)
        exact = np.trace(pauli_dense(letters) @ rho).real
        assert abs(vals.mean() - exact) < 3 * vals.std(ddof=1) / math.sqrt(len(vals))


@pytest.mark.parametrize("d", [4, 8])
def test_single_shot_pauli_variance(rng, d):
    n = d.bit_length() - 1
    rho = random_density(d, rng)
    sh = build_shadow(StatePrep.from_density(rho), 50_000, seed=4)
    for letters in ("Z" * n, "X" + "I" * (n - 1)):
        assert pauli_expectations(sh, letters).var(ddof=1) <= d * d


def test_reconstruction_error_scaling(rng):
    psi = random_pure(4, rng)
    rho = np.outer(psi, psi.conj())
    Ks = [1000, 10000, 100000]
    rms = []
    for K in Ks:
        errs = [np.linalg.norm(shadow_mean(build_shadow(StatePrep.explicit(psi), K, seed=100 * K + r)) - rho) for r in range(10)]
        rms.append(math.sqrt(np.mean(np.square(errs))))
    slope = np.polyfit(np.log10(Ks), np.log10(rms), 1)[0]
    assert abs(slope + 0.5) < 0.15


def test_save_load_round_trip(tmp_path, rng):
    prep = StatePrep.single_bell(2, ising_spectrum(2), 0.7, 1)
    sh = build_shadow(prep, 37, seed=12)
    csv_path, json_path = save_shadow(sh, tmp_path / "s")
    assert csv_path.read_text().splitlines()[0] == "snapshot_index,qubit_index,clifford_index,outcome_bit"
    back = load_shadow(tmp_path / "s")
    assert back == sh
    assert back.meta["bell_qubit"] == 1 and back.meta["protocol"] == "single_bell"


def test_shadow_validation():
    with pytest.raises(ValueError):
        Shadow(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        build_shadow(StatePrep.explicit(np.array([1.0, 0.0])), 0, seed=0)
