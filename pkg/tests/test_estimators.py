import itertools
import math

import numpy as np
import pytest

from oracles import dense_trace, global_perm_operator, kron_all, pauli_dense
from scrambling.dynamics import ising_spectrum
from scrambling.estimators import (
    ObservableSpec,
    Subsampled,
    commutator_observable,
    estimate_c4_mixed,
    estimate_c4k_multibell,
    estimate_c4k_single_bell,
    estimate_c8_mixed,
    estimate_commutator_type,
    estimate_L8_mixed,
    evaluate,
    exhaustive_mean,
    factorized_tuple_trace,
    mixed_c4_observable,
    mixed_l8_observable,
    multibell_observable,
    ordering_representatives,
    set_partitions,
    single_bell_observable,
    symmetry_group,
    tuple_values,
)
from scrambling.exact_otoc import default_v, default_w, leading_term_L8, otoc_4k
from scrambling.qlinalg import PauliString, Permutation
from scrambling.shadows import Shadow, Snapshot, StatePrep, build_shadow, snapshot_to_dense


def dense_ops(snaps, obs):
    out = []
    for s, f in zip(snaps, obs.factors):
        rho = snapshot_to_dense(s)
        p = pauli_dense(f.letters, f.phase)
        out.append(rho @ p if obs.side == "right" else p @ rho)
    return out


def dense_tuple(snaps, obs):
    return dense_trace(dense_ops(snaps, obs), [p.images for p in obs.qubit_perms], obs.num_qubits)


def brute_force(shadows, obs):
    """prefactor * mean over ordered distinct tuples, evaluated densely."""
    per_source = [itertools.permutations(range(len(shadows[s])), len(obs.copies_of(s))) for s in range(obs.num_sources)]
    total, count = 0.0, 0
    for combo in itertools.product(*per_source):
        snaps = [None] * obs.copies
        for s, idx in enumerate(combo):
            for pos, j in enumerate(obs.copies_of(s)):
                snaps[j] = shadows[s][idx[pos]]
        total += dense_tuple(snaps, obs)
        count += 1
    return obs.prefactor * total / count


def random_snapshot(rng, m):
    return Snapshot(rng.integers(0, 24, m).astype(np.int8), rng.integers(0, 2, m).astype(np.int8))


def random_observable(rng, m, c):
    phases = (1, -1, 1j, -1j)
    factors = tuple(PauliString("".join(rng.choice(list("IXYZ"), m)), phases[rng.integers(4)]) for _ in range(c))
    perms = tuple(Permutation(rng.permutation(c)) for _ in range(m))
    return ObservableSpec(factors, perms, side=("left", "right")[rng.integers(2)])


# --- kernel evaluation


def test_dense_oracle_matches_global_permutation_operator(rng):
    for m, c in ((1, 2), (2, 2), (1, 4), (2, 3), (2, 4)):
        ops = [rng.standard_normal((2**m, 2**m)) + 1j * rng.standard_normal((2**m, 2**m)) for _ in range(c)]
        images = [rng.permutation(c) for _ in range(m)]
        t = global_perm_operator(images, m)
        assert abs(np.trace(t @ kron_all(ops)) - dense_trace(ops, images, m)) < 1e-9


def test_identity_permutation_no_paulis(rng):
    snaps = [random_snapshot(rng, 2) for _ in range(3)]
    obs = ObservableSpec((PauliString("II"),) * 3, (Permutation.identity(3),) * 2)
    assert abs(factorized_tuple_trace(snaps, obs) - 1) < 1e-12


def test_swap_no_paulis_matches_dense(rng):
    for _ in range(20):
        a, b = random_snapshot(rng, 2), random_snapshot(rng, 2)
        obs = ObservableSpec((PauliString("II"),) * 2, (Permutation.cycle(2),) * 2)
        dense = np.trace(snapshot_to_dense(a) @ snapshot_to_dense(b))
        assert abs(factorized_tuple_trace([a, b], obs) - dense) < 1e-10


def test_four_copy_w_cycle_matches_dense(rng):
    obs = ObservableSpec((PauliString("ZI"),) * 4, (Permutation.cycle(4),) * 2)
    for _ in range(200):
        snaps = [random_snapshot(rng, 2) for _ in range(4)]
        assert abs(factorized_tuple_trace(snaps, obs) - dense_tuple(snaps, obs)) < 1e-10


def test_random_configurations_match_dense(rng):
    for _ in range(200):
        m, c = int(rng.integers(1, 7)), int(rng.integers(1, 5))
        obs = random_observable(rng, m, c)
        snaps = [random_snapshot(rng, m) for _ in range(c)]
        val = factorized_tuple_trace(snaps, obs)
        dense = dense_tuple(snaps, obs)
        assert abs(val - dense) < 1e-10 * max(1.0, abs(dense))
        labels = np.stack([s.labels for s in snaps])[None].astype(np.intp)
        assert abs(tuple_values(labels, obs)[0] - val) < 1e-10 * max(1.0, abs(val))


def test_observable_validation():
    with pytest.raises(ValueError):
        ObservableSpec((PauliString("Z"), PauliString("ZZ")), (Permutation.cycle(2),))
    with pytest.raises(ValueError):
        ObservableSpec((PauliString("Z"),) * 2, (Permutation.cycle(3),))
    with pytest.raises(ValueError):
        ObservableSpec((PauliString("Z"),) * 2, (Permutation.cycle(2),), side="middle")
    with pytest.raises(ValueError):
        factorized_tuple_trace([random_snapshot(np.random.default_rng(0), 1)], mixed_c4_observable(2))


# --- U-statistic engine


def test_set_partitions_bell_numbers():
    assert [len(set_partitions(range(k))) for k in range(1, 6)] == [1, 2, 5, 15, 52]


def small_shadow(prep, K, seed):
    return build_shadow(prep, K, seed)


@pytest.mark.parametrize(
    "make_obs,qubits",
    [
        (lambda: mixed_c4_observable(2), 2),
        (lambda: mixed_l8_observable(2), 2),
        (lambda: multibell_observable(default_w(2), default_v(2), 1), 4),
        (lambda: single_bell_observable(2, 1), 3),
        (lambda: single_bell_observable(2, 2), 3),
    ],
)
def test_exhaustive_matches_brute_force(rng, make_obs, qubits):
    obs = make_obs()
    K = 7 if obs.copies == 4 else 12
    labels = rng.integers(0, 24, (K, qubits))
    sh = Shadow(labels, rng.integers(0, 2, (K, qubits)))
    value, terms, sub = evaluate([sh], obs)
    assert not sub and terms == math.comb(K, obs.copies)
    assert abs(value - brute_force([sh], obs)) < 1e-9 * max(1.0, abs(value))


def test_commutator_exhaustive_matches_brute_force(rng):
    obs = commutator_observable(2)
    sa = Shadow(rng.integers(0, 24, (6, 3)), rng.integers(0, 2, (6, 3)))
    sb = Shadow(rng.integers(0, 24, (5, 3)), rng.integers(0, 2, (5, 3)))
    value, terms, _ = evaluate([sa, sb], obs)
    assert terms == math.comb(6, 2) * math.comb(5, 2)
    assert abs(value - brute_force([sa, sb], obs)) < 1e-9 * max(1.0, abs(value))


def test_histogram_and_enumeration_paths_agree(rng):
    obs = mixed_l8_observable(3)
    lab = rng.integers(0, 6, (9, 3))
    import scrambling.estimators as est

    hist = est._histogram_sum([lab], obs) / est._ordered_tuple_count([9], obs)
    enum = est._enumerated_sum([lab], obs) / est._ordered_tuple_count([9], obs)
    assert abs(hist - enum) < 1e-9 * max(1.0, abs(hist))


def test_reordering_invariance(rng):
    sh = build_shadow(StatePrep.mixed_protocol(2, ising_spectrum(2), 1.0), 40, seed=2)
    perm = rng.permutation(40)
    for est in (estimate_c4_mixed, estimate_L8_mixed):
        assert abs(est(sh).value - est(sh.subset(perm)).value) < 1e-9


def test_minimal_shadow_equals_symmetrized_tuple(rng):
    # K = 2k: a single subset; the estimate is the average over its (2k)! orderings
    spec = ising_spectrum(2)
    sh = build_shadow(StatePrep.bell_dual(2, spec, 0.8), 2, seed=3)
    obs = multibell_observable(default_w(2), default_v(2), 1)
    res = estimate_c4k_multibell(sh, default_w(2), default_v(2), 1)
    sym = np.mean([dense_tuple([sh[i] for i in order], obs) for order in itertools.permutations(range(2))])
    assert res.num_terms == 1
    assert abs(res.value - obs.prefactor * sym) < 1e-10

    sh4 = build_shadow(StatePrep.single_bell(2, spec, 0.8, 1), 4, seed=3)
    obs4 = single_bell_observable(2, 2)
    sym4 = np.mean([dense_tuple([sh4[i] for i in order], obs4) for order in itertools.permutations(range(4))])
    assert abs(estimate_c4k_single_bell(sh4, 2).value - obs4.prefactor * sym4) < 1e-10


def test_mixed_pair_structure(rng):
    sh = build_shadow(StatePrep.mixed_protocol(2, ising_spectrum(2), 0.5), 2, seed=8)
    a, b = (snapshot_to_dense(s) for s in sh.snapshots)
    w = pauli_dense("ZI")
    pair = 0.5 * (np.trace(a @ w @ b @ w) + np.trace(b @ w @ a @ w))
    assert abs(estimate_c4_mixed(sh).value - (4 * pair - 1)) < 1e-10


def test_c8_is_composition(rng):
    sh = build_shadow(StatePrep.mixed_protocol(2, ising_spectrum(2), 2.0), 30, seed=4)
    c8 = estimate_c8_mixed(sh)
    assert c8.value == estimate_L8_mixed(sh).value - 4 * estimate_c4_mixed(sh).value - 3
    assert c8.extra["L8"] - 4 * c8.extra["C4"] - 3 == c8.value


def relabel(obs, sigma):
    """Same observable with copy j renamed sigma(j)."""
    c = obs.copies
    factors = [None] * c
    sources = [None] * c
    for j in range(c):
        factors[sigma(j)] = obs.factors[j]
        sources[sigma(j)] = obs.sources[j]
    perms = tuple(sigma.compose(p).compose(sigma.inverse()) for p in obs.qubit_perms)
    return ObservableSpec(tuple(factors), perms, obs.prefactor, obs.side, tuple(sources))


def test_commutator_index_role_swap(rng):
    spec = ising_spectrum(2)
    sa = build_shadow(StatePrep.single_bell(2, spec, 3.0, 0), 20, seed=1)
    sb = build_shadow(StatePrep.single_bell(2, spec, 3.0, 1), 20, seed=2)
    obs = commutator_observable(2)
    swapped = relabel(obs, Permutation.from_cycles(4, [(0, 3), (1, 2)]))
    assert swapped.sources == (0, 1, 1, 0)
    assert abs(evaluate([sa, sb], obs)[0] - evaluate([sa, sb], swapped)[0]) < 1e-10


def test_symmetry_groups():
    assert len(symmetry_group(mixed_l8_observable(2))) == 4
    assert len(ordering_representatives(mixed_l8_observable(2))) == 6
    assert len(ordering_representatives(mixed_c4_observable(2))) == 1


def test_subsampled_agrees_with_exhaustive():
    sh = build_shadow(StatePrep.mixed_protocol(2, ising_spectrum(2), 0.4), 60, seed=21)
    ex = estimate_L8_mixed(sh)
    import scrambling.estimators as est

    mean, M, se = est.subsampled_mean([sh.labels.astype(np.intp)], mixed_l8_observable(2), Subsampled(100_000, 5))
    assert M == 100_000
    assert abs(mixed_l8_observable(2).prefactor * (mean - ex.value / mixed_l8_observable(2).prefactor)) < 3 * 64 * se
    sub = estimate_L8_mixed(sh, mode=Subsampled(100_000, 5))
    assert sub.subsampled and sub.mode == "subsampled" and sub.seed == 5
    assert sub.value == pytest.approx(64 * mean)


def test_subsampled_deterministic():
    sh = build_shadow(StatePrep.mixed_protocol(2, ising_spectrum(2), 0.4), 100, seed=1)
    a = estimate_c4_mixed(sh, mode=Subsampled(500, 3)).value
    b = estimate_c4_mixed(sh, mode=Subsampled(500, 3)).value
    assert a == b


def test_large_exhaustive_requires_subsampling():
    sh = Shadow(np.zeros((2000, 8), dtype=np.int8), np.zeros((2000, 8), dtype=np.int8))
    with pytest.raises(ValueError, match="Subsampled"):
        estimate_L8_mixed(sh)


# --- protocol wiring and argument checks


def test_estimator_argument_checks():
    spec = ising_spectrum(2)
    mb = build_shadow(StatePrep.bell_dual(2, spec, 0.0), 10, seed=0)
    with pytest.raises(ValueError):
        estimate_c4k_multibell(mb, PauliString("ZI"), PauliString("XI"), 1)
    with pytest.raises(ValueError):
        estimate_c4k_multibell(mb.subset(slice(0, 3)), default_w(2), default_v(2), 2)
    mixed = build_shadow(StatePrep.mixed_protocol(2, spec, 0.0), 10, seed=0)
    with pytest.raises(ValueError):
        estimate_c4_mixed(mixed, PauliString("IZ"))
    with pytest.raises(ValueError):
        estimate_c4_mixed(mixed, PauliString("ZI", 1j))
    sb0 = build_shadow(StatePrep.single_bell(2, spec, 0.0, 0), 10, seed=0)
    with pytest.raises(ValueError):
        estimate_c4k_single_bell(sb0, 1)
    sb1 = build_shadow(StatePrep.single_bell(2, spec, 1.0, 1), 10, seed=0)
    with pytest.raises(ValueError):
        estimate_commutator_type(sb0, sb1)
    with pytest.raises(ValueError):
        evaluate([mixed], mixed_c4_observable(2), mode="fast")


def test_result_json():
    sh = build_shadow(StatePrep.mixed_protocol(2, ising_spectrum(2), 1.5), 10, seed=0)
    js = estimate_c4_mixed(sh).to_json()
    assert set(js) == {"protocol", "k", "t", "value_re", "value_im", "num_terms", "mode", "seed"}
    assert js["t"] == 1.5 and js["mode"] == "exhaustive" and js["num_terms"] == 45


def test_estimates_real_for_real_targets():
    spec = ising_spectrum(2)
    sh = build_shadow(StatePrep.mixed_protocol(2, spec, 1.0), 50, seed=0)
    for est in (estimate_c4_mixed, estimate_L8_mixed):
        assert abs(est(sh).value.imag) < 1e-9
    sb = build_shadow(StatePrep.single_bell(2, spec, 1.0, 1), 50, seed=0)
    assert abs(estimate_c4k_single_bell(sb, 1).value.imag) < 1e-9


# --- statistical checks (small)


def pooled(values):
    v = np.asarray(values)
    return v.mean(), v.std(ddof=1) / math.sqrt(len(v))


def test_multibell_t0_large_shadow():
    spec = ising_spectrum(2)
    vals = [
        estimate_c4k_multibell(build_shadow(StatePrep.bell_dual(2, spec, 0.0), 10_000, seed=s), default_w(2), default_v(2), 1).value.real
        for s in range(10)
    ]
    m, se = pooled(vals)
    assert abs(m - 1) < 3 * se


def test_multibell_t3_matches_oracle():
    spec = ising_spectrum(2)
    vals = [
        estimate_c4k_multibell(build_shadow(StatePrep.bell_dual(2, spec, 3.0), 500, seed=s), default_w(2), default_v(2), 1).value.real
        for s in range(50)
    ]
    m, se = pooled(vals)
    assert abs(m - otoc_4k(spec, 3.0, default_w(2), default_v(2), 1).real) < 3 * se


def test_c8_mixed_n3_matches_oracle():
    n = 3
    spec = ising_spectrum(n)
    vals = [estimate_c8_mixed(build_shadow(StatePrep.mixed_protocol(n, spec, 4.0), 200, seed=s)).value.real for s in range(50)]
    m, se = pooled(vals)
    assert abs(m - otoc_4k(spec, 4.0, default_w(n), default_v(n), 2).real) < 3 * se


def test_c8_and_l8_t0():
    spec = ising_spectrum(2)
    shadows = [build_shadow(StatePrep.mixed_protocol(2, spec, 0.0), 200, seed=s) for s in range(50)]
    m8, se8 = pooled([estimate_c8_mixed(s).value.real for s in shadows])
    assert abs(m8 - 1) < 3 * se8
    ml, sel = pooled([estimate_L8_mixed(s).value.real for s in shadows])
    assert abs(ml - leading_term_L8(spec, 0.0)) < 3 * sel


def test_single_bell_k2_unbiased():
    spec = ising_spectrum(2)
    t = 1.0
    vals = [estimate_c4k_single_bell(build_shadow(StatePrep.single_bell(2, spec, t, 1), 8, seed=s), 2).value.real for s in range(200)]
    assert all(np.isfinite(vals))
    m, se = pooled(vals)
    assert abs(m - otoc_4k(spec, t, default_w(2), PauliString("IX"), 2).real) < 3 * se


def test_single_bell_matches_cross_protocol_targets():
    spec = ising_spectrum(2)
    t = 3.0
    vals = [estimate_c4k_single_bell(build_shadow(StatePrep.single_bell(2, spec, t, 1), 200, seed=s), 1).value.real for s in range(50)]
    m, se = pooled(vals)
    assert abs(m - otoc_4k(spec, t, default_w(2), PauliString("IX"), 1).real) < 3 * se
