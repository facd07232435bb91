from fractions import Fraction

import numpy as np
import pytest

from uss_sim import adversary, analysis, core, errors, framework
from uss_sim.adversary import ANY, forge_attempt, optimal_error_rate, pool_knowledge, tamper_attempt

from conftest import make_params


def test_empty_view(standard):
    _, states = core.deal(standard)
    view = pool_knowledge(states, set(), standard)
    assert view.members == frozenset()
    assert not view.sections and not view.fragments and not view.spy
    assert view.signatures is None


def test_single_member_view():
    p = make_params(N=4, n=32, M=1, d_f="1/4", l_max=0, s={-1: "0.45", 0: "0.35"})
    signer, states = core.deal(p)
    view = pool_knowledge(states, {1}, p)
    assert np.array_equal(view.sections[1][0], signer.signatures[0, 0])
    positions, values = view.fragments[1]
    for j in range(1, 5):
        assert np.array_equal(values[0, j - 1], signer.signatures[0, j - 1, positions[0, j - 1]])
    created, spy_vals = view.spy[1]
    for k in range(1, 5):
        assert np.array_equal(created[0, k - 1], states[k - 1].positions[0, 0])
        assert np.array_equal(spy_vals[0, k - 1], signer.signatures[0, 0, created[0, k - 1]])


def test_signer_only_view(standard):
    signer, states = core.deal(standard)
    view = pool_knowledge(states, {0}, standard, signer)
    assert view.has_signer and view.recipients == frozenset()
    assert np.array_equal(view.signatures, signer.signatures)
    assert not view.fragments and not view.spy


def test_view_limits(standard):
    signer, states = core.deal(standard)
    with pytest.raises(errors.CoalitionTooLarge):
        pool_knowledge(states, {7, 8}, standard)
    with pytest.raises(errors.RoleError):
        pool_knowledge(states, {9}, standard)
    with pytest.raises(errors.RoleError):
        pool_knowledge(states, {0}, standard)


def test_forge_uses_known_bits(standard):
    signer, states = core.deal(standard)
    view = pool_knowledge(states, {8}, standard)
    cand = forge_attempt(view, standard, 0, np.random.default_rng(0), target=1)
    assert np.array_equal(cand.sections[7], signer.signatures[0, 7])
    positions, values = view.fragments[8]
    for j in range(standard.num_recipients):
        assert np.array_equal(cand.sections[j, positions[0, j]], values[0, j])
    with pytest.raises(errors.RoleError):
        forge_attempt(view, standard, 0, np.random.default_rng(0), target=8)


def test_forge_without_coalition_matches_binomial():
    # m = 8, s_0 = 0.35: per test 37/256
    p = make_params(N=8, n=64, M=1)
    view = adversary.CoalitionView(frozenset())
    g = np.random.default_rng(5)
    passed = total = 0
    for seed in range(200):
        _, states = core.deal(p, master_seed=seed)
        cand = forge_attempt(view, p, 0, g, ANY)
        h = core.hamming_matrix(states, 0, cand)
        passed += int(core.tests_passed(p, h, 0).sum())
        total += h.size
    lo, hi = analysis.clopper_pearson(passed, total, 0.999)
    assert lo <= 37 / 256 <= hi


def test_optimal_rate():
    p = make_params(N=8, n=64, M=1, s={-1: "0.45", 0: "0.30", 1: "0.2", 2: "0.1"})
    assert optimal_error_rate(p, 0, -1) == Fraction(3, 8)


def test_tamper_spy_only():
    p = make_params(N=8, n=64, M=1, d_f="1/8", l_max=1,
                    s={-1: "0.45", 0: "0.35", 1: "0.25"})
    signer, states = core.deal(p)
    view = pool_knowledge(states, {0, 8}, p, signer)
    cand = tamper_attempt(view, p, 0, 0, -1, 1, 2, np.random.default_rng(0), p_e=0)
    assert np.array_equal(cand.sections[:7], signer.signatures[0, :7])
    counts = core.pass_counts(states, 0, cand, 0)
    assert counts[0] == 8  # target_pass untouched
    assert counts[1] == 7  # target_fail loses the coalition section
    assert counts[2:7].tolist() == [8] * 5


def test_tamper_total_noise(standard):
    signer, states = core.deal(standard)
    view = pool_knowledge(states, {0, 8}, standard, signer)
    cand = tamper_attempt(view, standard, 0, 1, 0, 1, [2, 3], np.random.default_rng(0), p_e=1)
    h = core.hamming_matrix(states, 0, cand)
    for level in standard.levels:
        ok = core.tests_passed(standard, h, level)
        assert not ok[:, :7].any()


def test_tamper_argument_checks(standard):
    signer, states = core.deal(standard)
    view = pool_knowledge(states, {0, 8}, standard, signer)
    g = np.random.default_rng(0)
    with pytest.raises(errors.LevelOrderError):
        tamper_attempt(view, standard, 0, 0, 1, 1, 2, g)
    with pytest.raises(errors.RoleError):
        tamper_attempt(view, standard, 0, 1, 0, 8, 2, g)
    with pytest.raises(errors.RoleError):
        tamper_attempt(view, standard, 0, 1, 0, 1, [1, 2], g)
    with pytest.raises(errors.RoleError):
        tamper_attempt(pool_knowledge(states, {8}, standard), standard, 0, 1, 0, 1, 2, g)
    with pytest.raises(ValueError):
        tamper_attempt(view, standard, 0, 1, 0, 1, 2, g, p_e=1.5)


def test_tamper_noise_matches_binomial_oracles():
    p = make_params(N=8, n=64, M=1, s={-1: "0.45", 0: "0.30", 1: "0.2", 2: "0.1"})
    q = Fraction(3, 8)
    pass0 = analysis.exact_single_test(8, p.s(0), q)
    fail_m1 = 1 - analysis.exact_single_test(8, p.s(-1), q)
    g = np.random.default_rng(9)
    n_pass = n_fail = total = 0
    for seed in range(300):
        signer, states = core.deal(p, master_seed=seed)
        view = pool_knowledge(states, {0, 8}, p, signer)
        cand = tamper_attempt(view, p, 0, 0, -1, 1, 2, g)
        h = core.hamming_matrix(states, 0, cand)[:, :7]  # honest sections only
        n_pass += int(core.tests_passed(p, h, 0).sum())
        n_fail += int((~core.tests_passed(p, h, -1)).sum())
        total += h.size
    for k, want in ((n_pass, pass0), (n_fail, fail_m1)):
        lo, hi = analysis.clopper_pearson(k, total, 0.999)
        assert lo <= float(want) <= hi


def test_fixed_forge_rate_on_pinned_states(forge_tiny):
    # the guesses are independent of the stored positions, so the exact
    # fixed-target rate holds on any single distribution as well
    signer, states = core.deal(forge_tiny)
    view = pool_knowledge(states, {4}, forge_tiny)
    g = np.random.default_rng(2)
    trials = 4000
    wins = sum(
        framework.attack_indicator(framework.FORG, {4}, states, 0,
                                   forge_attempt(view, forge_tiny, 0, g, 1), target=1)
        for _ in range(trials)
    )
    lo, hi = analysis.clopper_pearson(wins, trials, 0.999)
    assert lo <= 125 / 4096 <= hi
