import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oolib import env
from oolib.env import Scene
from oolib.errors import ActionOnAbsentObject, NotAHomomorphism, ScalingViolation, TooLarge
from oolib.perms import Permutation, enumerate_group, parse_cycles
from oolib.tabular import (ABSENT, build_full_mdp, canonical_hom, check_projection_property, class_triangle_bound,
                           equivariance_error, error_tensor, expected_equivariance_error, induce_slot_model,
                           perturb_class_uniform, perturb_offsupport, preimage_sizes, prop_report,
                           reorder_alpha_for_scene, scene_isomorphism, state_scene, verify_proposition_scaling)


@pytest.fixture(scope="module")
def m42():
    mdp = build_full_mdp(4, 2, (2, 2))
    return mdp, canonical_hom(mdp, 2)


@pytest.fixture(scope="module")
def m32():
    mdp = build_full_mdp(3, 2, (2, 2))
    return mdp, canonical_hom(mdp, 2)


def components(mdp):
    parent = list(range(mdp.n_states))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for s, a, t in zip(*np.nonzero(mdp.T)):
        parent[find(s)] = find(t)
    return len({find(x) for x in range(mdp.n_states)})


def test_full_mdp_size_and_components(m42, m32):
    mdp, _ = m42
    assert mdp.n_states == 72 and mdp.n_actions == 16
    assert mdp.check_stochastic()
    assert components(mdp) == 6
    assert components(m32[0]) == 3
    # deterministic dynamics
    assert set(np.unique(mdp.T)) == {0.0, 1.0}


def test_enumeration_guard():
    with pytest.raises(TooLarge):
        build_full_mdp(6, 2, (2, 2))
    with pytest.raises(TooLarge):
        build_full_mdp(4, 2, (4, 3))
    with pytest.raises(TooLarge):
        build_full_mdp(3, 3, (2, 2))


def test_full_mdp_matches_simulator(m42):
    mdp, _ = m42
    lib = env.Library.shapes(4)
    rng = np.random.default_rng(0)
    for si in rng.choice(mdp.n_states, 20, replace=False):
        s = mdp.states[si]
        ids = state_scene(s)
        st_ = env.EnvState(lib, Scene(ids), tuple(divmod(s[i], 2) for i in ids), 2, 2)
        obj = int(rng.choice(ids))
        prim = int(rng.integers(4))
        nxt, _ = env.step(st_, env.ActionId(obj, prim))
        t = [ABSENT] * 4
        for i, (r, c) in zip(ids, nxt.positions):
            t[i] = 2 * r + c
        assert mdp.T[si, 4 * obj + prim, mdp.index[tuple(t)]] == 1.0


def test_homomorphism_and_preimages(m42):
    mdp, hom = m42
    assert hom.n_slot_states == 12
    assert np.all(preimage_sizes(hom) == 6)
    slot = induce_slot_model(mdp.T, hom, mdp)
    assert slot.check_stochastic()
    # explicit commuting condition: summed class mass equals slot entry
    for s in range(mdp.n_states):
        for a in np.nonzero(hom.alpha[s] >= 0)[0]:
            for psi in range(hom.n_slot_states):
                mass = mdp.T[s, a, hom.phi == psi].sum()
                assert mass == slot.T[hom.phi[s], hom.alpha[s, a], psi]


def test_projection_property_passes(m42, m32):
    for mdp, hom in (m42, m32):
        rep = check_projection_property(hom, mdp, mdp.n_factors, 2)
        assert rep.passed and rep.counterexample is None
        present = hom.alpha >= 0
        assert np.all(rep.sbar[:, present] >= 0)
        assert np.all(rep.sbar[:, ~present] == -2)


def test_projection_fails_for_reordered_actions(m42):
    mdp, hom = m42
    bad = reorder_alpha_for_scene(hom, mdp, Scene([0, 1]), parse_cycles("(12)", 2))
    rep = check_projection_property(bad, mdp, 4, 2)
    assert not rep.passed
    ce = rep.counterexample
    assert set(ce) == {"sigma", "state", "action"}
    with pytest.raises(ScalingViolation):
        verify_proposition_scaling(mdp, mdp.T, bad, 2)


def test_exact_table_has_zero_error(m42, m32):
    for mdp, _ in (m42, m32):
        assert expected_equivariance_error(mdp, mdp.T) == 0.0
        for sigma in enumerate_group(mdp.n_factors):
            err = error_tensor(mdp, mdp.T, sigma)
            assert np.all(err[mdp.present()] == 0.0)


def test_single_perturbed_entry(m42):
    mdp, hom = m42
    s = mdp.index[(0, 1, ABSENT, ABSENT)]
    a = 4 * 0 + 1  # south
    t = int(np.argmax(mdp.T[s, a]))
    delta = 0.125
    T_hat = mdp.T.copy()
    T_hat[s, a, t] -= delta
    sigma = parse_cycles("(13)", 4)
    assert equivariance_error(mdp, T_hat, sigma, (s, a, t)) == delta
    assert equivariance_error(mdp, T_hat, Permutation.identity(4), (s, a, t)) == 0.0
    with pytest.raises(ActionOnAbsentObject):
        equivariance_error(mdp, T_hat, sigma, (s, 4 * 2, t))


@settings(max_examples=40)
@given(st.integers(0, 71), st.integers(0, 15), st.integers(0, 23))
def test_error_tensor_matches_pointwise(s, a, g):
    mdp = _MDP42
    sigma = enumerate_group(4)[g]
    T_hat = _PERTURBED42
    if mdp.states[s][a // 4] == ABSENT:
        return
    for t in range(0, mdp.n_states, 7):
        assert error_tensor(mdp, T_hat, sigma)[s, a, t] == equivariance_error(mdp, T_hat, sigma, (s, a, t))


_MDP42 = build_full_mdp(4, 2, (2, 2))
_PERTURBED42 = perturb_class_uniform(_MDP42, canonical_hom(_MDP42, 2), 1e-2, seed=3)


def test_perturbed_rows_stay_stochastic(m42):
    mdp, hom = m42
    T_hat = perturb_class_uniform(mdp, hom, 1e-3, seed=1)
    assert np.all(T_hat >= 0)
    assert np.allclose(T_hat.sum(axis=2), 1.0, atol=1e-12)
    assert induce_slot_model(T_hat, hom, mdp).check_stochastic(tol=1e-12)


@pytest.mark.parametrize("fixture, ratio", [("m42", 6), ("m32", 3)])
def test_scaling_ratio(request, fixture, ratio):
    mdp, hom = request.getfixturevalue(fixture)
    T_hat = perturb_class_uniform(mdp, hom, 1e-3, seed=0, dtype=np.longdouble)
    rep = verify_proposition_scaling(mdp, T_hat, hom, 2)
    assert rep.C == ratio
    assert rep.max_abs_deviation <= 1e-9
    assert rep.max_ratio_deviation <= 1e-9
    assert abs(rep.expected_ratio - ratio) <= 1e-9
    assert rep.expected_full > 0


def test_offsupport_family_is_not_homomorphic(m42):
    mdp, hom = m42
    T_hat = perturb_offsupport(mdp, hom, 1e-3, seed=0)
    with pytest.raises(NotAHomomorphism) as info:
        induce_slot_model(T_hat, hom, mdp)
    assert info.value.witness is not None


def test_class_triangle_bound(m42):
    mdp, hom = m42
    T_hat = perturb_class_uniform(mdp, hom, 1e-2, seed=5)
    assert class_triangle_bound(mdp, T_hat, hom, 2) <= 1e-12


def test_scene_isomorphisms_commute(m42):
    mdp, _ = m42
    scenes = [Scene(c) for c in itertools.combinations(range(4), 2)]
    for si, sj in itertools.product(scenes, repeat=2):
        iso = scene_isomorphism(si, sj, mdp)
        assert len(iso.state_map) == 12 and len(iso.action_map) == 8
        for x, y in iso.state_map.items():
            for a, b in iso.action_map.items():
                t = int(np.argmax(mdp.T[x, a]))
                assert mdp.T[y, b, iso.state_map[t]] == 1.0
        back = iso.inverse()
        assert all(back.state_map[y] == x for x, y in iso.state_map.items())


def test_prop_report_all_checks():
    rep = prop_report(4, 2, (2, 2), 1e-3)
    assert rep["passed"] and rep["C"] == 6
    assert all(rep["checks"].values())
    assert rep["instance"]["full_states"] == 72
