"""Acceptance criteria. Each test records one pass/fail line, printed in the
terminal summary, before asserting."""
import time

import numpy as np
import pytest

from oolib import autodiff as ad
from oolib import env
from oolib.autodiff import Tensor
from oolib.baselines import ExactSigmaN
from oolib.env import Scene
from oolib.evaluation import hits_at_1, mean_reciprocal_rank
from oolib.howm import HOWM
from oolib.models import Hyper
from oolib.perms import enumerate_group
from oolib.tabular import (build_full_mdp, canonical_hom, check_projection_property, expected_equivariance_error,
                           error_tensor, induce_slot_model, perturb_class_uniform, preimage_sizes,
                           scene_isomorphism, state_scene, verify_proposition_scaling)

from helpers import KINDS, kink_free_model, random_obs, tiny_batch, tiny_corpus


def record(acc, n, ok, detail):
    acc[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def mean(runs, kind, metric):
    return float(np.mean([r[kind][metric] for r in runs]))


INSTANCES = ((4, 2, 6), (3, 2, 3))


def test_criterion_01_exact_scaling(acceptance):
    t0 = time.time()
    parts, ok = [], True
    for n, k, ratio in INSTANCES:
        mdp = build_full_mdp(n, k, (2, 2))
        hom = canonical_hom(mdp, k)
        T_hat = perturb_class_uniform(mdp, hom, 1e-3, seed=0, dtype=np.longdouble)
        rep = verify_proposition_scaling(mdp, T_hat, hom, k)
        dev = max(rep.max_ratio_deviation, rep.max_abs_deviation)
        ok &= rep.C == ratio and dev <= 1e-9 and rep.expected_full > 0
        parts.append(f"N={n}: ratio {rep.C}, max deviation {dev:.1e} over {rep.n_samples} samples")
    dt = time.time() - t0
    ok &= dt < 30
    record(acceptance, 1, ok, "; ".join(parts) + f"; {dt:.1f}s")


def test_criterion_02_homomorphism_projection(acceptance):
    parts, ok = [], True
    for n, k, ratio in INSTANCES:
        mdp = build_full_mdp(n, k, (2, 2))
        hom = canonical_hom(mdp, k)
        slot = induce_slot_model(mdp.T, hom, mdp)
        proj = check_projection_property(hom, mdp, n, k)
        scenes = sorted({state_scene(s) for s in mdp.states})
        n_pairs = 0
        for si in scenes:
            for sj in scenes:
                iso = scene_isomorphism(Scene(si), Scene(sj), mdp)
                for x, y in iso.state_map.items():
                    for a, b in iso.action_map.items():
                        t = int(np.argmax(mdp.T[x, a]))
                        ok &= mdp.T[y, b, iso.state_map[t]] == 1.0
                        n_pairs += 1
        ok &= slot.check_stochastic() and proj.passed and bool(np.all(preimage_sizes(hom) == ratio))
        parts.append(f"N={n}: homomorphism ok, projection {'pass' if proj.passed else 'fail'}, "
                     f"{n_pairs} commuting pairs")
    record(acceptance, 2, ok, "; ".join(parts))


def test_criterion_03_zero_error(acceptance):
    parts, ok = [], True
    for n, k, _ in INSTANCES:
        mdp = build_full_mdp(n, k, (2, 2))
        worst = max(float(error_tensor(mdp, mdp.T, s)[mdp.present()].max()) for s in enumerate_group(n))
        lam = expected_equivariance_error(mdp, mdp.T)
        ok &= worst == 0.0 and lam == 0.0
        parts.append(f"N={n}: max error {worst}, expected {lam}")
    record(acceptance, 3, ok, "; ".join(parts))


def test_criterion_04_gradients(acceptance):
    t0 = time.time()
    batch = tiny_batch(tiny_corpus(n=6, k=3))
    parts, ok = [], True
    for kind in KINDS:
        m = kink_free_model(kind, batch)
        if kind == "howm":
            with m.frozen_lifts():
                rep = ad.grad_check(lambda p: m.loss(batch), m.params, h=1e-5, tol=1e-4)
        else:
            rep = ad.grad_check(lambda p: m.loss(batch), m.params, h=1e-5, tol=1e-4)
        ok &= rep.passed
        parts.append(f"{kind} {rep.max_error:.1e}")
    dt = time.time() - t0
    ok &= dt < 60
    record(acceptance, 4, ok, "max rel. error " + ", ".join(parts) + f"; {dt:.1f}s")


def test_criterion_05_equivariance(acceptance):
    N, K, F = 10, 5, env.feature_dim()
    m = HOWM(N, K, F, Hyper(), seed=0)
    ex = ExactSigmaN(N, K, F, Hyper(), seed=0)
    rng = np.random.default_rng(0)
    worst = {"encoder": 0.0, "attention": 0.0, "gnn": 0.0, "relabel": 0.0}
    for _ in range(100):
        f, order = random_obs(rng, 1, K, F, N)
        P = rng.permutation(K)
        Pb = np.append(P, K)
        s = m.encode_slots(f).data
        worst["encoder"] = max(worst["encoder"], np.abs(m.encode_slots(f[:, P]).data - s[:, Pb]).max())
        worst["attention"] = max(worst["attention"], np.abs(m.binding(f[:, P]) - m.binding(f)[:, Pb]).max())
        Q = rng.permutation(K + 1)
        sg = rng.normal(size=(1, K + 1, 16))
        ag = rng.normal(size=(1, K + 1, 4))
        g = m.transition(Tensor(sg), Tensor(ag)).data
        worst["gnn"] = max(worst["gnn"], np.abs(m.transition(Tensor(sg[:, Q]), Tensor(ag[:, Q])).data - g[:, Q]).max())
        sigma = rng.permutation(N)
        ao, ap = rng.integers(N, size=(1, 2)), rng.integers(4, size=(1, 2))
        r = ex.rollout(f, order, ao, ap)
        rs = ex.rollout(f, sigma[order], sigma[ao], ap)
        worst["relabel"] = max(worst["relabel"], np.abs(rs[:, :, sigma] - r).max())
    ok = all(v <= 1e-9 for v in worst.values())
    record(acceptance, 5, ok, "max deviation over 100 cases: " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_criterion_06_shapes_ordering(acceptance, shapes_runs):
    runs = shapes_runs
    checks = {
        "exact eval1 >= 0.99": mean(runs, "exact_sigma_n", "eval1") >= 0.99,
        "exact gap5 <= 0.02": mean(runs, "exact_sigma_n", "gap5") <= 0.02,
        "howm eval1 >= 0.90": mean(runs, "howm", "eval1") >= 0.90,
        "nobind train1 >= 0.95": mean(runs, "sigma_k_nobind", "train1") >= 0.95,
        "nobind gap5 >= 0.20": mean(runs, "sigma_k_nobind", "gap5") >= 0.20,
        "gap5 howm < nobind": mean(runs, "howm", "gap5") < mean(runs, "sigma_k_nobind", "gap5"),
        "eval1 howm > flat": mean(runs, "howm", "eval1") > mean(runs, "flat_mlp", "eval1"),
    }
    minutes = sum(r[k]["seconds"] for r in runs for k in ("howm", "exact_sigma_n", "sigma_k_nobind", "flat_mlp")) / 60
    checks["runtime < 30 min"] = minutes < 30
    detail = (", ".join(f"{k} {mean(runs, k, 'eval1'):.3f}/{mean(runs, k, 'gap5'):.3f}"
                        for k in ("exact_sigma_n", "howm", "sigma_k_nobind", "flat_mlp"))
              + f" (eval1/gap5); nobind train1 {mean(runs, 'sigma_k_nobind', 'train1'):.3f}; {minutes:.1f} min")
    failed = [k for k, v in checks.items() if not v]
    record(acceptance, 6, not failed, detail + (f"; failed: {failed}" if failed else ""))


def test_criterion_07_rush_hour_ordering(acceptance, rush_hour_runs):
    runs = rush_hour_runs
    h1, hg, ng = mean(runs, "howm", "eval1"), mean(runs, "howm", "gap5"), mean(runs, "sigma_k_nobind", "gap5")
    ok = h1 >= 0.85 and hg < ng
    record(acceptance, 7, ok, f"howm eval1 {h1:.3f}; gap5 howm {hg:.3f} vs nobind {ng:.3f}")


def test_criterion_08_binding(acceptance, shapes_runs):
    acc = [r["howm"]["binding"] for r in shapes_runs]
    record(acceptance, 8, min(acc) >= 0.9, "binding accuracy per seed " + ", ".join(f"{a:.3f}" for a in acc))


def test_criterion_09_protocol(acceptance, shapes_runs, rush_hour_runs):
    problems = [p for r in shapes_runs + rush_hour_runs for p in r["problems"]]
    moved = [float(c.moved.mean()) for r in shapes_runs + rush_hour_runs for c in r["corpora"]]
    ok = not problems and min(moved) >= 0.9
    record(acceptance, 9, ok, f"{2 * len(moved) // 2} corpora, {len(problems)} problems, "
                              f"min moving fraction {min(moved):.3f}")


def test_criterion_10_metric_oracles(acceptance):
    ranks = [1, 2, 4]
    mrr, h1 = mean_reciprocal_rank(ranks), hits_at_1(ranks)
    ok = mrr == (1 + 1 / 2 + 1 / 4) / 3 and h1 == 1 / 3 and round(mrr, 5) == 0.58333 and round(h1, 5) == 0.33333
    ok &= mean_reciprocal_rank([1, 1]) == 1.0 and hits_at_1([2, 3]) == 0.0
    record(acceptance, 10, ok, f"ranks [1,2,4]: MRR {mrr:.5f}, H@1 {h1:.5f}")
