"""Exhaustive tabular models of tiny Shapes instances.

A full state lists, for each of the N library objects, either a grid cell or
the null marker (-1, "absent"). Slot states list K cells. With a binding
(phi, alpha), every scene's sub-model maps onto the shared slot model, and
the checks here test those maps exactly.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import env
from .env import ActionId, EnvState, Library, Scene
from .errors import ActionOnAbsentObject, NotAHomomorphism, NotIsomorphic, ScalingViolation, TooLarge
from .perms import Permutation, binom, enumerate_group

ABSENT = -1
ROW_TOL = 1e-12


@dataclass
class TabularMDP:
    """Dense transition table T[s, a, s'].

    kind is "full" (factors are library objects, entries may be ABSENT) or
    "slot" (factors are slots). states[i] is a tuple of cell indices.
    """
    kind: str
    n_factors: int
    states: List[Tuple[int, ...]]
    T: np.ndarray
    grid: Tuple[int, int]
    index: Dict[Tuple[int, ...], int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.index:
            self.index = {s: i for i, s in enumerate(self.states)}
        self._perm_cache = {}

    @property
    def n_states(self):
        return len(self.states)

    @property
    def n_actions(self):
        return self.T.shape[1]

    @property
    def actions(self):
        return list(range(self.n_actions))

    def present(self) -> np.ndarray:
        """Mask (S, A): action acts on a factor that is present in s."""
        occ = np.array([[c != ABSENT for c in s] for s in self.states])
        return np.repeat(occ, env.N_PRIMITIVES, axis=1)

    def permute_tables(self, p: Permutation):
        """Index maps for relabeling factors by p: (state map, action map)."""
        if p.n != self.n_factors:
            raise ValueError(f"permutation degree {p.n} != {self.n_factors} factors")
        hit = self._perm_cache.get(p.image)
        if hit is not None:
            return hit
        smap = np.empty(self.n_states, dtype=np.int64)
        for i, s in enumerate(self.states):
            t = [ABSENT] * self.n_factors
            for f, c in enumerate(s):
                t[p(f)] = c
            smap[i] = self.index[tuple(t)]
        amap = np.array([env.N_PRIMITIVES * p(a // env.N_PRIMITIVES) + a % env.N_PRIMITIVES
                         for a in range(self.n_actions)], dtype=np.int64)
        self._perm_cache[p.image] = (smap, amap)
        return smap, amap

    def check_stochastic(self, tol=ROW_TOL) -> bool:
        return bool(np.all(self.T >= 0) and np.all(np.abs(self.T.sum(axis=2) - 1.0) <= tol))


@dataclass
class HomMap:
    """phi[s] -> slot state index; alpha[s, a] -> slot action index or -1
    where the action targets an absent object."""
    phi: np.ndarray
    alpha: np.ndarray
    slot_states: List[Tuple[int, ...]]
    k: int

    @property
    def n_slot_states(self):
        return len(self.slot_states)


def _cells(grid) -> int:
    w, h = grid
    return w * h


def build_full_mdp(n: int, k: int, grid=(2, 2)) -> TabularMDP:
    """Enumerate every full state of an n-object Shapes library with k
    objects present and tabulate its deterministic dynamics."""
    w, h = grid
    if n > 5 or _cells(grid) > 9:
        raise TooLarge(f"enumeration guard: N<=5 and at most 9 cells (got N={n}, {w}x{h})")
    if not 1 < k < n:
        raise TooLarge(f"need 1 < K < N, got K={k}, N={n}")
    if k > w * h:
        raise TooLarge(f"{k} objects do not fit on {w}x{h}")
    lib = Library.shapes(n)
    states = []
    for ids in itertools.combinations(range(n), k):
        for cells in itertools.permutations(range(w * h), k):
            s = [ABSENT] * n
            for i, c in zip(ids, cells):
                s[i] = c
            states.append(tuple(s))
    index = {s: i for i, s in enumerate(states)}
    A = env.N_PRIMITIVES * n
    T = np.zeros((len(states), A, len(states)))
    for si, s in enumerate(states):
        ids = tuple(i for i in range(n) if s[i] != ABSENT)
        st = EnvState(lib, Scene(ids), tuple(divmod(s[i], w) for i in ids), w, h)
        for a in range(A):
            act = ActionId.from_flat(a)
            if s[act.object_id] == ABSENT:
                T[si, a, si] = 1.0
                continue
            nxt, _ = env.step(st, act)
            t = [ABSENT] * n
            for i, (r, c) in zip(ids, nxt.positions):
                t[i] = r * w + c
            T[si, a, index[tuple(t)]] = 1.0
    return TabularMDP("full", n, states, T, (w, h), index)


def slot_states(k: int, grid) -> List[Tuple[int, ...]]:
    return list(itertools.permutations(range(_cells(grid)), k))


def canonical_slot_state(s: Tuple[int, ...]) -> Tuple[int, ...]:
    return tuple(c for c in s if c != ABSENT)


def state_scene(s: Tuple[int, ...]) -> Tuple[int, ...]:
    return tuple(i for i, c in enumerate(s) if c != ABSENT)


def canonical_hom(mdp: TabularMDP, k: int) -> HomMap:
    """Ascending-id binding over every scene: slot j holds the j-th
    smallest present id, and that object's actions drive slot j."""
    sl = slot_states(k, mdp.grid)
    sidx = {s: i for i, s in enumerate(sl)}
    phi = np.empty(mdp.n_states, dtype=np.int64)
    alpha = np.full((mdp.n_states, mdp.n_actions), -1, dtype=np.int64)
    for i, s in enumerate(mdp.states):
        phi[i] = sidx[canonical_slot_state(s)]
        for slot, obj in enumerate(state_scene(s)):
            for prim in range(env.N_PRIMITIVES):
                alpha[i, env.N_PRIMITIVES * obj + prim] = env.N_PRIMITIVES * slot + prim
    return HomMap(phi, alpha, sl, k)


def build_canonical_binding(scene: Scene, mdp: TabularMDP) -> HomMap:
    """Canonical binding restricted to the full states of one scene; phi is
    -1 for states of other scenes."""
    full = canonical_hom(mdp, scene.k)
    mask = np.array([state_scene(s) == scene.object_ids for s in mdp.states])
    phi = np.where(mask, full.phi, -1)
    alpha = np.where(mask[:, None], full.alpha, -1)
    return HomMap(phi, alpha, full.slot_states, full.k)


def reorder_alpha_for_scene(hom: HomMap, mdp: TabularMDP, scene: Scene, slot_perm: Permutation) -> HomMap:
    """Copy of hom whose action map for one scene sends object i_j to slot
    slot_perm(j) while phi is left alone."""
    alpha = hom.alpha.copy()
    for i, s in enumerate(mdp.states):
        if state_scene(s) != scene.object_ids:
            continue
        for slot, obj in enumerate(scene.object_ids):
            for prim in range(env.N_PRIMITIVES):
                alpha[i, env.N_PRIMITIVES * obj + prim] = env.N_PRIMITIVES * slot_perm(slot) + prim
    return HomMap(hom.phi.copy(), alpha, hom.slot_states, hom.k)


def preimage_sizes(hom: HomMap) -> np.ndarray:
    valid = hom.phi[hom.phi >= 0]
    return np.bincount(valid, minlength=hom.n_slot_states)


def induce_slot_model(T_full: np.ndarray, hom: HomMap, mdp: TabularMDP, tol=ROW_TOL) -> TabularMDP:
    """Slot table whose entries sum the full table over each preimage class.

    Rows of (s, a) pairs that share (phi(s), alpha_s(a)) must agree; the
    first disagreement is raised with both witnesses.
    """
    S_bar = hom.n_slot_states
    A_bar = env.N_PRIMITIVES * hom.k
    onehot = np.zeros((mdp.n_states, S_bar), dtype=T_full.dtype)
    ok = hom.phi >= 0
    onehot[np.nonzero(ok)[0], hom.phi[ok]] = 1.0
    rows = np.einsum("sat,tk->sak", T_full, onehot)
    T_bar = np.zeros((S_bar, A_bar, S_bar), dtype=T_full.dtype)
    seen = np.zeros((S_bar, A_bar), dtype=bool)
    owner = {}
    for s in range(mdp.n_states):
        if hom.phi[s] < 0:
            continue
        for a in range(mdp.n_actions):
            ab = hom.alpha[s, a]
            if ab < 0:
                continue
            key = (hom.phi[s], ab)
            if not seen[key]:
                T_bar[key] = rows[s, a]
                seen[key] = True
                owner[key] = (s, a)
            elif np.max(np.abs(T_bar[key] - rows[s, a])) > tol:
                raise NotAHomomorphism(
                    f"rows for (s={owner[key][0]}, a={owner[key][1]}) and (s={s}, a={a}) "
                    f"share slot key {key} but differ",
                    witness=(owner[key], (s, a)),
                )
    if not seen.all():
        missing = np.argwhere(~seen)[0]
        raise NotAHomomorphism(f"slot pair {tuple(missing)} has no preimage", witness=tuple(missing))
    return TabularMDP("slot", hom.k, list(hom.slot_states), T_bar, mdp.grid)


# ---------------------------------------------------------------- projection

@dataclass
class ProjectionReport:
    passed: bool
    counterexample: Optional[dict]
    # sbar[g, s, a] = index into enumerate_group(K) of the matching slot
    # permutation for sigma = enumerate_group(N)[g]; -1 no match, -2 absent
    sbar: np.ndarray


def _slot_perm_tables(k: int, grid):
    sl = slot_states(k, grid)
    slot_mdp = TabularMDP("slot", k, sl, np.zeros((len(sl), env.N_PRIMITIVES * k, 1)), grid)
    group = enumerate_group(k)
    smaps, amaps = zip(*(slot_mdp.permute_tables(p) for p in group))
    return group, np.stack(smaps), np.stack(amaps)


def check_projection_property(hom: HomMap, mdp: TabularMDP, n: int, k: int) -> ProjectionReport:
    """For every sigma in Sigma_N and every (s, a) on a present object, look
    for a slot permutation commuting with phi and alpha."""
    if n > 5:
        raise TooLarge("projection search enumerates Sigma_N; N must be <= 5")
    full_group = enumerate_group(n)
    kgroup, ksm, kam = _slot_perm_tables(k, mdp.grid)
    present = hom.alpha >= 0
    sbar = np.full((len(full_group), mdp.n_states, mdp.n_actions), -2, dtype=np.int64)
    cex = None
    for g, sigma in enumerate(full_group):
        smap, amap = mdp.permute_tables(sigma)
        target_phi = hom.phi[smap]  # phi(sigma s), per s
        target_alpha = hom.alpha[smap][:, amap]  # alpha_{sigma s}(sigma a)
        # ok[j, s, a]: slot permutation j works
        state_ok = ksm[:, hom.phi] == target_phi[None, :]
        act_img = np.where(present[None], kam[:, np.maximum(hom.alpha, 0)], -3)
        ok = state_ok[:, :, None] & (act_img == target_alpha[None])
        found = ok.any(axis=0)
        first = np.argmax(ok, axis=0)
        sbar[g] = np.where(present, np.where(found, first, -1), -2)
        bad = present & ~found
        if cex is None and bad.any():
            s, a = (int(v) for v in np.argwhere(bad)[0])
            cex = {
                "sigma": list(sigma.image),
                "state": list(mdp.states[s]),
                "action": {"obj": a // env.N_PRIMITIVES, "prim": a % env.N_PRIMITIVES},
            }
    return ProjectionReport(cex is None, cex, sbar)


# ---------------------------------------------------------------- equivariance

def _check_present(mdp: TabularMDP, s: int, a: int):
    if mdp.kind == "full" and mdp.states[s][a // env.N_PRIMITIVES] == ABSENT:
        raise ActionOnAbsentObject(f"action {a} acts on an absent object in state {mdp.states[s]}")


def equivariance_error(mdp: TabularMDP, T_hat: np.ndarray, sigma: Permutation, sample) -> float:
    """|T(s'|s,a) - T(sigma s'|sigma s, sigma a)| for one triple."""
    s, a, s2 = sample
    _check_present(mdp, s, a)
    smap, amap = mdp.permute_tables(sigma)
    return float(abs(T_hat[s, a, s2] - T_hat[smap[s], amap[a], smap[s2]]))


def error_tensor(mdp: TabularMDP, T_hat: np.ndarray, sigma: Permutation) -> np.ndarray:
    smap, amap = mdp.permute_tables(sigma)
    return np.abs(T_hat - T_hat[smap][:, amap][:, :, smap])


def expected_equivariance_error(mdp: TabularMDP, T_hat: np.ndarray, group=None) -> float:
    """Mean error over sigma (uniform) and supported triples on present
    objects, a triple being supported when either probability is nonzero."""
    group = group if group is not None else enumerate_group(mdp.n_factors)
    present = mdp.present()
    total, count = 0.0, 0
    for sigma in group:
        smap, amap = mdp.permute_tables(sigma)
        other = T_hat[smap][:, amap][:, :, smap]
        supp = ((T_hat + other) > 0) & present[:, :, None]
        total += float(np.abs(T_hat - other)[supp].sum())
        count += int(supp.sum())
    return total / count if count else 0.0


# ---------------------------------------------------------------- perturbations

def perturb_class_uniform(mdp: TabularMDP, hom: HomMap, eps: float, seed=0, dtype=np.float64) -> np.ndarray:
    """Mix eps of every present-action row into a table that spreads mass
    evenly over all full states sharing a position multiset.

    The class weights depend on the ordered slot state and slot action only,
    drawn at random from {1, 2, 3, 4}, so the mixture is a homomorphic image of a table that
    is deliberately not slot-permutation equivariant. Every full state in a
    multiset class receives the same mass, which makes all preimage-member
    differences share a sign.
    """
    rng = np.random.default_rng(seed)
    msets = {}
    mset_of = np.empty(mdp.n_states, dtype=np.int64)
    for i, s in enumerate(mdp.states):
        key = tuple(sorted(canonical_slot_state(s)))
        mset_of[i] = msets.setdefault(key, len(msets))
    class_size = np.bincount(mset_of)
    A_bar = env.N_PRIMITIVES * hom.k
    # small integer weights keep every nonzero difference far above round-off
    G = rng.integers(1, 5, size=(hom.n_slot_states, A_bar, len(msets))).astype(dtype)
    G /= G.sum(axis=2, keepdims=True)
    eps = dtype(eps)
    T_hat = mdp.T.astype(dtype)
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            ab = hom.alpha[s, a]
            if ab < 0:
                continue
            sym = G[hom.phi[s], ab][mset_of] / class_size[mset_of]
            T_hat[s, a] = (1 - eps) * T_hat[s, a] + eps * sym
    return T_hat


def perturb_offsupport(mdp: TabularMDP, hom: HomMap, eps: float, seed=0) -> np.ndarray:
    """Add eps to one randomly chosen zero entry of each present-action row
    and renormalize. The result is generally not a homomorphic image."""
    rng = np.random.default_rng(seed)
    T_hat = mdp.T.copy()
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            if hom.alpha[s, a] < 0:
                continue
            zeros = np.nonzero(T_hat[s, a] == 0)[0]
            T_hat[s, a, rng.choice(zeros)] += eps
            T_hat[s, a] /= T_hat[s, a].sum()
    return T_hat


# ---------------------------------------------------------------- scaling law

@dataclass
class ScalingReport:
    C: int
    max_abs_deviation: float
    max_ratio_deviation: float
    expected_full: float
    expected_slot: float
    n_samples: int
    worst: Optional[dict]

    @property
    def expected_ratio(self):
        return self.expected_slot / self.expected_full if self.expected_full > 0 else float("nan")

    def passed(self, tol=1e-9):
        return self.max_abs_deviation <= tol


def verify_proposition_scaling(mdp: TabularMDP, T_hat: np.ndarray, hom: HomMap, k: int,
                               tol=1e-9, raise_on_violation=False) -> ScalingReport:
    """Compare, for every sigma and every supported full triple, the slot
    error under the projected slot permutation with C times the full error.

    max_ratio_deviation is |slot/full - C| over samples with nonzero full
    error; max_abs_deviation is |slot - C*full| over all supported samples.
    """
    n = mdp.n_factors
    C = binom(n, k)
    proj = check_projection_property(hom, mdp, n, k)
    if not proj.passed:
        raise ScalingViolation("binding fails the projection property", witness=proj.counterexample)
    T_bar = induce_slot_model(T_hat, hom, mdp).T
    kgroup, ksm, kam = _slot_perm_tables(k, mdp.grid)
    present = hom.alpha >= 0
    s_idx, a_idx = np.nonzero(present)
    phi_s = hom.phi[s_idx]
    ab = hom.alpha[s_idx, a_idx]
    phi_all = hom.phi
    max_abs = max_ratio = 0.0
    tot_full = tot_slot = 0.0
    count = 0
    worst = None
    for g, sigma in enumerate(enumerate_group(n)):
        smap, amap = mdp.permute_tables(sigma)
        lam_full = np.abs(T_hat[s_idx, a_idx] - T_hat[smap[s_idx], amap[a_idx]][:, smap])  # (P, S)
        j = proj.sbar[g, s_idx, a_idx]
        lhs = T_bar[phi_s, ab][:, phi_all]  # T_bar(phi(s')|phi(s), alpha)
        rhs = T_bar[ksm[j, phi_s], kam[j, ab]]  # row at the permuted slot pair
        rhs = rhs[np.arange(len(j))[:, None], ksm[j][:, phi_all]]
        lam_slot = np.abs(lhs - rhs)
        supp = (T_hat[s_idx, a_idx] + T_hat[smap[s_idx], amap[a_idx]][:, smap]) > 0
        dev = np.abs(lam_slot - C * lam_full)
        dev = np.where(supp, dev, 0.0)
        nz = supp & (lam_full > 0)
        if nz.any():
            max_ratio = max(max_ratio, float(np.max(np.abs(lam_slot[nz] / lam_full[nz] - C))))
        m = float(dev.max())
        if m > max_abs:
            max_abs = m
            p, t = np.unravel_index(np.argmax(dev), dev.shape)
            worst = {"sigma": list(sigma.image), "s": int(s_idx[p]), "a": int(a_idx[p]), "s_next": int(t),
                     "slot_error": float(lam_slot[p, t]), "full_error": float(lam_full[p, t])}
        tot_full += float(lam_full[supp].sum())
        tot_slot += float(lam_slot[supp].sum())
        count += int(supp.sum())
    rep = ScalingReport(C, max_abs, max_ratio, tot_full / max(count, 1), tot_slot / max(count, 1), count, worst)
    if raise_on_violation and max_abs > tol:
        raise ScalingViolation(f"slot error differs from {C} x full error by {max_abs:.3e}", witness=worst)
    return rep


def class_triangle_bound(mdp: TabularMDP, T_hat: np.ndarray, hom: HomMap, k: int) -> float:
    """Largest violation of the per-class triangle bound

        slot_error(psi, abar, psi') <= sum over x in class(psi') of
            |T(x|s,a) - T(tau x|sigma s, sigma a)|

    where tau keeps x's scene and reorders its cells to the permuted slot
    state. Returns max(lhs - rhs); non-positive means the bound holds.
    """
    n = mdp.n_factors
    proj = check_projection_property(hom, mdp, n, k)
    T_bar = induce_slot_model(T_hat, hom, mdp).T
    kgroup, ksm, kam = _slot_perm_tables(k, mdp.grid)
    sl_index = {s: i for i, s in enumerate(hom.slot_states)}
    # members[psi] = list of full states; tau_table[j][x] = reordered state
    members = [[] for _ in hom.slot_states]
    for x in range(mdp.n_states):
        members[hom.phi[x]].append(x)
    tau = np.empty((len(kgroup), mdp.n_states), dtype=np.int64)
    for j, p in enumerate(kgroup):
        for x, s in enumerate(mdp.states):
            ids = state_scene(s)
            cells = canonical_slot_state(s)
            new = [0] * k
            for slot, c in enumerate(cells):
                new[p(slot)] = c
            t = [ABSENT] * n
            for i, c in zip(ids, new):
                t[i] = c
            tau[j, x] = mdp.index[tuple(t)]
    worst = -np.inf
    for g, sigma in enumerate(enumerate_group(n)):
        smap, amap = mdp.permute_tables(sigma)
        for s, a in zip(*np.nonzero(hom.alpha >= 0)):
            j = proj.sbar[g, s, a]
            ps, ab = hom.phi[s], hom.alpha[s, a]
            row = T_hat[s, a]
            row_sigma = T_hat[smap[s], amap[a]]
            slot_row = T_bar[ps, ab]
            slot_row_sigma = T_bar[ksm[j, ps], kam[j, ab]]
            for psi2, xs in enumerate(members):
                lhs = abs(slot_row[psi2] - slot_row_sigma[ksm[j, psi2]])
                rhs = sum(abs(row[x] - row_sigma[tau[j, x]]) for x in xs)
                worst = max(worst, lhs - rhs)
    return float(worst)


# ---------------------------------------------------------------- isomorphisms

@dataclass
class SceneIsomorphism:
    """Maps states/actions of scene j onto those of scene i (full indices)."""
    state_map: Dict[int, int]
    action_map: Dict[int, int]

    def inverse(self) -> "SceneIsomorphism":
        return SceneIsomorphism({v: k for k, v in self.state_map.items()},
                                {v: k for k, v in self.action_map.items()})


def scene_isomorphism(scene_i: Scene, scene_j: Scene, mdp: TabularMDP, verify=True) -> SceneIsomorphism:
    """Compose the canonical binding of scene j with the inverse binding of
    scene i: the k-th smallest id of j plays the k-th smallest id of i."""
    if scene_i.k != scene_j.k:
        raise NotIsomorphic("scenes differ in size")
    n = mdp.n_factors
    state_map = {}
    for x, s in enumerate(mdp.states):
        if state_scene(s) != scene_j.object_ids:
            continue
        t = [ABSENT] * n
        for i_obj, j_obj in zip(scene_i.object_ids, scene_j.object_ids):
            t[i_obj] = s[j_obj]
        state_map[x] = mdp.index[tuple(t)]
    action_map = {}
    for i_obj, j_obj in zip(scene_i.object_ids, scene_j.object_ids):
        for prim in range(env.N_PRIMITIVES):
            action_map[env.N_PRIMITIVES * j_obj + prim] = env.N_PRIMITIVES * i_obj + prim
    iso = SceneIsomorphism(state_map, action_map)
    if verify:
        check_isomorphism(iso, mdp)
    return iso


def check_isomorphism(iso: SceneIsomorphism, mdp: TabularMDP):
    src = np.array(sorted(iso.state_map))
    dst = np.array([iso.state_map[x] for x in src])
    fmap = np.full(mdp.n_states, -1)
    fmap[src] = dst
    for a, b in iso.action_map.items():
        rows = mdp.T[src, a]  # (|src|, S)
        img = mdp.T[dst, b]
        # mass of every successor must land on its image
        if np.any(rows[:, np.setdiff1d(np.arange(mdp.n_states), src)] != 0):
            raise NotIsomorphic(f"action {a} leaves the scene")
        if not np.array_equal(rows[:, src], img[:, fmap[src]]):
            bad = int(src[np.argmax(np.any(rows[:, src] != img[:, fmap[src]], axis=1))])
            raise NotIsomorphic(f"transition from state {bad} under action {a} does not commute")


# ---------------------------------------------------------------- reports

def prop_report(n=4, k=2, grid=(2, 2), eps=1e-3, seed=0) -> dict:
    """End-to-end verification used by the command line."""
    mdp = build_full_mdp(n, k, grid)
    hom = canonical_hom(mdp, k)
    proj = check_projection_property(hom, mdp, n, k)
    T_slot = induce_slot_model(mdp.T, hom, mdp)
    pre = preimage_sizes(hom)
    exact_err = expected_equivariance_error(mdp, mdp.T)
    T_hat = perturb_class_uniform(mdp, hom, eps, seed, dtype=np.longdouble)
    induced_ok = induce_slot_model(T_hat, hom, mdp).check_stochastic()
    sc = verify_proposition_scaling(mdp, T_hat, hom, k)
    iso_ok = True
    scenes = sorted({state_scene(s) for s in mdp.states})
    try:
        for si in scenes:
            for sj in scenes:
                scene_isomorphism(Scene(si), Scene(sj), mdp)
    except NotIsomorphic:
        iso_ok = False
    checks = {
        "homomorphism": T_slot.check_stochastic(),
        "preimage_sizes_equal_C": bool(np.all(pre == sc.C)),
        "exact_equivariance_zero": exact_err == 0.0,
        "perturbed_rows_stochastic": bool(induced_ok),
        "scaling": sc.passed(),
        "scene_isomorphisms": iso_ok,
    }
    report = {
        "instance": {"N": n, "K": k, "grid": f"{grid[0]}x{grid[1]}", "eps": eps,
                     "full_states": mdp.n_states, "slot_states": hom.n_slot_states},
        "C": sc.C,
        "max_ratio_deviation": sc.max_ratio_deviation,
        "max_abs_deviation": sc.max_abs_deviation,
        "expected_ratio": sc.expected_ratio,
        "expected_full_error": sc.expected_full,
        "expected_slot_error": sc.expected_slot,
        "samples": sc.n_samples,
        "projection_property": "pass" if proj.passed else "fail",
        "checks": checks,
        "passed": bool(proj.passed and all(checks.values())),
    }
    if not proj.passed:
        report["counterexample"] = proj.counterexample
    if sc.worst is not None and not sc.passed():
        report["worst_sample"] = sc.worst
    return report
