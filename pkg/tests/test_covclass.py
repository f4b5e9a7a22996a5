import itertools
import math

import numpy as np
import pytest

from ipgmm.covclass import (
    CovClassModel,
    classification_objective,
    classify_covariances,
    initial_model,
    pv_step,
    relabel,
    vc_step,
)
from ipgmm.errors import InvalidGError, SingularScatterError
from ipgmm.simulate import illustration_scatters
from ipgmm.spectral import IntermediateFamily, decompose

from conftest import random_spd, rotation


def partitions(k, G):
    """Every member of the no-empty-class set, up to relabeling."""
    seen = set()
    for p in itertools.product(range(G), repeat=k):
        p = relabel(np.array(p))
        if len(set(p.tolist())) == G and p.tobytes() not in seen:
            seen.add(p.tobytes())
            yield p


def exhaustive(s, n, fam, c_sh=math.inf, c_vol=math.inf):
    best = math.inf
    for p in partitions(len(n), fam.G):
        start = initial_model(s, n, fam, p, c_sh, c_vol)
        fit = vc_step(s, n, start, c_sh, c_vol, inner_tol=1e-13, inner_max_iter=5000, orient_max_iter=50)
        best = min(best, fit.objective)
    return best


def two_family_scatters(rng, k, n=500):
    out = []
    for i in range(k):
        b = rotation(0.0 if i % 2 == 0 else math.pi / 4)
        shape = np.diag([rng.uniform(2, 4), rng.uniform(0.3, 0.6)])
        out.append(rng.uniform(0.5, 2) * b @ shape @ b.T)
    return np.array(out), np.full(k, float(n))


def feasible(model, c_sh, c_vol):
    sh = model.shapes
    ok_sh = np.all(sh.max(axis=1) <= c_sh * sh.min(axis=1) * (1 + 1e-9))
    ok_vol = model.gammas.max() <= c_vol * model.gammas.min() * (1 + 1e-9)
    ok_det = np.allclose(np.prod(sh, axis=1), 1.0, rtol=1e-9)
    return ok_sh and ok_vol and ok_det


def test_objective_examples():
    fam = IntermediateFamily("cpc", 1)
    m = CovClassModel(fam, np.array([0]), np.array([1.0]), np.ones((1, 3)), np.eye(3)[None])
    assert math.isclose(classification_objective(m, np.eye(3)[None], [10.0]), 30.0)
    rng = np.random.default_rng(0)
    s = random_spd(rng, 3)
    dec = decompose(s)
    m = CovClassModel(fam, np.array([0]), np.array([dec.gamma]), dec.shape[None], dec.orientation[None])
    assert math.isclose(classification_objective(m, s[None], [7.0]), 7.0 * (3 * math.log(dec.gamma) + 3))


@pytest.mark.parametrize("kind", ["cpc", "prop"])
def test_unrestricted_recovery(kind):
    rng = np.random.default_rng(1)
    for k in (1, 3, 5):
        s = np.array([random_spd(rng, 4, 50.0) for _ in range(k)])
        n = rng.uniform(10, 100, size=k)
        fit = classify_covariances(s, n, kind, G=k, nstart1=2, seed=0)
        for a, b in zip(fit.covariances(), s):
            assert np.linalg.norm(a - b) / np.linalg.norm(b) < 1e-7
        lower = np.sum(n * (4 * np.log([decompose(x).gamma for x in s]) + 4))
        assert math.isclose(fit.objective, lower, rel_tol=1e-9)


def test_proportional_pair():
    rng = np.random.default_rng(2)
    s = random_spd(rng, 3)
    fam = IntermediateFamily("prop", 1)
    start = initial_model(np.array([s, 4 * s]), np.array([10.0, 10.0]), fam, np.array([0, 0]), math.inf, math.inf)
    fit = vc_step([s, 4 * s], [10.0, 10.0], start, inner_tol=1e-14, inner_max_iter=500, orient_max_iter=20)
    dec = decompose(s)
    assert np.allclose(fit.gammas, [dec.gamma, 4 * dec.gamma], rtol=1e-8)
    assert np.allclose(fit.covariances(), [s, 4 * s], rtol=1e-8)


def test_pv_step_examples():
    b1, b2 = np.eye(2), rotation(math.pi / 4)
    lam = np.array([[2.0, 0.5], [2.0, 0.5]])
    target = b1 @ np.diag(lam[0]) @ b1.T
    part = pv_step(np.array([target, 3 * target]), [5.0, 5.0], IntermediateFamily("prop", 2), np.array([b1, b2]), lam)
    # class 2 would be empty, so the repair moves one matrix there
    assert sorted(part.tolist()) == [0, 1]
    part = pv_step(np.array([target, target, b2 @ np.diag(lam[1]) @ b2.T]), [5.0] * 3,
                   IntermediateFamily("prop", 2), np.array([b1, b2]), lam)
    assert part.tolist() == [0, 0, 1]
    part = pv_step(np.array([target] * 3), [5.0] * 3, IntermediateFamily("cpc", 1), np.array([b1]), lam[:1].repeat(3, 0))
    assert part.tolist() == [0, 0, 0]


def test_pv_step_ties_go_low():
    lam = np.ones((2, 2))
    part, rep = pv_step(np.array([np.eye(2)] * 3), [1.0] * 3, IntermediateFamily("prop", 2),
                        np.array([np.eye(2), np.eye(2)]), lam, return_repairs=True)
    assert part.tolist().count(0) == 2 and rep == 1


@pytest.mark.parametrize("kind", ["cpc", "prop"])
def test_separated_families_match_exhaustive(kind):
    rng = np.random.default_rng(3)
    s, n = two_family_scatters(rng, 4)
    fam = IntermediateFamily(kind, 2)
    fit = classify_covariances(s, n, fam, nstart1=16, seed=1)
    assert relabel(fit.partition).tolist() == [0, 1, 0, 1]
    assert fit.objective <= exhaustive(s, n, fam) * (1 + 1e-9)


def brute_force_agreement(kind, seeds=100):
    hits = 0
    for seed in range(seeds):
        rng = np.random.default_rng(1000 + seed)
        k = int(rng.integers(3, 7))
        d = int(rng.integers(2, 4))
        s = np.array([random_spd(rng, d, 10.0) for _ in range(k)])
        n = rng.uniform(10, 60, size=k)
        fam = IntermediateFamily(kind, 2)
        best = exhaustive(s, n, fam)
        fit = classify_covariances(s, n, fam, nstart1=64, seed=seed)
        hits += fit.objective <= best * (1 + 1e-6)
    return hits / seeds


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["cpc", "prop"])
def test_brute_force_equivalence(kind):
    assert brute_force_agreement(kind) >= 0.95


@pytest.mark.parametrize("kind", ["cpc", "prop"])
@pytest.mark.parametrize("c", [(1.5, 2.0), (3.0, 10.0), (1.0, 1.0)])
def test_feasibility(kind, c):
    rng = np.random.default_rng(4)
    s = np.array([random_spd(rng, 3, 100.0) * rng.uniform(0.1, 10) for _ in range(6)])
    fit = classify_covariances(s, np.full(6, 30.0), kind, G=2, c_sh=c[0], c_vol=c[1], nstart1=4, seed=2)
    assert feasible(fit, *c)
    for sig in fit.covariances():
        assert np.all(np.linalg.eigvalsh(sig) > 0)


@pytest.mark.parametrize("kind", ["cpc", "prop"])
def test_vc_step_descent(kind):
    rng = np.random.default_rng(5)
    s = np.array([random_spd(rng, 4, 30.0) for _ in range(6)])
    n = np.full(6, 25.0)
    start = initial_model(s, n, IntermediateFamily(kind, 2), np.array([0, 1, 0, 1, 1, 0]), 5.0, 5.0)
    fit = vc_step(s, n, start, 5.0, 5.0, inner_max_iter=10, inner_tol=0.0)
    assert len(fit.trace) == 11
    assert np.all(np.diff(fit.trace) <= 1e-9)


@pytest.mark.parametrize("kind", ["cpc", "prop"])
def test_alternation_descent(kind):
    rng = np.random.default_rng(6)
    s = np.array([random_spd(rng, 3, 30.0) for _ in range(8)])
    fit = classify_covariances(s, np.full(8, 40.0), kind, G=3, nstart1=6, seed=3)
    if fit.repairs == 0:
        assert np.all(np.diff(fit.trace) <= 1e-9)


@pytest.mark.parametrize("kind", ["cpc", "prop"])
def test_permutation_equivariance(kind):
    rng = np.random.default_rng(7)
    s, n = two_family_scatters(rng, 6)
    perm = rng.permutation(6)
    a = classify_covariances(s, n, kind, G=2, nstart1=32, seed=4)
    b = classify_covariances(s[perm], n[perm], kind, G=2, nstart1=32, seed=5)
    assert math.isclose(a.objective, b.objective, rel_tol=1e-9)
    assert np.array_equal(relabel(a.partition[perm]), relabel(b.partition))


def test_determinism():
    rng = np.random.default_rng(8)
    s = np.array([random_spd(rng, 3) for _ in range(7)])
    a = classify_covariances(s, np.full(7, 20.0), "cpc", G=2, nstart1=5, seed=42)
    b = classify_covariances(s, np.full(7, 20.0), "cpc", G=2, nstart1=5, seed=42)
    for x, y in zip((a.partition, a.gammas, a.shapes, a.orientations), (b.partition, b.gammas, b.shapes, b.orientations)):
        assert np.array_equal(x, y)


def test_threads_give_same_result():
    rng = np.random.default_rng(9)
    s = np.array([random_spd(rng, 3) for _ in range(7)])
    a = classify_covariances(s, np.full(7, 20.0), "prop", G=3, nstart1=6, seed=1)
    b = classify_covariances(s, np.full(7, 20.0), "prop", G=3, nstart1=6, seed=1, threads=3)
    assert a.objective == b.objective and np.array_equal(a.partition, b.partition)


def test_single_class_cpc():
    rng = np.random.default_rng(10)
    s = np.array([random_spd(rng, 3) for _ in range(4)])
    fit = classify_covariances(s, np.full(4, 20.0), "cpc", G=1, nstart1=1, seed=0)
    assert fit.partition.tolist() == [0, 0, 0, 0] and fit.orientations.shape == (1, 3, 3)


def test_invalid_g():
    s = np.array([np.eye(2)] * 3)
    with pytest.raises(InvalidGError):
        classify_covariances(s, [1, 1, 1], "cpc", G=4)
    with pytest.raises(InvalidGError):
        classify_covariances(s, [1, 1, 1], "prop", G=0)


def test_singular_scatter_unconstrained():
    s = np.array([np.diag([1.0, 0.0]), np.eye(2)])
    with pytest.raises(SingularScatterError):
        classify_covariances(s, [5.0, 5.0], "cpc", G=2, nstart1=1)
    fit = classify_covariances(s, [5.0, 5.0], "cpc", G=2, c_sh=100.0, nstart1=1)
    assert feasible(fit, 100.0, math.inf)


@pytest.mark.parametrize("kind", ["cpc", "prop"])
def test_illustration(kind):
    s, n = illustration_scatters(seed=2024)
    best = classify_covariances(s, n, kind, G=4, nstart1=10, seed=7)
    assert sorted(set(best.partition.tolist())) == [0, 1, 2, 3]
    children = np.random.SeedSequence(7).spawn(10)
    singles = [classify_covariances(s, n, kind, G=4, nstart1=1, seed=c).objective for c in children[:3]]
    assert all(best.objective <= v + 1e-9 for v in singles)
