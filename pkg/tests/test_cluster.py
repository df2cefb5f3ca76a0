import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lgpdiar import kernels
from lgpdiar.cluster import (ClusterConfig, Responsibilities, cluster, enroll_speaker,
                             kmeans_init, log_predictive, loo_posteriors, loo_posteriors_all,
                             update_weights)
from lgpdiar.duration import DurationConfig
from lgpdiar.errors import EmptyInput, InactiveSpeaker


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    monkeypatch.setattr(kernels, "USE_NUMBA", request.param == "numba")
    return request.param


def random_instance(rng, n=None, k=None, d=None, soft=True):
    n = n or int(rng.integers(1, 21))
    k = k or int(rng.integers(1, 6))
    d = d or int(rng.integers(1, 9))
    Z = rng.standard_normal((n, d)) * 2.0
    psi = rng.uniform(0.05, 10.0, d)
    if soft:
        g = rng.dirichlet(np.full(k, 0.5), size=n)
    else:
        g = np.eye(k)[rng.integers(k, size=n)]
    active = np.ones(k, dtype=bool)
    if k > 1 and rng.random() < 0.3:
        off = int(rng.integers(k))
        active[off] = False
        g[:, off] = 0.0
        dead = g.sum(axis=1) == 0
        g[dead, (off + 1) % k] = 1.0
        g /= g.sum(axis=1, keepdims=True)
    w = np.where(active, rng.uniform(0.05, 1.0, k), 0.0)
    return Z, psi, Responsibilities(g, active), w / w.sum()


def brute_force_loo(n, Z, resp, psi, w, duration, file_total):
    """Re-enroll every speaker from scratch with row n removed, then score."""
    keep = np.arange(Z.shape[0]) != n
    logits = np.full(resp.n_speakers, -np.inf)
    for i in np.flatnonzero(resp.active):
        g = resp.matrix[keep, i]
        model = enroll_speaker(g.sum(), g @ Z[keep], psi, duration, file_total)
        logits[i] = np.log(w[i]) + log_predictive(Z[n], model)
    p = np.exp(logits - logits.max())
    return p / p.sum()


def test_loo_matches_brute_force(backend):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(60):
        Z, psi, resp, w = random_instance(rng)
        r = float(rng.choice([0.0, 0.5, 0.9, 1.0]))
        n0 = None if rng.random() < 0.5 else float(rng.uniform(1, 30))
        cfg = ClusterConfig(max_speakers=resp.n_speakers, prune_threshold=0.0,
                            duration=DurationConfig(r=r, n0=n0))
        got = loo_posteriors_all(Z, resp, psi, w, cfg)
        for n in range(Z.shape[0]):
            ref = brute_force_loo(n, Z, resp, psi, w, cfg.duration, Z.shape[0])
            worst = max(worst, np.max(np.abs(got[n] - ref)))
            np.testing.assert_array_equal(got[n], loo_posteriors(n, Z, resp, psi, w, cfg))
    assert worst < 1e-10


def test_loo_examples():
    cfg = ClusterConfig(max_speakers=1, prune_threshold=0.0)
    resp = Responsibilities(np.ones((1, 1)), np.array([True]))
    row = loo_posteriors(0, np.array([[0.3, -1.0]]), resp, np.ones(2), np.ones(1), cfg)
    np.testing.assert_array_equal(row, [1.0])
    # symmetric: segment at the origin, two speakers mirrored around it
    Z = np.array([[0.0], [2.0], [-2.0]])
    resp = Responsibilities(np.array([[0.5, 0.5], [1.0, 0.0], [0.0, 1.0]]), np.ones(2, bool))
    cfg = ClusterConfig(max_speakers=2, prune_threshold=0.0)
    np.testing.assert_allclose(loo_posteriors(0, Z, resp, np.ones(1), np.full(2, 0.5), cfg),
                               [0.5, 0.5], atol=1e-15)
    with pytest.raises(IndexError):
        loo_posteriors(3, Z, resp, np.ones(1), np.full(2, 0.5), cfg)


def test_conjugate_oracle_projected():
    rng = np.random.default_rng(11)
    unbounded = DurationConfig(r=0.0, n0=None)
    for d in [1] * 100 + [16] * 100:
        n = int(rng.integers(1, 40))
        psi = rng.uniform(0.1, 20.0, d)
        z = rng.standard_normal((n, d)) * 3
        # textbook update with within-class I: Sigma_ml = I/N
        post_cov = np.linalg.inv(np.diag(1 / psi) + n * np.eye(d))
        post_mean = post_cov @ z.sum(axis=0)
        m = enroll_speaker(n, z.sum(axis=0), psi, unbounded, file_total=n)
        np.testing.assert_allclose(m.cov, np.diag(post_cov), rtol=0, atol=1e-12)
        np.testing.assert_allclose(m.mean, post_mean, rtol=0, atol=1e-12)


def test_conjugate_oracle_original_space():
    # full-covariance PLDA: map the diagonal posterior back and compare
    # with the conjugate update using Sigma_ml = Sigma_wc / N
    from conftest import random_spd
    from lgpdiar.plda import PldaParams, project
    rng = np.random.default_rng(5)
    for d in (1, 4, 16):
        wc, ac = random_spd(rng, d, 0.5), random_spd(rng, d, 0.5)
        p = PldaParams.from_covariances(wc, ac)
        n = 7
        x = rng.multivariate_normal(np.zeros(d), wc + ac, size=n)
        m = enroll_speaker(n, project(p, x).sum(axis=0), p.psi, DurationConfig(r=0.0), n)
        Uinv = np.linalg.inv(p.transform)
        ml = wc / n
        cov = ac - ac @ np.linalg.solve(ac + ml, ac)
        mean = ac @ np.linalg.solve(ac + ml, x.mean(axis=0))
        np.testing.assert_allclose(Uinv @ np.diag(m.cov) @ Uinv.T, cov, atol=1e-9)
        np.testing.assert_allclose(Uinv @ m.mean, mean, atol=1e-9)


def test_enroll_examples():
    d = DurationConfig(r=0.0)
    m = enroll_speaker(0, np.zeros(2), np.array([4.0, 2.0]), d, 10)
    np.testing.assert_array_equal(m.mean, 0.0)
    np.testing.assert_array_equal(m.cov, [4.0, 2.0])
    m = enroll_speaker(1, np.array([1.0]), np.array([4.0]), d, 10)
    assert m.mean[0] == pytest.approx(0.8) and m.cov[0] == pytest.approx(0.8)
    m = enroll_speaker(1e9, np.array([1e9]), np.array([4.0]), d, 1e9)
    assert m.mean[0] == pytest.approx(1.0, abs=1e-8) and m.cov[0] < 1e-8


@given(st.floats(2.01, 100.0), st.floats(0.0, 0.98), st.floats(0.001, 0.02))
def test_cov_grows_with_r(count, r, dr):
    psi = np.array([0.5, 3.0, 9.0])
    lo = enroll_speaker(count, np.ones(3), psi, DurationConfig(r=r), count)
    hi = enroll_speaker(count, np.ones(3), psi, DurationConfig(r=r + dr), count)
    assert np.all(hi.cov > lo.cov)
    assert np.all(lo.cov <= psi) and np.all(lo.cov >= 0)


def test_predictive_examples():
    from lgpdiar.cluster import SpeakerModel
    m = SpeakerModel(np.zeros(1), np.zeros(1))
    assert log_predictive([0.0], m) == pytest.approx(-0.5 * np.log(2 * np.pi))
    m = SpeakerModel(np.zeros(1), np.array([3.0]))
    assert log_predictive([2.0], m) == pytest.approx(-0.5 * (np.log(8 * np.pi) + 1))
    with pytest.raises(InactiveSpeaker):
        log_predictive([0.0], SpeakerModel(np.zeros(1), np.ones(1), active=False))


def numeric_log_predictive(z, mi, si):
    # trapezoid over the speaker mean, centred on the integrand's peak
    prec = 1 / si + 1.0
    c = (mi / si + z) / prec
    s = np.sqrt(1 / prec)
    m = np.linspace(c - 14 * s, c + 14 * s, 40001)
    f = (np.exp(-0.5 * (z - m) ** 2) / np.sqrt(2 * np.pi)
         * np.exp(-0.5 * (m - mi) ** 2 / si) / np.sqrt(2 * np.pi * si))
    return np.log(np.trapezoid(f, m))


def test_predictive_matches_marginalization():
    from lgpdiar.cluster import SpeakerModel
    rng = np.random.default_rng(9)
    for _ in range(50):
        mi, si, z = rng.normal(0, 3), rng.uniform(1e-3, 20), rng.normal(0, 4)
        got = log_predictive([z], SpeakerModel(np.array([mi]), np.array([si])))
        assert got == pytest.approx(numeric_log_predictive(z, mi, si), abs=1e-6)


def test_update_weights_examples():
    g = np.zeros((10, 2))
    g[:6, 0] = g[6:, 1] = 1
    w, act = update_weights(Responsibilities(g, np.ones(2, bool)), 1e-3)
    np.testing.assert_allclose(w, [0.6, 0.4])
    g = np.zeros((5, 3))
    g[:, 1] = 1
    w, act = update_weights(Responsibilities(g, np.ones(3, bool)), 1e-3)
    np.testing.assert_array_equal(w, [0, 1, 0])
    np.testing.assert_array_equal(act, [False, True, False])
    w, act = update_weights(Responsibilities(np.full((4, 4), 0.25), np.ones(4, bool)), 0.1)
    np.testing.assert_allclose(w, 0.25)
    assert act.all()


@given(st.integers(0, 10_000), st.floats(0.0, 0.19))
def test_prune_keeps_largest(seed, thr):
    rng = np.random.default_rng(seed)
    k = 5
    g = rng.dirichlet(np.full(k, 0.2), size=8)
    w, act = update_weights(Responsibilities(g, np.ones(k, bool)), thr)
    assert act[np.argmax(g.sum(axis=0))]
    assert abs(w[act].sum() - 1) < 1e-12 and np.all(w[~act] == 0)


def test_kmeans_examples():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(-10, 0.1, (20, 3)), rng.normal(10, 0.1, (15, 3))])
    lab = kmeans_init(X, 2, seed=1).labels()
    assert len(set(lab[:20])) == 1 and len(set(lab[20:])) == 1 and lab[0] != lab[-1]
    r = kmeans_init(X[:1], 10, seed=0)
    assert r.active.sum() == 1 and r.matrix[0].sum() == 1
    r = kmeans_init(X, 1, seed=0)
    assert np.all(r.labels() == 0)
    np.testing.assert_array_equal(kmeans_init(X, 4, 3).matrix, kmeans_init(X, 4, 3).matrix)
    with pytest.raises(EmptyInput):
        kmeans_init(np.zeros((0, 3)), 2, 0)


def two_speaker_data(seed, n=40, d=8, sep=6.0):
    rng = np.random.default_rng(seed)
    centres = rng.normal(0, sep, (2, d))
    truth = np.repeat([0, 1], n // 2)
    return centres[truth] + rng.standard_normal((n, d)), np.full(d, sep ** 2), truth


@pytest.mark.parametrize("update", ["sequential", "parallel"])
def test_cluster_finds_two_speakers(update, backend):
    # i.i.d. data, engine at its default r = 0.9
    for seed in range(10):
        Z, psi, truth = two_speaker_data(seed)
        res = cluster(Z, psi, ClusterConfig(seed=seed, update=update, max_iterations=100))
        assert res.log[-1].max_change < 1e-4
        assert res.n_active == 2
        lab = res.responsibilities.labels()
        assert len(set(lab[truth == 0])) == 1 and len(set(lab[truth == 1])) == 1


def test_cluster_single_segment_and_determinism():
    res = cluster(np.array([[0.5, 0.1]]), np.ones(2), ClusterConfig())
    assert res.n_active == 1
    assert res.responsibilities.matrix[0, res.responsibilities.active][0] == 1.0
    Z, psi, _ = two_speaker_data(1)
    a = cluster(Z, psi, ClusterConfig(seed=4))
    b = cluster(Z, psi, ClusterConfig(seed=4))
    assert a.responsibilities.matrix.tobytes() == b.responsibilities.matrix.tobytes()


@given(st.integers(0, 10_000), st.sampled_from(["sequential", "parallel"]),
       st.floats(0.0, 1.0))
def test_cluster_invariants(seed, update, r):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((int(rng.integers(1, 30)), 3)) * rng.uniform(0.5, 4)
    cfg = ClusterConfig(max_speakers=4, max_iterations=6, seed=seed, update=update,
                        prune_threshold=0.05, duration=DurationConfig(r=r))
    res = cluster(Z, np.full(3, 4.0), cfg)
    res.responsibilities.check(atol=1e-9)
    counts = [h.n_active for h in res.log]
    assert counts == sorted(counts, reverse=True)
    assert abs(res.weights[res.responsibilities.active].sum() - 1) < 1e-9
    for m in res.models:
        assert np.all(m.cov <= 4.0 + 1e-12) and np.all(m.cov >= 0)


def test_pruned_speakers_stay_pruned():
    Z, psi, _ = two_speaker_data(2)
    res = cluster(Z, psi, ClusterConfig(max_iterations=1, seed=0))
    again = cluster(Z, psi, ClusterConfig(), init=res.responsibilities)
    assert not np.any(again.responsibilities.active & ~res.responsibilities.active)


@given(st.integers(1, 50), st.floats(0.0, 1.0))
def test_duplicates_do_not_shrink_uncertainty_at_r1(count, extra):
    # r = 1 saturates the effective count at 1: copies add no confidence
    psi = np.array([0.5, 4.0])
    d = DurationConfig(r=1.0)
    base = enroll_speaker(count, np.ones(2), psi, d, 200)
    dup = enroll_speaker(count + 1 + extra, np.ones(2), psi, d, 200)
    np.testing.assert_array_equal(base.cov, dup.cov)
    assert base.eff_count == dup.eff_count == 1.0


def test_duplicate_can_lower_top_posterior_at_r1():
    # Counterexample to "a duplicate never lowers the top posterior": the
    # segment sits exactly on the shrunken mean psi/(psi+1) * zbar = 2, and
    # its copy drags zbar (hence the mean) away from it.
    cfg = ClusterConfig(max_speakers=2, prune_threshold=0.0, duration=DurationConfig(r=1.0))
    Z = np.array([[2.0], [4.0], [-4.0]])
    g = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    w, psi = np.array([0.5, 0.5]), np.ones(1)
    before = loo_posteriors(0, Z, Responsibilities(g, np.ones(2, bool)), psi, w, cfg)
    after = loo_posteriors(0, np.vstack([Z, Z[:1]]),
                           Responsibilities(np.vstack([g, g[:1]]), np.ones(2, bool)),
                           psi, w, cfg, file_total=4)
    assert after[0] < before[0] - 1e-4


def test_sequential_sweep_matches_reference():
    # numba sweep vs. the numpy sweep on a random state
    rng = np.random.default_rng(1)
    Z, psi, resp, w = random_instance(rng, n=20, k=5, d=6)
    counts, sums = resp.matrix.sum(0), resp.matrix.T @ Z
    lw = np.where(resp.active, np.log(np.maximum(w, 1e-300)), -np.inf)
    a = kernels.loo_sweep_numba(Z, resp.matrix.copy(), counts.copy(), sums.copy(), psi, lw,
                                resp.active, 0.9, 0.7)
    b = kernels.loo_sweep_numpy(Z, resp.matrix.copy(), counts.copy(), sums.copy(), psi, lw,
                                resp.active, 0.9, 0.7)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
