import numpy as np
import pytest

from maxminsp.projections import (
    MirrorMap,
    SinkhornConvergenceError,
    chain_entropy,
    polytope_diameter_sq,
    project,
    project_birkhoff_sinkhorn,
    project_chain_entropic,
    project_simplex_entropic,
    simplex_entropy,
    spmp_constants,
)
from maxminsp.tasks import ChainTask, LayoutError, MulticlassTask, OrdinalTask, RankingTask


def bregman_objective(mu, mu_prev, grad, eta, entropy):
    """-eta mu.grad + D(mu, mu_prev) for a Shannon-type entropy."""
    mu = np.asarray(mu)
    d = -entropy(mu) + entropy(mu_prev)
    # gradient of -H for Shannon entropy is log(mu) + 1
    d -= float((np.log(mu_prev) + 1.0) @ (mu - mu_prev))
    return -eta * float(mu @ grad) + d


def gibbs_chain_projection(task, mu_prev, grad, eta):
    """Brute-force projection: Gibbs weights over all sequences.

    The minimizer of -eta mu.u + D(mu, mu_prev) under the chain entropy is
    the marginal vector of the distribution with log-weights
    theta(y) = eta u.phi(y) + grad of H at mu_prev dotted with phi(y).
    """
    pu, pp = task.split(mu_prev)
    logw = []
    labels = list(task.labels())
    for y in labels:
        lw = eta * float(task.embed(y) @ grad)
        for m in range(task.M - 1):
            lw += np.log(pp[m, y[m] - 1, y[m + 1] - 1])
        for m in range(1, task.M - 1):
            lw -= np.log(pu[m, y[m] - 1])
        logw.append(lw)
    logw = np.array(logw)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    return np.sum([wi * task.embed(y) for wi, y in zip(w, labels)], axis=0)


def random_chain_state(task, rng):
    labels = list(task.labels())
    w = rng.dirichlet(np.ones(len(labels)))
    mu = np.sum([wi * task.embed(y) for wi, y in zip(w, labels)], axis=0)
    return np.maximum(mu, 1e-9)


# ---------------------------------------------------------------------------
# simplex


def test_simplex_zero_gradient_is_fixed_point():
    mu = np.full(3, 1.0 / 3.0)
    out = project_simplex_entropic(mu, np.zeros(3), 1.0)
    assert np.allclose(out, mu, atol=1e-12)


def test_simplex_closed_form_update():
    out = project_simplex_entropic(np.full(2, 0.5), np.array([np.log(3.0), 0.0]), 1.0)
    assert np.allclose(out, [0.75, 0.25], atol=1e-12)


def test_simplex_matches_numeric_bregman_minimizer():
    rng = np.random.default_rng(0)
    for _ in range(500):
        k = int(rng.integers(2, 6))
        mu_prev = rng.dirichlet(np.ones(k))
        mu_prev = np.maximum(mu_prev, 1e-6)
        mu_prev /= mu_prev.sum()
        grad = rng.normal(size=k)
        eta = float(rng.uniform(0.1, 2.0))
        out = project_simplex_entropic(mu_prev, grad, eta)
        f_out = bregman_objective(out, mu_prev, grad, eta, simplex_entropy)
        # projected gradient descent on the same objective
        x = np.full(k, 1.0 / k)
        for _ in range(4000):
            g = eta * grad - (np.log(x) - np.log(mu_prev))
            x = x * np.exp(0.2 * g)
            x /= x.sum()
        f_ref = bregman_objective(x, mu_prev, grad, eta, simplex_entropy)
        assert f_out <= f_ref + 1e-6


def test_simplex_rejects_nonfinite_gradient():
    with pytest.raises(LayoutError):
        project_simplex_entropic(np.full(2, 0.5), np.array([np.inf, 0.0]), 1.0)


def test_simplex_monotone_in_eta():
    rng = np.random.default_rng(1)
    for _ in range(50):
        mu_prev = rng.dirichlet(np.ones(4))
        grad = rng.normal(size=4)
        vals = [
            float(project_simplex_entropic(mu_prev, grad, eta) @ grad)
            for eta in (0.1, 1.0, 10.0)
        ]
        assert vals[0] <= vals[1] + 1e-12 and vals[1] <= vals[2] + 1e-12


# ---------------------------------------------------------------------------
# chain


def test_chain_zero_gradient_is_fixed_point():
    task = ChainTask(M=2, R=2)
    rng = np.random.default_rng(2)
    mu = random_chain_state(task, rng)
    out = project_chain_entropic(mu, np.zeros(task.embed_dim), 1.0, task)
    assert np.max(np.abs(out - mu)) < 1e-10


def test_chain_matches_gibbs_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(500):
        M = int(rng.integers(2, 4))
        R = int(rng.integers(2, 4))
        task = ChainTask(M=M, R=R)
        mu_prev = random_chain_state(task, rng)
        grad = rng.normal(size=task.embed_dim)
        eta = float(rng.uniform(0.2, 2.0))
        out = project_chain_entropic(mu_prev, grad, eta, task)
        ref = gibbs_chain_projection(task, mu_prev, grad, eta)
        assert np.max(np.abs(out - ref)) < 1e-9


def test_chain_output_locally_consistent():
    rng = np.random.default_rng(4)
    task = ChainTask(M=3, R=3)
    for _ in range(100):
        mu_prev = random_chain_state(task, rng)
        grad = rng.normal(size=task.embed_dim) * 3
        out = project_chain_entropic(mu_prev, grad, 1.0, task)
        task.check_state(out)  # includes 1e-8 marginalization checks


def test_chain_length_one_reduces_to_simplex():
    task = ChainTask(M=1, R=4)
    rng = np.random.default_rng(5)
    mu_prev = np.maximum(rng.dirichlet(np.ones(4)), 1e-9)
    grad = rng.normal(size=4)
    out = project_chain_entropic(mu_prev, grad, 0.7, task)
    ref = project_simplex_entropic(mu_prev, grad, 0.7)
    assert np.allclose(out, ref, atol=1e-12)


# ---------------------------------------------------------------------------
# Birkhoff / Sinkhorn


def test_sinkhorn_uniform_fixed_point():
    M = 4
    mu = np.full(M * M, 1.0 / M)
    out = project_birkhoff_sinkhorn(mu, np.zeros(M * M), 1.0)
    assert np.allclose(out, mu, atol=1e-9)


def test_sinkhorn_large_diagonal_approaches_identity():
    M = 3
    mu = np.full(M * M, 1.0 / M)
    grad = 10.0 * np.eye(M).ravel()
    out = project_birkhoff_sinkhorn(mu, grad, 1.0).reshape(M, M)
    off_mass = out.sum() - np.trace(out)
    assert off_mass / M < 0.05


def test_sinkhorn_outputs_doubly_stochastic():
    rng = np.random.default_rng(6)
    for _ in range(200):
        M = 4
        mu = rng.dirichlet(np.ones(M), size=M).ravel()
        mu = np.maximum(mu, 1e-6)
        grad = rng.normal(size=M * M)
        out = project_birkhoff_sinkhorn(mu, grad, 1.0).reshape(M, M)
        assert np.max(np.abs(out.sum(axis=0) - 1.0)) <= 1e-9 + 1e-12
        assert np.max(np.abs(out.sum(axis=1) - 1.0)) <= 1e-9 + 1e-12


def test_sinkhorn_residual_nonincreasing():
    rng = np.random.default_rng(7)
    M = 5
    K = np.exp(rng.normal(size=(M, M)))
    residuals = []
    for it in range(200):
        K /= K.sum(axis=1, keepdims=True)
        K /= K.sum(axis=0, keepdims=True)
        if (it + 1) % 10 == 0:
            r = max(
                np.abs(K.sum(axis=1) - 1.0).max(), np.abs(K.sum(axis=0) - 1.0).max()
            )
            residuals.append(r)
    for a, b in zip(residuals, residuals[1:]):
        assert b <= a + 1e-15


def test_sinkhorn_convergence_failure_carries_residual():
    rng = np.random.default_rng(9)
    M = 4
    mu = np.maximum(rng.dirichlet(np.ones(M), size=M).ravel(), 1e-6)
    grad = rng.normal(size=M * M) * 3
    with pytest.raises(SinkhornConvergenceError) as exc:
        project_birkhoff_sinkhorn(mu, grad, 1.0, tol=1e-15, max_iter=2)
    assert exc.value.residual > 0


# ---------------------------------------------------------------------------
# constants


def test_ranking_constant_is_m():
    mm = spmp_constants(RankingTask(M=5))
    assert mm.l_spmp == 5.0


def test_chain_m1_r2_constant():
    mm = spmp_constants(ChainTask(M=1, R=2))
    assert abs(mm.l_spmp - 2.0 * np.log(2.0)) < 1e-12


def test_multiclass_constant_positive_finite():
    mm = spmp_constants(MulticlassTask(k=3))
    assert 0 < mm.l_spmp < np.inf
    assert abs(mm.l_spmp - 2.0 * np.log(3.0)) < 1e-12


def test_ordinal_constant_uses_spectral_norm():
    task = OrdinalTask(k=4)
    mm = spmp_constants(task)
    a_norm = np.linalg.norm(task.loss_matrix(), 2)
    assert abs(mm.l_spmp - a_norm * 2.0 * np.log(4.0)) < 1e-12


def test_mirror_map_consistency_enforced():
    with pytest.raises(ValueError):
        MirrorMap(
            kind="multiclass", entropy=simplex_entropy, sigma=1.0, r2=1.0,
            betas=(0.0, 1.0, 1.0, 1.0), l_spmp=99.0,
        )


def test_entropy_zero_at_vertices():
    task = ChainTask(M=3, R=2)
    for y in task.labels():
        assert abs(chain_entropy(task.embed(y), task)) < 1e-12
    assert abs(simplex_entropy(np.array([1.0, 0.0, 0.0]))) < 1e-12


def test_diameters():
    assert polytope_diameter_sq(MulticlassTask(k=7)) == 2.0
    assert polytope_diameter_sq(ChainTask(M=3, R=2)) == 10.0
    assert polytope_diameter_sq(RankingTask(M=4)) == 8.0


def test_project_dispatch_outputs_valid_states():
    rng = np.random.default_rng(8)
    for task in (MulticlassTask(k=3), ChainTask(M=3, R=2), RankingTask(M=3)):
        mu = task.uniform_state()
        grad = rng.normal(size=task.embed_dim)
        out = project(task, mu, grad, 0.5)
        task.check_state(out)
