"""Brute-force estimation of calibration quantities on tiny tasks.

Relates the excess surrogate risk delta_s(v, mu) of a score vector v at a
conditional moment mu to the excess task risk delta_l of its decoded label.
The calibration curve zeta(eps) = inf { delta_s : delta_l >= eps } is
estimated by randomized search; the linear constant C (optimal labels carry
probability at least 1/C) is computed analytically where possible and by
randomized search otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .oracle import spmp_solve, spmp_solve_batch_simplex
from .projections import spmp_constants
from .tasks import ChainTask, MulticlassTask, OrdinalTask, RankingTask, Task

__all__ = [
    "CalibrationEstimate",
    "zeta_bruteforce",
    "constant_c",
    "ranking_d_bound",
]


@dataclass
class CalibrationEstimate:
    task: Task
    epsilons: list[float]
    zeta_lower: dict[float, float]
    constant_c: float | None = None
    constant_d_bound: float | None = None
    witnesses: dict[float, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def _excess_task_risk(task: Task, scores: np.ndarray, mu: np.ndarray) -> float:
    """delta_l = risk of the decoded label under mu minus the Bayes risk."""
    y_hat = task.decode(scores)
    a_mu = task.apply_loss_matrix(mu)
    best, _ = task.bayes_risk(mu)
    return float(task.embed(y_hat) @ a_mu) + task.offset - best


def _simplex_excess_surrogate(
    task: Task, V: np.ndarray, Mus: np.ndarray, K: int, eta: float | None
) -> np.ndarray:
    """Lower bounds on delta_s(v, mu) for stacked simplex instances.

    delta_s = Omega*(v) - v.mu - bayes(mu); Omega*(v) is bounded from below
    by the inner minimum at the oracle's averaged max player, keeping the
    estimate on the honest side.
    """
    mu_bars, _, _, _ = spmp_solve_batch_simplex(V, task, K=K, eta=eta)
    if isinstance(task, MulticlassTask):
        A_mu_bars, A_mus = -mu_bars, -Mus
    else:
        L = task.loss_matrix()
        A_mu_bars, A_mus = mu_bars @ L, Mus @ L
    omega_lower = A_mu_bars.min(axis=1) + np.einsum("ij,ij->i", V, mu_bars)
    bayes = A_mus.min(axis=1)
    return omega_lower - np.einsum("ij,ij->i", V, Mus) - bayes


def zeta_bruteforce(
    task: Task,
    eps_grid: list[float],
    search_budget: int = 20000,
    seed: int = 0,
    spmp_iters: int = 3000,
    scale: float = 2.0,
) -> CalibrationEstimate:
    """Randomized upper estimate of zeta(eps) with honest surrogate values.

    Samples score vectors v and moments mu, keeps the pairs whose decoded
    excess task risk reaches eps, and minimizes the (lower-bounded) excess
    surrogate risk over them.  The reported value can only overestimate the
    true infimum through limited search; the surrogate side itself is a
    certified lower bound, so reported zeta values never exceed the truth
    because of oracle error.
    """
    if task.n_labels() > 24:
        raise ValueError("output space too large for brute-force calibration")
    eps_grid = sorted(float(e) for e in eps_grid)
    rng = np.random.default_rng(seed)
    k = task.embed_dim
    if k > 6:
        raise ValueError("embedding dimension too large for the score search")

    if isinstance(task, (MulticlassTask, OrdinalTask)):
        V = rng.normal(size=(search_budget, k)) * scale
        Mus = rng.dirichlet(np.ones(k), size=search_budget)
        # local refinement: resample near the simplex corners where the
        # decoded label flips, the regime that pins the infimum
        V2 = rng.normal(size=(search_budget // 2, k)) * (scale / 4)
        Mus2 = rng.dirichlet(0.5 * np.ones(k), size=search_budget // 2)
        V = np.vstack([V, V2])
        Mus = np.vstack([Mus, Mus2])
        eta = 4.0 / spmp_constants(task).l_spmp
        ds = _simplex_excess_surrogate(task, V, Mus, spmp_iters, eta)
        dl = np.array([_excess_task_risk(task, V[i], Mus[i]) for i in range(len(V))])
    else:
        V = rng.normal(size=(search_budget, k)) * scale
        Mus = np.stack([_random_state(task, rng) for _ in range(search_budget)])
        ds = np.empty(len(V))
        dl = np.empty(len(V))
        for i in range(len(V)):
            res = spmp_solve(V[i], task, K=spmp_iters)
            low, _ = task.bayes_risk(res.mu_bar)
            omega_lower = low - task.offset + float(V[i] @ res.mu_bar)
            best, _ = task.bayes_risk(Mus[i])
            ds[i] = omega_lower - float(V[i] @ Mus[i]) - (best - task.offset)
            dl[i] = _excess_task_risk(task, V[i], Mus[i])

    estimate = CalibrationEstimate(task=task, epsilons=eps_grid, zeta_lower={})
    for eps in eps_grid:
        feasible = dl >= eps
        if not feasible.any():
            estimate.zeta_lower[eps] = math.inf
            continue
        idx = int(np.flatnonzero(feasible)[np.argmin(ds[feasible])])
        estimate.zeta_lower[eps] = max(float(ds[idx]), 0.0)
        estimate.witnesses[eps] = (V[idx].copy(), Mus[idx].copy())
    # the feasible sets are nested, so the estimates are monotone already;
    # enforce it anyway against ties broken by floating-point noise
    prev = 0.0
    for eps in eps_grid:
        estimate.zeta_lower[eps] = max(estimate.zeta_lower[eps], prev)
        prev = estimate.zeta_lower[eps]
    return estimate


def _random_state(task: Task, rng: np.random.Generator) -> np.ndarray:
    """Random interior point of the marginal polytope (label mixture)."""
    labels = list(task.labels())
    w = rng.dirichlet(np.ones(len(labels)))
    return np.sum([wi * task.embed(y) for wi, y in zip(w, labels)], axis=0)


def constant_c(task: Task, samples: int = 50000, seed: int = 0) -> float:
    """Smallest C such that some loss-minimizing label has probability 1/C.

    Multiclass 0-1 loss attains the bound at the uniform distribution
    (C = k); decomposable chain losses take the per-part value R.  Other
    losses are estimated by randomized search over label distributions.
    """
    if isinstance(task, MulticlassTask):
        return float(task.k)
    if isinstance(task, ChainTask):
        return float(task.R)
    if isinstance(task, RankingTask):
        return float(math.factorial(task.M))
    labels = list(task.labels())
    n = len(labels)
    loss = np.array([[task.loss(y, z) for z in labels] for y in labels])
    rng = np.random.default_rng(seed)
    worst = 1.0
    for alpha_conc in (1.0, 0.3, 3.0):
        alphas = rng.dirichlet(alpha_conc * np.ones(n), size=samples)
        risks = alphas @ loss.T
        mins = risks.min(axis=1, keepdims=True)
        opt = risks <= mins + 1e-12
        best_mass = np.where(opt, alphas, -np.inf).max(axis=1)
        worst = min(worst, float(best_mass.min()))
    if worst <= 0:
        raise ValueError("degenerate loss: an optimal label can carry zero mass")
    return 1.0 / worst


def ranking_d_bound(M: int) -> float:
    """Certify the M-permutation decomposition of uniform ranking marginals.

    The cyclic shifts sigma_j(i) = ((i + j - 1) mod M) + 1 with weight 1/M
    average to the uniform doubly stochastic matrix, witnessing that the
    uniform point needs only M vertices rather than M factorial.
    """
    if not 1 <= M <= 5:
        raise ValueError("M must be in 1..5")
    task = RankingTask(M)
    mean = np.zeros(task.embed_dim)
    for j in range(M):
        sigma = tuple(((i + j) % M) + 1 for i in range(M))
        mean += task.embed(sigma) / M
    target = np.full(task.embed_dim, 1.0 / M)
    if np.max(np.abs(mean - target)) > 1e-12:
        raise AssertionError("cyclic decomposition failed to reproduce uniform marginals")
    return float(M)
