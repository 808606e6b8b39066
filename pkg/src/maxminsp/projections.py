"""Bregman projections onto marginal polytopes and mirror-map constants.

Each projection solves  argmin_{mu in M}  -eta * mu^T grad + D_{-H}(mu, mu_prev)
for the polytope's entropy H:  softmax on the simplex, log-domain
sum-product on chain marginals, Sinkhorn row/column scaling on the
doubly stochastic matrices.  `grad` is always an ascent direction for the
caller's objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .tasks import ChainTask, LayoutError, MulticlassTask, OrdinalTask, RankingTask, Task

__all__ = [
    "MirrorMap",
    "SinkhornConvergenceError",
    "project_simplex_entropic",
    "project_chain_entropic",
    "project_birkhoff_sinkhorn",
    "spmp_constants",
    "PROB_FLOOR",
]

# interior floor applied after every projection; keeps logs finite while
# perturbing results far below test tolerances
PROB_FLOOR = 1e-12

SINKHORN_TOL = 1e-9
SINKHORN_MAX_ITER = 10_000


class SinkhornConvergenceError(RuntimeError):
    def __init__(self, residual: float, max_iter: int):
        super().__init__(
            f"Sinkhorn did not converge after {max_iter} iterations (residual {residual:.3e})"
        )
        self.residual = residual


def project_simplex_entropic(mu_prev: np.ndarray, grad: np.ndarray, eta: float) -> np.ndarray:
    """Exponentiated-gradient step: proportional to mu_prev * exp(eta*grad)."""
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise LayoutError("non-finite gradient")
    z = np.log(np.maximum(mu_prev, PROB_FLOOR)) + eta * grad
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    return np.maximum(p, PROB_FLOOR)


def project_chain_entropic(
    mu_prev: np.ndarray, grad: np.ndarray, eta: float, task: ChainTask
) -> np.ndarray:
    """Exact Bregman projection under the junction-tree chain entropy.

    H(mu) = sum_m H_S(mu_{m,m+1}) - sum_{interior m} H_S(mu_m); the
    projection equals marginal inference on a chain with log-potentials
    assembled from log(mu_prev) and eta*grad, computed by sum-product in
    the log domain.
    """
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise LayoutError("non-finite gradient")
    M, R = task.M, task.R
    gu, gp = task.split(grad)
    pu, pp = task.split(np.maximum(mu_prev, PROB_FLOOR))

    if M == 1:
        p = project_simplex_entropic(pu[0], gu[0], eta)
        return task.join(p[None, :], np.zeros((0, R, R)))

    # theta follows from the gradient of the junction-tree entropy at
    # mu_prev: pairwise blocks carry +log, interior unaries carry -log
    theta_u = eta * gu.copy()
    for m in range(1, M - 1):
        theta_u[m] -= np.log(pu[m])
    theta_p = eta * gp + np.log(pp)

    # forward/backward messages (log domain)
    alpha = np.zeros((M, R))
    alpha[0] = theta_u[0]
    for m in range(M - 1):
        alpha[m + 1] = theta_u[m + 1] + logsumexp(alpha[m][:, None] + theta_p[m], axis=0)
    beta = np.zeros((M, R))
    for m in range(M - 2, -1, -1):
        beta[m] = logsumexp(theta_p[m] + (theta_u[m + 1] + beta[m + 1])[None, :], axis=1)
    log_z = logsumexp(alpha[M - 1])

    out_u = np.exp(alpha + beta - log_z)
    out_u /= out_u.sum(axis=1, keepdims=True)
    out_p = np.empty((M - 1, R, R))
    for m in range(M - 1):
        lp = alpha[m][:, None] + theta_p[m] + (theta_u[m + 1] + beta[m + 1])[None, :] - log_z
        pm = np.exp(lp)
        pm /= pm.sum()
        out_p[m] = pm
    return np.maximum(task.join(out_u, out_p), PROB_FLOOR)


def project_birkhoff_sinkhorn(
    mu_prev: np.ndarray,
    grad: np.ndarray,
    eta: float,
    tol: float = SINKHORN_TOL,
    max_iter: int = SINKHORN_MAX_ITER,
) -> np.ndarray:
    """Sinkhorn-Knopp projection under the entry-wise entropy of marginals."""
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise LayoutError("non-finite gradient")
    Q = np.asarray(mu_prev, dtype=float)
    M = int(round(math.isqrt(Q.size)))
    Q = Q.reshape(M, M)
    G = grad.reshape(M, M)
    logK = np.log(np.maximum(Q, PROB_FLOOR)) + eta * G
    logK -= logK.max()
    K = np.exp(logK)

    residual = np.inf
    for _ in range(max_iter):
        K /= K.sum(axis=1, keepdims=True)
        K /= K.sum(axis=0, keepdims=True)
        residual = max(
            float(np.max(np.abs(K.sum(axis=1) - 1.0))),
            float(np.max(np.abs(K.sum(axis=0) - 1.0))),
        )
        if residual <= tol:
            break
    else:
        if residual > 10 * tol:
            raise SinkhornConvergenceError(residual, max_iter)
    return np.maximum(K.ravel(), PROB_FLOOR)


# ---------------------------------------------------------------------------
# entropies and smoothness constants


def _shannon(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def simplex_entropy(mu: np.ndarray) -> float:
    return _shannon(mu)


def chain_entropy(mu: np.ndarray, task: ChainTask) -> float:
    """Junction-tree entropy: pairwise entropies minus interior unaries."""
    u, p = task.split(mu)
    if task.M == 1:
        return _shannon(u[0])
    h = sum(_shannon(p[m]) for m in range(task.M - 1))
    h -= sum(_shannon(u[m]) for m in range(1, task.M - 1))
    return h


def birkhoff_entropy(mu: np.ndarray) -> float:
    return _shannon(mu)


@dataclass(frozen=True)
class MirrorMap:
    """Entropy and smoothness data driving the saddle-point solver."""

    kind: str
    entropy: Callable[[np.ndarray], float]
    sigma: float
    r2: float  # entropy range (max H - min H), shared by both players
    betas: tuple[float, float, float, float]
    l_spmp: float

    def __post_init__(self):
        b11, b12, b21, b22 = self.betas
        expected = max(b11 * self.r2, b22 * self.r2, b12 * self.r2, b21 * self.r2)
        if not math.isclose(self.l_spmp, expected, rel_tol=1e-9):
            raise ValueError("inconsistent smoothness bundle")


def polytope_diameter_sq(task: Task) -> float:
    """max ||phi(y) - phi(y')||_2^2 over the output space."""
    if isinstance(task, (MulticlassTask, OrdinalTask)):
        return 2.0
    if isinstance(task, ChainTask):
        return 4.0 * task.M - 2.0
    if isinstance(task, RankingTask):
        return 2.0 * task.M
    raise ValueError(f"unknown task {task!r}")


def spmp_constants(task: Task) -> MirrorMap:
    """Per-task mirror map with the theory step-size constant.

    Chains (and simplex tasks as length-1 chains) use
    max_m ||L_m||_2 * diam(M)^2 * M log R; rankings use M.
    """
    diam2 = polytope_diameter_sq(task)
    if isinstance(task, (MulticlassTask, OrdinalTask)):
        if isinstance(task, OrdinalTask):
            a_norm = float(np.linalg.norm(task.loss_matrix(), 2))
        else:
            a_norm = 1.0
        r2 = math.log(task.k)
        b = a_norm * diam2
        return MirrorMap(
            kind=task.kind,
            entropy=simplex_entropy,
            sigma=1.0,
            r2=r2,
            betas=(0.0, b, b, b),
            l_spmp=b * r2,
        )
    if isinstance(task, ChainTask):
        lm_norm = float(np.linalg.norm(task.part_loss_matrix(), 2))
        r2 = task.M * math.log(task.R)
        b = lm_norm * diam2
        return MirrorMap(
            kind=task.kind,
            entropy=lambda mu, _t=task: chain_entropy(mu, _t),
            sigma=1.0,
            r2=r2,
            betas=(0.0, b, b, b),
            l_spmp=b * r2,
        )
    if isinstance(task, RankingTask):
        return MirrorMap(
            kind=task.kind,
            entropy=birkhoff_entropy,
            sigma=1.0,
            r2=float(task.M),
            betas=(0.0, 1.0, 1.0, 1.0),
            l_spmp=float(task.M),
        )
    raise ValueError(f"unknown task {task!r}")


def project(task: Task, mu_prev: np.ndarray, grad: np.ndarray, eta: float) -> np.ndarray:
    """Dispatch a Bregman projection by the task's polytope layout."""
    if isinstance(task, (MulticlassTask, OrdinalTask)):
        return project_simplex_entropic(mu_prev, grad, eta)
    if isinstance(task, ChainTask):
        return project_chain_entropic(mu_prev, grad, eta, task)
    if isinstance(task, RankingTask):
        # near-vertex iterates slow Sinkhorn's linear rate; give the inner
        # loop room beyond the stand-alone default
        return project_birkhoff_sinkhorn(mu_prev, grad, eta, max_iter=10 * SINKHORN_MAX_ITER)
    raise ValueError(f"unknown task {task!r}")
