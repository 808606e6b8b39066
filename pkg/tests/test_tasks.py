import numpy as np
import pytest

from maxminsp.tasks import (
    ChainTask,
    InvalidLabelError,
    LayoutError,
    MulticlassTask,
    OrdinalTask,
    RankingTask,
    make_task,
)


def brute_force_decode(task, v):
    """Reference decoder: enumerate labels, first (lexicographic) maximizer."""
    best_y, best_val = None, -np.inf
    for y in task.labels():
        val = float(task.embed(y) @ v)
        if val > best_val + 1e-12:
            best_y, best_val = y, val
    return best_y, best_val


# ---------------------------------------------------------------------------
# multiclass


def test_multiclass_loss_values():
    t = MulticlassTask(k=4)
    assert t.loss(2, 2) == 0.0
    assert t.loss(2, 3) == 1.0
    assert t.loss(1, 4) == 1.0


def test_multiclass_embed_roundtrip():
    t = MulticlassTask(k=5)
    for y in t.labels():
        assert t.decode_embedding(t.embed(y)) == y


def test_multiclass_decode_ties_prefer_low_label():
    t = MulticlassTask(k=3)
    assert t.decode(np.zeros(3)) == 1
    assert t.decode(np.array([0.0, 1.0, 1.0])) == 2


def test_multiclass_bayes_risk_uniform():
    t = MulticlassTask(k=3)
    value, y = t.bayes_risk(t.uniform_state())
    assert abs(value - 2.0 / 3.0) < 1e-12
    assert y == 1


def test_multiclass_invalid_labels():
    t = MulticlassTask(k=3)
    for y in (0, 4, "a", 1.5):
        with pytest.raises(InvalidLabelError):
            t.check_label(y)


def test_multiclass_state_validation():
    t = MulticlassTask(k=3)
    with pytest.raises(LayoutError):
        t.check_state(np.array([0.5, 0.6, 0.1]))
    with pytest.raises(LayoutError):
        t.check_state(np.array([0.5, 0.5]))


# ---------------------------------------------------------------------------
# ordinal


def test_ordinal_loss_is_absolute_difference():
    t = OrdinalTask(k=5)
    for y in t.labels():
        for z in t.labels():
            assert t.loss(y, z) == abs(y - z)


def test_ordinal_bayes_risk_is_weighted_median():
    t = OrdinalTask(k=5)
    rng = np.random.default_rng(0)
    for _ in range(200):
        mu = rng.dirichlet(np.ones(5))
        value, y = t.bayes_risk(mu)
        risks = [sum(mu[z - 1] * abs(c - z) for z in t.labels()) for c in t.labels()]
        assert abs(value - min(risks)) < 1e-12
        assert abs(risks[y - 1] - min(risks)) < 1e-12


# ---------------------------------------------------------------------------
# chain


def test_chain_embedding_layout():
    t = ChainTask(M=3, R=2)
    e = t.embed((1, 2, 1))
    u, p = t.split(e)
    assert u.shape == (3, 2) and p.shape == (2, 2, 2)
    assert u[0, 0] == 1 and u[1, 1] == 1 and u[2, 0] == 1
    assert p[0, 0, 1] == 1 and p[1, 1, 0] == 1
    assert e.sum() == 3 + 2


def test_chain_loss_is_normalized_hamming():
    t = ChainTask(M=4, R=3)
    rng = np.random.default_rng(1)
    for _ in range(100):
        y = t.random_label(rng)
        z = t.random_label(rng)
        expected = sum(a != b for a, b in zip(y, z)) / 4
        assert abs(t.loss(y, z) - expected) < 1e-12


def test_chain_decode_matches_enumeration():
    rng = np.random.default_rng(2)
    t = ChainTask(M=4, R=3)
    for _ in range(300):
        v = rng.normal(size=t.embed_dim)
        y = t.decode(v)
        y_ref, val_ref = brute_force_decode(t, v)
        assert abs(float(t.embed(y) @ v) - val_ref) < 1e-9
        assert y == y_ref


def test_chain_decode_tie_break_lexicographic():
    t = ChainTask(M=3, R=2)
    assert t.decode(np.zeros(t.embed_dim)) == (1, 1, 1)


def test_chain_state_consistency_check():
    t = ChainTask(M=2, R=2)
    mu = t.uniform_state()
    t.check_state(mu)
    u, p = t.split(mu)
    p[0, 0, 0] += 0.2
    p[0, 1, 1] -= 0.2
    with pytest.raises(LayoutError):
        t.check_state(t.join(u, p))


def test_chain_bayes_risk_against_enumeration():
    t = ChainTask(M=2, R=3)
    rng = np.random.default_rng(3)
    labels = list(t.labels())
    for _ in range(100):
        w = rng.dirichlet(np.ones(len(labels)))
        mu = np.sum([wi * t.embed(y) for wi, y in zip(w, labels)], axis=0)
        value, y = t.bayes_risk(mu)
        ref = min(
            sum(wi * t.loss(c, z) for wi, z in zip(w, labels)) for c in labels
        )
        assert abs(value - ref) < 1e-9


# ---------------------------------------------------------------------------
# ranking


def test_ranking_embed_is_permutation_matrix():
    t = RankingTask(M=4)
    y = (2, 4, 1, 3)
    P = t.embed(y).reshape(4, 4)
    assert (P.sum(axis=0) == 1).all() and (P.sum(axis=1) == 1).all()
    assert t.decode_embedding(t.embed(y)) == y


def test_ranking_loss_is_normalized_hamming():
    t = RankingTask(M=4)
    rng = np.random.default_rng(4)
    for _ in range(100):
        y = t.random_label(rng)
        z = t.random_label(rng)
        expected = sum(a != b for a, b in zip(y, z)) / 4
        assert abs(t.loss(y, z) - expected) < 1e-12


def test_ranking_decode_matches_enumeration():
    t = RankingTask(M=4)
    rng = np.random.default_rng(5)
    for _ in range(200):
        v = rng.normal(size=16)
        y = t.decode(v)
        y_ref, val_ref = brute_force_decode(t, v)
        assert abs(float(t.embed(y) @ v) - val_ref) < 1e-9
        assert y == y_ref


def test_ranking_decode_tie_break_lexicographic():
    t = RankingTask(M=3)
    assert t.decode(np.zeros(9)) == (1, 2, 3)


def test_ranking_invalid_permutation():
    t = RankingTask(M=3)
    with pytest.raises(InvalidLabelError):
        t.check_label((1, 1, 2))


# ---------------------------------------------------------------------------
# factory and shared behavior


def test_make_task_dispatch():
    assert isinstance(make_task("multiclass", k=3), MulticlassTask)
    assert isinstance(make_task("ordinal", k=3), OrdinalTask)
    assert isinstance(make_task("chain", M=2, R=2), ChainTask)
    assert isinstance(make_task("ranking", M=3), RankingTask)
    with pytest.raises(ValueError):
        make_task("nope")


def test_uniform_states_are_valid():
    for t in (
        MulticlassTask(k=4),
        OrdinalTask(k=3),
        ChainTask(M=3, R=2),
        RankingTask(M=4),
    ):
        t.check_state(t.uniform_state())


def test_loss_decomposition_matches_direct_loss():
    # loss(y, z) must equal phi(y)^T A phi(z) + offset for every task
    rng = np.random.default_rng(6)
    for t in (
        MulticlassTask(k=4),
        OrdinalTask(k=4),
        ChainTask(M=3, R=2),
        RankingTask(M=3),
    ):
        for _ in range(50):
            y, z = t.random_label(rng), t.random_label(rng)
            direct = float(t.embed(y) @ t.apply_loss_matrix(t.embed(z))) + t.offset
            assert abs(t.loss(y, z) - direct) < 1e-12
