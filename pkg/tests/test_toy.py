import numpy as np
import pytest

from dicd.linear import sem_covariance
from dicd.toy import (
    CONFOUNDER_CASES, TOY_CASES, confounder_covariances, toy_covariances, toy_weights, verify_confounder,
    verify_toy,
)


def test_toy_covariance_matches_sampling():
    rng = np.random.default_rng(0)
    n = 400_000
    s2 = 2.0
    x = rng.normal(size=n)
    a = x + rng.normal(size=n)
    y = a / 4 + rng.normal(size=n)
    b = x + y / 2 + rng.normal(size=n) * np.sqrt(s2)
    c = x / 2 + rng.normal(size=n) * np.sqrt(s2)
    emp = np.cov(np.column_stack([x, a, b, c, y]), rowvar=False)
    assert np.allclose(emp, toy_covariances()[1], atol=0.03)


def test_truth_losses_are_exact():
    for check in verify_toy():
        if check.case == "truth":
            assert check.loss == pytest.approx(check.expected_loss, abs=1e-12)


def test_confounder_all_cells_match():
    assert all(c.passed for c in verify_confounder())
    assert len(verify_confounder()) == 2 * len(CONFOUNDER_CASES)


def test_truth_is_a_loss_lower_bound_among_listed_structures():
    for e, sigma in enumerate(toy_covariances()):
        from dicd.toy import population_fit, TOY_NODES
        losses = {c.name: population_fit(sigma, c, TOY_NODES)[0] for c in TOY_CASES}
        assert min(losses, key=losses.get) == "truth"


def test_cell_count():
    assert len(verify_toy()) == 3 * len(TOY_CASES)
    assert len(confounder_covariances()) == 2
    assert np.allclose(sem_covariance(toy_weights(), np.ones(5)), sem_covariance(toy_weights(), [1] * 5))
