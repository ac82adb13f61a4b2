"""Worked examples solved exactly from population covariances.

Two small linear SEMs illustrate why single-environment least squares can
prefer wrong structures and why coefficients of wrong structures drift across
environments:

* ``toy``: five variables X, A, B, C, Y, three environments that change the
  noise variance of B and C.
* ``confounder``: three variables A, B, C, two environments that change the
  noise variance of B.

For each candidate structure and environment the module computes the summed
residual variance and a triplet of coefficients with population least
squares, and compares them to reference values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linear import penalty_env, population_ols, sem_covariance

TOY_NODES = "XABCY"
CONF_NODES = "ABC"


@dataclass(frozen=True)
class ToyCase:
    name: str
    edges: tuple  # (parent, child) name pairs
    # each triplet entry is an unordered node pair; the coefficient is read off
    # whichever direction the structure uses
    pairs: tuple
    reference: tuple  # per environment: (loss, (c1, c2, c3))


@dataclass
class ToyCheck:
    example: str
    case: str
    env: int
    expected_loss: float
    loss: float
    expected_coefs: tuple
    coefs: tuple
    tol: float

    @property
    def error(self) -> float:
        diffs = [abs(self.loss - self.expected_loss)]
        diffs += [abs(a - b) for a, b in zip(self.coefs, self.expected_coefs)]
        return max(diffs)

    @property
    def passed(self) -> bool:
        return self.error <= self.tol

    def line(self) -> str:
        got = ", ".join(f"{c:.2f}" for c in self.coefs)
        exp = ", ".join(f"{c:.2f}" for c in self.expected_coefs)
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} {self.example}/{self.case} e{self.env + 1}: "
            f"{self.loss:.2f} ({got}) vs {self.expected_loss:.2f} ({exp}) err={self.error:.3f}"
        )


_X_EDGES = (("X", "A"), ("X", "B"), ("X", "C"))
_Y_PAIRS = (("Y", "A"), ("Y", "B"), ("Y", "C"))

TOY_CASES = (
    ToyCase("truth", _X_EDGES + (("A", "Y"), ("Y", "B")), _Y_PAIRS,
            ((5.00, (0.25, 0.50, 0.00)), (7.00, (0.25, 0.50, 0.00)), (11.00, (0.25, 0.50, 0.00)))),
    ToyCase("r1c1", _X_EDGES + (("Y", "A"), ("B", "Y"), ("C", "Y")), _Y_PAIRS,
            ((4.57, (0.24, 1.14, -1.32)), (6.59, (0.24, 1.09, -1.19)), (10.60, (0.24, 1.07, -1.12)))),
    ToyCase("r1c2", _X_EDGES + (("B", "Y"), ("Y", "A"), ("Y", "C")), _Y_PAIRS,
            ((5.07, (0.24, 0.32, 0.00)), (7.14, (0.24, 0.23, 0.00)), (11.21, (0.24, 0.15, 0.00)))),
    ToyCase("r1c3", _X_EDGES + (("Y", "A"), ("Y", "B"), ("Y", "C")), _Y_PAIRS,
            ((5.07, (0.24, 0.50, 0.00)), (7.07, (0.24, 0.50, 0.00)), (11.07, (0.24, 0.50, 0.00)))),
    ToyCase("r2c1", _X_EDGES + (("Y", "A"), ("Y", "B"), ("C", "Y")), _Y_PAIRS,
            ((5.05, (0.24, 0.50, 0.10)), (7.06, (0.24, 0.50, 0.06)), (11.06, (0.24, 0.50, 0.03)))),
    ToyCase("r2c2", _X_EDGES + (("A", "Y"), ("B", "Y"), ("C", "Y")), _Y_PAIRS,
            ((4.57, (-0.23, 1.38, -1.54)), (6.59, (-0.24, 1.36, -1.44)), (10.59, (-0.24, 1.35, -1.39)))),
    ToyCase("r2c3", _X_EDGES + (("A", "Y"), ("B", "Y"), ("Y", "C")), _Y_PAIRS,
            ((5.12, (0.07, 0.29, 0.00)), (7.17, (0.14, 0.18, 0.00)), (11.21, (0.18, 0.11, 0.00)))),
)

_AB_AC_BC = (("A", "B"), ("A", "C"), ("B", "C"))

CONFOUNDER_CASES = (
    # the truth column lists its coefficients as (A-C, A-B, B-C)
    ToyCase("truth", (("A", "B"), ("A", "C"), ("B", "C")), (("A", "C"), ("A", "B"), ("B", "C")),
            ((6.00, (1.00, 0.50, 0.50)), (9.00, (1.00, 0.50, 0.50)))),
    ToyCase("g1", (("A", "B"), ("A", "C"), ("C", "B")), _AB_AC_BC,
            ((6.05, (0.00, 1.25, 0.40)), (8.00, (-0.75, 1.25, 1.00)))),
    ToyCase("g2", (("A", "B"), ("C", "A"), ("C", "B")), _AB_AC_BC,
            ((8.97, (0.00, 0.67, 0.40)), (11.22, (-0.75, 0.61, 1.00)))),
    ToyCase("g3", (("B", "A"), ("C", "A"), ("B", "C")), _AB_AC_BC,
            ((5.67, (0.00, 0.67, 1.50)), (9.96, (-0.29, 0.76, 0.90)))),
    ToyCase("g4", (("B", "A"), ("C", "A"), ("C", "B")), _AB_AC_BC,
            ((8.97, (0.00, 0.67, 0.40)), (11.56, (-0.29, 0.76, 0.55)))),
    ToyCase("g5", (("B", "A"), ("A", "C"), ("B", "C")), _AB_AC_BC,
            ((5.00, (1.00, 1.00, 0.50)), (9.20, (0.40, 1.00, 0.50)))),
)


def toy_weights() -> np.ndarray:
    idx = TOY_NODES.index
    w = np.zeros((5, 5))
    w[idx("X"), idx("A")] = 1.0
    w[idx("X"), idx("B")] = 1.0
    w[idx("Y"), idx("B")] = 0.5
    w[idx("X"), idx("C")] = 0.5
    w[idx("A"), idx("Y")] = 0.25
    return w


def toy_noise_vars() -> list:
    # noise variances in X, A, B, C, Y order; B and C change with the environment
    return [[1.0, 1.0, s, s, 1.0] for s in (1.0, 2.0, 4.0)]


def confounder_weights() -> np.ndarray:
    w = np.zeros((3, 3))
    w[0, 1] = 0.5  # A -> B
    w[0, 2] = 1.0  # A -> C
    w[1, 2] = 0.5  # B -> C
    return w


def confounder_noise_vars() -> list:
    return [[4.0, 1.0, 1.0], [4.0, 4.0, 1.0]]


def toy_covariances() -> list:
    return [sem_covariance(toy_weights(), v) for v in toy_noise_vars()]


def confounder_covariances() -> list:
    return [sem_covariance(confounder_weights(), v) for v in confounder_noise_vars()]


def structure_mask(edges, nodes: str) -> np.ndarray:
    mask = np.zeros((len(nodes), len(nodes)), dtype=int)
    for p, c in edges:
        mask[nodes.index(p), nodes.index(c)] = 1
    return mask


def pair_coefficient(coef: np.ndarray, mask: np.ndarray, pair, nodes: str) -> float:
    i, j = nodes.index(pair[0]), nodes.index(pair[1])
    if mask[i, j]:
        return float(coef[i, j])
    if mask[j, i]:
        return float(coef[j, i])
    return 0.0


def population_fit(sigma: np.ndarray, case: ToyCase, nodes: str) -> tuple[float, tuple]:
    """Summed residual variance and coefficient triplet of ``case`` under ``sigma``."""
    mask = structure_mask(case.edges, nodes)
    coef, resid = population_ols(sigma, mask)
    return float(resid.sum()), tuple(pair_coefficient(coef, mask, p, nodes) for p in case.pairs)


def _verify(example, cases, covs, nodes, tol) -> list:
    checks = []
    for case in cases:
        for e, (sigma, (ref_loss, ref_coefs)) in enumerate(zip(covs, case.reference)):
            loss, coefs = population_fit(sigma, case, nodes)
            checks.append(ToyCheck(example, case.name, e, ref_loss, loss, ref_coefs, coefs, tol))
    return checks


def verify_toy(tol: float = 0.02) -> list:
    return _verify("toy", TOY_CASES, toy_covariances(), TOY_NODES, tol)


def verify_confounder(tol: float = 0.02) -> list:
    return _verify("confounder", CONFOUNDER_CASES, confounder_covariances(), CONF_NODES, tol)


def sample_sem(weights: np.ndarray, noise_var, n: int, rng: np.random.Generator) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    z = rng.normal(size=(n, w.shape[0])) * np.sqrt(np.asarray(noise_var, dtype=float))
    return z @ np.linalg.inv(np.eye(w.shape[0]) - w)


def toy_penalties(n: int = 200_000, seed: int = 0) -> dict:
    """Per-environment invariance penalty of every toy structure at its pooled optimum.

    Each structure is fit once by least squares on the pooled sample of all
    environments; the penalty is then evaluated on each environment alone.
    """
    rng = np.random.default_rng(seed)
    envs = [sample_sem(toy_weights(), v, n, rng) for v in toy_noise_vars()]
    pooled = sum(x.T @ x for x in envs) / sum(x.shape[0] for x in envs)
    out = {}
    for case in TOY_CASES:
        coef, _ = population_ols(pooled, structure_mask(case.edges, TOY_NODES))
        out[case.name] = [penalty_env(coef, x) for x in envs]
    return out
