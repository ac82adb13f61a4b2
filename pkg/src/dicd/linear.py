"""Linear DICD: squared loss, the B-rescaling invariance penalty and the fit.

For an environment with data ``X`` (n x d) and coefficients ``A``::

    L(A)   = 1/(2n) ||X - X A||_F^2
    dL/dA  = C (A - I),             C = X^T X / n
    P(A)   = ||A * dL/dA||_F^2      (the B-derivative of L(A * B) at B = 1)
    dP/dA  = 2 M * G + 2 C (M * A), G = dL/dA, M = A * G

Everything depends on the data only through ``C``, so the fit works on
per-environment second-moment matrices.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .acyclicity import acyclicity_h
from .graphs import threshold
from .solver import FitTrace, SolverConfig, augmented_lagrangian_solve


class SingularSystemError(np.linalg.LinAlgError):
    def __init__(self, node: int):
        super().__init__(f"parent covariance of node {node} is singular")
        self.node = node


def _check(a_s: np.ndarray, xe: np.ndarray) -> None:
    d = a_s.shape[0]
    if a_s.shape != (d, d) or xe.ndim != 2 or xe.shape[1] != d:
        raise ValueError(f"dimension mismatch: A {a_s.shape}, X {xe.shape}")


def second_moment(xe: np.ndarray) -> np.ndarray:
    return xe.T @ xe / xe.shape[0]


def loss_env(a_s: np.ndarray, xe: np.ndarray) -> float:
    _check(a_s, xe)
    r = xe - xe @ a_s
    return 0.5 / xe.shape[0] * float((r * r).sum())


def grad_loss_env(a_s: np.ndarray, xe: np.ndarray) -> np.ndarray:
    _check(a_s, xe)
    g = xe.T @ (xe @ a_s - xe) / xe.shape[0]
    np.fill_diagonal(g, 0.0)
    return g


def penalty_env(a_s: np.ndarray, xe: np.ndarray) -> float:
    m = a_s * grad_loss_env(a_s, xe)
    return float((m * m).sum())


def grad_penalty_env(a_s: np.ndarray, xe: np.ndarray) -> np.ndarray:
    _check(a_s, xe)
    return _penalty_and_grad(a_s, second_moment(xe))[1]


def _loss_from_moment(a_s: np.ndarray, c: np.ndarray) -> tuple[float, np.ndarray]:
    d = a_s.shape[0]
    i_minus_a = np.eye(d) - a_s
    value = 0.5 * float(np.sum(i_minus_a * (c @ i_minus_a)))
    g = -c @ i_minus_a
    np.fill_diagonal(g, 0.0)
    return value, g


def _penalty_and_grad(a_s: np.ndarray, c: np.ndarray) -> tuple[float, np.ndarray]:
    _, g = _loss_from_moment(a_s, c)
    m = a_s * g
    grad = 2.0 * m * g + 2.0 * c @ (m * a_s)
    np.fill_diagonal(grad, 0.0)
    return float((m * m).sum()), grad


def population_ols(sigma: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-node least squares on a covariance matrix, restricted to ``mask``.

    Returns the coefficient matrix (column ``j`` regresses node ``j`` on its
    mask-parents) and the residual variance of every node.
    """
    sigma = np.asarray(sigma, dtype=float)
    mask = np.asarray(mask) != 0
    d = sigma.shape[0]
    if mask.shape != (d, d):
        raise ValueError(f"mask shape {mask.shape} does not match covariance {sigma.shape}")
    if np.any(np.diag(mask)):
        raise ValueError("mask must have a zero diagonal")
    coef = np.zeros((d, d))
    resid = np.diag(sigma).copy()
    for j in range(d):
        parents = np.flatnonzero(mask[:, j])
        if parents.size == 0:
            continue
        s_pp = sigma[np.ix_(parents, parents)]
        s_pj = sigma[parents, j]
        if np.linalg.cond(s_pp) > 1e12:
            raise SingularSystemError(j)
        beta = np.linalg.solve(s_pp, s_pj)
        coef[parents, j] = beta
        resid[j] = sigma[j, j] - s_pj @ beta
    return coef, resid


def sem_covariance(weights: np.ndarray, noise_var) -> np.ndarray:
    """Exact covariance of ``X = X W + z`` with independent zero-mean noise."""
    w = np.asarray(weights, dtype=float)
    inv = np.linalg.inv(np.eye(w.shape[0]) - w)
    return inv.T @ np.diag(np.asarray(noise_var, dtype=float)) @ inv


@dataclass
class LinearFitConfig:
    lambda1: float = 0.01
    lambdaD: float = 1.0
    threshold: float = 0.3
    l1_mode: str = "subgradient"
    weight_by_n: bool = False
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambdaD < 0 or self.threshold < 0:
            raise ValueError("lambda1, lambdaD and threshold must be nonnegative")
        if self.l1_mode not in ("subgradient", "proximal"):
            raise ValueError(f"unknown l1_mode {self.l1_mode!r}")
        self.solver.lambdaD = self.lambdaD

    def to_dict(self) -> dict:
        return asdict(self)


class LinearObjective:
    """Objective bundle for the augmented-Lagrangian solver."""

    def __init__(self, envs: list[np.ndarray], cfg: LinearFitConfig):
        if not envs:
            raise ValueError("dataset has no environments")
        d = envs[0].shape[1]
        if any(x.ndim != 2 or x.shape[1] != d for x in envs):
            raise ValueError("all environments must share the same number of columns")
        self.d = d
        self.cfg = cfg
        self.moments = [second_moment(np.asarray(x, dtype=float)) for x in envs]
        ns = np.array([x.shape[0] for x in envs], dtype=float)
        if cfg.weight_by_n:
            self.env_weights = len(envs) * ns / ns.sum()
        else:
            self.env_weights = np.ones(len(envs))

    def init(self) -> np.ndarray:
        return np.zeros(self.d * self.d)

    def _mat(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(self.d, self.d)

    def loss(self, x: np.ndarray, lam: float) -> tuple[float, np.ndarray]:
        a = self._mat(x)
        value = 0.0
        grad = np.zeros_like(a)
        for wt, c in zip(self.env_weights, self.moments):
            f, g = _loss_from_moment(a, c)
            value += wt * f
            grad += wt * g
            if lam > 0:
                p, gp = _penalty_and_grad(a, c)
                value += lam * wt * p
                grad += lam * wt * gp
        if self.cfg.lambda1 > 0 and self.cfg.l1_mode == "subgradient":
            value += self.cfg.lambda1 * float(np.abs(a).sum())
            grad += self.cfg.lambda1 * np.sign(a)
        np.fill_diagonal(grad, 0.0)
        return value, grad.ravel()

    def h(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        value, grad = acyclicity_h(self._mat(x))
        return value, grad.ravel()

    def project(self, x: np.ndarray, lr: float) -> np.ndarray:
        a = self._mat(x).copy()
        if self.cfg.l1_mode == "proximal" and self.cfg.lambda1 > 0:
            a = np.sign(a) * np.maximum(np.abs(a) - lr * self.cfg.lambda1, 0.0)
        np.fill_diagonal(a, 0.0)
        return a.ravel()

    def report(self, x: np.ndarray) -> dict:
        a = self._mat(x)
        return {
            "per_env_loss": [_loss_from_moment(a, c)[0] for c in self.moments],
            "per_env_penalty": [_penalty_and_grad(a, c)[0] for c in self.moments],
        }


@dataclass
class LinearFitResult:
    a_s: np.ndarray
    trace: FitTrace
    config: LinearFitConfig
    wall_time_sec: float
    per_env_loss: list
    per_env_penalty: list
    h_final: float

    @property
    def converged(self) -> bool:
        return self.trace.converged

    def binary(self) -> np.ndarray:
        return threshold(self.a_s, self.config.threshold)

    def to_dict(self, seed: int | None = None) -> dict:
        return {
            "model": "linear",
            "weighted_adjacency": self.a_s.tolist(),
            "binary_adjacency": self.binary().tolist(),
            "h_final": self.h_final,
            "per_env_loss": self.per_env_loss,
            "per_env_penalty": self.per_env_penalty,
            "config_echo": self.config.to_dict(),
            "seed": seed,
            "wall_time_sec": self.wall_time_sec,
            "converged": self.converged,
        }


def fit_linear(ds, cfg: LinearFitConfig | None = None) -> LinearFitResult:
    """Fit the linear model on a dataset or a list of per-environment matrices.

    With ``lambdaD = 0`` this is NOTEARS optimized by Adam.
    """
    cfg = cfg or LinearFitConfig()
    envs = ds.envs if hasattr(ds, "envs") else ds
    obj = LinearObjective(envs, cfg)
    t0 = time.perf_counter()
    x, trace = augmented_lagrangian_solve(obj, cfg.solver)
    a = obj._mat(x).copy()
    diag = obj.report(x)
    return LinearFitResult(
        a_s=a,
        trace=trace,
        config=cfg,
        wall_time_sec=time.perf_counter() - t0,
        per_env_loss=diag["per_env_loss"],
        per_env_penalty=diag["per_env_penalty"],
        h_final=acyclicity_h(a)[0],
    )
