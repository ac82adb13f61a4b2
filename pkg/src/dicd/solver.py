"""Adam, the lambda ramp scheduler and the augmented-Lagrangian outer loop.

The solver never looks inside the model: it receives an objective bundle that
evaluates the smooth training loss (with the invariance penalty weighted by
the current ramp value) and the acyclicity function on a flat parameter
vector.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Protocol

import numpy as np

logger = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Raised when the objective becomes non-finite; carries the trace so far."""

    def __init__(self, message: str, trace: "FitTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass
class Schedule:
    K: int
    lambdaD: float

    def __post_init__(self):
        if self.K <= 0:
            raise ValueError(f"K must be positive, got {self.K}")


def lambda_schedule(k: float, sched: Schedule) -> float:
    """Three-phase ramp: linear rise over the first third, plateau, linear fall.

    Breakpoints sit at ``K/3`` and ``2K/3`` computed in exact arithmetic, so
    ``K`` need not be divisible by 3. Steps past ``K`` give 0.
    """
    K, peak = sched.K, sched.lambdaD
    if k < 0:
        raise ValueError(f"step must be nonnegative, got {k}")
    if k >= K:
        return 0.0
    # compare 3k against K to keep the breakpoints exact for integer steps
    if 3 * k <= K:
        return peak * (3 * k / K)
    if 3 * k <= 2 * K:
        return peak
    return peak * (3 * (K - k) / K)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params: np.ndarray, **kw) -> "AdamState":
        return cls(m=np.zeros_like(params), v=np.zeros_like(params), **kw)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> np.ndarray:
    """One bias-corrected Adam update; mutates ``state`` and returns new params."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    state.step += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1 - state.beta2) * grads * grads
    m_hat = state.m / (1 - state.beta1**state.step)
    v_hat = state.v / (1 - state.beta2**state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


class Objective(Protocol):
    """What the outer loop needs from a model."""

    def init(self) -> np.ndarray: ...

    def loss(self, x: np.ndarray, lam: float) -> tuple[float, np.ndarray]:
        """Smooth loss plus regularizers plus ``lam`` times the invariance penalty."""

    def h(self, x: np.ndarray) -> tuple[float, np.ndarray]: ...

    def project(self, x: np.ndarray, lr: float) -> np.ndarray:
        """Post-step cleanup (zeroed self-loops, optional proximal l1)."""

    def report(self, x: np.ndarray) -> dict:
        """Per-environment diagnostics recorded in the trace."""


@dataclass
class SolverConfig:
    h_tol: float = 1e-8
    rho_init: float = 1.0
    rho_mult: float = 10.0
    rho_max: float = 1e16
    progress_ratio: float = 0.25
    max_outer: int = 100
    inner_steps: int = 3000
    adam_lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lambdaD: float = 0.0
    # scheduler horizon K = schedule_outer * inner_steps unless set explicitly
    schedule_outer: int = 15
    schedule_K: int | None = None

    def __post_init__(self):
        if self.rho_mult <= 1:
            raise ValueError("rho_mult must exceed 1")
        if not 0 < self.progress_ratio < 1:
            raise ValueError("progress_ratio must lie in (0, 1)")
        for name in ("h_tol", "rho_init", "rho_max", "adam_lr", "inner_steps", "max_outer"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lambdaD < 0:
            raise ValueError("lambdaD must be nonnegative")

    @property
    def horizon(self) -> int:
        return self.schedule_K if self.schedule_K is not None else self.schedule_outer * self.inner_steps


@dataclass
class TraceRecord:
    outer_iter: int
    h: float
    loss: float
    per_env_loss: list
    per_env_penalty: list
    alpha: float
    rho: float
    accepted: bool
    inner_step: int
    wall_time: float


@dataclass
class FitTrace:
    records: list = field(default_factory=list)
    converged: bool = False
    best_outer: int = -1

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(asdict(r)) for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> "FitTrace":
        recs = [TraceRecord(**json.loads(line)) for line in text.splitlines() if line.strip()]
        return cls(records=recs)


def augmented_lagrangian_solve(
    objective: Objective, cfg: SolverConfig, x0: np.ndarray | None = None
) -> tuple[np.ndarray, FitTrace]:
    """Minimize ``loss + alpha*h + rho/2*h^2`` over a sequence of Adam solves.

    After each inner solve, insufficient progress on ``h`` (more than
    ``progress_ratio`` of the last accepted value) multiplies ``rho``; otherwise
    the iterate is accepted and ``alpha`` takes a dual ascent step. Returns the
    final iterate when ``h <= h_tol``, else the outer iterate with smallest ``h``.
    """
    x = objective.init() if x0 is None else np.array(x0, dtype=float)
    sched = Schedule(K=cfg.horizon, lambdaD=cfg.lambdaD) if cfg.lambdaD > 0 else None
    alpha, rho, h_prev = 0.0, cfg.rho_init, np.inf
    trace = FitTrace()
    k = 0
    best_x, best_h = None, np.inf
    t0 = time.perf_counter()

    for outer in range(cfg.max_outer):
        adam = AdamState.like(x, lr=cfg.adam_lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
        for _ in range(cfg.inner_steps):
            lam = lambda_schedule(k, sched) if sched is not None else 0.0
            f, g = objective.loss(x, lam)
            hv, hg = objective.h(x)
            total = f + alpha * hv + 0.5 * rho * hv * hv
            if not np.isfinite(total) or not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite objective at outer {outer}, step {k}", trace)
            x = adam_step(x, g + (alpha + rho * hv) * hg, adam)
            x = objective.project(x, cfg.adam_lr)
            k += 1

        h_new, _ = objective.h(x)
        lam = lambda_schedule(k, sched) if sched is not None else 0.0
        f, _ = objective.loss(x, lam)
        if not np.isfinite(f) or not np.isfinite(h_new):
            raise DivergenceError(f"non-finite objective after outer {outer}", trace)
        accepted = h_new <= cfg.progress_ratio * h_prev
        if accepted:
            alpha += rho * h_new
            h_prev = h_new
        else:
            rho *= cfg.rho_mult
        diag = objective.report(x)
        trace.records.append(
            TraceRecord(
                outer_iter=outer,
                h=float(h_new),
                loss=float(f),
                per_env_loss=diag.get("per_env_loss", []),
                per_env_penalty=diag.get("per_env_penalty", []),
                alpha=float(alpha),
                rho=float(rho),
                accepted=bool(accepted),
                inner_step=k,
                wall_time=time.perf_counter() - t0,
            )
        )
        logger.debug("outer %d: h=%.3e loss=%.4f rho=%.1e alpha=%.3e", outer, h_new, f, rho, alpha)
        if h_new < best_h:
            best_x, best_h = x.copy(), h_new
            trace.best_outer = outer
        if h_new <= cfg.h_tol:
            trace.converged = True
            trace.best_outer = outer
            return x, trace
        if rho >= cfg.rho_max:
            break

    return best_x, trace
