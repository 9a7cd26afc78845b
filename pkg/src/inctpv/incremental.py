"""Incremental TpV machinery: p and lambda schedules, incTpV, and incDG.

The outer loop decreases the sparsity exponent p multiplicatively while
adapting lambda from the ratio of successive objective values. incDG applies
a guess operator to the iterate before each inner solve; a zero budget skips
the solve, so an all-zero scheduler reduces to composing the guesses.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .image import tpv_objective
from .operators import LinearOperator
from .reweight import IrConfig, ir_solve


class DegenerateObjectiveError(ValueError):
    """Raised when a lambda update would divide by a non-positive objective."""


def update_p(p_h: float, alpha_p: float) -> float:
    """Next sparsity exponent p^(h+1) = p^(h) * alpha_p."""
    if not 0.0 < alpha_p < 1.0:
        raise ValueError(f"alpha_p must lie in (0, 1), got {alpha_p}")
    if not 0.0 < p_h <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p_h}")
    return p_h * alpha_p


def update_lambda(h: int, lambda_h: float, f_h: float, f_prev: float, lambda0: float) -> float:
    """Next regularization weight: lambda0/2 after the first step, then
    lambda_h * f_h / f_prev from consecutive objective values."""
    if h == 0:
        return lambda0 / 2.0
    if f_prev <= 0.0:
        raise DegenerateObjectiveError(
            f"objective ratio needs f_prev > 0, got {f_prev} at step {h}"
        )
    return lambda_h * f_h / f_prev


@dataclass(frozen=True)
class IncrementalConfig:
    scheduler: tuple
    alpha_p: float
    lambda0: float
    p0: float = 1.0
    k_cp: int = 5
    xi: float = 2e-3
    tau_x: float = 1e-7
    tau_f: float = 1e-7

    def __post_init__(self):
        object.__setattr__(self, "scheduler", tuple(int(k) for k in self.scheduler))
        if any(k < 0 for k in self.scheduler):
            raise ValueError("scheduler budgets must be >= 0")
        if not 0.0 < self.alpha_p < 1.0:
            raise ValueError(f"alpha_p must lie in (0, 1), got {self.alpha_p}")
        if self.lambda0 <= 0.0:
            raise ValueError(f"lambda0 must be positive, got {self.lambda0}")
        if not 0.0 < self.p0 <= 1.0:
            raise ValueError(f"p0 must lie in (0, 1], got {self.p0}")

    @property
    def H(self) -> int:
        return len(self.scheduler)


@dataclass
class TraceStep:
    h: int
    p: float
    lam: float
    f: float
    cp_iters: int
    wall_time: float


@dataclass
class IncrementalTrace:
    """Per-step schedule record, plus the objective at the starting guess."""

    f_init: float = 0.0
    steps: list = field(default_factory=list)
    degenerate_stop: bool = False
    snapshots: list = None

    @property
    def p_values(self):
        return [s.p for s in self.steps]

    @property
    def lambda_values(self):
        return [s.lam for s in self.steps]

    @property
    def total_cp_iters(self):
        return sum(s.cp_iters for s in self.steps)

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            head = {"record": "init", "f_init": self.f_init, "degenerate_stop": self.degenerate_stop}
            fh.write(json.dumps(head) + "\n")
            for s in self.steps:
                row = {"record": "step", "h": s.h, "p": s.p, "lam": s.lam, "f": s.f,
                       "cp_iters": s.cp_iters, "wall_time": s.wall_time}
                fh.write(json.dumps(row) + "\n")

    @classmethod
    def from_jsonl(cls, path):
        trace = cls()
        with open(path) as fh:
            for line in fh:
                row = json.loads(line)
                if row["record"] == "init":
                    trace.f_init = row["f_init"]
                    trace.degenerate_stop = row.get("degenerate_stop", False)
                else:
                    trace.steps.append(TraceStep(row["h"], row["p"], row["lam"], row["f"],
                                                 row["cp_iters"], row["wall_time"]))
        return trace


def _run_incremental(K, y, x_tilde, cfg, guesses, op_norm, data_scale, keep_snapshots):
    y = np.asarray(y, dtype=np.float64)
    x = np.maximum(np.asarray(x_tilde, dtype=np.float64), 0.0)
    p, lam = cfg.p0, cfg.lambda0

    trace = IncrementalTrace(f_init=tpv_objective(x, y, K, lam, p))
    if keep_snapshots:
        trace.snapshots = [x.copy()]
    f_prev = None

    for h, budget in enumerate(cfg.scheduler):
        start = time.perf_counter()
        if guesses is not None:
            xhat = np.asarray(guesses[h].apply(x), dtype=np.float64)
            if xhat.shape != x.shape:
                raise ValueError(
                    f"guess {h} returned shape {xhat.shape}, expected {x.shape}"
                )
            if not np.all(np.isfinite(xhat)):
                raise ValueError(f"guess {h} returned non-finite values")
            x = xhat
        used = 0
        if budget > 0:
            ir = IrConfig(p=p, lam=lam, k_ir=budget, k_cp=cfg.k_cp, xi=cfg.xi,
                          tau_x=cfg.tau_x, tau_f=cfg.tau_f)
            x, used = ir_solve(K, y, x, ir, op_norm=op_norm, data_scale=data_scale)
        f_h = tpv_objective(x, y, K, lam, p)
        trace.steps.append(TraceStep(h, p, lam, f_h, used, time.perf_counter() - start))
        if keep_snapshots:
            trace.snapshots.append(x.copy())

        if h + 1 < cfg.H:
            lam_next = update_lambda(h, lam, f_h, f_prev if f_prev is not None else f_h,
                                     cfg.lambda0)
            if lam_next <= 0.0:
                trace.degenerate_stop = True
                break
            lam = lam_next
            p = update_p(p, cfg.alpha_p)
        f_prev = f_h

    return x, trace


def inc_tpv(K: LinearOperator, y, x_tilde, cfg: IncrementalConfig, *,
            op_norm: float = None, data_scale: float = 1.0,
            keep_snapshots: bool = False):
    """Incremental TpV: warm-started reweighted solves over the p/lambda
    schedule. Returns (image, trace)."""
    return _run_incremental(K, y, x_tilde, cfg, None, op_norm, data_scale, keep_snapshots)


def inc_dg(K: LinearOperator, y, x_tilde, cfg: IncrementalConfig, guesses, *,
           op_norm: float = None, data_scale: float = 1.0,
           keep_snapshots: bool = False):
    """Incremental solve with a guess operator applied before each step.

    With identity guesses this reproduces inc_tpv bit for bit; with an
    all-zero scheduler it reduces to the composition of the guesses.
    """
    if len(guesses) != cfg.H:
        raise ValueError(f"expected {cfg.H} guess operators, got {len(guesses)}")
    return _run_incremental(K, y, x_tilde, cfg, list(guesses), op_norm, data_scale,
                            keep_snapshots)
