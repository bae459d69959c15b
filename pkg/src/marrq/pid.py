"""Zero-order PID estimation of the per-module residual coefficient.

The controller never differentiates the objective. It observes the module
reconstruction error at successive coefficients, turns the normalized
finite-difference trend into a bounded deviation ``d = tanh(-beta * g)``,
and moves the coefficient by an incremental PID step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable


_D_LIMIT = math.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class PidConfig:
    max_steps: int = 3
    kp: float = 1.0
    ki: float = 1.0
    kd: float = 1.0
    beta: float = 10.0
    eps_j: float = 1e-8
    eps_alpha: float = 1e-6
    tau: float = 1e-5
    alpha_init_pair: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")
        values = (self.kp, self.ki, self.kd, self.beta, self.eps_j, self.eps_alpha, self.tau,
                  *self.alpha_init_pair)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("PID configuration must be finite")
        if len(self.alpha_init_pair) != 2:
            raise ValueError("alpha_init_pair needs exactly two coefficients")


class Termination(str, Enum):
    MAX_STEPS = "MaxSteps"
    EARLY_STOP = "EarlyStop"
    DEGENERATE = "DegenerateObjective"


@dataclass(frozen=True)
class PidStep:
    t: int
    alpha: float
    objective: float
    g: float
    d: float
    delta_alpha: float


@dataclass
class PidTrace:
    """History of one estimation run.

    ``seeds`` holds the two initial ``(alpha, J)`` evaluations; ``steps`` holds
    the updates ``t = 1..``. ``best_alpha``/``best_objective`` are diagnostic
    only: the estimate is always the coefficient of the last completed step.
    """

    steps: list[PidStep] = field(default_factory=list)
    termination: Termination = Termination.MAX_STEPS
    evaluations: int = 0
    seeds: tuple[tuple[float, float], ...] = ()
    module: str = ""
    best_alpha: float | None = None
    best_objective: float | None = None
    final_reconstruction: bool = False


def deviation_signal(j_prev: float, j_prev2: float, j0: float, a_prev: float,
                     a_prev2: float, cfg: PidConfig) -> tuple[float, float]:
    """Normalized finite-difference trend ``g`` and its bounded response ``d``.

    Double-precision ``tanh`` rounds to exactly +-1 once ``|beta g|`` passes
    about 19, so ``d`` is held one ulp inside the open interval.
    """
    g = ((j_prev - j_prev2) / (j0 + cfg.eps_j)) / (a_prev - a_prev2 + cfg.eps_alpha)
    d = math.tanh(-cfg.beta * g)
    return g, min(max(d, -_D_LIMIT), _D_LIMIT)


def pid_increment(d_t: float, d_t1: float, d_t2: float, cfg: PidConfig) -> float:
    return (cfg.kp * (d_t - d_t1)
            + cfg.ki * d_t
            + cfg.kd * (d_t - 2.0 * d_t1 + d_t2))


def should_stop(j_t: float, j_t1: float, j0: float, cfg: PidConfig) -> bool:
    return abs((j_t - j_t1) / (j0 + cfg.eps_j)) < cfg.tau


def estimate_alpha(objective: Callable[[float], float],
                   cfg: PidConfig = PidConfig()) -> tuple[float, PidTrace]:
    """Run the PID loop against ``objective`` and return ``(alpha_final, trace)``.

    ``objective(alpha)`` must be deterministic. It is called twice for the seed
    coefficients and once per update step, so at most ``max_steps + 2`` times.
    A NaN objective ends the run with the plain residual coefficient 1.0.
    """
    trace = PidTrace()

    def evaluate(alpha):
        trace.evaluations += 1
        value = float(objective(alpha))
        if not math.isnan(value) and (trace.best_objective is None or value < trace.best_objective):
            trace.best_alpha, trace.best_objective = alpha, value
        return value

    a_m1, a_0 = (float(a) for a in cfg.alpha_init_pair)
    j_m1 = evaluate(a_m1)
    j_0 = evaluate(a_0)
    trace.seeds = ((a_m1, j_m1), (a_0, j_0))
    if math.isnan(j_m1) or math.isnan(j_0):
        trace.termination = Termination.DEGENERATE
        return 1.0, trace

    alphas = [a_m1, a_0]
    objectives = [j_m1, j_0]
    ds = [0.0, 0.0]
    j_ref = j_0
    for t in range(1, cfg.max_steps + 1):
        g, d = deviation_signal(objectives[-1], objectives[-2], j_ref,
                                alphas[-1], alphas[-2], cfg)
        delta = pid_increment(d, ds[-1], ds[-2], cfg)
        alpha = alphas[-1] + delta
        j_t = evaluate(alpha)
        if math.isnan(j_t):
            trace.termination = Termination.DEGENERATE
            return 1.0, trace
        trace.steps.append(PidStep(t=t, alpha=alpha, objective=j_t, g=g, d=d, delta_alpha=delta))
        stop = should_stop(j_t, objectives[-1], j_ref, cfg)
        alphas.append(alpha)
        objectives.append(j_t)
        ds.append(d)
        if stop:
            trace.termination = Termination.EARLY_STOP
            break
    else:
        trace.termination = Termination.MAX_STEPS
    return alphas[-1], trace
