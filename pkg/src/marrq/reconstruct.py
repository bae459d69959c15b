"""Column-by-column closed-form reconstruction (RTN, GPTQ, scaled residual)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hessian
from .hessian import HessianState
from .quantizer import QuantConfig, quantize_column, rtn_quantize_module, weight_channel_params
from .residual import ResidualTarget

METHOD_KINDS = ("rtn", "gptq", "residual", "marr")


class ReconstructionError(FloatingPointError):
    """A sweep produced non-finite weights."""


@dataclass(frozen=True)
class ReconMethod:
    """Which reconstruction to run. ``residual`` carries a fixed ``alpha``.

    ``gptq`` and ``residual:0`` share one code path; ``gptaq`` parses to
    ``residual:1``.
    """

    kind: str
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"unknown method kind {self.kind!r}")
        if self.kind == "residual":
            if self.alpha is None or not np.isfinite(self.alpha):
                raise ValueError("residual method needs a finite alpha")
        elif self.alpha is not None:
            raise ValueError(f"{self.kind} takes no alpha")

    @classmethod
    def rtn(cls):
        return cls("rtn")

    @classmethod
    def gptq(cls):
        return cls("gptq")

    @classmethod
    def residual(cls, alpha: float):
        return cls("residual", float(alpha))

    @classmethod
    def gptaq(cls):
        return cls("residual", 1.0)

    @classmethod
    def marr(cls):
        return cls("marr")

    @classmethod
    def parse(cls, text: str) -> "ReconMethod":
        text = text.strip().lower()
        if text == "gptaq":
            return cls.gptaq()
        if text.startswith("residual:"):
            try:
                alpha = float(text.split(":", 1)[1])
            except ValueError:
                raise ValueError(f"bad residual coefficient in {text!r}") from None
            return cls.residual(alpha)
        if text in ("rtn", "gptq", "marr"):
            return cls(text)
        raise ValueError(f"unknown method {text!r}; expected rtn|gptq|gptaq|marr|residual:<alpha>")

    def __str__(self) -> str:
        if self.kind == "residual":
            return f"residual:{self.alpha!r}"
        return self.kind

    @property
    def sweep_alpha(self) -> float:
        """Residual coefficient used by the closed-form sweep (0 for GPTQ)."""
        if self.kind == "gptq":
            return 0.0
        if self.kind == "residual":
            return self.alpha
        raise ValueError(f"{self.kind} has no fixed sweep coefficient")


@dataclass
class ColumnStep:
    q: int
    d: np.ndarray
    update_norm: float
    weight_before: np.ndarray | None = None
    dw: np.ndarray | None = None


@dataclass
class SweepResult:
    quantized_weight: np.ndarray
    applied_dw: np.ndarray
    objective_evals: int = 0
    per_column_log: list[ColumnStep] = field(default_factory=list)


def column_order(state: HessianState, order: str = "natural") -> list[int]:
    """Processing order: index order, or descending damped-Hessian diagonal."""
    n = state.dim
    if order in (None, "natural"):
        return list(range(n))
    if order in ("desc", "descending_diag"):
        return [int(i) for i in np.argsort(-np.diag(state.h), kind="stable")]
    raise ValueError(f"unknown column order {order!r}")


def _column_step(weight, q, q_values, state, corr):
    # Mutates state: q is eliminated, state.h_inv becomes H^-1_{-q}.
    d = np.asarray(q_values, dtype=np.float64) - weight[:, q]
    pivot = state.h_inv[q, q]
    row = state.h_inv[q, :].copy()
    hessian.eliminate_coordinate(state, q)
    dw = np.outer(d / pivot, row) + corr @ state.h_inv
    dw[:, q] = d
    return dw


def scaled_column_update(w_rows, q: int, q_values, state: HessianState,
                         target: ResidualTarget | None, alpha: float) -> np.ndarray:
    """One constrained step: ``d/H^-1_qq * H^-1_q,: + alpha * r X^T H^-1_{-q}``.

    ``state`` is not modified. Column ``q`` of the result equals
    ``q_values - w_rows[:, q]`` exactly.
    """
    w_rows = np.asarray(w_rows, dtype=np.float64)
    if q in state.eliminated:
        raise ValueError(f"coordinate {q} already eliminated")
    if target is None:
        corr = np.zeros_like(w_rows)
    else:
        corr = alpha * target.cross_corr
    return _column_step(w_rows, q, q_values, state.copy(), corr)


def reconstruct_module(weight, method: ReconMethod, state: HessianState,
                       target: ResidualTarget | None = None, *,
                       config: QuantConfig, order: str = "natural",
                       alpha: float | None = None,
                       record_steps: bool = False) -> SweepResult:
    """Quantize ``weight`` column by column with closed-form compensation.

    The sweep minimizes ``||dW X_hat - alpha r||^2 + lambda ||dW||^2`` greedily:
    at each column the remaining free coordinates absorb both the new
    quantization error and whatever part of the residual target is still
    unexplained. ``alpha`` overrides the method's coefficient (used by MARR,
    whose coefficient is estimated per module). ``state`` is copied, never
    mutated.
    """
    w0 = np.asarray(weight, dtype=np.float64)
    if method.kind == "rtn":
        wq = rtn_quantize_module(w0, config)
        return SweepResult(quantized_weight=wq, applied_dw=wq - w0)
    if alpha is None:
        alpha = method.sweep_alpha
    if state.eliminated:
        raise ValueError("reconstruction needs a freshly inverted HessianState")
    if w0.shape[1] != state.dim:
        raise ValueError(f"weight has {w0.shape[1]} columns, Hessian is {state.dim}-dimensional")
    if target is None:
        if alpha != 0.0 and method.kind != "gptq":
            raise ValueError(f"{method} needs a residual target")
        corr = np.zeros_like(w0)
    else:
        with np.errstate(over="ignore", invalid="ignore"):
            corr = alpha * target.cross_corr
    state = state.copy()
    params = weight_channel_params(w0, config)
    w = w0.copy()
    log = []
    for q in column_order(state, order):
        q_values = quantize_column(w[:, q], params)
        before = w.copy() if record_steps else None
        # Overflow is caught by the finiteness check below, not warned about.
        with np.errstate(over="ignore", invalid="ignore"):
            dw = _column_step(w, q, q_values, state, corr)
            w += dw
            w[:, q] = q_values
            corr -= dw @ state.h
        if not np.all(np.isfinite(w)):
            raise ReconstructionError(f"non-finite weights after column {q}")
        log.append(ColumnStep(q=q, d=dw[:, q].copy(), update_norm=float(np.linalg.norm(dw)),
                              weight_before=before, dw=dw if record_steps else None))
    return SweepResult(quantized_weight=w, applied_dw=w - w0, per_column_log=log)
