"""End-to-end network quantization, fixed-coefficient sweeps, and report files."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

from .flow import CalibrationSet, DualFlow, NetworkSpec
from .hessian import accumulate_hessian, damp_and_invert
from .pid import PidConfig, PidStep, PidTrace, Termination, estimate_alpha
from .quantizer import QuantConfig
from .reconstruct import ReconMethod, ReconstructionError, reconstruct_module
from .residual import compute_residual, module_objective
from .tensor_core import frobenius_mse

TRAJECTORY_FIELDS = ("module", "t", "alpha", "J", "g", "d", "delta_alpha")
SWEEP_FIELDS = ("alpha", "module", "J")
NETWORK_ROW = "<network>"


class PipelineError(RuntimeError):
    def __init__(self, module: str, cause: BaseException):
        super().__init__(f"module {module}: {type(cause).__name__}: {cause}")
        self.module = module
        self.cause = cause


@dataclass(frozen=True)
class RunConfig:
    method: ReconMethod = field(default_factory=ReconMethod.marr)
    quant: QuantConfig = field(default_factory=QuantConfig)
    pid: PidConfig = field(default_factory=PidConfig)
    damping_percent: float = 0.01
    seed: int = 0
    column_order: str = "natural"

    def __post_init__(self):
        if not self.damping_percent > 0:
            raise ValueError("damping_percent must be positive")
        if self.column_order not in ("natural", "desc"):
            raise ValueError(f"column_order must be natural or desc, got {self.column_order!r}")

    def to_dict(self) -> dict:
        pid = asdict(self.pid)
        pid["alpha_init_pair"] = list(self.pid.alpha_init_pair)
        return {"method": str(self.method), "quant": asdict(self.quant), "pid": pid,
                "damping_percent": self.damping_percent, "seed": self.seed,
                "column_order": self.column_order}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        pid = dict(data["pid"])
        pid["alpha_init_pair"] = tuple(pid["alpha_init_pair"])
        return cls(method=ReconMethod.parse(data["method"]), quant=QuantConfig(**data["quant"]),
                   pid=PidConfig(**pid), damping_percent=data["damping_percent"],
                   seed=data["seed"], column_order=data["column_order"])


@dataclass
class ModuleReport:
    name: str
    method: str
    alpha_final: float | None
    objective_j: float
    objective_evals: int
    damping_lambda: float
    trace: PidTrace | None = None


@dataclass
class ReconReport:
    per_module: list[ModuleReport]
    network_output_mse: float
    total_objective_evals: int
    config_echo: RunConfig

    @property
    def traces(self) -> list[PidTrace]:
        return [m.trace for m in self.per_module if m.trace is not None]

    def objectives(self) -> list[float]:
        return [m.objective_j for m in self.per_module]


def _reconstruct_marr(name, weight, state, target, cfg, j_of):
    last = {}

    def objective(alpha):
        try:
            res = reconstruct_module(weight, cfg.method, state, target, config=cfg.quant,
                                     order=cfg.column_order, alpha=alpha)
        except ReconstructionError:
            return math.nan
        last["alpha"], last["weight"] = alpha, res.quantized_weight
        return j_of(res.quantized_weight)

    alpha_final, trace = estimate_alpha(objective, cfg.pid)
    trace.module = name
    evals = trace.evaluations
    if last.get("alpha") != alpha_final:
        res = reconstruct_module(weight, cfg.method, state, target, config=cfg.quant,
                                 order=cfg.column_order, alpha=alpha_final)
        last["weight"] = res.quantized_weight
        trace.final_reconstruction = True
        evals += 1
    return last["weight"], alpha_final, trace, evals


def quantize_network(net: NetworkSpec, calib: CalibrationSet, cfg: RunConfig):
    """Quantize every module in order; return ``(quantized_net, report)``."""
    flow = DualFlow(net, calib, cfg.quant)
    weights, reports = [], []
    out_hat = None
    for m in net.modules:
        try:
            x_fp, x_hat, z_fp = flow.capture()
            state = damp_and_invert(accumulate_hessian([x_hat]), cfg.damping_percent)
            target = compute_residual(m.weight, x_fp, x_hat)

            def j_of(wq, m=m, x_hat=x_hat, z_fp=z_fp):
                return module_objective(z_fp, m.linear(x_hat, wq))

            trace, alpha_final = None, None
            if cfg.method.kind == "marr":
                wq, alpha_final, trace, evals = _reconstruct_marr(
                    m.name, m.weight, state, target, cfg, j_of)
            else:
                wq = reconstruct_module(m.weight, cfg.method, state, target, config=cfg.quant,
                                        order=cfg.column_order).quantized_weight
                evals = 1
            j = j_of(wq)
        except Exception as exc:
            raise PipelineError(m.name, exc) from exc
        weights.append(wq)
        reports.append(ModuleReport(name=m.name, method=str(cfg.method), alpha_final=alpha_final,
                                    objective_j=j, objective_evals=evals,
                                    damping_lambda=state.damping_lambda, trace=trace))
        out_hat = flow.advance(wq)
    report = ReconReport(per_module=reports,
                         network_output_mse=frobenius_mse(flow.fp_output, out_hat),
                         total_objective_evals=sum(r.objective_evals for r in reports),
                         config_echo=cfg)
    return net.with_weights(weights), report


@dataclass
class SweepRow:
    alpha: float
    objectives: list[tuple[str, float]]
    network_output_mse: float


def alpha_sweep(net: NetworkSpec, calib: CalibrationSet, cfg: RunConfig, alphas) -> list[SweepRow]:
    """One full ``residual:alpha`` run per coefficient."""
    alphas = list(alphas)
    if not alphas:
        raise ValueError("alpha list is empty")
    rows = []
    for a in alphas:
        run = RunConfig(method=ReconMethod.residual(a), quant=cfg.quant, pid=cfg.pid,
                        damping_percent=cfg.damping_percent, seed=cfg.seed,
                        column_order=cfg.column_order)
        _, report = quantize_network(net, calib, run)
        rows.append(SweepRow(alpha=float(a),
                             objectives=[(m.name, m.objective_j) for m in report.per_module],
                             network_output_mse=report.network_output_mse))
    return rows


# --- serialization ---------------------------------------------------------

def _trace_to_dict(trace: PidTrace) -> dict:
    return {"module": trace.module, "termination": trace.termination.value,
            "evaluations": trace.evaluations, "seeds": [list(s) for s in trace.seeds],
            "steps": [asdict(s) for s in trace.steps], "best_alpha": trace.best_alpha,
            "best_objective": trace.best_objective,
            "final_reconstruction": trace.final_reconstruction}


def _trace_from_dict(data: dict) -> PidTrace:
    return PidTrace(steps=[PidStep(**s) for s in data["steps"]],
                    termination=Termination(data["termination"]),
                    evaluations=data["evaluations"],
                    seeds=tuple(tuple(s) for s in data["seeds"]), module=data["module"],
                    best_alpha=data["best_alpha"], best_objective=data["best_objective"],
                    final_reconstruction=data["final_reconstruction"])


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=False, allow_nan=True, separators=(",", ":"))


def emit_report(report: ReconReport, traces=None, fmt: str = "jsonl") -> bytes:
    """Serialize a report as JSON lines, or PID trajectories as CSV.

    ``jsonl``: one object per module then one summary object.
    ``csv``: header plus one row per PID step, columns ``TRAJECTORY_FIELDS``.
    """
    if traces is None:
        traces = report.traces
    if fmt == "jsonl":
        lines = []
        for m in report.per_module:
            lines.append(_dumps({"type": "module", "name": m.name, "method": m.method,
                                 "alpha_final": m.alpha_final, "objective_j": m.objective_j,
                                 "objective_evals": m.objective_evals,
                                 "damping_lambda": m.damping_lambda,
                                 "trace": None if m.trace is None else _trace_to_dict(m.trace)}))
        lines.append(_dumps({"type": "summary", "network_output_mse": report.network_output_mse,
                             "total_objective_evals": report.total_objective_evals,
                             "config": report.config_echo.to_dict()}))
        return ("\n".join(lines) + "\n").encode("utf-8")
    if fmt == "csv":
        return trajectory_csv(traces)
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(data: bytes) -> ReconReport:
    modules, summary = [], None
    for line in data.decode("utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        if obj["type"] == "module":
            trace = None if obj["trace"] is None else _trace_from_dict(obj["trace"])
            modules.append(ModuleReport(name=obj["name"], method=obj["method"],
                                        alpha_final=obj["alpha_final"],
                                        objective_j=obj["objective_j"],
                                        objective_evals=obj["objective_evals"],
                                        damping_lambda=obj["damping_lambda"], trace=trace))
        elif obj["type"] == "summary":
            summary = obj
    if summary is None:
        raise ValueError("report has no summary line")
    return ReconReport(per_module=modules, network_output_mse=summary["network_output_mse"],
                       total_objective_evals=summary["total_objective_evals"],
                       config_echo=RunConfig.from_dict(summary["config"]))


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue().encode("utf-8")


def trajectory_csv(traces) -> bytes:
    rows = [(tr.module, s.t, repr(s.alpha), repr(s.objective), repr(s.g), repr(s.d),
             repr(s.delta_alpha)) for tr in traces for s in tr.steps]
    return _csv_bytes(TRAJECTORY_FIELDS, rows)


def parse_trajectory_csv(data: bytes) -> list[dict]:
    reader = csv.DictReader(io.StringIO(data.decode("utf-8")))
    out = []
    for row in reader:
        out.append({"module": row["module"], "t": int(row["t"]),
                    **{k: float(row[k]) for k in TRAJECTORY_FIELDS[2:]}})
    return out


def sweep_csv(rows: list[SweepRow]) -> bytes:
    out = []
    for row in rows:
        out.extend((repr(row.alpha), name, repr(j)) for name, j in row.objectives)
        out.append((repr(row.alpha), NETWORK_ROW, repr(row.network_output_mse)))
    return _csv_bytes(SWEEP_FIELDS, out)

