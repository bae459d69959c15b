"""``marrq`` command line: quantize, sweep, trace, gen, selftest."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import storage
from .flow import CalibrationSet, generate_toy_network
from .pid import PidConfig
from .pipeline import (PipelineError, RunConfig, alpha_sweep, emit_report, quantize_network,
                       sweep_csv)
from .quantizer import QuantConfig
from .reconstruct import ReconMethod

log = logging.getLogger("marrq")

DEMO_WIDTHS = (32, 64, 64, 64, 64, 64, 32)
DEMO_SAMPLES = 256
DEFAULT_ALPHAS = "0,0.25,0.5,1,1.5,2"


class UsageError(Exception):
    """Bad flag values discovered after argparse accepted the syntax."""


def _method(text: str) -> ReconMethod:
    try:
        return ReconMethod.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _bits(text: str) -> int:
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError(f"bit width must be >= 2, got {text}")
    return value


def parse_alphas(text: str) -> list[float]:
    """Comma-separated coefficients, duplicates dropped (first occurrence kept)."""
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha list {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("alpha list is empty")
    unique = list(dict.fromkeys(values))
    if len(unique) != len(values):
        log.warning("dropping duplicate alphas: %s -> %s", values, unique)
    return unique


def _add_run_flags(p: argparse.ArgumentParser, *, out_required: bool, max_steps: int,
                   method: bool = True):
    p.add_argument("--model", required=True, type=Path, help="network manifest (JSON)")
    p.add_argument("--calib", required=True, type=Path, help="calibration manifest (JSON)")
    if method:
        p.add_argument("--method", type=_method, default=ReconMethod.marr(),
                       help="rtn | gptq | gptaq | marr | residual:<alpha> (default: marr)")
    p.add_argument("--wbits", type=_bits, default=4, help="weight bits; 16 disables (default: 4)")
    p.add_argument("--abits", type=_bits, default=16,
                   help="activation bits; 16 disables (default: 16)")
    p.add_argument("--out", type=Path, required=out_required,
                   help="output directory" + ("" if out_required else " (default: CSV to stdout)"))
    p.add_argument("--seed", type=int, default=0,
                   help="run seed, echoed in reports; MARRQ_SEED overrides (default: 0)")
    p.add_argument("--damping", type=_positive_float, default=0.01,
                   help="damping as a fraction of mean Hessian diagonal (default: 0.01)")
    p.add_argument("--max-steps", type=int, default=max_steps,
                   help=f"PID update steps T (default: {max_steps})")
    p.add_argument("--order", choices=("natural", "desc"), default="natural",
                   help="column order: natural or descending Hessian diagonal (default: natural)")
    p.add_argument("--plot", action="store_true",
                   help="also render PNG figures into the output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marrq",
                                     description="Residual-aware post-training quantization.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantize", help="quantize a network; write model, report, trajectories")
    _add_run_flags(q, out_required=True, max_steps=3)

    s = sub.add_parser("sweep", help="fixed-alpha residual sweep; CSV of (alpha, module, J)")
    _add_run_flags(s, out_required=False, max_steps=3, method=False)
    s.add_argument("--alphas", type=parse_alphas, default=parse_alphas(DEFAULT_ALPHAS),
                   help=f"comma-separated coefficients (default: {DEFAULT_ALPHAS})")

    t = sub.add_parser("trace", help="MARR with long PID traces; per-module trajectory CSV")
    _add_run_flags(t, out_required=False, max_steps=10, method=False)

    g = sub.add_parser("gen", help="write the seeded demo network and calibration set")
    g.add_argument("--out", type=Path, required=True, help="output directory")
    g.add_argument("--seed", type=int, default=0, help="generation seed; MARRQ_SEED overrides")
    g.add_argument("--samples", type=int, default=DEMO_SAMPLES,
                   help=f"calibration samples (default: {DEMO_SAMPLES})")
    g.add_argument("--widths", default=",".join(map(str, DEMO_WIDTHS)),
                   help="comma-separated layer widths, input first")

    st = sub.add_parser("selftest", help="run the seeded oracle-equivalence checks")
    st.add_argument("--seed", type=int, default=0, help="check seed; MARRQ_SEED overrides")
    st.add_argument("--verbose", action="store_true", help="per-property instance counts")
    return parser


def _seed(args) -> int:
    env = os.environ.get("MARRQ_SEED")
    if env is None or env == "":
        return args.seed
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"MARRQ_SEED must be an integer, got {env!r}") from None


def _run_config(args, method: ReconMethod) -> RunConfig:
    try:
        return RunConfig(method=method, quant=QuantConfig(args.wbits, args.abits),
                         pid=PidConfig(max_steps=args.max_steps),
                         damping_percent=args.damping, seed=_seed(args), column_order=args.order)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_inputs(args):
    try:
        net = storage.load_network(args.model)
        calib = storage.load_calibration(args.calib)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read inputs: {exc}") from None
    if calib.inputs.shape[0] != net.input_dim:
        raise UsageError(f"calibration dim {calib.inputs.shape[0]} != model input dim "
                         f"{net.input_dim}")
    return net, calib


def _write_outputs(out: Path | None, files: dict[str, bytes], stdout_name: str):
    if out is None:
        sys.stdout.buffer.write(files[stdout_name])
        sys.stdout.flush()
        return
    out.mkdir(parents=True, exist_ok=True)
    for name, data in files.items():
        (out / name).write_bytes(data)


def cmd_quantize(args) -> int:
    cfg = _run_config(args, args.method)
    net, calib = _load_inputs(args)
    qnet, report = quantize_network(net, calib, cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    storage.save_network(qnet, args.out / "model.json")
    files = {"report.jsonl": emit_report(report)}
    if report.traces:
        files["trajectory.csv"] = emit_report(report, fmt="csv")
    _write_outputs(args.out, files, "report.jsonl")
    if args.plot and report.traces:
        from .plotting import plot_alpha_per_module, plot_trajectories
        plot_alpha_per_module(report, args.out / "alpha_per_module.png")
        plot_trajectories(report.traces, args.out / "trajectories.png")
    log.info("network output MSE %.6g, %d objective evaluations",
             report.network_output_mse, report.total_objective_evals)
    return 0


def cmd_sweep(args) -> int:
    if args.plot and args.out is None:
        raise UsageError("--plot needs --out")
    cfg = _run_config(args, ReconMethod.gptq())
    net, calib = _load_inputs(args)
    rows = alpha_sweep(net, calib, cfg, args.alphas)
    _write_outputs(args.out, {"sweep.csv": sweep_csv(rows)}, "sweep.csv")
    if args.plot:
        from .plotting import plot_alpha_sweep
        plot_alpha_sweep(rows, args.out / "alpha_sweep.png")
    return 0


def cmd_trace(args) -> int:
    if args.plot and args.out is None:
        raise UsageError("--plot needs --out")
    cfg = _run_config(args, ReconMethod.marr())
    net, calib = _load_inputs(args)
    _, report = quantize_network(net, calib, cfg)
    files = {"trajectory.csv": emit_report(report, fmt="csv"), "report.jsonl": emit_report(report)}
    _write_outputs(args.out, files, "trajectory.csv")
    if args.plot:
        from .plotting import plot_trajectories
        plot_trajectories(report.traces, args.out / "trajectories.png")
    return 0


def cmd_gen(args) -> int:
    seed = _seed(args)
    try:
        widths = [int(w) for w in args.widths.split(",")]
        if len(widths) < 2 or min(widths) < 1 or args.samples < 1:
            raise ValueError
    except ValueError:
        raise UsageError(f"bad --widths {args.widths!r} or --samples {args.samples}") from None
    net = generate_toy_network(len(widths) - 1, widths, seed=seed)
    calib = CalibrationSet.generate(widths[0], args.samples, seed=seed + 1)
    args.out.mkdir(parents=True, exist_ok=True)
    storage.save_network(net, args.out / "model.json")
    storage.save_calibration(calib, args.out / "calib.json")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest(_seed(args))
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        if args.verbose:
            print(f"{status} {r.name}: {r.instances} instances, {r.failures} failed, "
                  f"worst {r.worst:.3g}, {r.seconds:.2f}s")
        else:
            print(f"{status} {r.name}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"selftest failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"selftest passed ({len(results)} properties)")
    return 0


COMMANDS = {"quantize": cmd_quantize, "sweep": cmd_sweep, "trace": cmd_trace, "gen": cmd_gen,
            "selftest": cmd_selftest}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if getattr(args, "max_steps", 0) < 0:
        parser.error("--max-steps must be non-negative")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except PipelineError as exc:
        print(f"marrq: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
