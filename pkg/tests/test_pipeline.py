import math

import numpy as np
import pytest

from marrq.pid import PidConfig
from marrq.pipeline import (NETWORK_ROW, PipelineError, RunConfig, alpha_sweep, emit_report,
                            parse_report, parse_trajectory_csv, quantize_network, sweep_csv)
from marrq.quantizer import QuantConfig
from marrq.reconstruct import ReconMethod


@pytest.fixture(scope="module")
def marr_run(small_net, small_calib):
    cfg = RunConfig(method=ReconMethod.marr(), quant=QuantConfig(2, 4))
    return quantize_network(small_net, small_calib, cfg)


def test_report_structure(marr_run, small_net):
    qnet, report = marr_run
    assert [m.name for m in report.per_module] == [m.name for m in small_net.modules]
    assert all(m.alpha_final is not None and m.trace is not None for m in report.per_module)
    assert report.total_objective_evals == sum(m.objective_evals for m in report.per_module)
    assert all(m.damping_lambda > 0 for m in report.per_module)
    assert all(qm.weight.shape == m.weight.shape for qm, m in zip(qnet.modules, small_net.modules))


def test_marr_final_weights_match_reported_objective(marr_run, small_net, small_calib):
    _, report = marr_run
    for m in report.per_module:
        seen = {a: j for a, j in m.trace.seeds} | {s.alpha: s.objective for s in m.trace.steps}
        if m.alpha_final in seen:
            assert m.objective_j == seen[m.alpha_final]


def test_run_is_deterministic(marr_run, small_net, small_calib):
    _, again = quantize_network(small_net, small_calib, marr_run[1].config_echo)
    assert emit_report(again) == emit_report(marr_run[1])


def test_jsonl_round_trip(marr_run):
    report = marr_run[1]
    back = parse_report(emit_report(report))
    assert back.config_echo == report.config_echo
    assert back.objectives() == report.objectives()
    assert back.per_module[0].trace.steps == report.per_module[0].trace.steps
    assert emit_report(back) == emit_report(report)


def test_trajectory_csv_round_trip(marr_run):
    report = marr_run[1]
    rows = parse_trajectory_csv(emit_report(report, fmt="csv"))
    steps = [s for tr in report.traces for s in tr.steps]
    assert len(rows) == len(steps)
    assert [r["alpha"] for r in rows] == [s.alpha for s in steps]


def test_unknown_format(marr_run):
    with pytest.raises(ValueError):
        emit_report(marr_run[1], fmt="xml")


def test_non_marr_methods_count_one_evaluation(small_net, small_calib):
    _, report = quantize_network(small_net, small_calib,
                                 RunConfig(method=ReconMethod.gptq(), quant=QuantConfig(2, 4)))
    assert [m.objective_evals for m in report.per_module] == [1] * len(small_net)
    assert report.traces == [] and all(m.alpha_final is None for m in report.per_module)


def test_rtn_runs(small_net, small_calib):
    _, report = quantize_network(small_net, small_calib,
                                 RunConfig(method=ReconMethod.rtn(), quant=QuantConfig(3, 16)))
    assert math.isfinite(report.network_output_mse)


def test_unquantized_pipeline_is_lossless(small_net, small_calib):
    qnet, report = quantize_network(small_net, small_calib,
                                    RunConfig(method=ReconMethod.gptaq(), quant=QuantConfig(16, 16)))
    assert all(np.array_equal(a.weight, b.weight) for a, b in zip(qnet.modules, small_net.modules))
    assert report.network_output_mse == 0.0


def test_failure_names_module(small_net, small_calib, monkeypatch):
    import marrq.pipeline as pipeline
    from marrq.tensor_core import NotPositiveDefiniteError

    real = pipeline.damp_and_invert
    calls = []

    def flaky(h, percent):
        calls.append(h.shape)
        if len(calls) == 2:
            raise NotPositiveDefiniteError("increase the damping percent")
        return real(h, percent)

    monkeypatch.setattr(pipeline, "damp_and_invert", flaky)
    with pytest.raises(PipelineError, match="fc1") as info:
        quantize_network(small_net, small_calib, RunConfig(quant=QuantConfig(2, 16)))
    assert info.value.module == "fc1"
    assert isinstance(info.value.cause, NotPositiveDefiniteError)


def test_sweep_zero_equals_gptq(small_net, small_calib):
    quant = QuantConfig(2, 4)
    rows = alpha_sweep(small_net, small_calib, RunConfig(quant=quant), [0.0, 1.0])
    _, gptq = quantize_network(small_net, small_calib, RunConfig(method=ReconMethod.gptq(), quant=quant))
    assert [j for _, j in rows[0].objectives] == gptq.objectives()
    text = sweep_csv(rows).decode()
    assert text.count(NETWORK_ROW) == 2
    assert text.splitlines()[0] == "alpha,module,J"


def test_config_round_trip():
    cfg = RunConfig(method=ReconMethod.residual(0.25), quant=QuantConfig(3, 8),
                    pid=PidConfig(max_steps=5), damping_percent=0.1, seed=9, column_order="desc")
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(damping_percent=0.0)
    with pytest.raises(ValueError):
        RunConfig(column_order="random")
