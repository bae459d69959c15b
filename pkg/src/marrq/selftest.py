"""Seeded oracle-equivalence checks run by ``marrq selftest``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import hessian, oracles
from .flow import CalibrationSet, generate_toy_network
from .pid import PidConfig, deviation_signal
from .pipeline import RunConfig, quantize_network
from .quantizer import QuantConfig, calibrate_channel, quantize_column, quantize_dequantize, weight_channel_params
from .reconstruct import ReconMethod, reconstruct_module, scaled_column_update
from .residual import compute_residual


@dataclass
class CheckResult:
    name: str
    instances: int
    failures: int
    worst: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.failures == 0


def random_module_instance(rng, d_in_max=12, n_max=48, d_out_max=6, noise=0.3):
    """Random weight, FP input and perturbed quantized-flow input."""
    d_in = int(rng.integers(2, d_in_max + 1))
    d_out = int(rng.integers(1, d_out_max + 1))
    n = int(rng.integers(d_in + 2, max(n_max, d_in + 2) + 1))
    w = rng.standard_normal((d_out, d_in))
    x_fp = rng.standard_normal((d_in, n))
    x_hat = x_fp + noise * rng.standard_normal((d_in, n))
    return w, x_fp, x_hat


def relative_gap(f, f_star, scale):
    return (f - f_star) / max(f_star, 1e-12 * scale, 1e-300)


def check_closed_form(rng, instances=200, tol=1e-7):
    worst, failures = 0.0, 0
    for _ in range(instances):
        w, x_fp, x_hat = random_module_instance(rng)
        alpha = float(rng.choice([0.0, 0.5, 1.0, 1.5]))
        target = compute_residual(w, x_fp, x_hat)
        state = hessian.damp_and_invert(hessian.accumulate_hessian([x_hat]), 1e-14)
        q = int(rng.integers(w.shape[1]))
        q_values = quantize_column(w[:, q], weight_channel_params(w, QuantConfig(3, 16)))
        dw = scaled_column_update(w, q, q_values, state, target, alpha)
        d = q_values - w[:, q]
        ref = oracles.constrained_lstsq(x_hat, alpha * target.r, [q], d[:, None])
        f = oracles.lstsq_objective(dw, x_hat, alpha * target.r)
        f_star = oracles.lstsq_objective(ref, x_hat, alpha * target.r)
        gap = relative_gap(f, f_star, float(np.sum((alpha * target.r) ** 2)) + float(np.sum(d ** 2)))
        worst = max(worst, gap)
        if gap > tol or not np.array_equal(dw[:, q], d):
            failures += 1
    return instances, failures, worst


def check_schur(rng, instances=100, tol=1e-7):
    worst, failures = 0.0, 0
    for _ in range(instances):
        d = int(rng.integers(2, 13))
        h = oracles.random_spd(rng, d)
        state = hessian.damp_and_invert(h, 1e-12)
        k = int(rng.integers(1, d))
        subset = [int(i) for i in rng.permutation(d)[:k]]
        for q in subset:
            hessian.eliminate_coordinate(state, q)
        keep = [i for i in range(d) if i not in subset]
        ref = np.linalg.inv(state.h[np.ix_(keep, keep)])
        got = state.h_inv[np.ix_(keep, keep)]
        err = np.max(np.abs(got - ref)) / np.max(np.abs(ref))
        zeros_ok = all(not np.any(state.h_inv[q]) and not np.any(state.h_inv[:, q]) for q in subset)
        worst = max(worst, err)
        if err > tol or not zeros_ok:
            failures += 1
    return instances, failures, worst


def sequential_gaps(w, x_fp, x_hat, alpha, bits=3, damping_percent=0.01, order="natural"):
    """Per-column relative objective gap between the sweep and a from-scratch re-solve."""
    target = compute_residual(w, x_fp, x_hat)
    state = hessian.damp_and_invert(hessian.accumulate_hessian([x_hat]), damping_percent)
    lam = state.damping_lambda
    res = reconstruct_module(w, ReconMethod.residual(alpha), state, target,
                             config=QuantConfig(bits, 16), order=order, record_steps=True)
    d_in = w.shape[1]
    x_aug = np.hstack([x_hat, math.sqrt(lam) * np.eye(d_in)])
    gaps, done = [], []
    for step in res.per_column_log:
        cum = step.weight_before - w
        t_aug = np.hstack([alpha * target.r - cum @ x_hat, -math.sqrt(lam) * cum])
        fixed = done + [step.q]
        vals = np.zeros((w.shape[0], len(fixed)))
        vals[:, -1] = step.d
        ref = oracles.constrained_lstsq(x_aug, t_aug, fixed, vals)
        f = oracles.lstsq_objective(step.dw, x_aug, t_aug)
        f_star = oracles.lstsq_objective(ref, x_aug, t_aug)
        gaps.append(relative_gap(f, f_star, float(np.sum(t_aug ** 2))))
        done.append(step.q)
    return gaps


def check_sequential(rng, instances=50, tol=1e-7):
    worst, failures = 0.0, 0
    for _ in range(instances):
        w, x_fp, x_hat = random_module_instance(rng, d_in_max=6, n_max=16, d_out_max=4)
        alpha = float(rng.choice([0.0, 0.5, 1.0, 1.5]))
        gaps = sequential_gaps(w, x_fp, x_hat, alpha)
        worst = max(worst, max(gaps))
        if max(gaps) > tol:
            failures += 1
    return instances, failures, worst


def check_reductions(rng, instances=3, tol=0.0):
    failures = 0
    for i in range(instances):
        net = generate_toy_network(3, [8, 12, 12, 6], seed=int(rng.integers(1 << 30)))
        calib = CalibrationSet.generate(8, 32, seed=i)
        quant = QuantConfig(2, 4)
        outs = {}
        for label, method in [("gptq", ReconMethod.gptq()), ("r0", ReconMethod.residual(0.0)),
                              ("gptaq", ReconMethod.parse("gptaq")), ("r1", ReconMethod.residual(1.0))]:
            qnet, report = quantize_network(net, calib, RunConfig(method=method, quant=quant))
            outs[label] = ([m.weight for m in qnet.modules], report.objectives(),
                           report.network_output_mse)
        for a, b in (("gptq", "r0"), ("gptaq", "r1")):
            wa, ja, na = outs[a]
            wb, jb, nb = outs[b]
            if not (all(np.array_equal(x, y) for x, y in zip(wa, wb)) and ja == jb and na == nb):
                failures += 1
    return instances, failures, 0.0


def check_quantizer(rng, instances=2000, tol=0.0):
    failures = 0
    for _ in range(instances):
        bits = int(rng.choice([2, 3, 4]))
        sym = bool(rng.integers(2))
        v = rng.standard_normal(int(rng.integers(1, 9))) * 10 ** rng.uniform(-3, 3)
        p = calibrate_channel(v, bits, sym)
        once = quantize_dequantize(v, p)
        if not np.array_equal(quantize_dequantize(once, p), once):
            failures += 1
    return instances, failures, 0.0


def check_pid_bound(rng, instances=2000, tol=0.0):
    cfg = PidConfig()
    failures = 0
    for _ in range(instances):
        j = rng.uniform(0, 10, size=3)
        a = rng.uniform(-5, 5, size=2)
        _, d = deviation_signal(j[0], j[1], j[2], a[0], a[1], cfg)
        if not abs(d) <= 1.0:
            failures += 1
    return instances, failures, 0.0


CHECKS: list[tuple[str, Callable]] = [
    ("closed_form_vs_kkt_oracle", check_closed_form),
    ("schur_elimination", check_schur),
    ("sequential_sweep_oracle", check_sequential),
    ("reduction_identities", check_reductions),
    ("quantizer_projection", check_quantizer),
    ("pid_bounded_response", check_pid_bound),
]


def run_selftest(seed: int = 0) -> list[CheckResult]:
    results = []
    for i, (name, fn) in enumerate(CHECKS):
        rng = np.random.default_rng([seed, i])
        start = time.perf_counter()
        try:
            n, failures, worst = fn(rng)
        except Exception:
            n, failures, worst = 1, 1, math.inf
        results.append(CheckResult(name, n, failures, worst, time.perf_counter() - start))
    return results
