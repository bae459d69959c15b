"""Residual-aware post-training quantization with a PID-estimated residual coefficient."""

from .flow import CalibrationSet, ModuleSpec, NetworkSpec, generate_toy_network
from .pid import PidConfig, PidTrace, Termination, estimate_alpha
from .pipeline import ReconReport, RunConfig, alpha_sweep, emit_report, quantize_network
from .quantizer import QuantConfig
from .reconstruct import ReconMethod, reconstruct_module, scaled_column_update

__all__ = [
    "CalibrationSet", "ModuleSpec", "NetworkSpec", "generate_toy_network",
    "PidConfig", "PidTrace", "Termination", "estimate_alpha",
    "ReconReport", "RunConfig", "alpha_sweep", "emit_report", "quantize_network",
    "QuantConfig", "ReconMethod", "reconstruct_module", "scaled_column_update",
]
