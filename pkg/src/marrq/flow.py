"""Toy MLP networks and dual-flow activation capture.

The FP flow runs the original network. The quantized flow runs the network
with already-quantized weights for every finished module and quantizes each
module input per token. Module ``m`` is reconstructed from the FP input
``X``, the quantized-flow input ``X_hat`` and the FP output ``z = w X + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .quantizer import QuantConfig, quantize_activations_per_token

ACTIVATIONS = ("none", "relu")


@dataclass(frozen=True)
class ModuleSpec:
    name: str
    weight: np.ndarray
    bias: np.ndarray | None = None
    activation_after: str = "none"

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        if w.ndim != 2 or not np.all(np.isfinite(w)):
            raise ValueError(f"module {self.name}: weight must be a finite 2-D array")
        object.__setattr__(self, "weight", w)
        if self.bias is not None:
            b = np.asarray(self.bias, dtype=np.float64).ravel()
            if b.shape != (w.shape[0],) or not np.all(np.isfinite(b)):
                raise ValueError(f"module {self.name}: bias must be finite with length {w.shape[0]}")
            object.__setattr__(self, "bias", b)
        if self.activation_after not in ACTIVATIONS:
            raise ValueError(f"module {self.name}: unknown activation {self.activation_after!r}")

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]

    def linear(self, x: np.ndarray, weight: np.ndarray | None = None) -> np.ndarray:
        w = self.weight if weight is None else weight
        z = w @ x
        if self.bias is not None:
            z = z + self.bias[:, None]
        return z

    def activate(self, z: np.ndarray) -> np.ndarray:
        if self.activation_after == "relu":
            return np.maximum(z, 0.0)
        return z

    def with_weight(self, weight: np.ndarray) -> "ModuleSpec":
        return replace(self, weight=np.asarray(weight, dtype=np.float64))


@dataclass(frozen=True)
class NetworkSpec:
    modules: tuple[ModuleSpec, ...]
    input_dim: int

    def __post_init__(self):
        mods = tuple(self.modules)
        object.__setattr__(self, "modules", mods)
        dim = self.input_dim
        for m in mods:
            if m.d_in != dim:
                raise ValueError(f"module {m.name} expects {m.d_in} inputs, previous width is {dim}")
            dim = m.d_out

    def __len__(self):
        return len(self.modules)

    @property
    def output_dim(self) -> int:
        return self.modules[-1].d_out if self.modules else self.input_dim

    def with_weights(self, weights) -> "NetworkSpec":
        if len(weights) != len(self.modules):
            raise ValueError("need one weight matrix per module")
        return NetworkSpec(tuple(m.with_weight(w) for m, w in zip(self.modules, weights)),
                           self.input_dim)


@dataclass(frozen=True)
class CalibrationSet:
    inputs: np.ndarray
    seed: int = 0

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] < 1 or not np.all(np.isfinite(x)):
            raise ValueError("calibration inputs must be a finite (input_dim, n>=1) array")
        object.__setattr__(self, "inputs", x)

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[1]

    @classmethod
    def generate(cls, input_dim: int, n_samples: int, seed: int) -> "CalibrationSet":
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal((input_dim, n_samples)), seed=seed)


def generate_toy_network(depth: int, widths, seed: int, bias: bool = True) -> NetworkSpec:
    """Seeded MLP: ``depth`` linear modules, ReLU between them, none after the last.

    ``widths`` lists ``depth + 1`` layer sizes starting with the input size.
    Weights are ``N(0, 1/d_in)``; biases ``N(0, 0.01)``.
    """
    widths = [int(w) for w in widths]
    if depth < 1 or len(widths) != depth + 1 or min(widths) < 1:
        raise ValueError(f"depth {depth} needs {depth + 1} positive widths, got {widths}")
    rng = np.random.default_rng(seed)
    modules = []
    for i in range(depth):
        d_in, d_out = widths[i], widths[i + 1]
        w = rng.standard_normal((d_out, d_in)) / np.sqrt(d_in)
        b = 0.1 * rng.standard_normal(d_out) if bias else None
        act = "relu" if i < depth - 1 else "none"
        modules.append(ModuleSpec(name=f"fc{i}", weight=w, bias=b, activation_after=act))
    return NetworkSpec(tuple(modules), widths[0])


def forward(net: NetworkSpec, x: np.ndarray) -> np.ndarray:
    """FP network output."""
    for m in net.modules:
        x = m.activate(m.linear(x))
    return x


class DualFlow:
    """Incremental FP and quantized activation flows over a calibration set.

    FP inputs to every module are computed once. The quantized flow advances
    one module at a time via :meth:`advance`, which must receive the final
    quantized weight of the current module before the next one is captured.
    """

    def __init__(self, net: NetworkSpec, calib: CalibrationSet, config: QuantConfig):
        if calib.inputs.shape[0] != net.input_dim:
            raise ValueError(f"calibration inputs have {calib.inputs.shape[0]} rows, "
                             f"network expects {net.input_dim}")
        self.net = net
        self.config = config
        self.fp_inputs = []
        x = calib.inputs
        for m in net.modules:
            self.fp_inputs.append(x)
            x = m.activate(m.linear(x))
        self.fp_output = x
        self._q_act = calib.inputs
        self.position = 0

    def quantize_input(self, x: np.ndarray) -> np.ndarray:
        return quantize_activations_per_token(x, self.config.act_bits, self.config.act_symmetric)

    def capture(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(x_fp, x_hat, z_fp)`` for the module at the current position."""
        m = self.net.modules[self.position]
        x_fp = self.fp_inputs[self.position]
        x_hat = self.quantize_input(self._q_act)
        return x_fp, x_hat, m.linear(x_fp)

    def advance(self, quantized_weight: np.ndarray) -> np.ndarray:
        """Push the quantized flow through the current module; return its output."""
        m = self.net.modules[self.position]
        x_hat = self.quantize_input(self._q_act)
        self._q_act = m.activate(m.linear(x_hat, quantized_weight))
        self.position += 1
        return self._q_act


def capture_flows(net: NetworkSpec, quantized_prefix, calib: CalibrationSet,
                  config: QuantConfig, module_index: int):
    """Stateless capture for ``module_index`` given the quantized weights before it."""
    if not 0 <= module_index < len(net):
        raise IndexError(f"module index {module_index} out of range")
    if len(quantized_prefix) != module_index:
        raise ValueError(f"prefix has {len(quantized_prefix)} weights, expected {module_index}")
    flow = DualFlow(net, calib, config)
    for w in quantized_prefix:
        flow.advance(np.asarray(w, dtype=np.float64))
    return flow.capture()
