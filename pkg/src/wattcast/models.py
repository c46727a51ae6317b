"""Four forecaster families over the autodiff engine: LSTM, CNN, CNN-LSTM, TCN.

Every model maps a batch of context windows (batch, n_timesteps, 1) to one
normalized prediction per row. Parameter initialization is Glorot-uniform,
fully determined by the spec seed.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import engine as ng
from .engine import Param, Tensor

FAMILIES = ("LSTM", "CNN", "CNN_LSTM", "TCN")

# hyperparameters owned by the training loop, not the architecture
TRAINING_KEYS = frozenset({"learning_rate", "batch_size"})


class BuildError(ValueError):
    """A model spec that cannot produce a working architecture."""


@dataclass(frozen=True)
class ModelSpec:
    """Family + architecture hyperparameters + window length + init seed."""

    family: str
    n_timesteps: int
    seed: int
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise BuildError(f"unknown family {self.family!r}, expected one of {FAMILIES}")
        if self.n_timesteps < 1:
            raise BuildError(f"n_timesteps must be >= 1, got {self.n_timesteps}")
        object.__setattr__(self, "params", dict(self.params))


def strip_training_params(params: Mapping[str, Any]) -> dict[str, Any]:
    """Drop optimizer-side keys so the remainder describes architecture only."""
    return {k: v for k, v in params.items() if k not in TRAINING_KEYS}


def _require(params: Mapping[str, Any], family: str, keys: dict[str, Any]) -> dict:
    """Check a family's key set: required keys present, no strays, defaults filled."""
    out = dict(keys)
    missing = [k for k, v in keys.items() if v is None and k not in params]
    if missing:
        raise BuildError(f"{family}: missing hyperparameters {missing}")
    unknown = [k for k in params if k not in keys]
    if unknown:
        raise BuildError(f"{family}: unknown hyperparameters {unknown}")
    out.update(params)
    return out


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def tcn_depth(n_timesteps: int, kernel: int) -> int:
    """Fewest doubling-dilation blocks whose receptive field covers the window."""
    if kernel < 2:
        raise BuildError(f"TCN kernel must be >= 2, got {kernel}")
    depth = 1
    while tcn_receptive_field(kernel, depth) < n_timesteps:
        depth += 1
    return depth


def tcn_receptive_field(kernel: int, depth: int) -> int:
    """Two convs per block, dilations 1, 2, ..., 2**(depth-1)."""
    return 1 + 2 * (kernel - 1) * (2**depth - 1)


class Forecaster:
    """Shared surface: parameter registry, train/eval flag, batched predict."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.training = False
        self._params: list[Param] = []
        self._rng = np.random.default_rng(spec.seed)

    def _param(self, name: str, data: np.ndarray) -> Param:
        p = Param(data, name)
        self._params.append(p)
        return p

    def parameters(self) -> list[Param]:
        return list(self._params)

    def named_parameters(self) -> dict[str, Param]:
        return {p.name: p for p in self._params}

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self._params))

    def train(self) -> "Forecaster":
        self.training = True
        return self

    def eval(self) -> "Forecaster":
        self.training = False
        return self

    def check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        expected = (self.spec.n_timesteps, 1)
        if x.ndim != 3 or x.shape[1:] != expected:
            raise ng.ShapeError(
                f"{self.spec.family}: expected input (batch, {expected[0]}, 1), "
                f"got {x.shape}"
            )
        return x

    def forward(self, x: np.ndarray) -> Tensor:
        raise NotImplementedError

    def predict(self, x: np.ndarray, chunk: int = 256) -> np.ndarray:
        """Deterministic inference: eval mode, no graph, chunked batches."""
        x = self.check_input(x)
        was_training = self.training
        self.training = False
        try:
            with ng.no_grad():
                pieces = [
                    self.forward(x[i : i + chunk]).data
                    for i in range(0, x.shape[0], chunk)
                ]
        finally:
            self.training = was_training
        return np.concatenate(pieces) if pieces else np.zeros(0)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self._params}

    def load_state_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        ng.restore(self._params, arrays)


class _MlpHead:
    """Hidden relu layer then a single linear output neuron."""

    def __init__(self, owner: Forecaster, prefix: str, in_size: int, hidden: int):
        rng = owner._rng
        self.w1 = owner._param(f"{prefix}.w1", _glorot(rng, (in_size, hidden), in_size, hidden))
        self.b1 = owner._param(f"{prefix}.b1", np.zeros(hidden))
        self.w2 = owner._param(f"{prefix}.w2", _glorot(rng, (hidden, 1), hidden, 1))
        self.b2 = owner._param(f"{prefix}.b2", np.zeros(1))

    def __call__(self, h: Tensor) -> Tensor:
        hidden = ng.relu(ng.matmul(h, self.w1) + self.b1)
        out = ng.matmul(hidden, self.w2) + self.b2
        return ng.reshape(out, (h.shape[0],))


class _LstmStack:
    """Stacked LSTM layers; returns either the sequence or the final state.

    Gate layout in the fused projection is [input, forget, candidate, output];
    the forget-gate bias starts at +1 so memory persists early in training.
    """

    def __init__(
        self,
        owner: Forecaster,
        prefix: str,
        in_size: int,
        hidden: int,
        layers: int,
        dropout_rate: float,
    ):
        self.owner = owner
        self.hidden = hidden
        self.layers = layers
        self.dropout_rate = dropout_rate
        self.weights: list[Param] = []
        self.biases: list[Param] = []
        for layer in range(layers):
            c = in_size if layer == 0 else hidden
            w = _glorot(owner._rng, (c + hidden, 4 * hidden), c + hidden, 4 * hidden)
            b = np.zeros(4 * hidden)
            b[hidden : 2 * hidden] = 1.0
            self.weights.append(owner._param(f"{prefix}.{layer}.w", w))
            self.biases.append(owner._param(f"{prefix}.{layer}.b", b))

    def __call__(self, seq: Tensor) -> Tensor:
        batch, t_len = seq.shape[0], seq.shape[1]
        h_size = self.hidden
        last_h: Tensor | None = None
        for layer in range(self.layers):
            w, b = self.weights[layer], self.biases[layer]
            h = Tensor(np.zeros((batch, h_size)))
            c = Tensor(np.zeros((batch, h_size)))
            keep_seq = layer < self.layers - 1
            steps: list[Tensor] = []
            for t in range(t_len):
                z = ng.matmul(ng.concat([h, seq[:, t, :]], axis=1), w) + b
                gate_i = ng.sigmoid(z[:, :h_size])
                gate_f = ng.sigmoid(z[:, h_size : 2 * h_size])
                cand = ng.tanh_(z[:, 2 * h_size : 3 * h_size])
                gate_o = ng.sigmoid(z[:, 3 * h_size :])
                c = gate_f * c + gate_i * cand
                h = gate_o * ng.tanh_(c)
                if keep_seq:
                    steps.append(ng.reshape(h, (batch, 1, h_size)))
            if keep_seq:
                seq = ng.concat(steps, axis=1)
                seq = ng.dropout(
                    seq, self.dropout_rate, self.owner._rng, self.owner.training
                )
            else:
                last_h = h
        assert last_h is not None
        return last_h


class LSTMForecaster(Forecaster):
    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        p = _require(
            spec.params,
            "LSTM",
            {"dropout_rate": None, "lstm_layers": None, "lstm_size": None, "mlp_size": None},
        )
        _check_sizes(p, ("lstm_layers", "lstm_size", "mlp_size"))
        _check_dropout(p["dropout_rate"])
        self.stack = _LstmStack(
            self, "lstm", 1, p["lstm_size"], p["lstm_layers"], p["dropout_rate"]
        )
        self.head = _MlpHead(self, "head", p["lstm_size"], p["mlp_size"])

    def forward(self, x: np.ndarray) -> Tensor:
        x = self.check_input(x)
        return self.head(self.stack(Tensor(x)))


class CNNForecaster(Forecaster):
    """Conv blocks with max-pool 2 between them, then flatten into the head."""

    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        p = _require(
            spec.params,
            "CNN",
            {"conv_blocks": None, "filters": None, "kernel_size": None, "mlp_size": None},
        )
        _check_sizes(p, ("conv_blocks", "filters", "kernel_size", "mlp_size"))
        k, f = p["kernel_size"], p["filters"]
        self.blocks = p["conv_blocks"]
        t_len = spec.n_timesteps
        for block in range(1, self.blocks):
            t_len //= 2
            if t_len == 0:
                raise BuildError(
                    f"CNN: pool {block} collapses a {spec.n_timesteps}-step window"
                )
        self.kernels = []
        self.conv_biases = []
        for block in range(self.blocks):
            c_in = 1 if block == 0 else f
            self.kernels.append(
                self._param(f"conv.{block}.w", _glorot(self._rng, (k, c_in, f), k * c_in, k * f))
            )
            self.conv_biases.append(self._param(f"conv.{block}.b", np.zeros(f)))
        self.flat_size = t_len * f
        self.head = _MlpHead(self, "head", self.flat_size, p["mlp_size"])

    def forward(self, x: np.ndarray) -> Tensor:
        x = self.check_input(x)
        seq = Tensor(x)
        for block in range(self.blocks):
            if block > 0:
                seq = ng.maxpool1d(seq, 2)
            seq = ng.relu(ng.conv1d(seq, self.kernels[block], self.conv_biases[block]))
        flat = ng.reshape(seq, (seq.shape[0], self.flat_size))
        return self.head(flat)


class CNNLSTMForecaster(Forecaster):
    """One conv block extracts local features, pooled once, then an LSTM stack."""

    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        p = _require(
            spec.params,
            "CNN_LSTM",
            {
                "filters": None,
                "kernel_size": None,
                "lstm_layers": None,
                "lstm_size": None,
                "mlp_size": 64,
                "dropout_rate": 0.0,
            },
        )
        _check_sizes(p, ("filters", "kernel_size", "lstm_layers", "lstm_size", "mlp_size"))
        _check_dropout(p["dropout_rate"])
        if spec.n_timesteps < 2:
            raise BuildError("CNN_LSTM: window must be >= 2 to survive the pool")
        k, f = p["kernel_size"], p["filters"]
        self.kernel = self._param("conv.w", _glorot(self._rng, (k, 1, f), k, k * f))
        self.conv_bias = self._param("conv.b", np.zeros(f))
        self.stack = _LstmStack(
            self, "lstm", f, p["lstm_size"], p["lstm_layers"], p["dropout_rate"]
        )
        self.head = _MlpHead(self, "head", p["lstm_size"], p["mlp_size"])

    def forward(self, x: np.ndarray) -> Tensor:
        x = self.check_input(x)
        seq = ng.relu(ng.conv1d(Tensor(x), self.kernel, self.conv_bias))
        seq = ng.maxpool1d(seq, 2)
        return self.head(self.stack(seq))


class TCNForecaster(Forecaster):
    """Residual blocks of two dilated causal convs; depth derived from the
    window so the receptive field always covers it."""

    def __init__(self, spec: ModelSpec):
        super().__init__(spec)
        p = _require(
            spec.params,
            "TCN",
            {"channels": None, "kernel_size": None, "dropout_rate": None},
        )
        _check_sizes(p, ("channels", "kernel_size"))
        _check_dropout(p["dropout_rate"])
        k, c = p["kernel_size"], p["channels"]
        self.kernel_size = k
        self.channels = c
        self.dropout_rate = p["dropout_rate"]
        self.depth = tcn_depth(spec.n_timesteps, k)
        self.conv_params: list[tuple] = []
        for block in range(self.depth):
            c_in = 1 if block == 0 else c
            w1 = self._param(
                f"block.{block}.conv1.w", _glorot(self._rng, (k, c_in, c), k * c_in, k * c)
            )
            b1 = self._param(f"block.{block}.conv1.b", np.zeros(c))
            w2 = self._param(
                f"block.{block}.conv2.w", _glorot(self._rng, (k, c, c), k * c, k * c)
            )
            b2 = self._param(f"block.{block}.conv2.b", np.zeros(c))
            skip = None
            if c_in != c:
                skip = self._param(
                    f"block.{block}.skip.w", _glorot(self._rng, (1, c_in, c), c_in, c)
                )
            self.conv_params.append((w1, b1, w2, b2, skip))
        self.head_w = self._param("head.w", _glorot(self._rng, (c, 1), c, 1))
        self.head_b = self._param("head.b", np.zeros(1))

    @property
    def receptive_field(self) -> int:
        return tcn_receptive_field(self.kernel_size, self.depth)

    def _features(self, seq: Tensor) -> Tensor:
        for block, (w1, b1, w2, b2, skip) in enumerate(self.conv_params):
            dilation = 2**block
            y = ng.relu(ng.conv1d(seq, w1, b1, dilation=dilation))
            y = ng.dropout(y, self.dropout_rate, self._rng, self.training)
            y = ng.relu(ng.conv1d(y, w2, b2, dilation=dilation))
            y = ng.dropout(y, self.dropout_rate, self._rng, self.training)
            residual = seq if skip is None else ng.conv1d(seq, skip)
            seq = y + residual
        return seq

    def feature_sequence(self, x: np.ndarray) -> np.ndarray:
        """Pre-head features (batch, time, channels) for causality probing."""
        x = self.check_input(x)
        was_training = self.training
        self.training = False
        try:
            with ng.no_grad():
                return self._features(Tensor(x)).data
        finally:
            self.training = was_training

    def forward(self, x: np.ndarray) -> Tensor:
        x = self.check_input(x)
        features = self._features(Tensor(x))
        last = features[:, -1, :]
        out = ng.matmul(last, self.head_w) + self.head_b
        return ng.reshape(out, (x.shape[0],))


def _check_sizes(params: Mapping[str, Any], keys: tuple[str, ...]) -> None:
    for key in keys:
        value = params[key]
        if not isinstance(value, (int, np.integer)) or value < 1:
            raise BuildError(f"{key} must be a positive integer, got {value!r}")


def _check_dropout(rate) -> None:
    if not 0.0 <= float(rate) < 1.0:
        raise BuildError(f"dropout_rate must be in [0, 1), got {rate!r}")


_BUILDERS = {
    "LSTM": LSTMForecaster,
    "CNN": CNNForecaster,
    "CNN_LSTM": CNNLSTMForecaster,
    "TCN": TCNForecaster,
}


def build(spec: ModelSpec) -> Forecaster:
    """Construct a family's forecaster with seed-deterministic parameters."""
    arch = strip_training_params(spec.params)
    if arch != dict(spec.params):
        spec = ModelSpec(spec.family, spec.n_timesteps, spec.seed, arch)
    return _BUILDERS[spec.family](spec)


# --- sidecar spec records (key=value text) ---------------------------------


def save_spec(path: str | Path, spec: ModelSpec) -> None:
    lines = [
        f"family={spec.family}",
        f"n_timesteps={spec.n_timesteps}",
        f"seed={spec.seed}",
    ]
    for key in sorted(spec.params):
        lines.append(f"{key}={spec.params[key]!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_spec(path: str | Path) -> ModelSpec:
    fields: dict[str, Any] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        try:
            fields[key] = ast.literal_eval(raw)
        except (ValueError, SyntaxError):
            fields[key] = raw
    family = str(fields.pop("family"))
    n_timesteps = int(fields.pop("n_timesteps"))
    seed = int(fields.pop("seed"))
    return ModelSpec(family, n_timesteps, seed, fields)
