# src/layers.py
"""
layers.py
=========

Stateful layer objects and the `Network` container built from a ModelSpec.

Each layer wraps one tensor_engine operation, owns its named Parameters
(`conv1.kernel`, `lstm1.recurrent`, `bn1.gamma`, ...) and knows how it
transforms a per-sample shape, which is how `model_zoo.build` produces the
shape trace and detects underflow before any weights are allocated.

Shapes exclude the batch axis: images are (H, W, C), sequences (T, F),
vectors (F,).
"""

from pathlib import Path

import numpy as np

from . import tensor_engine as te
from .errors import BuildError, ShapeError, StateError
from .tensor_engine import Parameter, Tensor


class Layer:
    kind = "layer"

    def __init__(self, name: str):
        self.name = name

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return shape

    def forward(self, x: Tensor, training: bool) -> Tensor:
        raise NotImplementedError

    def parameters(self) -> list[Parameter]:
        return []

    def buffers(self) -> dict[str, np.ndarray]:
        return {}


class Conv2DLayer(Layer):
    kind = "conv2d"

    def __init__(self, name, filters: int, kernel: tuple[int, int], padding: str = "valid"):
        super().__init__(name)
        self.filters = filters
        self.kernel_size = tuple(kernel)
        self.padding = padding
        self.kernel: Parameter | None = None
        self.bias: Parameter | None = None

    def _pads(self) -> tuple[int, int]:
        if self.padding == "same":
            return self.kernel_size[0] // 2, self.kernel_size[1] // 2
        return 0, 0

    def output_shape(self, shape):
        if len(shape) != 3:
            raise ValueError(f"expects an (H, W, C) image, got {shape}")
        h, w, _ = shape
        ph, pw = self._pads()
        kh, kw = self.kernel_size
        oh, ow = h + 2 * ph - kh + 1, w + 2 * pw - kw + 1
        if oh < 1 or ow < 1:
            raise ValueError(f"a {kh}×{kw} kernel does not fit an {h}×{w} input")
        return oh, ow, self.filters

    def init(self, rng, shape, dtype):
        kh, kw = self.kernel_size
        c_in = shape[2]
        self.kernel = Parameter(
            te.glorot_uniform(rng, (kh, kw, c_in, self.filters), kh * kw * c_in, kh * kw * self.filters, dtype),
            f"{self.name}.kernel",
        )
        self.bias = Parameter(np.zeros(self.filters, dtype), f"{self.name}.bias")

    def forward(self, x, training):
        return te.conv2d(te.pad2d(x, *self._pads()), self.kernel, self.bias)

    def parameters(self):
        return [self.kernel, self.bias]


class ActivationLayer(Layer):
    kind = "activation"

    def __init__(self, name, activation: str):
        super().__init__(name)
        self.activation = activation

    def forward(self, x, training):
        return te.activation(x, self.activation)


class MaxPoolLayer(Layer):
    kind = "maxpool"

    def __init__(self, name, pool: tuple[int, int] = (2, 2)):
        super().__init__(name)
        self.pool = tuple(pool)

    def output_shape(self, shape):
        if len(shape) != 3:
            raise ValueError(f"expects an (H, W, C) image, got {shape}")
        h, w, c = shape
        ph, pw = self.pool
        if h < ph or w < pw:
            raise ValueError(f"a {ph}×{pw} pool does not fit an {h}×{w} input")
        return h // ph, w // pw, c

    def forward(self, x, training):
        return te.maxpool2d(x, self.pool)


class ReshapeToSequenceLayer(Layer):
    """(H, W, C) → (W, H·C): the width (time-frame) axis becomes the sequence axis."""

    kind = "reshape_to_sequence"

    def output_shape(self, shape):
        if len(shape) != 3:
            raise ValueError(f"expects an (H, W, C) image, got {shape}")
        h, w, c = shape
        return w, h * c

    def forward(self, x, training):
        b, h, w, c = x.shape
        return te.reshape(te.transpose(x, (0, 2, 1, 3)), (b, w, h * c))


class LSTMLayer(Layer):
    kind = "lstm"

    def __init__(self, name, units: int, return_sequences: bool = True):
        super().__init__(name)
        self.units = units
        self.return_sequences = return_sequences

    def output_shape(self, shape):
        if len(shape) != 2:
            raise ValueError(f"expects a (T, F) sequence, got {shape}")
        return (shape[0], self.units) if self.return_sequences else (self.units,)

    def init(self, rng, shape, dtype):
        features, u = shape[1], self.units
        self.kernel = Parameter(te.glorot_uniform(rng, (features, 4 * u), features, 4 * u, dtype), f"{self.name}.kernel")
        self.recurrent = Parameter(te.recurrent_uniform(rng, u, dtype), f"{self.name}.recurrent")
        self.bias = Parameter(te.lstm_bias(u, dtype), f"{self.name}.bias")

    def forward(self, x, training):
        return te.lstm_sequence(x, self.kernel, self.recurrent, self.bias, self.units, self.return_sequences)

    def parameters(self):
        return [self.kernel, self.recurrent, self.bias]


class FlattenLayer(Layer):
    kind = "flatten"

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, training):
        return te.flatten(x)


class BatchNormLayer(Layer):
    kind = "batchnorm"

    def __init__(self, name, momentum: float = 0.9, eps: float = 1e-5):
        super().__init__(name)
        self.momentum = momentum
        self.eps = eps

    def init(self, rng, shape, dtype):
        f = shape[-1]
        self.gamma = Parameter(np.ones(f, dtype), f"{self.name}.gamma")
        self.beta = Parameter(np.zeros(f, dtype), f"{self.name}.beta")
        self.running_mean = np.zeros(f, dtype)
        self.running_var = np.ones(f, dtype)

    def forward(self, x, training):
        return te.batchnorm(
            x, self.gamma, self.beta, self.running_mean, self.running_var, training, self.momentum, self.eps
        )

    def parameters(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return {f"{self.name}.running_mean": self.running_mean, f"{self.name}.running_var": self.running_var}


class DropoutLayer(Layer):
    kind = "dropout"

    def __init__(self, name, rate: float, network: "Network | None" = None):
        super().__init__(name)
        self.rate = rate
        self.network = network

    def forward(self, x, training):
        rng = self.network.rng if self.network is not None else None
        return te.dropout(x, self.rate, training, rng)


class DenseLayer(Layer):
    kind = "dense"

    def __init__(self, name, neurons: int):
        super().__init__(name)
        self.neurons = neurons

    def output_shape(self, shape):
        if len(shape) != 1:
            raise ValueError(f"expects a flat (F,) vector, got {shape}")
        return (self.neurons,)

    def init(self, rng, shape, dtype):
        f = shape[0]
        self.weight = Parameter(te.glorot_uniform(rng, (f, self.neurons), f, self.neurons, dtype), f"{self.name}.weight")
        self.bias = Parameter(np.zeros(self.neurons, dtype), f"{self.name}.bias")

    def forward(self, x, training):
        return te.dense(x, self.weight, self.bias)

    def parameters(self):
        return [self.weight, self.bias]


class SoftmaxLayer(Layer):
    """Marks the classifier head; the softmax itself is fused into the loss / predict_proba."""

    kind = "softmax"

    def forward(self, x, training):
        return x


class Network:
    """Linear stack of layers with a named parameter registry."""

    def __init__(self, name: str, layers: list[Layer], input_shape: tuple[int, int], seed: int = 0, dtype=np.float32):
        self.name = name
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.dtype = np.dtype(dtype)
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.shape_trace: list[tuple[str, tuple[int, ...]]] = []
        self._pending_loss: Tensor | None = None

        shape: tuple[int, ...] = (*self.input_shape, 1)
        init_rng = np.random.default_rng(seed)
        for index, layer in enumerate(layers, start=1):
            if isinstance(layer, DropoutLayer):
                layer.network = self
            try:
                out_shape = layer.output_shape(shape)
            except ValueError as e:
                raise BuildError(
                    f"Layer {index} ({layer.kind} '{layer.name}') cannot accept incoming shape {shape}: {e}."
                ) from None
            if hasattr(layer, "init"):
                layer.init(init_rng, shape, self.dtype)
            self.shape_trace.append((layer.name, out_shape))
            shape = out_shape
        self.output_shape = shape

    # -- registry -------------------------------------------------------
    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def named_parameters(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for layer in self.layers:
            out.update(layer.buffers())
        return out

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    @property
    def num_classes(self) -> int:
        return int(self.output_shape[0])

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        """Copies of every parameter and buffer, in registry order."""
        state = {p.name: p.data.copy() for p in self.parameters()}
        state.update({k: v.copy() for k, v in self.buffers().items()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params, buffers = self.named_parameters(), self.buffers()
        expected = set(params) | set(buffers)
        if set(state) != expected:
            missing, extra = sorted(expected - set(state)), sorted(set(state) - expected)
            raise ShapeError(f"State does not match network '{self.name}': missing {missing}, unexpected {extra}.")
        for name, value in state.items():
            target = params[name].data if name in params else buffers[name]
            if target.shape != value.shape:
                raise ShapeError(f"State entry '{name}' has shape {value.shape}, network expects {target.shape}.")
            target[...] = value

    def save(self, path: str | Path) -> Path:
        return te.write_checkpoint(path, self.state_dict())

    def load(self, path: str | Path) -> None:
        self.load_state_dict(te.read_checkpoint(path))

    # -- execution ------------------------------------------------------
    def _as_input(self, x) -> Tensor:
        data = x.data if isinstance(x, Tensor) else np.asarray(x)
        if data.ndim == 3:
            data = data[..., None]
        if data.ndim != 4 or data.shape[1:3] != self.input_shape:
            raise ShapeError(
                f"Network '{self.name}' expects features of shape {self.input_shape}, got {tuple(data.shape[1:3])}."
            )
        return Tensor(data.astype(self.dtype, copy=False))

    def forward(self, x, training: bool = False) -> Tensor:
        """Logits for a batch [B × bands × frames] (or [B × bands × frames × 1])."""
        out = self._as_input(x)
        for layer in self.layers:
            out = layer.forward(out, training)
        return out

    def loss(self, x, labels, training: bool = True) -> tuple[Tensor, np.ndarray]:
        loss, probs = te.softmax_cross_entropy(self.forward(x, training), labels)
        self._pending_loss = loss
        return loss, probs

    def backward(self) -> dict[str, np.ndarray]:
        """Back-propagate the loss recorded by the last `loss()` call."""
        if self._pending_loss is None:
            raise StateError(f"Network '{self.name}': backward() called before a forward pass recorded a loss.")
        loss, self._pending_loss = self._pending_loss, None
        return te.backward(loss, self.parameters())

    def predict_proba(self, x) -> np.ndarray:
        with te.no_grad():
            return te.softmax(self.forward(x, training=False).data.astype(np.float64))
