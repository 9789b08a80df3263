# src/tensor_engine.py
"""
tensor_engine.py: a small reverse-mode differentiation engine on numpy.

Every operation returns a `Tensor` that remembers its parents and a closure
mapping the output gradient to parent gradients. `Tensor.backward()` walks the
recorded graph in reverse topological order and accumulates gradients into
the `Parameter` leaves. Only the layer set the CNN-LSTM classifiers need is
implemented:

    conv2d (valid, stride 1)   pad2d        maxpool2d (non-overlapping)
    dense                       lstm_sequence / lstm_cell
    batchnorm (train | infer)   dropout (inverted)
    relu / tanh / sigmoid       reshape / transpose / flatten / getitem / stack
    softmax_cross_entropy       elementwise +, -, *, matmul, sum, mean

Layouts: images are [batch × H × W × C]; sequences are [batch × T × F].

Training runs in float32; every op preserves the dtype of its inputs, so the
gradient checks in the test-suite run the same code in float64.

Checkpoints (`write_checkpoint` / `read_checkpoint`) use the VXW1 container:

    b"VXW1" | u32 manifest byte length | UTF-8 JSON manifest [{name, shape}, ...]
            | float32 little-endian blobs in manifest order
"""

import json
import os
import struct
import tempfile
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DecodeError, ShapeError, StateError

DEFAULT_DTYPE = np.float32

# Graph recording is switched per thread
_grad_mode = threading.local()


def grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad():
    """Run forward passes without recording a graph (inference)."""
    previous = grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


class Tensor:
    """N-dimensional value participating in reverse-mode differentiation."""

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.requires_grad = requires_grad
        self.name = name
        self.grad: np.ndarray | None = None
        self._parents: tuple["Tensor", ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._consumed = False

    # -- introspection --------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # -- graph traversal ------------------------------------------------
    def _topological_order(self) -> list["Tensor"]:
        order, seen = [], set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend((p, False) for p in node._parents if id(p) not in seen)
        return order

    def backward(self) -> None:
        """
        Accumulate d(self)/d(leaf) into every reachable leaf with requires_grad.

        A tensor that depends on no trainable leaf (a constant loss) leaves all
        gradients untouched. The graph is released afterwards; calling backward
        twice raises StateError.
        """
        if self._consumed:
            raise StateError("backward() called on a graph that was already consumed; run a new forward pass.")
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}.")
        if not self.requires_grad:
            return

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(self._topological_order()):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg
            node._release()

    def _release(self) -> None:
        self._parents = ()
        self._backward = None
        self._consumed = True

    # -- operators ------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Parameter(Tensor):
    """Trainable leaf; `grad` always has the value's shape and starts at zero."""

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True, name=name)
        self.grad = np.zeros_like(self.data)

    @property
    def value(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.shape}, dtype={self.dtype})"


@dataclass
class LstmState:
    hidden: Tensor
    cell: Tensor


def backward(loss: Tensor | None, parameters: Iterable[Parameter] = ()) -> dict[str, np.ndarray]:
    """
    Run reverse-mode differentiation from `loss` and return gradients by
    parameter name. Parameters not reachable from the loss keep zero gradient.
    """
    if loss is None:
        raise StateError("backward() called before any forward pass recorded a loss.")
    params = list(parameters)
    loss.backward()
    return {p.name: p.grad for p in params}


# -------------------------
# Graph construction helpers
# -------------------------

def _lift(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else DEFAULT_DTYPE))


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -------------------------
# Elementwise and structural ops
# -------------------------

def add(a, b) -> Tensor:
    a = _lift(a)
    b = _lift(b, a.dtype)
    return _result(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a = _lift(a)
    b = _lift(b, a.dtype)
    return _result(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a = _lift(a)
    b = _lift(b, a.dtype)
    return _result(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[-1] != b.shape[0] or b.ndim != 2:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}.")

    def grad_fn(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _result(a.data @ b.data, (a, b), grad_fn)


def sum_all(x: Tensor) -> Tensor:
    return _result(np.asarray(x.data.sum(), dtype=x.dtype), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    return _result(
        np.asarray(x.data.mean(), dtype=x.dtype), (x,),
        lambda g: (np.broadcast_to(g / n, x.shape).astype(x.dtype),),
    )


def reshape(x: Tensor, shape) -> Tensor:
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def flatten(x: Tensor) -> Tensor:
    """[batch × ...] → [batch × prod(...)], row-major."""
    return reshape(x, (x.shape[0], -1))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    inverse = np.argsort(axes)
    return _result(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def getitem(x: Tensor, index) -> Tensor:
    """Basic (slice / integer) indexing."""

    def grad_fn(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return _result(x.data[index], (x,), grad_fn)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)

    def grad_fn(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _result(np.stack([t.data for t in tensors], axis=axis), tensors, grad_fn)


def pad2d(x: Tensor, pad_h: int, pad_w: int) -> Tensor:
    """Zero-pad the H and W axes of [batch × H × W × C] symmetrically."""
    if pad_h == 0 and pad_w == 0:
        return x
    padded = np.pad(x.data, ((0, 0), (pad_h, pad_h), (pad_w, pad_w), (0, 0)))
    h, w = x.shape[1], x.shape[2]
    return _result(padded, (x,), lambda g: (g[:, pad_h:pad_h + h, pad_w:pad_w + w, :],))


# -------------------------
# Activations
# -------------------------

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1 - y * y),))


def _stable_sigmoid(v: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1 / (1 + e), e / (1 + e)).astype(v.dtype)


def sigmoid(x: Tensor) -> Tensor:
    y = _stable_sigmoid(x.data)
    return _result(y, (x,), lambda g: (g * y * (1 - y),))


ACTIVATIONS = {"relu": relu, "tanh": tanh, "sigmoid": sigmoid}


def activation(x: Tensor, name: str) -> Tensor:
    try:
        return ACTIVATIONS[name](x)
    except KeyError:
        raise ValueError(f"Unknown activation '{name}'; expected one of {sorted(ACTIVATIONS)}.") from None


# -------------------------
# Layers
# -------------------------

def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """
    Valid cross-correlation, stride 1, plus per-channel bias.

    x [B × H × W × Cin], kernel [kh × kw × Cin × Cout], bias [Cout]
    → [B × H−kh+1 × W−kw+1 × Cout]. Accumulated one kernel tap at a time.
    """
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and kernel, got {x.shape} and {kernel.shape}.")
    b, h, w, c_in = x.shape
    kh, kw, k_in, c_out = kernel.shape
    if c_in != k_in:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape} vs kernel {kernel.shape}.")
    if h < kh or w < kw:
        raise ShapeError(f"conv2d input {x.shape} is smaller than kernel {kernel.shape}.")
    if bias.shape != (c_out,):
        raise ShapeError(f"conv2d bias shape {bias.shape} does not match kernel {kernel.shape}.")
    oh, ow = h - kh + 1, w - kw + 1
    xd, kd = x.data, kernel.data

    out = np.empty((b, oh, ow, c_out), dtype=xd.dtype)
    out[...] = bias.data
    for i in range(kh):
        for j in range(kw):
            out += np.tensordot(xd[:, i:i + oh, j:j + ow, :], kd[i, j], axes=([3], [0]))

    def grad_fn(g):
        gx = np.zeros_like(xd)
        gk = np.zeros_like(kd)
        for i in range(kh):
            for j in range(kw):
                window = xd[:, i:i + oh, j:j + ow, :]
                gk[i, j] = np.tensordot(window, g, axes=([0, 1, 2], [0, 1, 2]))
                gx[:, i:i + oh, j:j + ow, :] += np.tensordot(g, kd[i, j], axes=([3], [1]))
        return gx, gk, g.sum(axis=(0, 1, 2))

    return _result(out, (x, kernel, bias), grad_fn)


def maxpool2d(x: Tensor, pool: tuple[int, int] = (2, 2)) -> Tensor:
    """Non-overlapping max pooling; trailing rows/columns that do not fill a window are dropped."""
    ph, pw = pool
    b, h, w, c = x.shape
    if h < ph or w < pw:
        raise ShapeError(f"maxpool2d input {x.shape} is smaller than pool {pool}.")
    oh, ow = h // ph, w // pw
    cropped = x.data[:, :oh * ph, :ow * pw, :]
    windows = cropped.reshape(b, oh, ph, ow, pw, c).transpose(0, 1, 3, 5, 2, 4).reshape(b, oh, ow, c, ph * pw)
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def grad_fn(g):
        gw = np.zeros_like(windows)
        np.put_along_axis(gw, arg[..., None], g[..., None], axis=-1)
        gx = np.zeros_like(x.data)
        gx[:, :oh * ph, :ow * pw, :] = (
            gw.reshape(b, oh, ow, c, ph, pw).transpose(0, 1, 4, 2, 5, 3).reshape(b, oh * ph, ow * pw, c)
        )
        return (gx,)

    return _result(out, (x,), grad_fn)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map x · weight + bias."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"dense: input {x.shape} does not match weight {weight.shape}.")
    if bias.shape != (weight.shape[1],):
        raise ShapeError(f"dense: bias {bias.shape} does not match weight {weight.shape}.")
    return add(matmul(x, weight), bias)


def _lstm_gates(z: Tensor, units: int) -> dict[str, Tensor]:
    # Gate order in the packed kernels: input, forget, candidate, output
    return {
        "input": sigmoid(z[:, 0:units]),
        "forget": sigmoid(z[:, units:2 * units]),
        "candidate": tanh(z[:, 2 * units:3 * units]),
        "output": sigmoid(z[:, 3 * units:4 * units]),
    }


def _check_lstm(features: int, kernel: Tensor, recurrent: Tensor, bias: Tensor, units: int) -> None:
    if kernel.shape != (features, 4 * units):
        raise ShapeError(f"LSTM kernel {kernel.shape} does not match input features {features} × 4·{units}.")
    if recurrent.shape != (units, 4 * units):
        raise ShapeError(f"LSTM recurrent kernel {recurrent.shape} does not match {units} × 4·{units}.")
    if bias.shape != (4 * units,):
        raise ShapeError(f"LSTM bias {bias.shape} does not match 4·{units}.")


def _lstm_step(
    projected_t: Tensor, state: LstmState, recurrent: Tensor, bias: Tensor, units: int
) -> tuple[LstmState, dict[str, Tensor]]:
    # projected_t is the input already multiplied by the kernel
    z = projected_t + state.hidden @ recurrent + bias
    gates = _lstm_gates(z, units)
    cell = gates["forget"] * state.cell + gates["input"] * gates["candidate"]
    return LstmState(gates["output"] * tanh(cell), cell), gates


def lstm_cell(
    x_t: Tensor, state: LstmState, kernel: Tensor, recurrent: Tensor, bias: Tensor, units: int
) -> tuple[LstmState, dict[str, Tensor]]:
    """One LSTM step: returns the new state and the gate activations."""
    _check_lstm(x_t.shape[1], kernel, recurrent, bias, units)
    return _lstm_step(x_t @ kernel, state, recurrent, bias, units)


def zero_state(batch: int, units: int, dtype=DEFAULT_DTYPE) -> LstmState:
    return LstmState(Tensor(np.zeros((batch, units), dtype)), Tensor(np.zeros((batch, units), dtype)))


def lstm_sequence(
    x: Tensor, kernel: Tensor, recurrent: Tensor, bias: Tensor, units: int, return_sequences: bool = True
) -> Tensor:
    """
    Standard LSTM over x [B × T × F] from a zero state.

    Returns [B × T × units] (or [B × units] for the last step when
    return_sequences is False).
    """
    if x.ndim != 3 or x.shape[1] < 1:
        raise ShapeError(f"lstm_sequence expects [batch × T × F] with T >= 1, got {x.shape}.")
    b, steps, features = x.shape
    _check_lstm(features, kernel, recurrent, bias, units)

    # Input projections for all steps in one matmul
    projected = reshape(reshape(x, (b * steps, features)) @ kernel, (b, steps, 4 * units))
    state = zero_state(b, units, x.dtype)
    outputs = []
    for t in range(steps):
        state, _ = _lstm_step(projected[:, t, :], state, recurrent, bias, units)
        outputs.append(state.hidden)
    return stack(outputs, axis=1) if return_sequences else outputs[-1]


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """
    Batch normalization over every axis but the last.

    Train mode normalizes by batch moments and updates the running statistics
    in place (running = momentum · running + (1 − momentum) · batch); infer
    mode normalizes by the running statistics.
    """
    features = x.shape[-1]
    if gamma.shape != (features,) or beta.shape != (features,):
        raise ShapeError(f"batchnorm: gamma/beta {gamma.shape} do not match input {x.shape}.")
    axes = tuple(range(x.ndim - 1))
    xd = x.data

    if not training:
        inv_std = (1.0 / np.sqrt(running_var + eps)).astype(xd.dtype)
        x_hat = (xd - running_mean.astype(xd.dtype)) * inv_std
        out = gamma.data * x_hat + beta.data

        def infer_grad(g):
            return g * gamma.data * inv_std, (g * x_hat).sum(axis=axes), g.sum(axis=axes)

        return _result(out, (x, gamma, beta), infer_grad)

    if x.shape[0] < 2:
        raise ShapeError(f"batchnorm in train mode needs a batch of at least 2, got input {x.shape}.")
    n = int(np.prod([x.shape[a] for a in axes]))
    mean = xd.mean(axis=axes)
    var = xd.var(axis=axes)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (xd - mean) * inv_std
    out = gamma.data * x_hat + beta.data

    running_mean *= momentum
    running_mean += (1 - momentum) * mean
    running_var *= momentum
    running_var += (1 - momentum) * var

    def grad_fn(g):
        g_hat = g * gamma.data
        gx = (inv_std / n) * (n * g_hat - g_hat.sum(axis=axes) - x_hat * (g_hat * x_hat).sum(axis=axes))
        return gx.astype(xd.dtype), (g * x_hat).sum(axis=axes), g.sum(axis=axes)

    return _result(out.astype(xd.dtype), (x, gamma, beta), grad_fn)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | int | None = None) -> Tensor:
    """Inverted dropout: zero with probability `rate`, scale survivors by 1/(1 − rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"Dropout rate must lie in [0, 1), got {rate}.")
    if not training or rate == 0.0:
        return x
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    mask = (gen.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with the per-row max subtracted."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels) -> tuple[Tensor, np.ndarray]:
    """Mean negative log-probability of the true class, plus the probabilities."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"softmax_cross_entropy: logits {logits.shape} vs labels {labels.shape}.")
    k = logits.shape[1]
    bad = np.flatnonzero((labels < 0) | (labels >= k))
    if bad.size:
        raise IndexError(f"Label {labels[bad[0]]} at position {bad[0]} is outside [0, {k}).")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    probs = np.exp(log_probs)
    rows = np.arange(labels.size)
    loss = np.asarray(-log_probs[rows, labels].mean(), dtype=logits.dtype)

    def grad_fn(g):
        d = probs.copy()
        d[rows, labels] -= 1.0
        return (((g / labels.size) * d).astype(logits.dtype),)

    return _result(loss, (logits,), grad_fn), probs


# -------------------------
# Initializers
# -------------------------

def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int, dtype=DEFAULT_DTYPE):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def recurrent_uniform(rng: np.random.Generator, units: int, dtype=DEFAULT_DTYPE):
    limit = 1.0 / np.sqrt(units)
    return rng.uniform(-limit, limit, size=(units, 4 * units)).astype(dtype)


def lstm_bias(units: int, dtype=DEFAULT_DTYPE) -> np.ndarray:
    b = np.zeros(4 * units, dtype=dtype)
    b[units:2 * units] = 1.0  # forget gate
    return b


# -------------------------
# VXW1 checkpoints
# -------------------------

CHECKPOINT_MAGIC = b"VXW1"


def encode_checkpoint(arrays: dict[str, np.ndarray]) -> bytes:
    manifest = [{"name": name, "shape": list(a.shape)} for name, a in arrays.items()]
    header = json.dumps(manifest, separators=(",", ":")).encode("utf-8")
    blobs = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in arrays.values())
    return CHECKPOINT_MAGIC + struct.pack("<I", len(header)) + header + blobs


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> dict[str, np.ndarray]:
    if data[:4] != CHECKPOINT_MAGIC:
        raise DecodeError(f"VXW1 header: expected magic {CHECKPOINT_MAGIC!r}, found {data[:4]!r} in {source}.")
    if len(data) < 8:
        raise DecodeError(f"VXW1 header: {source} is truncated.")
    (length,) = struct.unpack_from("<I", data, 4)
    try:
        manifest = json.loads(data[8:8 + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DecodeError(f"VXW1 manifest: {source} has an unreadable manifest ({e}).") from e

    arrays, pos = {}, 8 + length
    for entry in manifest:
        shape = tuple(entry["shape"])
        n_bytes = int(np.prod(shape, dtype=np.int64)) * 4
        blob = data[pos:pos + n_bytes]
        if len(blob) != n_bytes:
            raise DecodeError(f"VXW1 blob '{entry['name']}': {source} is truncated.")
        arrays[entry["name"]] = np.frombuffer(blob, dtype="<f4").reshape(shape).astype(np.float32)
        pos += n_bytes
    return arrays


def atomic_write_bytes(path: str | Path, payload: bytes) -> Path:
    """Write to a uniquely named temporary sibling, then rename over the destination."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    f = tempfile.NamedTemporaryFile(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp", delete=False)
    tmp = Path(f.name)
    try:
        with f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    return path


def write_checkpoint(path: str | Path, arrays: dict[str, np.ndarray]) -> Path:
    return atomic_write_bytes(path, encode_checkpoint(arrays))


def read_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    return decode_checkpoint(path.read_bytes(), str(path))
