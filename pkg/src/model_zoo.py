# src/model_zoo.py
"""
model_zoo.py
============

Declarative network descriptions (`ModelSpec` / `LayerSpec`), the seven
shipped presets, JSON (de)serialisation and `build()`, which turns a spec into
an executable `layers.Network`.

Presets
-------
- `model-1`  baseline CNN-LSTM:
  conv 32 → conv 64 → pool → conv 64 → pool → reshape → lstm 64 → flatten →
  batchnorm → dropout 0.3 → dense N → softmax
- `model-2`  filters 64/128/128 plus a same-padded conv 128 + relu before the reshape
- `model-3`  two stacked LSTM layers of 128 units
- `model-4`  extra dense 128 + relu between dropout and the classifier
- `model-5`  fewer filters: 16/32/32
- `model-6`  batch normalisation after every convolution activation
- `best`     model-1 with dropout 0.4 and tanh as the first activation

The deltas for models 2-6 are declared choices; see docs/model-spec.md.
"""

import copy
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .errors import SpecParseError
from .features_dsp import FEATURE_KINDS, MEL_SPECTROGRAM
from .layers import (
    ActivationLayer,
    BatchNormLayer,
    Conv2DLayer,
    DenseLayer,
    DropoutLayer,
    FlattenLayer,
    Layer,
    LSTMLayer,
    MaxPoolLayer,
    Network,
    ReshapeToSequenceLayer,
    SoftmaxLayer,
)

SCHEMA_VERSION = 1
ACTIVATIONS = ("relu", "tanh")
PADDINGS = ("valid", "same")

# kind -> (required params, optional params with defaults)
LAYER_KINDS: dict[str, tuple[tuple[str, ...], dict[str, Any]]] = {
    "conv2d": (("filters", "kernel"), {"padding": "valid"}),
    "activation": (("activation",), {}),
    "maxpool": ((), {"pool": [2, 2]}),
    "reshape_to_sequence": ((), {}),
    "lstm": (("units",), {"return_sequences": True}),
    "flatten": ((), {}),
    "batchnorm": ((), {}),
    "dropout": (("rate",), {}),
    "dense": (("neurons",), {}),
    "softmax": ((), {}),
}

_SHORT_NAMES = {
    "conv2d": "conv",
    "activation": "act",
    "maxpool": "pool",
    "reshape_to_sequence": "reshape",
    "batchnorm": "bn",
}


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    params: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    layers: tuple[LayerSpec, ...]
    num_classes: int
    input_kind: str = MEL_SPECTROGRAM


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------
def _positive_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise SpecParseError(path, f"expected a positive integer, got {value!r}")
    return value


def _pair(value, path: str) -> list[int]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise SpecParseError(path, f"expected a [height, width] pair, got {value!r}")
    return [_positive_int(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _check_layer(layer: LayerSpec, path: str) -> LayerSpec:
    if layer.kind not in LAYER_KINDS:
        raise SpecParseError(f"{path}.kind", f"unknown layer kind {layer.kind!r}; expected one of {sorted(LAYER_KINDS)}")
    required, optional = LAYER_KINDS[layer.kind]
    params = dict(layer.params)
    for key in required:
        if key not in params:
            raise SpecParseError(f"{path}.params", f"missing {key}")
    unknown = sorted(set(params) - set(required) - set(optional))
    if unknown:
        raise SpecParseError(f"{path}.params", f"unexpected parameters {unknown} for {layer.kind}")
    for key, default in optional.items():
        params.setdefault(key, copy.deepcopy(default))

    p = f"{path}.params"
    if layer.kind == "conv2d":
        _positive_int(params["filters"], f"{p}.filters")
        params["kernel"] = _pair(params["kernel"], f"{p}.kernel")
        if params["padding"] not in PADDINGS:
            raise SpecParseError(f"{p}.padding", f"expected one of {list(PADDINGS)}, got {params['padding']!r}")
    elif layer.kind == "activation":
        if params["activation"] not in ACTIVATIONS:
            raise SpecParseError(f"{p}.activation", f"expected one of {list(ACTIVATIONS)}, got {params['activation']!r}")
    elif layer.kind == "maxpool":
        params["pool"] = _pair(params["pool"], f"{p}.pool")
    elif layer.kind == "lstm":
        _positive_int(params["units"], f"{p}.units")
        if not isinstance(params["return_sequences"], bool):
            raise SpecParseError(f"{p}.return_sequences", "expected a boolean")
    elif layer.kind == "dropout":
        rate = params["rate"]
        if isinstance(rate, bool) or not isinstance(rate, (int, float)) or not 0.0 <= rate < 1.0:
            raise SpecParseError(f"{p}.rate", f"expected a rate in [0, 1), got {rate!r}")
        params["rate"] = float(rate)
    elif layer.kind == "dense":
        _positive_int(params["neurons"], f"{p}.neurons")
    return LayerSpec(layer.kind, params)


def validate_spec(spec: ModelSpec) -> ModelSpec:
    """Check a spec and return it with optional parameters filled in."""
    if not spec.name:
        raise SpecParseError("name", "must be a non-empty string")
    num_classes = _positive_int(spec.num_classes, "num_classes")
    if num_classes < 2:
        raise SpecParseError("num_classes", f"needs at least 2 classes, got {num_classes}")
    if spec.input_kind not in FEATURE_KINDS:
        raise SpecParseError("input_kind", f"expected one of {list(FEATURE_KINDS)}, got {spec.input_kind!r}")

    layers = tuple(_check_layer(layer, f"layers[{i}]") for i, layer in enumerate(spec.layers))
    kinds = [layer.kind for layer in layers]
    if len(layers) < 2 or kinds[-2:] != ["dense", "softmax"]:
        raise SpecParseError("layers", "must end with dense(num_classes) followed by softmax")
    if layers[-2].params["neurons"] != num_classes:
        raise SpecParseError(
            f"layers[{len(layers) - 2}].params.neurons",
            f"final dense width {layers[-2].params['neurons']} differs from num_classes {num_classes}",
        )
    if kinds.count("reshape_to_sequence") != 1:
        raise SpecParseError("layers", f"needs exactly one reshape_to_sequence, found {kinds.count('reshape_to_sequence')}")
    if "lstm" in kinds and kinds.index("lstm") < kinds.index("reshape_to_sequence"):
        raise SpecParseError(f"layers[{kinds.index('lstm')}]", "lstm appears before reshape_to_sequence")
    return replace(spec, layers=layers)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------
def _conv(filters: int, padding: str = "valid") -> LayerSpec:
    return LayerSpec("conv2d", {"filters": filters, "kernel": [3, 3], "padding": padding})


def _act(name: str = "relu") -> LayerSpec:
    return LayerSpec("activation", {"activation": name})


def _pool() -> LayerSpec:
    return LayerSpec("maxpool", {"pool": [2, 2]})


def _lstm(units: int) -> LayerSpec:
    return LayerSpec("lstm", {"units": units, "return_sequences": True})


def _model_1_layers(
    num_classes: int,
    filters=(32, 64, 64),
    first_activation: str = "relu",
    dropout: float = 0.3,
    conv_batchnorm: bool = False,
    extra_conv: int | None = None,
    lstm_units=(64,),
    extra_dense: int | None = None,
) -> list[LayerSpec]:
    bn = [LayerSpec("batchnorm")] if conv_batchnorm else []
    layers = [_conv(filters[0]), _act(first_activation), *bn, _conv(filters[1]), _act(), *bn, _pool()]
    layers += [_conv(filters[2]), _act(), *bn, _pool()]
    if extra_conv is not None:
        layers += [_conv(extra_conv, padding="same"), _act(), *bn]
    layers.append(LayerSpec("reshape_to_sequence"))
    layers += [_lstm(u) for u in lstm_units]
    layers += [LayerSpec("flatten"), LayerSpec("batchnorm"), LayerSpec("dropout", {"rate": dropout})]
    if extra_dense is not None:
        layers += [LayerSpec("dense", {"neurons": extra_dense}), _act()]
    layers += [LayerSpec("dense", {"neurons": num_classes}), LayerSpec("softmax")]
    return layers


_PRESETS = {
    "model-1": {},
    "model-2": {"filters": (64, 128, 128), "extra_conv": 128},
    "model-3": {"lstm_units": (128, 128)},
    "model-4": {"extra_dense": 128},
    "model-5": {"filters": (16, 32, 32)},
    "model-6": {"conv_batchnorm": True},
    "best": {"dropout": 0.4, "first_activation": "tanh"},
}
PRESET_NAMES = tuple(_PRESETS)
_ALIASES = {"best-model": "best"}


def preset(name: str, num_classes: int, input_kind: str = MEL_SPECTROGRAM) -> ModelSpec:
    """Fully resolved spec for one of the shipped architectures."""
    key = _ALIASES.get(name, name)
    if key not in _PRESETS:
        raise ValueError(f"Unknown preset {name!r}; valid presets: {', '.join(PRESET_NAMES)}.")
    spec = ModelSpec(key, tuple(_model_1_layers(num_classes, **_PRESETS[key])), num_classes, input_kind)
    return validate_spec(spec)


def with_num_classes(spec: ModelSpec, num_classes: int) -> ModelSpec:
    """Re-target a spec's classifier head to `num_classes` speakers."""
    layers = list(spec.layers)
    layers[-2] = LayerSpec("dense", {**layers[-2].params, "neurons": num_classes})
    return validate_spec(replace(spec, layers=tuple(layers), num_classes=num_classes))


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------
def spec_to_dict(spec: ModelSpec) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": spec.name,
        "num_classes": spec.num_classes,
        "input_kind": spec.input_kind,
        "layers": [{"kind": layer.kind, "params": dict(layer.params)} for layer in spec.layers],
    }


def serialize_spec(spec: ModelSpec) -> str:
    return json.dumps(spec_to_dict(spec), indent=2) + "\n"


def spec_from_dict(doc: Any) -> ModelSpec:
    if not isinstance(doc, dict):
        raise SpecParseError("$", "expected a JSON object")
    for key in ("schema_version", "name", "num_classes", "layers"):
        if key not in doc:
            raise SpecParseError("$", f"missing {key}")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SpecParseError("schema_version", f"unsupported version {doc['schema_version']!r}; expected {SCHEMA_VERSION}")
    if not isinstance(doc["layers"], list):
        raise SpecParseError("layers", "expected a list")

    layers = []
    for i, entry in enumerate(doc["layers"]):
        if not isinstance(entry, dict) or "kind" not in entry:
            raise SpecParseError(f"layers[{i}]", "missing kind")
        params = entry.get("params", {})
        if not isinstance(params, dict):
            raise SpecParseError(f"layers[{i}].params", "expected an object")
        layers.append(LayerSpec(entry["kind"], dict(params)))
    spec = ModelSpec(
        name=doc["name"],
        layers=tuple(layers),
        num_classes=doc["num_classes"],
        input_kind=doc.get("input_kind", MEL_SPECTROGRAM),
    )
    return validate_spec(spec)


def parse_spec(text: str) -> ModelSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecParseError("$", f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    return spec_from_dict(doc)


def load_spec(path: str | Path) -> ModelSpec:
    path = Path(path)
    try:
        return parse_spec(path.read_text(encoding="utf-8"))
    except SpecParseError as e:
        raise SpecParseError(f"{path.name}:{e.path}", e.message) from None


def write_spec(spec: ModelSpec, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_spec(spec), encoding="utf-8")
    return path


def resolve_spec(name_or_path: str, num_classes: int, input_kind: str = MEL_SPECTROGRAM) -> ModelSpec:
    """A preset name, or a spec JSON file re-targeted to `num_classes`."""
    if name_or_path in _PRESETS or name_or_path in _ALIASES:
        return preset(name_or_path, num_classes, input_kind)
    spec = load_spec(name_or_path)
    spec = replace(spec, input_kind=input_kind)
    return spec if spec.num_classes == num_classes else with_num_classes(spec, num_classes)


# ---------------------------------------------------------------------------
# build
# ---------------------------------------------------------------------------
def _make_layer(layer: LayerSpec, name: str) -> Layer:
    p = layer.params
    if layer.kind == "conv2d":
        return Conv2DLayer(name, p["filters"], tuple(p["kernel"]), p["padding"])
    if layer.kind == "activation":
        return ActivationLayer(name, p["activation"])
    if layer.kind == "maxpool":
        return MaxPoolLayer(name, tuple(p["pool"]))
    if layer.kind == "reshape_to_sequence":
        return ReshapeToSequenceLayer(name)
    if layer.kind == "lstm":
        return LSTMLayer(name, p["units"], p["return_sequences"])
    if layer.kind == "flatten":
        return FlattenLayer(name)
    if layer.kind == "batchnorm":
        return BatchNormLayer(name)
    if layer.kind == "dropout":
        return DropoutLayer(name, p["rate"])
    if layer.kind == "dense":
        return DenseLayer(name, p["neurons"])
    return SoftmaxLayer(name)


def build(spec: ModelSpec, input_shape: tuple[int, int], seed: int = 0, dtype=np.float32) -> Network:
    """Instantiate `spec` for [bands × frames] inputs with seeded initialisation."""
    bands, frames = input_shape
    if bands < 1 or frames < 1:
        raise ValueError(f"input_shape must be positive, got {input_shape}")
    spec = validate_spec(spec)
    counters: dict[str, int] = {}
    layers = []
    for layer in spec.layers:
        short = _SHORT_NAMES.get(layer.kind, layer.kind)
        counters[short] = counters.get(short, 0) + 1
        layers.append(_make_layer(layer, f"{short}{counters[short]}"))
    return Network(spec.name, layers, (int(bands), int(frames)), seed=seed, dtype=dtype)


def parameter_count(spec: ModelSpec, input_shape: tuple[int, int]) -> int:
    return build(spec, input_shape).parameter_count()
