"""Small dense networks: deterministic init, exact gradients, SGD with layer
freezing, and a bit-exact parameter wire format.

Everything is float64. Operations return new values and never mutate their
inputs, so specs and parameter sets are safe to share across threads.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
from dataclasses import dataclass

import numpy as np

PARAM_FORMAT_VERSION = 1
ACTIVATIONS = ("tanh", "identity")


class ParamCodecError(ValueError):
    """A parameter envelope could not be encoded or decoded."""


@dataclass(frozen=True)
class LayerSpec:
    """One dense layer: (out_dim x in_dim) weights plus bias, then activation."""

    in_dim: int
    out_dim: int
    activation: str = "tanh"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError(f"layer dims must be positive, got {self.in_dim}x{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class NetworkSpec:
    """Layer stack plus the length of the leading feature-extractor prefix.

    The prefix is the part that stays frozen during fine-tuning; it must be
    strictly shorter than the stack. The stack ends in a single identity
    output unit so the network emits one unbounded real value.
    """

    layers: tuple[LayerSpec, ...]
    feature_prefix_len: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for i, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.out_dim != b.in_dim:
                raise ValueError(f"layer {i} out_dim {a.out_dim} != layer {i + 1} in_dim {b.in_dim}")
        if self.layers[-1].activation != "identity":
            raise ValueError("output layer must use the identity activation")
        if self.layers[-1].out_dim != 1:
            raise ValueError("output dim must be 1")
        if not 0 <= self.feature_prefix_len < len(self.layers):
            raise ValueError(f"feature_prefix_len {self.feature_prefix_len} out of range")
        object.__setattr__(self, "digest", _spec_digest(self))

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def n_layers(self) -> int:
        return len(self.layers)


def _spec_digest(spec: NetworkSpec) -> str:
    doc = {
        "feature_prefix_len": spec.feature_prefix_len,
        "layers": [[l.in_dim, l.out_dim, l.activation] for l in spec.layers],
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def dense_spec(input_dim: int, hidden=(32, 32, 16), feature_prefix_len: int = 2) -> NetworkSpec:
    """Standard policy architecture: tanh hidden stack, single identity output."""
    dims = [input_dim, *hidden]
    layers = [LayerSpec(a, b, "tanh") for a, b in zip(dims, dims[1:])]
    layers.append(LayerSpec(dims[-1], 1, "identity"))
    return NetworkSpec(tuple(layers), feature_prefix_len)


def _param_array(a, shape) -> np.ndarray:
    if isinstance(a, np.ndarray) and a.dtype == np.float64 and not a.flags.writeable:
        arr = a
    else:
        arr = np.array(a, dtype=np.float64)
        arr.flags.writeable = False
    if arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("parameters must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class ParameterSet:
    """All weights and biases of one network, tied to its spec by digest.

    This is the only object that ever crosses the network between agents and
    the cloud. Arrays are read-only.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    spec_hash: str

    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def sq_norm(self) -> float:
        """Sum of squares over every weight and bias."""
        return float(sum(np.sum(w * w) for w in self.weights) + sum(np.sum(b * b) for b in self.biases))


def params_equal(a: ParameterSet, b: ParameterSet) -> bool:
    """Bit-exact equality, distinguishing 0.0 from -0.0."""
    if a.spec_hash != b.spec_hash or len(a.weights) != len(b.weights):
        return False
    for wa, wb in zip(a.weights, b.weights):
        if wa.shape != wb.shape or wa.tobytes() != wb.tobytes():
            return False
    for ba, bb in zip(a.biases, b.biases):
        if ba.shape != bb.shape or ba.tobytes() != bb.tobytes():
            return False
    return True


def params_from_arrays(spec: NetworkSpec, weights, biases) -> ParameterSet:
    """Build a ParameterSet from raw arrays, validating shapes against the spec."""
    if len(weights) != spec.n_layers or len(biases) != spec.n_layers:
        raise ValueError("layer count mismatch")
    ws = tuple(_param_array(w, (l.out_dim, l.in_dim)) for w, l in zip(weights, spec.layers))
    bs = tuple(_param_array(b, (l.out_dim,)) for b, l in zip(biases, spec.layers))
    return ParameterSet(ws, bs, spec.digest)


@dataclass(frozen=True, eq=False)
class Gradients:
    """Same shapes as a ParameterSet."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]


@dataclass(frozen=True, eq=False)
class Batch:
    """Training pairs: one input vector per row, one scalar target each."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        y = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"{x.shape[0]} inputs vs {y.shape[0]} targets")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)

    def __len__(self) -> int:
        return self.targets.shape[0]


def _check_pairing(spec: NetworkSpec, params: ParameterSet):
    if params.spec_hash != spec.digest:
        raise ValueError(f"parameter set {params.spec_hash} does not belong to spec {spec.digest}")


def init_params(spec: NetworkSpec, seed: int) -> ParameterSet:
    """Seeded Xavier-uniform weights, zero biases; same seed gives identical bits."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for layer in spec.layers:
        bound = np.sqrt(6.0 / (layer.in_dim + layer.out_dim))
        weights.append(rng.uniform(-bound, bound, size=(layer.out_dim, layer.in_dim)))
        biases.append(np.zeros(layer.out_dim))
    return params_from_arrays(spec, weights, biases)


def forward(spec: NetworkSpec, params: ParameterSet, x) -> float:
    """Evaluate the network on a single input vector."""
    _check_pairing(spec, params)
    v = np.asarray(x, dtype=np.float64).reshape(-1)
    if v.shape[0] != spec.input_dim:
        raise ValueError(f"input dim {v.shape[0]} != spec input dim {spec.input_dim}")
    for layer, w, b in zip(spec.layers, params.weights, params.biases):
        v = w @ v + b
        if layer.activation == "tanh":
            v = np.tanh(v)
    return float(v[0])


def forward_batch(spec: NetworkSpec, params: ParameterSet, inputs) -> np.ndarray:
    """Evaluate the network on an (n, input_dim) matrix, returning n outputs."""
    _check_pairing(spec, params)
    h = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if h.shape[1] != spec.input_dim:
        raise ValueError(f"input dim {h.shape[1]} != spec input dim {spec.input_dim}")
    for layer, w, b in zip(spec.layers, params.weights, params.biases):
        h = h @ w.T + b
        if layer.activation == "tanh":
            h = np.tanh(h)
    return h[:, 0]


def loss(spec: NetworkSpec, params: ParameterSet, batch: Batch, lam: float) -> float:
    """Mean squared error plus (lam/2) times the squared norm of all parameters.

    The norm includes biases as well as weights.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    residual = forward_batch(spec, params, batch.inputs) - batch.targets
    return float(np.mean(residual * residual)) + 0.5 * lam * params.sq_norm()


def grad(spec: NetworkSpec, params: ParameterSet, batch: Batch, lam: float) -> Gradients:
    """Exact gradient of loss() with respect to every weight and bias."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    _check_pairing(spec, params)
    x = batch.inputs
    if x.shape[1] != spec.input_dim:
        raise ValueError(f"input dim {x.shape[1]} != spec input dim {spec.input_dim}")
    m = x.shape[0]

    # Forward pass, keeping post-activation values per layer.
    acts = [x]
    h = x
    for layer, w, b in zip(spec.layers, params.weights, params.biases):
        h = h @ w.T + b
        if layer.activation == "tanh":
            h = np.tanh(h)
        acts.append(h)

    # d(mse)/d(output); output layer is identity by construction.
    delta = (2.0 / m) * (acts[-1][:, 0] - batch.targets).reshape(-1, 1)
    gw = [None] * spec.n_layers
    gb = [None] * spec.n_layers
    for k in range(spec.n_layers - 1, -1, -1):
        gw[k] = delta.T @ acts[k] + lam * params.weights[k]
        gb[k] = delta.sum(axis=0) + lam * params.biases[k]
        if k > 0:
            delta = delta @ params.weights[k]
            if spec.layers[k - 1].activation == "tanh":
                delta = delta * (1.0 - acts[k] * acts[k])
    return Gradients(tuple(gw), tuple(gb))


def sgd_step(params: ParameterSet, grads: Gradients, lr: float, frozen_prefix: int = 0) -> ParameterSet:
    """One gradient step; layers below frozen_prefix are passed through untouched."""
    n = len(params.weights)
    if len(grads.weights) != n or len(grads.biases) != n:
        raise ValueError("gradient layer count mismatch")
    if not 0 <= frozen_prefix < n:
        raise ValueError(f"frozen_prefix {frozen_prefix} out of range for {n} layers")
    if lr < 0:
        raise ValueError("lr must be nonnegative")
    weights, biases = [], []
    for k in range(n):
        if params.weights[k].shape != grads.weights[k].shape or params.biases[k].shape != grads.biases[k].shape:
            raise ValueError(f"gradient shape mismatch at layer {k}")
        if k < frozen_prefix:
            weights.append(params.weights[k])
            biases.append(params.biases[k])
        else:
            weights.append(params.weights[k] - lr * grads.weights[k])
            biases.append(params.biases[k] - lr * grads.biases[k])
    return ParameterSet(
        tuple(_param_array(w, w.shape) for w in weights),
        tuple(_param_array(b, b.shape) for b in biases),
        params.spec_hash,
    )


def finite_difference_gradients(spec: NetworkSpec, params: ParameterSet, batch: Batch,
                                lam: float, h: float = 1e-6) -> Gradients:
    """Central-difference gradient of loss(), one coordinate at a time."""
    gw, gb = [], []
    for k in range(spec.n_layers):
        def bump(which, idx, delta, k=k):
            ws = [w.copy() for w in params.weights]
            bs = [b.copy() for b in params.biases]
            (ws if which == "w" else bs)[k][idx] += delta
            return params_from_arrays(spec, ws, bs)

        gwk = np.zeros_like(params.weights[k])
        for idx in np.ndindex(gwk.shape):
            gwk[idx] = (loss(spec, bump("w", idx, h), batch, lam)
                        - loss(spec, bump("w", idx, -h), batch, lam)) / (2 * h)
        gbk = np.zeros_like(params.biases[k])
        for idx in np.ndindex(gbk.shape):
            gbk[idx] = (loss(spec, bump("b", idx, h), batch, lam)
                        - loss(spec, bump("b", idx, -h), batch, lam)) / (2 * h)
        gw.append(gwk)
        gb.append(gbk)
    return Gradients(tuple(gw), tuple(gb))


def max_relative_error(a: Gradients, b: Gradients) -> float:
    """Worst per-entry discrepancy, scaled by max(1, magnitude).

    The floor of 1 makes near-zero entries be judged absolutely, which keeps
    finite-difference round-off from dominating the score.
    """
    worst = 0.0
    for ga, gb_ in zip(list(a.weights) + list(a.biases), list(b.weights) + list(b.biases)):
        denom = np.maximum(1.0, np.maximum(np.abs(ga), np.abs(gb_)))
        worst = max(worst, float(np.max(np.abs(ga - gb_) / denom)))
    return worst


def gradient_check(spec: NetworkSpec, params: ParameterSet, batch: Batch,
                   lam: float, h: float = 1e-6) -> float:
    """Compare grad() against central finite differences; return the worst error."""
    return max_relative_error(grad(spec, params, batch, lam),
                              finite_difference_gradients(spec, params, batch, lam, h))


def _b64_floats(arr: np.ndarray) -> str:
    return base64.b64encode(arr.astype("<f8").tobytes(order="C")).decode("ascii")


def serialize_params(spec: NetworkSpec, params: ParameterSet) -> bytes:
    """Encode params as the canonical JSON envelope; output is byte-deterministic.

    Layout: {format_version, spec_hash, layers: [{w_b64, b_b64}]} with weights
    base64-encoded as little-endian float64 in row-major order.
    """
    _check_pairing(spec, params)
    doc = {
        "format_version": PARAM_FORMAT_VERSION,
        "spec_hash": params.spec_hash,
        "layers": [
            {"w_b64": _b64_floats(w), "b_b64": _b64_floats(b)}
            for w, b in zip(params.weights, params.biases)
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def deserialize_params(data: bytes) -> tuple[str, ParameterSet]:
    """Decode a parameter envelope, returning (spec_hash, params).

    Round trip through serialize_params is bit-exact. Shapes are recovered
    from the arrays themselves: out_dim = len(bias), in_dim = len(w) / out_dim.
    """
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParamCodecError(f"malformed parameter envelope: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParamCodecError("parameter envelope must be a JSON object")
    version = doc.get("format_version")
    if version != PARAM_FORMAT_VERSION:
        raise ParamCodecError(f"unsupported format_version {version!r}")
    spec_hash = doc.get("spec_hash")
    layers = doc.get("layers")
    if not isinstance(spec_hash, str) or not isinstance(layers, list) or not layers:
        raise ParamCodecError("parameter envelope missing spec_hash or layers")
    weights, biases = [], []
    for i, layer in enumerate(layers):
        if not isinstance(layer, dict) or "w_b64" not in layer or "b_b64" not in layer:
            raise ParamCodecError(f"layer {i} missing w_b64/b_b64")
        try:
            w_raw = base64.b64decode(layer["w_b64"], validate=True)
            b_raw = base64.b64decode(layer["b_b64"], validate=True)
        except (binascii.Error, TypeError, ValueError) as exc:
            raise ParamCodecError(f"layer {i} base64 error: {exc}") from exc
        if len(w_raw) % 8 or len(b_raw) % 8 or not b_raw:
            raise ParamCodecError(f"layer {i} byte length not a multiple of 8")
        w_flat = np.frombuffer(w_raw, dtype="<f8")
        b = np.frombuffer(b_raw, dtype="<f8")
        out_dim = b.shape[0]
        if w_flat.shape[0] == 0 or w_flat.shape[0] % out_dim:
            raise ParamCodecError(f"layer {i} weight count {w_flat.shape[0]} not divisible by {out_dim}")
        w = w_flat.reshape(out_dim, w_flat.shape[0] // out_dim)
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ParamCodecError(f"layer {i} contains non-finite values")
        weights.append(w)
        biases.append(b)
    ws = tuple(_param_array(w, w.shape) for w in weights)
    bs = tuple(_param_array(b, b.shape) for b in biases)
    return spec_hash, ParameterSet(ws, bs, spec_hash)
