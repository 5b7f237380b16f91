"""Dense feed-forward networks with manual backpropagation.

Everything is float64 and deliberately simple: layers are dense with an
optional bias and a relu or identity activation, batches are matrices with
samples in *columns*, and gradients are computed by hand so they can be
checked against finite differences.  Frozen layers (the inserted spectral
projections) take part in the forward pass but receive no gradients and are
never updated.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptFile, InvalidInput, InvalidState, VersionMismatch

CHECKPOINT_MAGIC = b"RMTK"
CHECKPOINT_VERSION = 1


@dataclass
class DenseLayer:
    weights: np.ndarray  # out x in
    bias: np.ndarray | None  # length out, or None (projection layers)
    activation: str = "relu"  # "relu" | "identity"
    frozen: bool = False

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.weights.shape[0],):
                raise InvalidInput("bias length must equal output width")
        if self.activation not in ("relu", "identity"):
            raise InvalidInput(f"unknown activation {self.activation!r}")

    @property
    def out_dim(self):
        return self.weights.shape[0]

    @property
    def in_dim(self):
        return self.weights.shape[1]


@dataclass
class Network:
    layers: list
    input_dim: int
    num_classes: int
    history: list = field(default_factory=list)  # (layer_id, d, k) events

    def __post_init__(self):
        self.check_dims()

    def check_dims(self):
        prev = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.in_dim != prev:
                raise InvalidInput(
                    f"layer {i} expects input {layer.in_dim}, got {prev}"
                )
            prev = layer.out_dim
        if self.layers and prev != self.num_classes:
            raise InvalidInput("final layer width must equal num_classes")

    def copy(self):
        return Network(
            layers=[
                DenseLayer(
                    weights=l.weights.copy(),
                    bias=None if l.bias is None else l.bias.copy(),
                    activation=l.activation,
                    frozen=l.frozen,
                )
                for l in self.layers
            ],
            input_dim=self.input_dim,
            num_classes=self.num_classes,
            history=list(self.history),
        )


def init_network(widths, input_dim, num_classes, rng_normal):
    """He-initialized relu MLP; ``rng_normal(shape)`` supplies the Gaussians.

    ``widths`` are the hidden widths; the final identity-activation layer maps
    to ``num_classes`` logits.
    """
    dims = [input_dim] + list(widths) + [num_classes]
    layers = []
    for i in range(len(dims) - 1):
        w = rng_normal((dims[i + 1], dims[i])) * np.sqrt(2.0 / dims[i])
        act = "identity" if i == len(dims) - 2 else "relu"
        layers.append(DenseLayer(weights=w, bias=np.zeros(dims[i + 1]), activation=act))
    return Network(layers=layers, input_dim=input_dim, num_classes=num_classes)


def forward(net, batch, capture_layer=None):
    """Run the network; optionally capture one layer's post-activation output.

    Returns ``(logits, trace)`` where trace is the d x b activation of the
    requested (non-frozen) layer, or None.  Activations for the whole pass
    are cached on the network for the subsequent backward call.
    """
    a = np.asarray(batch, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != net.input_dim:
        raise InvalidInput(
            f"batch must be {net.input_dim} x b, got {a.shape}"
        )
    if capture_layer is not None:
        if not 0 <= capture_layer < len(net.layers):
            raise InvalidInput(f"no layer {capture_layer}")
        if net.layers[capture_layer].frozen:
            raise InvalidInput("capture layer must be non-frozen")
    acts = [a]
    for layer in net.layers:
        z = layer.weights @ acts[-1]
        if layer.bias is not None:
            z = z + layer.bias[:, None]
        if layer.activation == "relu":
            z = np.maximum(z, 0.0)
        acts.append(z)
    net._cache = acts
    trace = None if capture_layer is None else acts[capture_layer + 1].copy()
    return acts[-1], trace


def backward(net, batch, labels, loss_grad_at_logits):
    """Backpropagate a logit-space gradient to per-layer parameter gradients.

    Requires a preceding :func:`forward` on the same batch (the cached
    activations are reused).  Returns ``{layer_index: (grad_w, grad_b)}`` for
    non-frozen layers only.
    """
    acts = getattr(net, "_cache", None)
    batch = np.asarray(batch, dtype=np.float64)
    if acts is None or acts[0].shape != batch.shape or not np.array_equal(acts[0], batch):
        raise InvalidState("no forward cache for this batch")
    g = np.asarray(loss_grad_at_logits, dtype=np.float64)
    if g.shape != acts[-1].shape:
        raise InvalidInput("gradient shape must match logits")
    grads = {}
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if not layer.frozen:
            gw = g @ acts[i].T
            gb = None if layer.bias is None else g.sum(axis=1)
            grads[i] = (gw, gb)
        if i > 0:
            g = layer.weights.T @ g
            if net.layers[i - 1].activation == "relu":
                g = g * (acts[i] > 0)
    return grads


def sgd_step(net, gradients, lr, momentum, state=None):
    """One momentum-SGD update: v = mu v + g; w -= lr v.

    ``state`` holds the velocity buffers between calls; pass the returned
    state back in to accumulate momentum.  Frozen layers are untouched.
    """
    if lr < 0 or not 0.0 <= momentum < 1.0:
        raise InvalidInput("need lr >= 0 and momentum in [0, 1)")
    if state is None:
        state = {}
    for i, (gw, gb) in gradients.items():
        layer = net.layers[i]
        if layer.frozen:
            continue
        vw, vb = state.get(i, (np.zeros_like(layer.weights),
                               None if layer.bias is None else np.zeros_like(layer.bias)))
        vw = momentum * vw + gw
        layer.weights = layer.weights - lr * vw
        if gb is not None:
            vb = momentum * vb + gb
            layer.bias = layer.bias - lr * vb
        state[i] = (vw, vb)
    return net, state


def param_count(net):
    """(trainable, frozen) parameter totals.

    Trainable counts weights plus biases of non-frozen layers; frozen counts
    the inserted projection entries separately so reductions can be reported
    with or without them.
    """
    trainable = 0
    frozen = 0
    for layer in net.layers:
        size = layer.weights.size + (0 if layer.bias is None else layer.bias.size)
        if layer.frozen:
            frozen += size
        else:
            trainable += size
    return trainable, frozen


@dataclass
class Checkpoint:
    format_version: int
    network: Network
    rng_state: bytes
    metrics: dict


def save_checkpoint(cp, path):
    """Write a checkpoint: magic, version, JSON header, rng state, raw f64."""
    header = {
        "input_dim": cp.network.input_dim,
        "num_classes": cp.network.num_classes,
        "history": [list(h) for h in cp.network.history],
        "layers": [
            {
                "out": l.out_dim,
                "in": l.in_dim,
                "activation": l.activation,
                "frozen": l.frozen,
                "has_bias": l.bias is not None,
            }
            for l in cp.network.layers
        ],
        "metrics": {k: cp.metrics[k] for k in sorted(cp.metrics)},
    }
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", cp.format_version))
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(struct.pack("<I", len(cp.rng_state)))
        fh.write(cp.rng_state)
        for layer in cp.network.layers:
            fh.write(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
            if layer.bias is not None:
                fh.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
        raise CorruptFile(f"{path}: not a checkpoint file")
    version = struct.unpack("<I", blob[4:8])[0]
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {CHECKPOINT_VERSION}")
    off = 8
    try:
        hlen = struct.unpack("<I", blob[off:off + 4])[0]
        off += 4
        header = json.loads(blob[off:off + hlen].decode("utf-8"))
        if len(blob[off:off + hlen]) < hlen:
            raise CorruptFile(f"{path}: truncated header")
        off += hlen
        rlen = struct.unpack("<I", blob[off:off + 4])[0]
        off += 4
        rng_state = blob[off:off + rlen]
        if len(rng_state) < rlen:
            raise CorruptFile(f"{path}: truncated rng state")
        off += rlen
        layers = []
        for spec in header["layers"]:
            out, inp = spec["out"], spec["in"]
            nbytes = out * inp * 8
            w = np.frombuffer(blob[off:off + nbytes], dtype="<f8")
            if w.size != out * inp:
                raise CorruptFile(f"{path}: truncated weights")
            off += nbytes
            w = w.reshape(out, inp).copy()
            bias = None
            if spec["has_bias"]:
                b = np.frombuffer(blob[off:off + out * 8], dtype="<f8")
                if b.size != out:
                    raise CorruptFile(f"{path}: truncated bias")
                off += out * 8
                bias = b.copy()
            layers.append(DenseLayer(weights=w, bias=bias,
                                     activation=spec["activation"], frozen=spec["frozen"]))
    except (KeyError, ValueError, struct.error) as e:
        raise CorruptFile(f"{path}: {e}") from e
    net = Network(
        layers=layers,
        input_dim=header["input_dim"],
        num_classes=header["num_classes"],
        history=[tuple(h) for h in header["history"]],
    )
    return Checkpoint(format_version=version, network=net,
                      rng_state=rng_state, metrics=dict(header["metrics"]))
