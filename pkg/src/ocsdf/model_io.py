"""Versioned JSON serialization for trained models.

Weights are stored row-major as decimal float64 (Python repr, the shortest
exact form), so load followed by save reproduces the file byte for byte.
The same container holds both the constrained network and the ReLU baseline,
distinguished by the "kind" field.
"""

import json

import numpy as np

from .data_io import BaselineNet
from .lipnet import Activation, LipNet, OrthoDense

FORMAT_VERSION = 1
KIND_LIPSCHITZ = "lipschitz"
KIND_BASELINE = "relu_baseline"


def model_to_dict(net, metadata=None):
    doc = {
        "format_version": FORMAT_VERSION,
        "metadata": metadata if metadata is not None else {},
    }
    if isinstance(net, LipNet):
        first = net.layers[0][0]
        doc.update({
            "kind": KIND_LIPSCHITZ,
            "input_dim": net.input_dim,
            "bjorck_iterations": first.bjorck_iterations,
            "power_iterations": first.power_iterations,
            "layers": [{
                "rows": layer.rows,
                "cols": layer.cols,
                "weights": layer.raw.ravel().tolist(),
                "bias": layer.bias.tolist(),
                "activation": {"kind": act.kind, "group_size": act.group_size},
            } for layer, act in net.layers],
        })
    elif isinstance(net, BaselineNet):
        doc.update({
            "kind": KIND_BASELINE,
            "input_dim": net.input_dim,
            "layers": [{
                "rows": W.shape[0],
                "cols": W.shape[1],
                "weights": W.ravel().tolist(),
                "bias": b.tolist(),
            } for W, b in zip(net.weights, net.biases)],
        })
    else:
        raise TypeError(f"cannot serialize {type(net).__name__}")
    return doc


def model_from_dict(doc):
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(
            f"unsupported model format version {doc.get('format_version')!r}")
    kind = doc.get("kind")
    if kind == KIND_LIPSCHITZ:
        layers = []
        for spec in doc["layers"]:
            raw = np.array(spec["weights"], dtype=np.float64).reshape(
                spec["rows"], spec["cols"])
            act = Activation(spec["activation"]["kind"],
                             spec["activation"]["group_size"])
            layers.append((OrthoDense(
                raw, bias=np.array(spec["bias"], dtype=np.float64),
                bjorck_iterations=doc["bjorck_iterations"],
                power_iterations=doc["power_iterations"]), act))
        net = LipNet(layers)
    elif kind == KIND_BASELINE:
        weights = [np.array(s["weights"], dtype=np.float64).reshape(s["rows"], s["cols"])
                   for s in doc["layers"]]
        biases = [np.array(s["bias"], dtype=np.float64) for s in doc["layers"]]
        net = BaselineNet(weights, biases)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return net, doc.get("metadata", {})


def save_model(net, path, metadata=None):
    doc = model_to_dict(net, metadata)
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path):
    """Returns (net, metadata)."""
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def is_constrained(net):
    return isinstance(net, LipNet)
