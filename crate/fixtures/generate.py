# SPDX-License-Identifier: Apache-2.0
"""Regenerates the fixture manifests with fixed pseudo-random weights."""

import base64
import json
import math
import random
import struct
from pathlib import Path

HERE = Path(__file__).resolve().parent


def tensor(rng, shape, scale):
    n = math.prod(shape)
    data = struct.pack("<%df" % n, *(rng.uniform(-scale, scale) for _ in range(n)))
    return {"shape": shape, "data": base64.b64encode(data).decode()}


def conv(rng, oc, ic, k):
    s = 1.5 / math.sqrt(ic * k * k)
    return {"weight": tensor(rng, [oc, ic, k, k], s), "bias": tensor(rng, [oc], 0.1)}


def dense(rng, out, inp):
    s = 1.5 / math.sqrt(inp)
    return {"weight": tensor(rng, [out, inp], s), "bias": tensor(rng, [out], 0.1)}


def write(name, doc):
    (HERE / f"{name}.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def mini_cnn():
    rng = random.Random(20240501)
    layers = [
        {"id": "x", "kind": "Input"},
        {"id": "c1", "kind": "Conv2D", "out_channels": 4, "kernel": [3, 3], "padding": [1, 1]},
        {"id": "r1", "kind": "ReLU"},
        {"id": "p1", "kind": "MaxPool", "window": [2, 2], "stride": [2, 2]},
        {"id": "c2", "kind": "Conv2D", "out_channels": 8, "kernel": [3, 3], "padding": [1, 1]},
        {"id": "r2", "kind": "ReLU"},
        {"id": "gap", "kind": "GlobalAvgPool"},
        {"id": "fc", "kind": "Dense", "out_features": 3},
        {"id": "logits", "kind": "Output"},
    ]
    weights = {"c1": conv(rng, 4, 1, 3), "c2": conv(rng, 8, 4, 3), "fc": dense(rng, 3, 8)}
    write("mini_cnn", {"version": 1, "name": "mini_cnn", "input_shape": [1, 8, 8],
                       "output_width": 3, "layers": layers, "weights": weights})


def branchy():
    rng = random.Random(7)
    layers = [
        {"id": "x", "kind": "Input"},
        {"id": "c1", "kind": "Conv2D", "out_channels": 4, "kernel": [3, 3], "padding": [1, 1]},
        {"id": "bn", "kind": "BatchNormFolded"},
        {"id": "r1", "kind": "ReLU"},
        {"id": "cat", "kind": "Concat", "inputs": ["x", "r1"]},
        {"id": "ap", "kind": "AvgPool", "window": [2, 2], "stride": [2, 2]},
        {"id": "flat", "kind": "Flatten"},
        {"id": "fc", "kind": "Dense", "out_features": 2},
        {"id": "logits", "kind": "Output"},
    ]
    weights = {
        "c1": conv(rng, 4, 2, 3),
        "bn": {"scale": tensor(rng, [4], 1.0), "shift": tensor(rng, [4], 0.2)},
        "fc": dense(rng, 2, 24),
    }
    write("branchy", {"version": 1, "name": "branchy", "input_shape": [2, 4, 4],
                      "output_width": 2, "layers": layers, "weights": weights})


def tiny_mlp():
    rng = random.Random(3)
    layers = [
        {"id": "x", "kind": "Input"},
        {"id": "h", "kind": "Dense", "out_features": 8},
        {"id": "r", "kind": "ReLU"},
        {"id": "out", "kind": "Dense", "out_features": 2},
        {"id": "logits", "kind": "Output"},
    ]
    weights = {"h": dense(rng, 8, 6), "out": dense(rng, 2, 8)}
    write("tiny_mlp", {"version": 1, "name": "tiny_mlp", "input_shape": [6],
                       "output_width": 2, "layers": layers, "weights": weights})


if __name__ == "__main__":
    mini_cnn()
    branchy()
    tiny_mlp()
