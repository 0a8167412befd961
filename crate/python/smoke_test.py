# SPDX-License-Identifier: Apache-2.0
"""Smoke test for the Python extension.

Build it first, then point this script at the shared library's directory:

    cargo build --release -p sealedinfer-py
    cp target/release/libsealedinfer_py.so python/sealedinfer_py.so
    python3 python/smoke_test.py

SEALEDINFER_PY_DIR overrides the directory searched for the module.
"""

import math
import os
import pathlib
import random
import sys

HERE = pathlib.Path(__file__).resolve().parent
sys.path.insert(0, os.environ.get("SEALEDINFER_PY_DIR", str(HERE)))

import sealedinfer_py as si  # noqa: E402

FIXTURES = HERE.parent / "fixtures"


def main():
    fp = si.FixedPoint(64, 12)
    assert fp.decode(fp.encode([1.5, -2.25])) == [1.5, -2.25]

    server = si.Bundle.load(str(FIXTURES / "mini_cnn.json"))
    client = server.strip()
    assert not server.is_stripped and client.is_stripped
    assert client.weight_tensors == 0
    assert '"weights":' not in client.to_json()
    assert client.graph_hash == server.graph_hash
    assert si.Bundle.from_json(client.to_json()).is_stripped

    rng = random.Random(7)
    n = math.prod(server.input_shape)
    image = [rng.uniform(-1, 1) for _ in range(n)]

    want = si.eval_fixed(server, image, fp)
    out = si.secure_inference(server, image, fp, mode="dealer", seed=3)
    assert out["logits_ring"] == want, (out["logits_ring"], want)
    assert out["bytes_sent"] == out["server_bytes_received"]
    assert out["bytes_received"] == out["server_bytes_sent"]

    mlp = si.Bundle.load(str(FIXTURES / "tiny_mlp.json"))
    x = [rng.uniform(-1, 1) for _ in range(6)]
    he = si.secure_inference(mlp, x, fp, mode="2pc-he", seed=4, he_bits=256)
    exact = fp.decode(si.eval_fixed(mlp, x, fp))
    assert all(abs(a - b) <= 2 / 4096 for a, b in zip(he["logits"], exact))

    plain = si.eval_float(server, image)
    assert all(abs(a - b) < 0.05 for a, b in zip(plain, fp.decode(want)))

    assert si.auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    d, p = si.ks_two_sample([1.0, 2.0, 3.0], [2.0, 3.0, 4.0])
    assert abs(d - 1 / 3) < 1e-15 and 0 < p <= 1
    assert si.brier([1.0, 0.0], [1, 0]) == 0.0

    probs = [[rng.random()] for _ in range(60)]
    labels = [[int(p[0] + rng.gauss(0, 0.2) > 0.5)] for p in probs]
    report, table = si.compare_runs(probs, probs, labels, ["finding"], n_boot=100)
    assert report["classes"][0]["verdict"] == "Accepted"
    assert "Accepted" in table

    print("python smoke test passed")


if __name__ == "__main__":
    main()
