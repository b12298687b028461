"""Regenerate tests/golden/encoders_seed42.json.

Features are computed in numpy from the exported encoder weights, so the C++
encoders are checked against a separate implementation:

    build/tools/cocole export-weights --output /tmp/w.json
    python3 tools/make_golden.py /tmp/w.json tests/golden/encoders_seed42.json
"""
import json
import sys

import numpy as np


def l2n(v):
    return v / np.linalg.norm(v)


def encode_image(w, x):
    h = np.tanh(x @ np.array(w["image_hidden"]))
    return l2n(h @ np.array(w["image_out"]))


def encode_text(w, tokens):
    x = np.array(tokens)
    d = x.shape[1]
    for b in w["text_blocks"]:
        q, k, v = (x @ np.array(b[n]) for n in ("query", "key", "value"))
        s = q @ k.T / np.sqrt(d)
        s = np.where(np.tril(np.ones_like(s)) > 0, s, -np.inf)
        s = s - s.max(axis=1, keepdims=True)
        a = np.exp(s)
        a /= a.sum(axis=1, keepdims=True)
        x = np.tanh((x + (a @ v) @ np.array(b["out"])) @ np.array(b["mix"]))
    return l2n(x.mean(axis=0) @ np.array(w["text_out"]))


def main(weights_path, out_path):
    doc = json.load(open(weights_path))
    w, dims = doc["matrices"], doc["dims"]
    rng = np.random.default_rng(0)
    images = [rng.normal(size=dims["d_in"]) for _ in range(5)]
    sequences = [[rng.normal(scale=0.5, size=dims["d"]) for _ in range(n)] for n in (1, 3, 9)]
    golden = {
        "encoder_seed": doc["seed"],
        "dims": dims,
        "images": [x.tolist() for x in images],
        "image_features": [encode_image(w, x).tolist() for x in images],
        "token_sequences": [[t.tolist() for t in s] for s in sequences],
        "text_features": [encode_text(w, s).tolist() for s in sequences],
    }
    json.dump(golden, open(out_path, "w"))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
