#!/usr/bin/env python3
"""Convert the per-digit JSON dumps shipped with the `mnist` npm package
(10k MNIST digits, pixels stored as byte/255 rounded to 3 decimals) into
IDX files: 80% of each class goes to train, the rest to test.

usage: mnist_json_to_idx.py <package/src/digits> <out_dir>
"""
import json
import random
import struct
import sys
from pathlib import Path


def write_idx(path, magic, dims, payload):
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(bytes(payload))


def main():
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    train, test = [], []
    for digit in range(10):
        raw = json.loads((src / f"{digit}.json").read_text())["data"]
        n = len(raw) // 784
        images = [
            [min(255, max(0, round(v * 255))) for v in raw[i * 784:(i + 1) * 784]]
            for i in range(n)
        ]
        cut = (n * 8 + 9) // 10
        train += [(img, digit) for img in images[:cut]]
        test += [(img, digit) for img in images[cut:]]
    rng = random.Random(20200101)
    rng.shuffle(train)
    rng.shuffle(test)
    for name, rows in (("train", train), ("t10k", test)):
        pixels = [p for img, _ in rows for p in img]
        write_idx(out / f"{name}-images-idx3-ubyte", 0x803, (len(rows), 28, 28), pixels)
        write_idx(out / f"{name}-labels-idx1-ubyte", 0x801, (len(rows),), [y for _, y in rows])
        print(name, len(rows))


if __name__ == "__main__":
    main()
