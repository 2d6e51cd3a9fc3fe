#!/usr/bin/env python3
"""Convert the 10k-digit MNIST subset shipped in the `mnist` npm package into
standard IDX files (train-* and t10k-*), split 80/20 per digit.

usage: npm pack mnist && tar xzf mnist-*.tgz
       python3 scripts/mnist_from_npm.py package/src/digits OUT_DIR
"""
import json
import os
import struct
import sys


def write_idx(path, magic, dims, payload):
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(bytes(payload))


def main(src, out):
    os.makedirs(out, exist_ok=True)
    split = {"train": ([], []), "t10k": ([], [])}
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as f:
            data = json.load(f)["data"]
        count = len(data) // 784
        cut = (count * 4) // 5
        for i in range(count):
            pixels = [min(255, max(0, round(v * 255))) for v in data[i * 784:(i + 1) * 784]]
            images, labels = split["train" if i < cut else "t10k"]
            images.extend(pixels)
            labels.append(digit)
    for name, (images, labels) in split.items():
        n = len(labels)
        write_idx(os.path.join(out, f"{name}-images-idx3-ubyte"), 0x803, [n, 28, 28], images)
        write_idx(os.path.join(out, f"{name}-labels-idx1-ubyte"), 0x801, [n], labels)
        print(f"{name}: {n} images")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
