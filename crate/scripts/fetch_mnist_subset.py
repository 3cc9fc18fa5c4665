#!/usr/bin/env python3
"""Build a 10,000-digit MNIST subset in IDX format.

The digits come from the `mnist` npm package (v1.1.0), which bundles 1,000
MNIST samples per class as JSON arrays of intensities in [0, 1]. They are
re-quantized to bytes, shuffled with a fixed seed and written as gzip
compressed IDX files:

    data/mnist/mnist10k-images-idx3-ubyte.gz
    data/mnist/mnist10k-labels-idx1-ubyte.gz

Usage: python3 scripts/fetch_mnist_subset.py [path/to/npm/package]
"""
import gzip
import json
import os
import random
import struct
import subprocess
import sys
import tarfile
import tempfile

SIDE = 28
SEED = 20240917


def package_dir(argv):
    if len(argv) > 1:
        return argv[1], None
    tmp = tempfile.mkdtemp()
    subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True)
    with tarfile.open(os.path.join(tmp, "mnist-1.1.0.tgz")) as tar:
        tar.extractall(tmp)
    return os.path.join(tmp, "package"), tmp


def main():
    pkg, _ = package_dir(sys.argv)
    samples = []
    for digit in range(10):
        with open(os.path.join(pkg, "src", "digits", f"{digit}.json")) as f:
            raw = json.load(f)["data"]
        n = len(raw) // (SIDE * SIDE)
        for i in range(n):
            px = raw[i * SIDE * SIDE:(i + 1) * SIDE * SIDE]
            samples.append((digit, bytes(min(255, max(0, round(v * 255))) for v in px)))
    random.Random(SEED).shuffle(samples)

    out = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data", "mnist")
    os.makedirs(out, exist_ok=True)
    n = len(samples)
    # mtime=0 keeps the archives byte-stable across runs
    with gzip.GzipFile(os.path.join(out, "mnist10k-images-idx3-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, n, SIDE, SIDE))
        for _, px in samples:
            f.write(px)
    with gzip.GzipFile(os.path.join(out, "mnist10k-labels-idx1-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(bytes(d for d, _ in samples))
    print(f"wrote {n} digits to {os.path.normpath(out)}")


if __name__ == "__main__":
    main()
