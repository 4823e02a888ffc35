#!/usr/bin/env python3
"""Convert the 10k-digit MNIST subset bundled in the `mnist` npm package to IDX files.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset_to_idx.py package/src/digits data/mnist

Writes `mnist10k-images-idx3-ubyte` and `mnist10k-labels-idx1-ubyte`. Pixels are
stored in the package as value/255 rounded to three decimals; rounding back
to the nearest byte recovers the original 8-bit values.
"""
import json
import struct
import sys
from pathlib import Path


def main() -> None:
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    images = []
    labels = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for i in range(len(data) // 784):
            px = data[i * 784:(i + 1) * 784]
            images.append(bytes(min(255, max(0, round(v * 255))) for v in px))
            labels.append(digit)
    # Interleave digits deterministically so prefixes are class-balanced.
    order = sorted(range(len(labels)), key=lambda i: ((i * 2654435761) % 2**32, i))
    n = len(order)
    with open(dst / "mnist10k-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 2051, n, 28, 28))
        for i in order:
            f.write(images[i])
    with open(dst / "mnist10k-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 2049, n))
        f.write(bytes(labels[i] for i in order))
    print(f"wrote {n} images to {dst}")


if __name__ == "__main__":
    main()
