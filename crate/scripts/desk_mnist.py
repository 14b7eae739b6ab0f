#!/usr/bin/env python3
"""Build the desk-scale MNIST IDX files from the `mnist` npm package.

The npm package (https://www.npmjs.com/package/mnist, v1.1.0) ships 10,000
MNIST digits as JSON arrays of intensities x/255 rounded to three decimals,
which round-trips losslessly back to bytes. This script shuffles them with a
fixed seed and writes gzipped IDX files:

    train-images-idx3-ubyte.gz / train-labels-idx1-ubyte.gz   (8,000 images)
    t10k-images-idx3-ubyte.gz  / t10k-labels-idx1-ubyte.gz    (2,000 images)

Usage:
    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/desk_mnist.py package/src/digits data/mnist-desk
"""
import gzip
import json
import os
import struct
import sys

import numpy as np

N_TRAIN = 8000


def write_idx(path, magic, dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload.tobytes())


def main(src, dst):
    images, labels = [], []
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as f:
            raw = np.asarray(json.load(f)["data"], dtype=np.float64)
        px = np.rint(raw * 255.0).astype(np.uint8).reshape(-1, 784)
        images.append(px)
        labels.append(np.full(len(px), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = np.random.default_rng(0).permutation(len(labels))
    images, labels = images[order], labels[order]

    os.makedirs(dst, exist_ok=True)
    for prefix, sl in (("train", slice(0, N_TRAIN)), ("t10k", slice(N_TRAIN, None))):
        im, lb = images[sl], labels[sl]
        write_idx(os.path.join(dst, f"{prefix}-images-idx3-ubyte.gz"), 2051, (len(im), 28, 28), im)
        write_idx(os.path.join(dst, f"{prefix}-labels-idx1-ubyte.gz"), 2049, (len(lb),), lb)
        print(prefix, len(lb), np.bincount(lb, minlength=10).tolist())


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
