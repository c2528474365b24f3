#!/usr/bin/env python3
"""Build gzipped IDX image/label files from per-class MNIST JSON digit files.

Expects a directory holding 0.json .. 9.json, each of the form
{"data": [flat pixel values in [0,1], 784 per sample]} as distributed by
the npm "mnist" package. Samples are written class by class in file order,
pixels requantized to uint8 (value * 255, rounded).

Usage: mnist_json_to_idx.py SRC_DIR OUT_DIR [BASENAME]
"""

import gzip
import json
import os
import struct
import sys

import numpy as np

SIDE = 28


def main(src_dir, out_dir, basename="mnist10k"):
    images = []
    labels = []
    for cls in range(10):
        path = os.path.join(src_dir, f"{cls}.json")
        with open(path) as f:
            flat = np.asarray(json.load(f)["data"], dtype=np.float64)
        if flat.size % (SIDE * SIDE) != 0:
            raise SystemExit(f"{path}: length {flat.size} is not a "
                             f"multiple of {SIDE * SIDE}")
        block = flat.reshape(-1, SIDE * SIDE)
        images.append(block)
        labels.append(np.full(block.shape[0], cls, dtype=np.uint8))
    x = np.concatenate(images)
    y = np.concatenate(labels)
    pixels = np.clip(np.round(x * 255.0), 0, 255).astype(np.uint8)

    os.makedirs(out_dir, exist_ok=True)
    img_path = os.path.join(out_dir, f"{basename}-images-idx3-ubyte.gz")
    lbl_path = os.path.join(out_dir, f"{basename}-labels-idx1-ubyte.gz")
    with open(img_path, "wb") as raw:
        with gzip.GzipFile(fileobj=raw, mode="wb", compresslevel=9,
                           mtime=0) as f:
            f.write(struct.pack(">IIII", 0x803, x.shape[0], SIDE, SIDE))
            f.write(pixels.tobytes())
    with open(lbl_path, "wb") as raw:
        with gzip.GzipFile(fileobj=raw, mode="wb", compresslevel=9,
                           mtime=0) as f:
            f.write(struct.pack(">II", 0x801, y.shape[0]))
            f.write(y.tobytes())
    print(f"{img_path}: {x.shape[0]} images")
    print(f"{lbl_path}: {y.shape[0]} labels")


if __name__ == "__main__":
    if len(sys.argv) < 3:
        raise SystemExit(__doc__)
    main(*sys.argv[1:4])
