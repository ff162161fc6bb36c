#!/usr/bin/env python3
"""Build the desk-scale MNIST subset shipped in data/mnist/.

Source: the npm package `mnist` 1.1.0, which redistributes 10000 digits of
the original database as pixel/255 rounded to 3 places (rounding back to
0..255 is exact). 40 digits per class are held out as the test split, the
remaining 9600 form the training split. Both are written as gzipped IDX files
in the standard layout.
"""
import argparse
import gzip
import json
import os
import struct

import numpy as np


def write_idx_images(path, images):
    n, rows, cols = images.shape
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--npm-dir", required=True, help="extracted npm mnist package/src/digits")
    ap.add_argument("--test-per-class", type=int, default=40)
    ap.add_argument("--out", required=True)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    imgs, labels = [], []
    for d in range(10):
        with open(os.path.join(args.npm_dir, f"{d}.json")) as f:
            data = np.asarray(json.load(f)["data"], dtype=np.float64)
        data = np.rint(data * 255.0).clip(0, 255).reshape(-1, 28, 28)
        imgs.append(data)
        labels += [d] * len(data)
    imgs = np.concatenate(imgs)
    labels = np.asarray(labels)
    rng = np.random.default_rng(args.seed)
    test_idx = np.concatenate([
        rng.choice(np.flatnonzero(labels == d), args.test_per_class, replace=False)
        for d in range(10)])
    test_mask = np.zeros(len(labels), dtype=bool)
    test_mask[test_idx] = True
    train = rng.permutation(np.flatnonzero(~test_mask))
    test = rng.permutation(test_idx)
    write_idx_images(os.path.join(args.out, "train-images-idx3-ubyte.gz"), imgs[train])
    write_idx_labels(os.path.join(args.out, "train-labels-idx1-ubyte.gz"), labels[train])
    write_idx_images(os.path.join(args.out, "t10k-images-idx3-ubyte.gz"), imgs[test])
    write_idx_labels(os.path.join(args.out, "t10k-labels-idx1-ubyte.gz"), labels[test])
    print(f"train {len(train)}  test {len(test)}")


if __name__ == "__main__":
    main()
