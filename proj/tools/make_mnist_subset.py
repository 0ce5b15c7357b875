#!/usr/bin/env python3
"""Write a small stratified MNIST subset in gzip'd IDX format.

Source: the 5000-image MNIST sample bundled with the mlxtend wheel
(mlxtend/data/data/mnist_5k.csv.gz, 500 images per digit, 785 columns with
the label last). Usage:

    pip download mlxtend --no-deps -d /tmp/mlx
    python3 tools/make_mnist_subset.py /tmp/mlx/mlxtend-*.whl tests/data/mnist_subset
"""
import gzip
import struct
import sys
import zipfile
from pathlib import Path

TRAIN_PER_CLASS = 100
TEST_PER_CLASS = 50


def write_idx(path, images, labels):
    with gzip.GzipFile(path.with_name(path.name + "-images-idx3-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with gzip.GzipFile(path.with_name(path.name + "-labels-idx1-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    wheel, out = sys.argv[1], Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    raw = gzip.decompress(zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    by_class = {d: [] for d in range(10)}
    for line in raw.splitlines():
        cols = line.split(",")
        by_class[int(float(cols[-1]))].append([int(float(v)) for v in cols[:784]])

    def interleave(lo, hi):
        imgs, labs = [], []
        for i in range(lo, hi):
            for d in range(10):
                imgs.append(by_class[d][i])
                labs.append(d)
        return imgs, labs

    write_idx(out / "train", *interleave(0, TRAIN_PER_CLASS))
    write_idx(out / "t10k", *interleave(TRAIN_PER_CLASS, TRAIN_PER_CLASS + TEST_PER_CLASS))


if __name__ == "__main__":
    main()
