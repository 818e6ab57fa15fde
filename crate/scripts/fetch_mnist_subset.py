#!/usr/bin/env python3
"""Build IDX-format MNIST files from the 10k-digit sample bundled in the npm `mnist` package.

Writes train/test image and label files (gzip) into the output directory.  The
split is a fixed seeded shuffle: 8192 training images, the remaining 1808 for test.

Usage: fetch_mnist_subset.py [OUT_DIR] [--tarball PATH]
"""
import argparse
import gzip
import io
import json
import os
import random
import struct
import tarfile
import urllib.request

TARBALL_URL = "https://registry.npmjs.org/mnist/-/mnist-1.1.0.tgz"
N_TRAIN = 8192


def write_idx_images(path, images):
    with gzip.open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with gzip.open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", nargs="?", default="data/mnist")
    ap.add_argument("--tarball")
    args = ap.parse_args()

    if args.tarball:
        raw = open(args.tarball, "rb").read()
    else:
        raw = urllib.request.urlopen(TARBALL_URL, timeout=600).read()

    samples = []
    with tarfile.open(fileobj=io.BytesIO(raw), mode="r:gz") as tar:
        for digit in range(10):
            member = tar.extractfile(f"package/src/digits/{digit}.json")
            pixels = json.load(member)["data"]
            for k in range(len(pixels) // 784):
                chunk = pixels[k * 784:(k + 1) * 784]
                samples.append(([int(round(v * 255)) for v in chunk], digit))

    random.Random(0).shuffle(samples)
    train, test = samples[:N_TRAIN], samples[N_TRAIN:]
    os.makedirs(args.out, exist_ok=True)
    for name, part in (("train", train), ("t10k", test)):
        write_idx_images(os.path.join(args.out, f"{name}-images-idx3-ubyte.gz"), [s[0] for s in part])
        write_idx_labels(os.path.join(args.out, f"{name}-labels-idx1-ubyte.gz"), [s[1] for s in part])
    print(f"wrote {len(train)} train / {len(test)} test images to {args.out}")


if __name__ == "__main__":
    main()
