#!/usr/bin/env python3
"""Export the sklearn handwritten-digits set (1797 8x8 images) as IDX files.

Produces the committed fixtures under data/: a 1297-sample training split
and a 500-sample test split, byte-compatible with the classic IDX layout
(magic 0x00000803 for images, 0x00000801 for labels, big-endian extents).
Regenerate with:  python3 scripts/export_digits.py
"""

import struct
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

OUT = Path(__file__).resolve().parent.parent / "data"
TEST_COUNT = 500
SHUFFLE_SEED = 20240601


def write_idx_images(path: Path, images: np.ndarray) -> None:
    n, h, w = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, h, w))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path: Path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


def main() -> None:
    digits = load_digits()
    # source intensities are 0..16; rescale to the usual 0..255 byte range
    images = np.round(digits.images * (255.0 / 16.0)).astype(np.uint8)
    labels = digits.target.astype(np.uint8)

    rng = np.random.default_rng(SHUFFLE_SEED)
    order = rng.permutation(len(labels))
    images, labels = images[order], labels[order]

    OUT.mkdir(exist_ok=True)
    write_idx_images(OUT / "digits-train-images-idx3-ubyte", images[TEST_COUNT:])
    write_idx_labels(OUT / "digits-train-labels-idx1-ubyte", labels[TEST_COUNT:])
    write_idx_images(OUT / "digits-test-images-idx3-ubyte", images[:TEST_COUNT])
    write_idx_labels(OUT / "digits-test-labels-idx1-ubyte", labels[:TEST_COUNT])
    print(f"wrote {len(labels) - TEST_COUNT} train / {TEST_COUNT} test samples to {OUT}")


if __name__ == "__main__":
    main()
