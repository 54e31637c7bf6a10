#!/usr/bin/env python3
"""Convert digits from the npm `mnist` package (MIT) into gzip IDX files.

The package ships 10,000 MNIST test digits as JSON arrays of pixel values
rounded to three decimals; byte values are recovered exactly with
round(v * 255).

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/mnist_npm_to_idx.py package/src/digits data/mnist-1v7 1 7
"""
import gzip
import json
import struct
import sys
from pathlib import Path


def main() -> None:
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    digits = [int(d) for d in sys.argv[3:]]
    images, labels = bytearray(), bytearray()
    count = 0
    for d in digits:
        flat = json.loads((src / f"{d}.json").read_text())["data"]
        assert len(flat) % 784 == 0
        for v in flat:
            b = round(v * 255)
            assert 0 <= b <= 255 and abs(b / 255 - v) < 6e-4
            images.append(b)
        n = len(flat) // 784
        labels.extend([d] * n)
        count += n
    out.mkdir(parents=True, exist_ok=True)
    with gzip.GzipFile(out / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 2051, count, 28, 28) + bytes(images))
    with gzip.GzipFile(out / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 2049, count) + bytes(labels))
    print(f"wrote {count} images for digits {digits} to {out}")


if __name__ == "__main__":
    main()
