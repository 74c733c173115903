#!/usr/bin/env python3
"""Download the MNIST training IDX files into data/mnist/.

Usage: python scripts/fetch_mnist.py [target_dir]

Tries the public mirrors in order and decompresses the .gz payloads. The
acceptance tests that need real image data look for the files in
$CLASSDISCO_MNIST_DIR or <repo>/data/mnist and skip when absent.
"""

import gzip
import os
import sys
import urllib.request

MIRRORS = (
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
)
FILES = ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz")


def fetch(target_dir: str) -> int:
    os.makedirs(target_dir, exist_ok=True)
    for name in FILES:
        out_path = os.path.join(target_dir, name[: -len(".gz")])
        if os.path.exists(out_path):
            print(f"already present: {out_path}")
            continue
        blob = None
        for mirror in MIRRORS:
            url = mirror + name
            try:
                print(f"fetching {url}")
                with urllib.request.urlopen(url, timeout=60) as resp:
                    blob = resp.read()
                break
            except OSError as exc:
                print(f"  failed: {exc}")
        if blob is None:
            print(f"could not download {name} from any mirror", file=sys.stderr)
            return 1
        with open(out_path, "wb") as f:
            f.write(gzip.decompress(blob))
        print(f"wrote {out_path}")
    return 0


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else os.path.join("data", "mnist")
    sys.exit(fetch(target))
