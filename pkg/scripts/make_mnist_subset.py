"""Write the 5,000-digit MNIST sample shipped with mlxtend as gzipped IDX files.

The CSV has one row per image: 784 pixel bytes followed by the digit label.
Source images are the first 5,000 of the MNIST training set (500 per class).

    pip download --no-deps -d /tmp/wheel mlxtend
    python scripts/make_mnist_subset.py /tmp/wheel/mlxtend-*.whl tests/data
"""

import argparse
import gzip
import io
import zipfile
from pathlib import Path

import numpy as np

from evogan.data import Dataset, write_idx

CSV_MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_csv(source):
    source = Path(source)
    if source.suffix == ".whl":
        with zipfile.ZipFile(source) as zf:
            raw = zf.read(CSV_MEMBER)
    else:
        raw = source.read_bytes()
    text = gzip.decompress(raw).decode("ascii")
    table = np.loadtxt(io.StringIO(text), delimiter=",", dtype=np.int64)
    return table[:, :-1].astype(np.uint8), table[:, -1].astype(np.uint8)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("source", help="mlxtend wheel or mnist_5k.csv.gz")
    parser.add_argument("out_dir")
    args = parser.parse_args()
    pixels, digits = read_csv(args.source)
    ds = Dataset(pixels / 255.0, digits.astype(np.int64) + 1, 10)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(ds, out / "mnist5k-images-idx3-ubyte.gz", out / "mnist5k-labels-idx1-ubyte.gz",
              image_shape=(28, 28), compress=True)
    print(f"wrote {len(digits)} images to {out}")


if __name__ == "__main__":
    main()
