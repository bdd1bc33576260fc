"""Datasets: containers, file formats, and synthetic generators.

A dataset is a batch of float64 inputs, integer labels, a class count, and
the valid value range of the input domain (used by attacks for clipping
and by noise generators for centering).
"""

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import container
from .digits import gen_digit_images
from .errors import IdxFormatError, UsageError

_IDX_DTYPES = {
    0x08: ">u1",
    0x09: ">i1",
    0x0B: ">i2",
    0x0C: ">i4",
    0x0D: ">f4",
    0x0E: ">f8",
}
_IDX_CODES = {"uint8": 0x08, "int8": 0x09, "int16": 0x0B, "int32": 0x0C,
              "float32": 0x0D, "float64": 0x0E}


@dataclass
class LabeledDataset:
    x: np.ndarray
    y: np.ndarray
    num_classes: int
    domain: tuple = (0.0, 1.0)

    def __len__(self):
        return self.x.shape[0]

    def subset(self, indices):
        return LabeledDataset(self.x[indices], self.y[indices], self.num_classes, self.domain)


def split(ds, test_fraction=0.2, seed=0):
    """Shuffled train/test split."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ds))
    n_test = int(round(test_fraction * len(ds)))
    return ds.subset(order[n_test:]), ds.subset(order[:n_test])


def read_idx(data):
    """Parse an IDX byte string into an array (native byte order)."""
    if len(data) < 4:
        raise IdxFormatError(f"file too short for magic ({len(data)} bytes)", offset=0)
    if data[0] != 0 or data[1] != 0:
        raise IdxFormatError(f"bad magic bytes {data[:2]!r}", offset=0)
    code, ndim = data[2], data[3]
    if code not in _IDX_DTYPES:
        raise IdxFormatError(f"unknown type code 0x{code:02x}", offset=2)
    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise IdxFormatError("truncated dimension list", offset=len(data))
    dims = struct.unpack(">" + "I" * ndim, data[4:header_len])
    dtype = np.dtype(_IDX_DTYPES[code])
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(data) - header_len != expected:
        raise IdxFormatError(
            f"payload is {len(data) - header_len} bytes, expected {expected} for dims {dims}",
            offset=header_len,
        )
    arr = np.frombuffer(data, dtype=dtype, count=int(np.prod(dims, dtype=np.int64)),
                        offset=header_len)
    return arr.reshape(dims).astype(dtype.newbyteorder("="))


def write_idx(arr):
    """Serialize an array to IDX bytes."""
    name = arr.dtype.name
    if name not in _IDX_CODES:
        raise UsageError(f"dtype {name} has no IDX type code")
    header = bytes([0, 0, _IDX_CODES[name], arr.ndim])
    header += struct.pack(">" + "I" * arr.ndim, *arr.shape)
    return header + arr.astype(arr.dtype.newbyteorder(">")).tobytes()


def _read_maybe_gz(path):
    if str(path).endswith(".gz"):
        with gzip.open(path, "rb") as fh:
            return fh.read()
    with open(path, "rb") as fh:
        return fh.read()


def load_idx(path):
    return read_idx(_read_maybe_gz(path))


def save_idx(path, arr):
    with open(path, "wb") as fh:
        fh.write(write_idx(arr))


def load_idx_pair(images_path, labels_path):
    """Image/label IDX pair -> dataset scaled to [0, 1].

    Byte images of shape (n, h, w) become (n, 1, h, w) float64 / 255.
    """
    images = load_idx(images_path)
    labels = load_idx(labels_path).astype(np.int64)
    if images.ndim == 3:
        images = images[:, None, :, :]
    if images.shape[0] != labels.shape[0]:
        raise UsageError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    x = images.astype(np.float64)
    if images.dtype == np.uint8:
        x /= 255.0
    return LabeledDataset(x, labels, int(labels.max()) + 1, (0.0, 1.0))


def load_csv(path):
    """Numeric CSV with the label in the last column. A header row is skipped."""
    with open(path) as fh:
        first = fh.readline()
    skip = 0
    try:
        [float(tok) for tok in first.strip().split(",")]
    except ValueError:
        skip = 1
    raw = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    x = raw[:, :-1].astype(np.float64)
    y = raw[:, -1].astype(np.int64)
    domain = (float(x.min()), float(x.max()))
    return LabeledDataset(x, y, int(y.max()) + 1, domain)


def save_dataset(path, ds):
    meta = {"num_classes": ds.num_classes, "domain": list(ds.domain)}
    container.write(path, "dataset", meta, [("x", ds.x), ("y", ds.y.astype(np.int64))])


def load_dataset(path):
    _, meta, arrays = container.read(path, expect_kind="dataset")
    return LabeledDataset(
        arrays["x"], arrays["y"], int(meta["num_classes"]), tuple(meta["domain"])
    )


def gen_blobs(n, classes=10, dim=20, sigma=0.08, separation=None, seed=0,
              centers_seed=None, domain=(0.0, 1.0)):
    """Isotropic Gaussian clusters at random centers with a minimum spacing.

    Centers are drawn uniformly, rejecting any draw closer than `separation`
    (default 4*sigma) to an existing center, and stay `3*sigma` away from
    the domain edges so clusters are not flattened by clipping.

    `centers_seed` fixes the center layout independently of `seed`, so two
    calls with the same `centers_seed` but different `seed` values sample
    fresh points from the same classification problem. It defaults to
    `seed`, making a lone `seed` fully determine the dataset.
    """
    if centers_seed is None:
        centers_seed = seed
    center_rng = np.random.default_rng(centers_seed)
    rng = np.random.default_rng(seed)
    lo, hi = domain
    if separation is None:
        separation = 4.0 * sigma
    margin = min(3.0 * sigma, 0.45 * (hi - lo))
    centers = np.empty((classes, dim))
    for c in range(classes):
        for _ in range(10000):
            cand = center_rng.uniform(lo + margin, hi - margin, size=dim)
            if c == 0 or np.linalg.norm(centers[:c] - cand, axis=1).min() >= separation:
                centers[c] = cand
                break
        else:
            raise UsageError(
                f"could not place {classes} centers with separation {separation} "
                f"in a dim-{dim} domain; lower separation or raise dim"
            )
    y = rng.permutation(np.arange(n) % classes).astype(np.int64)
    x = centers[y] + rng.normal(0.0, sigma, size=(n, dim))
    return LabeledDataset(np.clip(x, lo, hi), y, classes, domain)


def gen_digits(n, seed=0, size=28, noise=0.02, hardness=1.0, clutter=0):
    x, y = gen_digit_images(n, seed=seed, size=size, noise=noise,
                            hardness=hardness, clutter=clutter)
    return LabeledDataset(x, y, 10, (0.0, 1.0))


def gen_noise(n, shape, kind="gaussian", mean=None, std=1.0, seed=0, domain=(0.0, 1.0)):
    """Unlabeled noise inputs clipped to the domain.

    kind "gaussian": i.i.d. normal centered on `mean` (domain midpoint by
    default) with standard deviation `std`. kind "uniform": i.i.d. uniform
    over the whole domain.
    """
    rng = np.random.default_rng(seed)
    lo, hi = domain
    if kind == "gaussian":
        if mean is None:
            mean = 0.5 * (lo + hi)
        x = rng.normal(mean, std, size=(n, *shape))
    elif kind == "uniform":
        x = rng.uniform(lo, hi, size=(n, *shape))
    else:
        raise UsageError(f"unknown noise kind {kind!r}")
    return np.clip(x, lo, hi)


def _parse_kv(parts):
    out = {}
    for part in parts:
        if not part:
            continue
        if "=" not in part:
            raise UsageError(f"expected key=value, got {part!r}")
        key, value = part.split("=", 1)
        if key == "shape":
            out[key] = tuple(int(tok) for tok in value.split("x"))
        else:
            try:
                out[key] = int(value)
            except ValueError:
                try:
                    out[key] = float(value)
                except ValueError:
                    out[key] = value
    return out


def parse_dataset_spec(spec):
    """Build a dataset from a compact command-line spec.

    Recognized forms:
      blobs:n=2000,classes=20,dim=40,sigma=0.08,seed=0
      digits:n=4000,seed=0
      idx:IMAGES_PATH:LABELS_PATH
      PATH.csv  |  PATH.gga
    """
    head, _, rest = spec.partition(":")
    if head == "blobs":
        return gen_blobs(**_parse_kv(rest.split(",")))
    if head == "digits":
        return gen_digits(**_parse_kv(rest.split(",")))
    if head == "idx":
        images, _, labels = rest.partition(":")
        if not labels:
            raise UsageError("idx spec needs idx:IMAGES_PATH:LABELS_PATH")
        return load_idx_pair(images, labels)
    if spec.endswith(".csv"):
        return load_csv(spec)
    if os.path.exists(spec):
        return load_dataset(spec)
    raise UsageError(f"cannot interpret dataset spec {spec!r}")
