"""Dataset ingestion and the reference-logit statistics used by the matching loss.

Sources: numeric CSV (header row, any label column), IDX image/label file
pairs as distributed for MNIST, and two synthetic generators (Gaussian blobs
for tabular experiments, rendered digits for image experiments). Min-max
normalization is always fit on the training split and applied unchanged to
the test split, without clamping, so shift stays visible.
"""
from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, field

import numpy as np

from .net import FeatureVector, NetworkModel, forward_batch

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


class DataFormatError(ValueError):
    """Input file violates the expected CSV or IDX structure."""


@dataclass
class Dataset:
    instances: list[FeatureVector]
    labels: np.ndarray
    split: str = "train"
    norm: tuple[np.ndarray, np.ndarray] | None = None
    label_names: list[str] | None = None

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.intp)
        if len(self.instances) != self.labels.size:
            raise DataFormatError(
                f"{len(self.instances)} instances vs {self.labels.size} labels"
            )

    def __len__(self) -> int:
        return len(self.instances)

    @property
    def matrix(self) -> np.ndarray:
        return np.stack([fv.values for fv in self.instances])

    @property
    def image_shape(self) -> tuple[int, int] | None:
        return self.instances[0].image_shape if self.instances else None


# ---------------------------------------------------------------- CSV

def load_csv(path, label_column: str, split: str = "train") -> Dataset:
    """Numeric CSV with a header row; labels become dense indices in
    first-appearance order, with the original names recorded."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if label_column not in header:
            raise DataFormatError(f"{path}: no column named {label_column!r}")
        label_idx = header.index(label_column)
        feature_cols = [i for i in range(len(header)) if i != label_idx]

        rows, raw_labels = [], []
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}: row {rownum} has {len(row)} cells, header has {len(header)}"
                )
            vals = np.empty(len(feature_cols))
            for j, col in enumerate(feature_cols):
                try:
                    vals[j] = float(row[col])
                except ValueError:
                    raise DataFormatError(
                        f"{path}: row {rownum}, column {header[col]!r}: "
                        f"cannot parse {row[col]!r} as a number"
                    ) from None
            rows.append(vals)
            raw_labels.append(row[label_idx])

    if not rows:
        raise DataFormatError(f"{path}: header only, no data rows")

    names: list[str] = []
    labels = []
    for raw in raw_labels:
        if raw not in names:
            names.append(raw)
        labels.append(names.index(raw))
    instances = [FeatureVector(values=v) for v in rows]
    return Dataset(instances=instances, labels=np.array(labels), split=split, label_names=names)


# ---------------------------------------------------------------- normalization

def fit_normalizer(train: Dataset) -> tuple[np.ndarray, np.ndarray]:
    if not len(train):
        raise DataFormatError("cannot fit a normalizer on an empty dataset")
    m = train.matrix
    return m.min(axis=0), m.max(axis=0)


def apply_normalizer(ds: Dataset, norm: tuple[np.ndarray, np.ndarray]) -> Dataset:
    """(v - min)/(max - min); constant features map to 0; no clamping."""
    lo, hi = norm
    span = hi - lo
    safe = np.where(span == 0.0, 1.0, span)
    instances = []
    for fv in ds.instances:
        scaled = np.where(span == 0.0, 0.0, (fv.values - lo) / safe)
        instances.append(FeatureVector(values=scaled, image_shape=fv.image_shape))
    return Dataset(
        instances=instances,
        labels=ds.labels.copy(),
        split=ds.split,
        norm=(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)),
        label_names=ds.label_names,
    )


# ---------------------------------------------------------------- IDX

def _open_maybe_gzip(path, mode):
    p = str(path)
    return gzip.open(p, mode) if p.endswith(".gz") else open(p, mode)


def _read_exact(fh, count, what, path):
    buf = fh.read(count)
    if len(buf) != count:
        raise DataFormatError(f"{path}: truncated while reading {what}")
    return buf


def load_idx(images_path, labels_path, limit: int | None = None) -> Dataset:
    """Big-endian IDX pair (magics 2051/2049); pixels scaled to [0,1] by /255."""
    with _open_maybe_gzip(images_path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, "image header", images_path))
        if magic != IDX_IMAGE_MAGIC:
            raise DataFormatError(f"{images_path}: magic {magic}, expected {IDX_IMAGE_MAGIC}")
        take = count if limit is None else min(limit, count)
        raw = _read_exact(fh, take * rows * cols, f"{take} images", images_path)
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(take, rows * cols)

    with _open_maybe_gzip(labels_path, "rb") as fh:
        magic, lcount = struct.unpack(">II", _read_exact(fh, 8, "label header", labels_path))
        if magic != IDX_LABEL_MAGIC:
            raise DataFormatError(f"{labels_path}: magic {magic}, expected {IDX_LABEL_MAGIC}")
        if lcount != count:
            raise DataFormatError(
                f"label count {lcount} in {labels_path} != image count {count} in {images_path}"
            )
        labels = np.frombuffer(_read_exact(fh, take, "labels", labels_path), dtype=np.uint8)

    shape = (rows, cols)
    instances = [
        FeatureVector(values=row / 255.0, image_shape=shape) for row in pixels
    ]
    return Dataset(instances=instances, labels=labels.astype(np.intp))


def save_idx(ds: Dataset, images_path, labels_path) -> None:
    """Write a dataset back out as an IDX pair (byte-exact inverse of load_idx
    for /255-scaled data)."""
    shape = ds.image_shape
    if shape is None:
        raise DataFormatError("save_idx needs image-shaped instances")
    rows, cols = shape
    pixels = np.clip(np.rint(ds.matrix * 255.0), 0, 255).astype(np.uint8)
    with _open_maybe_gzip(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, len(ds), rows, cols))
        fh.write(pixels.tobytes())
    with _open_maybe_gzip(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, len(ds)))
        fh.write(np.asarray(ds.labels, dtype=np.uint8).tobytes())


# ---------------------------------------------------------------- synthetic tabular

def synth_gaussian(
    d: int,
    k: int,
    n_per_class: int,
    class_separation: float,
    seed: int,
    test_per_class: int | None = None,
) -> tuple[Dataset, Dataset]:
    """K unit-variance Gaussian blobs, class k offset by class_separation along
    axis (k mod d), then min-max normalized using training statistics."""
    if d < 1 or k < 2:
        raise ValueError("need d >= 1 and k >= 2")
    rng = np.random.default_rng(seed)
    if test_per_class is None:
        test_per_class = max(1, n_per_class // 2)

    def draw(per_class, tag):
        xs, ys = [], []
        for c in range(k):
            mean = np.zeros(d)
            mean[c % d] = class_separation
            xs.append(rng.normal(mean, 1.0, size=(per_class, d)))
            ys.extend([c] * per_class)
        m = np.vstack(xs)
        perm = rng.permutation(len(m))
        inst = [FeatureVector(values=v) for v in m[perm]]
        return Dataset(instances=inst, labels=np.array(ys)[perm], split=tag)

    train = draw(n_per_class, "train")
    test = draw(test_per_class, "test")
    norm = fit_normalizer(train)
    return apply_normalizer(train, norm), apply_normalizer(test, norm)


# ---------------------------------------------------------------- synthetic digits

# 7x5 glyph bitmaps, one per digit class; rendered with random affine jitter
# plus blur and noise into 28x28 grayscale.
_GLYPH_ROWS = {
    0: (".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."),
    1: ("..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."),
    2: (".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"),
    3: (".###.", "#...#", "....#", "..##.", "....#", "#...#", ".###."),
    4: ("...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."),
    5: ("#####", "#....", "####.", "....#", "....#", "#...#", ".###."),
    6: (".###.", "#....", "####.", "#...#", "#...#", "#...#", ".###."),
    7: ("#####", "....#", "...#.", "...#.", "..#..", "..#..", "..#.."),
    8: (".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."),
    9: (".###.", "#...#", "#...#", ".####", "....#", "....#", ".###."),
}

_GLYPHS = {
    digit: np.array([[1.0 if ch == "#" else 0.0 for ch in row] for row in rows])
    for digit, rows in _GLYPH_ROWS.items()
}


def _bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample img at fractional coordinates, zero outside the frame."""
    h, w = img.shape
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    wy = ys - y0
    wx = xs - x0
    out = np.zeros(ys.shape)
    for dy in (0, 1):
        for dx in (0, 1):
            yy = y0 + dy
            xx = x0 + dx
            valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            vals = np.zeros(ys.shape)
            vals[valid] = img[yy[valid], xx[valid]]
            weight = (wy if dy else 1.0 - wy) * (wx if dx else 1.0 - wx)
            out += weight * vals
    return out


_BLUR = np.array([0.25, 0.5, 0.25])


def _render_digit(digit: int, rng: np.random.Generator, size: int = 28) -> np.ndarray:
    glyph = _GLYPHS[digit]
    gh, gw = glyph.shape
    angle = rng.uniform(-0.16, 0.16)
    cell = 2.6 * rng.uniform(0.88, 1.12)
    ty, tx = rng.uniform(-1.5, 1.5, size=2)
    cy = (size - 1) / 2.0 + ty
    cx = (size - 1) / 2.0 + tx
    cos, sin = np.cos(angle), np.sin(angle)
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    dy, dx = ys - cy, xs - cx
    gy = (cos * dy + sin * dx) / cell + (gh - 1) / 2.0
    gx = (-sin * dy + cos * dx) / cell + (gw - 1) / 2.0
    img = _bilinear(glyph, gy, gx)
    img = np.apply_along_axis(lambda r: np.convolve(r, _BLUR, mode="same"), 1, img)
    img = np.apply_along_axis(lambda c: np.convolve(c, _BLUR, mode="same"), 0, img)
    img = img + rng.normal(0.0, 0.02, img.shape)
    np.clip(img, 0.0, 1.0, out=img)
    return img


def synth_digits(n_train: int, n_test: int, seed: int, size: int = 28) -> tuple[Dataset, Dataset]:
    """Procedurally rendered digit images in the MNIST layout (values in
    [0,1], shape size x size), cycling through the ten classes."""
    rng = np.random.default_rng(seed)

    def draw(n, tag):
        instances, labels = [], []
        for i in range(n):
            digit = i % 10
            img = _render_digit(digit, rng, size=size)
            instances.append(FeatureVector(values=img.ravel(), image_shape=(size, size)))
            labels.append(digit)
        order = rng.permutation(n)
        return Dataset(
            instances=[instances[j] for j in order],
            labels=np.array(labels)[order],
            split=tag,
        )

    return draw(n_train, "train"), draw(n_test, "test")


# ---------------------------------------------------------------- reference logits

@dataclass
class ReferenceLogitStats:
    """Logit statistics over training instances the model assigns to c_t."""

    target: int
    count: int
    mean_logits: np.ndarray
    samples: np.ndarray = field(repr=False)  # (count, d)
    sample_logits: np.ndarray = field(repr=False)  # (count, K)
    requested: int = 0


def sample_reference_set(
    train: Dataset,
    model: NetworkModel,
    c_t: int,
    n: int = 100,
    seed: int = 0,
    by_label: bool = False,
) -> ReferenceLogitStats:
    """Sample without replacement from training instances whose predicted
    class (or true label, with by_label) is c_t; shortfalls keep whatever
    qualifies and record the actual count."""
    if not 0 <= c_t < model.class_count:
        raise ValueError(f"class index {c_t} outside [0, {model.class_count})")
    m = train.matrix
    if by_label:
        eligible = np.flatnonzero(train.labels == c_t)
    else:
        eligible = np.flatnonzero(forward_batch(model, m).argmax(axis=1) == c_t)
    if eligible.size == 0:
        kind = "labeled" if by_label else "classified"
        raise ValueError(f"no training instance is {kind} as class {c_t}")
    rng = np.random.default_rng(seed)
    take = min(n, eligible.size)
    chosen = rng.choice(eligible, size=take, replace=False)
    chosen.sort()
    samples = m[chosen]
    logits = forward_batch(model, samples)
    return ReferenceLogitStats(
        target=c_t,
        count=take,
        mean_logits=logits.mean(axis=0),
        samples=samples,
        sample_logits=logits,
        requested=n,
    )
