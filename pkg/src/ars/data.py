"""Dataset loading, synthetic generation and partitioning among parties."""

from __future__ import annotations

import csv
import gzip
import io
import json
import math
import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
MNIST_SHAPE = (28, 28)


class DataError(ValueError):
    pass


class BadMagicError(DataError):
    pass


class TruncatedFileError(DataError):
    pass


class CountMismatchError(DataError):
    pass


class CSVRowError(DataError):
    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"row {row}: {message}")


class InvalidPlanError(DataError):
    pass


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


@dataclass(frozen=True)
class Dataset:
    """Samples, one-hot task labels and one-hot private attributes.

    ``groups`` optionally records ``(name, kind, start, stop)`` column spans
    of the encoded features; ``ids`` are stable sample ids used to align
    vertically partitioned parts.
    """

    X: np.ndarray
    Y: np.ndarray
    A: tuple[np.ndarray, ...] = ()
    feature_names: tuple[str, ...] | None = None
    groups: tuple[tuple[str, str, int, int], ...] = ()
    ids: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        Y = np.asarray(self.Y, dtype=np.float64)
        if X.ndim != 2:
            raise DataError("samples must form a 2-D array")
        if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
            raise DataError(f"|Y| = {Y.shape[0] if Y.ndim else '?'} does not match |X| = {X.shape[0]}")
        A = tuple(np.asarray(a, dtype=np.float64) for a in self.A)
        for k, a in enumerate(A):
            if a.ndim != 2 or a.shape[0] != X.shape[0]:
                raise DataError(f"private attribute {k} is not aligned with the samples")
        if not np.all(np.isfinite(X)):
            raise DataError("non-finite feature values")
        for name, arr in [("labels", Y), *((f"attribute {k}", a) for k, a in enumerate(A))]:
            if arr.shape[1] and arr.shape[0] and not np.allclose(arr.sum(axis=1), 1.0):
                raise DataError(f"{name} are not one-hot")
        ids = np.arange(X.shape[0]) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if ids.shape != (X.shape[0],):
            raise DataError("one id per sample")
        if self.feature_names is not None and len(self.feature_names) != X.shape[1]:
            raise DataError("one feature name per column")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return self.Y.shape[1]

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.Y, axis=1)

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return replace(self, X=self.X[index], Y=self.Y[index], A=tuple(a[index] for a in self.A), ids=self.ids[index])

    def with_labels(self, Y) -> "Dataset":
        return replace(self, Y=Y)

    def head(self, n: int) -> "Dataset":
        return self.subset(np.arange(min(n, len(self))))


# -- IDX -------------------------------------------------------------------


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _idx_header(raw: bytes, magic: int, ndim: int, path) -> tuple[int, ...]:
    need = 4 * (1 + ndim)
    if len(raw) < need:
        raise TruncatedFileError(f"{path}: {len(raw)} bytes, header needs {need}")
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        raise BadMagicError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    return struct.unpack(f">{ndim}I", raw[4:need])


def read_idx_images(path) -> np.ndarray:
    """Raw uint8 images of shape (count, rows, cols)."""
    raw = _read_bytes(path)
    count, rows, cols = _idx_header(raw, IDX_IMAGES_MAGIC, 3, path)
    body = raw[16:]
    if len(body) < count * rows * cols:
        raise TruncatedFileError(f"{path}: {len(body)} pixel bytes for {count} images of {rows}x{cols}")
    return np.frombuffer(body, dtype=np.uint8, count=count * rows * cols).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    raw = _read_bytes(path)
    (count,) = _idx_header(raw, IDX_LABELS_MAGIC, 1, path)
    body = raw[8:]
    if len(body) < count:
        raise TruncatedFileError(f"{path}: {len(body)} label bytes for {count} labels")
    return np.frombuffer(body, dtype=np.uint8, count=count)


def load_idx(images_path, labels_path, n_classes: int = 10) -> Dataset:
    """Load an IDX image/label pair (optionally gzipped); pixels scaled to [0, 1]."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() >= n_classes:
        raise DataError(f"label {labels.max()} out of range for {n_classes} classes")
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(X=X, Y=one_hot(labels, n_classes))


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">2I", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def data_dir() -> Path:
    """Dataset root: ``$ARS_DATA_DIR`` or the repository's ``data/`` folder."""
    env = os.environ.get("ARS_DATA_DIR")
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "data"


def _find(root: Path, stem: str) -> Path:
    for cand in (root / stem, root / (stem + ".gz")):
        if cand.exists():
            return cand
    raise FileNotFoundError(f"{stem}[.gz] not found under {root}")


def load_mnist(split: str = "train", root=None) -> Dataset:
    root = Path(root) if root is not None else data_dir() / "mnist"
    prefix = {"train": "train", "test": "t10k"}[split]
    return load_idx(_find(root, f"{prefix}-images-idx3-ubyte"), _find(root, f"{prefix}-labels-idx1-ubyte"))


# -- CSV + schema ----------------------------------------------------------


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str  # numeric | categorical | binned
    min: float | None = None
    max: float | None = None
    values: tuple[str, ...] | None = None
    edges: tuple[float, ...] | None = None

    @property
    def width(self) -> int:
        if self.kind == "numeric":
            return 1
        if self.kind == "categorical":
            return len(self.values)
        if self.kind == "binned":
            return len(self.edges) + 1
        raise DataError(f"unknown column kind {self.kind!r}")

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.min is not None:
            d["min"] = self.min
        if self.max is not None:
            d["max"] = self.max
        if self.values is not None:
            d["values"] = list(self.values)
        if self.edges is not None:
            d["edges"] = list(self.edges)
        return d


@dataclass(frozen=True)
class Schema:
    """Column encodings. ``label`` and ``private_attrs`` name categorical columns
    that are split off as targets and never appear among the features."""

    columns: tuple[ColumnSpec, ...]
    label: str
    private_attrs: tuple[str, ...] = ()

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names in schema")
        for c in self.columns:
            if c.kind not in ("numeric", "categorical", "binned"):
                raise DataError(f"column {c.name}: unknown kind {c.kind!r}")
            if c.kind == "categorical" and not c.values:
                raise DataError(f"column {c.name}: categorical needs values")
            if c.kind == "binned" and not c.edges:
                raise DataError(f"column {c.name}: binned needs edges")
        for t in (self.label, *self.private_attrs):
            if t not in names or self.column(t).kind != "categorical":
                raise DataError(f"target column {t!r} must be a categorical column of the schema")

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def feature_columns(self) -> tuple[ColumnSpec, ...]:
        targets = {self.label, *self.private_attrs}
        return tuple(c for c in self.columns if c.name not in targets)

    @property
    def n_features(self) -> int:
        return sum(c.width for c in self.feature_columns)

    @classmethod
    def from_dict(cls, doc: dict) -> "Schema":
        cols = []
        for c in doc["columns"]:
            cols.append(ColumnSpec(
                name=c["name"], kind=c["kind"], min=c.get("min"), max=c.get("max"),
                values=tuple(c["values"]) if "values" in c else None,
                edges=tuple(float(e) for e in c["edges"]) if "edges" in c else None,
            ))
        return cls(tuple(cols), doc["label"], tuple(doc.get("private_attrs", ())))

    def to_dict(self) -> dict:
        return {"columns": [c.to_dict() for c in self.columns], "label": self.label,
                "private_attrs": list(self.private_attrs)}

    @classmethod
    def load(cls, path) -> "Schema":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    def fit_scaling(self, rows: Sequence[dict]) -> "Schema":
        """Fill numeric min/max from training rows so test rows reuse them."""
        cols = []
        for c in self.columns:
            if c.kind == "numeric":
                vals = [float(r[c.name]) for r in rows]
                c = replace(c, min=min(vals), max=max(vals))
            cols.append(c)
        return replace(self, columns=tuple(cols))


def _open_text(path):
    path = str(path)
    if path.endswith(".gz"):
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, encoding="utf-8", newline="")


def read_csv_rows(path) -> list[dict]:
    with _open_text(path) as fh:
        reader = csv.DictReader(fh, skipinitialspace=True)
        return [{k.strip(): (v.strip() if isinstance(v, str) else v) for k, v in row.items()} for row in reader]


def _encode_column(c: ColumnSpec, raw: str, row: int) -> list[float]:
    if c.kind == "numeric":
        try:
            v = float(raw)
        except (TypeError, ValueError):
            raise CSVRowError(row, f"column {c.name}: cannot parse {raw!r} as a number") from None
        if not math.isfinite(v):
            raise CSVRowError(row, f"column {c.name}: non-finite value")
        if c.min is None or c.max is None:
            raise DataError(f"column {c.name}: schema lacks min/max")
        if c.max == c.min:
            return [0.0]
        return [min(1.0, max(0.0, (v - c.min) / (c.max - c.min)))]
    if c.kind == "categorical":
        try:
            i = c.values.index(raw)
        except ValueError:
            raise CSVRowError(row, f"column {c.name}: unknown category {raw!r}") from None
        out = [0.0] * len(c.values)
        out[i] = 1.0
        return out
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise CSVRowError(row, f"column {c.name}: cannot parse {raw!r} as a number") from None
    out = [0.0] * c.width
    out[int(np.searchsorted(np.asarray(c.edges), v, side="right"))] = 1.0
    return out


def load_csv(path, schema: Schema) -> Dataset:
    """Encode a headed CSV file through ``schema`` (row numbers in errors are 0-based data rows)."""
    rows = read_csv_rows(path)
    return encode_rows(rows, schema)


def encode_rows(rows: Sequence[dict], schema: Schema) -> Dataset:
    feats = schema.feature_columns
    names, groups = [], []
    pos = 0
    for c in feats:
        if c.kind == "numeric":
            names.append(c.name)
        elif c.kind == "categorical":
            names.extend(f"{c.name}={v}" for v in c.values)
        else:
            names.extend(f"{c.name}#{i}" for i in range(c.width))
        groups.append((c.name, c.kind, pos, pos + c.width))
        pos += c.width
    X = np.zeros((len(rows), pos))
    label_col = schema.column(schema.label)
    attr_cols = [schema.column(a) for a in schema.private_attrs]
    Y = np.zeros((len(rows), label_col.width))
    A = [np.zeros((len(rows), a.width)) for a in attr_cols]
    for r, row in enumerate(rows):
        vals = []
        for c in feats:
            if c.name not in row or row[c.name] is None:
                raise CSVRowError(r, f"missing column {c.name}")
            vals.extend(_encode_column(c, row[c.name], r))
        X[r] = vals
        Y[r] = _encode_column(label_col, row.get(label_col.name), r)
        for k, c in enumerate(attr_cols):
            A[k][r] = _encode_column(c, row.get(c.name), r)
    return Dataset(X=X, Y=Y, A=tuple(A), feature_names=tuple(names), groups=tuple(groups))


def load_adult(split: str = "train", root=None) -> Dataset:
    root = Path(root) if root is not None else data_dir() / "adult"
    schema = Schema.load(root / "adult_schema.json")
    return load_csv(_find(root, f"adult_{split}.csv"), schema)


# -- synthetic ---------------------------------------------------------------


def synth_gaussian_clusters(
    n: int,
    dim: int,
    classes: int,
    private_attr_planes: int = 0,
    seed: int = 0,
    separation: float = 4.0,
    noise: float = 1.0,
) -> Dataset:
    """Isotropic Gaussian clusters; labels are cluster ids.

    Each private attribute is the side of a random hyperplane through the
    sample's own cluster center, so attributes are balanced, independent of
    the label, and linearly decodable once the cluster is known.
    """
    if n < 1 or dim < 1 or classes < 1:
        raise DataError("n, dim and classes must be >= 1")
    if private_attr_planes < 0:
        raise DataError("private_attr_planes must be >= 0")
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=separation, size=(classes, dim))
    labels = np.arange(n) % classes
    rng.shuffle(labels)
    X = centers[labels] + rng.normal(scale=noise, size=(n, dim))
    A = []
    for _ in range(private_attr_planes):
        w = rng.normal(size=dim)
        side = ((X - centers[labels]) @ w > 0).astype(int)
        A.append(one_hot(side, 2))
    return Dataset(X=X, Y=one_hot(labels, classes), A=tuple(A))


# -- partitioning ------------------------------------------------------------


@dataclass(frozen=True)
class PartitionPlan:
    """How samples (horizontal) or feature columns (vertical) are split.

    Horizontal ranges index into ``order`` (a seeded shuffle of the sample
    indices); vertical ranges are column spans.
    """

    mode: str
    K: int
    assignment: tuple[tuple[int, int], ...]
    label_holder: int = 0
    order: tuple[int, ...] | None = None

    @classmethod
    def horizontal(cls, n_samples: int, K: int, seed: int = 0, sizes: Sequence[int] | None = None) -> "PartitionPlan":
        if K < 1:
            raise InvalidPlanError("K must be >= 1")
        if sizes is None:
            base, extra = divmod(n_samples, K)
            sizes = [base + (1 if i < extra else 0) for i in range(K)]
        if len(sizes) != K or sum(sizes) > n_samples:
            raise InvalidPlanError("party sizes do not fit the dataset")
        order = np.random.default_rng(seed).permutation(n_samples)
        bounds, start = [], 0
        for s in sizes:
            bounds.append((start, start + int(s)))
            start += int(s)
        return cls("horizontal", K, tuple(bounds), 0, tuple(int(i) for i in order))

    @classmethod
    def vertical(cls, n_columns: int, K: int, label_holder: int = 0) -> "PartitionPlan":
        """Split columns as evenly as possible; earlier parties take the remainder."""
        if K < 1:
            raise InvalidPlanError("K must be >= 1")
        base, extra = divmod(n_columns, K)
        if base == 0:
            raise InvalidPlanError(f"{n_columns} columns cannot give each of {K} parties a column")
        bounds, start = [], 0
        for i in range(K):
            w = base + (1 if i < extra else 0)
            bounds.append((start, start + w))
            start += w
        return cls("vertical", K, tuple(bounds), label_holder)

    def validate(self, ds: Dataset) -> None:
        if self.mode not in ("horizontal", "vertical"):
            raise InvalidPlanError(f"unknown mode {self.mode!r}")
        if len(self.assignment) != self.K or self.K < 1:
            raise InvalidPlanError("one assignment per party")
        for a, b in self.assignment:
            if not 0 <= a <= b:
                raise InvalidPlanError(f"bad range ({a}, {b})")
        spans = sorted(self.assignment)
        for (a0, b0), (a1, b1) in zip(spans, spans[1:]):
            if a1 < b0:
                raise InvalidPlanError(f"ranges ({a0}, {b0}) and ({a1}, {b1}) overlap")
        if self.mode == "horizontal":
            n = len(ds)
            order = self.order if self.order is not None else tuple(range(n))
            if sorted(order) != list(range(n)):
                raise InvalidPlanError("order is not a permutation of the samples")
            if spans[-1][1] > n:
                raise InvalidPlanError("ranges exceed the number of samples")
        else:
            if any(b - a == 0 for a, b in self.assignment):
                raise InvalidPlanError("every party needs at least one column")
            if spans[0][0] != 0 or spans[-1][1] != ds.n_features or any(
                s1[0] != s0[1] for s0, s1 in zip(spans, spans[1:])
            ):
                raise InvalidPlanError("column ranges must cover every feature exactly once")
            if not 0 <= self.label_holder < self.K:
                raise InvalidPlanError("label holder is not a party")


def partition(ds: Dataset, plan: PartitionPlan) -> list[Dataset]:
    plan.validate(ds)
    if plan.mode == "horizontal":
        order = np.asarray(plan.order if plan.order is not None else np.arange(len(ds)))
        return [ds.subset(order[a:b]) for a, b in plan.assignment]
    parts = []
    for i, (a, b) in enumerate(plan.assignment):
        holder = i == plan.label_holder
        names = ds.feature_names[a:b] if ds.feature_names is not None else None
        groups = tuple(
            (g, kind, max(s, a) - a, min(e, b) - a) for g, kind, s, e in ds.groups if s < b and e > a
        )
        parts.append(Dataset(
            X=ds.X[:, a:b],
            Y=ds.Y if holder else np.zeros((len(ds), 0)),
            A=ds.A if holder else (),
            feature_names=names,
            groups=groups,
            ids=ds.ids,
        ))
    return parts


def concat_columns(parts: Sequence[Dataset]) -> np.ndarray:
    """Re-join vertical parts column-wise; parts must share ids."""
    ids = parts[0].ids
    for p in parts[1:]:
        if not np.array_equal(p.ids, ids):
            raise InvalidPlanError("parts are not aligned on sample ids")
    return np.concatenate([p.X for p in parts], axis=1)
