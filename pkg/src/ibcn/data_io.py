"""LIBSVM datasets and run traces on disk."""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import sparse


class DataError(ValueError):
    """Malformed or unusable dataset."""


class TraceError(ValueError):
    """Trace violates its schema or invariants."""


@dataclass
class Dataset:
    X: sparse.csr_matrix
    labels: np.ndarray
    n_features: int
    provenance: str = ""

    @property
    def m(self) -> int:
        return self.X.shape[0]


def _normalize_labels(labels: np.ndarray) -> np.ndarray:
    distinct = set(np.unique(labels).tolist())
    if distinct == {0.0, 1.0}:
        return np.where(labels == 1.0, 1.0, -1.0)
    if distinct == {1.0, 2.0}:
        return np.where(labels == 2.0, 1.0, -1.0)
    return labels


def parse_libsvm(stream, source: str = "<stream>") -> Dataset:
    """Parse ``label idx:val idx:val ...`` lines.

    ``stream`` may be bytes, str, or a binary/text file object. Indices are
    1-based and must strictly increase within a line; ``#`` starts a
    comment. Two-class labels ``{0, 1}`` and ``{1, 2}`` become ``{-1, +1}``.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    elif isinstance(stream, str):
        stream = io.StringIO(stream)

    labels, indptr, indices, data = [], [0], [], []
    n_features = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            labels.append(float(tokens[0]))
        except ValueError:
            raise DataError(f"{source}:{lineno}: bad label {tokens[0]!r}") from None
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            try:
                if not sep:
                    raise ValueError
                idx, val = int(idx_s), float(val_s)
            except ValueError:
                raise DataError(f"{source}:{lineno}: malformed token {tok!r}") from None
            if idx <= prev:
                raise DataError(f"{source}:{lineno}: feature indices must be >= 1 and strictly increasing")
            prev = idx
            indices.append(idx - 1)
            data.append(val)
        n_features = max(n_features, prev)
        indptr.append(len(indices))

    if not labels:
        raise DataError(f"{source}: dataset is empty")
    X = sparse.csr_matrix(
        (np.array(data, dtype=float), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(labels), n_features),
    )
    return Dataset(X, _normalize_labels(np.array(labels)), n_features, f"source={source}")


def load_libsvm(path) -> Dataset:
    try:
        with open(path, "rb") as fh:
            return parse_libsvm(fh, source=os.fspath(path))
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc


def write_libsvm(ds: Dataset, stream) -> None:
    X = ds.X.tocsr()
    for i in range(X.shape[0]):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        feats = " ".join(f"{j + 1}:{v!r}" for j, v in zip(X.indices[lo:hi].tolist(), X.data[lo:hi].tolist()))
        label = ds.labels[i]
        label_s = str(int(label)) if float(label).is_integer() else repr(float(label))
        stream.write(f"{label_s} {feats}".rstrip() + "\n")


def scale_features(ds: Dataset, lo: float = -1.0, hi: float = 1.0) -> Dataset:
    """Affinely map every column onto ``[lo, hi]``; constant columns go to ``lo``.

    Missing entries count as zeros when taking column minima and maxima.
    """
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise ValueError("need lo < hi")
    if ds.m == 0:
        raise DataError("cannot scale an empty dataset")
    X = ds.X.toarray()
    cmin = X.min(axis=0)
    cmax = X.max(axis=0)
    out = np.empty_like(X)
    for j in range(X.shape[1]):
        a, b = cmin[j], cmax[j]
        if a == lo and b == hi:
            out[:, j] = X[:, j]
        elif a == b:
            out[:, j] = lo
        else:
            col = np.clip(lo + (X[:, j] - a) * ((hi - lo) / (b - a)), lo, hi)
            col[X[:, j] == b] = hi
            out[:, j] = col
    prov = f"{ds.provenance}; scaled=[{lo!r},{hi!r}]" if ds.provenance else f"scaled=[{lo!r},{hi!r}]"
    return Dataset(sparse.csr_matrix(out), ds.labels.copy(), ds.n_features, prov)


def make_madelon_like(seed: int = 0, m: int = 2000, n: int = 500) -> Dataset:
    """Synthetic stand-in with the shape and generating process of madelon.

    Uses scikit-learn's Guyon hypercube generator (5 informative features,
    15 linear combinations of them, the rest noise, 32 clusters, 1% label
    noise) and quantizes to integer-valued raw features.
    """
    from sklearn.datasets import make_classification

    X, y = make_classification(
        n_samples=m, n_features=n, n_informative=5, n_redundant=15, n_repeated=0,
        n_classes=2, n_clusters_per_class=16, flip_y=0.01, class_sep=1.0,
        shuffle=True, random_state=seed,
    )
    X = np.round(480.0 + 40.0 * X)
    return Dataset(sparse.csr_matrix(X), np.where(y == 1, 1.0, -1.0), n, f"source=madelon-like(seed={seed})")


TRACE_COLUMNS = ("iter", "f", "gnorm", "block_gnorm", "sigma", "success", "time_s")


class TraceRecord(NamedTuple):
    iter: int
    f: float
    gnorm: float
    block_gnorm: float
    sigma: float
    success: bool
    time_s: float


@dataclass
class Trace:
    """Per-iteration measurements of one run.

    Record ``k`` describes iteration ``k``: ``f`` and ``gnorm`` are taken at
    ``x_{k+1}``, ``block_gnorm`` is ``||grad_{I_k} f(x_{k+1})||``, ``sigma`` is
    the regularization weight used in iteration ``k`` (the accepted step
    length for line-search baselines) and ``time_s`` is cumulative wall time.
    The starting values live in ``meta['f0']`` and ``meta['gnorm0']``.
    """

    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    x_final: np.ndarray | None = None
    blocks: list | None = None

    def __len__(self) -> int:
        return len(self.records)

    def append(self, *fields) -> None:
        self.records.append(TraceRecord(*fields))

    def column(self, name: str) -> np.ndarray:
        i = TRACE_COLUMNS.index(name)
        return np.array([r[i] for r in self.records])

    @property
    def final_f(self) -> float:
        return self.records[-1].f if self.records else float(self.meta["f0"])

    @property
    def final_gnorm(self) -> float:
        return self.records[-1].gnorm if self.records else float(self.meta["gnorm0"])

    def validate(self) -> None:
        prev_it = None
        prev_f = float(self.meta["f0"]) if "f0" in self.meta else np.inf
        for r in self.records:
            if prev_it is not None and r.iter <= prev_it:
                raise TraceError(f"iteration indices not increasing at {r.iter}")
            if r.f > prev_f:
                raise TraceError(f"objective increased at iteration {r.iter}: {prev_f!r} -> {r.f!r}")
            prev_it, prev_f = r.iter, r.f


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trace(trace: Trace, path) -> None:
    """Write ``path`` (CSV) and ``path.meta`` (key=value lines).

    Raises :class:`TraceError` if the objective column ever increases.
    """
    trace.validate()
    path = os.fspath(path)
    lines = [",".join(TRACE_COLUMNS)]
    for r in trace.records:
        lines.append(",".join([str(int(r.iter)), _fmt(r.f), _fmt(r.gnorm), _fmt(r.block_gnorm),
                               _fmt(r.sigma), str(int(bool(r.success))), _fmt(r.time_s)]))
    meta_lines = []
    for k, v in trace.meta.items():
        meta_lines.append(f"{k}={_fmt(v) if isinstance(v, float) else v}")
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        with open(path + ".meta", "w") as fh:
            fh.write("\n".join(meta_lines) + ("\n" if meta_lines else ""))
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write trace {path}: {exc.strerror}") from exc


def read_meta(path) -> dict:
    meta = {}
    try:
        with open(os.fspath(path) + ".meta") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line:
                    k, _, v = line.partition("=")
                    meta[k] = v
    except FileNotFoundError:
        pass
    return meta


def read_trace(path) -> Trace:
    """Inverse of :func:`write_trace`; metadata values come back as strings."""
    with open(path) as fh:
        header = fh.readline().strip()
        if tuple(header.split(",")) != TRACE_COLUMNS:
            raise TraceError(f"{path}: unexpected header {header!r}")
        records = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            if len(parts) != len(TRACE_COLUMNS):
                raise TraceError(f"{path}:{lineno}: expected {len(TRACE_COLUMNS)} fields")
            records.append(TraceRecord(int(parts[0]), float(parts[1]), float(parts[2]), float(parts[3]),
                                       float(parts[4]), bool(int(parts[5])), float(parts[6])))
    return Trace(records, read_meta(path))
