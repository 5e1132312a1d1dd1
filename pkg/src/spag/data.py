"""Datasets for distributed empirical risk minimization.

Examples are stored row-compressed (``scipy.sparse.csr_matrix``) with
0-based feature indices. LibSVM's 1-based indices only exist at the I/O
boundary.
"""

import io
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, ParseError

# above this fill ratio, products go through a dense copy of the design matrix
DENSE_THRESHOLD = 0.25


class SparseDataset:
    """Feature vectors ``a_i`` (rows of ``X``) with real labels ``b_i``."""

    def __init__(self, X, labels, n_features=None):
        X = sp.csr_matrix(X, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.float64).ravel()
        if n_features is not None and n_features != X.shape[1]:
            if n_features < X.shape[1]:
                raise ArgumentError(
                    f"n_features={n_features} smaller than the widest row ({X.shape[1]})")
            X = sp.csr_matrix((X.data, X.indices, X.indptr), shape=(X.shape[0], n_features))
        if labels.shape[0] != X.shape[0]:
            raise ArgumentError(
                f"{X.shape[0]} rows but {labels.shape[0]} labels")
        if not np.all(np.isfinite(X.data)) or not np.all(np.isfinite(labels)):
            raise ArgumentError("dataset contains non-finite values")
        X.sum_duplicates()
        X.sort_indices()
        self.X = X
        self.labels = labels
        self.row_norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())

    @property
    def n_examples(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    def __len__(self):
        return self.n_examples

    def __repr__(self):
        return (f"SparseDataset(n_examples={self.n_examples}, "
                f"n_features={self.n_features}, nnz={self.X.nnz})")

    def row(self, i):
        """Return ``(indices, values)`` of example ``i``."""
        lo, hi = self.X.indptr[i], self.X.indptr[i + 1]
        return self.X.indices[lo:hi], self.X.data[lo:hi]

    @cached_property
    def design(self):
        """Matrix used for products: dense when the data is dense enough."""
        n, d = self.X.shape
        if n * d and self.X.nnz >= DENSE_THRESHOLD * n * d:
            return self.X.toarray()
        return self.X

    def take(self, indices):
        """Sub-dataset over ``indices``, kept in ascending example order."""
        idx = np.sort(np.asarray(indices, dtype=np.intp))
        if idx.size and (idx[0] < 0 or idx[-1] >= self.n_examples):
            raise ArgumentError("subset index out of range")
        return SparseDataset(self.X[idx], self.labels[idx], n_features=self.n_features)

    def label_set(self):
        return set(np.unique(self.labels).tolist())

    def is_binary(self):
        return self.label_set() <= {-1.0, 1.0}


@dataclass(frozen=True)
class ShardAssignment:
    m: int
    shards: tuple
    seed: object = None

    def sizes(self):
        return [len(s) for s in self.shards]


@dataclass(frozen=True)
class PrecondSample:
    indices: np.ndarray
    seed: object = None

    @property
    def n(self):
        return len(self.indices)


def _map_labels(labels):
    values = set(np.unique(labels).tolist())
    if values and values <= {0.0, 1.0} and 0.0 in values:
        return np.where(labels > 0, 1.0, -1.0)
    return labels


def parse_libsvm(source, n_features=None):
    """Parse LibSVM text into a :class:`SparseDataset`.

    ``source`` is ``bytes``/``str`` content or a binary/text stream; use
    :func:`load_libsvm` for paths. Labels in {0, 1} are mapped to {-1, +1};
    anything else is kept as-is (regression targets).
    """
    if hasattr(source, "read"):
        source = source.read()
    text = source.decode() if isinstance(source, bytes) else source

    labels, data, indices, indptr = [], [], [], [0]
    width = 0
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            labels.append(float(tokens[0]))
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", lineno) from None
        prev = 0
        for tok in tokens[1:]:
            key, sep, val = tok.partition(":")
            if not sep:
                raise ParseError(f"expected idx:val, got {tok!r}", lineno)
            try:
                idx = int(key)
                value = float(val)
            except ValueError:
                raise ParseError(f"bad feature {tok!r}", lineno) from None
            if idx < 1:
                raise ParseError(f"feature index {idx} must be >= 1", lineno)
            if idx <= prev:
                raise ParseError(f"feature indices not strictly increasing at {idx}", lineno)
            if not np.isfinite(value):
                raise ParseError(f"non-finite value in {tok!r}", lineno)
            prev = idx
            indices.append(idx - 1)
            data.append(value)
        width = max(width, prev)
        indptr.append(len(indices))

    if n_features is None:
        n_features = width
    elif n_features < width:
        raise ParseError(f"feature index {width} exceeds n_features={n_features}")
    X = sp.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int32),
         np.asarray(indptr, dtype=np.int64)),
        shape=(len(labels), n_features))
    return SparseDataset(X, _map_labels(np.asarray(labels, dtype=np.float64)))


def load_libsvm(path, n_features=None):
    with open(path, "rb") as fh:
        return parse_libsvm(fh, n_features=n_features)


def write_libsvm(ds, target):
    """Write ``ds`` as LibSVM text to a path or text stream."""
    lines = []
    for i in range(ds.n_examples):
        idx, val = ds.row(i)
        label = ds.labels[i]
        head = f"{int(label):+d}" if label in (-1.0, 1.0) else repr(float(label))
        feats = " ".join(f"{j + 1}:{v!r}" for j, v in zip(idx.tolist(), val.tolist()))
        lines.append(f"{head} {feats}".rstrip())
    text = "\n".join(lines) + ("\n" if lines else "")
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w") as fh:
            fh.write(text)


def normalize_rows(ds, R=1.0):
    """Scale every row with ``||a_i|| > R`` down to norm exactly ``R``."""
    if not R > 0:
        raise ArgumentError(f"R must be positive, got {R}")
    norms = ds.row_norms
    scale = np.ones_like(norms)
    big = norms > R
    scale[big] = R / norms[big]
    X = sp.diags(scale) @ ds.X
    out = SparseDataset(X, ds.labels.copy(), n_features=ds.n_features)
    # pin the cache so rescaled rows report R exactly
    out.row_norms = np.where(big, R, norms)
    return out


def _as_count(ds_or_n):
    return ds_or_n.n_examples if isinstance(ds_or_n, SparseDataset) else int(ds_or_n)


def partition(ds, m, seed=None):
    """Shuffle example indices and split them into ``m`` near-even shards."""
    N = _as_count(ds)
    if not 1 <= m <= N:
        raise ArgumentError(f"need 1 <= m <= N, got m={m}, N={N}")
    perm = np.random.default_rng(seed).permutation(N)
    shards = tuple(np.sort(chunk) for chunk in np.array_split(perm, m))
    return ShardAssignment(m=m, shards=shards, seed=seed)


def subsample(ds, n, seed=None):
    """Draw ``n`` distinct example indices uniformly without replacement."""
    N = _as_count(ds)
    if not 1 <= n <= N:
        raise ArgumentError(f"need 1 <= n <= N, got n={n}, N={N}")
    idx = np.random.default_rng(seed).choice(N, size=n, replace=False)
    return PrecondSample(indices=idx, seed=seed)


def make_synthetic(d, N, kind="logistic", decay=0.9, seed=None, normalize=True):
    """Planted linear model with geometrically decaying feature scales.

    Coordinate ``j`` has standard deviation ``decay**j`` before rows are
    normalized to ``||a_i|| <= 1``. Logistic labels are the planted signs
    with 5% flipped; squared-loss targets get N(0, 0.1**2) noise.
    """
    if d < 1 or N < 1:
        raise ArgumentError("d and N must be >= 1")
    if not 0 < decay <= 1:
        raise ArgumentError(f"decay must lie in (0, 1], got {decay}")
    if kind not in ("logistic", "squared"):
        raise ArgumentError(f"unknown kind {kind!r}")
    rng = np.random.default_rng(seed)
    scales = decay ** np.arange(d, dtype=np.float64)
    A = rng.standard_normal((N, d)) * scales
    x_true = rng.standard_normal(d)
    if normalize:
        norms = np.linalg.norm(A, axis=1)
        A /= np.maximum(norms, 1.0)[:, None]
    margin = A @ x_true
    if kind == "logistic":
        b = np.where(margin >= 0, 1.0, -1.0)
        flip = rng.random(N) < 0.05
        b[flip] = -b[flip]
    else:
        b = margin + 0.1 * rng.standard_normal(N)
    return SparseDataset(sp.csr_matrix(A), b)
