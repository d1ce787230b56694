"""Black-box matrix accessors consumed by the compressor.

An accessor exposes exactly what the randomized compressor is allowed to
use: products with ``A`` and ``A^t`` and evaluation of individual entries.
Every call is tallied in an :class:`InstrumentationCounters` instance.
"""
import threading
from dataclasses import dataclass, field, fields

import numpy as np

from .exceptions import InvalidInputError
from .factorization import GENERIC, HssFactorization
from .linalg import as_matrix
from .ops import apply, apply_transpose, full_bases
from .tree import build_uniform_tree

MATERIALIZE_LIMIT = 16384


@dataclass
class InstrumentationCounters:
    """Monotone tallies of the work charged to an accessor.

    ``flops`` collects the arithmetic estimate reported by algorithms that run
    against the accessor; it is not charged by the accessor itself.
    """

    matvec: int = 0
    rmatvec: int = 0
    entry: int = 0
    rng_draws: int = 0
    flops: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add(self, **amounts):
        with self._lock:
            for name, value in amounts.items():
                if value < 0:
                    raise ValueError("counters only increase")
                setattr(self, name, getattr(self, name) + int(value))

    def snapshot(self):
        with self._lock:
            return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "_lock"}

    def reset(self):
        with self._lock:
            for f in fields(self):
                if f.name != "_lock":
                    setattr(self, f.name, 0)


class MatrixAccessor:
    """Base class; subclasses implement ``_matmat``, ``_rmatmat`` and ``_block``."""

    def __init__(self, n, symmetric):
        if n < 1:
            raise InvalidInputError("dimension must be positive")
        self.n = int(n)
        self.symmetric = bool(symmetric)
        self.counters = InstrumentationCounters()

    @property
    def shape(self):
        return (self.n, self.n)

    def _vector(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise InvalidInputError(f"expected a vector of length {self.n}, got {x.shape}")
        return x

    def _columns(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != self.n:
            raise InvalidInputError(f"expected an {self.n} x m array, got {X.shape}")
        return X

    def matvec(self, x):
        x = self._vector(x)
        self.counters.add(matvec=1)
        return self._matmat(x[:, None])[:, 0]

    def rmatvec(self, x):
        x = self._vector(x)
        self.counters.add(rmatvec=1)
        return self._rmatmat(x[:, None])[:, 0]

    def matmat(self, X):
        """``A @ X``, charged as one matvec per column of ``X``."""
        X = self._columns(X)
        self.counters.add(matvec=X.shape[1])
        return self._matmat(X)

    def rmatmat(self, X):
        """``A^t @ X``, charged as one transpose matvec per column."""
        X = self._columns(X)
        self.counters.add(rmatvec=X.shape[1])
        return self._rmatmat(X)

    def entry(self, i, j):
        self.counters.add(entry=1)
        return float(self._block(np.array([i]), np.array([j]))[0, 0])

    def submatrix(self, rows, cols):
        """``A[rows][:, cols]``, charged one entry evaluation per element."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        self.counters.add(entry=rows.size * cols.size)
        if rows.size == 0 or cols.size == 0:
            return np.zeros((rows.size, cols.size))
        return self._block(rows, cols)

    def materialize(self):
        """Dense copy for use as a verification oracle (not charged)."""
        if self.n > MATERIALIZE_LIMIT:
            raise InvalidInputError(f"N = {self.n} is too large to materialize")
        idx = np.arange(self.n)
        return self._block(idx, idx)

    def _rmatmat(self, X):
        if self.symmetric:
            return self._matmat(X)
        raise NotImplementedError

    def _matmat(self, X):
        raise NotImplementedError

    def _block(self, rows, cols):
        raise NotImplementedError


class DenseAccessor(MatrixAccessor):
    def __init__(self, A):
        A = as_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise InvalidInputError(f"accessor needs a square matrix, got {A.shape}")
        super().__init__(A.shape[0], np.array_equal(A, A.T))
        self.A = A

    def _matmat(self, X):
        return self.A @ X

    def _rmatmat(self, X):
        return self.A.T @ X

    def _block(self, rows, cols):
        return self.A[np.ix_(rows, cols)]


def dense_accessor(A):
    return DenseAccessor(A)


KERNELS = {
    "log": np.log,
    "inv": np.reciprocal,
    "exp": lambda d: np.exp(-d),
}
_DEFAULT_DIAGONAL = {"log": 0.0, "inv": 0.0, "exp": 1.0}


@dataclass(frozen=True)
class KernelSpec:
    """A 1-D kernel ``k(|x_i - x_j|)`` on sorted, distinct points.

    ``diagonal`` is the value used for ``i == j``; ``None`` selects 0 for the
    singular kernels and 1 for the exponential one.
    """

    kernel: str
    points: tuple
    diagonal: float | None = None

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise InvalidInputError(f"unknown kernel {self.kernel!r}; choose from {sorted(KERNELS)}")
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 1 or pts.size < 1 or not np.all(np.isfinite(pts)):
            raise InvalidInputError("points must be a nonempty finite 1-D sequence")
        if np.any(np.diff(pts) <= 0):
            raise InvalidInputError("points must be sorted ascending and pairwise distinct")

    @classmethod
    def uniform(cls, kernel, n, diagonal=None):
        """Cell-centred grid on [0, 1]."""
        return cls(kernel, tuple((np.arange(n) + 0.5) / n), diagonal)


class KernelAccessor(MatrixAccessor):
    _CHUNK = 512

    def __init__(self, spec):
        self.spec = spec
        self.x = np.asarray(spec.points, dtype=np.float64)
        self.fn = KERNELS[spec.kernel]
        self.diagonal = _DEFAULT_DIAGONAL[spec.kernel] if spec.diagonal is None else spec.diagonal
        super().__init__(self.x.size, True)

    def _block(self, rows, cols):
        d = np.abs(self.x[rows][:, None] - self.x[cols][None, :])
        same = rows[:, None] == cols[None, :]
        with np.errstate(divide="ignore"):
            out = self.fn(np.where(same, 1.0, d))
        out[same] = self.diagonal
        return out

    def _matmat(self, X):
        out = np.empty_like(X)
        cols = np.arange(self.n)
        for lo in range(0, self.n, self._CHUNK):
            rows = np.arange(lo, min(lo + self._CHUNK, self.n))
            out[rows] = self._block(rows, cols) @ X
        return out


def kernel_accessor(spec):
    return KernelAccessor(spec)


class SyntheticHssAccessor(MatrixAccessor):
    """Accessor backed by an explicit HSS factorization.

    Products run the O(N k) tree apply; an entry is evaluated from the
    expanded bases of the two children of the lowest common ancestor.
    """

    def __init__(self, factorization):
        f = factorization
        super().__init__(f.n, f.symmetric)
        self.factorization = f
        tree = f.tree
        self._leaf_pos = np.repeat(np.arange(2**tree.depth), tree.leaf_sizes())
        self._ubases = full_bases(f)
        self._vbases = self._ubases if f.V is None else full_bases(f, transpose=True)

    def _matmat(self, X):
        return apply(self.factorization, X)

    def _rmatmat(self, X):
        return apply_transpose(self.factorization, X)

    def _ancestor(self, leaf_pos, level):
        depth = self.factorization.tree.depth
        return (level, (leaf_pos >> (depth - level)) + 1)

    def _block(self, rows, cols):
        f = self.factorization
        tree = f.tree
        out = np.empty((rows.size, cols.size))
        rleaf = self._leaf_pos[rows]
        cleaf = self._leaf_pos[cols]
        for a in np.unique(rleaf):
            ri = np.flatnonzero(rleaf == a)
            for b in np.unique(cleaf):
                ci = np.flatnonzero(cleaf == b)
                if a == b:
                    leaf = (tree.depth, int(a) + 1)
                    lo = tree.interval(leaf)[0]
                    out[np.ix_(ri, ci)] = f.D[leaf][np.ix_(rows[ri] - lo, cols[ci] - lo)]
                    continue
                # children of the lowest common ancestor sit one level below it
                level = tree.depth - int(a ^ b).bit_length() + 1
                na = self._ancestor(int(a), level)
                nb = self._ancestor(int(b), level)
                b12, b21 = f.coupling(tree.parent(na))
                coupling = b12 if na[1] < nb[1] else b21
                ua = self._ubases[na][rows[ri] - tree.interval(na)[0]]
                vb = self._vbases[nb][cols[ci] - tree.interval(nb)[0]]
                out[np.ix_(ri, ci)] = ua @ (coupling @ vb.T)
        return out


def _orthonormal(rng, m, k):
    q, _ = np.linalg.qr(rng.standard_normal((m, k)))
    return q


def random_hss(rank, levels, leaf_size, seed, symmetric=True):
    """Random HSS factorization with every off-diagonal block of rank ``rank``.

    Bases have orthonormal columns; diagonal and coupling blocks are Gaussian.
    """
    if rank < 1:
        raise InvalidInputError("rank must be at least 1")
    if leaf_size < 2 * rank:
        raise InvalidInputError(f"leaf_size {leaf_size} < 2 * rank {rank}: bases would be rank-deficient")
    if levels < 0:
        raise InvalidInputError("levels must be nonnegative")
    rng = np.random.default_rng(seed)
    tree = build_uniform_tree(leaf_size * 2**levels, leaf_size)
    f = HssFactorization(
        tree,
        symmetric,
        form=GENERIC,
        V=None if symmetric else {},
        B21=None if symmetric else {},
        skel_col=None if symmetric else {},
    )
    for node in tree.nodes():
        p = node[0]
        if p == tree.depth:
            G = rng.standard_normal((leaf_size, leaf_size))
            f.D[node] = (G + G.T) / 2 if symmetric else G
        if p > 0:
            m = leaf_size if p == tree.depth else 2 * rank
            f.U[node] = _orthonormal(rng, m, rank)
            if not symmetric:
                f.V[node] = _orthonormal(rng, m, rank)
        if p < tree.depth:
            f.B12[node] = rng.standard_normal((rank, rank))
            if not symmetric:
                f.B21[node] = rng.standard_normal((rank, rank))
    return f


def synthetic_hss_accessor(rank, levels, leaf_size, seed, symmetric=True):
    """Accessor for a random exact-rank HSS matrix plus its ground truth."""
    f = random_hss(rank, levels, leaf_size, seed, symmetric)
    return SyntheticHssAccessor(f), f


def check_consistency(acc, n_probes=50, seed=0):
    """Largest ``|entry(i, j) - (A e_j)_i|`` over random probes.

    Uses the accessor's own counters, so call it on a scratch accessor or
    take counter deltas.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_probes):
        i, j = rng.integers(acc.n, size=2)
        e = np.zeros(acc.n)
        e[j] = 1.0
        worst = max(worst, abs(acc.entry(i, j) - acc.matvec(e)[i]))
    return worst


def load_dense_text(path):
    """Read ``rows cols`` followed by row-major whitespace-separated entries."""
    with open(path) as fh:
        tokens = fh.read().split()
    try:
        rows, cols = int(tokens[0]), int(tokens[1])
        values = np.array([float(t) for t in tokens[2:]])
    except (IndexError, ValueError) as exc:
        raise InvalidInputError(f"{path}: malformed dense matrix file") from exc
    if values.size != rows * cols:
        raise InvalidInputError(f"{path}: expected {rows * cols} entries, found {values.size}")
    return as_matrix(values.reshape(rows, cols))


def save_dense_text(path, A):
    A = as_matrix(A)
    with open(path, "w") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]}\n")
        np.savetxt(fh, A, fmt="%.17g")
