"""The HSS factorization container and its binary file format.

Storage convention, per node ``tau``:

* leaves keep the dense diagonal block ``D[tau]`` and the full basis
  ``U[tau]`` (``|I_tau| x k_tau``);
* non-leaf, non-root nodes keep the nested transfer matrix ``U[tau]``
  (``(k_c1 + k_c2) x k_tau``);
* every non-leaf node keeps the coupling blocks of its two children,
  ``B12[tau] = B_{c1 c2}`` and ``B21[tau] = B_{c2 c1}``.

Symmetric factorizations set ``V`` and ``B21`` to ``None``; they are
implied by ``V = U`` and ``B21 = B12^t``.

File layout (all integers and floats little-endian)::

    b"HSSF"  u32 version  u64 N  u32 P  u32 flags
    u64 * (2**P + 1)           leaf boundaries
    per node, ordered by (level, position):
        u32 level  u32 position  u32 n_arrays
        per array:
            u8 tag  u8 dtype  u8 kind  u8 ndim  u64 * ndim shape
            payload: prod(shape) values (kind 0, dense, row-major)
                     or min(shape) values (kind 1, diagonal)
    b"END\\0"

``flags`` bit 0 marks a symmetric factorization, bit 1 orthonormal form and
bit 2 generic form (bases that are neither interpolatory nor orthonormal
with diagonal coupling).
dtype 0 is float64, 1 is int64. Tags: 1 D, 2 U, 3 V, 4 B12, 5 B21,
6 row skeleton, 7 column skeleton.
"""
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CorruptFileError
from .tree import HssTree

INTERPOLATORY = "interpolatory"
ORTHONORMAL = "orthonormal"
GENERIC = "generic"
_FORM_BITS = {INTERPOLATORY: 0, ORTHONORMAL: 2, GENERIC: 4}

MAGIC = b"HSSF"
TRAILER = b"END\0"
FORMAT_VERSION = 1

_TAGS = {"D": 1, "U": 2, "V": 3, "B12": 4, "B21": 5, "skel_row": 6, "skel_col": 7}
_TAG_NAMES = {v: k for k, v in _TAGS.items()}
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8")}


class DiagonalBlock:
    """Rectangular matrix that is zero off its main diagonal.

    Only the diagonal is stored, so off-diagonal entries are exactly zero.
    """

    def __init__(self, values, shape):
        self.values = np.asarray(values, dtype=np.float64)
        self.shape = (int(shape[0]), int(shape[1]))
        if self.values.shape != (min(self.shape),):
            raise ValueError("diagonal length does not match shape")

    @property
    def T(self):
        return DiagonalBlock(self.values, self.shape[::-1])

    @property
    def size(self):
        return self.values.size

    def toarray(self):
        out = np.zeros(self.shape)
        r = len(self.values)
        out[np.arange(r), np.arange(r)] = self.values
        return out

    def __matmul__(self, x):
        x = np.asarray(x)
        r = len(self.values)
        out = np.zeros((self.shape[0],) + x.shape[1:])
        if x.ndim == 1:
            out[:r] = self.values * x[:r]
        else:
            out[:r] = self.values[:, None] * x[:r]
        return out

    def __rmatmul__(self, x):
        return (self.T @ np.asarray(x).T).T

    def __repr__(self):
        return f"DiagonalBlock({self.values!r}, shape={self.shape})"


def dense(block):
    return block.toarray() if isinstance(block, DiagonalBlock) else block


@dataclass
class HssFactorization:
    tree: HssTree
    symmetric: bool
    form: str = INTERPOLATORY
    D: dict = field(default_factory=dict)
    U: dict = field(default_factory=dict)
    V: dict | None = None
    B12: dict = field(default_factory=dict)
    B21: dict | None = None
    skel_row: dict = field(default_factory=dict)
    skel_col: dict | None = None

    @property
    def n(self):
        return self.tree.n

    def col_basis(self, node):
        return self.U[node] if self.V is None else self.V[node]

    def coupling(self, parent):
        """``(B_{c1 c2}, B_{c2 c1})`` for the children of ``parent``."""
        b12 = self.B12[parent]
        b21 = b12.T if self.B21 is None else self.B21[parent]
        return b12, b21

    def row_rank(self, node):
        return self.U[node].shape[1]

    def col_rank(self, node):
        return self.col_basis(node).shape[1]

    def ranks(self):
        """Per-node ``(row rank, column rank)``, root excluded."""
        return {nd: (self.row_rank(nd), self.col_rank(nd)) for nd in self.U}

    def col_skeleton(self, node):
        return self.skel_row[node] if self.skel_col is None else self.skel_col[node]

    # serialization

    def to_bytes(self):
        buf = io.BytesIO()
        write(self, buf)
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data):
        return read(io.BytesIO(data))

    def save(self, path):
        with open(path, "wb") as fh:
            write(self, fh)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return read(fh)


def _node_arrays(f, node):
    items = []
    for name in ("D", "U", "V", "B12", "B21", "skel_row", "skel_col"):
        store = getattr(f, name)
        if store is not None and node in store:
            items.append((name, store[node]))
    return items


def _write_array(fh, tag, arr):
    if isinstance(arr, DiagonalBlock):
        kind, shape, payload = 1, arr.shape, arr.values
    else:
        kind, shape, payload = 0, arr.shape, arr
    dtype_code = 1 if np.asarray(payload).dtype.kind in "iu" else 0
    payload = np.ascontiguousarray(payload, dtype=_DTYPES[dtype_code])
    fh.write(struct.pack("<BBBB", tag, dtype_code, kind, len(shape)))
    fh.write(struct.pack(f"<{len(shape)}Q", *shape))
    fh.write(payload.tobytes(order="C"))


def write(f, fh):
    tree = f.tree
    flags = (1 if f.symmetric else 0) | _FORM_BITS[f.form]
    fh.write(MAGIC)
    fh.write(struct.pack("<IQII", FORMAT_VERSION, tree.n, tree.depth, flags))
    fh.write(struct.pack(f"<{len(tree.leaf_bounds)}Q", *tree.leaf_bounds))
    for node in tree.nodes():
        items = _node_arrays(f, node)
        fh.write(struct.pack("<III", node[0], node[1], len(items)))
        for name, arr in items:
            _write_array(fh, _TAGS[name], arr)
    fh.write(TRAILER)


def _read_exact(fh, n):
    data = fh.read(n)
    if len(data) != n:
        raise CorruptFileError("unexpected end of file")
    return data


def _unpack(fh, fmt):
    return struct.unpack(fmt, _read_exact(fh, struct.calcsize(fmt)))


def _read_array(fh):
    tag, dtype_code, kind, ndim = _unpack(fh, "<BBBB")
    if tag not in _TAG_NAMES or dtype_code not in _DTYPES or kind not in (0, 1):
        raise CorruptFileError(f"bad array header ({tag}, {dtype_code}, {kind})")
    shape = _unpack(fh, f"<{ndim}Q")
    count = int(np.prod(shape)) if kind == 0 else min(shape)
    dt = _DTYPES[dtype_code]
    data = np.frombuffer(_read_exact(fh, count * dt.itemsize), dtype=dt)
    data = data.astype(dt.newbyteorder("="))
    if kind == 1:
        return _TAG_NAMES[tag], DiagonalBlock(data, shape)
    return _TAG_NAMES[tag], data.reshape(shape)


def read(fh):
    if _read_exact(fh, 4) != MAGIC:
        raise CorruptFileError("not an HSSF file (bad magic)")
    version, n, depth, flags = _unpack(fh, "<IQII")
    if version != FORMAT_VERSION:
        raise CorruptFileError(f"unsupported HSSF version {version}")
    if depth > 40:
        raise CorruptFileError(f"implausible depth {depth}")
    bounds = _unpack(fh, f"<{2**depth + 1}Q")
    try:
        tree = HssTree(n, depth, tuple(bounds))
    except ValueError as exc:
        raise CorruptFileError(str(exc)) from exc
    symmetric = bool(flags & 1)
    f = HssFactorization(
        tree,
        symmetric,
        form=ORTHONORMAL if flags & 2 else GENERIC if flags & 4 else INTERPOLATORY,
        V=None if symmetric else {},
        B21=None if symmetric else {},
        skel_col=None if symmetric else {},
    )
    for expected in tree.nodes():
        level, pos, count = _unpack(fh, "<III")
        if (level, pos) != expected:
            raise CorruptFileError(f"node record {(level, pos)} out of order")
        for _ in range(count):
            name, arr = _read_array(fh)
            store = getattr(f, name)
            if store is None:
                raise CorruptFileError(f"{name} present in a symmetric file")
            store[expected] = arr
    if fh.read(len(TRAILER)) != TRAILER:
        raise CorruptFileError("missing trailer")
    return f
