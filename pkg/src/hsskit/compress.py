"""Randomized construction of interpolatory HSS factorizations.

The compressor draws one Gaussian test matrix ``R`` (two in the
non-symmetric case), forms the sample ``S = A R`` with ``l`` black-box
products and then sweeps the tree from the leaves upward. At each node the
sample of its HSS row block is obtained by downdating the children's retained
samples with the sibling interactions, so only ``O(N k)`` entries of ``A``
are ever evaluated. Interpolative decompositions of the local samples give
nested bases whose coupling blocks are plain submatrices of ``A``.
"""
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import InvalidInputError, RankOverflowError
from .factorization import INTERPOLATORY, HssFactorization
from .linalg import interpolate_fixed, interpolate_tol
from .tree import ROOT, build_uniform_tree

THREADS_ENV = "HSSKIT_NUM_THREADS"


@dataclass(frozen=True)
class CompressionConfig:
    """Parameters of a compression run.

    Exactly one of ``rank`` (fixed-rank mode) and ``tol`` (tolerance mode)
    must be set. In tolerance mode the sample width is
    ``max_rank + oversampling`` and a node whose rank would exceed
    ``max_rank`` raises :class:`RankOverflowError`. With ``relative=True``
    the tolerance is scaled by ``||S||_F / sqrt(l)``, an estimate of
    ``||A||_F`` taken from the initial sample.
    """

    rank: int | None = None
    tol: float | None = None
    oversampling: int = 10
    max_rank: int = 40
    relative: bool = False
    seed: int = 0
    max_leaf: int = 64
    n_jobs: int | None = None

    def __post_init__(self):
        if (self.rank is None) == (self.tol is None):
            raise InvalidInputError("set exactly one of rank and tol")
        if self.rank is not None and self.rank < 1:
            raise InvalidInputError("rank must be at least 1")
        if self.tol is not None and not self.tol > 0:
            raise InvalidInputError("tol must be positive")
        if self.oversampling < 1:
            raise InvalidInputError("oversampling must be at least 1")
        if self.max_rank < 1 or self.max_leaf < 1:
            raise InvalidInputError("max_rank and max_leaf must be positive")

    @property
    def fixed_rank(self):
        return self.rank is not None

    @property
    def sample_width(self):
        return (self.rank if self.fixed_rank else self.max_rank) + self.oversampling

    def threads(self):
        if self.n_jobs is not None:
            return max(1, self.n_jobs)
        return max(1, int(os.environ.get(THREADS_ENV, "1")))


def gaussian(rng, n, l, counters):
    counters.add(rng_draws=n * l)
    return rng.standard_normal((n, l))


class _Sweep:
    """Shared plumbing for the symmetric and non-symmetric sweeps."""

    def __init__(self, acc, cfg, timings):
        if acc.n < 2:
            raise InvalidInputError("compression needs N >= 2")
        self.acc = acc
        self.cfg = cfg
        self.l = cfg.sample_width
        self.tree = build_uniform_tree(acc.n, cfg.max_leaf)
        self.rng = np.random.default_rng(cfg.seed)
        self.timings = timings if timings is not None else {}
        self.eps = None

    def charge(self, flops):
        self.acc.counters.add(flops=flops)

    def set_tolerance(self, *samples):
        if self.cfg.fixed_rank:
            return
        scale = 1.0
        if self.cfg.relative:
            total = sum(float(np.sum(s**2)) for s in samples)
            scale = np.sqrt(total / (len(samples) * self.l))
        self.eps = self.cfg.tol * scale

    def interpolate(self, node, sample):
        """ID of the rows of a local sample; returns ``(basis, J)``."""
        m = sample.shape[0]
        st = sample.T
        self.charge(4 * m * self.l * min(m, self.l))
        if self.cfg.fixed_rank:
            k = min(self.cfg.rank, m, self.l)
            dec = interpolate_fixed(st, k, cap_numerical_rank=True)
        else:
            dec = interpolate_tol(st, self.eps)
            if dec.rank > self.cfg.max_rank:
                raise RankOverflowError(node, dec.rank, self.l)
        # contiguous storage keeps BLAS rounding identical after a file round trip
        return np.ascontiguousarray(dec.coeff.T), dec.skeleton

    def run_level(self, fn, nodes):
        workers = self.cfg.threads()
        if workers == 1 or len(nodes) == 1:
            return [fn(nd) for nd in nodes]
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, nodes))

    def sweep(self, fn):
        start = time.perf_counter()
        for p in range(self.tree.depth, 0, -1):
            self.run_level(fn, self.tree.nodes_at_level(p))
        self.timings["sweep"] = time.perf_counter() - start


def compress_symmetric(acc, cfg, timings=None):
    """Interpolatory HSS factorization of a symmetric black-box matrix.

    Uses exactly ``cfg.sample_width`` matrix-vector products. ``timings``,
    if given, receives wall-clock seconds for the ``sampling``, ``sweep`` and
    ``assembly`` phases.
    """
    if not acc.symmetric:
        raise InvalidInputError("compress_symmetric needs a symmetric accessor")
    sw = _Sweep(acc, cfg, timings)
    tree, l = sw.tree, sw.l

    start = time.perf_counter()
    R = gaussian(sw.rng, acc.n, l, acc.counters)
    S = acc.matmat(R)
    sw.timings["sampling"] = time.perf_counter() - start
    sw.set_tolerance(S)

    f = HssFactorization(tree, True, form=INTERPOLATORY)
    Rk, Sk = {}, {}

    def node_step(node):
        if tree.is_leaf(node):
            idx = tree.indices(node)
            D = acc.submatrix(idx, idx)
            r_loc = R[idx]
            s_loc = S[idx] - D @ r_loc
            sw.charge(2 * D.size * l)
            f.D[node] = D
        else:
            c1, c2 = tree.children(node)
            idx = np.concatenate([f.skel_row[c1], f.skel_row[c2]])
            a12 = acc.submatrix(f.skel_row[c1], f.skel_row[c2])
            r_loc = np.concatenate([Rk[c1], Rk[c2]])
            s_loc = np.concatenate([Sk[c1] - a12 @ Rk[c2], Sk[c2] - a12.T @ Rk[c1]])
            sw.charge(4 * a12.size * l)
            f.B12[node] = a12
        basis, J = sw.interpolate(node, s_loc)
        f.U[node] = basis
        f.skel_row[node] = idx[J]
        Rk[node] = basis.T @ r_loc
        Sk[node] = s_loc[J]
        sw.charge(2 * basis.size * l)

    sw.sweep(node_step)

    start = time.perf_counter()
    if tree.depth == 0:
        idx = tree.indices(ROOT)
        f.D[ROOT] = acc.submatrix(idx, idx)
    else:
        c1, c2 = tree.children(ROOT)
        f.B12[ROOT] = acc.submatrix(f.skel_row[c1], f.skel_row[c2])
    sw.timings["assembly"] = time.perf_counter() - start
    return f


def compress_nonsymmetric(acc, cfg, timings=None):
    """Interpolatory HSS factorization of a general black-box matrix.

    Row-block bases ``U`` are extracted from ``A @ R_u`` and column-block
    bases ``V`` from ``A^t @ R_v``; each costs ``cfg.sample_width`` products.
    The test matrices are carried up the tree through the opposite basis
    (``R_u`` through ``V``, ``R_v`` through ``U``) because the sibling
    interaction that is subtracted from a row sample is expressed in the
    sibling's column skeleton, and vice versa.
    """
    sw = _Sweep(acc, cfg, timings)
    tree, l = sw.tree, sw.l

    start = time.perf_counter()
    Ru = gaussian(sw.rng, acc.n, l, acc.counters)
    Rv = gaussian(sw.rng, acc.n, l, acc.counters)
    Su = acc.matmat(Ru)
    Sv = acc.rmatmat(Rv)
    sw.timings["sampling"] = time.perf_counter() - start
    sw.set_tolerance(Su, Sv)

    f = HssFactorization(tree, False, form=INTERPOLATORY, V={}, B21={}, skel_col={})
    Ruk, Rvk, Suk, Svk = {}, {}, {}, {}

    def node_step(node):
        if tree.is_leaf(node):
            idx_u = idx_v = tree.indices(node)
            D = acc.submatrix(idx_u, idx_u)
            ru_loc, rv_loc = Ru[idx_u], Rv[idx_u]
            su_loc = Su[idx_u] - D @ ru_loc
            sv_loc = Sv[idx_u] - D.T @ rv_loc
            sw.charge(4 * D.size * l)
            f.D[node] = D
        else:
            c1, c2 = tree.children(node)
            idx_u = np.concatenate([f.skel_row[c1], f.skel_row[c2]])
            idx_v = np.concatenate([f.skel_col[c1], f.skel_col[c2]])
            a12 = acc.submatrix(f.skel_row[c1], f.skel_col[c2])
            a21 = acc.submatrix(f.skel_row[c2], f.skel_col[c1])
            ru_loc = np.concatenate([Ruk[c1], Ruk[c2]])
            rv_loc = np.concatenate([Rvk[c1], Rvk[c2]])
            su_loc = np.concatenate([Suk[c1] - a12 @ Ruk[c2], Suk[c2] - a21 @ Ruk[c1]])
            sv_loc = np.concatenate([Svk[c1] - a21.T @ Rvk[c2], Svk[c2] - a12.T @ Rvk[c1]])
            sw.charge(4 * (a12.size + a21.size) * l)
            f.B12[node] = a12
            f.B21[node] = a21
        U, Ju = sw.interpolate(node, su_loc)
        V, Jv = sw.interpolate(node, sv_loc)
        f.U[node], f.V[node] = U, V
        f.skel_row[node] = idx_u[Ju]
        f.skel_col[node] = idx_v[Jv]
        Ruk[node] = V.T @ ru_loc
        Rvk[node] = U.T @ rv_loc
        Suk[node] = su_loc[Ju]
        Svk[node] = sv_loc[Jv]
        sw.charge(2 * (U.size + V.size) * l)

    sw.sweep(node_step)

    start = time.perf_counter()
    if tree.depth == 0:
        idx = tree.indices(ROOT)
        f.D[ROOT] = acc.submatrix(idx, idx)
    else:
        c1, c2 = tree.children(ROOT)
        f.B12[ROOT] = acc.submatrix(f.skel_row[c1], f.skel_col[c2])
        f.B21[ROOT] = acc.submatrix(f.skel_row[c2], f.skel_col[c1])
    sw.timings["assembly"] = time.perf_counter() - start
    return f


def compress(acc, cfg, timings=None):
    """Dispatch on the accessor's symmetry flag."""
    if acc.symmetric:
        return compress_symmetric(acc, cfg, timings)
    return compress_nonsymmetric(acc, cfg, timings)


class TwoSidedId(NamedTuple):
    """``A ~= col_coeff @ A[col_skeleton][:, row_skeleton] @ row_coeff.T``."""

    col_coeff: np.ndarray
    col_skeleton: np.ndarray
    row_skeleton: np.ndarray
    row_coeff: np.ndarray

    def reconstruct(self, core):
        return self.col_coeff @ core @ self.row_coeff.T


def two_sided_id_factor(acc, k, seed=0, oversampling=10):
    """Rank-``k`` two-sided ID of a black-box matrix from ``k + oversampling``
    products with ``A`` and as many with ``A^t``.

    The core ``A[col_skeleton][:, row_skeleton]`` is not evaluated here; fetch
    it with ``acc.submatrix``.
    """
    if not 1 <= k <= acc.n:
        raise InvalidInputError(f"rank {k} outside 1..{acc.n}")
    rng = np.random.default_rng(seed)
    l = k + oversampling
    Rc = gaussian(rng, acc.n, l, acc.counters)
    Rr = gaussian(rng, acc.n, l, acc.counters)
    col = interpolate_fixed(acc.matmat(Rc).T, min(k, l), cap_numerical_rank=True)
    row = interpolate_fixed(acc.rmatmat(Rr).T, min(k, l), cap_numerical_rank=True)
    return TwoSidedId(col.coeff.T, col.skeleton, row.skeleton, row.coeff.T)
