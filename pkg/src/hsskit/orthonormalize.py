"""Conversion of an HSS factorization to orthonormal bases with diagonal couplings.

Works bottom-up over sibling pairs: QR-factor both children's bases, push the
triangular factors into the coupling block, diagonalize it with a full SVD
and fold the rotations into the parent's transfer matrix. Diagonal blocks are
carried over untouched. Ranks can only shrink, when a basis is numerically
rank-deficient.
"""
import numpy as np

from .exceptions import InvalidInputError
from .factorization import ORTHONORMAL, DiagonalBlock, HssFactorization, dense
from .linalg import qr_factor


def _full_svd(M):
    """``M = X @ diag(s) @ Y.T`` with square orthogonal ``X`` and ``Y``."""
    r, c = M.shape
    if r == 0 or c == 0:
        return np.eye(r), np.zeros(0), np.eye(c)
    X, s, Yt = np.linalg.svd(M, full_matrices=True)
    return X, s, Yt.T


def _fold(transfer, k1, left, right):
    """Parent transfer matrix re-expressed in the children's new bases."""
    return np.concatenate([left @ transfer[:k1], right @ transfer[k1:]])


def _shell(f, symmetric):
    return HssFactorization(
        f.tree,
        symmetric,
        form=ORTHONORMAL,
        D={k: v.copy() for k, v in f.D.items()},
        V=None if symmetric else {},
        B21=None if symmetric else {},
        skel_row={k: v.copy() for k, v in f.skel_row.items()},
        skel_col=None if symmetric else {nd: f.col_skeleton(nd).copy() for nd in f.skel_row},
    )


def orthonormalize(f):
    """Orthonormal-basis form of a symmetric factorization.

    Every transfer matrix of the result has orthonormal columns and every
    coupling block is a :class:`DiagonalBlock` of nonnegative, descending
    singular values.
    """
    if not f.symmetric:
        raise InvalidInputError("orthonormalize needs a symmetric factorization")
    tree = f.tree
    out = _shell(f, True)
    tmp = {leaf: f.U[leaf] for leaf in tree.leaves()}
    for p in range(tree.depth - 1, -1, -1):
        for node in tree.nodes_at_level(p):
            c1, c2 = tree.children(node)
            W1, R1 = qr_factor(tmp[c1])
            W2, R2 = qr_factor(tmp[c2])
            X1, s, X2 = _full_svd(R1 @ dense(f.B12[node]) @ R2.T)
            out.U[c1] = W1 @ X1
            out.U[c2] = W2 @ X2
            out.B12[node] = DiagonalBlock(s, (R1.shape[0], R2.shape[0]))
            if p > 0:
                k1 = f.row_rank(c1)
                tmp[node] = _fold(f.U[node], k1, X1.T @ R1, X2.T @ R2)
    return out


def orthonormalize_nonsymmetric(f):
    """Orthonormal-basis form of a general factorization.

    Row and column bases get separate QR factors; ``B_{c1 c2}`` and
    ``B_{c2 c1}`` are diagonalized by independent SVDs. Symmetric input is
    accepted and returned as a non-symmetric factorization.
    """
    tree = f.tree
    out = _shell(f, False)
    tmp_u = {leaf: f.U[leaf] for leaf in tree.leaves()}
    tmp_v = {leaf: f.col_basis(leaf) for leaf in tree.leaves()}
    for p in range(tree.depth - 1, -1, -1):
        for node in tree.nodes_at_level(p):
            c1, c2 = tree.children(node)
            Wu1, Ru1 = qr_factor(tmp_u[c1])
            Wu2, Ru2 = qr_factor(tmp_u[c2])
            Wv1, Rv1 = qr_factor(tmp_v[c1])
            Wv2, Rv2 = qr_factor(tmp_v[c2])
            b12, b21 = f.coupling(node)
            Xu1, s12, Yv2 = _full_svd(Ru1 @ dense(b12) @ Rv2.T)
            Xu2, s21, Yv1 = _full_svd(Ru2 @ dense(b21) @ Rv1.T)
            out.U[c1], out.U[c2] = Wu1 @ Xu1, Wu2 @ Xu2
            out.V[c1], out.V[c2] = Wv1 @ Yv1, Wv2 @ Yv2
            out.B12[node] = DiagonalBlock(s12, (Ru1.shape[0], Rv2.shape[0]))
            out.B21[node] = DiagonalBlock(s21, (Ru2.shape[0], Rv1.shape[0]))
            if p > 0:
                tmp_u[node] = _fold(f.U[node], f.row_rank(c1), Xu1.T @ Ru1, Xu2.T @ Ru2)
                tmp_v[node] = _fold(f.col_basis(node), f.col_rank(c1), Yv1.T @ Rv1, Yv2.T @ Rv2)
    return out
