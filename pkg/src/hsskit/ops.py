"""Operations on an HSS factorization: fast apply, dense reconstruction, stats."""
import numpy as np

from .exceptions import InvalidInputError
from .tree import ROOT

DENSE_LIMIT = 16384

# apply() performs at most APPLY_FLOP_CONSTANT * N * (k_max + leaf_max) flops
# per right-hand side: leaves cost 4 m k + 2 m^2, and the transfer/coupling
# products at node tau cost <= 12 k^2 with k <= |I_tau|, which sums to
# <= 48 N k_max over the tree.
APPLY_FLOP_CONSTANT = 52


def _check_vector(f, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[0] != f.n:
        raise InvalidInputError(f"expected leading dimension {f.n}, got shape {x.shape}")
    return x


def _mm(block, x, tally):
    tally[0] += 2 * block.size * (x.shape[1] if x.ndim == 2 else 1)
    return block @ x


def _apply(f, x, transpose, counters):
    tree = f.tree
    if transpose:
        row_b, col_b = f.col_basis, f.U.__getitem__
    else:
        row_b, col_b = f.U.__getitem__, f.col_basis

    def couple(parent):
        b12, b21 = f.coupling(parent)
        return (b21.T, b12.T) if transpose else (b12, b21)

    tally = [0]
    tail = x.shape[1:]
    if tree.depth == 0:
        d = f.D[ROOT].T if transpose else f.D[ROOT]
        b = _mm(d, x, tally)
        if counters is not None:
            counters.add(flops=tally[0])
        return b
    xt = {}
    for leaf in tree.leaves():
        lo, hi = tree.interval(leaf)
        xt[leaf] = _mm(col_b(leaf).T, x[lo:hi], tally)
    for p in range(tree.depth - 1, 0, -1):
        for node in tree.nodes_at_level(p):
            c1, c2 = tree.children(node)
            xt[node] = _mm(col_b(node).T, np.concatenate([xt[c1], xt[c2]]), tally)

    bt = {ROOT: None}
    for p in range(tree.depth):
        for node in tree.nodes_at_level(p):
            c1, c2 = tree.children(node)
            b12, b21 = couple(node)
            top = _mm(b12, xt[c2], tally)
            bottom = _mm(b21, xt[c1], tally)
            if bt[node] is not None:
                inherited = _mm(row_b(node), bt[node], tally)
                k1 = top.shape[0]
                top = top + inherited[:k1]
                bottom = bottom + inherited[k1:]
            bt[c1], bt[c2] = top, bottom

    b = np.empty((f.n,) + tail)
    for leaf in tree.leaves():
        lo, hi = tree.interval(leaf)
        d = f.D[leaf].T if transpose else f.D[leaf]
        out = _mm(d, x[lo:hi], tally)
        if bt[leaf] is not None:
            out = out + _mm(row_b(leaf), bt[leaf], tally)
        b[lo:hi] = out
    if counters is not None:
        counters.add(flops=tally[0])
    return b


def apply(f, x, counters=None):
    """Compute ``A @ x`` in O(N k) work via the upward/downward tree sweep.

    ``x`` may be a vector or an ``N x m`` block of vectors. When ``counters``
    is given, its flop estimate is increased by the work performed.
    """
    return _apply(f, _check_vector(f, x), False, counters)


def apply_transpose(f, x, counters=None):
    """Compute ``A^t @ x`` with the roles of the row and column bases exchanged."""
    return _apply(f, _check_vector(f, x), True, counters)


def apply_flop_bound(f, nrhs=1):
    """Upper bound on the flops spent by one ``apply`` call."""
    k_max = max([max(r) for r in f.ranks().values()] + [0])
    return APPLY_FLOP_CONSTANT * f.n * (k_max + max(f.tree.leaf_sizes())) * nrhs


def full_bases(f, transpose=False):
    """Expanded bases ``U_tau`` (or ``V_tau``) on the original index sets."""
    tree = f.tree
    if tree.depth == 0:
        return {}
    get = f.col_basis if transpose else f.U.__getitem__
    out = {leaf: get(leaf) for leaf in tree.leaves()}
    for p in range(tree.depth - 1, 0, -1):
        for node in tree.nodes_at_level(p):
            c1, c2 = tree.children(node)
            t = get(node)
            k1 = out[c1].shape[1]
            out[node] = np.concatenate([out[c1] @ t[:k1], out[c2] @ t[k1:]])
    return out


def to_dense(f):
    """Materialize the represented matrix by assembling every sibling block."""
    tree = f.tree
    if f.n > DENSE_LIMIT:
        raise InvalidInputError(f"N = {f.n} exceeds the dense limit {DENSE_LIMIT}")
    A = np.zeros((f.n, f.n))
    for leaf in tree.leaves():
        lo, hi = tree.interval(leaf)
        A[lo:hi, lo:hi] = f.D[leaf]
    if tree.depth == 0:
        return A
    U = full_bases(f)
    V = U if f.V is None else full_bases(f, transpose=True)
    for p in range(tree.depth):
        for node in tree.nodes_at_level(p):
            c1, c2 = tree.children(node)
            (a1, b1), (a2, b2) = tree.interval(c1), tree.interval(c2)
            b12, b21 = f.coupling(node)
            A[a1:b1, a2:b2] = U[c1] @ (b12 @ V[c2].T)
            A[a2:b2, a1:b1] = U[c2] @ (b21 @ V[c1].T)
    return A


def _stored(block):
    return block.size if block is not None else 0


def stats(f):
    """Rank profile and storage summary of a factorization."""
    tree = f.tree
    levels = []
    for p in range(1, tree.depth + 1):
        ranks = [max(f.row_rank(nd), f.col_rank(nd)) for nd in tree.nodes_at_level(p)]
        levels.append(
            {"level": p, "max_rank": int(max(ranks)), "mean_rank": float(np.mean(ranks))}
        )
    stored = sum(d.size for d in f.D.values())
    stored += sum(u.size for u in f.U.values())
    if f.V is not None:
        stored += sum(v.size for v in f.V.values())
    stored += sum(_stored(b) for b in f.B12.values())
    if f.B21 is not None:
        stored += sum(_stored(b) for b in f.B21.values())
    return {
        "n": f.n,
        "depth": tree.depth,
        "form": f.form,
        "symmetric": f.symmetric,
        "max_rank": max([lv["max_rank"] for lv in levels] + [0]),
        "levels": levels,
        "stored_scalars": int(stored),
        "compression_ratio": stored / f.n**2,
    }

