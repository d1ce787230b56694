"""scikit-learn style front end for the randomized HSS compressor."""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted

from .compress import CompressionConfig, compress_nonsymmetric, compress_symmetric
from .exceptions import InvalidInputError
from .ops import apply, apply_transpose, stats, to_dense
from .orthonormalize import orthonormalize, orthonormalize_nonsymmetric
from .source import DenseAccessor, MatrixAccessor


def check_operator(A):
    """Wrap a square array as an accessor; pass accessors through."""
    if isinstance(A, MatrixAccessor):
        return A
    A = check_array(A, dtype=np.float64, ensure_min_samples=2, ensure_min_features=2)
    if A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {A.shape}")
    return DenseAccessor(A)


class HSSCompressor(TransformerMixin, BaseEstimator):
    """Randomized HSS approximation of a linear operator.

    ``fit`` takes a square array or a :class:`~hsskit.source.MatrixAccessor`
    and stores the factorization in ``factorization_``. ``transform`` maps
    each row ``x`` of its input to ``A @ x`` through the fast apply.

    Parameters
    ----------
    rank : int, optional
        Fixed HSS rank. Mutually exclusive with ``tol``.
    tol : float, optional
        Accuracy target for each local interpolative decomposition.
    relative_tol : bool
        Scale ``tol`` by an estimate of ``||A||_F`` from the random sample.
    oversampling : int
        Extra random samples beyond the rank budget.
    max_rank : int
        Rank budget in tolerance mode.
    max_leaf : int
        Largest leaf of the index tree.
    symmetric : {"auto", True, False}
        ``"auto"`` follows the accessor's symmetry flag.
    orthonormal : bool
        Convert the result to orthonormal bases with diagonal couplings.
    random_state : int, RandomState or None
    """

    def __init__(
        self,
        rank=None,
        tol=1e-10,
        relative_tol=True,
        oversampling=10,
        max_rank=40,
        max_leaf=64,
        symmetric="auto",
        orthonormal=False,
        random_state=None,
    ):
        self.rank = rank
        self.tol = tol
        self.relative_tol = relative_tol
        self.oversampling = oversampling
        self.max_rank = max_rank
        self.max_leaf = max_leaf
        self.symmetric = symmetric
        self.orthonormal = orthonormal
        self.random_state = random_state

    def _config(self):
        seed = self.random_state
        if not isinstance(seed, (int, np.integer)):
            seed = int(check_random_state(seed).randint(np.iinfo(np.int32).max))
        return CompressionConfig(
            rank=self.rank,
            tol=None if self.rank is not None else self.tol,
            oversampling=self.oversampling,
            max_rank=self.max_rank,
            relative=self.relative_tol,
            seed=int(seed),
            max_leaf=self.max_leaf,
        )

    def fit(self, X, y=None):
        acc = check_operator(X)
        symmetric = acc.symmetric if self.symmetric == "auto" else bool(self.symmetric)
        if symmetric and not acc.symmetric:
            raise InvalidInputError("symmetric=True but the operator is not symmetric")
        before = acc.counters.snapshot()
        cfg = self._config()
        f = compress_symmetric(acc, cfg) if symmetric else compress_nonsymmetric(acc, cfg)
        if self.orthonormal:
            f = orthonormalize(f) if f.symmetric else orthonormalize_nonsymmetric(f)
        after = acc.counters.snapshot()
        self.factorization_ = f
        self.n_features_in_ = acc.n
        self.counters_ = {k: after[k] - before[k] for k in after}
        self.stats_ = stats(f)
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise InvalidInputError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return apply(self.factorization_, X.T).T

    def matvec(self, x):
        check_is_fitted(self)
        return apply(self.factorization_, x)

    def rmatvec(self, x):
        check_is_fitted(self)
        return apply_transpose(self.factorization_, x)

    def to_dense(self):
        check_is_fitted(self)
        return to_dense(self.factorization_)
