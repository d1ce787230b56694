import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsskit.compress import CompressionConfig, compress_symmetric
from hsskit.exceptions import CorruptFileError
from hsskit.factorization import FORMAT_VERSION, MAGIC, DiagonalBlock, HssFactorization
from hsskit.ops import to_dense
from hsskit.orthonormalize import orthonormalize, orthonormalize_nonsymmetric
from hsskit.source import dense_accessor, random_hss

FIXTURES = ["synthetic_sym", "synthetic_nonsym", "log_tol", "exp_nonsym_path"]


def variants(factorizations):
    out = dict(factorizations)
    out["log_tol_ortho"] = orthonormalize(factorizations["log_tol"])
    out["nonsym_ortho"] = orthonormalize_nonsymmetric(factorizations["synthetic_nonsym"])
    out["generic"] = random_hss(2, 2, 6, seed=1, symmetric=False)
    return out


def test_round_trip_bit_identical(factorizations, tmp_path):
    for name, f in variants(factorizations).items():
        path = tmp_path / f"{name}.hssf"
        f.save(path)
        g = HssFactorization.load(path)
        assert to_dense(g).tobytes() == to_dense(f).tobytes(), name
        assert g.to_bytes() == path.read_bytes()
        assert (g.symmetric, g.form, g.tree) == (f.symmetric, f.form, f.tree)
        assert g.ranks() == f.ranks()


def test_diagonal_blocks_stay_structural(factorizations):
    g = HssFactorization.from_bytes(orthonormalize(factorizations["log_tol"]).to_bytes())
    assert all(isinstance(B, DiagonalBlock) for B in g.B12.values())


def test_skeletons_round_trip(factorizations):
    f = factorizations["synthetic_nonsym"]
    g = HssFactorization.from_bytes(f.to_bytes())
    for node in f.skel_row:
        assert g.skel_row[node].dtype.kind == "i"
        np.testing.assert_array_equal(g.skel_row[node], f.skel_row[node])
        np.testing.assert_array_equal(g.skel_col[node], f.skel_col[node])


def test_single_node(rng):
    A = rng.standard_normal((5, 5))
    f = compress_symmetric(dense_accessor(A + A.T), CompressionConfig(rank=1, max_leaf=8))
    g = HssFactorization.from_bytes(f.to_bytes())
    assert to_dense(g).tobytes() == to_dense(f).tobytes()


def test_header_layout(factorizations):
    f = factorizations["synthetic_sym"]
    data = f.to_bytes()
    assert data[:4] == MAGIC and data.endswith(b"END\0")
    version, n, depth, flags = struct.unpack_from("<IQII", data, 4)
    assert (version, n, depth, flags) == (FORMAT_VERSION, f.n, f.tree.depth, 1)
    bounds = struct.unpack_from(f"<{2**depth + 1}Q", data, 24)
    assert bounds == f.tree.leaf_bounds


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: b"HSSX" + d[4:], "magic"),
        (lambda d: d[:4] + struct.pack("<I", 99) + d[8:], "version"),
        (lambda d: d[:-4], "trailer"),
        (lambda d: d[: len(d) // 2], "end of file"),
    ],
)
def test_corruption_detected(factorizations, mutate, message):
    data = factorizations["log_tol"].to_bytes()
    with pytest.raises(CorruptFileError, match=message):
        HssFactorization.from_bytes(mutate(data))


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_every_truncation_is_rejected(factorizations, data):
    blob = factorizations["synthetic_nonsym"].to_bytes()
    cut = data.draw(st.integers(0, len(blob) - 1))
    with pytest.raises(CorruptFileError):
        HssFactorization.from_bytes(blob[:cut])
