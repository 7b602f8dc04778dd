import numpy as np
import pytest

from sdf_forge.encoding import (
    FourierEncoding,
    HashEncoding,
    IdentityEncoding,
    encoding_from_dict,
    encoding_output_dim,
    fourier_encode,
    hash_encode,
)
from sdf_forge.errors import InputError

from conftest import rel_err


# ----------------------------------------------------------------- fourier


def test_fourier_at_origin_without_input():
    spec = FourierEncoding(num_frequencies=4, include_input=False)
    feats = fourier_encode(np.zeros((1, 3)), spec)[0]
    for band in range(4):
        block = feats[band * 6 : band * 6 + 6]
        assert np.array_equal(block[:3], np.zeros(3))  # sin
        assert np.array_equal(block[3:], np.ones(3))  # cos


def test_fourier_zero_bands_is_identity():
    spec = FourierEncoding(num_frequencies=0, include_input=True)
    assert spec.out_dim == 3
    x = np.array([[0.3, -0.7, 0.1]])
    assert np.array_equal(fourier_encode(x, spec), x)


def test_fourier_output_dim():
    assert encoding_output_dim(FourierEncoding(num_frequencies=6, include_input=True)) == 39
    assert encoding_output_dim(FourierEncoding(num_frequencies=5, include_input=False)) == 30


def test_fourier_derivative_matches_finite_differences():
    spec = FourierEncoding(num_frequencies=5, include_input=True)
    rng = np.random.default_rng(404)
    x = rng.uniform(-1, 1, size=(100, 3))
    _, jac, _ = spec.encode(x, need_jacobian=True)
    h = 1e-7
    for c in range(3):
        dp = x.copy()
        dm = x.copy()
        dp[:, c] += h
        dm[:, c] -= h
        fd = (spec.encode(dp)[0] - spec.encode(dm)[0]) / (2 * h)
        assert rel_err(jac[:, c, :], fd).max() < 1e-6


def test_fourier_periodicity_per_band():
    spec = FourierEncoding(num_frequencies=4, base=2.0, include_input=False)
    rng = np.random.default_rng(7)
    x = rng.uniform(-1, 1, size=(10, 3))
    base_feats = fourier_encode(x, spec)
    for band in range(4):
        period = 2.0 / spec.base**band  # frequency is base^band * pi
        shifted = x.copy()
        shifted[:, 1] += period
        feats = fourier_encode(shifted, spec)
        cols = [band * 6 + 1, band * 6 + 4]  # sin/cos features of coord 1
        assert np.allclose(feats[:, cols], base_feats[:, cols], atol=1e-9)


def test_fourier_batch_independence():
    spec = FourierEncoding(num_frequencies=3)
    rng = np.random.default_rng(11)
    x = rng.uniform(-1, 1, size=(8, 3))
    full = fourier_encode(x, spec)
    assert np.array_equal(fourier_encode(x[4:5], spec)[0], full[4])


# -------------------------------------------------------------------- hash


def dense_spec(res=4, levels=1, nf=2, bounds=(0.0, 1.0)):
    return HashEncoding(
        num_levels=levels,
        features_per_level=nf,
        table_size_log2=14,
        base_resolution=res,
        max_resolution=max(res, 2 * res) if levels > 1 else res,
        bounds=bounds,
    )


def test_hash_output_dim():
    assert encoding_output_dim(HashEncoding(num_levels=8, features_per_level=2)) == 16


def test_hash_level_resolutions_follow_growth_formula():
    spec = HashEncoding(num_levels=8, base_resolution=8, max_resolution=128)
    b = np.exp((np.log(128) - np.log(8)) / 7)
    want = [int(np.floor(8 * b**level)) for level in range(8)]
    assert spec.level_resolutions == want
    assert spec.level_resolutions[0] == 8
    assert spec.level_resolutions[-1] in (127, 128)  # floor of 8 * b^7


def test_hash_zero_tables_give_zero_features():
    spec = dense_spec(res=4, levels=3)
    tables = np.zeros(spec.param_count)
    x = np.random.default_rng(0).uniform(0, 1, size=(20, 3))
    assert np.array_equal(hash_encode(x, spec, tables), np.zeros((20, spec.out_dim)))


def test_hash_corner_point_returns_corner_entry():
    spec = dense_spec(res=4, levels=1, nf=2)
    rng = np.random.default_rng(5)
    tables = rng.normal(size=spec.param_count)
    # dense layout: flat corner index (i*(N+1) + j)*(N+1) + k
    for corner in [(0, 0, 0), (1, 2, 3), (4, 4, 4), (2, 0, 4)]:
        i, j, k = corner
        x = np.array([[i / 4, j / 4, k / 4]])
        flat = (i * 5 + j) * 5 + k
        want = tables.reshape(-1, 2)[flat]
        got = hash_encode(x, spec, tables)[0]
        assert np.allclose(got, want, atol=1e-12)


def test_hash_corner_exactness_all_levels():
    spec = HashEncoding(
        num_levels=3,
        features_per_level=2,
        table_size_log2=10,
        base_resolution=2,
        max_resolution=8,
    )
    rng = np.random.default_rng(6)
    tables = rng.normal(size=spec.param_count)
    # the domain origin is a lattice corner of every level (dense index 0)
    got = hash_encode(np.array([[0.0, 0.0, 0.0]]), spec, tables)[0]
    offsets = spec.level_offsets
    for level in range(3):
        want = tables[offsets[level] : offsets[level] + 2]
        assert np.allclose(got[level * 2 : level * 2 + 2], want, atol=1e-12)


def test_hash_reproduces_linear_function():
    spec = dense_spec(res=4, levels=1, nf=1)
    a = np.array([0.75, -1.5, 0.25])
    b = 0.6
    n = 4
    tables = np.zeros(spec.param_count)
    for i in range(n + 1):
        for j in range(n + 1):
            for k in range(n + 1):
                p = np.array([i, j, k]) / n
                tables[(i * (n + 1) + j) * (n + 1) + k] = a @ p + b
    x = np.random.default_rng(9).uniform(0, 1, size=(50, 3))
    got = hash_encode(x, spec, tables)[:, 0]
    assert np.allclose(got, x @ a + b, atol=1e-12)


def test_hash_continuous_across_cell_faces():
    spec = dense_spec(res=4, levels=1, nf=2)
    tables = np.random.default_rng(12).normal(size=spec.param_count)
    face_x = 0.25  # boundary between cells 0 and 1 along axis 0
    point = np.array([face_x, 0.37, 0.81])
    gaps = []
    for eps in (1e-5, 1e-7):
        lo = point.copy()
        hi = point.copy()
        lo[0] -= eps
        hi[0] += eps
        f_lo = hash_encode(lo[None, :], spec, tables)[0]
        f_hi = hash_encode(hi[None, :], spec, tables)[0]
        gaps.append(float(np.abs(f_hi - f_lo).max()))
    assert gaps[0] < 1e-3
    assert gaps[1] < gaps[0] / 10


def test_hash_derivative_matches_finite_differences_away_from_faces():
    spec = HashEncoding(
        num_levels=3,
        features_per_level=2,
        table_size_log2=8,  # forces hashed (colliding) fine levels too
        base_resolution=4,
        max_resolution=16,
    )
    rng = np.random.default_rng(31)
    tables = rng.normal(size=spec.param_count)
    # cell-center offsets keep every level's FD stencil inside one cell
    x = (np.floor(rng.uniform(0, 16, size=(40, 3))) + 0.5) / 16.0
    _, jac, _ = spec.encode(x, params=tables, need_jacobian=True)
    h = 1e-6
    for c in range(3):
        dp = x.copy()
        dm = x.copy()
        dp[:, c] += h
        dm[:, c] -= h
        fd = (
            spec.encode(dp, params=tables)[0] - spec.encode(dm, params=tables)[0]
        ) / (2 * h)
        assert rel_err(jac[:, c, :], fd).max() < 1e-4


def test_hash_table_gradients_match_finite_differences():
    spec = dense_spec(res=2, levels=2, nf=2)
    rng = np.random.default_rng(44)
    tables = rng.normal(size=spec.param_count)
    x = (np.floor(rng.uniform(0, 4, size=(6, 3))) + 0.5) / 4.0
    feats, jac, cache = spec.encode(x, params=tables, need_jacobian=True)
    fadj = rng.normal(size=feats.shape)
    jadj = rng.normal(size=jac.shape)
    got = spec.backward_tables(cache, fadj, jadj)

    def loss(t):
        f, j, _ = spec.encode(x, params=t, need_jacobian=True)
        return float(np.sum(f * fadj) + np.sum(j * jadj))

    h = 1e-6
    fd = np.zeros_like(tables)
    for i in range(tables.size):
        tp = tables.copy()
        tm = tables.copy()
        tp[i] += h
        tm[i] -= h
        fd[i] = (loss(tp) - loss(tm)) / (2 * h)
    assert rel_err(got, fd, floor_frac=1e-3).max() < 1e-5


def test_hash_rejects_out_of_domain_points():
    spec = dense_spec()
    tables = np.zeros(spec.param_count)
    with pytest.raises(InputError):
        hash_encode(np.array([[1.2, 0.5, 0.5]]), spec, tables)
    with pytest.raises(InputError):
        hash_encode(np.array([[0.5, -0.1, 0.5]]), spec, tables)
    # the mapped-bounds variant accepts the mapped cube instead
    wide = dense_spec(bounds=(-1.05, 1.05))
    tables = np.zeros(wide.param_count)
    hash_encode(np.array([[1.04, -1.04, 0.0]]), wide, tables)
    with pytest.raises(InputError):
        hash_encode(np.array([[1.06, 0.0, 0.0]]), wide, tables)


def test_hash_requires_tables():
    with pytest.raises(InputError):
        dense_spec().encode(np.zeros((1, 3)))


def test_encoding_dict_round_trip():
    for enc in (
        IdentityEncoding(),
        FourierEncoding(num_frequencies=4, base=3.0, include_input=False),
        HashEncoding(num_levels=4, features_per_level=2, table_size_log2=12,
                     base_resolution=4, max_resolution=32, bounds=(-1.05, 1.05)),
    ):
        assert encoding_from_dict(enc.to_dict()) == enc


def test_identity_encoding_passthrough():
    enc = IdentityEncoding()
    x = np.array([[0.1, -0.2, 0.3]])
    feats, jac, _ = enc.encode(x, need_jacobian=True)
    assert np.array_equal(feats, x)
    assert np.array_equal(jac[0], np.eye(3))
