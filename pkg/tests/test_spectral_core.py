import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjlab.spectral_core import (
    BandOverflowError,
    FrequencyLattice,
    NumericalFailure,
    SpectralError,
    SpectralField,
    dense_product,
    dump_coefficients,
    heat_propagate,
    laplacian,
    load_coefficients,
    multiply,
    partial_derivative,
    pointwise_map,
    sparse_convolve,
    sup_norm,
)


def random_sparse(rng, lat, n, real=True):
    ks = rng.choice(np.arange(1, lat.K + 1), size=n, replace=False)
    c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    if not real:
        return SpectralField.from_sparse(lat, ks[:, None], c)
    keys = np.concatenate((ks, -ks))[:, None]
    return SpectralField.from_sparse(lat, keys, np.concatenate((c, np.conj(c))))


def direct_values(f, x):
    keys, coeffs = f.sparse_items()
    return np.exp(1j * np.outer(x, keys[:, 0] / f.lattice.L)) @ coeffs


class TestFrequencyLattice:
    @pytest.mark.parametrize("kw", [dict(d=0, L=1, K=4), dict(d=4, L=1, K=4), dict(d=1, L=0, K=4), dict(d=1, L=1, K=0)])
    def test_rejects_invalid(self, kw):
        with pytest.raises(SpectralError):
            FrequencyLattice(**kw)

    def test_grid_respects_dealiasing(self):
        lat = FrequencyLattice(1, 1, 21)
        assert lat.grid_size() >= 3 * 21
        assert lat.shape == (43,)
        assert lat.period == pytest.approx(2 * np.pi)


class TestSpectralField:
    def test_sparse_keys_sorted_and_unique(self):
        lat = FrequencyLattice(1, 1, 8)
        f = SpectralField.from_sparse(lat, [[3], [-2], [1]], [1, 2, 3])
        assert f.sparse_items()[0][:, 0].tolist() == [-2, 1, 3]
        with pytest.raises(SpectralError, match="unique"):
            SpectralField.from_sparse(lat, [[1], [1]], [1, 2])

    def test_band_overflow(self):
        lat = FrequencyLattice(1, 1, 4)
        with pytest.raises(BandOverflowError):
            SpectralField.from_modes(lat, {5: 1.0})

    def test_reality_flag_exact(self):
        lat = FrequencyLattice(1, 1, 8)
        assert SpectralField.from_modes(lat, {2: 1 + 1j, -2: 1 - 1j}).reality_flag
        assert not SpectralField.from_modes(lat, {2: 1 + 1j, -2: 1 + 1j}).reality_flag

    def test_dense_sparse_roundtrip(self):
        rng = np.random.default_rng(1)
        f = random_sparse(rng, FrequencyLattice(1, 2, 16), 5)
        g = f.to_dense().to_sparse()
        assert np.array_equal(g.sparse_items()[0], f.sparse_items()[0])
        assert np.allclose(g.sparse_items()[1], f.sparse_items()[1], rtol=0, atol=0)

    def test_grid_values_match_direct_sum(self):
        rng = np.random.default_rng(2)
        f = random_sparse(rng, FrequencyLattice(1, 3, 20), 6)
        M = 64
        x = np.arange(M) * f.lattice.period / M
        assert np.allclose(f.grid_values(M), direct_values(f, x), atol=1e-12)

    def test_from_grid_inverts_grid_values(self):
        rng = np.random.default_rng(3)
        f = random_sparse(rng, FrequencyLattice(1, 1, 10), 4).to_dense()
        g = SpectralField.from_grid(f.grid_values(32), f.lattice)
        assert np.allclose(g.dense_array, f.dense_array, atol=1e-14)

    def test_truncate_and_trim(self):
        lat = FrequencyLattice(1, 1, 10)
        f = SpectralField.from_modes(lat, {1: 1.0, 7: 2.0, -7: 2.0, -1: 1.0})
        assert f.truncate(3).as_dict() == {-1: 1.0, 1: 1.0}
        assert f.trim().lattice.K == 7

    def test_dump_load_roundtrip(self):
        rng = np.random.default_rng(4)
        f = random_sparse(rng, FrequencyLattice(1, 8, 40), 7)
        text = dump_coefficients(f, header=["note = x"])
        assert text.startswith("# note = x")
        g = load_coefficients(text, L=8)
        assert g.as_dict() == f.as_dict()


class TestMultipliers:
    def test_heat_constant_unchanged(self):
        lat = FrequencyLattice(1, 1, 4)
        f = SpectralField.from_modes(lat, {0: 2.5})
        assert heat_propagate(f, 3.0).as_dict() == {0: 2.5}

    def test_heat_pair_decay(self):
        lat = FrequencyLattice(1, 4, 16)
        f = SpectralField.from_modes(lat, {6: 0.5, -6: 0.5})
        g = heat_propagate(f, 0.7)
        assert g.coefficient((6,)) == pytest.approx(0.5 * np.exp(-0.7 * (6 / 4) ** 2), rel=1e-15)

    def test_heat_semigroup(self):
        rng = np.random.default_rng(5)
        f = random_sparse(rng, FrequencyLattice(1, 2, 30), 8)
        a = heat_propagate(heat_propagate(f, 0.3), 0.4)
        b = heat_propagate(f, 0.7)
        assert np.allclose(a.sparse_items()[1], b.sparse_items()[1], rtol=1e-12, atol=0)

    def test_heat_rejects_negative_time(self):
        with pytest.raises(SpectralError):
            heat_propagate(SpectralField.zeros(FrequencyLattice(1, 1, 2)), -1.0)

    def test_derivative_of_cosine(self):
        lat = FrequencyLattice(1, 2, 8)
        k = 3
        f = SpectralField.from_modes(lat, {k: 0.5, -k: 0.5})
        x = np.linspace(0, 4 * np.pi, 11)
        vals = partial_derivative(f, 1).evaluate(x[:, None])
        assert np.allclose(vals, -(k / 2) * np.sin(k / 2 * x), atol=1e-14)

    def test_derivative_axis_check_and_commutation(self):
        lat = FrequencyLattice(2, 1, 4)
        f = SpectralField.from_modes(lat, {(1, 2): 1.0, (-1, -2): 1.0, (3, -1): 0.5j})
        with pytest.raises(SpectralError):
            partial_derivative(f, 3)
        a = partial_derivative(partial_derivative(f, 1), 2)
        b = partial_derivative(partial_derivative(f, 2), 1)
        assert a.as_dict() == b.as_dict()

    def test_laplacian_symbol(self):
        lat = FrequencyLattice(1, 2, 8)
        f = SpectralField.from_modes(lat, {4: 1.0})
        assert laplacian(f).coefficient((4,)) == pytest.approx(-4.0)


class TestProducts:
    def test_cos_squared(self):
        lat = FrequencyLattice(1, 1, 4)
        f = SpectralField.from_modes(lat, {1: 0.5, -1: 0.5})
        g = sparse_convolve(f, f)
        assert g.as_dict() == {-2: 0.25, 0: 0.5, 2: 0.25}

    def test_support_is_sumset(self):
        lat = FrequencyLattice(1, 1, 20)
        a = SpectralField.from_modes(lat, {3: 1.0, 7: 1.0})
        b = SpectralField.from_modes(lat, {-2: 1.0, 5: 1.0})
        assert sorted(sparse_convolve(a, b).as_dict()) == [1, 5, 8, 12]

    def test_convolution_matches_numpy(self):
        rng = np.random.default_rng(6)
        lat = FrequencyLattice(1, 1, 12)
        a = random_sparse(rng, lat, 5, real=False)
        b = random_sparse(rng, lat, 4, real=False)
        got = sparse_convolve(a, b).to_dense(24)
        ref = np.convolve(a.to_dense().dense_array, b.to_dense().dense_array)
        assert np.allclose(got.dense_array, ref, atol=1e-14)

    def test_overflow_without_auto_extend(self):
        lat = FrequencyLattice(1, 1, 4)
        a = SpectralField.from_modes(lat, {3: 1.0})
        with pytest.raises(BandOverflowError):
            sparse_convolve(a, a, auto_extend=False)

    def test_dense_product_exact_and_truncated(self):
        rng = np.random.default_rng(7)
        lat = FrequencyLattice(1, 1, 10)
        a = random_sparse(rng, lat, 4)
        b = random_sparse(rng, lat, 3)
        exact = sparse_convolve(a, b).to_dense()
        full = dense_product(a.to_dense(), b.to_dense())
        K = full.lattice.K
        assert np.allclose(full.dense_array, exact.to_dense(K).dense_array, atol=1e-13)
        cut = dense_product(a.to_dense(), b.to_dense(), K_out=10)
        assert np.allclose(cut.dense_array, exact.truncate(10).dense_array, atol=1e-13)
        assert multiply(a, b).is_sparse

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_commutative(self, seed):
        rng = np.random.default_rng(seed)
        lat = FrequencyLattice(1, 3, 30)
        a, b = random_sparse(rng, lat, 4), random_sparse(rng, lat, 5)
        ab, ba = sparse_convolve(a, b), sparse_convolve(b, a)
        assert np.array_equal(ab.sparse_items()[0], ba.sparse_items()[0])
        assert np.allclose(ab.sparse_items()[1], ba.sparse_items()[1], rtol=1e-14, atol=1e-15)

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_real_times_real_is_real(self, seed):
        rng = np.random.default_rng(seed)
        lat = FrequencyLattice(1, 1, 15)
        p = sparse_convolve(random_sparse(rng, lat, 3), random_sparse(rng, lat, 3))
        vals = p.grid_values(128)
        assert np.abs(np.imag(vals)).max() <= 1e-12 * max(1.0, np.abs(vals).max())


class TestPointwiseAndSup:
    def test_exp_log_roundtrip(self):
        lat = FrequencyLattice(1, 1, 8)
        f = SpectralField.from_modes(lat, {1: 0.1, -1: 0.1, 2: 0.05j, -2: -0.05j})
        e, trunc = pointwise_map(f, "exp", grid_size=64)
        back, _ = pointwise_map(e, "log", grid_size=128)
        assert np.abs((back.truncate(8) - f.to_dense()).dense_array).max() < 1e-14
        assert trunc < 1e-20

    def test_exp_guard_and_log_domain(self):
        lat = FrequencyLattice(1, 1, 4)
        with pytest.raises(NumericalFailure):
            pointwise_map(SpectralField.from_modes(lat, {0: 40.0}), "exp")
        with pytest.raises(NumericalFailure):
            pointwise_map(SpectralField.from_modes(lat, {0: -1.0}), "log")

    def test_dealiasing_rule_enforced(self):
        lat = FrequencyLattice(1, 1, 40)
        with pytest.raises(SpectralError, match="dealiasing"):
            pointwise_map(SpectralField.zeros(lat), "square", grid_size=64)

    @pytest.mark.parametrize("method", ["direct", "fft"])
    def test_sup_of_cosine(self, method):
        lat = FrequencyLattice(1, 5, 20)
        f = SpectralField.from_modes(lat, {7: 0.5, -7: 0.5})
        assert sup_norm(f, method=method) == pytest.approx(1.0, abs=1e-12)

    def test_sup_matches_fine_sampling(self):
        rng = np.random.default_rng(8)
        f = random_sparse(rng, FrequencyLattice(1, 3, 25), 6)
        x = np.linspace(0, f.lattice.period, 200_001)
        brute = np.abs(direct_values(f, x)).max()
        got = sup_norm(f)
        assert got >= brute - 1e-9
        assert got <= brute * (1 + 1e-6)
