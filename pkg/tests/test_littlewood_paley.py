import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjlab.littlewood_paley import (
    INF,
    PARTITION,
    NormSpec,
    besov_norm,
    block,
    block_indices,
    bmo_norm_approx,
    chemin_lerner_norm,
    chi_low,
    evaluate_norm,
    fourier_besov_norm,
    fourier_l1,
    lq_sum,
    paraproduct_T,
    phi,
    remainder_R,
    s_norm,
    sobolev_norm,
    xt_norm,
)
from hjlab.spectral_core import FrequencyLattice, SpectralError, SpectralField, heat_propagate, sparse_convolve


def cos_field(k, amp=1.0, L=1, K=None):
    lat = FrequencyLattice(1, L, K or 2 * abs(k) + 2)
    return SpectralField.from_modes(lat, {k: amp / 2, -k: amp / 2})


def random_mean_zero(seed, K=40, L=2, n=8):
    rng = np.random.default_rng(seed)
    ks = rng.choice(np.arange(1, K + 1), size=n, replace=False)
    c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    keys = np.concatenate((ks, -ks))[:, None]
    return SpectralField.from_sparse(FrequencyLattice(1, L, K), keys, np.concatenate((c, np.conj(c))))


class TestPartition:
    def test_profiles(self):
        assert chi_low(1.0) == 1.0 and chi_low(4 / 3) == 0.0
        assert phi(1.0) == 0.0 and phi(8 / 3) == 0.0
        assert np.all(phi(np.linspace(4 / 3, 2, 9)) == 1.0)

    def test_partition_of_unity(self):
        r = np.geomspace(1e-6, 1e6, 1001)
        assert np.allclose(PARTITION.partition_sum(r), 1.0, atol=1e-14)

    @given(st.floats(1e-3, 1e3))
    def test_at_most_two_blocks_overlap(self, r):
        vals = [phi(r * 2.0 ** -j) for j in range(-15, 15)]
        assert sum(v > 0 for v in vals) <= 2


class TestBlocks:
    def test_cosine_lives_in_one_block(self):
        f = cos_field(3)
        assert block_indices(f) == [0, 1, 2]
        assert block(f, 1).as_dict() == f.as_dict()
        assert block(f, 0).n_modes == 0 and block(f, 2).n_modes == 0

    def test_inhomogeneous_low_block(self):
        lat = FrequencyLattice(1, 1, 4)
        f = SpectralField.from_modes(lat, {0: 2.0, 3: 1.0, -3: 1.0})
        assert block(f, -1, homogeneous=False).as_dict() == {0: 2.0}
        assert block(f, -3, homogeneous=False).n_modes == 0

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_blocks_reconstruct(self, seed):
        f = random_mean_zero(seed)
        total = None
        for j in block_indices(f):
            b = block(f, j)
            total = b if total is None else total + b
        diff = total.to_dense() - f.to_dense()
        assert np.abs(diff.dense_array).max() < 1e-13


class TestNorms:
    @pytest.mark.parametrize("q", [1, 2, INF])
    def test_besov_of_cosine(self, q):
        f = cos_field(3, amp=0.7)
        assert besov_norm(f, 0.0, q) == pytest.approx(0.7, rel=1e-12)
        assert besov_norm(f, 1.0, q, kind="homogeneousBesov") == pytest.approx(1.4, rel=1e-12)

    def test_restricted_besov(self):
        f = cos_field(3) + cos_field(12, K=26).to_sparse()
        full, terms = besov_norm(f, 0.0, 1, kind="homogeneousBesov", breakdown=True)
        assert besov_norm(f, 0.0, 1, kind="restrictedBesov", index_set={3}) == pytest.approx(terms[3])
        with pytest.raises(SpectralError):
            besov_norm(f, kind="restrictedBesov")

    def test_fourier_l1_lattice_weight(self):
        f = cos_field(6, amp=2.0, L=4)
        assert fourier_l1(f) == pytest.approx(2.0 / 4)
        assert fourier_besov_norm(f, s=1.0) == pytest.approx(0.5)

    def test_sobolev_pair(self):
        f = cos_field(5, amp=1.0, L=2)
        assert sobolev_norm(f, 1.5) == pytest.approx(math.sqrt(2 * 0.25 * (1 + 2.5 ** 2) ** 1.5))

    @given(st.integers(0, 1000), st.floats(0.01, 100.0))
    @settings(max_examples=20, deadline=None)
    def test_homogeneous_in_amplitude(self, seed, lam):
        f = random_mean_zero(seed, K=20, n=4)
        g = f * lam
        assert fourier_besov_norm(g) == pytest.approx(lam * fourier_besov_norm(f), rel=1e-12)
        assert sobolev_norm(g, 2.0) == pytest.approx(lam * sobolev_norm(f, 2.0), rel=1e-12)
        assert besov_norm(g, 0.0, 2) == pytest.approx(lam * besov_norm(f, 0.0, 2), rel=1e-9)

    @given(st.lists(st.floats(0, 10), min_size=1, max_size=8))
    def test_lq_decreasing_in_q(self, xs):
        vals = [lq_sum(xs, q) for q in (1, 1.5, 2, 4, INF)]
        assert all(a >= b - 1e-12 * (1 + a) for a, b in zip(vals, vals[1:]))
        assert vals[-1] == max(xs)

    def test_norm_spec_validation(self):
        with pytest.raises(SpectralError):
            NormSpec("Holder")
        with pytest.raises(SpectralError):
            NormSpec("Besov", q=0.5)
        f = cos_field(3)
        assert evaluate_norm(f, NormSpec("FourierBesov", q=2)) == pytest.approx(1.0)


class TestBony:
    @pytest.mark.parametrize("seed", [3, 4, 5])
    def test_decomposition_recovers_product(self, seed):
        u = random_mean_zero(seed, K=30, n=6)
        v = random_mean_zero(seed + 100, K=30, n=6)
        parts = paraproduct_T(u, v) + paraproduct_T(v, u) + remainder_R(u, v)
        exact = sparse_convolve(u, v)
        K = max(parts.lattice.K, exact.lattice.K)
        err = np.abs(parts.to_dense(K).dense_array - exact.to_dense(K).dense_array).max()
        assert err < 1e-12 * fourier_l1(exact) * u.lattice.L


class TestTimeNorms:
    def heat_snapshots(self, f, T, n):
        return [(t, heat_propagate(f, t)) for t in np.linspace(0, T, n)]

    def test_chemin_lerner_single_mode(self):
        f = cos_field(2)
        snaps = self.heat_snapshots(f, 0.5, 2001)
        assert chemin_lerner_norm(snaps, INF, 0.0, 2.0, 0.5) == pytest.approx(1.0)
        expected = (1 - math.exp(-4 * 0.5)) / 4
        assert chemin_lerner_norm(snaps, 1.0, 2.0, 2.0, 0.5) == pytest.approx(expected, rel=1e-6)
        value, parts = s_norm(snaps, 0.5, breakdown=True)
        assert value == max(parts.values())

    def test_snapshot_validation(self):
        f = cos_field(2)
        with pytest.raises(SpectralError, match="ascending"):
            chemin_lerner_norm([(0.1, f), (0.1, f)], 1.0, 0.0, 2.0, 1.0)
        with pytest.raises(SpectralError):
            chemin_lerner_norm([(0.0, f), (2.0, f)], 1.0, 0.0, 2.0, 1.0)

    def test_xt_gradient_part(self):
        a = 0.3
        f = cos_field(1, amp=a)
        snaps = self.heat_snapshots(f, 1.0, 401)
        value, parts = xt_norm(snaps, 1.0, breakdown=True)
        assert parts["gradient"] == pytest.approx(a / math.sqrt(2 * math.e), rel=1e-5)
        assert parts["carleson"] > 0
        assert value == pytest.approx(parts["gradient"] + parts["carleson"])


class TestBMO:
    def test_constant_is_zero(self):
        lat = FrequencyLattice(1, 1, 4)
        assert bmo_norm_approx(SpectralField.from_modes(lat, {0: 3.0})) == pytest.approx(0.0, abs=1e-14)

    def test_cosine_bounds_and_shift(self):
        a = 0.8
        f = cos_field(1, amp=a)
        val = bmo_norm_approx(f)
        assert 2 * a / math.pi - 1e-9 <= val <= 2 * a
        shifted = f + SpectralField.from_modes(f.lattice, {0: 5.0}).to_sparse()
        assert bmo_norm_approx(shifted) == pytest.approx(val, rel=1e-12)
