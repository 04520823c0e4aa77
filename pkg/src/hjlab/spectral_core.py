"""Band-limited functions on the periodic torus of period 2*pi*L per axis.

A field is stored by its Fourier coefficients,

    u(x) = sum_k c_k exp(i (k/L) . x),    k in [-K, K]^d,

either densely (a centred array of shape (2K+1,)*d) or sparsely (sorted
unique integer keys plus complex coefficients).  Frequencies are xi = k/L.
Fields are immutable; every operation returns a new field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable

import numpy as np
import scipy.fft as sfft
from scipy.optimize import minimize_scalar


class SpectralError(ValueError):
    """Invalid input to a spectral operation."""


class BandOverflowError(SpectralError):
    """A result does not fit in the lattice band and auto-extension is off."""


class NumericalFailure(ArithmeticError):
    """Overflow, non-positive samples under log, or excessive truncation."""


def _next_pow2(n: int) -> int:
    return 1 << max(int(n - 1).bit_length(), 1)


@dataclass(frozen=True)
class FrequencyLattice:
    """Integer lattice Z^d scaled by 1/L, truncated to |k_i| <= K."""

    d: int
    L: int
    K: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise SpectralError(f"dimension d must be 1, 2 or 3, got {self.d}")
        if int(self.L) != self.L or self.L < 1:
            raise SpectralError(f"inverse spacing L must be a positive integer, got {self.L}")
        if int(self.K) != self.K or self.K < 1:
            raise SpectralError(f"band limit K must be a positive integer, got {self.K}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (2 * self.K + 1,) * self.d

    @property
    def period(self) -> float:
        return 2.0 * math.pi * self.L

    def grid_size(self, factor: float = 3.0) -> int:
        """Even spatial sample count per axis, at least factor*K (dealiasing rule)."""
        return max(_next_pow2(int(math.ceil(factor * self.K)) + 1), 4)

    def with_band(self, K: int) -> "FrequencyLattice":
        return replace(self, K=int(K))

    def axis_wavenumbers(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1, dtype=np.int64)

    def dense_keys(self) -> list[np.ndarray]:
        """Integer wavevector components on the dense array, one array per axis."""
        k = self.axis_wavenumbers()
        return np.meshgrid(*([k] * self.d), indexing="ij", sparse=True)


class SpectralField:
    """Immutable band-limited field, dense or sparse."""

    __slots__ = ("lattice", "_dense", "_keys", "_coeffs", "_real")

    def __init__(self, lattice: FrequencyLattice, dense=None, keys=None, coeffs=None):
        self.lattice = lattice
        self._dense = dense
        self._keys = keys
        self._coeffs = coeffs
        self._real = None

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dense(cls, lattice: FrequencyLattice, array) -> "SpectralField":
        arr = np.array(array, dtype=np.complex128)
        if arr.shape != lattice.shape:
            raise SpectralError(f"dense array shape {arr.shape} != lattice shape {lattice.shape}")
        arr.setflags(write=False)
        return cls(lattice, dense=arr)

    @classmethod
    def from_sparse(cls, lattice: FrequencyLattice, keys, coeffs, *, sum_duplicates: bool = False) -> "SpectralField":
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, lattice.d)
        coeffs = np.asarray(coeffs, dtype=np.complex128).reshape(-1)
        if len(keys) != len(coeffs):
            raise SpectralError("keys and coefficients differ in length")
        if len(keys) and np.abs(keys).max() > lattice.K:
            raise BandOverflowError(f"wavenumber {np.abs(keys).max()} exceeds band limit K={lattice.K}")
        order = np.lexsort(keys.T[::-1]) if len(keys) else np.zeros(0, dtype=np.int64)
        keys, coeffs = keys[order], coeffs[order]
        if len(keys) > 1:
            new = np.any(keys[1:] != keys[:-1], axis=1)
            if not new.all():
                if not sum_duplicates:
                    raise SpectralError("sparse keys must be unique")
                starts = np.concatenate(([0], np.flatnonzero(new) + 1))
                coeffs = np.add.reduceat(coeffs, starts)
                keys = keys[starts]
        keys.setflags(write=False)
        coeffs.setflags(write=False)
        return cls(lattice, keys=keys, coeffs=coeffs)

    @classmethod
    def from_modes(cls, lattice: FrequencyLattice, modes: dict) -> "SpectralField":
        """Sparse field from a {k: c} mapping; k is an int (d = 1) or a tuple."""
        keys = [np.atleast_1d(k) for k in modes]
        return cls.from_sparse(lattice, np.array(keys, dtype=np.int64).reshape(-1, lattice.d), list(modes.values()))

    @classmethod
    def zeros(cls, lattice: FrequencyLattice, sparse: bool = True) -> "SpectralField":
        if sparse:
            return cls.from_sparse(lattice, np.zeros((0, lattice.d), np.int64), np.zeros(0))
        return cls.from_dense(lattice, np.zeros(lattice.shape))

    @classmethod
    def from_grid(cls, values: np.ndarray, lattice: FrequencyLattice) -> "SpectralField":
        """Dense field from spatial samples on the uniform grid of the torus.

        The returned band is lattice.K, which must stay below the grid's
        Nyquist limit.
        """
        M = values.shape[0]
        K = lattice.K
        if 2 * K + 1 > M:
            raise SpectralError(f"band K={K} exceeds the Nyquist limit of an {M}-point grid")
        if lattice.d == 1 and np.isrealobj(values):
            half = sfft.rfft(values) / M
            arr = np.empty(2 * K + 1, dtype=np.complex128)
            arr[K:] = half[: K + 1]
            arr[:K] = np.conj(half[K:0:-1])
            return cls.from_dense(lattice, arr)
        spec = sfft.fftn(values) / values.size
        idx = np.concatenate((np.arange(M - K, M), np.arange(0, K + 1)))
        arr = spec[np.ix_(*([idx] * lattice.d))]
        return cls.from_dense(lattice, arr)

    # -- representation -----------------------------------------------------

    @property
    def is_sparse(self) -> bool:
        return self._dense is None

    @property
    def d(self) -> int:
        return self.lattice.d

    def sparse_items(self) -> tuple[np.ndarray, np.ndarray]:
        """(keys, coeffs) of the nonzero/stored modes, in sorted key order."""
        if self.is_sparse:
            return self._keys, self._coeffs
        idx = np.nonzero(self._dense)
        keys = np.stack(idx, axis=1).astype(np.int64) - self.lattice.K
        return keys, self._dense[idx]

    @property
    def n_modes(self) -> int:
        return len(self._coeffs) if self.is_sparse else int(np.count_nonzero(self._dense))

    def to_dense(self, K: int | None = None) -> "SpectralField":
        lat = self.lattice if K is None else self.lattice.with_band(K)
        if not self.is_sparse and lat.K == self.lattice.K:
            return self
        keys, coeffs = self.sparse_items()
        if len(keys) and np.abs(keys).max() > lat.K:
            raise BandOverflowError(f"field needs band {np.abs(keys).max()} > K={lat.K}")
        arr = np.zeros(lat.shape, dtype=np.complex128)
        arr[tuple((keys + lat.K).T)] = coeffs
        return SpectralField.from_dense(lat, arr)

    def to_sparse(self, drop_zeros: bool = True) -> "SpectralField":
        if self.is_sparse:
            if not drop_zeros:
                return self
            keep = self._coeffs != 0
            if keep.all():
                return self
            return SpectralField.from_sparse(self.lattice, self._keys[keep], self._coeffs[keep])
        keys, coeffs = self.sparse_items()
        return SpectralField.from_sparse(self.lattice, keys, coeffs)

    def like(self, kind: "SpectralField") -> "SpectralField":
        """This field in the representation kind of ``kind``."""
        return self.to_sparse(drop_zeros=False) if kind.is_sparse else self.to_dense()

    def max_wavenumber(self) -> int:
        """Largest |k_i| carrying a nonzero coefficient (0 for the zero field)."""
        keys, coeffs = self.sparse_items()
        nz = coeffs != 0
        return int(np.abs(keys[nz]).max()) if nz.any() else 0

    def trim(self) -> "SpectralField":
        """Shrink the lattice band to the nonzero support."""
        K = max(self.max_wavenumber(), 1)
        if self.is_sparse:
            keys, coeffs = self.sparse_items()
            nz = coeffs != 0
            return SpectralField.from_sparse(self.lattice.with_band(K), keys[nz], coeffs[nz])
        sl = slice(self.lattice.K - K, self.lattice.K + K + 1)
        return SpectralField.from_dense(self.lattice.with_band(K), self._dense[(sl,) * self.d])

    def truncate(self, K: int) -> "SpectralField":
        """Drop every mode with some |k_i| > K and move to band K."""
        lat = self.lattice.with_band(K)
        if not self.is_sparse and K <= self.lattice.K:
            sl = slice(self.lattice.K - K, self.lattice.K + K + 1)
            return SpectralField.from_dense(lat, self._dense[(sl,) * self.d])
        keys, coeffs = self.sparse_items()
        keep = np.all(np.abs(keys) <= K, axis=1) if len(keys) else np.zeros(0, bool)
        out = SpectralField.from_sparse(lat, keys[keep], coeffs[keep])
        return out if self.is_sparse else out.to_dense()

    def chop(self, rel_tol: float) -> "SpectralField":
        """Zero every coefficient below rel_tol * max|c_k|."""
        keys, coeffs = self.sparse_items()
        if not len(coeffs):
            return self
        thresh = rel_tol * np.abs(coeffs).max()
        if self.is_sparse:
            keep = np.abs(coeffs) >= thresh
            return SpectralField.from_sparse(self.lattice, keys[keep], coeffs[keep])
        arr = np.where(np.abs(self._dense) >= thresh, self._dense, 0)
        return SpectralField.from_dense(self.lattice, arr)

    @property
    def dense_array(self) -> np.ndarray:
        return self.to_dense()._dense

    def coefficient(self, k) -> complex:
        k = np.atleast_1d(np.asarray(k, dtype=np.int64))
        if np.abs(k).max() > self.lattice.K:
            return 0j
        if not self.is_sparse:
            return complex(self._dense[tuple(k + self.lattice.K)])
        hit = np.flatnonzero(np.all(self._keys == k, axis=1))
        return complex(self._coeffs[hit[0]]) if len(hit) else 0j

    def as_dict(self) -> dict:
        keys, coeffs = self.sparse_items()
        if self.d == 1:
            return {int(k[0]): complex(c) for k, c in zip(keys, coeffs)}
        return {tuple(int(v) for v in k): complex(c) for k, c in zip(keys, coeffs)}

    @property
    def reality_flag(self) -> bool:
        """True when the coefficients are exactly Hermitian symmetric."""
        if self._real is None:
            if self.is_sparse:
                keys, coeffs = self._keys, self._coeffs
                mirror = SpectralField.from_sparse(self.lattice, -keys, np.conj(coeffs))
                self._real = bool(np.array_equal(mirror._keys, keys) and np.array_equal(mirror._coeffs, coeffs))
            else:
                flipped = np.conj(self._dense[(slice(None, None, -1),) * self.d])
                self._real = bool(np.array_equal(flipped, self._dense))
        return self._real

    # -- algebra --------------------------------------------------------------

    def _binary(self, other: "SpectralField", sign: float) -> "SpectralField":
        if self.lattice.L != other.lattice.L or self.d != other.d:
            raise SpectralError("fields live on different lattices")
        K = max(self.lattice.K, other.lattice.K)
        if self.is_sparse and other.is_sparse:
            ka, ca = self.sparse_items()
            kb, cb = other.sparse_items()
            return SpectralField.from_sparse(
                self.lattice.with_band(K),
                np.concatenate((ka, kb)),
                np.concatenate((ca, sign * cb)),
                sum_duplicates=True,
            )
        a = self.to_dense(K).dense_array
        b = other.to_dense(K).dense_array
        return SpectralField.from_dense(self.lattice.with_band(K), a + sign * b)

    def __add__(self, other):
        return self._binary(other, 1.0)

    def __sub__(self, other):
        return self._binary(other, -1.0)

    def __neg__(self):
        return self.scale(-1.0)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            return multiply(self, scalar)
        return self.scale(scalar)

    __rmul__ = __mul__

    def scale(self, scalar) -> "SpectralField":
        if self.is_sparse:
            return SpectralField.from_sparse(self.lattice, self._keys, scalar * self._coeffs)
        return SpectralField.from_dense(self.lattice, scalar * self._dense)

    def apply_multiplier(self, symbol: Callable[[np.ndarray], np.ndarray], drop_zeros: bool = False) -> "SpectralField":
        """Multiply c_k by symbol(xi), xi = k/L an (n, d) array of frequencies.

        With drop_zeros, sparse results discard modes where the symbol is
        exactly zero.
        """
        if self.is_sparse:
            if not len(self._keys):
                return self
            m = symbol(self._keys / self.lattice.L)
            out = self._coeffs * m
            if drop_zeros:
                keep = m != 0
                return SpectralField.from_sparse(self.lattice, self._keys[keep], out[keep])
            return SpectralField.from_sparse(self.lattice, self._keys, out)
        L = self.lattice.L
        if self.d == 1:
            xi = self.lattice.axis_wavenumbers()[:, None] / L
            m = symbol(xi).reshape(self.lattice.shape)
        else:
            grids = np.meshgrid(*([self.lattice.axis_wavenumbers() / L] * self.d), indexing="ij")
            xi = np.stack([g.ravel() for g in grids], axis=1)
            m = symbol(xi).reshape(self.lattice.shape)
        return SpectralField.from_dense(self.lattice, self._dense * m)

    # -- evaluation -----------------------------------------------------------

    def grid_values(self, M: int) -> np.ndarray:
        """Samples at x_n = 2*pi*L*n/M on an M^d grid (real if Hermitian)."""
        keys, coeffs = self.sparse_items()
        real = self.reality_flag
        if self.d == 1 and real:
            half = np.zeros(M // 2 + 1, dtype=np.complex128)
            pos = keys[:, 0] >= 0
            kk = keys[pos, 0]
            if len(kk) and kk.max() > M // 2:
                raise SpectralError(f"grid of {M} points cannot represent wavenumber {kk.max()}")
            half[kk] = coeffs[pos]
            if M % 2 == 0 and len(kk) and kk.max() == M // 2:
                half[M // 2] *= 2.0
            return sfft.irfft(half, n=M) * M
        spec = np.zeros((M,) * self.d, dtype=np.complex128)
        if len(keys) and np.abs(keys).max() > M // 2:
            raise SpectralError(f"grid of {M} points cannot represent wavenumber {np.abs(keys).max()}")
        np.add.at(spec, tuple((keys % M).T), coeffs)
        vals = sfft.ifftn(spec) * spec.size
        return vals.real if real else vals

    def evaluate(self, x) -> np.ndarray:
        """Direct trigonometric summation at points x of shape (n, d) or (n,) for d = 1."""
        x = np.asarray(x, dtype=float).reshape(-1, self.d)
        keys, coeffs = self.sparse_items()
        nz = coeffs != 0
        keys, coeffs = keys[nz], coeffs[nz]
        out = np.zeros(len(x), dtype=np.complex128)
        step = max(1, 4_000_000 // max(len(keys), 1))
        for s in range(0, len(x), step):
            phase = (x[s:s + step] @ keys.T.astype(float)) / self.lattice.L
            out[s:s + step] = np.exp(1j * phase) @ coeffs
        return out.real if self.reality_flag else out

    # -- misc -----------------------------------------------------------------

    def __repr__(self):
        kind = "sparse" if self.is_sparse else "dense"
        return f"SpectralField({kind}, d={self.d}, L={self.lattice.L}, K={self.lattice.K}, modes={self.n_modes})"

    def dumps(self) -> str:
        return dump_coefficients(self)


# ---------------------------------------------------------------------------
# operations


def heat_propagate(f: SpectralField, t: float) -> SpectralField:
    """e^{t Lap} f: multiply c_k by exp(-t |k/L|^2)."""
    if not t >= 0:
        raise SpectralError(f"heat propagation needs t >= 0, got {t}")
    if t == 0:
        return f
    return f.apply_multiplier(lambda xi: np.exp(-t * np.einsum("ij,ij->i", xi, xi)))


def partial_derivative(f: SpectralField, axis: int) -> SpectralField:
    """d/dx_axis with axis in 1..d (multiplier i k_axis / L)."""
    if not 1 <= axis <= f.d:
        raise SpectralError(f"axis {axis} out of range 1..{f.d}")
    return f.apply_multiplier(lambda xi: 1j * xi[:, axis - 1])


def laplacian(f: SpectralField) -> SpectralField:
    return f.apply_multiplier(lambda xi: -np.einsum("ij,ij->i", xi, xi))


def sparse_convolve(
    a: SpectralField,
    b: SpectralField,
    *,
    auto_extend: bool = True,
    kernel: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
) -> SpectralField:
    """Exact coefficient convolution of two sparse fields (the product a*b).

    With ``kernel``, each pair contribution a_m b_n is weighted by
    kernel(xi_m, xi_n), both (n_pairs, d) frequency arrays.
    """
    if not (a.is_sparse and b.is_sparse):
        raise SpectralError("sparse_convolve needs two sparse fields")
    if a.lattice.L != b.lattice.L or a.d != b.d:
        raise SpectralError("fields live on different lattices")
    ka, ca = a.sparse_items()
    kb, cb = b.sparse_items()
    d = a.d
    K = max(a.lattice.K, b.lattice.K)
    if not len(ka) or not len(kb):
        return SpectralField.zeros(a.lattice.with_band(K))
    span = int(np.abs(ka).max() + np.abs(kb).max())
    if span > K:
        if not auto_extend:
            raise BandOverflowError(f"product band {span} exceeds K={K}")
    base = 2 * span + 1
    weights = base ** np.arange(d - 1, -1, -1, dtype=np.int64)
    code_a = (ka + span) @ weights
    code_b = kb @ weights
    codes = (code_a[:, None] + code_b[None, :]).ravel()
    vals = (ca[:, None] * cb[None, :]).ravel()
    if kernel is not None:
        L = a.lattice.L
        ia, ib = np.divmod(np.arange(len(ka) * len(kb)), len(kb))
        vals = vals * kernel(ka[ia] / L, kb[ib] / L)
    uniq, inv = np.unique(codes, return_inverse=True)
    out = np.zeros(len(uniq), dtype=np.complex128)
    np.add.at(out, inv, vals)
    keys = np.empty((len(uniq), d), dtype=np.int64)
    rem = uniq.copy()
    for i in range(d):
        keys[:, i] = rem // weights[i]
        rem = rem - keys[:, i] * weights[i]
    keys -= span
    kmax = int(np.abs(keys).max())
    if kmax > K:
        if not auto_extend:
            raise BandOverflowError(f"product band {kmax} exceeds K={K}")
        K = kmax
    return SpectralField.from_sparse(a.lattice.with_band(K), keys, out)


def dense_product(a: SpectralField, b: SpectralField, K_out: int | None = None) -> SpectralField:
    """Product of two fields via FFT on an alias-free grid.

    K_out defaults to the full product band Ka + Kb (exact); a smaller K_out
    truncates, which is the dealiased 3/2-rule product.
    """
    Ka, Kb = a.lattice.K, b.lattice.K
    K_full = Ka + Kb
    K_out = K_full if K_out is None else K_out
    # aliases of the product band must miss [-K_out, K_out]
    M = _next_pow2(Ka + Kb + K_out + 2)
    va, vb = a.grid_values(M), b.grid_values(M)
    return SpectralField.from_grid(va * vb, a.lattice.with_band(K_out))


def multiply(a: SpectralField, b: SpectralField, K_out: int | None = None) -> SpectralField:
    """Product in the representation of the inputs (sparse if both are sparse)."""
    if a.is_sparse and b.is_sparse and K_out is None:
        return sparse_convolve(a, b)
    return dense_product(a.to_dense(), b.to_dense(), K_out)


_MAPS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "exp": np.exp,
    "log": np.log,
    "square": np.square,
}


def pointwise_map(
    f: SpectralField,
    fn: str,
    *,
    grid_size: int | None = None,
    K_out: int | None = None,
    truncation_tol: float | None = None,
    exp_guard: float = 30.0,
) -> tuple[SpectralField, float]:
    """Apply exp, log or square on a spatial grid and transform back.

    Returns (field, truncation_energy).  The truncation energy is the
    fraction of the result's energy in the outer band |k| > M/3 of the
    M-point grid, where aliasing first becomes visible.  The default grid
    has M >= 3K (4K for square, which makes the square exact).
    """
    if fn not in _MAPS:
        raise SpectralError(f"unknown pointwise map {fn!r}; expected one of {sorted(_MAPS)}")
    K = f.lattice.K
    if grid_size is None:
        grid_size = f.lattice.grid_size(4.0 if fn == "square" else 3.0)
    M = int(grid_size)
    if M < 3 * K:
        raise SpectralError(f"grid size {M} violates the dealiasing rule M >= 3K = {3 * K}")
    vals = f.grid_values(M)
    if fn == "exp":
        if np.abs(vals).max() > exp_guard:
            raise NumericalFailure(f"exp overflow guard: sup|f| = {np.abs(vals).max():.3g} > {exp_guard}")
    elif fn == "log":
        if np.iscomplexobj(vals) and np.abs(vals.imag).max() > 1e-12 * np.abs(vals).max():
            raise NumericalFailure("log of a complex-valued field")
        vals = vals.real
        if vals.min() <= 0:
            raise NumericalFailure(f"log of nonpositive sample {vals.min():.3g}")
    out_vals = _MAPS[fn](vals)
    if K_out is None:
        K_out = M // 2 - 1
    lat = f.lattice.with_band(K_out)
    g = SpectralField.from_grid(out_vals, lat)
    arr = g.dense_array
    total = float(np.sum(np.abs(arr) ** 2))
    if total > 0:
        kcut = M // 3
        idx = np.abs(lat.axis_wavenumbers()) > kcut
        if g.d == 1:
            outer = float(np.sum(np.abs(arr[idx]) ** 2))
        else:
            inner = np.ix_(*([~idx] * g.d))
            outer = total - float(np.sum(np.abs(arr[inner]) ** 2))
        trunc = outer / total
    else:
        trunc = 0.0
    if truncation_tol is not None and trunc > truncation_tol:
        raise NumericalFailure(f"truncation energy {trunc:.3g} above tolerance {truncation_tol:.3g}")
    return g, trunc


def _eval_grid_size(kmax: int, oversample: int) -> int:
    return sfft.next_fast_len(max(oversample * (2 * kmax + 1), 8))


def sup_norm(f: SpectralField, *, oversample: int = 4, method: str = "auto", refine: bool = True) -> float:
    """max |f(x)| over a grid of >= oversample x the Nyquist density per axis.

    Sparse fields with few modes are summed directly; otherwise the grid is
    filled by FFT.  In 1D the best grid maxima are then polished by a local
    bounded search on the trigonometric polynomial.
    """
    keys, coeffs = f.sparse_items()
    nz = coeffs != 0
    if not nz.any():
        return 0.0
    kmax = int(np.abs(keys[nz]).max())
    P = _eval_grid_size(kmax, oversample)
    n_modes = int(nz.sum())
    if method == "auto":
        method = "direct" if f.is_sparse and n_modes * P ** f.d <= 2_000_000 else "fft"
    if method == "direct":
        axes = [np.arange(P) * (f.lattice.period / P)] * f.d
        pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        vals = np.abs(f.evaluate(pts)).reshape((P,) * f.d)
    elif method == "fft":
        vals = np.abs(f.grid_values(P))
    else:
        raise SpectralError(f"unknown sup_norm method {method!r}")
    best = float(vals.max())
    if refine and f.d == 1 and n_modes <= 4096 and kmax > 0:
        best = _refine_1d(f, vals, P, best)
    return best


def _refine_1d(f: SpectralField, vals: np.ndarray, P: int, best: float, n_candidates: int = 8) -> float:
    keys, coeffs = f.to_sparse().sparse_items()
    kk = keys[:, 0].astype(float) / f.lattice.L
    h = f.lattice.period / P
    left, right = np.roll(vals, 1), np.roll(vals, -1)
    peaks = np.flatnonzero((vals >= left) & (vals >= right))
    peaks = peaks[np.argsort(vals[peaks])[::-1][:n_candidates]]

    def neg_abs(x):
        return -abs(np.exp(1j * kk * x) @ coeffs)

    for p in peaks:
        x0 = p * h
        res = minimize_scalar(neg_abs, bounds=(x0 - h, x0 + h), method="bounded", options={"xatol": h * 1e-9})
        best = max(best, -float(res.fun))
    return best


def parseval_mean_square(f: SpectralField, M: int | None = None) -> tuple[float, float]:
    """(sum |c_k|^2, mean |u|^2 over the grid) for Parseval checks."""
    M = M or f.lattice.grid_size(3.0)
    _, coeffs = f.sparse_items()
    vals = f.grid_values(M)
    return float(np.sum(np.abs(coeffs) ** 2)), float(np.mean(np.abs(vals) ** 2))


def dump_coefficients(f: SpectralField, header: Iterable[str] = ()) -> str:
    """Text dump, one 'k_1 ... k_d re im' line per stored mode in sorted order."""
    keys, coeffs = f.to_sparse().sparse_items()
    lines = [f"# {h}" for h in header]
    for k, c in zip(keys, coeffs):
        lines.append(" ".join(str(int(v)) for v in k) + f" {c.real:.17g} {c.imag:.17g}")
    return "\n".join(lines) + "\n"


def load_coefficients(text: str, lattice: FrequencyLattice | None = None, L: int = 1) -> SpectralField:
    keys, coeffs = [], []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        keys.append([int(v) for v in parts[:-2]])
        coeffs.append(float(parts[-2]) + 1j * float(parts[-1]))
    d = len(keys[0]) if keys else (lattice.d if lattice else 1)
    keys = np.array(keys, dtype=np.int64).reshape(-1, d)
    if lattice is None:
        lattice = FrequencyLattice(d, L, max(int(np.abs(keys).max()) if len(keys) else 1, 1))
    return SpectralField.from_sparse(lattice, keys, coeffs)
