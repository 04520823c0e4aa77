"""Dyadic Littlewood-Paley blocks, the norms built on them, and Bony paraproducts.

The partition is generated by one radial low-pass cutoff ``chi_low`` (1 on
|xi| <= 1, 0 on |xi| >= 4/3, glued with the e^{-1/x} smooth step):

    phi(xi) = chi_low(xi / 2) - chi_low(xi),    Psi = chi_low,

so that sum_j phi(2^-j xi) telescopes to 1 for xi != 0, supp phi lies in
{1 <= |xi| <= 8/3} and phi == 1 on {4/3 <= |xi| <= 2}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.fft as sfft

from .spectral_core import (
    SpectralError,
    SpectralField,
    multiply,
    partial_derivative,
    sup_norm,
)

INF = math.inf


# ---------------------------------------------------------------------------
# partition functions


def smooth_step(x):
    """C-infinity step on [0, 1]: 0 at x <= 0, 1 at x >= 1, s(x) + s(1 - x) = 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def chi_low(r):
    """Radial low-pass cutoff as a function of r = |xi|."""
    r = np.asarray(r, dtype=float)
    return np.where(r <= 1.0, 1.0, np.where(r >= 4.0 / 3.0, 0.0, smooth_step(4.0 - 3.0 * r)))


def phi(r):
    """Dyadic annulus profile phi(r) = chi_low(r/2) - chi_low(r)."""
    r = np.asarray(r, dtype=float)
    return chi_low(0.5 * r) - chi_low(r)


def _radius(xi: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", xi, xi))


@dataclass(frozen=True)
class DyadicPartition:
    """The partition functions as radial callables on frequency arrays."""

    def chi_low(self, xi):
        return chi_low(np.abs(xi) if np.ndim(xi) < 2 else _radius(np.asarray(xi)))

    def phi(self, xi):
        return phi(np.abs(xi) if np.ndim(xi) < 2 else _radius(np.asarray(xi)))

    def psi(self, xi):
        return self.chi_low(xi)

    def partition_sum(self, r, J: int = 60):
        """sum_{|j| <= J} phi(2^-j r) for radii r."""
        r = np.asarray(r, dtype=float)
        return sum(phi(r * 2.0 ** (-j)) for j in range(-J, J + 1))


PARTITION = DyadicPartition()


# ---------------------------------------------------------------------------
# blocks


def block(f: SpectralField, j: int, homogeneous: bool = True) -> SpectralField:
    """Delta_j f.

    The homogeneous block multiplies by phi(2^-j xi).  The inhomogeneous
    family is zero for j <= -2, Psi(xi) for j = -1, and the homogeneous block
    for j >= 0.  Sparse inputs stay sparse and drop modes the multiplier kills.
    """
    if not homogeneous:
        if j <= -2:
            return SpectralField.zeros(f.lattice, sparse=f.is_sparse)
        if j == -1:
            return f.apply_multiplier(lambda xi: chi_low(_radius(xi)), drop_zeros=True)
    scale = 2.0 ** (-j)
    return f.apply_multiplier(lambda xi: phi(scale * _radius(xi)), drop_zeros=True)


def low_pass(f: SpectralField, j: int) -> SpectralField:
    """S_j f: multiplier chi_low(2^-j xi)."""
    scale = 2.0 ** (-j)
    return f.apply_multiplier(lambda xi: chi_low(scale * _radius(xi)), drop_zeros=True)


def _radii_range(f: SpectralField) -> tuple[float, float] | None:
    keys, coeffs = f.sparse_items()
    nz = coeffs != 0
    if not nz.any():
        return None
    r = np.sqrt(np.sum(keys[nz].astype(float) ** 2, axis=1)) / f.lattice.L
    r = r[r > 0]
    if not len(r):
        return (0.0, 0.0)
    return float(r.min()), float(r.max())


def block_indices(f: SpectralField, homogeneous: bool = True) -> list[int]:
    """Every j for which block(f, j) can be nonzero."""
    rr = _radii_range(f)
    if rr is None:
        return []
    rmin, rmax = rr
    if rmax == 0.0:
        return [] if homogeneous else [-1]
    hi = math.ceil(math.log2(rmax))
    lo = math.floor(math.log2(3.0 * rmin / 8.0))
    if homogeneous:
        return list(range(lo, hi + 1))
    return [-1] + list(range(max(lo, 0), hi + 1))


def lq_sum(values: Iterable[float], q: float) -> float:
    v = np.asarray(list(values), dtype=float)
    if not len(v):
        return 0.0
    if q == INF:
        return float(v.max())
    return float(np.sum(v ** q) ** (1.0 / q))


# ---------------------------------------------------------------------------
# norms


@dataclass(frozen=True)
class NormSpec:
    """Selector for a norm.

    kind: Besov, homogeneousBesov, restrictedBesov, FourierBesov, Sobolev,
    BMOapprox or composite.  For composite, ``composite`` is one of D, S, X_T,
    Y_T.
    """

    kind: str
    s: float = 0.0
    q: float = INF
    index_set: frozenset = field(default_factory=frozenset)
    composite: str | None = None
    T: float | None = None

    KINDS = ("Besov", "homogeneousBesov", "restrictedBesov", "FourierBesov", "Sobolev", "BMOapprox", "composite")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise SpectralError(f"unknown norm kind {self.kind!r}")
        if not (1 <= self.q <= INF):
            raise SpectralError(f"q must lie in [1, inf], got {self.q}")
        if self.kind == "restrictedBesov" and not self.index_set:
            raise SpectralError("restrictedBesov needs a nonempty index_set")
        if self.kind == "composite" and self.composite not in ("D", "S", "X_T", "Y_T"):
            raise SpectralError(f"unknown composite norm {self.composite!r}")
        object.__setattr__(self, "index_set", frozenset(int(j) for j in self.index_set))


def besov_norm(
    f: SpectralField,
    s: float = 0.0,
    q: float = INF,
    kind: str = "Besov",
    index_set: Iterable[int] | None = None,
    breakdown: bool = False,
    oversample: int = 4,
):
    """B^s_{inf,q} norm: l^q over j of 2^{js} sup|Delta_j f|.

    kind "Besov" uses the inhomogeneous blocks, "homogeneousBesov" the
    homogeneous ones, and "restrictedBesov" only j in index_set (homogeneous
    blocks, which coincide with the inhomogeneous ones for j >= 0).
    """
    if kind == "Besov":
        js = block_indices(f, homogeneous=False)
        hom = False
    elif kind == "homogeneousBesov":
        js = block_indices(f, homogeneous=True)
        hom = True
    elif kind == "restrictedBesov":
        if not index_set:
            raise SpectralError("restrictedBesov needs a nonempty index_set")
        js = sorted(int(j) for j in index_set)
        hom = all(j >= 0 for j in js)
    else:
        raise SpectralError(f"besov_norm does not handle kind {kind!r}")
    terms = {}
    for j in js:
        b = block(f, j, homogeneous=hom)
        terms[j] = 2.0 ** (j * s) * sup_norm(b, oversample=oversample)
    value = lq_sum(terms.values(), q)
    return (value, terms) if breakdown else value


def fourier_l1(f: SpectralField) -> float:
    """Lattice-weighted L^1 norm of the Fourier coefficients, L^-d sum |c_k|."""
    _, coeffs = f.sparse_items()
    return float(np.sum(np.abs(coeffs))) / f.lattice.L ** f.d


def fourier_besov_norm(f: SpectralField, s: float = 0.0, r: float = 2.0, breakdown: bool = False):
    """Homogeneous Fourier-Besov norm FB^s_{1,r}."""
    terms = {j: 2.0 ** (j * s) * fourier_l1(block(f, j)) for j in block_indices(f, homogeneous=True)}
    value = lq_sum(terms.values(), r)
    return (value, terms) if breakdown else value


def sobolev_norm(f: SpectralField, s: float) -> float:
    """(sum_k (1 + |k/L|^2)^s |c_k|^2)^{1/2}."""
    keys, coeffs = f.sparse_items()
    xi2 = np.sum((keys / f.lattice.L) ** 2, axis=1)
    return float(np.sqrt(np.sum((1.0 + xi2) ** s * np.abs(coeffs) ** 2)))


def paraproduct_T(u: SpectralField, v: SpectralField) -> SpectralField:
    """T_u v = sum_j S_{j-1} u * Delta_j v (homogeneous blocks)."""
    out = None
    for j in block_indices(v, homogeneous=True):
        bv = block(v, j)
        su = low_pass(u, j - 1)
        if bv.n_modes == 0 or su.n_modes == 0:
            continue
        term = multiply(su, bv)
        out = term if out is None else out + term
    return out if out is not None else _zero_product(u, v)


def remainder_R(u: SpectralField, v: SpectralField) -> SpectralField:
    """R(u, v) = sum_j sum_{|k-j| <= 1} Delta_j u * Delta_k v."""
    ju = set(block_indices(u, homogeneous=True))
    jv = block_indices(v, homogeneous=True)
    blocks_v = {k: block(v, k) for k in jv}
    out = None
    for j in sorted(ju):
        bu = block(u, j)
        if bu.n_modes == 0:
            continue
        tilde = [blocks_v[k] for k in (j - 1, j, j + 1) if k in blocks_v and blocks_v[k].n_modes]
        if not tilde:
            continue
        bv = tilde[0]
        for extra in tilde[1:]:
            bv = bv + extra
        term = multiply(bu, bv)
        out = term if out is None else out + term
    return out if out is not None else _zero_product(u, v)


def _zero_product(u: SpectralField, v: SpectralField) -> SpectralField:
    lat = u.lattice.with_band(u.lattice.K + v.lattice.K)
    return SpectralField.zeros(lat, sparse=u.is_sparse and v.is_sparse)


# ---------------------------------------------------------------------------
# time-dependent norms


Snapshots = Sequence[tuple[float, SpectralField]]


def _check_snapshots(snapshots: Snapshots, T: float | None, minimum: int = 2) -> np.ndarray:
    if len(snapshots) < minimum:
        raise SpectralError(f"need at least {minimum} snapshots, got {len(snapshots)}")
    times = np.array([t for t, _ in snapshots], dtype=float)
    if np.any(np.diff(times) <= 0):
        raise SpectralError("snapshot times must be strictly ascending")
    if times[0] < 0 or (T is not None and times[-1] > T * (1 + 1e-12)):
        raise SpectralError(f"snapshot times must lie in [0, T={T}]")
    return times


def _time_norm(values: np.ndarray, times: np.ndarray, lam: float) -> float:
    if lam == INF:
        return float(values.max())
    return float(np.trapezoid(values ** lam, times) ** (1.0 / lam))


def chemin_lerner_norm(snapshots: Snapshots, lam: float, s: float, r: float, T: float, breakdown: bool = False):
    """Chemin-Lerner norm of L^lam_T(FB^s_{1,r}) type: time norm per block, then l^r over blocks.

    lam = inf takes the maximum over snapshots, finite lam the trapezoidal
    rule on the snapshot times.
    """
    times = _check_snapshots(snapshots, T)
    js = sorted(set().union(*(block_indices(f) for _, f in snapshots)))
    terms = {}
    for j in js:
        vals = np.array([fourier_l1(block(f, j)) for _, f in snapshots])
        terms[j] = 2.0 ** (j * s) * _time_norm(vals, times, lam)
    value = lq_sum(terms.values(), r)
    return (value, terms) if breakdown else value



def _common_grid(fields: Iterable[SpectralField], oversample: int = 4) -> int:
    kmax = max((f.max_wavenumber() for f in fields), default=0)
    return sfft.next_fast_len(max(oversample * (2 * kmax + 1), 16))


def _ball_offsets(P: int, period: float, R: float, d: int) -> np.ndarray:
    """Integer grid offsets inside the periodic ball of radius R."""
    h = period / P
    m = int(min(math.floor(R / h), P // 2))
    rng = np.arange(-m, m + 1)
    if d == 1:
        return rng[:, None]
    grids = np.meshgrid(*([rng] * d), indexing="ij")
    off = np.stack([g.ravel() for g in grids], axis=1)
    return off[np.sum((off * h) ** 2, axis=1) <= R * R + 1e-12]


def _ball_means(values: np.ndarray, centers: np.ndarray, offsets: np.ndarray, fn=None) -> np.ndarray:
    """Mean over each ball of values (or of fn(values in ball)) for every center."""
    P = values.shape[0]
    out = np.empty(len(centers))
    for i, c in enumerate(centers):
        idx = tuple(((c + offsets) % P).T)
        w = values[idx]
        out[i] = (fn(w) if fn else w).mean()
    return out


def _centers(P: int, n: int, d: int) -> np.ndarray:
    ax = (np.arange(n) * P) // n
    if d == 1:
        return ax[:, None]
    grids = np.meshgrid(*([ax] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def default_radii(period: float, n: int = 10) -> list[float]:
    return [0.5 * period * 2.0 ** (-m) for m in range(n)]


def bmo_norm_approx(f: SpectralField, centers: int = 32, radii: Sequence[float] | None = None, grid: int | None = None) -> float:
    """Lower approximation of the BMO seminorm.

    Maximum over sampled periodic balls B(x, R) of the mean of |f - mean_B f|.
    """
    P = grid or _common_grid([f])
    vals = f.grid_values(P)
    if np.iscomplexobj(vals):
        vals = vals.real
    vals = vals.reshape((P,) * f.d)
    radii = default_radii(f.lattice.period) if radii is None else radii
    cs = _centers(P, centers, f.d)
    best = 0.0
    for R in radii:
        off = _ball_offsets(P, f.lattice.period, R, f.d)
        osc = _ball_means(vals, cs, off, fn=lambda w: np.abs(w - w.mean()))
        best = max(best, float(osc.max()))
    return best


def gradient_magnitude(f: SpectralField, P: int) -> np.ndarray:
    sq = None
    for i in range(1, f.d + 1):
        g = partial_derivative(f, i).grid_values(P)
        g = np.abs(g) ** 2
        sq = g if sq is None else sq + g
    return np.sqrt(sq).reshape((P,) * f.d)


def xt_norm(
    snapshots: Snapshots,
    T: float,
    centers: int = 16,
    n_radii: int = 8,
    breakdown: bool = False,
):
    """Koch-Tataru type norm: sup_t t^{1/2} ||grad u||_inf plus a sampled Carleson part.

    The Carleson part is the maximum over sampled centers and dyadic radii
    R = sqrt(T) 2^-m of (int_0^{R^2} mean_{B(x,R)} |grad u|^2 dt)^{1/2}, with the
    time integral taken by the trapezoidal rule on the snapshot times.
    """
    if not len(snapshots):
        raise SpectralError("xt_norm needs at least one snapshot")
    times = _check_snapshots(snapshots, T, minimum=1)
    fields = [f for _, f in snapshots]
    d = fields[0].d
    period = fields[0].lattice.period
    P = _common_grid(fields)
    grads = [gradient_magnitude(f, P) for f in fields]
    first = max(math.sqrt(t) * float(g.max()) for t, g in zip(times, grads))
    cs = _centers(P, centers, d)
    radii = [math.sqrt(T) * 2.0 ** (-m) for m in range(n_radii)]
    radii = [R for R in radii if R <= 0.5 * period] or [0.5 * period]
    carleson = 0.0
    for R in radii:
        off = _ball_offsets(P, period, R, d)
        means = np.array([_ball_means(g ** 2, cs, off) for g in grads])
        tau = R * R
        inside = times <= tau
        ts, ms = times[inside], means[inside]
        if not len(ts):
            continue
        if ts[-1] < tau and inside.sum() < len(times):
            k = int(inside.sum())
            w = (tau - times[k - 1]) / (times[k] - times[k - 1])
            ts = np.append(ts, tau)
            ms = np.vstack([ms, (1 - w) * means[k - 1] + w * means[k]])
        integral = np.trapezoid(ms, ts, axis=0) if len(ts) > 1 else np.zeros(len(cs))
        carleson = max(carleson, float(np.sqrt(np.maximum(integral, 0)).max()))
    value = first + carleson
    if breakdown:
        return value, {"gradient": first, "carleson": carleson}
    return value


def yt_norm(snapshots: Snapshots, T: float, centers: int = 16, n_radii: int = 8, breakdown: bool = False):
    """X_T norm plus sup_t of the sampled BMO seminorm."""
    x, parts = xt_norm(snapshots, T, centers, n_radii, breakdown=True)
    bmo = max(bmo_norm_approx(f, centers=centers) for _, f in snapshots)
    value = x + bmo
    if breakdown:
        return value, dict(parts, bmo=bmo)
    return value


def s_norm(snapshots: Snapshots, T: float, breakdown: bool = False):
    """max of the L~inf_T(FB^0_{1,2}) and L~1_T(FB^2_{1,2}) norms."""
    a = chemin_lerner_norm(snapshots, INF, 0.0, 2.0, T)
    b = chemin_lerner_norm(snapshots, 1.0, 2.0, 2.0, T)
    value = max(a, b)
    return (value, {"Linf_FB0": a, "L1_FB2": b}) if breakdown else value


def evaluate_norm(obj, spec: NormSpec):
    """Evaluate the norm selected by ``spec`` on a field or a snapshot list."""
    if spec.kind in ("Besov", "homogeneousBesov", "restrictedBesov"):
        return besov_norm(obj, spec.s, spec.q, spec.kind, spec.index_set or None)
    if spec.kind == "FourierBesov":
        return fourier_besov_norm(obj, spec.s, spec.q)
    if spec.kind == "Sobolev":
        return sobolev_norm(obj, spec.s)
    if spec.kind == "BMOapprox":
        return bmo_norm_approx(obj)
    if spec.composite == "D":
        return fourier_besov_norm(obj, 0.0, 2.0)
    if spec.T is None:
        raise SpectralError(f"composite norm {spec.composite} needs T")
    if spec.composite == "S":
        return s_norm(obj, spec.T)
    if spec.composite == "X_T":
        return xt_norm(obj, spec.T)
    return yt_norm(obj, spec.T)
