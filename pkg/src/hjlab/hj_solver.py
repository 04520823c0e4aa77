"""Solvers for the viscous Hamilton-Jacobi equation u_t - Lap u = |grad u|^2.

Three independent routes:

* ``cole_hopf_solve``: w = e^u solves the heat equation, so
  u(t) = log(e^{t Lap} e^{u0}) is exact up to spectral truncation.
* ``mild_solve``: a second-order exponential integrator (ETD2RK) for the
  Duhamel form u(t) = e^{t Lap} u0 + int_0^t e^{(t-s) Lap} |grad u|^2 ds.
* ``picard_A`` / ``a2_exact``: the terms A_n of the expansion of u in powers
  of the data, by graded Gauss-Legendre quadrature in time, and A_2 in closed
  form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .littlewood_paley import INF, besov_norm, sobolev_norm
from .spectral_core import (
    NumericalFailure,
    SpectralError,
    SpectralField,
    dump_coefficients,
    heat_propagate,
    multiply,
    partial_derivative,
    sparse_convolve,
    sup_norm,
)


@dataclass(frozen=True)
class SolverConfig:
    T: float = 0.1
    n_snapshots: int = 64
    quad_nodes: int = 16
    quad_tol: float = 1e-10
    max_doublings: int = 6
    steps: int = 256
    max_halvings: int = 4
    exp_guard: float = 30.0
    grid_factor: float = 4.0
    chop_tol: float | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise SpectralError(f"T must be positive, got {self.T}")
        if self.quad_nodes < 2:
            raise SpectralError("Duhamel quadrature needs at least 2 nodes")
        if not self.quad_tol > 0:
            raise SpectralError("quadrature tolerance must be positive")
        if self.steps < 1:
            raise SpectralError("step count must be >= 1")


# ---------------------------------------------------------------------------
# Cole-Hopf


def cole_hopf_solve(
    u0: SpectralField,
    t: float,
    *,
    grid_size: int | None = None,
    grid_factor: float = 4.0,
    exp_guard: float = 30.0,
    chop_tol: float | None = None,
) -> SpectralField:
    """Exact solution log(e^{t Lap} exp(u0)), returned densely on the grid band.

    The grid has M >= grid_factor*K points per axis; the result carries band
    M/2 - 1.  With chop_tol the result is chopped at chop_tol*max|c_k| and
    trimmed to its support, which discards FFT round-off at high modes.
    """
    if t < 0:
        raise SpectralError(f"t must be nonnegative, got {t}")
    M = grid_size or u0.lattice.grid_size(grid_factor)
    vals = u0.grid_values(M)
    if np.iscomplexobj(vals):
        vals = vals.real
    if np.abs(vals).max() > exp_guard:
        raise NumericalFailure(f"exp overflow guard: sup|u0| = {np.abs(vals).max():.3g} > {exp_guard}")
    # the heat flow acts on the full grid spectrum of exp(u0)
    if u0.d == 1:
        k = np.fft.rfftfreq(M, d=1.0 / M) / u0.lattice.L
        w = np.fft.irfft(np.fft.rfft(np.exp(vals)) * np.exp(-t * k ** 2), n=M)
    else:
        k = np.fft.fftfreq(M, d=1.0 / M) / u0.lattice.L
        k2 = sum(np.meshgrid(*([k ** 2] * u0.d), indexing="ij"))
        w = np.fft.ifftn(np.fft.fftn(np.exp(vals)) * np.exp(-t * k2)).real
    del vals
    if w.min() <= 0:
        raise NumericalFailure(f"heat image of exp(u0) not positive: min {w.min():.3g}")
    u = SpectralField.from_grid(np.log(w), u0.lattice.with_band(M // 2 - 1))
    if chop_tol is not None:
        u = u.chop(chop_tol).trim()
    return u


# ---------------------------------------------------------------------------
# exponential integrator


def _phi1(z: np.ndarray) -> np.ndarray:
    small = np.abs(z) < 1e-2
    zs = np.where(small, 1.0, z)
    out = np.expm1(zs) / zs
    series = 1 + z / 2 + z ** 2 / 6 + z ** 3 / 24 + z ** 4 / 120
    return np.where(small, series, out)


def _phi2(z: np.ndarray) -> np.ndarray:
    small = np.abs(z) < 1e-2
    zs = np.where(small, 1.0, z)
    out = (np.expm1(zs) - zs) / zs ** 2
    series = 0.5 + z / 6 + z ** 2 / 24 + z ** 3 / 120 + z ** 4 / 720
    return np.where(small, series, out)


def grad_squared(u: SpectralField, K_out: int | None = None) -> SpectralField:
    """|grad u|^2, dealiased and truncated to band K_out (default: u's band)."""
    K_out = u.lattice.K if K_out is None else K_out
    out = None
    for i in range(1, u.d + 1):
        g = partial_derivative(u, i)
        term = multiply(g, g, K_out=K_out)
        out = term if out is None else out + term
    return out


def mild_solve(u0: SpectralField, config: SolverConfig = SolverConfig()) -> list[tuple[float, SpectralField]]:
    """ETD2RK for the mild formulation, uniform steps, dense fields on u0's band.

    Returns snapshots at t = 0, at steps nearest to config.n_snapshots
    log-spaced times, and at T.  A non-finite state triggers step halving.
    """
    steps = config.steps
    for _ in range(config.max_halvings + 1):
        try:
            return _etd2_run(u0.to_dense(), config.T, steps, config.n_snapshots, config.exp_guard)
        except NumericalFailure:
            steps *= 2
    raise NumericalFailure(f"mild solver failed after {config.max_halvings} step halvings")


def _snapshot_steps(steps: int, T: float, n: int) -> set[int]:
    h = T / steps
    times = np.geomspace(h, T, max(n, 1))
    return {0, steps} | {int(min(steps, max(1, round(t / h)))) for t in times}


def _etd2_run(u: SpectralField, T: float, steps: int, n_snap: int, guard: float):
    h = T / steps
    lat = u.lattice
    xi2 = np.sum(np.stack(np.meshgrid(*([lat.axis_wavenumbers() / lat.L] * lat.d), indexing="ij")) ** 2, axis=0)
    z = -h * xi2
    E = np.exp(z)
    c1 = h * _phi1(z)
    c2 = h * _phi2(z)
    keep = _snapshot_steps(steps, T, n_snap)
    snaps = [(0.0, u)]
    c = u.dense_array.copy()
    for n in range(1, steps + 1):
        Nu = grad_squared(SpectralField.from_dense(lat, c)).dense_array
        a = E * c + c1 * Nu
        Na = grad_squared(SpectralField.from_dense(lat, a)).dense_array
        c = a + c2 * (Na - Nu)
        if not np.all(np.isfinite(c)) or np.abs(c).sum() > math.exp(guard):
            raise NumericalFailure("nonlinearity overflow in mild solver")
        if n in keep:
            snaps.append((n * h, SpectralField.from_dense(lat, c)))
    return snaps


# ---------------------------------------------------------------------------
# Picard terms


def _stable_G(t: float, x: np.ndarray) -> np.ndarray:
    """(1 - e^{-t x}) / x for x >= 0, with G(t, 0) = t."""
    tx = t * x
    small = np.abs(tx) < 1e-4
    xs = np.where(small, 1.0, x)
    big = -np.expm1(-t * xs) / xs
    series = t * (1 - tx / 2 + tx ** 2 / 6)
    return np.where(small, series, big)


def duhamel_pair_kernel(t: float):
    """Kernel of A_2 for a mode pair (eta, zeta), output xi = eta + zeta.

    int_0^t e^{-(t-s)|xi|^2} (i eta).(i zeta) e^{-s(|eta|^2+|zeta|^2)} ds
      = -(eta.zeta) e^{-t m} G(t, |D|),
    with D = |eta|^2 + |zeta|^2 - |xi|^2 and m the smaller of |xi|^2 and
    |eta|^2 + |zeta|^2.  For D >= 0 this is e^{-t|xi|^2} G(t, D).
    """

    def kernel(eta: np.ndarray, zeta: np.ndarray) -> np.ndarray:
        xi = eta + zeta
        a = np.einsum("ij,ij->i", xi, xi)
        b = np.einsum("ij,ij->i", eta, eta) + np.einsum("ij,ij->i", zeta, zeta)
        dot = np.einsum("ij,ij->i", eta, zeta)
        return -dot * np.exp(-t * np.minimum(a, b)) * _stable_G(t, np.abs(b - a))

    return kernel


def a2_exact(f: SpectralField, t: float) -> SpectralField:
    """A_2(f)(t) in closed form, as a weighted sparse self-convolution."""
    if t < 0:
        raise SpectralError(f"t must be nonnegative, got {t}")
    f = f.to_sparse(drop_zeros=False) if not f.is_sparse else f
    if t == 0:
        return SpectralField.zeros(f.lattice)
    return sparse_convolve(f, f, kernel=duhamel_pair_kernel(t))


def _max_rate(f: SpectralField) -> float:
    keys, coeffs = f.sparse_items()
    nz = coeffs != 0
    if not nz.any():
        return 0.0
    return 2.0 * float(np.max(np.sum((keys[nz] / f.lattice.L) ** 2, axis=1)))


def _panels(t: float, rate: float) -> list[tuple[float, float]]:
    """Graded panels on [0, t] resolving the boundary layer e^{-rate*s} at s = 0."""
    if t * rate <= 4.0:
        return [(0.0, t)]
    P = int(math.ceil(math.log2(t * rate))) + 2
    edges = [0.0] + [t * 2.0 ** (-m) for m in range(P, -1, -1)]
    return list(zip(edges[:-1], edges[1:]))


class PicardEngine:
    """Memoized A_n(f)(tau) by graded Gauss-Legendre quadrature in tau."""

    def __init__(self, f: SpectralField, config: SolverConfig = SolverConfig()):
        self.f = f
        self.config = config
        self.rate = _max_rate(f)
        self._memo: dict[tuple[int, float], SpectralField] = {}
        self.nodes_used: dict[tuple[int, float], int] = {}

    def A(self, n: int, t: float) -> SpectralField:
        if n < 1:
            raise SpectralError(f"Picard index must be >= 1, got {n}")
        if t < 0:
            raise SpectralError(f"t must be nonnegative, got {t}")
        key = (n, float(t))
        if key not in self._memo:
            if n == 1:
                self._memo[key] = heat_propagate(self.f, t)
            elif t == 0:
                self._memo[key] = SpectralField.zeros(self.f.lattice, sparse=self.f.is_sparse)
            else:
                self._memo[key] = self._quadrature(n, t)
        return self._memo[key]

    def _integrand(self, n: int, t: float, tau: float) -> SpectralField:
        out = None
        for n1 in range(1, n // 2 + 1):
            n2 = n - n1
            weight = 1.0 if n1 == n2 else 2.0
            a1, a2 = self.A(n1, tau), self.A(n2, tau)
            for i in range(1, self.f.d + 1):
                term = multiply(partial_derivative(a1, i), partial_derivative(a2, i)).scale(weight)
                out = term if out is None else out + term
        return heat_propagate(out, t - tau)

    def _rule(self, n: int, t: float, nodes: int) -> SpectralField:
        x, w = np.polynomial.legendre.leggauss(nodes)
        total = None
        for a, b in _panels(t, self.rate):
            half = 0.5 * (b - a)
            for xk, wk in zip(x, w):
                tau = a + half * (xk + 1.0)
                term = self._integrand(n, t, tau).scale(half * wk)
                total = term if total is None else total + term
        return total

    def _quadrature(self, n: int, t: float) -> SpectralField:
        from .littlewood_paley import fourier_l1

        cfg = self.config
        nodes = cfg.quad_nodes
        prev = self._rule(n, t, nodes)
        for _ in range(cfg.max_doublings):
            nodes *= 2
            cur = self._rule(n, t, nodes)
            scale = fourier_l1(cur)
            if fourier_l1(cur - prev) <= cfg.quad_tol * max(scale, 1e-300):
                self.nodes_used[(n, float(t))] = nodes
                return cur
            prev = cur
        raise NumericalFailure(f"Duhamel quadrature for A_{n} not converged after {cfg.max_doublings} doublings")


def picard_A(f: SpectralField, n: int, t: float, config: SolverConfig = SolverConfig(), engine: PicardEngine | None = None) -> SpectralField:
    """A_n(f)(t); A_1 is the heat flow, A_n (n >= 2) the quadrature of the recursion."""
    engine = engine or PicardEngine(f, config)
    return engine.A(n, t)


@dataclass
class PicardSeries:
    f: SpectralField
    times: list[float]
    terms: dict[int, list[SpectralField]]
    n_max: int

    def partial_sum(self, upto: int, index: int) -> SpectralField:
        out = self.terms[1][index]
        for n in range(2, upto + 1):
            out = out + self.terms[n][index]
        return out


def picard_series(f: SpectralField, n_max: int, times, config: SolverConfig = SolverConfig()) -> PicardSeries:
    engine = PicardEngine(f, config)
    terms = {n: [engine.A(n, t) for t in times] for n in range(1, n_max + 1)}
    return PicardSeries(f, list(times), terms, n_max)


# ---------------------------------------------------------------------------
# a priori monitoring


@dataclass
class EnergySeries:
    times: np.ndarray
    hs_norm: np.ndarray
    grad_inf_integral: np.ndarray
    grad_besov_integral: np.ndarray
    flags: list[str] = field(default_factory=list)

    def rows(self):
        return list(zip(self.times, self.hs_norm, self.grad_inf_integral, self.grad_besov_integral))


def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def hs_energy_monitor(snapshots, s: float, budget: float = INF) -> EnergySeries:
    """H^s norm and the two blow-up integrals along a snapshot series.

    Integrals of ||grad u||_inf^2 and ||grad u||_{B.^0_{inf,2}}^2 use the
    trapezoidal rule on the snapshot times.
    """
    if not snapshots:
        return EnergySeries(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0))
    d = snapshots[0][1].d
    if s <= 1 + d / 2:
        warnings.warn(f"s = {s} <= 1 + d/2: the H^s blow-up criterion does not apply", stacklevel=2)
    times = np.array([t for t, _ in snapshots], dtype=float)
    hs, ginf, gb = [], [], []
    for _, u in snapshots:
        hs.append(sobolev_norm(u, s))
        comps = [partial_derivative(u, i) for i in range(1, d + 1)]
        if d == 1:
            ginf.append(sup_norm(comps[0]))
        else:
            from .littlewood_paley import _common_grid, gradient_magnitude

            ginf.append(float(gradient_magnitude(u, _common_grid([u])).max()))
        gb.append(math.sqrt(sum(besov_norm(c, 0.0, 2.0, kind="homogeneousBesov") ** 2 for c in comps)))
    I_inf = _cumtrapz(np.array(ginf) ** 2, times)
    I_b = _cumtrapz(np.array(gb) ** 2, times)
    flags = []
    if I_inf[-1] > budget:
        flags.append("grad_inf_integral_over_budget")
    if I_b[-1] > budget:
        flags.append("grad_besov_integral_over_budget")
    return EnergySeries(times, np.array(hs), I_inf, I_b, flags)


def dump_snapshot(t: float, f: SpectralField) -> str:
    """Coefficient text dump preceded by a time header line."""
    return dump_coefficients(f, header=[f"t = {t:.17g}"])
