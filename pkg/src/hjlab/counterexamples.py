"""The two counterexample families, their time scales and support certificates.

High-q data (L = 8): f^N has Fourier coefficients (delta/sqrt N) chi(xi -+ 2^j e)
for j = N..2N with e = (1, ..., 1).  Low-q data (L = 24): f_N is a sum of
modulated, spatially shifted bumps Phi_l^{mu nu} sitting at
mu 2^N e1 + nu 2^l e1, l in the index set of N.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .littlewood_paley import INF, block, chi_low
from .spectral_core import FrequencyLattice, SpectralError, SpectralField, partial_derivative, sparse_convolve


class ConstructionError(SpectralError):
    """Invalid parameters for a counterexample family."""


# ---------------------------------------------------------------------------
# the bump


@dataclass(frozen=True)
class BumpProfile:
    """Radial bump chi(xi) = chi_low(4|xi|).

    Equal to 1 for |xi| <= 1/4 and 0 for |xi| >= 1/3, so its support sits well
    inside the ball of radius 1/2.
    """

    inner: float = 0.25
    outer: float = 1.0 / 3.0

    def __call__(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        r = np.abs(xi) if xi.ndim <= 1 else np.sqrt(np.sum(xi ** 2, axis=-1))
        return chi_low(r / self.inner)

    def stencil(self, L: int, d: int) -> tuple[np.ndarray, np.ndarray]:
        """Integer offsets k with chi(k/L) != 0 and the matching values."""
        R = int(math.ceil(self.outer * L))
        ax = np.arange(-R, R + 1)
        grid = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
        vals = self(grid / L)
        keep = vals != 0
        return grid[keep].astype(np.int64), vals[keep]

    def inverse_at_zero(self, L: int, d: int) -> float:
        """chi-check(0) = sum_k chi(k/L) in the lattice convention."""
        return float(self.stencil(L, d)[1].sum())


BUMP = BumpProfile()


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class HighQParams:
    N: int
    delta: float = 0.1
    d: int = 1
    L: int = 8

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ConstructionError(f"high-q N must be an integer >= 2, got {self.N}")
        if not self.delta > 0:
            raise ConstructionError(f"delta must be positive, got {self.delta}")
        if self.d not in (1, 2, 3):
            raise ConstructionError(f"d must be 1, 2 or 3, got {self.d}")
        if self.L % 8:
            raise ConstructionError(f"high-q lattice needs L divisible by 8, got {self.L}")

    @property
    def direction(self) -> np.ndarray:
        return np.ones(self.d, dtype=np.int64)

    @property
    def lattice(self) -> FrequencyLattice:
        R = int(math.ceil(BUMP.outer * self.L))
        return FrequencyLattice(self.d, self.L, self.L * 2 ** (2 * self.N) + R)


@dataclass(frozen=True)
class LowQParams:
    N: int
    delta: float = 0.1
    q: float = 1.0
    d: int = 1
    L: int = 24

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 16 or self.N % 16:
            raise ConstructionError(f"low-q N must satisfy N ∈ 16ℕ = {{16, 32, ...}}, got {self.N}")
        if not self.delta > 0:
            raise ConstructionError(f"delta must be positive, got {self.delta}")
        if not 1 <= self.q <= 2:
            raise ConstructionError(f"low-q family needs q in [1, 2], got {self.q}")
        if self.d not in (1, 2, 3):
            raise ConstructionError(f"d must be 1, 2 or 3, got {self.d}")
        if self.L % 24:
            raise ConstructionError(f"low-q lattice needs L divisible by 24, got {self.L}")

    @property
    def direction_exact(self) -> np.ndarray:
        return np.full(self.d, 17.0 / (24.0 * math.sqrt(self.d)))

    @property
    def direction_int(self) -> np.ndarray:
        """L e1 rounded to the nearest integer vector (exact when d = 1)."""
        return np.rint(self.L * self.direction_exact).astype(np.int64)

    @property
    def direction(self) -> np.ndarray:
        return self.direction_int / self.L

    @property
    def snap_displacement(self) -> float:
        """Distance between the snapped and exact direction, in lattice cells."""
        return float(np.linalg.norm(self.L * self.direction_exact - self.direction_int))

    @property
    def indices(self) -> list[int]:
        return sorted(index_set(self.N))

    @property
    def lattice(self) -> FrequencyLattice:
        R = int(math.ceil(BUMP.outer * self.L))
        top = (2 ** self.N + 2 ** max(self.indices)) * int(self.direction_int.max())
        return FrequencyLattice(self.d, self.L, top + R)


# ---------------------------------------------------------------------------
# constructions


@dataclass
class Atom:
    """One bump of a construction; sign and index label it."""

    label: tuple
    center: np.ndarray
    field: SpectralField


@dataclass
class Construction:
    params: object
    field: SpectralField
    atoms: list[Atom] = field(default_factory=list)


_REGISTRY: dict[int, Construction] = {}
_REGISTRY_SIZE = 32


def _register(c: Construction) -> SpectralField:
    if len(_REGISTRY) >= _REGISTRY_SIZE:
        _REGISTRY.pop(next(iter(_REGISTRY)))
    _REGISTRY[id(c.field)] = c
    return c.field


def construction_of(f: SpectralField) -> Construction | None:
    """Atom metadata of a field built by this module, if still retained."""
    c = _REGISTRY.get(id(f))
    return c if c is not None and c.field is f else None


def _bump_at(lat: FrequencyLattice, center: np.ndarray, amp, phase_vec=None) -> SpectralField:
    offs, vals = BUMP.stencil(lat.L, lat.d)
    keys = offs + center[None, :]
    coeffs = amp * vals.astype(np.complex128)
    if phase_vec is not None:
        coeffs = coeffs * np.exp(1j * (keys @ phase_vec))
    return SpectralField.from_sparse(lat, keys, coeffs)


def _sum_atoms(lat: FrequencyLattice, atoms: list[Atom]) -> SpectralField:
    keys = np.concatenate([a.field.sparse_items()[0] for a in atoms])
    coeffs = np.concatenate([a.field.sparse_items()[1] for a in atoms])
    return SpectralField.from_sparse(lat, keys, coeffs, sum_duplicates=True)


def high_q_construction(p: HighQParams) -> Construction:
    lat = p.lattice
    amp = p.delta / math.sqrt(p.N)
    atoms = []
    for j in range(p.N, 2 * p.N + 1):
        for sign in (1, -1):
            center = sign * (2 ** j) * p.L * p.direction
            atoms.append(Atom(("+" if sign > 0 else "-", j), center, _bump_at(lat, center, amp)))
    return Construction(p, _sum_atoms(lat, atoms), atoms)


def build_f_high(p: HighQParams) -> SpectralField:
    """f^N as a real sparse field."""
    return _register(high_q_construction(p))


def low_q_construction(p: LowQParams) -> Construction:
    lat = p.lattice
    e = p.direction_int
    amp = p.delta / p.N ** (1.0 / (2.0 * p.q))
    atoms = []
    for l in p.indices:
        # e^{i 2^{l+1} xi.e1} with xi = k/L and e1 = e/L
        phase_vec = (2.0 ** (l + 1)) * e.astype(float) / lat.L ** 2
        for mu, nu in itertools.product((1, -1), repeat=2):
            center = (mu * 2 ** p.N + nu * 2 ** l) * e
            label = ("+" if mu > 0 else "-", "+" if nu > 0 else "-", l)
            atoms.append(Atom(label, center, _bump_at(lat, center, amp, phase_vec)))
    return Construction(p, _sum_atoms(lat, atoms), atoms)


def build_f_low(p: LowQParams) -> SpectralField:
    """f_N as a real sparse field."""
    return _register(low_q_construction(p))


def inflation_time(case: str, N: int, delta: float) -> float:
    if N < 1:
        raise ConstructionError(f"N must be >= 1, got {N}")
    if not delta > 0:
        raise ConstructionError(f"delta must be positive, got {delta}")
    if case == "highQ":
        return 2.0 ** (-N)
    if case == "lowQ":
        return delta * 2.0 ** (-2 * N)
    raise ConstructionError(f"unknown case {case!r}; expected 'highQ' or 'lowQ'")


def index_set(N: int) -> set[int]:
    """{k in 8N : N/4 <= k <= N/2}."""
    if int(N) != N or N < 16 or N % 16:
        raise ConstructionError(f"index set needs N ∈ 16ℕ, got {N}")
    return {k for k in range(8, N // 2 + 1, 8) if 4 * k >= N}


def bump_count(p) -> int:
    """Lattice points per bump."""
    return len(BUMP.stencil(p.L, p.d)[1])


def low_q_block_pair(c: Construction, j: int, axis: int = 1) -> SpectralField:
    """d_i Phi_j^{++} d_i Phi_j^{-+} + d_i Phi_j^{+-} d_i Phi_j^{--}.

    The atoms carry the amplitude delta / N^{1/(2q)}, so this is the
    same-index part of Delta_j (d_i f)^2 up to the factor 2 of the cross terms.
    """
    at = {a.label: a.field for a in c.atoms}
    terms = []
    for nu in ("+", "-"):
        a = partial_derivative(at[("+", nu, j)], axis)
        b = partial_derivative(at[("-", nu, j)], axis)
        terms.append(sparse_convolve(a, b))
    return terms[0] + terms[1]


def i1_closed_form(p: LowQParams, j: int) -> float:
    """Value of the block-pair sum at x = -2^{j+1} e1, for d = 1.

    With a = 2^N e1 and b = 2^j e1 the two products contribute
    amp^2 [(a^2 - b^2) chi(0)^2 + chi'(0)^2 -+ 2ib chi chi'] each, and
    chi'(0) = 0 by symmetry.
    """
    if p.d != 1:
        raise ConstructionError("closed form is stated for d = 1")
    e1 = float(p.direction[0])
    chi0 = BUMP.inverse_at_zero(p.L, p.d)
    amp = input_norm_bound(p)
    return 2.0 * amp ** 2 * e1 ** 2 * (2.0 ** (2 * p.N) - 2.0 ** (2 * j)) * chi0 ** 2


# ---------------------------------------------------------------------------
# support certificates


@dataclass
class Certificate:
    fact: str
    passed: bool
    n_products: int
    offending: list[tuple] = field(default_factory=list)
    notes: str = ""

    def as_dict(self) -> dict:
        return {
            "fact": self.fact,
            "passed": self.passed,
            "n_products": self.n_products,
            "offending": [list(map(float, k)) for k in self.offending[:20]],
            "notes": self.notes,
        }


def _radii(f: SpectralField) -> tuple[np.ndarray, np.ndarray]:
    keys, coeffs = f.sparse_items()
    nz = coeffs != 0
    k = keys[nz]
    return np.sqrt(np.sum((k / f.lattice.L) ** 2, axis=1)), k


def _require(f: SpectralField) -> Construction:
    c = construction_of(f)
    if c is None:
        raise ConstructionError("support certificates need a field built by this module (atom metadata missing)")
    return c


def support_certificate(f: SpectralField, fact: str) -> Certificate:
    """Check a support fact with exact sparse products and zero tolerance."""
    if fact not in ("hq_3_3", "lq_3_9", "lq_3_10", "lq_3_11"):
        raise ConstructionError(f"unknown support fact {fact!r}")
    keys, coeffs = f.sparse_items()
    if not np.any(coeffs != 0):
        return Certificate(fact, True, 0, notes="empty field")
    c = _require(f)
    if fact == "hq_3_3":
        return _cert_hq(c)
    if fact == "lq_3_11":
        return _cert_lq_11(c)
    return _cert_lq_annuli(c, fact)


def _cert_hq(c: Construction) -> Certificate:
    # same-sign or mismatched-index pair products avoid B(0, 1/2)
    offending, n = [], 0
    for a, b in itertools.combinations_with_replacement(c.atoms, 2):
        (sa, ja), (sb, jb) = a.label, b.label
        if sa == sb or ja != jb:
            n += 1
            r, k = _radii(sparse_convolve(a.field, b.field))
            offending.extend(map(tuple, k[r < 0.5].tolist()))
    return Certificate("hq_3_3", not offending, n, offending)


def _opposite_pairs(c: Construction):
    plus = [a for a in c.atoms if a.label[0] == "+"]
    minus = [a for a in c.atoms if a.label[0] == "-"]
    return itertools.product(plus, minus)


def _cert_lq_annuli(c: Construction, fact: str) -> Certificate:
    # cross products of opposite outer sign, distinct indices
    N = c.params.N
    offending, n = [], 0
    for j in c.params.indices:
        for a, b in _opposite_pairs(c):
            l, m = a.label[2], b.label[2]
            if l == m:
                continue
            if fact == "lq_3_9" and max(l, m) > j:
                lo, hi = 3.0 * 2.0 ** j, 2.0 ** (j + N)
            elif fact == "lq_3_10" and max(l, m) < j:
                lo, hi = 0.0, 0.5 * 2.0 ** j
            else:
                continue
            n += 1
            prod = sparse_convolve(a.field, b.field)
            r, k = _radii(prod)
            bad = (r < lo) | (r >= hi) if lo > 0 else r >= hi
            offending.extend(map(tuple, k[bad].tolist()))
            blk = block(prod, j)
            if blk.n_modes:
                offending.extend(map(tuple, blk.sparse_items()[0].tolist()))
    notes = "" if n else "no index pairs qualify for this N"
    return Certificate(fact, not offending, n, offending, notes)


def _cert_lq_11(c: Construction) -> Certificate:
    offending, n = [], 0
    at = {a.label: a.field for a in c.atoms}
    for j in c.params.indices:
        for i in range(1, c.field.d + 1):
            full = None
            for nu, nu2 in itertools.product("+-", repeat=2):
                prod = sparse_convolve(partial_derivative(at[("+", nu, j)], i), partial_derivative(at[("-", nu2, j)], i))
                full = prod if full is None else full + prod
            n += 4
            lhs = block(full, j).to_sparse()
            rhs = low_q_block_pair(c, j, i).to_sparse()
            lk, lc = lhs.sparse_items()
            rk, rc = rhs.sparse_items()
            if lk.shape != rk.shape or not np.array_equal(lk, rk):
                diff = set(map(tuple, lk.tolist())) ^ set(map(tuple, rk.tolist()))
                offending.extend(sorted(diff))
            elif not np.array_equal(lc, rc):
                offending.extend(map(tuple, lk[lc != rc].tolist()))
    return Certificate("lq_3_11", not offending, n, offending)


def input_norm_bound(p: LowQParams) -> float:
    """delta / N^{1/(2q)}, the scale of the low-q input norm."""
    return p.delta / p.N ** (1.0 / (2.0 * p.q))


def high_q_rate(q: float) -> float:
    """Decay exponent 1/2 - 1/q of the high-q input norm (1/2 at q = inf)."""
    return 0.5 if q == INF else 0.5 - 1.0 / q


__all__ = [
    "BUMP",
    "BumpProfile",
    "Certificate",
    "Construction",
    "ConstructionError",
    "HighQParams",
    "LowQParams",
    "build_f_high",
    "build_f_low",
    "construction_of",
    "high_q_construction",
    "i1_closed_form",
    "index_set",
    "inflation_time",
    "low_q_block_pair",
    "low_q_construction",
    "support_certificate",
]
