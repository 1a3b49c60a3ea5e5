"""Complex polynomial utilities: interpolation, determinants, roots, partial fractions.

Conventions: coefficients are stored ascending (coef[k] multiplies z**k) and
trimmed so the leading coefficient is meaningful.  Root classification against
the unit circle uses CIRCLE_TOL on abs(z) - 1; numerically coincident roots
are merged into one root with summed multiplicity (CLUSTER_TOL).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError

DROP_TOL = 1e-10
CLUSTER_TOL = 1e-6
CIRCLE_TOL = 1e-8

INSIDE = "inside"
ON_CIRCLE = "on_circle"
OUTSIDE = "outside"


class Polynomial:
    """Immutable complex polynomial with ascending coefficients."""

    __slots__ = ("coef",)

    def __init__(self, coef):
        c = np.atleast_1d(np.asarray(coef, dtype=complex))
        mx = np.abs(c).max() if c.size else 0.0
        if mx == 0.0:
            c = np.zeros(1, dtype=complex)
        else:
            deg = max(i for i in range(c.size) if np.abs(c[i]) > DROP_TOL * mx)
            c = c[: deg + 1]
        c.setflags(write=False)
        object.__setattr__(self, "coef", c)

    @property
    def degree(self) -> int:
        return len(self.coef) - 1

    def __call__(self, z):
        return np.polyval(self.coef[::-1], z)

    def deriv(self, order: int = 1) -> "Polynomial":
        c = self.coef[::-1]
        for _ in range(order):
            c = np.polyder(c)
        return Polynomial(c[::-1] if len(c) else [0.0])

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(np.convolve(self.coef, other.coef))

    def divmod(self, other: "Polynomial") -> tuple["Polynomial", "Polynomial"]:
        q, r = np.polydiv(self.coef[::-1], other.coef[::-1])
        return Polynomial(q[::-1]), Polynomial(r[::-1])

    def is_zero(self) -> bool:
        return self.degree == 0 and self.coef[0] == 0

    def __repr__(self):
        return f"Polynomial(degree={self.degree})"


@dataclass(frozen=True)
class Root:
    value: complex
    multiplicity: int
    location: str


@dataclass(frozen=True)
class RootSet:
    roots: tuple

    def __iter__(self):
        return iter(self.roots)

    def __len__(self):
        return len(self.roots)

    @property
    def total_multiplicity(self) -> int:
        return sum(r.multiplicity for r in self.roots)

    def closed_disk(self) -> list[Root]:
        return [r for r in self.roots if r.location in (INSIDE, ON_CIRCLE)]

    def outside(self) -> list[Root]:
        return [r for r in self.roots if r.location == OUTSIDE]


def poly_from_samples(samples, degree_bound: int) -> Polynomial:
    """Interpolating polynomial of degree <= degree_bound through (node, value) pairs."""
    nodes = np.array([s[0] for s in samples], dtype=complex)
    vals = np.array([s[1] for s in samples], dtype=complex)
    if len(nodes) < degree_bound + 1:
        raise ValueError(f"need at least {degree_bound + 1} samples, got {len(nodes)}")
    if len(np.unique(np.round(nodes, 14))) != len(nodes):
        raise SolverError("duplicate interpolation nodes")
    V = np.vander(nodes, degree_bound + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, vals, rcond=None)
    resid = np.abs(V @ coef - vals).max()
    scale = max(np.abs(vals).max(), 1e-300)
    if resid > 1e-6 * scale:
        raise SolverError(f"interpolation residual {resid:.2e} exceeds tolerance (rank-deficient nodes?)")
    return Polynomial(coef)


def poly_from_function(f, degree_bound: int, radius: float = 1.25) -> Polynomial:
    """Coefficient recovery by sampling on a circle of the given radius.

    Nodes are scaled roots of unity, so the inverse transform is a plain FFT;
    the radius keeps nodes away from roots clustered in the unit disk.  On a
    singular sample the radius is jittered and the sweep retried.
    """
    N = degree_bound + 1
    for attempt in range(3):
        rad = radius * (1.0 + 0.013 * attempt)
        nodes = rad * np.exp(2j * np.pi * np.arange(N) / N)
        try:
            vals = np.array([f(z) for z in nodes], dtype=complex)
        except SolverError:
            if attempt == 2:
                raise
            continue
        coef = np.fft.fft(vals) / N / (rad ** np.arange(N))
        return Polynomial(coef)
    raise SolverError("polynomial recovery failed")  # pragma: no cover


def det_poly(entry_evaluator, size: int, degree_bound: int, radius: float = 1.25) -> Polynomial:
    """Determinant polynomial of a matrix-valued function recovered by interpolation.

    entry_evaluator(z) must return the full size-by-size matrix at z.
    """
    def f(z):
        M = np.asarray(entry_evaluator(z))
        if M.shape != (size, size):
            raise ValueError(f"evaluator returned shape {M.shape}, expected {(size, size)}")
        return np.linalg.det(M)

    return poly_from_function(f, degree_bound, radius)


def _cluster(points, tol: float):
    """Merge (value, multiplicity) points closer than tol; returns (center, mult, spread)."""
    vals = np.array([p[0] for p in points], dtype=complex)
    mults = np.array([p[1] for p in points], dtype=int)
    used = np.zeros(len(vals), bool)
    out = []
    for i in np.argsort(np.abs(vals)):
        if used[i]:
            continue
        grp = [i]
        used[i] = True
        for j in range(len(vals)):
            if not used[j] and abs(vals[j] - vals[i]) < tol:
                grp.append(j)
                used[j] = True
        ctr = complex(np.average(vals[grp], weights=mults[grp]))
        spread = max(abs(vals[g] - ctr) for g in grp)
        out.append((ctr, int(mults[grp].sum()), spread))
    return out


def find_roots(
    p: Polynomial,
    cluster_tol: float = CLUSTER_TOL,
    circle_tol: float = CIRCLE_TOL,
    polish_fn=None,
) -> RootSet:
    """All complex roots via the companion matrix, polished and classified.

    Each raw eigenvalue gets one Newton step (against polish_fn when given,
    else against p itself); roots within cluster_tol merge with summed
    multiplicity; each cluster is classified against the unit circle.
    """
    if p.degree < 1:
        raise ValueError("find_roots requires degree >= 1")
    raw = np.roots(p.coef[::-1])
    if polish_fn is None:
        dp = p.deriv()

        def newton(z):
            d = dp(z)
            return z - p(z) / d if d != 0 else z
    else:
        def newton(z):
            dz = 1e-7 * (1 + abs(z))
            d = (polish_fn(z + dz) - polish_fn(z - dz)) / (2 * dz)
            return z - polish_fn(z) / d if d != 0 else z

    polished = []
    for z in raw:
        for _ in range(3):
            try:
                z2 = newton(z)
            except SolverError:
                break  # stepped onto a pole of the evaluator; keep the last iterate
            if not np.isfinite(z2):
                break
            if abs(z2 - z) < 1e-14 * (1 + abs(z)):
                z = z2
                break
            z = z2
        polished.append(z)
    roots = []
    for ctr, mult, _spread in _cluster([(z, 1) for z in polished], cluster_tol):
        d = abs(ctr) - 1.0
        if abs(d) <= circle_tol:
            loc = ON_CIRCLE
        elif d < 0:
            loc = INSIDE
        else:
            loc = OUTSIDE
        if abs(ctr.imag) < cluster_tol:
            ctr = complex(ctr.real, 0.0)
        roots.append(Root(ctr, mult, loc))
    return RootSet(tuple(sorted(roots, key=lambda r: (abs(r.value), r.value.real, r.value.imag))))


def pole_taylor(func, center: complex, orders: int, radius: float, K: int | None = None) -> np.ndarray:
    """First `orders` Taylor coefficients of z -> func(z) * (z-center)**orders at center.

    func may be scalar- or vector-valued; sampling on a small circle makes this
    a discrete Cauchy integral, which is how pole residues are extracted.
    """
    if K is None:
        K = max(48, 12 * orders)
    zs = center + radius * np.exp(2j * np.pi * np.arange(K) / K)
    vals = np.asarray([func(z) for z in zs])
    w = ((zs - center) ** orders)
    if vals.ndim > 1:
        w = w.reshape((K,) + (1,) * (vals.ndim - 1))
    co = np.fft.fft(vals * w, axis=0) / K
    scale = (radius ** np.arange(orders)).reshape((orders,) + (1,) * (vals.ndim - 1))
    return co[:orders] / scale


@dataclass(frozen=True)
class PoleTerm:
    """One expansion term residue / (z - pole)**(multiplicity - order + 1)."""

    pole: complex
    order: int
    residue: complex
    multiplicity: int


@dataclass(frozen=True)
class PartialFractionExpansion:
    """polynomial_part(z) + sum of pole terms; represents a proper rational tail."""

    polynomial_part: Polynomial
    terms: tuple
    _vector_dim: int = field(default=1)

    def evaluate(self, z: complex):
        out = self.polynomial_part(z)
        for t in self.terms:
            out = out + t.residue / (z - t.pole) ** (t.multiplicity - t.order + 1)
        return out

    def coefficient_sequence(self, N: int) -> np.ndarray:
        """Power-series coefficients 0..N around the origin (real part).

        Conjugate pole pairs must both be present in terms; the result is the
        real part after the pairs cancel their imaginary leakage.
        """
        seq = np.zeros(N + 1, dtype=complex)
        pp = self.polynomial_part.coef
        seq[: min(len(pp), N + 1)] += pp[: N + 1]
        for t in self.terms:
            p = t.multiplicity - t.order + 1
            term = t.residue * (-1) ** p / t.pole ** p
            for n in range(N + 1):
                seq[n] += term
                term = term * ((n + p) / (n + 1)) / t.pole
                if abs(term) < 1e-300:
                    break
        return seq.real

    def max_imag_leakage(self, N: int = 64) -> float:
        seq = np.zeros(N + 1, dtype=complex)
        for t in self.terms:
            p = t.multiplicity - t.order + 1
            term = t.residue * (-1) ** p / t.pole ** p
            for n in range(N + 1):
                seq[n] += term
                term = term * ((n + p) / (n + 1)) / t.pole
        return float(np.abs(seq.imag).max())

    def verify(self, reference, probes, rtol: float = 1e-8) -> float:
        """Max relative error of the expansion against a reference callable."""
        worst = 0.0
        for z in probes:
            ref = reference(z)
            err = abs(self.evaluate(z) - ref) / max(abs(ref), 1e-300)
            worst = max(worst, float(err))
        if worst > rtol:
            raise SolverError(f"partial-fraction reconstruction off by {worst:.2e} (tol {rtol:.0e})")
        return worst


def partial_fractions(
    numerator: Polynomial,
    denominator: Polynomial,
    poles,
    evaluator=None,
    divisibility_tol: float = 1e-6,
) -> PartialFractionExpansion:
    """Expand numerator/denominator over the given outside poles.

    The denominator's closed-unit-disk roots must divide the numerator (their
    contribution cancels); this is checked by polynomial division and is the
    signature that an upstream boundary solve was consistent.  Residues are
    extracted by local Taylor expansion of the deflated function around each
    pole, sampling either numerator/denominator or the optional exact
    `evaluator` (preferred when polynomial coefficients are ill-scaled).
    A polynomial part appears only when degree(numerator) >= degree(denominator).
    """
    if isinstance(poles, RootSet):
        pole_list = [(r.value, r.multiplicity) for r in poles.outside()]
    else:
        pole_list = [(complex(v), int(q)) for v, q in poles]
    if any(abs(v) <= 1 + CIRCLE_TOL for v, _ in pole_list):
        raise ValueError("poles must lie strictly outside the closed unit disk")

    # divisibility of the closed-disk denominator factor
    outside_factor = Polynomial([1.0])
    for v, q in pole_list:
        for _ in range(q):
            outside_factor = outside_factor * Polynomial([-v, 1.0])
    closed_factor, rem = denominator.divmod(outside_factor)
    if closed_factor.degree >= 1:
        _, num_rem = numerator.divmod(closed_factor)
        scale = max(np.abs(numerator.coef).max(), 1e-300)
        worst = np.abs(num_rem.coef).max() / scale
        if worst > divisibility_tol:
            raise SolverError(
                f"closed-disk denominator roots do not divide the numerator "
                f"(relative remainder {worst:.2e}); boundary solve inconsistent"
            )

    poly_part = Polynomial([0.0])
    if numerator.degree >= denominator.degree:
        poly_part, _ = numerator.divmod(denominator)

    if evaluator is None:
        def evaluator(z):  # noqa: F811 - default rational evaluation
            return numerator(z) / denominator(z)

    def tail(z):
        return evaluator(z) - poly_part(z)

    terms = []
    for v, q in pole_list:
        sep = min((abs(v - v2) for v2, _ in pole_list if abs(v2 - v) > 1e-12), default=1.0)
        r_loc = max(min(0.25 * sep, 0.05 * (1 + abs(v))), 1e-4 * (1 + abs(v)))
        co = pole_taylor(tail, v, q, r_loc)
        for i in range(1, q + 1):
            terms.append(PoleTerm(v, i, complex(co[i - 1]), q))
    return PartialFractionExpansion(poly_part, tuple(terms))
