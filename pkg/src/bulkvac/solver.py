"""Steady-state solver for the batch-service queue with queue-size-dependent vacations.

Pipeline: build the characteristic system from the arrival-counting kernels,
determine the m*H boundary vectors from the closed-unit-disk roots of the
characteristic determinant plus normalization, read the full-batch column's
coefficients off a contour of its generating function, convert the
embedded-epoch law to the arbitrary-epoch law, and summarize marginals and
performance measures.

Numerical strategy: the characteristic determinant's value spans many orders
of magnitude across the plane, so boundary conditions and the full-batch
coefficient extraction work from direct kernel evaluations (small linear
solves and m-by-m determinants) rather than from expanded polynomial
coefficients; global polynomials appear only where root finding needs them.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SolverError
from .kernels import Kernel
from .polynomials import (
    ON_CIRCLE,
    Polynomial,
    _cluster,
    find_roots,
    poly_from_function,
)
from .processes import QueueModel

log = logging.getLogger("bulkvac.solver")

NEG_CLAMP_EMBEDDED = 1e-10
NEG_CLAMP_ARBITRARY = 1e-8


@dataclass
class SolverOptions:
    """Tunable tolerances; defaults match the documented contract."""

    truncation: int | None = None          # fixed N_trunc, else chosen from the dominant pole
    truncation_cap: int = 5000
    residual_target: float = 1e-9          # tail mass left beyond N_trunc
    node_radius: float = 1.25              # interpolation circle for global polynomials
    cluster_tol: float = 1e-6
    circle_tol: float = 1e-8
    cond_limit: float = 1e12
    component_agreement_tol: float = 1e-6  # cross-check between Cramer components
    reconstruction_tol: float = 1e-7


@dataclass(frozen=True)
class BoundaryUnknowns:
    """Queue-length vectors at service completion for n < H, and the induced
    vacation-termination vectors for n < h."""

    xi_plus: np.ndarray            # (H, m)
    gamma_plus_small: np.ndarray   # (h, m)
    condition_number: float
    residual: float
    component_agreement: float


@dataclass(frozen=True)
class EmbeddedDistributions:
    """Joint laws at service-completion / vacation-termination epochs."""

    xi_plus_joint: np.ndarray      # (N+1, H-h+1, m), batch sizes h..H
    gamma_plus_joint: np.ndarray   # (N+1, h, m), vacation types 0..h-1
    sigma_inverse: float | None
    truncation_residual: float
    n_trunc: int

    @property
    def xi_plus_marginal(self) -> np.ndarray:
        return self.xi_plus_joint.sum(axis=1)

    @property
    def gamma_plus_marginal(self) -> np.ndarray:
        return self.gamma_plus_joint.sum(axis=1)

    @property
    def queue_marginal(self) -> np.ndarray:
        """P_n at embedded epochs (service completions and vacation terminations)."""
        return (self.xi_plus_joint.sum(axis=(1, 2)) + self.gamma_plus_joint.sum(axis=(1, 2)))

    def total_mass(self) -> float:
        return float(self.xi_plus_joint.sum() + self.gamma_plus_joint.sum())


@dataclass(frozen=True)
class ArbitraryDistributions:
    """Time-stationary joint laws; R_dormant exists only under single vacation."""

    R_dormant: np.ndarray | None   # (h, m) or None under MV
    xi_joint: np.ndarray           # (N+1, H-h+1, m)
    gamma_joint: np.ndarray        # (N+1, h, m)
    E_factor: float
    w_hat: float

    def total_mass(self) -> float:
        tot = float(self.xi_joint.sum() + self.gamma_joint.sum())
        if self.R_dormant is not None:
            tot += float(self.R_dormant.sum())
        return tot


@dataclass(frozen=True)
class PerformanceReport:
    L_q: float
    L_s: float
    W_q: float
    W_s: float
    L_ser: float
    L_vac: float
    P_dor: float
    P_busy: float
    P_vac: float
    P_idle: float
    queue_length: np.ndarray       # P_n at arbitrary epochs
    server_content: dict           # r -> P(serving a batch of r)
    vacation_type: dict            # k -> P(on a type-k vacation)

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in
               ("L_q", "L_s", "W_q", "W_s", "L_ser", "L_vac", "P_dor", "P_busy", "P_vac", "P_idle")}
        out["server_content"] = {str(k): v for k, v in self.server_content.items()}
        out["vacation_type"] = {str(k): v for k, v in self.vacation_type.items()}
        return out


@dataclass
class SolverDiagnostics:
    roots: list = field(default_factory=list)
    poles: list = field(default_factory=list)
    condition_number: float = float("nan")
    boundary_residual: float = float("nan")
    component_agreement: float = float("nan")
    embedded_total_error: float = float("nan")
    arbitrary_total_error: float = float("nan")
    marginal_consistency: float = float("nan")
    reconstruction_error: float = float("nan")
    imag_leakage: float = float("nan")
    n_trunc: int = 0

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["roots"] = [
            {"re": r.value.real, "im": r.value.imag, "multiplicity": r.multiplicity,
             "location": r.location} for r in self.roots
        ]
        out["poles"] = [
            {"re": b.real, "im": b.imag, "multiplicity": q} for b, q in self.poles
        ]
        return out


class Characteristic:
    """Evaluation machinery shared by the boundary solve and the tail expansion."""

    def __init__(self, model: QueueModel, options: SolverOptions | None = None):
        model.require_stable()
        self.model = model
        self.options = options or SolverOptions()
        arr = model.arrivals
        self.m = arr.m
        self.h, self.H = model.h, model.H
        self.eps = model.epsilon
        self.service_kernels = {r: Kernel(arr, model.services[r]) for r in model.services}
        self.vacation_kernels = {k: Kernel(arr, model.vacations[k]) for k in model.vacations}
        C = np.asarray(arr.C)
        self.neg_C_inv = -np.linalg.inv(C)
        Dt = self.neg_C_inv @ np.asarray(arr.D)
        self.Dt_pows = [np.linalg.matrix_power(Dt, p) for p in range(self.h + 1)]
        # short vacation-count coefficients drive the linear maps for n <= H
        self._B_short = {k: self.vacation_kernels[k].coefficients(self.H)
                         for k in self.vacation_kernels}
        self._build_basis_maps()
        self._build_char_poly()

    # -- basis maps: every gamma+(n), n < H, is linear in the m*H unknowns --

    def _build_basis_maps(self):
        m, h, H, eps = self.m, self.h, self.H, self.eps
        nunk = m * H
        Xi = [np.zeros((nunk, m)) for _ in range(H)]
        for n in range(H):
            for i in range(m):
                Xi[n][n * m + i, i] = 1.0
        G: list = [None] * H
        for k in range(h):
            acc = np.zeros((nunk, m))
            for j in range(k):
                acc += (Xi[j] + eps * G[j]) @ self._B_short[j][k - j]
            rhs = acc + Xi[k] @ self._B_short[k][0]
            face = np.eye(m) - eps * self._B_short[k][0]
            try:
                G[k] = rhs @ np.linalg.inv(face)
            except np.linalg.LinAlgError:
                raise SolverError(f"singular (I - eps B_0) for vacation type {k}") from None
        for n in range(h, H):
            acc = np.zeros((nunk, m))
            for j in range(h):
                acc += (Xi[j] + eps * G[j]) @ self._B_short[j][n - j]
            G[n] = acc
        self.xi_maps = Xi
        self.gamma_maps = G
        self.n_unknowns = nunk

    # -- characteristic polynomial (reduced by the full-batch denominator) --

    def service_matrix(self, z: complex) -> np.ndarray:
        """z^H I - A^(H)(z); the characteristic matrix up to the kernel denominator."""
        return z ** self.H * np.eye(self.m) - self.service_kernels[self.H].eval(z)

    def _dH_poly(self) -> Polynomial:
        ker = self.service_kernels[self.H]
        n = self.model.services[self.H].n

        def f(z):
            K = -(ker._TkI + ker._IkC + z * ker._IkD)
            return np.linalg.det(K)

        p = poly_from_function(f, n * self.m + 2, self.options.node_radius)
        return Polynomial(p.coef / np.abs(p.coef).max())

    def char_det(self, z: complex) -> complex:
        """det(z^H I - A^(H)(z)) * dH(z): entire, degree m*H + deg(dH)."""
        return complex(np.linalg.det(self.service_matrix(z)) * self._dH(z))

    def _build_char_poly(self):
        dH = self._dH_poly()
        self._dH = dH
        deg = self.m * self.H + dH.degree
        self.char_poly = poly_from_function(self.char_det, deg + 2, self.options.node_radius)
        self.roots = find_roots(
            self.char_poly,
            cluster_tol=self.options.cluster_tol,
            circle_tol=self.options.circle_tol,
            polish_fn=self.char_det,
        )
        closed = self.roots.closed_disk()
        total = sum(r.multiplicity for r in closed)
        if total != self.m * self.H:
            raise SolverError(
                f"root-count mismatch: {total} roots in the closed unit disk, "
                f"expected m*H = {self.m * self.H}; roots: "
                + ", ".join(f"{r.value:.6f}(x{r.multiplicity})" for r in self.roots)
            )
        ones = [r for r in closed if abs(r.value - 1) <= 10 * self.options.circle_tol]
        if len(ones) != 1 or ones[0].multiplicity != 1:
            raise SolverError("z=1 must be a simple root of the characteristic determinant")
        self.root_one = ones[0]
        stray = [r for r in closed if r.location == ON_CIRCLE and r is not ones[0]]
        if stray:
            raise SolverError(
                "characteristic root on the unit circle away from z=1: "
                + ", ".join(f"{r.value:.8f}" for r in stray)
            )
        self.boundary_roots = [r for r in closed if r is not ones[0]]
        self.kernel_poles = self._collect_kernel_poles()

    def _collect_kernel_poles(self) -> list[tuple[complex, int]]:
        """Denominator roots of every kernel appearing in the boundary column."""
        out: list[tuple[complex, int]] = []
        for k in range(self.h):
            out.extend(self.vacation_kernels[k].denominator_roots())
        for r in range(self.h, self.H):
            out.extend(self.service_kernels[r].denominator_roots())
        bad = [b for b, _ in out if abs(b) <= 1 + self.options.circle_tol]
        if bad:
            raise SolverError(f"kernel denominator root inside the closed unit disk: {bad}")
        return out

    # -- right-hand columns of the two Cramer systems --

    def kernel_values(self, z: complex):
        Az = {r: self.service_kernels[r].eval(z) for r in self.service_kernels}
        Bz = {k: self.vacation_kernels[k].eval(z) for k in self.vacation_kernels}
        return Az, Bz

    def _rhs_row(self, z, xiv, gav, Az, Bz, full_batch: bool) -> np.ndarray:
        """Right-hand row of the queue-PGF balance (full_batch=False) or of the
        full-batch-column balance (True); both are linear in the unknowns."""
        m, h, H, eps = self.m, self.h, self.H, self.eps
        Im = np.eye(m)
        AH = Az[H]
        out = np.zeros(m, dtype=complex)
        if full_batch:
            for n in range(h):
                v = xiv[n] + eps * gav[n]
                out += (v @ (Bz[n] - Im)) * z ** n
                if eps != 1:
                    # with h == H the batch-h and batch-H collections coincide and
                    # the dormant inflow keeps its z^H weight instead of A^(h)
                    if h == H:
                        out += (1 - eps) * (
                            (gav[n] @ self.Dt_pows[h - n]) * z ** H - gav[n] * z ** n
                        )
                    else:
                        out += (1 - eps) * (
                            gav[n] @ self.Dt_pows[h - n] @ Az[h] - gav[n] * z ** n
                        )
            for n in range(h, H):
                v = gav[n] + xiv[n]
                out += v @ Az[n] - v * z ** n
            return out @ AH
        for n in range(h):
            v = xiv[n] + eps * gav[n]
            out += (v @ (Bz[n] - Im)) @ AH * z ** n
            if eps != 1:
                out += (1 - eps) * (
                    (gav[n] @ self.Dt_pows[h - n] @ Az[h]) * z ** H - (gav[n] @ AH) * z ** n
                )
        for n in range(h, H):
            v = gav[n] + xiv[n]
            out += (v @ Az[n]) * z ** H - (v @ AH) * z ** n
        return out

    def cramer_basis(self, z: complex, full_batch: bool = False) -> np.ndarray:
        """det of the transposed characteristic matrix with column j replaced by
        the right-hand column, for every component j and basis unknown: (m, nunk)."""
        Az, Bz = self.kernel_values(z)
        MT = self.service_matrix(z).T.astype(complex)
        out = np.empty((self.m, self.n_unknowns), dtype=complex)
        for a in range(self.n_unknowns):
            xiv = [self.xi_maps[n][a] for n in range(self.H)]
            gav = [self.gamma_maps[n][a] for n in range(self.H)]
            col = self._rhs_row(z, xiv, gav, Az, Bz, full_batch)
            for j in range(self.m):
                Mj = MT.copy()
                Mj[:, j] = col
                out[j, a] = np.linalg.det(Mj)
        return out

    def cramer_numerator(self, z: complex, xi_plus: np.ndarray, gamma: np.ndarray,
                         full_batch: bool = False) -> np.ndarray:
        """Cramer numerator determinants at z for concrete unknowns (vector over j)."""
        Az, Bz = self.kernel_values(z)
        MT = self.service_matrix(z).T.astype(complex)
        col = self._rhs_row(z, list(xi_plus), list(gamma), Az, Bz, full_batch)
        out = np.empty(self.m, dtype=complex)
        for j in range(self.m):
            Mj = MT.copy()
            Mj[:, j] = col
            out[j] = np.linalg.det(Mj)
        return out

    def cramer_at(self, z: complex, xi_plus: np.ndarray, gamma: np.ndarray,
                  full_batch: bool = False) -> np.ndarray:
        """Component values of the solved generating function at z (vector over j)."""
        num = self.cramer_numerator(z, xi_plus, gamma, full_batch)
        return num / np.linalg.det(self.service_matrix(z))

    def rhs_at(self, z: complex, xi_plus: np.ndarray, gamma: np.ndarray,
               full_batch: bool = False) -> np.ndarray:
        Az, Bz = self.kernel_values(z)
        return self._rhs_row(z, list(xi_plus), list(gamma), Az, Bz, full_batch)

    def gamma_at(self, xi_plus: np.ndarray) -> np.ndarray:
        """gamma+(n) for n < H induced by concrete unknowns (H, m)."""
        x = np.asarray(xi_plus).reshape(-1)
        return np.array([x @ self.gamma_maps[n] for n in range(self.H)])


def build_characteristic(model: QueueModel, options: SolverOptions | None = None) -> Characteristic:
    """Validate the model and assemble the characteristic system."""
    return Characteristic(model, options)


def vacation_termination(model: QueueModel, xi_plus_small: np.ndarray, n_trunc: int):
    """Joint vacation-termination law from the small-queue completion vectors.

    xi_plus_small holds the vectors for n = 0..h-1.  Returns the joint array
    gamma_plus_joint of shape (n_trunc+1, h, m) with gamma+(n, k) at [n, k],
    plus the resolved per-type source vectors (xi+(k) + eps gamma+(k)).
    Under multiple vacations the self-reference at n = k is resolved
    sequentially in k; under single vacation the map is explicit.
    """
    m, h, eps = model.arrivals.m, model.h, model.epsilon
    xi_small = np.asarray(xi_plus_small, dtype=float).reshape(h, m)
    kernels = {k: Kernel(model.arrivals, model.vacations[k]) for k in range(h)}
    coeffs = {k: kernels[k].coefficients(n_trunc) for k in range(h)}
    sources = np.zeros((h, m))
    gamma_small = np.zeros((h, m))
    for k in range(h):
        acc = np.zeros(m)
        for j in range(k):
            acc += sources[j] @ coeffs[j][k - j]
        face = np.eye(m) - eps * coeffs[k][0]
        try:
            gamma_small[k] = (acc + xi_small[k] @ coeffs[k][0]) @ np.linalg.inv(face)
        except np.linalg.LinAlgError:
            raise SolverError(f"singular (I - eps B_0) for vacation type {k}") from None
        sources[k] = xi_small[k] + eps * gamma_small[k]
    joint = np.zeros((n_trunc + 1, h, m))
    for k in range(h):
        joint[k:, k, :] = np.einsum("i,lij->lj", sources[k], coeffs[k].matrices[: n_trunc + 1 - k])
    return joint, gamma_small, sources


def _derivative_rows(char: Characteristic, p: complex, orders: int, full_batch: bool,
                     radius: float) -> np.ndarray:
    """Taylor coefficients 0..orders-1 of every Cramer determinant at p: (orders, m, nunk)."""
    if orders == 1:
        return char.cramer_basis(p, full_batch)[None, :, :]
    K = max(32, 8 * orders)
    zs = p + radius * np.exp(2j * np.pi * np.arange(K) / K)
    vals = np.array([char.cramer_basis(z, full_batch) for z in zs])
    co = np.fft.fft(vals, axis=0) / K
    return co[:orders] / (radius ** np.arange(orders))[:, None, None]


def _local_radius(p: complex, others, floor: float = 1e-4, cap: float = 1e-2) -> float:
    sep = min((abs(p - q) for q in others if abs(q - p) > 1e-12), default=1.0)
    return float(max(min(0.25 * sep, cap), min(floor * (1 + abs(p)), 0.4 * sep)))


def solve_boundary(model_or_char, options: SolverOptions | None = None) -> BoundaryUnknowns:
    """Determine the m*H unknown vectors from root conditions plus normalization.

    For one component j of the Cramer solution, the numerator determinant must
    vanish (to root multiplicity) at every closed-disk root p != 1 of the
    characteristic determinant; the last equation is the normalization of the
    embedded law at z = 1.  With m >= 2 the solve is repeated on a second
    component as a conditioning cross-check.
    """
    char = model_or_char if isinstance(model_or_char, Characteristic) else \
        build_characteristic(model_or_char, options)
    opts = char.options
    m, h, H, eps = char.m, char.h, char.H, char.eps
    nunk = char.n_unknowns
    landmarks = [r.value for r in char.roots] + [b for b, _ in char.kernel_poles]

    rows_by_j: list[list[np.ndarray]] = [[] for _ in range(m)]
    for root in char.boundary_roots:
        p, q = root.value, root.multiplicity
        if p.imag < -1e-9:
            continue  # conjugate rows are the Re/Im pair of the upper root
        radius = _local_radius(p, landmarks)
        tay = _derivative_rows(char, p, q, False, radius)
        for i in range(q):
            for j in range(m):
                rows_by_j[j].append(tay[i, j].real)
                if p.imag > 1e-9:
                    rows_by_j[j].append(tay[i, j].imag)

    # normalization: sum_j d/dz numer_j(1) + d/dz chardet-reduced(1) * O+(1) mass
    r1 = min(_local_radius(1.0, [v for v in landmarks if abs(v - 1) > 1e-9]), 1e-3)
    K1 = 16
    zs1 = 1.0 + r1 * np.exp(2j * np.pi * np.arange(K1) / K1)
    numer_vals = np.array([char.cramer_basis(z, False) for z in zs1])
    numer_d1 = (np.fft.fft(numer_vals, axis=0) / K1)[1] / r1      # (m, nunk)
    g_vals = np.array([np.linalg.det(char.service_matrix(z)) for z in zs1])
    g_d1 = (np.fft.fft(g_vals) / K1)[1] / r1
    ones = np.ones(m)
    norm_row = np.empty(nunk)
    for a in range(nunk):
        vac_mass = sum((char.xi_maps[k][a] + eps * char.gamma_maps[k][a]) @ ones for k in range(h))
        norm_row[a] = (numer_d1[:, a].sum() + g_d1 * vac_mass).real

    sols, conds, resids = [], [], []
    for j in range(m):
        rows = rows_by_j[j] + [norm_row]
        A = np.array(rows)
        b = np.zeros(len(rows))
        b[-1] = g_d1.real
        if A.shape != (nunk, nunk):
            raise SolverError(f"boundary system is {A.shape}, expected {(nunk, nunk)}")
        scale = np.abs(A).max(axis=1)
        scale[scale == 0] = 1.0
        A_eq = A / scale[:, None]
        b_eq = b / scale
        cond = float(np.linalg.cond(A_eq))
        if cond > opts.cond_limit:
            raise SolverError(
                f"boundary system condition {cond:.3e} exceeds {opts.cond_limit:.0e}; roots: "
                + ", ".join(f"{r.value:.6f}(x{r.multiplicity})" for r in char.roots)
            )
        x = np.linalg.solve(A_eq, b_eq)
        sols.append(x)
        conds.append(cond)
        resids.append(float(np.abs(A_eq @ x - b_eq).max()))
        if m == 1:
            break

    agreement = 0.0
    if len(sols) > 1:
        agreement = float(np.abs(sols[0] - sols[1]).max() / max(np.abs(sols[0]).max(), 1e-300))
        if agreement > opts.component_agreement_tol:
            raise SolverError(
                f"Cramer components disagree by {agreement:.2e} "
                f"(tolerance {opts.component_agreement_tol:.0e}); root clustering suspect"
            )

    x = sols[0]
    if x.min() < -NEG_CLAMP_EMBEDDED:
        raise SolverError(f"boundary solution has negative entries (min {x.min():.3e})")
    if x.min() < 0:
        log.warning("clamping tiny negative boundary entries (min %.3e)", x.min())
        x = np.clip(x, 0.0, None)
    xi_plus = x.reshape(H, m)
    gamma_small = char.gamma_at(xi_plus)[:h]
    return BoundaryUnknowns(xi_plus, gamma_small, max(conds), max(resids), agreement)


# -- full-batch column tail: contour coefficient extraction --

class TailSeries:
    """Power-series coefficients of the full-batch generating function.

    The generating function is analytic on the closed unit disk once the
    boundary conditions hold (its only singularities are the outside
    characteristic zeros and the kernel poles), and it is evaluated to machine
    accuracy by small linear solves.  Its coefficients therefore come from one
    discrete Cauchy contour just inside the unit circle, giving uniform
    absolute accuracy for every index at once; the outside poles are needed
    only to pick the truncation level and the geometric tail rate.  The
    contour radius is tied to the truncation level so that both the rho^-n
    amplification and the FFT aliasing stay harmless, and it is nudged to keep
    clearance from characteristic roots close to the contour.
    """

    def __init__(self, func, dim: int, n_coeffs: int, avoid: list):
        self.func = func
        self.dim = dim
        N = n_coeffs
        rho = 1.0 - 8.0 / max(N, 100)
        rho = min(max(rho, 0.95), 0.999)
        moduli = [abs(v) for v in avoid]
        for _ in range(24):
            if min((abs(mu - rho) for mu in moduli), default=1.0) > 5e-4:
                break
            rho -= 1.2e-3
        K = int(1.6 * N) + 512
        zs = rho * np.exp(2j * np.pi * np.arange(K) / K)
        vals = np.array([func(z) for z in zs])
        coef = np.fft.fft(vals, axis=0)[: N + 1] / K
        coef = coef / (rho ** np.arange(N + 1))[:, None]
        self.rho = rho
        self.leakage = float(np.abs(coef.imag).max())
        self.seq = coef.real

    def evaluate(self, z: complex) -> np.ndarray:
        zp = z ** np.arange(self.seq.shape[0])
        return zp @ self.seq

    def verify(self, probes, rtol: float) -> float:
        worst = 0.0
        for z in probes:
            ref = self.func(z)
            err = float(np.abs(self.evaluate(z) - ref).max() / max(np.abs(ref).max(), 1e-300))
            worst = max(worst, err)
        if worst > rtol:
            raise SolverError(f"tail reconstruction off by {worst:.2e} (tol {rtol:.0e})")
        return worst


def service_joint(char: Characteristic, unknowns: BoundaryUnknowns,
                  diagnostics: SolverDiagnostics | None = None) -> EmbeddedDistributions:
    """Joint embedded law over (queue, batch size) and (queue, vacation type).

    Batch sizes below H convolve the boundary vectors with the service-count
    coefficients; the full-batch column's coefficients come from a Cauchy
    contour of its generating function just inside the unit circle, truncated
    where the dominant outside pole leaves less than the residual target.
    """
    opts = char.options
    m, h, H, eps = char.m, char.h, char.H, char.eps
    xi_plus = unknowns.xi_plus
    gamma = char.gamma_at(xi_plus)

    def pounds(z):
        return char.cramer_at(z, xi_plus, gamma, full_batch=True)

    # outside poles: characteristic zeros plus kernel denominators; they fix
    # the truncation level and the geometric tail rate
    pole_candidates = _cluster(
        [(r.value, r.multiplicity) for r in char.roots.outside()] + char.kernel_poles,
        opts.cluster_tol * 2,
    )
    r_dom = 1.0 / min(abs(b) for b, _, _ in pole_candidates)

    # consistency: the full-batch numerator must vanish at the closed-disk roots
    worst_div = 0.0
    scale = max(np.abs(char.cramer_numerator(0.5, xi_plus, gamma, True)).max(), 1e-300)
    for root in char.boundary_roots + [char.root_one]:
        v = np.abs(char.cramer_numerator(root.value, xi_plus, gamma, True)).max()
        worst_div = max(worst_div, v / scale)
    if worst_div > 1e-6:
        raise SolverError(
            f"full-batch numerator does not vanish at closed-disk roots "
            f"(relative residual {worst_div:.2e}); boundary solve inconsistent"
        )

    if opts.truncation is not None:
        N = int(opts.truncation)
    else:
        N = int(np.ceil(np.log(opts.residual_target) / np.log(r_dom))) + 60
        N = min(max(N, 50), opts.truncation_cap)
    NE = N + H

    avoid = [r.value for r in char.roots.closed_disk()]
    tail = TailSeries(pounds, m, NE, avoid)

    rng = np.random.default_rng(20240811)
    probes = 0.9 * np.sqrt(rng.uniform(0.2, 1.0, 20)) * np.exp(2j * np.pi * rng.uniform(size=20))
    recon = tail.verify(probes, opts.reconstruction_tol)

    seq_H, leak = tail.seq, tail.leakage
    if seq_H.min() < -NEG_CLAMP_EMBEDDED:
        raise SolverError(f"negative full-batch probabilities (min {seq_H.min():.3e})")
    seq_H = np.clip(seq_H, 0.0, None)

    xi_joint = np.zeros((NE + 1, H - h + 1, m))
    if h < H:
        dorm_inflow = (1 - eps) * sum(gamma[n] @ char.Dt_pows[h - n] for n in range(h))
        for r in range(h, H):
            co = char.service_kernels[r].coefficients(NE)
            src = gamma[r] + xi_plus[r]
            if r == h:
                src = src + dorm_inflow
            xi_joint[:, r - h, :] = np.einsum("i,lij->lj", src, co.matrices)
    xi_joint[:, H - h, :] = seq_H

    gamma_joint, gamma_small, _ = vacation_termination(char.model, xi_plus[:h], NE)

    total = float(xi_joint.sum() + gamma_joint.sum())
    resid = abs(1.0 - total)
    if diagnostics is not None:
        diagnostics.poles = [(b, q) for b, q, _ in pole_candidates]
        diagnostics.reconstruction_error = recon
        diagnostics.imag_leakage = leak
        diagnostics.embedded_total_error = resid
        diagnostics.n_trunc = N
        marg = xi_joint.sum(axis=1) + 0.0
        diagnostics.marginal_consistency = float(
            np.abs(marg[:H] - xi_plus).max()
        ) if H <= NE else float("nan")
    if resid > 1e-8:
        log.warning("embedded law total mass off by %.3e (N_trunc=%d)", resid, N)
    return EmbeddedDistributions(xi_joint, gamma_joint, None, resid, N)


def sigma_and_E(model: QueueModel, embedded: EmbeddedDistributions) -> tuple[float, float, float]:
    """(sigma^{-1}, w_hat, E): embedded-epoch rate constant and cycle-time factors.

    Infinite sums over queue lengths beyond H use the closed form
    1 - (finite embedded mass up to H), never a truncated series.
    """
    h, H, eps = model.h, model.H, model.epsilon
    ones = np.ones(model.arrivals.m)
    xi_m = embedded.xi_plus_marginal
    ga_m = embedded.gamma_plus_marginal
    s = {r: model.services[r].mean for r in model.services}
    x = {k: model.vacations[k].mean for k in model.vacations}
    mass_to_H = float((xi_m[: H + 1].sum(axis=0) + ga_m[: H + 1].sum(axis=0)) @ ones)
    w_hat = s[H] * (1.0 - mass_to_H)
    for n in range(h, H + 1):
        w_hat += float((xi_m[n] + ga_m[n]) @ ones) * s[n]
    for n in range(h):
        w_hat += float(xi_m[n] @ ones) * x[n]
        w_hat += (1 - eps) * float(ga_m[n] @ ones) * s[h]
        w_hat += eps * float(ga_m[n] @ ones) * x[n]
    E = w_hat
    if eps == 0:
        C = np.asarray(model.arrivals.C)
        neg_C_inv = -np.linalg.inv(C)
        Dt_pows = [np.linalg.matrix_power(neg_C_inv @ np.asarray(model.arrivals.D), p)
                   for p in range(h + 1)]
        dorm = 0.0
        for n in range(h):
            for mm in range(n + 1):
                dorm += float(ga_m[mm] @ Dt_pows[n - mm] @ neg_C_inv @ ones)
        E = w_hat + dorm
        sigma_inv = (1.0 - dorm / E) / w_hat
    else:
        sigma_inv = 1.0 / w_hat
    return sigma_inv, w_hat, E


def arbitrary_epoch(model: QueueModel, embedded: EmbeddedDistributions,
                    E: float) -> ArbitraryDistributions:
    """Convert the embedded law to the time-stationary law.

    Starts from the level-zero balance relations, then runs the forward
    recursions in the queue length for every batch size and vacation type.
    Every recursion step keeps the structure of the underlying balance: the
    dormant inflow carries the (-C)^{-1} factor and the vacation recursion
    keeps its arrival factor D; grand-total normalization and the simulator
    both check these choices on every solved model.
    """
    h, H, eps = model.h, model.H, model.epsilon
    m = model.arrivals.m
    N = embedded.n_trunc
    C = np.asarray(model.arrivals.C)
    D = np.asarray(model.arrivals.D)
    neg_C_inv = -np.linalg.inv(C)
    xi_m = embedded.xi_plus_marginal
    ga_m = embedded.gamma_plus_marginal
    xj = embedded.xi_plus_joint
    gj = embedded.gamma_plus_joint

    R = None
    if eps == 0:
        R = np.zeros((h, m))
        prev = np.zeros(m)
        for n in range(h):
            R[n] = (prev @ D + ga_m[n] / E) @ neg_C_inv
            prev = R[n]

    xi = np.zeros((N + 1, H - h + 1, m))
    for r in range(h, H):
        ri = r - h
        start = (xi_m[r] + ga_m[r] - xj[0, ri]) / E
        if r == h and eps == 0:
            start = start + R[h - 1] @ D
        xi[0, ri] = start @ neg_C_inv
        for n in range(1, N + 1):
            xi[n, ri] = (xi[n - 1, ri] @ D - xj[n, ri] / E) @ neg_C_inv
    ri = H - h
    prev = np.zeros(m)
    for n in range(N + 1):
        forcing = (xi_m[n + H] + ga_m[n + H] - xj[n, ri]) / E
        if n == 0 and h == H and eps == 0:
            forcing = forcing + R[h - 1] @ D  # dormant inflow lands on the only column
        xi[n, ri] = (prev @ D + forcing) @ neg_C_inv
        prev = xi[n, ri]

    # vacation types: gamma(k,k) from the vacation-start balance, then forward in n
    ga = np.zeros((N + 1, h, m))
    for k in range(h):
        source = xi_m[k] + eps * ga_m[k]
        ga[k, k] = ((source - gj[k, k]) / E) @ neg_C_inv
        for n in range(k + 1, N + 1):
            ga[n, k] = (ga[n - 1, k] @ D - gj[n, k] / E) @ neg_C_inv

    worst = min(xi.min(), ga.min(), 0.0 if R is None else R.min())
    if worst < -NEG_CLAMP_ARBITRARY:
        raise SolverError(
            f"negative arbitrary-epoch entries (min {worst:.3e}); "
            "truncation too small or boundary solve ill-conditioned"
        )
    xi = np.clip(xi, 0.0, None)
    ga = np.clip(ga, 0.0, None)
    if R is not None:
        R = np.clip(R, 0.0, None)
    return ArbitraryDistributions(R, xi, ga, E, float("nan"))


def measures(model: QueueModel, arbitrary: ArbitraryDistributions,
             tail_ratio: float | None = None) -> PerformanceReport:
    """Marginals and scalar performance measures from the stationary law.

    A geometric tail correction from the dominant outside pole accounts for the
    mass beyond the truncation point (negligible at the default residual
    target, but kept so the truncation level never biases the moments).
    """
    h, H, eps = model.h, model.H, model.epsilon
    lam = model.arrivals.rate
    xi, ga, R = arbitrary.xi_joint, arbitrary.gamma_joint, arbitrary.R_dormant
    N = xi.shape[0] - 1
    Pq = xi.sum(axis=(1, 2)) + ga.sum(axis=(1, 2))
    if R is not None:
        Pq[:h] += R.sum(axis=1)
    ns = np.arange(N + 1)
    L_q = float(ns @ Pq)
    extra_mass = 0.0
    if tail_ratio is not None and 0 < tail_ratio < 1:
        r = tail_ratio
        pN = Pq[-1]
        extra_mass = pN * r / (1 - r)
        L_q += pN * (N * r / (1 - r) + r / (1 - r) ** 2)
    P_r = {r: float(xi[:, r - h].sum()) for r in range(h, H + 1)}
    P_busy = float(sum(P_r.values()))
    gk = {k: float(ga[:, k].sum()) for k in range(h)}
    P_vac = float(sum(gk.values()))
    P_dor = float(R.sum()) if R is not None else 0.0
    L_s = L_q + float(sum(r * P_r[r] for r in P_r))
    L_ser = float(sum(r * P_r[r] for r in P_r) / P_busy) if P_busy > 0 else float("nan")
    L_vac = float(sum(k * gk[k] for k in gk) / P_vac) if P_vac > 0 else float("nan")
    balance = abs(P_dor + P_busy + P_vac + extra_mass - 1.0)
    if balance > 1e-6:
        log.warning("mode probabilities differ from 1 by %.3e", balance)
    return PerformanceReport(
        L_q=L_q, L_s=L_s, W_q=L_q / lam, W_s=L_s / lam,
        L_ser=L_ser, L_vac=L_vac,
        P_dor=P_dor, P_busy=P_busy, P_vac=P_vac, P_idle=1.0 - P_busy,
        queue_length=Pq, server_content=P_r, vacation_type=gk,
    )


@dataclass(frozen=True)
class SolveResult:
    model: QueueModel
    boundary: BoundaryUnknowns
    embedded: EmbeddedDistributions
    arbitrary: ArbitraryDistributions
    report: PerformanceReport
    diagnostics: SolverDiagnostics
    characteristic: Characteristic

    def identity_error(self, points) -> float:
        """Max relative defect of Psi(z) (z^H I - A^(H)(z)) = rhs(z) from the arrays."""
        char = self.characteristic
        xi_m = self.embedded.xi_plus_marginal
        N = xi_m.shape[0] - 1
        xi_plus = self.boundary.xi_plus
        gamma = char.gamma_at(xi_plus)
        worst = 0.0
        for z in points:
            zpow = z ** np.arange(N + 1)
            psi = zpow @ xi_m
            lhs = psi @ char.service_matrix(z)
            rhs = char.rhs_at(z, xi_plus, gamma, full_batch=False)
            worst = max(worst, float(np.abs(lhs - rhs).max() / max(np.abs(rhs).max(), 1e-300)))
        return worst


def solve(model: QueueModel, options: SolverOptions | None = None) -> SolveResult:
    """Run the full pipeline and return every intermediate plus diagnostics."""
    opts = options or SolverOptions()
    diag = SolverDiagnostics()
    char = build_characteristic(model, opts)
    diag.roots = list(char.roots)
    unknowns = solve_boundary(char)
    diag.condition_number = unknowns.condition_number
    diag.boundary_residual = unknowns.residual
    diag.component_agreement = unknowns.component_agreement
    embedded = service_joint(char, unknowns, diag)
    sigma_inv, w_hat, E = sigma_and_E(model, embedded)
    embedded = replace(embedded, sigma_inverse=sigma_inv)
    arbitrary = arbitrary_epoch(model, embedded, E)
    arbitrary = replace(arbitrary, w_hat=w_hat)
    diag.arbitrary_total_error = abs(1.0 - arbitrary.total_mass())
    tail_ratio = None
    if diag.poles:
        tail_ratio = 1.0 / min(abs(b) for b, _ in diag.poles)
    report = measures(model, arbitrary, tail_ratio)
    return SolveResult(model, unknowns, embedded, arbitrary, report, diag, char)
