"""Arrival-counting kernels for phase-type service and vacation times.

For a phase-type law (alpha, T) and a MAP (C, D), the kernel at z is

    K(z) = (alpha x I) (-(T (+) (C + D z)))^{-1} (t0 x I),

the matrix generating function of the number of arrivals during one service or
vacation, where (+) is the Kronecker sum and t0 = -T e.  Coefficient matrices
come from the resolvent series K_l = (alpha x I) U^l W (t0 x I) with
W = (-(T (+) C))^{-1} and U = W (I x D).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SolverError
from .processes import MarkovianArrivalProcess, PhaseTypeDistribution

_EIG_CLUSTER_REL = 1e-4


@dataclass(frozen=True)
class KernelCoefficients:
    """Truncated arrival-count coefficient matrices with their residual mass.

    matrices[l] is the (entrywise nonnegative) m-by-m matrix of the joint
    probability of l arrivals and the corresponding phase change; residual
    bounds the stochastic mass missing beyond the truncation.
    """

    matrices: np.ndarray
    residual: float

    def __len__(self):
        return len(self.matrices)

    def __getitem__(self, l):
        return self.matrices[l]

    def partial_sum(self) -> np.ndarray:
        return self.matrices.sum(axis=0)


class Kernel:
    """Arrival-counting kernel of one phase-type law against one MAP."""

    def __init__(self, arrivals: MarkovianArrivalProcess, law: PhaseTypeDistribution):
        self.arrivals = arrivals
        self.law = law
        m, n = arrivals.m, law.n
        self.m, self.n = m, n
        Im = np.eye(m)
        self._alpha_kron = np.kron(law.alpha[None, :], Im)
        self._t0_kron = np.kron(law.exit_rates[:, None], Im)
        self._TkI = np.kron(law.T, Im)
        self._IkC = np.kron(np.eye(n), arrivals.C)
        self._IkD = np.kron(np.eye(n), arrivals.D)
        self._atom = 1.0 - float(law.alpha.sum())

    def eval(self, z: complex) -> np.ndarray:
        """Kernel matrix at a complex point; exact rational function of z."""
        K = -(self._TkI + self._IkC + z * self._IkD)
        try:
            lu, piv = scipy.linalg.lu_factor(K, check_finite=False)
        except np.linalg.LinAlgError:
            raise SolverError(f"singular Kronecker-sum system at z={z}") from None
        d = np.abs(np.diag(lu))
        if d.min() <= 1e-9 * d.max():
            raise SolverError(f"singular Kronecker-sum system at z={z}")
        X = scipy.linalg.lu_solve((lu, piv), self._t0_kron, check_finite=False)
        out = self._alpha_kron @ X
        if self._atom:
            out = out + self._atom * np.eye(self.m)
        return out

    def eval_deriv(self, z: complex) -> np.ndarray:
        """d/dz of eval at z, via K^{-1} (I x D) K^{-1}."""
        K = -(self._TkI + self._IkC + z * self._IkD)
        X = np.linalg.solve(K, self._t0_kron)
        Y = np.linalg.solve(K, self._IkD @ X)
        return self._alpha_kron @ Y

    def coefficients(self, L_trunc: int, residual_target: float | None = None) -> KernelCoefficients:
        """First L_trunc+1 coefficient matrices and the remaining stochastic mass.

        When residual_target is given and cannot be met within L_trunc terms,
        raises SolverError reporting the achieved residual.
        """
        if L_trunc < 0:
            raise ValueError("L_trunc must be >= 0")
        m = self.m
        W = np.linalg.inv(-(self._TkI + self._IkC))
        U = W @ self._IkD
        out = np.empty((L_trunc + 1, m, m))
        v = self._alpha_kron.copy()
        for l in range(L_trunc + 1):
            out[l] = (v @ W) @ self._t0_kron
            v = v @ U
        if self._atom:
            out[0] += self._atom * np.eye(m)
        residual = float(np.max(1.0 - out.sum(axis=0) @ np.ones(m)))
        residual = max(residual, 0.0)
        if residual_target is not None and residual > residual_target:
            raise SolverError(
                f"kernel series truncated at {L_trunc} reaches residual {residual:.3e} "
                f"(target {residual_target:.3e})"
            )
        return KernelCoefficients(out, residual)

    def denominator_roots(self) -> list[tuple[complex, int]]:
        """Poles of the kernel, with structural multiplicity.

        det(-(T (+) (C+Dz))) factors over the eigenvalues lambda of T into
        det(lambda I + C + D z); repeated eigenvalues repeat the factor, so a
        clustered eigenvalue yields its cluster size as the root multiplicity.
        """
        lams = np.linalg.eigvals(np.asarray(self.law.T))
        scale = max(1.0, float(np.abs(lams).max()))
        used = np.zeros(len(lams), bool)
        roots: list[tuple[complex, int]] = []
        m = self.m
        C, D = np.asarray(self.arrivals.C), np.asarray(self.arrivals.D)
        for i in np.argsort(lams.real):
            if used[i]:
                continue
            grp = [i]
            used[i] = True
            for j in range(len(lams)):
                if not used[j] and abs(lams[j] - lams[i]) < _EIG_CLUSTER_REL * scale:
                    grp.append(j)
                    used[j] = True
            lam = complex(np.mean(lams[grp]))
            if abs(lam.imag) < _EIG_CLUSTER_REL * scale:
                lam = complex(lam.real, 0.0)
            # det(lam I + C + D z) is a degree <= m polynomial in z
            coef = _det_affine_poly(lam * np.eye(m) + C, D)
            if len(coef) > 1:
                for r in np.roots(coef[::-1]):
                    roots.append((complex(r), len(grp)))
        return roots


def _det_affine_poly(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Ascending coefficients of det(A + z B) by interpolation on a circle."""
    m = A.shape[0]
    N = m + 1
    nodes = 2.0 * np.exp(2j * np.pi * np.arange(N) / N)
    vals = np.array([np.linalg.det(A + z * B) for z in nodes])
    coef = np.fft.fft(vals) / N / (2.0 ** np.arange(N))
    mx = np.abs(coef).max()
    if mx == 0:
        return coef[:1]
    deg = max(i for i in range(N) if np.abs(coef[i]) > 1e-10 * mx)
    return coef[: deg + 1]


def kernel_eval(arrivals: MarkovianArrivalProcess, law: PhaseTypeDistribution, z: complex) -> np.ndarray:
    """One-shot kernel evaluation; build a Kernel for repeated use."""
    return Kernel(arrivals, law).eval(z)


def kernel_coefficients(
    arrivals: MarkovianArrivalProcess,
    law: PhaseTypeDistribution,
    L_trunc: int,
    residual_target: float | None = None,
) -> KernelCoefficients:
    """One-shot coefficient computation; build a Kernel for repeated use."""
    return Kernel(arrivals, law).coefficients(L_trunc, residual_target)
