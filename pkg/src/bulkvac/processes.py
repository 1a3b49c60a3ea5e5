"""Model building blocks: Markovian arrival process, phase-type laws, queue model.

All types are immutable after construction (arrays are frozen), so instances
can be shared freely between threads and between the solver and the simulator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelValidationError, StabilityError

_GEN_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MarkovianArrivalProcess:
    """Arrival stream driven by a continuous-time Markov chain.

    C holds the transition rates without an arrival (negative diagonal),
    D the rates with an arrival; C + D is the phase-process generator.
    """

    C: np.ndarray
    D: np.ndarray
    m: int = field(init=False)
    stationary: np.ndarray = field(init=False)
    rate: float = field(init=False)

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        D = np.asarray(self.D, dtype=float)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ModelValidationError("C must be square")
        if D.shape != C.shape:
            raise ModelValidationError("C and D must have equal shape")
        m = C.shape[0]
        scale = max(np.abs(C).max(), np.abs(D).max(), 1.0)
        off = C - np.diag(np.diag(C))
        if off.min() < -_GEN_TOL * scale:
            raise ModelValidationError("off-diagonal entries of C must be nonnegative")
        if m > 1 and np.diag(C).max() >= 0:
            raise ModelValidationError("diagonal entries of C must be negative")
        if m == 1 and C[0, 0] >= 0:
            raise ModelValidationError("diagonal entries of C must be negative")
        if D.min() < -_GEN_TOL * scale:
            raise ModelValidationError("entries of D must be nonnegative")
        rows = (C + D).sum(axis=1)
        if np.abs(rows).max() > _GEN_TOL * scale:
            raise ModelValidationError(
                f"C+D must have zero row sums (max deviation {np.abs(rows).max():.3e})"
            )
        # stationary vector from the augmented system [ (C+D)^T ; 1...1 ] x = [0;1]
        A = np.vstack([(C + D).T, np.ones(m)])
        b = np.zeros(m + 1)
        b[-1] = 1.0
        sv = np.linalg.svd(A, compute_uv=False)
        if sv[-1] < 1e-10 * sv[0]:
            raise ModelValidationError("C+D is reducible: no unique stationary vector")
        pi, *_ = np.linalg.lstsq(A, b, rcond=None)
        if pi.min() < -1e-9:
            raise ModelValidationError("stationary vector has negative entries (reducible chain?)")
        pi = np.clip(pi, 0.0, None)
        pi = pi / pi.sum()
        lam = float(pi @ D.sum(axis=1))
        if lam <= 0:
            raise ModelValidationError("arrival rate is zero: D contributes no arrivals")
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "D", _frozen(D))
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "stationary", _frozen(pi))
        object.__setattr__(self, "rate", lam)

    def scaled(self, factor: float) -> "MarkovianArrivalProcess":
        """Time-scaled copy (lC, lD); the arrival rate scales by the same factor."""
        return MarkovianArrivalProcess(factor * np.asarray(self.C), factor * np.asarray(self.D))


def validate_map(C, D) -> MarkovianArrivalProcess:
    """Validate a (C, D) pair and return the process with stationary vector and rate."""
    return MarkovianArrivalProcess(np.asarray(C, dtype=float), np.asarray(D, dtype=float))


@dataclass(frozen=True)
class PhaseTypeDistribution:
    """Absorption time of a CTMC with start vector alpha and sub-generator T."""

    alpha: np.ndarray
    T: np.ndarray
    n: int = field(init=False)
    mean: float = field(init=False)

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        T = np.asarray(self.T, dtype=float)
        if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] != alpha.size:
            raise ModelValidationError("alpha and T have inconsistent shapes")
        n = alpha.size
        scale = max(np.abs(T).max(), 1.0)
        if alpha.min() < -1e-12 or alpha.sum() > 1 + 1e-9:
            raise ModelValidationError("alpha must be a (sub)probability vector")
        if np.diag(T).max() >= 0:
            raise ModelValidationError("T must have negative diagonal")
        if (T - np.diag(np.diag(T))).min() < -_GEN_TOL * scale:
            raise ModelValidationError("T must have nonnegative off-diagonal entries")
        if T.sum(axis=1).max() > _GEN_TOL * scale:
            raise ModelValidationError("T row sums must be nonpositive")
        try:
            mean = float(alpha @ np.linalg.solve(-T, np.ones(n)))
        except np.linalg.LinAlgError:
            raise ModelValidationError("T is singular") from None
        if not np.isfinite(mean) or mean <= 0:
            raise ModelValidationError("phase-type mean must be positive and finite")
        object.__setattr__(self, "alpha", _frozen(alpha))
        object.__setattr__(self, "T", _frozen(T))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "mean", mean)

    @property
    def exit_rates(self) -> np.ndarray:
        """Absorption rate vector t0 = -T e."""
        return -np.asarray(self.T) @ np.ones(self.n)

    def lst(self, theta: complex) -> complex:
        """Laplace-Stieltjes transform alpha (theta I - T)^{-1} t0 (+ atom at zero)."""
        n = self.n
        val = self.alpha @ np.linalg.solve(theta * np.eye(n) - self.T, self.exit_rates)
        return complex(val + (1.0 - self.alpha.sum()))


def erlang(phases: int, rate: float) -> PhaseTypeDistribution:
    """Erlang law with the given number of phases and overall rate (mean = 1/rate).

    Each phase runs at phases*rate so that the total mean is 1/rate.
    """
    if phases < 1 or rate <= 0:
        raise ModelValidationError("erlang requires phases >= 1 and rate > 0")
    per = phases * rate
    alpha = np.zeros(phases)
    alpha[0] = 1.0
    T = np.diag([-per] * phases) + np.diag([per] * (phases - 1), 1)
    return PhaseTypeDistribution(alpha, T)


def exponential(rate: float) -> PhaseTypeDistribution:
    return erlang(1, rate)


@dataclass(frozen=True)
class QueueModel:
    """Batch-service queue under the (h, H) rule with queue-size-dependent vacations.

    services maps batch size r in [h, H] to the service law of an r-batch;
    vacations maps queue size k in [0, h-1] to the vacation law started when a
    service completion leaves k waiting. policy is 'sv' or 'mv'.
    """

    arrivals: MarkovianArrivalProcess
    h: int
    H: int
    services: dict
    vacations: dict
    policy: str = "sv"

    def __post_init__(self):
        if not (1 <= self.h <= self.H):
            raise ModelValidationError("thresholds must satisfy 1 <= h <= H")
        if self.policy not in ("sv", "mv"):
            raise ModelValidationError("policy must be 'sv' or 'mv'")
        if sorted(self.services) != list(range(self.h, self.H + 1)):
            raise ModelValidationError(
                f"services must be keyed by every batch size in [{self.h}, {self.H}]"
            )
        if sorted(self.vacations) != list(range(0, self.h)):
            raise ModelValidationError(
                f"vacations must be keyed by every queue size in [0, {self.h - 1}]"
            )
        object.__setattr__(self, "services", dict(self.services))
        object.__setattr__(self, "vacations", dict(self.vacations))

    @property
    def epsilon(self) -> int:
        """Vacation policy indicator: 1 for multiple vacations, 0 for single."""
        return 1 if self.policy == "mv" else 0

    @property
    def m(self) -> int:
        return self.arrivals.m

    @property
    def traffic_intensity(self) -> float:
        """rho = lambda * s_H / H; stability requires rho < 1."""
        return self.arrivals.rate * self.services[self.H].mean / self.H

    def require_stable(self):
        rho = self.traffic_intensity
        if rho >= 1.0:
            raise StabilityError(f"traffic intensity {rho:.4f} >= 1; model is unstable")

    def with_policy(self, policy: str) -> "QueueModel":
        return QueueModel(self.arrivals, self.h, self.H, self.services, self.vacations, policy)
