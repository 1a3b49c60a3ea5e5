"""Event-driven simulation of the batch-service vacation queue.

The simulator follows the service discipline exactly: after a service
completion with l >= h waiting it serves min(l, H); with l < h it starts a
vacation whose law is indexed by l.  At a vacation end with fewer than h
waiting, a single-vacation server goes dormant (and serves a batch of exactly
h the instant the h-th customer arrives) while a multiple-vacation server
starts a fresh vacation indexed by the current queue.  Phase-type times are
simulated by explicit phase jumps so phase statistics can be checked against
the model; every transition (arrival-chain move, phase jump, absorption)
counts as one event toward the budget.

Embedded counts (at service completions and vacation terminations) and
time-weighted occupancies are collected separately: the arrival process is
not Poisson, so the two laws differ and each is compared to its own analytic
counterpart.  Standard errors come from batch means over the post-warmup
stretch.
"""
from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass

import numpy as np

from .errors import SimulationError
from .processes import QueueModel

log = logging.getLogger("bulkvac.simulate")

DORMANT, BUSY, VACATION = 0, 1, 2


@dataclass(frozen=True)
class SimEstimates:
    """Empirical embedded and time-average laws plus measure estimates."""

    seed: int
    events: int
    warmup_fraction: float
    duration: float
    arrivals: int
    embedded_events: int
    embedded_service: np.ndarray     # (n_rows, H-h+1, m) counts
    embedded_vacation: np.ndarray    # (n_rows, h, m) counts
    time_service: np.ndarray         # (n_rows, H-h+1, m) time-weighted
    time_vacation: np.ndarray        # (n_rows, h, m)
    time_dormant: np.ndarray         # (h, m)
    measures: dict                   # name -> (estimate, standard error)
    se_inflation: float              # autocorrelation inflation for per-cell errors

    @property
    def embedded_service_law(self) -> np.ndarray:
        return self.embedded_service / max(self.embedded_events, 1)

    @property
    def embedded_vacation_law(self) -> np.ndarray:
        return self.embedded_vacation / max(self.embedded_events, 1)

    @property
    def time_service_law(self) -> np.ndarray:
        return self.time_service / self.duration

    @property
    def time_vacation_law(self) -> np.ndarray:
        return self.time_vacation / self.duration

    @property
    def time_dormant_law(self) -> np.ndarray:
        return self.time_dormant / self.duration

    def cell_se(self, p_hat: float, embedded: bool) -> float:
        """Per-cell standard error: iid binomial scaled by the inflation factor."""
        n = self.embedded_events if embedded else self.events
        return self.se_inflation * math.sqrt(max(p_hat * (1 - p_hat), 0.0) / max(n, 1))


def _ph_rows(law):
    """Per-phase (total_rate, [(cumulative rate, target phase or -1=absorb)])."""
    T = np.asarray(law.T)
    t0 = law.exit_rates
    rows = []
    for p in range(law.n):
        segs = []
        acc = 0.0
        for q in range(law.n):
            if q != p and T[p, q] > 0:
                acc += float(T[p, q])
                segs.append((acc, q))
        acc += float(t0[p])
        segs.append((acc, -1))
        rows.append((float(-T[p, p]), segs))
    return rows


def _alpha_cum(law):
    alpha = np.asarray(law.alpha)
    segs = []
    acc = 0.0
    for p in range(law.n):
        if alpha[p] > 0:
            acc += float(alpha[p])
            segs.append((acc, p))
    return segs, float(alpha.sum())


class _Run:
    """Mutable simulation state; split out so the event loop stays readable."""

    def __init__(self, model: QueueModel, rng: random.Random, queue_guard: int):
        self.model = model
        self.rng = rng
        self.queue_guard = queue_guard
        self.h, self.H, self.m = model.h, model.H, model.arrivals.m
        self.mv = model.policy == "mv"
        C = np.asarray(model.arrivals.C)
        D = np.asarray(model.arrivals.D)
        self.map_rows = []
        for i in range(self.m):
            segs = []
            acc = 0.0
            for j in range(self.m):
                if j != i and C[i, j] > 0:
                    acc += float(C[i, j])
                    segs.append((acc, j, 0))
            for j in range(self.m):
                if D[i, j] > 0:
                    acc += float(D[i, j])
                    segs.append((acc, j, 1))
            self.map_rows.append((float(-C[i, i]), segs))
        self.svc_rows = {r: _ph_rows(model.services[r]) for r in model.services}
        self.vac_rows = {k: _ph_rows(model.vacations[k]) for k in model.vacations}
        self.svc_alpha = {r: _alpha_cum(model.services[r]) for r in model.services}
        self.vac_alpha = {k: _alpha_cum(model.vacations[k]) for k in model.vacations}

        n_batch = self.H - self.h + 1
        self.rows = 4096
        self.emb_svc = [[0] * (n_batch * self.m) for _ in range(self.rows)]
        self.emb_vac = [[0] * (self.h * self.m) for _ in range(self.rows)]
        self.ta_svc = [[0.0] * (n_batch * self.m) for _ in range(self.rows)]
        self.ta_vac = [[0.0] * (self.h * self.m) for _ in range(self.rows)]
        self.ta_dorm = [[0.0] * self.m for _ in range(self.h)]

        self.q = 0
        self.phase = 0
        self.mode = VACATION
        self.sub = 0
        self.ph = 0
        self.recording = False
        self.emb_count = 0
        self.arrivals_seen = 0
        self.start_vacation(0)

    def grow(self, upto):
        n_batch = self.H - self.h + 1
        while self.rows <= upto:
            self.emb_svc.extend([0] * (n_batch * self.m) for _ in range(self.rows))
            self.emb_vac.extend([0] * (self.h * self.m) for _ in range(self.rows))
            self.ta_svc.extend([0.0] * (n_batch * self.m) for _ in range(self.rows))
            self.ta_vac.extend([0.0] * (self.h * self.m) for _ in range(self.rows))
            self.rows *= 2

    def record_service(self, size):
        if self.recording:
            self.emb_count += 1
            if self.q >= self.rows:
                self.grow(self.q)
            self.emb_svc[self.q][(size - self.h) * self.m + self.phase] += 1

    def record_vacation(self, k):
        if self.recording:
            self.emb_count += 1
            if self.q >= self.rows:
                self.grow(self.q)
            self.emb_vac[self.q][k * self.m + self.phase] += 1

    def _draw_start(self, segs, tot):
        u = self.rng.random() * tot
        for cum, p in segs:
            if u <= cum:
                return p
        return segs[-1][1]

    def start_service(self, size):
        """Begin serving a batch; resolves zero-length services recursively."""
        while True:
            segs, tot = self.svc_alpha[size]
            if tot >= 1.0 or self.rng.random() < tot:
                self.mode, self.sub = BUSY, size
                self.ph = self._draw_start(segs, tot)
                return
            # instantaneous service: completion right away
            self.record_service(size)
            if self.q >= self.h:
                size = min(self.q, self.H)
                self.q -= size
                continue
            self.start_vacation(self.q)
            return

    def start_vacation(self, k):
        while True:
            segs, tot = self.vac_alpha[k]
            if tot >= 1.0 or self.rng.random() < tot:
                self.mode, self.sub = VACATION, k
                self.ph = self._draw_start(segs, tot)
                return
            # instantaneous vacation: termination right away
            self.record_vacation(k)
            if self.q >= self.h:
                size = min(self.q, self.H)
                self.q -= size
                self.start_service(size)
                return
            if self.mv:
                k = self.q
                continue
            self.mode = DORMANT
            return

    def service_completed(self):
        self.record_service(self.sub)
        if self.q >= self.h:
            size = min(self.q, self.H)
            self.q -= size
            self.start_service(size)
        else:
            self.start_vacation(self.q)

    def vacation_ended(self):
        self.record_vacation(self.sub)
        if self.q >= self.h:
            size = min(self.q, self.H)
            self.q -= size
            self.start_service(size)
        elif self.mv:
            self.start_vacation(self.q)
        else:
            self.mode = DORMANT

    def arrival(self):
        self.q += 1
        if self.q > self.queue_guard:
            raise SimulationError(f"queue exceeded guard {self.queue_guard}; model unstable?")
        self.arrivals_seen += 1
        if self.mode == DORMANT and self.q >= self.h:
            self.q -= self.h
            self.start_service(self.h)


def simulate(model: QueueModel, seed: int, total_events: int,
             warmup_fraction: float = 0.2, batches: int = 32,
             queue_guard: int = 10 ** 6) -> SimEstimates:
    """Run one replication and return empirical laws with batch-means errors."""
    if total_events < 10 ** 3:
        raise SimulationError("total_events must be at least 10^3")
    if total_events < 10 ** 4:
        log.warning("only %d events: estimates will be low precision", total_events)
    if not (0 <= warmup_fraction < 1):
        raise SimulationError("warmup_fraction must lie in [0, 1)")
    st = _Run(model, random.Random(seed), queue_guard)
    m, h = st.m, st.h

    warmup = int(total_events * warmup_fraction)
    measured = total_events - warmup
    batch_size = max(measured // batches, 1)
    bt: list[dict] = []
    rkeys = [f"r{r}" for r in range(model.h, model.H + 1)]
    kkeys = [f"k{k}" for k in range(model.h)]
    acc = dict(t=0.0, qdt=0.0, sdt=0.0, busy=0.0, vac=0.0, dorm=0.0, arr=0.0, rdt=0.0, kdt=0.0)
    for key in rkeys + kkeys:
        acc[key] = 0.0

    exp = st.rng.expovariate
    u01 = st.rng.random
    map_rows = st.map_rows

    for step in range(total_events):
        if step == warmup:
            st.recording = True
        phase = st.phase
        mode = st.mode
        rate = map_rows[phase][0]
        if mode == BUSY:
            rate += st.svc_rows[st.sub][st.ph][0]
        elif mode == VACATION:
            rate += st.vac_rows[st.sub][st.ph][0]
        dt = exp(rate)
        if st.recording:
            q = st.q
            if q >= st.rows:
                st.grow(q)
            acc["t"] += dt
            acc["qdt"] += q * dt
            if mode == BUSY:
                st.ta_svc[q][(st.sub - h) * m + phase] += dt
                acc["busy"] += dt
                acc["sdt"] += (q + st.sub) * dt
                acc["rdt"] += st.sub * dt
                acc[rkeys[st.sub - h]] += dt
            elif mode == VACATION:
                st.ta_vac[q][st.sub * m + phase] += dt
                acc["vac"] += dt
                acc["sdt"] += q * dt
                acc["kdt"] += st.sub * dt
                acc[kkeys[st.sub]] += dt
            else:
                st.ta_dorm[q][phase] += dt
                acc["dorm"] += dt
                acc["sdt"] += q * dt

        u = u01() * rate
        map_rate = map_rows[phase][0]
        if u <= map_rate:
            for cum, j, is_arrival in map_rows[phase][1]:
                if u <= cum:
                    st.phase = j
                    if is_arrival:
                        if st.recording:
                            acc["arr"] += 1.0
                        st.arrival()
                    break
        else:
            u2 = u - map_rate
            ph_row = (st.svc_rows[st.sub] if mode == BUSY else st.vac_rows[st.sub])[st.ph]
            target = -1
            for cum, t in ph_row[1]:
                if u2 <= cum:
                    target = t
                    break
            if target >= 0:
                st.ph = target
            elif mode == BUSY:
                st.service_completed()
            else:
                st.vacation_ended()

        if st.recording and (step - warmup + 1) % batch_size == 0 and len(bt) < batches:
            bt.append(dict(acc))
            for key in acc:
                acc[key] = 0.0

    if len(bt) < 2:
        raise SimulationError("too few batches for standard errors")

    duration = sum(b["t"] for b in bt)

    def batch_stat(num_key):
        vals = np.array([b[num_key] / b["t"] for b in bt])
        return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))

    lam = model.arrivals.rate
    L_q, L_q_se = batch_stat("qdt")
    L_s, L_s_se = batch_stat("sdt")
    P_busy, P_busy_se = batch_stat("busy")
    P_vac, P_vac_se = batch_stat("vac")
    P_dor, P_dor_se = batch_stat("dorm")
    rate_est, rate_se = batch_stat("arr")
    r_mean, r_mean_se = batch_stat("rdt")
    k_mean, k_mean_se = batch_stat("kdt")

    def ratio_se(num, num_se, den, den_se):
        if den <= 0:
            return float("nan"), float("nan")
        val = num / den
        se = abs(val) * math.hypot(num_se / max(abs(num), 1e-300), den_se / den)
        return val, se

    L_ser, L_ser_se = ratio_se(r_mean, r_mean_se, P_busy, P_busy_se)
    L_vac, L_vac_se = ratio_se(k_mean, k_mean_se, P_vac, P_vac_se)
    measures_out = {
        "L_q": (L_q, L_q_se),
        "L_s": (L_s, L_s_se),
        "W_q": (L_q / lam, L_q_se / lam),
        "W_s": (L_s / lam, L_s_se / lam),
        "L_ser": (L_ser, L_ser_se),
        "L_vac": (L_vac, L_vac_se),
        "P_dor": (P_dor, P_dor_se),
        "P_busy": (P_busy, P_busy_se),
        "P_vac": (P_vac, P_vac_se),
        "P_idle": (1.0 - P_busy, P_busy_se),
        "lambda": (rate_est, rate_se),
    }
    for r in range(model.h, model.H + 1):
        measures_out[f"P_ser[{r}]"] = batch_stat(f"r{r}")
    for k in range(model.h):
        measures_out[f"P_vac[{k}]"] = batch_stat(f"k{k}")

    # per-cell errors are iid binomial inflated by the correlation seen on P_busy
    infl = 1.0
    if 0 < P_busy < 1 and P_busy_se > 0:
        n_eff = P_busy * (1 - P_busy) / P_busy_se ** 2
        infl = max(1.0, math.sqrt(measured / max(n_eff, 1.0)))

    used = 1
    for q in range(st.rows - 1, -1, -1):
        if any(st.emb_svc[q]) or any(st.emb_vac[q]) or any(st.ta_svc[q]) or any(st.ta_vac[q]):
            used = q + 1
            break
    n_batch = st.H - h + 1
    return SimEstimates(
        seed=seed,
        events=measured,
        warmup_fraction=warmup_fraction,
        duration=duration,
        arrivals=st.arrivals_seen,
        embedded_events=st.emb_count,
        embedded_service=np.array(st.emb_svc[:used], dtype=float).reshape(used, n_batch, m),
        embedded_vacation=np.array(st.emb_vac[:used], dtype=float).reshape(used, h, m),
        time_service=np.array(st.ta_svc[:used]).reshape(used, n_batch, m),
        time_vacation=np.array(st.ta_vac[:used]).reshape(used, h, m),
        time_dormant=np.array(st.ta_dorm),
        measures=measures_out,
        se_inflation=infl,
    )


def effective_rate_check(model: QueueModel, estimates: SimEstimates) -> tuple[float, float, float]:
    """(measured arrival rate, standard error, z-score against the analytic rate)."""
    rate, se = estimates.measures["lambda"]
    z = (rate - model.arrivals.rate) / se if se > 0 else float("inf")
    return rate, se, z
