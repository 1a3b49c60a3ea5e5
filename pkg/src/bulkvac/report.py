"""Result emission: CSV distribution tables, JSON summaries, and figures.

Every distribution table uses the row schema n,index,phase,value[,stderr]
with 6 decimal places; the summary JSON carries the measures, diagnostics and
provenance (config hash and package version).  Figures are rendered with the
Agg backend next to the delimited output.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .solver import SolveResult

FLOAT_FMT = "{:.6f}"


def config_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_table(path, array: np.ndarray, index_offset: int = 0,
                stderr: np.ndarray | None = None, min_value: float = 0.0) -> None:
    """Emit an (n, index, phase) array as CSV rows; all-zero tail rows are kept
    until the last row with any mass so totals are reproducible."""
    arr = np.asarray(array)
    n_rows = arr.shape[0]
    last = 0
    for n in range(n_rows - 1, -1, -1):
        if np.abs(arr[n]).max() > min_value:
            last = n
            break
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["n", "index", "phase", "value"]
        if stderr is not None:
            header.append("stderr")
        w.writerow(header)
        for n in range(last + 1):
            for idx in range(arr.shape[1]):
                for ph in range(arr.shape[2]):
                    row = [n, idx + index_offset, ph + 1, FLOAT_FMT.format(arr[n, idx, ph])]
                    if stderr is not None:
                        row.append(FLOAT_FMT.format(stderr[n, idx, ph]))
                    w.writerow(row)
        totals = arr.sum(axis=0)
        for idx in range(arr.shape[1]):
            for ph in range(arr.shape[2]):
                row = ["total", idx + index_offset, ph + 1, FLOAT_FMT.format(totals[idx, ph])]
                if stderr is not None:
                    row.append("")
                w.writerow(row)


def write_solve_bundle(out_dir, result: SolveResult, raw_config: dict) -> dict:
    """Write the four (five under SV) distribution tables, the summary JSON and
    a queue-length figure; returns the summary document."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emb = result.embedded
    arb = result.arbitrary
    h = result.model.h
    write_table(out / "service_completion.csv", emb.xi_plus_joint, result.model.h)
    write_table(out / "vacation_termination.csv", emb.gamma_plus_joint, 0)
    write_table(out / "arbitrary_service.csv", arb.xi_joint, result.model.h)
    write_table(out / "arbitrary_vacation.csv", arb.gamma_joint, 0)
    if arb.R_dormant is not None:
        write_table(out / "dormant.csv", arb.R_dormant.reshape(h, 1, -1), 0)
    write_table(out / "queue_embedded.csv", emb.queue_marginal.reshape(-1, 1, 1), 0)
    write_table(out / "queue_arbitrary.csv",
                result.report.queue_length.reshape(-1, 1, 1), 0)
    summary = {
        "measures": result.report.as_dict(),
        "model": {
            "h": result.model.h,
            "H": result.model.H,
            "policy": result.model.policy,
            "arrival_rate": result.model.arrivals.rate,
            "traffic_intensity": result.model.traffic_intensity,
        },
        "solver": {
            "sigma_inverse": emb.sigma_inverse,
            "E_factor": arb.E_factor,
            "w_hat": arb.w_hat,
            "embedded_total": emb.total_mass(),
            "arbitrary_total": arb.total_mass(),
        },
        "diagnostics": result.diagnostics.as_dict(),
        "provenance": {"config_sha256": config_hash(raw_config), "version": __version__},
    }
    with open(out / "measures.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    render_queue_figure(out / "queue_length.png", result.report.queue_length)
    return summary


def write_simulate_bundle(out_dir, model, est, raw_config: dict) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def with_se(law, embedded):
        se = np.vectorize(lambda p: est.cell_se(p, embedded))(law)
        return law, se

    law, se = with_se(est.embedded_service_law, True)
    write_table(out / "service_completion.csv", law, model.h, se)
    law, se = with_se(est.embedded_vacation_law, True)
    write_table(out / "vacation_termination.csv", law, 0, se)
    law, se = with_se(est.time_service_law, False)
    write_table(out / "arbitrary_service.csv", law, model.h, se)
    law, se = with_se(est.time_vacation_law, False)
    write_table(out / "arbitrary_vacation.csv", law, 0, se)
    if model.policy == "sv":
        law = est.time_dormant_law.reshape(model.h, 1, -1)
        se = np.vectorize(lambda p: est.cell_se(p, False))(law)
        write_table(out / "dormant.csv", law, 0, se)
    qe = (est.embedded_service_law.sum(axis=(1, 2))
          + est.embedded_vacation_law.sum(axis=(1, 2))).reshape(-1, 1, 1)
    se = np.vectorize(lambda p: est.cell_se(p, True))(qe)
    write_table(out / "queue_embedded.csv", qe, 0, se)
    qa = (est.time_service_law.sum(axis=(1, 2))
          + est.time_vacation_law.sum(axis=(1, 2)))
    if model.policy == "sv":
        dorm = est.time_dormant_law.sum(axis=1)
        qa = qa.copy()
        qa[: model.h] += dorm
    qa = qa.reshape(-1, 1, 1)
    se = np.vectorize(lambda p: est.cell_se(p, False))(qa)
    write_table(out / "queue_arbitrary.csv", qa, 0, se)
    summary = {
        "measures": {k: {"estimate": v[0], "stderr": v[1]} for k, v in est.measures.items()},
        "simulation": {
            "seed": est.seed,
            "events": est.events,
            "warmup_fraction": est.warmup_fraction,
            "duration": est.duration,
            "embedded_events": est.embedded_events,
            "arrivals": est.arrivals,
            "se_inflation": est.se_inflation,
            "low_precision": bool(est.events < 10 ** 6),
        },
        "provenance": {"config_sha256": config_hash(raw_config), "version": __version__},
    }
    with open(out / "measures.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def write_sweep_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["l", "case", "lambda", "rho", "L_q", "flagged"])
        for r in rows:
            w.writerow([
                FLOAT_FMT.format(r["l"]), r["case"],
                FLOAT_FMT.format(r["lambda"]), FLOAT_FMT.format(r["rho"]),
                "" if r["L_q"] is None else FLOAT_FMT.format(r["L_q"]),
                int(r["flagged"]),
            ])


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def render_queue_figure(path, queue_length: np.ndarray) -> None:
    plt = _plt()
    pq = np.asarray(queue_length)
    last = max(int(np.argmax(np.cumsum(pq) > 1 - 1e-6)), 10)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.semilogy(np.arange(last + 1), np.maximum(pq[: last + 1], 1e-12), lw=1.2)
    ax.set_xlabel("queue length n")
    ax.set_ylabel("P(n)")
    ax.set_title("Stationary queue-length distribution")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_sweep_figure(path, rows: list[dict]) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 3.8))
    for case, marker in (("qsdv", "o"), ("qsiv", "s")):
        pts = [(r["lambda"], r["L_q"]) for r in rows
               if r["case"] == case and not r["flagged"] and r["L_q"] is not None]
        if pts:
            xs, ys = zip(*sorted(pts))
            ax.plot(xs, ys, marker=marker, ms=4, lw=1.2, label=case.upper())
    ax.set_xlabel("arrival rate")
    ax.set_ylabel("expected queue length")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
