"""JSON model configuration: parsing with field-path errors, and re-emission.

A config file holds the arrival matrices, thresholds, per-batch-size service
laws, per-queue-size vacation laws, the vacation policy, and optional solver
and simulation overrides.  Phase-type entries are either an explicit
(alpha, T) pair or the shorthand {"erlang": {"phases": p, "rate": x}} with
rate the overall rate (mean 1/x).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .processes import MarkovianArrivalProcess, PhaseTypeDistribution, QueueModel, erlang


@dataclass
class ModelConfig:
    model: QueueModel
    solver: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def _need(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"{path}.{key}: missing required field")
    return obj[key]


def _parse_ph(spec, path: str) -> PhaseTypeDistribution:
    if not isinstance(spec, dict):
        raise ConfigError(f"{path}: expected an object")
    try:
        if "erlang" in spec:
            er = spec["erlang"]
            return erlang(int(_need(er, "phases", f"{path}.erlang")),
                          float(_need(er, "rate", f"{path}.erlang")))
        return PhaseTypeDistribution(_need(spec, "alpha", path), _need(spec, "T", path))
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_indexed(block, lo: int, hi: int, key_name: str, path: str) -> dict:
    """Accept {'5': spec, ...} or [{'r': 5, ...spec}, ...]; keys must cover [lo, hi]."""
    out = {}
    if isinstance(block, dict):
        items = []
        for k, v in block.items():
            try:
                items.append((int(k), v))
            except ValueError:
                raise ConfigError(f"{path}.{k}: key must be an integer") from None
    elif isinstance(block, list):
        items = []
        for i, entry in enumerate(block):
            if not isinstance(entry, dict) or key_name not in entry:
                raise ConfigError(f"{path}[{i}]: missing index field '{key_name}'")
            spec = {k: v for k, v in entry.items() if k != key_name}
            items.append((int(entry[key_name]), spec))
    else:
        raise ConfigError(f"{path}: expected an object or a list")
    for idx, spec in items:
        if not (lo <= idx <= hi):
            raise ConfigError(f"{path}.{idx}: index outside [{lo}, {hi}]")
        if idx in out:
            raise ConfigError(f"{path}.{idx}: duplicate index")
        out[idx] = _parse_ph(spec, f"{path}.{idx}")
    missing = [i for i in range(lo, hi + 1) if i not in out]
    if missing:
        raise ConfigError(f"{path}: missing indices {missing}")
    return out


def parse_model(doc: dict, path: str = "") -> QueueModel:
    arr = _need(doc, "arrivals", path or "config")
    try:
        process = MarkovianArrivalProcess(
            _need(arr, "C", f"{path}arrivals"), _need(arr, "D", f"{path}arrivals"))
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"{path}arrivals: {exc}") from None
    th = _need(doc, "thresholds", path or "config")
    try:
        h = int(_need(th, "h", f"{path}thresholds"))
        H = int(_need(th, "H", f"{path}thresholds"))
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"{path}thresholds: {exc}") from None
    if not (1 <= h <= H):
        raise ConfigError(f"{path}thresholds: must satisfy 1 <= h <= H (got h={h}, H={H})")
    services = _parse_indexed(_need(doc, "services", path or "config"), h, H, "r",
                              f"{path}services")
    vacations = _parse_indexed(_need(doc, "vacations", path or "config"), 0, h - 1, "k",
                               f"{path}vacations")
    policy = doc.get("policy", "sv")
    if policy not in ("sv", "mv"):
        raise ConfigError(f"{path}policy: must be 'sv' or 'mv' (got {policy!r})")
    try:
        return QueueModel(process, h, H, services, vacations, policy)
    except Exception as exc:
        raise ConfigError(f"{path}model: {exc}") from None


def load_config(path) -> ModelConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in {path}: {exc}") from None
    model = parse_model(doc)
    solver = doc.get("solver", {})
    sim = doc.get("simulation", {})
    if not isinstance(solver, dict):
        raise ConfigError("solver: expected an object")
    if not isinstance(sim, dict):
        raise ConfigError("simulation: expected an object")
    return ModelConfig(model, solver, sim, doc)


def model_to_config(model: QueueModel) -> dict:
    """Semantically equivalent config document (explicit alpha/T form)."""
    def ph_doc(law: PhaseTypeDistribution) -> dict:
        return {"alpha": [float(a) for a in law.alpha],
                "T": [[float(x) for x in row] for row in law.T]}

    return {
        "arrivals": {
            "C": [[float(x) for x in row] for row in model.arrivals.C],
            "D": [[float(x) for x in row] for row in model.arrivals.D],
        },
        "thresholds": {"h": model.h, "H": model.H},
        "services": {str(r): ph_doc(model.services[r]) for r in sorted(model.services)},
        "vacations": {str(k): ph_doc(model.vacations[k]) for k in sorted(model.vacations)},
        "policy": model.policy,
    }


def load_sweep_config(path) -> dict:
    """Sweep spec: a base model, arrival scale factors, and a vacation rate.

    The two schedules are derived from vacation_rate: the size-dependent case
    uses (k+1)^2 * rate for type k, the size-independent case uses the same
    rate for every type.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"sweep: cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"sweep: invalid JSON in {path}: {exc}") from None
    base = _need(doc, "base", "sweep")
    model = parse_model(base, "base.")
    scales = _need(doc, "scales", "sweep")
    if not isinstance(scales, list) or not scales or not all(
            isinstance(s, (int, float)) and s > 0 for s in scales):
        raise ConfigError("sweep.scales: expected a nonempty list of positive numbers")
    rate = float(_need(doc, "vacation_rate", "sweep"))
    if rate <= 0:
        raise ConfigError("sweep.vacation_rate: must be positive")
    phases = int(doc.get("vacation_phases", 2))
    return {"model": model, "scales": [float(s) for s in scales],
            "vacation_rate": rate, "vacation_phases": phases,
            "solver": doc.get("solver", {}), "raw": doc}


def sweep_case_model(base: QueueModel, scale: float, case: str,
                     rate: float, phases: int) -> QueueModel:
    """Model at one sweep point: scaled arrivals and the case's vacation schedule."""
    if case == "qsdv":
        vacations = {k: erlang(phases, (k + 1) ** 2 * rate) for k in range(base.h)}
    elif case == "qsiv":
        vacations = {k: erlang(phases, rate) for k in range(base.h)}
    else:
        raise ConfigError(f"sweep case must be 'qsdv' or 'qsiv' (got {case!r})")
    return QueueModel(base.arrivals.scaled(scale), base.h, base.H,
                      base.services, vacations, base.policy)
