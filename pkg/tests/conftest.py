import json
from pathlib import Path

import numpy as np
import pytest

from bulkvac import QueueModel, erlang, solve, validate_map

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

TABLE_C = [[-91.8125, 14.1250], [49.4375, -77.6875]]
TABLE_D = [[49.4375, 28.2500], [7.0625, 21.1875]]

SWEEP_C = [[-4.657, 1.761], [1.128, -3.941]]
SWEEP_D = [[1.657, 1.239], [0.872, 1.941]]


def table_model(policy: str) -> QueueModel:
    arr = validate_map(TABLE_C, TABLE_D)
    services = {r: erlang(3, 2.6 * r) for r in range(5, 10)}
    vacations = {k: erlang(2, 0.5 * (k + 1) ** 2) for k in range(5)}
    return QueueModel(arr, 5, 9, services, vacations, policy)


def sweep_model(scale: float = 1.0, case: str = "qsdv") -> QueueModel:
    arr = validate_map(np.array(SWEEP_C) * scale, np.array(SWEEP_D) * scale)
    services = {r: erlang(3, 0.3 * r) for r in range(3, 6)}
    if case == "qsdv":
        vacations = {k: erlang(2, (k + 1) ** 2 * 1.1) for k in range(3)}
    else:
        vacations = {k: erlang(2, 1.1) for k in range(3)}
    return QueueModel(arr, 3, 5, services, vacations, "sv")


def small_model(policy: str = "sv") -> QueueModel:
    """Quick two-phase model used where the table configuration is overkill."""
    arr = validate_map([[-3.0, 1.0], [0.5, -2.5]], [[1.5, 0.5], [0.8, 1.2]])
    services = {2: erlang(2, 2.2), 3: erlang(2, 3.0)}
    vacations = {0: erlang(2, 1.4), 1: erlang(2, 2.0)}
    return QueueModel(arr, 2, 3, services, vacations, policy)


def mm1_model(lam: float = 0.7, mu: float = 1.0, vac_rate: float = 1e7) -> QueueModel:
    """Degenerate single-phase model: Poisson arrivals, single exponential server,
    vacations made negligibly short."""
    arr = validate_map([[-lam]], [[lam]])
    return QueueModel(arr, 1, 1, {1: erlang(1, mu)}, {0: erlang(1, vac_rate)}, "sv")


def random_stable_model(rng: np.random.Generator) -> QueueModel:
    """Random stable model within the documented envelope: m <= 3, H <= 6,
    phase orders <= 3, traffic intensity in (0.25, 0.7)."""
    m = int(rng.integers(1, 4))
    H = int(rng.integers(1, 7))
    h = int(rng.integers(1, H + 1))
    C = rng.uniform(0.1, 1.0, (m, m))
    np.fill_diagonal(C, 0.0)
    D = rng.uniform(0.1, 1.0, (m, m))
    C = C - np.diag(C.sum(axis=1) + D.sum(axis=1))
    arr = validate_map(C, D)
    lam = arr.rate

    def random_ph(mean_target: float):
        n = int(rng.integers(1, 4))
        alpha = rng.dirichlet(np.ones(n))
        T = rng.uniform(0.0, 1.0, (n, n))
        np.fill_diagonal(T, 0.0)
        exit_rates = rng.uniform(0.5, 1.5, n)
        T = T - np.diag(T.sum(axis=1) + exit_rates)
        law = erlang(1, 1.0)  # placeholder to reuse validation path
        from bulkvac import PhaseTypeDistribution
        law = PhaseTypeDistribution(alpha, T)
        return PhaseTypeDistribution(alpha, T * (law.mean / mean_target))

    rho_target = rng.uniform(0.25, 0.7)
    sH_mean = rho_target * H / lam
    services = {}
    for r in range(h, H + 1):
        services[r] = random_ph(sH_mean * rng.uniform(0.7, 1.3) * (0.5 + 0.5 * r / H))
    services[H] = random_ph(sH_mean)
    vacations = {k: random_ph(rng.uniform(0.5, 3.0) * h / lam) for k in range(h)}
    policy = "mv" if rng.random() < 0.5 else "sv"
    return QueueModel(arr, h, H, services, vacations, policy)


@pytest.fixture(scope="session")
def sv_result():
    return solve(table_model("sv"))


@pytest.fixture(scope="session")
def mv_result():
    return solve(table_model("mv"))


@pytest.fixture()
def sv_config_path():
    return CONFIG_DIR / "sv.json"


@pytest.fixture()
def mv_config_path():
    return CONFIG_DIR / "mv.json"


@pytest.fixture()
def toy_config(tmp_path):
    """Small fast model for CLI round trips."""
    doc = {
        "arrivals": {"C": [[-3.0, 1.0], [0.5, -2.5]], "D": [[1.5, 0.5], [0.8, 1.2]]},
        "thresholds": {"h": 2, "H": 3},
        "services": {"2": {"erlang": {"phases": 2, "rate": 2.2}},
                     "3": {"erlang": {"phases": 2, "rate": 3.0}}},
        "vacations": {"0": {"erlang": {"phases": 2, "rate": 1.4}},
                      "1": {"erlang": {"phases": 2, "rate": 2.0}}},
        "policy": "sv",
        "simulation": {"seed": 3, "events": 200000},
    }
    path = tmp_path / "toy.json"
    path.write_text(json.dumps(doc))
    return path
