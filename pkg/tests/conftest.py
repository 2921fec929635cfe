import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from safectrl import experiments
from safectrl.sim import compute_metrics, run_closed_loop

_CACHE: dict = {}


@pytest.fixture(scope="session")
def experiment_run():
    """Run built-in experiments once per session; returns (log, metrics)."""

    def get(experiment_id: str):
        if experiment_id not in _CACHE:
            scenario = experiments.build_experiment(experiment_id)
            traj = run_closed_loop(scenario)
            _CACHE[experiment_id] = (traj, compute_metrics(traj))
        return _CACHE[experiment_id]

    return get
