import numpy as np
import pytest

from kasync.datagen import LabeledDataset, synth_gaussian
from kasync.model import ModelSpec
from kasync.simulator import ClientProfile, LatencyModel


def rel_err(analytic, numeric):
    """Largest coordinate error relative to the largest gradient entry."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def fixed_clients(latencies, shard=None, batch_size=2):
    """Clients with deterministic latencies sharing one tiny shard."""
    if shard is None:
        shard = synth_gaussian(2, 2, 4, 3.0, seed=0)
    return [ClientProfile(i, shard, LatencyModel("deterministic", value=float(t)), batch_size)
            for i, t in enumerate(latencies)]


@pytest.fixture
def tiny_spec():
    return ModelSpec("logistic", 2, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def base_config(**over):
    cfg = {
        "seed": 0,
        "iterations": 20,
        "K": 2,
        "batch_size": 8,
        "eval_every": 5,
        "dataset": {"kind": "synth_gaussian", "classes": 3, "dim": 4, "per_class": 60,
                    "test_per_class": 30, "separation": 3.0},
        "partition": {"P": 6, "L_num": 2, "D_min": 20, "D_max": 40},
        "model": {"kind": "logistic"},
        "algorithm": {"variant": "wkafl", "eta0": 0.1},
    }
    cfg.update(over)
    return cfg


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
