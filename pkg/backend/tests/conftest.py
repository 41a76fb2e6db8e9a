import json

import numpy as np
import pytest

from app.config import get_settings
from app.schemas.cost import CostParams
from app.schemas.topology import Topology
from app.schemas.trace import RoutingMatrix, TraceRecord


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Settings are cached per process; tests must not leak env overrides"""
    for name in ("MOE_PLANNER_LOG_LEVEL", "MOE_PLANNER_WORKERS", "MOE_PLANNER_FLOAT_DIGITS"):
        monkeypatch.delenv(name, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def pair_topology():
    """Two devices on one node, 100 B/s between them"""
    return Topology(n_nodes=1, devices_per_node=2, b_intra=100.0, b_inter=10.0)


@pytest.fixture
def quad_topology():
    """One node of four devices"""
    return Topology(n_nodes=1, devices_per_node=4, b_intra=100.0, b_inter=10.0)


@pytest.fixture
def two_by_two():
    """Two nodes of two devices"""
    return Topology(n_nodes=2, devices_per_node=2, b_intra=100.0, b_inter=10.0)


@pytest.fixture
def unit_params():
    return CostParams(v_comm=1.0, v_comp=1.0, b_comp=10.0, f_ckpt=0)


@pytest.fixture
def a100_params():
    """bf16 hidden vectors, SwiGLU FLOPs at H=4096, H'=14336"""
    return CostParams(v_comm=4096 * 2, v_comp=6 * 4096 * 14336, b_comp=312e12, f_ckpt=0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def make_trace(matrices, layer=0):
    """One record per matrix, iterations 0.."""
    return [
        TraceRecord(iteration=t, layer=layer, routing=RoutingMatrix(counts=m)) for t, m in enumerate(matrices)
    ]


@pytest.fixture
def write_config(tmp_path):
    """Write a run config JSON and return its path"""

    def _write(overrides=None, name="config.json"):
        document = {
            "topology": {"n_nodes": 1, "devices_per_node": 4, "b_intra": 300e9, "b_inter": 12.5e9},
            "cost": {"b_comp": 312e12, "f_ckpt": 0},
            "model": {"n_experts": 4, "capacity": 2, "hidden": 4096, "intermediate": 14336, "topk": 2},
        }
        for block, values in (overrides or {}).items():
            document.setdefault(block, {}).update(values)
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    return _write
