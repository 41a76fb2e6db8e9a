import math

import numpy as np
import pytest

from app.errors import PreconditionError
from app.schemas.topology import LOCAL_BANDWIDTH, TOPOLOGY_PRESETS, Topology


@pytest.fixture
def cluster():
    return Topology(n_nodes=2, devices_per_node=8, b_intra=300e9, b_inter=12.5e9)


def test_node_of(cluster):
    assert cluster.node_of(0) == 0
    assert cluster.node_of(8) == 1
    assert Topology(n_nodes=4, devices_per_node=4, b_intra=1, b_inter=1).node_of(15) == 3


def test_node_of_out_of_range(cluster):
    with pytest.raises(PreconditionError):
        cluster.node_of(16)
    with pytest.raises(PreconditionError):
        cluster.node_of(-1)


def test_link_bandwidth(cluster):
    assert cluster.link_bandwidth(0, 1) == 300e9
    assert cluster.link_bandwidth(0, 9) == 12.5e9
    assert cluster.link_bandwidth(3, 3) == LOCAL_BANDWIDTH
    assert math.isinf(cluster.link_bandwidth(3, 3))


def test_link_bandwidth_is_symmetric(cluster):
    for i in range(cluster.n_devices):
        for k in range(cluster.n_devices):
            assert cluster.link_bandwidth(i, k) == cluster.link_bandwidth(k, i)


def test_partition_property(cluster):
    counts = np.bincount(cluster.node_index())
    assert counts.tolist() == [8, 8]


def test_bandwidth_for_matches_scalar(cluster):
    src = np.repeat(np.arange(16), 16)
    dst = np.tile(np.arange(16), 16)
    vector = cluster.bandwidth_for(src, dst)
    expected = [cluster.link_bandwidth(int(i), int(k)) for i, k in zip(src, dst)]
    assert vector.tolist() == expected


def test_bandwidth_for_rejects_bad_index(cluster):
    with pytest.raises(PreconditionError):
        cluster.bandwidth_for(np.array([0]), np.array([16]))


def test_with_devices(cluster):
    grown = cluster.with_devices(64)
    assert (grown.n_nodes, grown.devices_per_node, grown.b_inter) == (8, 8, 12.5e9)
    small = cluster.with_devices(4)
    assert (small.n_nodes, small.devices_per_node) == (1, 4)
    with pytest.raises(PreconditionError):
        cluster.with_devices(12)


def test_presets():
    a100 = TOPOLOGY_PRESETS["a100_ib"]
    assert a100.devices_per_node == 8
    assert a100.b_inter == 12.5e9
