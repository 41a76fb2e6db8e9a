"""
Pattern: Builder (Creational)
Two-tier cluster topology: nodes of equal size, intra- and inter-node bandwidths in bytes/second
"""
import math
from typing import Dict

import numpy as np
from pydantic import BaseModel, Field

from app.errors import PreconditionError

LOCAL_BANDWIDTH = math.inf


class Topology(BaseModel):
    """Immutable device/node hierarchy feeding bw(i, k) and node(i)"""
    model_config = {"frozen": True}

    n_nodes: int = Field(..., gt=0)
    devices_per_node: int = Field(..., gt=0)
    b_intra: float = Field(..., gt=0, description="Intra-node unidirectional bandwidth, bytes/second")
    b_inter: float = Field(..., gt=0, description="Inter-node unidirectional per-device bandwidth, bytes/second")

    @property
    def n_devices(self) -> int:
        return self.n_nodes * self.devices_per_node

    def _check_device(self, device_index: int) -> None:
        if not 0 <= device_index < self.n_devices:
            raise PreconditionError(f"device index {device_index} out of range [0, {self.n_devices})")

    def node_of(self, device_index: int) -> int:
        """Node hosting the device"""
        self._check_device(device_index)
        return device_index // self.devices_per_node

    def link_bandwidth(self, i: int, k: int) -> float:
        """bw(i, k); LOCAL_BANDWIDTH (infinite) when i == k"""
        if self.node_of(i) != self.node_of(k):
            return self.b_inter
        if i == k:
            return LOCAL_BANDWIDTH
        return self.b_intra

    def node_index(self) -> np.ndarray:
        """node(i) for every device"""
        return np.arange(self.n_devices, dtype=np.int64) // self.devices_per_node

    def bandwidth_for(self, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
        """Vectorised bw over paired index arrays"""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if src.size and (src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= self.n_devices):
            raise PreconditionError(f"device index out of range [0, {self.n_devices})")
        same_node = (src // self.devices_per_node) == (dst // self.devices_per_node)
        bandwidth = np.where(same_node, self.b_intra, self.b_inter).astype(np.float64)
        bandwidth[src == dst] = LOCAL_BANDWIDTH
        return bandwidth

    def with_devices(self, n_devices: int) -> "Topology":
        """Family member with the same node size and bandwidths"""
        if n_devices % self.devices_per_node and n_devices > self.devices_per_node:
            raise PreconditionError(
                f"{n_devices} devices is not a multiple of {self.devices_per_node} devices per node"
            )
        if n_devices < self.devices_per_node:
            return self.model_copy(update={"n_nodes": 1, "devices_per_node": n_devices})
        return self.model_copy(update={"n_nodes": n_devices // self.devices_per_node})


TOPOLOGY_PRESETS: Dict[str, Topology] = {
    # 8x A100 per node: NVLink 300 GB/s, 800 Gbps InfiniBand shared by 8 devices
    "a100_ib": Topology(n_nodes=4, devices_per_node=8, b_intra=300e9, b_inter=12.5e9),
    "single_node": Topology(n_nodes=1, devices_per_node=8, b_intra=300e9, b_inter=12.5e9),
}
