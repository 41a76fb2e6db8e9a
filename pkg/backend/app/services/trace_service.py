"""
Synthetic routing traces and trace summaries

Expert popularity per layer starts from a symmetric Dirichlet draw (concentration skew_alpha)
and drifts as a Gaussian random walk on its logits. Counts are popularity x tokens_per_device
rounded by largest remainder, so every row sums to tokens_per_device exactly.
"""
import logging
from typing import List, Sequence

import numpy as np

from app.errors import PreconditionError
from app.schemas.trace import RoutingMatrix, TraceGenSpec, TraceRecord, TraceStats

logger = logging.getLogger(__name__)

# Floor for Dirichlet parameters and logits; tiny popularities underflow to 0 at low concentration
_MIN_WEIGHT = 1e-300


def largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    """
    Round each row of non-negative weights to integers summing to `total`
    Remainders go to the largest fractional parts, lowest index first on ties
    """
    weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    row_sums = weights.sum(axis=1, keepdims=True)
    n_cols = weights.shape[1]
    shares = np.divide(weights, row_sums, out=np.full_like(weights, 1.0 / n_cols), where=row_sums > 0)

    quotas = shares * total
    base = np.floor(quotas).astype(np.int64)
    missing = total - base.sum(axis=1)
    order = np.argsort(-(quotas - base), axis=1, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(n_cols)[None, :].repeat(weights.shape[0], axis=0), axis=1)
    return base + (rank < missing[:, None])


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


def generate_trace(spec: TraceGenSpec) -> List[TraceRecord]:
    """n_layers x n_iterations records ordered by (iteration, layer); pure in `spec`"""
    n_devices, n_experts = spec.n_devices, spec.n_experts
    records: List[TraceRecord] = []

    for layer in range(spec.n_layers):
        # one independent stream per layer keeps layers stable when n_layers changes
        rng = np.random.default_rng([spec.seed, layer])
        popularity = rng.dirichlet(np.full(n_experts, spec.skew_alpha))
        logits = np.log(np.maximum(popularity, _MIN_WEIGHT))

        for iteration in range(spec.n_iterations):
            if iteration > 0 and spec.drift_sigma > 0:
                logits = logits + rng.normal(0.0, spec.drift_sigma, size=n_experts)
            popularity = _softmax(logits)

            if spec.device_concentration is None:
                weights = np.broadcast_to(popularity, (n_devices, n_experts))
            else:
                alpha = np.maximum(spec.device_concentration * popularity, _MIN_WEIGHT)
                weights = rng.dirichlet(alpha, size=n_devices)

            counts = largest_remainder(weights, spec.tokens_per_device)
            records.append(
                TraceRecord(iteration=iteration, layer=layer, routing=RoutingMatrix(counts=counts))
            )

    records.sort(key=lambda r: (r.iteration, r.layer))
    logger.debug(
        f"Generated trace: {spec.n_iterations} iterations x {spec.n_layers} layers, "
        f"N={n_devices}, E={n_experts}, alpha={spec.skew_alpha}, sigma={spec.drift_sigma}"
    )
    return records


def trace_stats(records: Sequence[TraceRecord]) -> List[TraceStats]:
    """Per-record totals, expert loads and shares; zero-total records report uniform shares"""
    if not records:
        raise PreconditionError("trace_stats needs at least one record")

    stats = []
    for record in records:
        loads = record.routing.expert_loads()
        total = int(loads.sum())
        n_experts = loads.size
        if total == 0:
            shares = [1.0 / n_experts] * n_experts
        else:
            shares = (loads / total).tolist()
        stats.append(
            TraceStats(
                iteration=record.iteration,
                layer=record.layer,
                total_tokens=total,
                expert_loads=loads.astype(int).tolist(),
                shares=shares,
                max_share=max(shares),
                min_share=min(shares),
                zero_total=total == 0,
            )
        )
    return stats


def records_for_layer(records: Sequence[TraceRecord], layer: int) -> List[TraceRecord]:
    """One layer's records in iteration order"""
    return sorted((r for r in records if r.layer == layer), key=lambda r: r.iteration)


def trace_layers(records: Sequence[TraceRecord]) -> List[int]:
    return sorted({r.layer for r in records})


def tile_trace(records: Sequence[TraceRecord], n_devices: int) -> List[TraceRecord]:
    """Re-partition onto n_devices by cycling source rows; per-device token counts are kept"""
    if n_devices < 1:
        raise PreconditionError(f"cannot tile a trace onto {n_devices} devices")
    tiled = []
    for record in records:
        base = record.routing.counts
        rows = np.arange(n_devices) % base.shape[0]
        tiled.append(
            TraceRecord(iteration=record.iteration, layer=record.layer, routing=RoutingMatrix(counts=base[rows]))
        )
    return tiled
