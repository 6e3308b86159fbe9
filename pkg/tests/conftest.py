import numpy as np
import pytest

from spikemap.compiler import (
    CapacitySpec,
    CompressionScheme,
    build_routing,
    partition_greedy,
)
from spikemap.connectome import Connectome, condense_edges, generate_synthetic
from spikemap.hardware import HardwareConfig


def make_connectome(edges, n=None, **kwargs) -> Connectome:
    """Edges as a list of (src, dst, weight) tuples."""
    if edges:
        src, dst, w = zip(*edges)
    else:
        src, dst, w = [], [], []
    c = condense_edges(src, dst, w, n_neurons=n)
    for k, v in kwargs.items():
        setattr(c, k, v)
    return c


def rand_net(n, mean_degree, seed, w_lo=-24, w_hi=24) -> Connectome:
    return generate_synthetic(n, mean_degree, tail_exponent=2.0,
                              w_dist={"kind": "uniform_int", "lo": w_lo, "hi": w_hi},
                              seed=seed)


def loose_caps(per_core_neurons=64) -> CapacitySpec:
    """Small cores, generous unit limits: spreads tiny test graphs over
    several cores without tripping byte limits."""
    return CapacitySpec(max_neurons_per_core=per_core_neurons,
                        max_in_units_per_core=8192,
                        max_out_units_per_core=8192)


def build_both_schemes(c, cap=None, cfg=None, dt_ms=0.1, params=None):
    """Partition once, then build machines for both schemes on that same
    partitioning (per-core RNG streams depend on placement, so spike-train
    equivalence across schemes is defined over a shared partitioning)."""
    cfg = cfg or HardwareConfig()
    cap = cap or loose_caps()
    p = partition_greedy(c, cap, CompressionScheme.SHARED_AXON_ROUTING, cfg)
    m_routing = build_routing(c, p, CompressionScheme.SHARED_AXON_ROUTING, cfg,
                              dt_ms, params=params)
    m_delivery = build_routing(c, p, CompressionScheme.SHARED_SYNAPTIC_DELIVERY, cfg,
                               dt_ms, params=params)
    return p, m_routing, m_delivery


@pytest.fixture
def chain3() -> Connectome:
    """0 -> 1 -> 2 with unit weights."""
    return make_connectome([(0, 1, 1), (1, 2, 1)])
