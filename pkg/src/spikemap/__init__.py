"""Connectome-to-machine compiler and paired spiking-network simulators.

The pipeline: load or synthesize a connectome graph, optionally quantize and
cap it, partition it onto memory-limited cores, build per-core routing and
delivery tables under one of two connectivity-compression schemes, then run
either the flat floating-point reference simulator or the fixed-point
compiled-machine simulator and compare per-neuron spike rates.
"""

from spikemap.connectome import (
    Connectome,
    DegreeStats,
    QuantReport,
    cap_fan_in,
    condense_edges,
    degree_stats,
    generate_synthetic,
    load_edge_table,
    quantize_weights,
)
from spikemap.hardware import (
    FixedPointSpec,
    HardwareConfig,
    Lfsr,
    MemoryReport,
    from_fixed,
    memory_cost,
    to_fixed,
)
from spikemap.records import SpikeRecord
from spikemap.reference import (
    ModelToggles,
    NeuronParams,
    NeuronState,
    ReferenceConfig,
    StimulusSpec,
    apply_model_toggles,
    euler_step,
    run_reference,
)
from spikemap.compiler import (
    CapacitySpec,
    CompiledMachine,
    CompressionScheme,
    Partitioning,
    build_routing,
    compile_machine,
    default_capacities,
    effective_fan_in,
    effective_fan_out,
    flatten_machine,
    load_machine,
    partition_greedy,
    save_machine,
    validate_machine,
)
from spikemap.coresim import (
    CounterReport,
    PerfCounters,
    RunConfig,
    record_spikes_via_counters,
    run_background_sweep,
    run_compiled,
)
from spikemap.analysis import (
    ParityStats,
    RateTable,
    export_distribution,
    export_raster,
    mean_rates,
    parity,
)

__version__ = "0.1.0"
