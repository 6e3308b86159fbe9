"""Compile a connectome onto the virtual machine.

Two stages: a greedy capacity-driven partition of neurons onto cores, then
per-core table construction for one of the two connectivity-compression
schemes. Every edge of the condensed graph is realized by exactly one
(outbound routing entry, delivery-list element) pair, which ``flatten_machine``
inverts for round-trip verification.

Compression schemes:

* shared synaptic delivery: one inbound axon per unique source neuron per
  receiving core; its delivery list carries all of that source's targets on
  the core, so a spiking source sends one message per receiving core.
* shared axon routing: one inbound axon per (target neuron, weight) pair on
  the receiving core, shared by every source with that weight onto that
  target; a spiking source sends one message per out-edge.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from spikemap.connectome import Connectome
from spikemap.errors import ConfigError, InfeasibleError, ValidationError
from spikemap.hardware import (
    CoreUsage,
    FixedPointSpec,
    HardwareConfig,
    MemoryReport,
    memory_cost,
)
from spikemap.reference import NeuronParams, steps_from_ms


class CompressionScheme(Enum):
    SHARED_SYNAPTIC_DELIVERY = "delivery"
    SHARED_AXON_ROUTING = "routing"

    @staticmethod
    def parse(name: str) -> "CompressionScheme":
        for s in CompressionScheme:
            if name in (s.value, s.name.lower()):
                return s
        raise ConfigError(f"unknown compression scheme {name!r}")


@dataclass(frozen=True)
class CapacitySpec:
    """Per-core capacity conditions used by the greedy partitioner.

    In/out units are effective counts under the chosen scheme (see
    ``effective_fan_in_all`` / ``partition_greedy``); a partition is marked
    full once remaining capacity in any condition drops below
    ``full_threshold_fraction`` of that capacity.
    """

    max_neurons_per_core: int
    max_in_units_per_core: int
    max_out_units_per_core: int
    full_threshold_fraction: float = 0.02

    def __post_init__(self):
        if min(self.max_neurons_per_core, self.max_in_units_per_core,
               self.max_out_units_per_core) <= 0:
            raise ConfigError("capacities must be positive")
        if not 0.0 < self.full_threshold_fraction < 1.0:
            raise ConfigError("full_threshold_fraction must be in (0, 1)")

    @staticmethod
    def from_kv(pairs: dict) -> "CapacitySpec":
        kwargs = {}
        for k, v in pairs.items():
            if k == "full_threshold_fraction":
                kwargs[k] = float(v)
            elif k in CapacitySpec.__dataclass_fields__:
                kwargs[k] = int(v)
            else:
                raise ConfigError(f"unknown capacity key {k!r}")
        return CapacitySpec(**kwargs)


def default_capacities(cfg: HardwareConfig, scheme: CompressionScheme) -> CapacitySpec:
    """Byte-feasible default capacities derived from the cost model.

    Under shared axon routing each effective in-unit costs 8 bytes (entry +
    header) and each out-unit 8 bytes; under shared synaptic delivery the
    in-units dominate at roughly 4 bytes plus header overhead. These are
    declared stand-ins; real deployments tune them per workload.
    """
    if scheme is CompressionScheme.SHARED_AXON_ROUTING:
        return CapacitySpec(max_neurons_per_core=1024,
                            max_in_units_per_core=6144,
                            max_out_units_per_core=min(8192, cfg.axon_prog_max_entries))
    return CapacitySpec(max_neurons_per_core=1024,
                        max_in_units_per_core=5600,
                        max_out_units_per_core=min(16384, cfg.axon_prog_max_entries))


def effective_fan_in_all(c: Connectome, scheme: CompressionScheme) -> np.ndarray:
    """Per-neuron effective fan-in: raw fan-in under shared synaptic
    delivery, number of distinct in-edge weights under shared axon routing
    (the delay is uniform, so (weight, delay) pairs collapse to weights)."""
    fan_in = np.diff(c.in_ptr).astype(np.int64)
    if scheme is CompressionScheme.SHARED_SYNAPTIC_DELIVERY:
        return fan_in
    if c.n_edges == 0:
        return fan_in
    dst = np.repeat(np.arange(c.n_neurons, dtype=np.int64), fan_in)
    w = c.in_w.astype(np.int64)
    span = int(w.max()) - int(w.min()) + 1
    key = dst * span + (w - int(w.min()))
    uniq_dst = np.unique(key) // span
    return np.bincount(uniq_dst, minlength=c.n_neurons).astype(np.int64)


def effective_fan_in(neuron: int, c: Connectome, scheme: CompressionScheme) -> int:
    lo, hi = int(c.in_ptr[neuron]), int(c.in_ptr[neuron + 1])
    if scheme is CompressionScheme.SHARED_SYNAPTIC_DELIVERY:
        return hi - lo
    return int(np.unique(c.in_w[lo:hi]).size)


@dataclass(eq=False)
class Partitioning:
    """Assignment of neurons to cores plus the index permutation it implies.

    ``perm[slot]`` is the original id living at partition-ordered slot
    ``slot``; slots are contiguous per core in ascending core order, and
    within a core ascend by original id. ``core_neuron_ptr`` is the
    cumulative distribution of neurons over cores.
    """

    core_of: np.ndarray           # int32, absolute core per original neuron
    n_cores: int                  # rounded up to whole chips
    cores_per_chip: int
    core_neuron_ptr: np.ndarray   # int64, len n_cores + 1
    perm: np.ndarray              # int64, partition slot -> original id
    inv_perm: np.ndarray          # int64, original id -> partition slot

    @property
    def n_chips(self) -> int:
        return self.n_cores // self.cores_per_chip

    @property
    def n_neurons(self) -> int:
        return int(self.perm.size)

    def chip_core(self, neuron: int) -> tuple[int, int]:
        core = int(self.core_of[neuron])
        return core // self.cores_per_chip, core % self.cores_per_chip

    def neurons_per_core(self) -> np.ndarray:
        return np.diff(self.core_neuron_ptr)


def effective_fan_out_all(c: Connectome, p: Partitioning,
                          scheme: CompressionScheme) -> np.ndarray:
    """Per-neuron effective fan-out: raw fan-out under shared axon routing
    (full message volume), distinct target cores under shared synaptic
    delivery."""
    fan_out = np.bincount(c.in_src, minlength=c.n_neurons).astype(np.int64)
    if scheme is CompressionScheme.SHARED_AXON_ROUTING:
        return fan_out
    if c.n_edges == 0:
        return fan_out
    edges = c.edge_array()
    key = edges[:, 0] * np.int64(p.n_cores) + p.core_of[edges[:, 1]].astype(np.int64)
    uniq_src = np.unique(key) // p.n_cores
    return np.bincount(uniq_src, minlength=c.n_neurons).astype(np.int64)


def effective_fan_out(neuron: int, c: Connectome, p: Partitioning,
                      scheme: CompressionScheme) -> int:
    out_ptr, out_dst, _ = c.out_adjacency()
    lo, hi = int(out_ptr[neuron]), int(out_ptr[neuron + 1])
    if scheme is CompressionScheme.SHARED_AXON_ROUTING:
        return hi - lo
    return int(np.unique(p.core_of[out_dst[lo:hi]]).size)


def partition_greedy(c: Connectome, cap: CapacitySpec, scheme: CompressionScheme,
                     cfg: HardwareConfig) -> Partitioning:
    """Greedy capacity sweep: neurons in ascending index order go to the
    first open partition that can take them under all three conditions
    (neurons, in-units, out-units); a partition whose remaining capacity in
    any condition falls under the fullness threshold stops receiving
    assignments. The final partition count is rounded up to whole chips.

    Out-units are the static per-neuron estimates: raw fan-out under both
    schemes (under shared synaptic delivery the true routing entries are
    the distinct target cores, only known post-assignment; raw fan-out is
    its upper bound and the byte check after table construction is the
    authority).
    """
    n = c.n_neurons
    in_units = effective_fan_in_all(c, scheme)
    out_units = np.bincount(c.in_src, minlength=n).astype(np.int64)

    caps = (cap.max_neurons_per_core, cap.max_in_units_per_core,
            cap.max_out_units_per_core)
    cond_names = ("neurons", "in_units", "out_units")
    keep_open = tuple(math.ceil(cap_k * cap.full_threshold_fraction) for cap_k in caps)

    used: list[list[int]] = []
    full: list[bool] = []
    assign = np.empty(n, dtype=np.int32)
    first_open = 0

    for i in range(n):
        units = (1, int(in_units[i]), int(out_units[i]))
        for u, cap_k, name in zip(units, caps, cond_names):
            if u > cap_k:
                raise InfeasibleError(
                    f"neuron {i} alone exceeds per-core capacity: "
                    f"{name} demand {u} > limit {cap_k}")
        placed = -1
        for p_idx in range(first_open, len(used)):
            if full[p_idx]:
                continue
            if all(used[p_idx][k] + units[k] <= caps[k] for k in range(3)):
                placed = p_idx
                break
        if placed < 0:
            used.append([0, 0, 0])
            full.append(False)
            placed = len(used) - 1
        for k in range(3):
            used[placed][k] += units[k]
        assign[i] = placed
        if any(caps[k] - used[placed][k] < keep_open[k] for k in range(3)):
            full[placed] = True
            while first_open < len(used) and full[first_open]:
                first_open += 1

    n_parts = max(len(used), 1)
    n_cores = math.ceil(n_parts / cfg.cores_per_chip) * cfg.cores_per_chip
    perm = np.argsort(assign, kind="stable").astype(np.int64)
    inv_perm = np.empty(n, dtype=np.int64)
    inv_perm[perm] = np.arange(n, dtype=np.int64)
    core_neuron_ptr = np.zeros(n_cores + 1, dtype=np.int64)
    np.cumsum(np.bincount(assign, minlength=n_cores), out=core_neuron_ptr[1:])
    return Partitioning(core_of=assign, n_cores=n_cores,
                        cores_per_chip=cfg.cores_per_chip,
                        core_neuron_ptr=core_neuron_ptr, perm=perm,
                        inv_perm=inv_perm)


@dataclass(eq=False)
class CompiledMachine:
    """Per-core synaptic delivery tables, axon routing tables, and neuron
    placements, flattened into CSR arrays.

    Inbound side: core ``c`` owns axons ``core_axon_ptr[c]:core_axon_ptr[c+1]``;
    axon ``a`` delivers entries ``axon_del_ptr[a]:axon_del_ptr[a+1]`` of
    ``(del_w, del_delay, del_local)``. Outbound side: the neuron at
    partition slot ``s`` fires routing entries ``out_ptr[s]:out_ptr[s+1]``
    of ``(out_core, out_axon)``, with out_axon core-local.
    """

    scheme: CompressionScheme
    dt_ms: float
    delay_steps: int
    weight_scale_mv: float
    n_neurons: int
    params: NeuronParams
    hw: HardwareConfig
    fx: FixedPointSpec
    partitioning: Partitioning
    core_axon_ptr: np.ndarray
    axon_del_ptr: np.ndarray
    del_w: np.ndarray
    del_delay: np.ndarray
    del_local: np.ndarray
    out_ptr: np.ndarray
    out_core: np.ndarray
    out_axon: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_cores(self) -> int:
        return self.partitioning.n_cores

    @property
    def n_chips(self) -> int:
        return self.partitioning.n_chips

    def core_usage(self) -> list[CoreUsage]:
        axons_per_core = np.diff(self.core_axon_ptr)
        entries_per_axon = np.diff(self.axon_del_ptr)
        out_per_slot = np.diff(self.out_ptr)
        usage = []
        for core in range(self.n_cores):
            a_lo, a_hi = int(self.core_axon_ptr[core]), int(self.core_axon_ptr[core + 1])
            n_lo = int(self.partitioning.core_neuron_ptr[core])
            n_hi = int(self.partitioning.core_neuron_ptr[core + 1])
            usage.append(CoreUsage(
                n_syn_entries=int(entries_per_axon[a_lo:a_hi].sum()),
                n_axons_in=a_hi - a_lo,
                n_out_entries=int(out_per_slot[n_lo:n_hi].sum()),
                n_neurons=n_hi - n_lo,
            ))
        return usage

    def memory_report(self) -> MemoryReport:
        return memory_cost(self.core_usage(), self.hw)


def build_routing(c: Connectome, p: Partitioning, scheme: CompressionScheme,
                  cfg: HardwareConfig, dt_ms: float,
                  params: NeuronParams | None = None,
                  fx: FixedPointSpec | None = None) -> CompiledMachine:
    """Construct per-core tables for the chosen scheme on a fixed
    partitioning. Axon indices are dense per core and assigned in
    deterministic order: ascending source id under shared synaptic
    delivery, ascending (local target, weight) under shared axon routing.
    Raises if any core exceeds its synaptic memory or axon-program limit.
    """
    params = params or NeuronParams()
    fx = fx or FixedPointSpec()
    delay_steps = steps_from_ms(c.delay_ms, dt_ms)
    if delay_steps < 1:
        raise ConfigError(
            f"synaptic delay {c.delay_ms} ms is below one {dt_ms} ms timestep")
    if delay_steps + 1 > cfg.accum_depth:
        raise ConfigError(
            f"accum_depth {cfg.accum_depth} cannot hold delay of {delay_steps} steps")
    if delay_steps > 255:
        raise ConfigError("delay exceeds the 8-bit per-entry delay field")

    n = c.n_neurons
    edges = c.edge_array()
    src = edges[:, 0]
    dst = edges[:, 1]
    w = edges[:, 2]
    dst_core = p.core_of[dst].astype(np.int64)
    dst_local = (p.inv_perm[dst] - p.core_neuron_ptr[dst_core]).astype(np.int64)
    src_slot = p.inv_perm[src]

    if scheme is CompressionScheme.SHARED_SYNAPTIC_DELIVERY:
        # axon identity: (receiving core, source); delivery entries sorted by
        # local target within the axon
        order = np.lexsort((dst_local, src, dst_core))
        axon_key = dst_core[order] * np.int64(n) + src[order]
    else:
        # axon identity: (receiving core, local target, weight); one entry each
        wmin = int(w.min()) if w.size else 0
        span = (int(w.max()) - wmin + 1) if w.size else 1
        order = np.lexsort((src_slot, w, dst_local, dst_core))
        axon_key = ((dst_core[order] * np.int64(n) + dst_local[order]) * np.int64(span)
                    + (w[order] - wmin))

    if axon_key.size:
        new_axon = np.concatenate([[True], np.diff(axon_key) != 0])
        axon_id_of_edge = np.cumsum(new_axon) - 1        # global dense axon ids
        axon_starts = np.flatnonzero(new_axon)
        n_axons = int(axon_id_of_edge[-1]) + 1
        axon_core = dst_core[order][axon_starts]
    else:
        axon_id_of_edge = np.empty(0, dtype=np.int64)
        axon_starts = np.empty(0, dtype=np.int64)
        n_axons = 0
        axon_core = np.empty(0, dtype=np.int64)

    core_axon_ptr = np.zeros(p.n_cores + 1, dtype=np.int64)
    np.cumsum(np.bincount(axon_core, minlength=p.n_cores), out=core_axon_ptr[1:])
    if scheme is CompressionScheme.SHARED_AXON_ROUTING:
        # one delivery entry per axon, shared by every source routed to it
        axon_del_ptr = np.arange(n_axons + 1, dtype=np.int64)
        del_w = w[order][axon_starts].astype(np.int32)
        del_local = dst_local[order][axon_starts].astype(np.int32)
    elif n_axons:
        axon_del_ptr = np.concatenate([axon_starts, [axon_key.size]]).astype(np.int64)
        del_w = w[order].astype(np.int32)
        del_local = dst_local[order].astype(np.int32)
    else:
        axon_del_ptr = np.zeros(1, dtype=np.int64)
        del_w = np.empty(0, dtype=np.int32)
        del_local = np.empty(0, dtype=np.int32)
    del_delay = np.full(del_w.size, delay_steps, dtype=np.uint8)

    # outbound routing: one entry per (source, axon) pair it must reach,
    # with the target axon expressed core-locally
    if axon_key.size:
        axon_local_of_edge = axon_id_of_edge - core_axon_ptr[dst_core[order]]
        if scheme is CompressionScheme.SHARED_SYNAPTIC_DELIVERY:
            keep = new_axon  # one routing entry per axon (per unique source+core)
        else:
            keep = np.ones(axon_key.size, dtype=bool)  # one per edge
        r_src_slot = src_slot[order][keep]
        r_core = dst_core[order][keep]
        r_axon = axon_local_of_edge[keep]
        r_order = np.lexsort((r_axon, r_core, r_src_slot))
        r_src_slot = r_src_slot[r_order]
        r_core = r_core[r_order]
        r_axon = r_axon[r_order]
    else:
        r_src_slot = np.empty(0, dtype=np.int64)
        r_core = np.empty(0, dtype=np.int64)
        r_axon = np.empty(0, dtype=np.int64)

    out_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(r_src_slot, minlength=n), out=out_ptr[1:])

    machine = CompiledMachine(
        scheme=scheme, dt_ms=dt_ms, delay_steps=delay_steps,
        weight_scale_mv=c.weight_scale_mv, n_neurons=n, params=params,
        hw=cfg, fx=fx, partitioning=p,
        core_axon_ptr=core_axon_ptr, axon_del_ptr=axon_del_ptr,
        del_w=del_w, del_delay=del_delay, del_local=del_local,
        out_ptr=out_ptr, out_core=r_core.astype(np.int32),
        out_axon=r_axon.astype(np.int32),
    )

    report = machine.memory_report()
    if not report.ok:
        bad = np.flatnonzero(report.over_memory | report.over_axon_program)
        detail = ", ".join(
            f"core {int(report.chip[i])}/{int(report.core[i])}: "
            f"{int(report.total_bytes[i])}B of {report.syn_mem_bytes}B, "
            f"{int(report.out_entries[i])} out-entries"
            for i in bad[:8])
        err = InfeasibleError(
            f"{bad.size} core(s) exceed memory or axon-program limits: {detail}")
        err.report = report
        raise err
    return machine


def compile_machine(c: Connectome, scheme: CompressionScheme,
                    cap: CapacitySpec | None = None,
                    cfg: HardwareConfig | None = None,
                    dt_ms: float = 0.1,
                    params: NeuronParams | None = None,
                    fx: FixedPointSpec | None = None) -> CompiledMachine:
    """Partition then build tables in one call."""
    cfg = cfg or HardwareConfig()
    cap = cap or default_capacities(cfg, scheme)
    p = partition_greedy(c, cap, scheme, cfg)
    return build_routing(c, p, scheme, cfg, dt_ms, params=params, fx=fx)


def flatten_machine(m: CompiledMachine) -> np.ndarray:
    """Invert the tables back to an (n_edges, 3) array of original-id
    (src, dst, weight) rows, sorted target-major like the input graph."""
    p = m.partitioning
    n_entries = int(np.diff(m.out_ptr).sum())
    if n_entries == 0:
        return np.empty((0, 3), dtype=np.int64)
    entry_src_slot = np.repeat(np.arange(m.n_neurons, dtype=np.int64),
                               np.diff(m.out_ptr))
    entry_axon = m.core_axon_ptr[m.out_core.astype(np.int64)] + m.out_axon
    counts = (m.axon_del_ptr[entry_axon + 1] - m.axon_del_ptr[entry_axon])
    total = int(counts.sum())
    seg_base = np.repeat(np.cumsum(counts) - counts, counts)
    didx = np.repeat(m.axon_del_ptr[entry_axon], counts) \
        + (np.arange(total, dtype=np.int64) - seg_base)
    edge_src = p.perm[np.repeat(entry_src_slot, counts)]
    edge_core = np.repeat(m.out_core.astype(np.int64), counts)
    edge_dst = p.perm[p.core_neuron_ptr[edge_core] + m.del_local[didx]]
    edge_w = m.del_w[didx].astype(np.int64)
    flat = np.column_stack([edge_src, edge_dst, edge_w])
    return flat[np.lexsort((flat[:, 0], flat[:, 1]))]


@dataclass
class ValidationReport:
    passed: bool
    problems: list[str]

    def __bool__(self) -> bool:
        return self.passed


def validate_machine(m: CompiledMachine, c: Connectome) -> ValidationReport:
    """Check edge-exactly-once, axon-table integrity, and resource limits.
    Reports rather than raising."""
    problems: list[str] = []

    want = c.edge_array()
    want = want[np.lexsort((want[:, 0], want[:, 1]))]
    got = flatten_machine(m)
    if want.shape != got.shape or not np.array_equal(want, got):
        want_set = {tuple(r) for r in want.tolist()}
        got_list = got.tolist()
        got_set = {tuple(r) for r in got_list}
        for s, d, wv in sorted(want_set - got_set)[:8]:
            problems.append(f"missing edge ({s},{d}) weight {wv}")
        for s, d, wv in sorted(got_set - want_set)[:8]:
            problems.append(f"extra edge ({s},{d}) weight {wv}")
        if len(got_list) != len(got_set):
            problems.append("duplicate realized edges")
        if not problems:
            problems.append("edge multiset mismatch")

    if not np.all(np.diff(m.core_axon_ptr) >= 0):
        problems.append("core_axon_ptr not monotone")
    if not np.all(np.diff(m.axon_del_ptr) >= 0):
        problems.append("axon_del_ptr not monotone")
    n_axons = int(m.core_axon_ptr[-1])
    if len(m.axon_del_ptr) != n_axons + 1:
        problems.append("axon_del_ptr length mismatch (axon indices not dense)")
    axon_counts = np.diff(m.core_axon_ptr)
    bad_axon = m.out_axon >= axon_counts[m.out_core]
    if bad_axon.any():
        problems.append(f"{int(bad_axon.sum())} routing entries point past "
                        "their core's axon table")
    core_sizes = np.diff(m.partitioning.core_neuron_ptr)
    if m.del_local.size:
        axon_core_of = np.repeat(np.arange(m.n_cores, dtype=np.int64),
                                 np.diff(m.core_axon_ptr))
        entry_core = axon_core_of[np.repeat(np.arange(n_axons, dtype=np.int64),
                                            np.diff(m.axon_del_ptr))]
        if (m.del_local >= core_sizes[entry_core]).any():
            problems.append("delivery entry targets a local index past core size")

    report = m.memory_report()
    for i in np.flatnonzero(report.over_memory):
        problems.append(
            f"core {int(report.chip[i])}/{int(report.core[i])} over memory: "
            f"{int(report.total_bytes[i])}B > {report.syn_mem_bytes}B")
    for i in np.flatnonzero(report.over_axon_program):
        problems.append(
            f"core {int(report.chip[i])}/{int(report.core[i])} over axon program: "
            f"{int(report.out_entries[i])} > {report.axon_prog_max_entries}")

    return ValidationReport(passed=not problems, problems=problems)


_MACHINE_FORMAT_VERSION = 1


def save_machine(m: CompiledMachine, path) -> None:
    """Serialize to an npz container: a JSON header plus the table arrays."""
    header = {
        "format_version": _MACHINE_FORMAT_VERSION,
        "scheme": m.scheme.value,
        "dt_ms": m.dt_ms,
        "delay_steps": m.delay_steps,
        "weight_scale_mv": m.weight_scale_mv,
        "n_neurons": m.n_neurons,
        "cores_per_chip": m.partitioning.cores_per_chip,
        "n_cores": m.partitioning.n_cores,
        "params": m.params.__dict__,
        "hw": m.hw.__dict__,
        "fx": {"frac_bits": m.fx.frac_bits, "word_bits": m.fx.word_bits,
               "rounding": m.fx.rounding},
        "meta": m.meta,
    }
    np.savez_compressed(
        path,
        header_json=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
        core_of=m.partitioning.core_of,
        core_neuron_ptr=m.partitioning.core_neuron_ptr,
        perm=m.partitioning.perm,
        inv_perm=m.partitioning.inv_perm,
        core_axon_ptr=m.core_axon_ptr,
        axon_del_ptr=m.axon_del_ptr,
        del_w=m.del_w,
        del_delay=m.del_delay,
        del_local=m.del_local,
        out_ptr=m.out_ptr,
        out_core=m.out_core,
        out_axon=m.out_axon,
    )


def load_machine(path) -> CompiledMachine:
    with np.load(path) as z:
        header = json.loads(bytes(z["header_json"]).decode())
        if header["format_version"] != _MACHINE_FORMAT_VERSION:
            raise ValidationError(
                f"unsupported machine format version {header['format_version']}")
        p = Partitioning(
            core_of=z["core_of"], n_cores=header["n_cores"],
            cores_per_chip=header["cores_per_chip"],
            core_neuron_ptr=z["core_neuron_ptr"],
            perm=z["perm"], inv_perm=z["inv_perm"],
        )
        return CompiledMachine(
            scheme=CompressionScheme.parse(header["scheme"]),
            dt_ms=header["dt_ms"], delay_steps=header["delay_steps"],
            weight_scale_mv=header["weight_scale_mv"],
            n_neurons=header["n_neurons"],
            params=NeuronParams(**header["params"]),
            hw=HardwareConfig(**header["hw"]),
            fx=FixedPointSpec(**header["fx"]),
            partitioning=p,
            core_axon_ptr=z["core_axon_ptr"], axon_del_ptr=z["axon_del_ptr"],
            del_w=z["del_w"], del_delay=z["del_delay"], del_local=z["del_local"],
            out_ptr=z["out_ptr"], out_core=z["out_core"], out_axon=z["out_axon"],
            meta=header.get("meta", {}),
        )
