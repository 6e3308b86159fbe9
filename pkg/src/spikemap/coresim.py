"""Execute a compiled machine: fixed-point, event-driven, deterministic.

The engine consumes the machine's routing/delivery tables directly, models
the per-neuron dendritic accumulator ring (24-bit saturation applied when a
slot is consumed), per-core LFSR randomness for stimulus and background
spiking, and the per-chip spike counters with their payload-collision
semantics.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from spikemap import _kernels
from spikemap.compiler import CompiledMachine
from spikemap.errors import ConfigError, ValidationError
from spikemap.hardware import ACC_MAX, ACC_MIN, core_lfsr_seed, probability_threshold, to_fixed
from spikemap.records import SpikeRecord
from spikemap.reference import CONDUCTANCE_ONLY, StimulusSpec, check_step_count

RECORD_COUNTERS = "counters"
RECORD_NONE = "none"


@dataclass
class RunConfig:
    """One run of the compiled machine.

    ``record`` selects the modeled hardware recording path: ``counters``
    engages the per-core payload spike counters, ``none`` leaves them off.
    The emulator itself always observes the true spike train; counters exist
    to model their payload-loss behavior. Stimulus must be conductance-only
    (the machine has no direct-voltage input path).
    """

    duration_ms: float
    dt_ms: float
    seed: int
    stimulus: StimulusSpec | None = None
    background_rate_hz: float = 0.0
    record: str = RECORD_NONE

    def __post_init__(self):
        if self.record not in (RECORD_COUNTERS, RECORD_NONE):
            raise ConfigError(f"record must be 'counters' or 'none', got {self.record!r}")
        if self.background_rate_hz < 0:
            raise ConfigError("background_rate_hz must be >= 0")
        if self.stimulus is not None and self.stimulus.mode != CONDUCTANCE_ONLY:
            raise ValidationError(
                "compiled-machine stimulus must be conductance_only; "
                "direct voltage drive exists only in the reference engine")


@dataclass(eq=False)
class PerfCounters:
    """Event-volume totals; the artifact's runtime proxy."""

    steps: int
    neuron_updates: int
    spikes: int
    messages_routed: int
    accumulator_additions: int
    accumulator_saturations: int
    spikes_per_neuron: np.ndarray = field(repr=False)

    def to_json_dict(self) -> dict:
        return {
            "steps": self.steps,
            "neuron_updates": self.neuron_updates,
            "spikes": self.spikes,
            "messages_routed": self.messages_routed,
            "accumulator_additions": self.accumulator_additions,
            "accumulator_saturations": self.accumulator_saturations,
        }


@dataclass(eq=False)
class CounterReport:
    """Spike-counter accounting: counts are exact, payloads can collide."""

    true_spikes: int
    recorded_payloads: int
    per_core_counts: np.ndarray

    @property
    def loss_fraction(self) -> float:
        if self.true_spikes == 0:
            return 0.0
        return 1.0 - self.recorded_payloads / self.true_spikes


def _execute(m: CompiledMachine, rc: RunConfig):
    if rc.dt_ms != m.dt_ms:
        raise ConfigError(
            f"run dt {rc.dt_ms} ms does not match machine dt {m.dt_ms} ms "
            "(delays were encoded at compile time)")
    if (rc.record == RECORD_COUNTERS
            and m.hw.cores_per_chip > m.hw.payload_counters_per_chip):
        raise ConfigError(
            "counter recording assigns one payload counter per core, but "
            f"cores_per_chip {m.hw.cores_per_chip} exceeds the "
            f"{m.hw.payload_counters_per_chip} payload counters per chip")
    n_steps = check_step_count(rc.duration_ms, rc.dt_ms)
    n = m.n_neurons
    p = m.partitioning
    fx = m.fx
    params = m.params
    depth = m.hw.accum_depth

    stim_flag = np.zeros(n, dtype=np.uint8)
    stim_thresh = np.zeros(n, dtype=np.uint64)
    stim_amp_fx = 0
    if rc.stimulus is not None and len(rc.stimulus.targets):
        targets = rc.stimulus.targets
        if targets.max() >= n:
            raise ValidationError("stimulus target index out of range")
        slots = p.inv_perm[targets]
        stim_flag[slots] = 1
        thresh = probability_threshold(rc.stimulus.fire_probability(rc.dt_ms))
        stim_thresh[slots] = np.uint64(thresh)
        stim_amp_fx = to_fixed(rc.stimulus.resolve_amplitude(params), fx)

    bg_enabled = 1 if rc.background_rate_hz > 0 else 0
    bg_thresh = np.zeros(n, dtype=np.uint64)
    if bg_enabled:
        pbg = rc.background_rate_hz * rc.dt_ms / 1000.0
        if pbg > 1.0:
            raise ValidationError(
                f"background rate {rc.background_rate_hz} Hz exceeds one event "
                f"per {rc.dt_ms} ms step")
        bg_thresh[:] = np.uint64(probability_threshold(pbg))

    v = np.full(n, to_fixed(params.v_rest, fx), dtype=np.int64)
    g = np.zeros(n, dtype=np.int64)
    refrac = np.zeros(n, dtype=np.int64)
    ring = np.zeros((depth, n), dtype=np.int64)
    lfsr = np.array([core_lfsr_seed(rc.seed, core) for core in range(p.n_cores)],
                    dtype=np.uint64)

    out = _kernels.run_machine(
        n_steps, depth, n, p.n_cores,
        p.core_neuron_ptr,
        v, g, refrac,
        ring,
        lfsr,
        stim_flag, stim_thresh, np.int64(stim_amp_fx),
        np.uint8(bg_enabled), bg_thresh,
        np.int64(to_fixed(rc.dt_ms / params.tau_mem_ms, fx)),
        np.int64(to_fixed(rc.dt_ms / params.tau_in_ms, fx)),
        np.int64(to_fixed(params.v_rest, fx)),
        np.int64(to_fixed(params.v_reset, fx)),
        np.int64(to_fixed(params.v_threshold, fx)),
        np.int64(params.refrac_steps(rc.dt_ms)),
        np.int64(to_fixed(m.weight_scale_mv, fx)),
        np.int64(fx.frac_bits), np.int64(fx.min_int), np.int64(fx.max_int),
        np.int64(ACC_MIN), np.int64(ACC_MAX),
        m.core_axon_ptr, m.axon_del_ptr,
        m.del_w.astype(np.int64), m.del_delay.astype(np.int64),
        m.del_local.astype(np.int64),
        m.out_ptr, m.out_core.astype(np.int64), m.out_axon.astype(np.int64),
        np.uint8(1 if rc.record == RECORD_COUNTERS else 0),
    )
    (ev_s, ev_n, spn_slot, spikes, messages, acc_adds, acc_sats,
     counter_counts, pay_s, pay_n) = out

    spn = np.zeros(n, dtype=np.int64)
    spn[p.perm] = spn_slot
    record = SpikeRecord(steps=ev_s, neurons=p.perm[ev_n], dt_ms=rc.dt_ms,
                         duration_ms=rc.duration_ms, seed=rc.seed, n_neurons=n)
    perf = PerfCounters(
        steps=n_steps,
        neuron_updates=n_steps * n,
        spikes=int(spikes),
        messages_routed=int(messages),
        accumulator_additions=int(acc_adds),
        accumulator_saturations=int(acc_sats),
        spikes_per_neuron=spn,
    )
    counter_record = SpikeRecord(steps=pay_s, neurons=p.perm[pay_n],
                                 dt_ms=rc.dt_ms, duration_ms=rc.duration_ms,
                                 seed=rc.seed, n_neurons=n)
    counters = CounterReport(true_spikes=int(spikes),
                             recorded_payloads=len(pay_s),
                             per_core_counts=counter_counts)
    return record, perf, counter_record, counters


def run_compiled(m: CompiledMachine, rc: RunConfig) -> tuple[SpikeRecord, PerfCounters]:
    """Run the machine; returns the true spike record (original neuron ids)
    and the event-volume counters. Deterministic under (machine, config,
    seed)."""
    record, perf, _, _ = _execute(m, rc)
    return record, perf


def record_spikes_via_counters(m: CompiledMachine, rc: RunConfig
                               ) -> tuple[SpikeRecord, CounterReport]:
    """Run with the per-core payload counters engaged and return what they
    captured. Counts are exact; when k >= 2 neurons on one core spike in the
    same step the counter adds k but keeps a single payload, the one
    processed last in descending-local-index delivery order (the lowest
    local index)."""
    if rc.record != RECORD_COUNTERS:
        rc = replace(rc, record=RECORD_COUNTERS)
    _, _, counter_record, counters = _execute(m, rc)
    return counter_record, counters


def run_background_sweep(m: CompiledMachine, rates_hz: list[float],
                         rc_template: RunConfig) -> list[dict]:
    """One run per background rate; spike totals scale with rate while the
    synaptic workload (messages, accumulator additions) exercises the full
    routing fabric. Requires a machine whose weight scale quantizes to zero
    so deliveries cannot elicit threshold spikes."""
    if to_fixed(m.weight_scale_mv, m.fx) != 0:
        raise ValidationError(
            "background sweep requires a machine compiled with a weight scale "
            "that quantizes to zero, so synaptic input cannot cause spikes")
    rows = []
    for rate in rates_hz:
        rc = replace(rc_template, background_rate_hz=float(rate))
        t0 = time.perf_counter()
        _, perf = run_compiled(m, rc)
        wall = time.perf_counter() - t0
        rows.append({"rate_hz": float(rate), "perf": perf, "wall_time_s": wall})
    return rows
