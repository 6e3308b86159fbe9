"""Flat floating-point simulator: the behavioral oracle for the machine.

Two-state leaky integrate-and-fire dynamics per neuron: the membrane
potential v relaxes toward rest plus the input variable g, g decays on its
own time constant, and a threshold crossing resets both and freezes the
neuron for the refractory period. Integration is forward Euler on a fixed
timestep. Poisson stimulus can either force the membrane directly (the
behavioral baseline) or feed g like a synapse (the machine's approximation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from spikemap.connectome import Connectome, quantize_weights
from spikemap.errors import ConfigError, ValidationError
from spikemap.records import SpikeRecord

DIRECT_VOLTAGE = "direct_voltage"
CONDUCTANCE_ONLY = "conductance_only"

# one event must reliably elicit a spike with the default parameters; for
# tau_mem=20ms, tau_in=5ms the peak membrane response to a g impulse of
# amplitude A is about 0.157*A, so 60 mV clears the 7 mV threshold
DEFAULT_CONDUCTANCE_AMPLITUDE_MV = 60.0


def steps_from_ms(ms: float, dt_ms: float) -> int:
    """Convert a time to timesteps, rounding half away from zero."""
    return int(math.floor(ms / dt_ms + 0.5))


def check_step_count(duration_ms: float, dt_ms: float) -> int:
    if dt_ms <= 0:
        raise ConfigError(f"dt_ms must be positive, got {dt_ms}")
    n = duration_ms / dt_ms
    if abs(n - round(n)) > 1e-9 * max(1.0, abs(n)):
        raise ConfigError(f"dt_ms {dt_ms} does not divide duration_ms {duration_ms}")
    return int(round(n))


@dataclass(frozen=True)
class NeuronParams:
    """Shared neuron constants, all voltages in mV and times in ms."""

    v_rest: float = 0.0
    v_reset: float = 0.0
    v_threshold: float = 7.0
    tau_mem_ms: float = 20.0
    tau_in_ms: float = 5.0
    tau_refrac_ms: float = 2.2

    def __post_init__(self):
        if self.tau_mem_ms <= 0 or self.tau_in_ms <= 0:
            raise ConfigError("time constants must be positive")
        if self.tau_refrac_ms < 0:
            raise ConfigError("refractory period must be >= 0")
        if not self.v_threshold > self.v_reset:
            raise ConfigError("threshold must exceed reset potential")

    def refrac_steps(self, dt_ms: float) -> int:
        return steps_from_ms(self.tau_refrac_ms, dt_ms)


@dataclass
class NeuronState:
    """One neuron's mutable state; refractory time is tracked in whole
    timesteps remaining (kept integral so engines agree exactly)."""

    v: float = 0.0
    g: float = 0.0
    refrac_steps: int = 0


def euler_step(state: NeuronState, params: NeuronParams, dt_ms: float,
               input_acc: float) -> tuple[NeuronState, bool]:
    """Advance one neuron by one timestep; returns (new state, spiked).

    Refractory neurons only count down; arriving input is discarded.
    Otherwise input joins g, v integrates toward rest + g using the updated
    g, g decays, and a threshold crossing resets v and g and starts the
    refractory countdown.
    """
    if dt_ms <= 0:
        raise ConfigError(f"dt_ms must be positive, got {dt_ms}")
    if state.refrac_steps > 0:
        return NeuronState(state.v, state.g, state.refrac_steps - 1), False
    g = state.g + input_acc
    v = state.v + dt_ms * (params.v_rest - state.v + g) / params.tau_mem_ms
    g = g - dt_ms * g / params.tau_in_ms
    if v > params.v_threshold:
        return NeuronState(params.v_reset, 0.0, params.refrac_steps(dt_ms)), True
    return NeuronState(v, g, 0), False


@dataclass(eq=False)
class StimulusSpec:
    """External Poisson drive onto a fixed set of target neurons.

    Each target has an independent source firing each step with probability
    rate_hz * dt / 1000. ``direct_voltage`` adds the amplitude straight onto
    the membrane before the threshold check (and exempts the targets from
    the refractory period); ``conductance_only`` feeds g like a synapse and
    leaves the refractory period in force.
    """

    targets: np.ndarray
    rate_hz: float
    mode: str = DIRECT_VOLTAGE
    amplitude: float | None = None

    def __post_init__(self):
        self.targets = np.unique(np.asarray(self.targets, dtype=np.int64))
        if self.rate_hz < 0:
            raise ValidationError(f"rate_hz must be >= 0, got {self.rate_hz}")
        if self.mode not in (DIRECT_VOLTAGE, CONDUCTANCE_ONLY):
            raise ValidationError(f"unknown stimulus mode {self.mode!r}")

    def resolve_amplitude(self, params: NeuronParams) -> float:
        if self.amplitude is not None:
            return float(self.amplitude)
        if self.mode == DIRECT_VOLTAGE:
            return params.v_threshold - params.v_reset + 1.0
        return DEFAULT_CONDUCTANCE_AMPLITUDE_MV

    def fire_probability(self, dt_ms: float) -> float:
        p = self.rate_hz * dt_ms / 1000.0
        if p > 1.0:
            raise ValidationError(
                f"rate {self.rate_hz} Hz exceeds one event per {dt_ms} ms step")
        return p


@dataclass(frozen=True)
class ModelToggles:
    """The two machine approximations, applied independently or jointly."""

    conductance_only_input: bool = False
    capped_weights: bool = False


@dataclass
class ReferenceConfig:
    """Bundled run configuration for the reference engine."""

    params: NeuronParams
    stimulus: StimulusSpec
    duration_ms: float
    dt_ms: float
    weight_bits: int | None = None


def apply_model_toggles(base: ReferenceConfig, toggles: ModelToggles) -> ReferenceConfig:
    """Derive the ablation variant configs from a baseline config.

    With both toggles off the baseline is returned unchanged; with both on
    the result is a behavioral stand-in for the compiled machine: stimulus
    through g only, and 9-bit capped weights.
    """
    stim = base.stimulus
    if toggles.conductance_only_input:
        stim = replace(stim, mode=CONDUCTANCE_ONLY)
    bits = 9 if toggles.capped_weights else base.weight_bits
    return ReferenceConfig(params=base.params, stimulus=stim,
                           duration_ms=base.duration_ms, dt_ms=base.dt_ms,
                           weight_bits=bits)


def _stim_fire_table(stim: StimulusSpec, n_steps: int, dt_ms: float,
                     seed: int) -> np.ndarray:
    """Per-target Bernoulli draws, one counter-based stream per neuron so
    the result is independent of iteration order: stream key = (seed,
    neuron index), position in stream = timestep."""
    p = stim.fire_probability(dt_ms)
    fires = np.zeros((len(stim.targets), n_steps), dtype=bool)
    if p == 0.0:
        return fires
    key_hi = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    for j, neuron in enumerate(stim.targets):
        gen = np.random.Generator(np.random.Philox(key=[key_hi, np.uint64(neuron)]))
        fires[j] = gen.random(n_steps) < p
    return fires


def run_reference(c: Connectome, params: NeuronParams, stim: StimulusSpec | None,
                  duration_ms: float, dt_ms: float, seed: int,
                  weight_bits: int | None = None) -> SpikeRecord:
    """Simulate the whole graph and return the spike record.

    Within a step: matured delayed deliveries land in g, stimulus is
    applied, all non-refractory neurons integrate, threshold crossings
    reset and enqueue outgoing spikes at now + delay. Deterministic under
    (config, seed).
    """
    n_steps = check_step_count(duration_ms, dt_ms)
    delay_steps = steps_from_ms(c.delay_ms, dt_ms)
    if delay_steps < 1:
        raise ConfigError(
            f"synaptic delay {c.delay_ms} ms is below one {dt_ms} ms timestep")
    if weight_bits is not None:
        c, _ = quantize_weights(c, weight_bits)

    n = c.n_neurons
    out_ptr, out_dst, out_w = c.out_adjacency()
    w_scaled = out_w.astype(np.float64) * c.weight_scale_mv

    depth = delay_steps + 1
    ring = np.zeros((depth, n), dtype=np.float64)
    v = np.full(n, params.v_rest, dtype=np.float64)
    g = np.zeros(n, dtype=np.float64)
    refrac = np.zeros(n, dtype=np.int64)

    refrac_assign = np.full(n, params.refrac_steps(dt_ms), dtype=np.int64)
    stim_targets = np.empty(0, dtype=np.int64)
    fires = None
    amp = 0.0
    direct = False
    if stim is not None and len(stim.targets):
        if stim.targets.max() >= n:
            raise ValidationError("stimulus target index out of range")
        stim_targets = stim.targets
        fires = _stim_fire_table(stim, n_steps, dt_ms, seed)
        amp = stim.resolve_amplitude(params)
        direct = stim.mode == DIRECT_VOLTAGE
        if direct:
            refrac_assign[stim_targets] = 0  # directly driven sources never freeze

    cv = dt_ms / params.tau_mem_ms
    cg = dt_ms / params.tau_in_ms
    ev_steps: list[np.ndarray] = []
    ev_neurons: list[np.ndarray] = []

    for t in range(n_steps):
        slot = t % depth
        acc = ring[slot]
        if fires is not None:
            fired = stim_targets[fires[:, t]]
            if fired.size:
                if direct:
                    v[fired] += amp
                else:
                    acc[fired] += amp

        ref_idx = np.flatnonzero(refrac > 0)
        v_save = v[ref_idx]
        g_save = g[ref_idx]
        g += acc
        v += cv * (params.v_rest - v + g)
        g -= cg * g
        v[ref_idx] = v_save  # frozen: no integration, inputs dropped
        g[ref_idx] = g_save
        refrac[ref_idx] -= 1

        spiked = v > params.v_threshold
        if ref_idx.size:
            spiked[ref_idx] = False
        sp_idx = np.flatnonzero(spiked)
        if sp_idx.size:
            ev_steps.append(np.full(sp_idx.size, t, dtype=np.int64))
            ev_neurons.append(sp_idx.copy())
            v[sp_idx] = params.v_reset
            g[sp_idx] = 0.0
            refrac[sp_idx] = refrac_assign[sp_idx]
            wslot = (t + delay_steps) % depth
            dsts = np.concatenate([out_dst[out_ptr[s]:out_ptr[s + 1]] for s in sp_idx])
            ws = np.concatenate([w_scaled[out_ptr[s]:out_ptr[s + 1]] for s in sp_idx])
            np.add.at(ring[wslot], dsts, ws)
        acc[:] = 0.0

    steps = np.concatenate(ev_steps) if ev_steps else np.empty(0, dtype=np.int64)
    neurons = np.concatenate(ev_neurons) if ev_neurons else np.empty(0, dtype=np.int64)
    return SpikeRecord(steps=steps, neurons=neurons, dt_ms=dt_ms,
                       duration_ms=duration_ms, seed=seed, n_neurons=n)


def run_reference_config(c: Connectome, cfg: ReferenceConfig, seed: int) -> SpikeRecord:
    return run_reference(c, cfg.params, cfg.stimulus, cfg.duration_ms,
                         cfg.dt_ms, seed, weight_bits=cfg.weight_bits)
