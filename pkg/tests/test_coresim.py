import numpy as np
import pytest

from conftest import build_both_schemes, loose_caps, make_connectome, rand_net
from flat_oracle import flat_fixed_run
from spikemap.compiler import (
    CompressionScheme,
    compile_machine,
    effective_fan_out_all,
)
from spikemap.coresim import (
    RunConfig,
    record_spikes_via_counters,
    run_background_sweep,
    run_compiled,
)
from spikemap.errors import ConfigError, ValidationError
from spikemap.hardware import FixedPointSpec, HardwareConfig
from spikemap.reference import (
    CONDUCTANCE_ONLY,
    DIRECT_VOLTAGE,
    NeuronParams,
    NeuronState,
    StimulusSpec,
    euler_step,
    steps_from_ms,
)

PARAMS = NeuronParams()


def conducting_stim(targets, rate_hz=150.0, amplitude=None):
    return StimulusSpec(targets=targets, rate_hz=rate_hz, mode=CONDUCTANCE_ONLY,
                        amplitude=amplitude)


def test_quiet_run_is_silent():
    c = rand_net(200, 8, seed=0)
    m = compile_machine(c, CompressionScheme.SHARED_AXON_ROUTING,
                        cap=loose_caps(), dt_ms=0.1)
    rec, perf = run_compiled(m, RunConfig(duration_ms=200.0, dt_ms=0.1, seed=1))
    assert len(rec) == 0
    assert perf.spikes == 0
    assert perf.messages_routed == 0


def test_run_rejects_mismatched_dt():
    c = rand_net(50, 4, seed=1)
    m = compile_machine(c, CompressionScheme.SHARED_AXON_ROUTING,
                        cap=loose_caps(), dt_ms=0.1)
    with pytest.raises(ConfigError):
        run_compiled(m, RunConfig(duration_ms=100.0, dt_ms=1.0, seed=1))


def test_run_rejects_direct_voltage_stimulus():
    c = rand_net(50, 4, seed=1)
    with pytest.raises(ValidationError):
        RunConfig(duration_ms=100.0, dt_ms=0.1, seed=1,
                  stimulus=StimulusSpec(targets=[0], rate_hz=10.0,
                                        mode=DIRECT_VOLTAGE))


def test_oracle_equivalence_small_net():
    c = rand_net(300, 12, seed=2)
    p, m_r, m_d = build_both_schemes(c)
    stim = conducting_stim(np.arange(0, 300, 20))
    rc = RunConfig(duration_ms=500.0, dt_ms=0.1, seed=11, stimulus=stim,
                   background_rate_hz=3.0)
    rec_r, perf_r = run_compiled(m_r, rc)
    rec_d, perf_d = run_compiled(m_d, rc)
    os_, on_, oc_ = flat_fixed_run(
        c, p.core_of, p.n_cores, PARAMS, FixedPointSpec(), HardwareConfig(),
        500.0, 0.1, 11,
        stim_targets=stim.targets, stim_rate_hz=stim.rate_hz,
        stim_amplitude=stim.resolve_amplitude(PARAMS), background_rate_hz=3.0)
    assert len(rec_r) > 0
    assert np.array_equal(rec_r.steps, os_) and np.array_equal(rec_r.neurons, on_)
    assert rec_r == rec_d
    assert np.array_equal(perf_r.spikes_per_neuron, oc_)
    assert np.array_equal(perf_d.spikes_per_neuron, oc_)


def test_determinism_same_seed():
    c = rand_net(150, 8, seed=3)
    m = compile_machine(c, CompressionScheme.SHARED_SYNAPTIC_DELIVERY,
                        cap=loose_caps(), dt_ms=0.1)
    rc = RunConfig(duration_ms=300.0, dt_ms=0.1, seed=5,
                   stimulus=conducting_stim(np.arange(10)))
    a, pa = run_compiled(m, rc)
    b, pb = run_compiled(m, rc)
    assert a == b
    assert pa.spikes == pb.spikes
    c2, _ = run_compiled(m, RunConfig(duration_ms=300.0, dt_ms=0.1, seed=6,
                                      stimulus=conducting_stim(np.arange(10))))
    assert a != c2


def test_delay_exactness_probe():
    # A -> B with overwhelming weight: B's first spike follows A's by the
    # wire delay plus B's integration lag, computed independently from the
    # scalar fixed-step contract
    w = 3000
    c = make_connectome([(0, 1, w)])
    m = compile_machine(c, CompressionScheme.SHARED_AXON_ROUTING,
                        cap=loose_caps(per_core_neurons=1),
                        cfg=HardwareConfig(cores_per_chip=2), dt_ms=0.1)
    stim = conducting_stim([0], rate_hz=10000.0, amplitude=200.0)
    rec, _ = run_compiled(m, RunConfig(duration_ms=50.0, dt_ms=0.1, seed=0,
                                       stimulus=stim))
    a_steps = rec.steps[rec.neurons == 0]
    b_steps = rec.steps[rec.neurons == 1]
    delay = steps_from_ms(c.delay_ms, 0.1)
    assert b_steps.min() >= a_steps.min() + delay
    # B is silent until the delay matures even though A fires from step 1
    assert not (b_steps < a_steps.min() + delay).any()


def test_refractory_floor_both_dts():
    for dt, floor in ((0.1, 22), (1.0, 2)):
        c = rand_net(120, 6, seed=4, w_lo=100, w_hi=300)
        m = compile_machine(c, CompressionScheme.SHARED_AXON_ROUTING,
                            cap=loose_caps(), dt_ms=dt)
        rc = RunConfig(duration_ms=1000.0, dt_ms=dt, seed=8,
                       stimulus=conducting_stim(np.arange(6), rate_hz=300.0))
        rec, _ = run_compiled(m, rc)
        assert len(rec) > 20
        for neuron in np.unique(rec.neurons):
            steps = rec.steps[rec.neurons == neuron]
            if len(steps) > 1:
                assert np.diff(steps).min() >= floor


def test_counter_collision_semantics():
    # two neurons on one core spiking in lockstep: count 2 per step, one
    # payload per step
    c = make_connectome([], n=2)
    m = compile_machine(c, CompressionScheme.SHARED_AXON_ROUTING,
                        cap=loose_caps(per_core_neurons=4), dt_ms=0.1)
    assert int(m.partitioning.core_of[0]) == int(m.partitioning.core_of[1])
    stim = conducting_stim([0, 1], rate_hz=10000.0, amplitude=200.0)
    rc = RunConfig(duration_ms=10.0, dt_ms=0.1, seed=0, stimulus=stim,
                   record="counters")
    counter_rec, rep = record_spikes_via_counters(m, rc)
    true_rec, perf = run_compiled(m, rc)
    assert perf.spikes > 0
    assert rep.true_spikes == perf.spikes
    assert rep.per_core_counts.sum() == perf.spikes
    # both spike on the same steps; only one payload survives each step
    steps_a = true_rec.steps[true_rec.neurons == 0]
    steps_b = true_rec.steps[true_rec.neurons == 1]
    assert np.array_equal(steps_a, steps_b)
    assert len(counter_rec) == len(steps_a)
    assert rep.recorded_payloads == len(steps_a)
    # retained payload is the lowest local index (processed last in the
    # descending-order delivery model)
    assert np.all(counter_rec.neurons == 0)
    assert rep.loss_fraction == pytest.approx(0.5)


def test_counter_zero_loss_when_spread():
    # one spiking neuron per core: every payload survives
    c = make_connectome([], n=6)
    m = compile_machine(c, CompressionScheme.SHARED_AXON_ROUTING,
                        cap=loose_caps(per_core_neurons=1),
                        cfg=HardwareConfig(cores_per_chip=6), dt_ms=0.1)
    stim = conducting_stim(np.arange(6), rate_hz=500.0, amplitude=200.0)
    rc = RunConfig(duration_ms=200.0, dt_ms=0.1, seed=3, stimulus=stim,
                   record="counters")
    counter_rec, rep = record_spikes_via_counters(m, rc)
    assert rep.true_spikes > 0
    assert rep.recorded_payloads == rep.true_spikes
    assert rep.loss_fraction == 0.0
    true_rec, _ = run_compiled(m, rc)
    assert counter_rec == true_rec


def test_counters_require_per_core_payload_capacity():
    c = make_connectome([], n=4)
    cfg = HardwareConfig(cores_per_chip=8, payload_counters_per_chip=2)
    m = compile_machine(c, CompressionScheme.SHARED_AXON_ROUTING,
                        cap=loose_caps(per_core_neurons=1), cfg=cfg, dt_ms=0.1)
    rc = RunConfig(duration_ms=10.0, dt_ms=0.1, seed=0, record="counters")
    with pytest.raises(ConfigError):
        run_compiled(m, rc)


def test_counter_totals_match_spikes_exactly():
    c = rand_net(200, 10, seed=5)
    m = compile_machine(c, CompressionScheme.SHARED_SYNAPTIC_DELIVERY,
                        cap=loose_caps(), dt_ms=0.1)
    rc = RunConfig(duration_ms=400.0, dt_ms=0.1, seed=9,
                   stimulus=conducting_stim(np.arange(0, 200, 10)),
                   background_rate_hz=5.0, record="counters")
    _, rep = record_spikes_via_counters(m, rc)
    _, perf = run_compiled(m, rc)
    assert rep.per_core_counts.sum() == perf.spikes == rep.true_spikes


def test_messages_routed_equals_effective_fan_out_sum():
    c = rand_net(250, 10, seed=6)
    p, m_r, m_d = build_both_schemes(c)
    rc = RunConfig(duration_ms=300.0, dt_ms=0.1, seed=2,
                   stimulus=conducting_stim(np.arange(0, 250, 16)),
                   background_rate_hz=4.0)
    for m, scheme in ((m_r, CompressionScheme.SHARED_AXON_ROUTING),
                      (m_d, CompressionScheme.SHARED_SYNAPTIC_DELIVERY)):
        _, perf = run_compiled(m, rc)
        eff = effective_fan_out_all(c, p, scheme)
        assert perf.messages_routed == int(np.dot(perf.spikes_per_neuron, eff))


def test_background_rate_statistics():
    # forced background spiking matches its Bernoulli expectation
    c = rand_net(2000, 5, seed=7, w_lo=1, w_hi=2)
    c.weight_scale_mv = 0.0
    m = compile_machine(c, CompressionScheme.SHARED_AXON_ROUTING,
                        cap=loose_caps(), dt_ms=1.0)
    rate = 20.0
    rc = RunConfig(duration_ms=1000.0, dt_ms=1.0, seed=13)
    rows = run_background_sweep(m, [rate], rc)
    expected = rate * 2000 * 1.0
    sd = np.sqrt(expected)
    assert abs(rows[0]["perf"].spikes - expected) < 4 * sd


def test_background_sweep_requires_null_weight_scale():
    c = rand_net(100, 5, seed=8)
    m = compile_machine(c, CompressionScheme.SHARED_AXON_ROUTING,
                        cap=loose_caps(), dt_ms=1.0)
    with pytest.raises(ValidationError):
        run_background_sweep(m, [1.0], RunConfig(duration_ms=100.0, dt_ms=1.0, seed=0))


def test_background_zero_rate_silent():
    c = rand_net(100, 5, seed=9)
    c.weight_scale_mv = 0.0
    m = compile_machine(c, CompressionScheme.SHARED_AXON_ROUTING,
                        cap=loose_caps(), dt_ms=1.0)
    rows = run_background_sweep(m, [0.0], RunConfig(duration_ms=200.0, dt_ms=1.0, seed=0))
    assert rows[0]["perf"].spikes == 0


def test_fixed_point_matches_scalar_euler_trace():
    # single stimulated neuron: the kernel's fixed-point trajectory spikes
    # within a step of the float scalar contract under the same inputs
    c = make_connectome([], n=1)
    m = compile_machine(c, CompressionScheme.SHARED_AXON_ROUTING,
                        cap=loose_caps(per_core_neurons=1), dt_ms=0.1)
    amp = 60.0
    stim = conducting_stim([0], rate_hz=10000.0, amplitude=amp)
    rec, _ = run_compiled(m, RunConfig(duration_ms=20.0, dt_ms=0.1, seed=1,
                                       stimulus=stim))
    state = NeuronState(0.0, 0.0, 0)
    first_float = None
    for t in range(200):
        state, spiked = euler_step(state, PARAMS, 0.1, amp)
        if spiked:
            first_float = t
            break
    first_fixed = int(rec.steps.min())
    assert abs(first_fixed - first_float) <= 1
