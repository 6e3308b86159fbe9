import math

import numpy as np
import pytest

from conftest import make_connectome, rand_net
from spikemap.connectome import quantize_weights
from spikemap.errors import ConfigError, ValidationError
from spikemap.records import SpikeRecord
from spikemap.reference import (
    CONDUCTANCE_ONLY,
    DIRECT_VOLTAGE,
    ModelToggles,
    NeuronParams,
    NeuronState,
    ReferenceConfig,
    StimulusSpec,
    apply_model_toggles,
    euler_step,
    run_reference,
    run_reference_config,
    steps_from_ms,
)

PARAMS = NeuronParams()


def test_steps_from_ms():
    assert steps_from_ms(1.8, 0.1) == 18
    assert steps_from_ms(2.2, 0.1) == 22
    assert steps_from_ms(1.8, 1.0) == 2
    assert steps_from_ms(2.2, 1.0) == 2


def test_euler_rest_is_fixed_point():
    state, spiked = euler_step(NeuronState(0.0, 0.0, 0), PARAMS, 0.1, 0.0)
    assert not spiked
    assert state.v == 0.0 and state.g == 0.0


def test_euler_arithmetic():
    state, spiked = euler_step(NeuronState(0.0, 1.0, 0), PARAMS, 0.1, 0.0)
    assert not spiked
    assert state.v == pytest.approx(0.005, abs=1e-15)
    assert state.g == pytest.approx(0.98, abs=1e-15)


def test_euler_spike_reset_and_refractory():
    state, spiked = euler_step(NeuronState(7.5, 0.0, 0), PARAMS, 0.1, 0.0)
    assert spiked
    assert state.v == PARAMS.v_reset and state.g == 0.0
    assert state.refrac_steps == 22


def test_euler_refractory_freezes_and_drops_input():
    state, spiked = euler_step(NeuronState(3.0, 2.0, 5), PARAMS, 0.1, 10.0)
    assert not spiked
    assert state.v == 3.0 and state.g == 2.0
    assert state.refrac_steps == 4


def test_euler_tracks_closed_form_with_held_g():
    # hold g at 10 mV; v should follow 10*(1 - exp(-t/tau_mem)) within 0.5%
    # by t = 20 ms
    params = NeuronParams(v_threshold=20.0)
    dt = 0.1
    state = NeuronState(0.0, 10.0, 0)
    for _ in range(200):
        state, spiked = euler_step(state, params, dt, 0.0)
        assert not spiked
        state = NeuronState(state.v, 10.0, state.refrac_steps)
    closed = 10.0 * (1.0 - math.exp(-20.0 / params.tau_mem_ms))
    assert abs(state.v - closed) / closed < 0.005


def test_no_input_silence():
    c = rand_net(200, 8, seed=0)
    rec = run_reference(c, PARAMS, None, 200.0, 0.1, seed=1)
    assert len(rec) == 0


def test_run_reference_deterministic():
    c = rand_net(150, 6, seed=2)
    stim = StimulusSpec(targets=np.arange(10), rate_hz=150.0)
    a = run_reference(c, PARAMS, stim, 300.0, 0.1, seed=5)
    b = run_reference(c, PARAMS, stim, 300.0, 0.1, seed=5)
    assert a == b
    c2 = run_reference(c, PARAMS, stim, 300.0, 0.1, seed=6)
    assert a != c2


def test_direct_stimulus_forces_spikes_at_source_rate():
    c = make_connectome([], n=5)
    stim = StimulusSpec(targets=[0, 1], rate_hz=150.0, mode=DIRECT_VOLTAGE)
    rec = run_reference(c, PARAMS, stim, 2000.0, 0.1, seed=3)
    counts = rec.spike_counts(5)
    assert counts[2:].sum() == 0
    # every Poisson event elicits a spike, so the rate tracks 150 Hz
    for t in (0, 1):
        assert abs(counts[t] / 2.0 - 150.0) < 40.0


def test_direct_stimulated_neurons_bypass_refractory():
    c = make_connectome([], n=2)
    stim = StimulusSpec(targets=[0], rate_hz=2000.0, mode=DIRECT_VOLTAGE)
    rec = run_reference(c, PARAMS, stim, 500.0, 0.1, seed=4)
    isi = np.diff(rec.steps[rec.neurons == 0])
    assert (isi < 22).any()  # refractory does not apply to the driven source


def test_conductance_stimulus_respects_refractory():
    c = make_connectome([], n=2)
    stim = StimulusSpec(targets=[0], rate_hz=2000.0, mode=CONDUCTANCE_ONLY,
                        amplitude=200.0)
    rec = run_reference(c, PARAMS, stim, 500.0, 0.1, seed=4)
    spikes = rec.steps[rec.neurons == 0]
    assert len(spikes) > 3
    assert np.diff(spikes).min() >= 22


def test_delay_arithmetic_exact():
    # force A to spike every step; B's first spike lags A's first spike by
    # exactly delay_steps plus B's integration time to threshold, computed
    # here by stepping the scalar contract independently
    w = 2000
    c = make_connectome([(0, 1, w)])
    stim = StimulusSpec(targets=[0], rate_hz=10000.0, mode=DIRECT_VOLTAGE)
    rec = run_reference(c, PARAMS, stim, 50.0, 0.1, seed=0)
    a_first = int(rec.steps[rec.neurons == 0].min())
    b_first = int(rec.steps[rec.neurons == 1].min())
    assert a_first == 0

    delay_steps = steps_from_ms(c.delay_ms, 0.1)
    state = NeuronState(0.0, 0.0, 0)
    k = 0
    # B receives w*scale into g at the delivery step, then more every step
    # (A fires every step); count steps until threshold
    while True:
        state, spiked = euler_step(state, PARAMS, 0.1, w * c.weight_scale_mv)
        k += 1
        if spiked:
            break
    assert b_first == a_first + delay_steps + (k - 1)


def test_delivery_not_earlier_than_delay():
    w = 5000  # saturating drive: B fires as soon as anything arrives
    c = make_connectome([(0, 1, w)])
    stim = StimulusSpec(targets=[0], rate_hz=10000.0, mode=DIRECT_VOLTAGE)
    rec = run_reference(c, PARAMS, stim, 20.0, 0.1, seed=0)
    b_steps = rec.steps[rec.neurons == 1]
    assert b_steps.min() >= steps_from_ms(c.delay_ms, 0.1)


def test_g_accumulation_linearity():
    # two edges delivering w1, w2 in the same step match one edge of w1+w2
    params = NeuronParams(v_threshold=1000.0)
    stim = StimulusSpec(targets=[0, 1], rate_hz=10000.0, mode=DIRECT_VOLTAGE,
                        amplitude=2000.0)
    c_two = make_connectome([(0, 2, 3), (1, 2, 5)], n=3)
    c_one = make_connectome([(0, 2, 8), (1, 3, 1)], n=4)
    # drive sources identically; compare target 2's first spike with a low
    # threshold probe instead: use spike timing as the observable
    probe = NeuronParams(v_threshold=2.0)
    rec_two = run_reference(c_two, probe, stim, 30.0, 0.1, seed=1)
    rec_one = run_reference(c_one, probe, stim, 30.0, 0.1, seed=1)
    t_two = rec_two.steps[rec_two.neurons == 2]
    t_one = rec_one.steps[rec_one.neurons == 2]
    assert np.array_equal(t_two, t_one)


def test_refractory_interval_floor():
    c = rand_net(100, 10, seed=3, w_lo=150, w_hi=400)
    stim = StimulusSpec(targets=np.arange(8), rate_hz=300.0, mode=CONDUCTANCE_ONLY)
    rec = run_reference(c, PARAMS, stim, 1000.0, 0.1, seed=9)
    assert len(rec) > 50
    for neuron in np.unique(rec.neurons):
        steps = rec.steps[rec.neurons == neuron]
        if len(steps) > 1:
            assert np.diff(steps).min() >= 22


def test_apply_model_toggles():
    base = ReferenceConfig(params=PARAMS,
                           stimulus=StimulusSpec(targets=[0], rate_hz=150.0),
                           duration_ms=100.0, dt_ms=0.1)
    same = apply_model_toggles(base, ModelToggles())
    assert same.stimulus.mode == DIRECT_VOLTAGE and same.weight_bits is None
    hw_like = apply_model_toggles(base, ModelToggles(True, True))
    assert hw_like.stimulus.mode == CONDUCTANCE_ONLY
    assert hw_like.weight_bits == 9
    capped_only = apply_model_toggles(base, ModelToggles(capped_weights=True))
    assert capped_only.stimulus.mode == DIRECT_VOLTAGE
    assert capped_only.weight_bits == 9


def test_capped_weights_toggle_matches_prequantized_graph():
    c = make_connectome([(0, 1, 2000), (0, 2, -900)])
    stim = StimulusSpec(targets=[0], rate_hz=150.0)
    base = ReferenceConfig(params=PARAMS, stimulus=stim, duration_ms=300.0, dt_ms=0.1)
    toggled = apply_model_toggles(base, ModelToggles(capped_weights=True))
    rec_a = run_reference_config(c, toggled, seed=2)
    q, _ = quantize_weights(c, 9)
    rec_b = run_reference_config(q, base, seed=2)
    assert rec_a == rec_b


def test_bad_configs_rejected():
    c = make_connectome([(0, 1, 1)])
    with pytest.raises(ConfigError):
        run_reference(c, PARAMS, None, 100.0, 0.3, seed=0)  # dt doesn't divide
    c.delay_ms = 0.04
    with pytest.raises(ConfigError):
        run_reference(c, PARAMS, None, 100.0, 0.1, seed=0)  # sub-step delay
    with pytest.raises(ValidationError):
        run_reference(make_connectome([(0, 1, 1)]), PARAMS,
                      StimulusSpec(targets=[5], rate_hz=1.0), 100.0, 0.1, seed=0)


def test_spike_record_csv_roundtrip(tmp_path):
    c = rand_net(80, 6, seed=1)
    stim = StimulusSpec(targets=np.arange(6), rate_hz=150.0)
    rec = run_reference(c, PARAMS, stim, 200.0, 0.1, seed=7)
    path = tmp_path / "spikes.csv"
    rec.write_csv(path)
    back = SpikeRecord.read_csv(path)
    assert back == rec
