"""Single executable driving ingest -> compile -> run -> compare workflows.

Exit codes: 0 ok, 1 runtime error, 2 validation or infeasibility. Outputs
are byte-identical for identical config + seed; wall-clock timings go to
stderr only.
"""

from __future__ import annotations

import functools
import sys

import click
import numpy as np

from spikemap import analysis, connectome as cg, coresim
from spikemap.compiler import (
    CapacitySpec,
    CompressionScheme,
    compile_machine,
    load_machine,
    save_machine,
)
from spikemap.config import ExperimentConfig, kv_hash, load_stim_targets, parse_kv
from spikemap.errors import SpikemapError, ValidationError
from spikemap.hardware import HardwareConfig
from spikemap.records import SpikeRecord
from spikemap.reference import (
    CONDUCTANCE_ONLY,
    ModelToggles,
    NeuronParams,
    ReferenceConfig,
    StimulusSpec,
    apply_model_toggles,
    run_reference_config,
)


def _guard(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except SpikemapError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
    return wrapper


@click.group()
def main():
    """Connectome-to-machine compiler and paired simulators."""


def _load_connectome(path) -> cg.Connectome:
    if str(path).endswith(".csv"):
        return cg.load_edge_table(path)
    return cg.Connectome.load_npz(path)


def _parse_targets(stim_targets: str | None, stimulus_file: str | None) -> np.ndarray:
    if stimulus_file:
        return load_stim_targets(stimulus_file)
    if stim_targets:
        return np.array([int(t) for t in stim_targets.split(",")], dtype=np.int64)
    return np.empty(0, dtype=np.int64)


@main.command()
@click.option("--edges", required=True, type=click.Path(exists=True),
              help="Edge table CSV with src,dst,weight header.")
@click.option("--out", required=True, type=click.Path())
@click.option("--delay-ms", default=cg.DEFAULT_DELAY_MS, show_default=True)
@click.option("--weight-scale-mv", default=cg.DEFAULT_WEIGHT_SCALE_MV, show_default=True)
@click.option("--quantize-bits", type=int, default=None,
              help="Clamp weights to this signed bit width after condensing.")
@click.option("--cap-fan-in", type=int, default=None,
              help="Sample+rescale in-edges of neurons above this fan-in.")
@click.option("--cap-seed", type=int, default=0, show_default=True)
@_guard
def ingest(edges, out, delay_ms, weight_scale_mv, quantize_bits, cap_fan_in, cap_seed):
    """Load, condense, and optionally quantize/cap an edge table."""
    c = cg.load_edge_table(edges, delay_ms=delay_ms, weight_scale_mv=weight_scale_mv)
    click.echo(f"loaded {c.n_neurons} neurons, {c.n_edges} condensed edges")
    if c.n_edges:
        click.echo(f"weight range [{int(c.in_w.min())}, {int(c.in_w.max())}]")
    if cap_fan_in is not None:
        c = cg.cap_fan_in(c, cap_fan_in, seed=cap_seed)
        click.echo(f"fan-in capped at {cap_fan_in}: {c.n_edges} edges remain")
    if quantize_bits is not None:
        c, rep = cg.quantize_weights(c, quantize_bits)
        click.echo(f"quantized to {quantize_bits} bits "
                   f"[{rep.cap_lo}, {rep.cap_hi}]: "
                   f"{rep.n_capped_neg} negative and {rep.n_capped_pos} positive capped")
    c.save_npz(out)
    click.echo(f"wrote {out}")


@main.command()
@click.option("--neurons", "-n", required=True, type=int)
@click.option("--mean-degree", required=True, type=float)
@click.option("--tail-exponent", default=2.0, show_default=True)
@click.option("--w-lo", default=-32, show_default=True)
@click.option("--w-hi", default=32, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--delay-ms", default=cg.DEFAULT_DELAY_MS, show_default=True)
@click.option("--weight-scale-mv", default=cg.DEFAULT_WEIGHT_SCALE_MV, show_default=True)
@click.option("--out", required=True, type=click.Path())
@_guard
def synth(neurons, mean_degree, tail_exponent, w_lo, w_hi, seed, delay_ms,
          weight_scale_mv, out):
    """Generate a heavy-tailed synthetic connectome."""
    c = cg.generate_synthetic(neurons, mean_degree, tail_exponent,
                              w_dist={"kind": "uniform_int", "lo": w_lo, "hi": w_hi},
                              seed=seed, delay_ms=delay_ms,
                              weight_scale_mv=weight_scale_mv)
    c.save_npz(out)
    stats = cg.degree_stats(c)
    click.echo(f"generated {c.n_neurons} neurons, {c.n_edges} edges; "
               f"max fan-in {stats.max_fan_in}, max fan-out {stats.max_fan_out}")
    click.echo(f"wrote {out}")


@main.command()
@click.option("--connectome", "conn_path", required=True, type=click.Path(exists=True))
@click.option("--per-neuron-csv", type=click.Path(), default=None,
              help="Write neuron_id,fan_in,fan_out rows.")
@click.option("--fan-in-dist", type=click.Path(), default=None,
              help="Write the cumulative-sorted fan-in distribution.")
@click.option("--fan-out-dist", type=click.Path(), default=None)
@_guard
def stats(conn_path, per_neuron_csv, fan_in_dist, fan_out_dist):
    """Degree statistics of a connectome."""
    c = _load_connectome(conn_path)
    st = cg.degree_stats(c)
    click.echo(f"{c.n_neurons} neurons, {c.n_edges} edges")
    click.echo(f"max fan-in {st.max_fan_in}, max fan-out {st.max_fan_out}")
    click.echo(f"fan-in sum {int(st.fan_in.sum())}, fan-out sum {int(st.fan_out.sum())}")
    if per_neuron_csv:
        st.to_csv(per_neuron_csv)
    if fan_in_dist:
        analysis.export_distribution(st.fan_in, fan_in_dist)
    if fan_out_dist:
        analysis.export_distribution(st.fan_out, fan_out_dist)


@main.command()
@click.option("--connectome", "conn_path", required=True, type=click.Path(exists=True))
@click.option("--scheme", type=click.Choice(["delivery", "routing"]), required=True)
@click.option("--capacities", "capacities_file", type=click.Path(exists=True),
              default=None, help="kv file of CapacitySpec fields.")
@click.option("--hw", "hw_file", type=click.Path(exists=True), default=None,
              help="kv file of HardwareConfig fields.")
@click.option("--dt", "dt_ms", default=0.1, show_default=True)
@click.option("--quantize-bits", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--memory-report", "memory_report_csv", type=click.Path(), default=None)
@_guard
def compile(conn_path, scheme, capacities_file, hw_file, dt_ms, quantize_bits,
            out, memory_report_csv):
    """Partition onto cores and build routing/delivery tables."""
    c = _load_connectome(conn_path)
    if quantize_bits is not None:
        c, _ = cg.quantize_weights(c, quantize_bits)
    cfg = HardwareConfig.from_kv(parse_kv(hw_file)) if hw_file else HardwareConfig()
    cap = CapacitySpec.from_kv(parse_kv(capacities_file)) if capacities_file else None
    m = compile_machine(c, CompressionScheme.parse(scheme), cap=cap, cfg=cfg,
                        dt_ms=dt_ms)
    m.meta["config_hash"] = kv_hash({
        "connectome": str(conn_path), "scheme": scheme, "dt_ms": str(dt_ms),
        "quantize_bits": str(quantize_bits),
    })
    save_machine(m, out)
    report = m.memory_report()
    used = m.partitioning.neurons_per_core() > 0
    click.echo(f"compiled onto {m.n_chips} chips ({m.n_cores} cores, "
               f"{int(used.sum())} occupied)")
    click.echo(f"mean utilization {report.utilization.mean() * 100:.2f}%")
    if memory_report_csv:
        report.to_csv(memory_report_csv, meta={"config_hash": m.meta["config_hash"]})
    click.echo(f"wrote {out}")


_STIM_OPTIONS = [
    click.option("--stimulus", "stimulus_file", type=click.Path(exists=True),
                 default=None, help="CSV of target neuron ids (header neuron_id)."),
    click.option("--stim-targets", default=None,
                 help="Comma-separated target neuron ids."),
    click.option("--stim-rate", "stim_rate_hz", default=150.0, show_default=True),
    click.option("--stim-amplitude", type=float, default=None),
]


def _with_options(opts):
    def deco(f):
        for opt in reversed(opts):
            f = opt(f)
        return f
    return deco


@main.command("run-ref")
@click.option("--connectome", "conn_path", required=True, type=click.Path(exists=True))
@click.option("--duration", "duration_ms", default=1000.0, show_default=True)
@click.option("--dt", "dt_ms", default=0.1, show_default=True)
@click.option("--seed", required=True, type=int)
@_with_options(_STIM_OPTIONS)
@click.option("--stim-mode", type=click.Choice(["direct_voltage", "conductance_only"]),
              default="direct_voltage", show_default=True)
@click.option("--toggles", default="",
              help="Comma list from {conductance_only,capped_weights}.")
@click.option("--params", "params_file", type=click.Path(exists=True), default=None,
              help="kv file of neuron parameters (v_rest, v_reset, v_threshold, "
                   "tau_mem_ms, tau_in_ms, tau_refrac_ms).")
@click.option("--out", required=True, type=click.Path())
@_guard
def run_ref(conn_path, duration_ms, dt_ms, seed, stimulus_file, stim_targets,
            stim_rate_hz, stim_amplitude, stim_mode, toggles, params_file, out):
    """Run the floating-point reference simulator."""
    c = _load_connectome(conn_path)
    params = NeuronParams(**{k: float(v) for k, v in parse_kv(params_file).items()}) \
        if params_file else NeuronParams()
    targets = _parse_targets(stim_targets, stimulus_file)
    stim = StimulusSpec(targets=targets, rate_hz=stim_rate_hz, mode=stim_mode,
                        amplitude=stim_amplitude)
    cfg = ReferenceConfig(params=params, stimulus=stim, duration_ms=duration_ms,
                          dt_ms=dt_ms)
    toggle_set = {t.strip() for t in toggles.split(",") if t.strip()}
    unknown = toggle_set - {"conductance_only", "capped_weights"}
    if unknown:
        raise ValidationError(f"unknown toggles: {sorted(unknown)}")
    cfg = apply_model_toggles(cfg, ModelToggles(
        conductance_only_input="conductance_only" in toggle_set,
        capped_weights="capped_weights" in toggle_set))
    record = run_reference_config(c, cfg, seed)
    record.write_csv(out)
    click.echo(f"{len(record)} spikes -> {out}")


@main.command("run-hw")
@click.option("--machine", "machine_path", required=True, type=click.Path(exists=True))
@click.option("--duration", "duration_ms", default=1000.0, show_default=True)
@click.option("--dt", "dt_ms", default=None, type=float,
              help="Defaults to the machine's compiled dt.")
@click.option("--seed", required=True, type=int)
@_with_options(_STIM_OPTIONS)
@click.option("--background-rate-hz", default=0.0, show_default=True)
@click.option("--record", type=click.Choice(["counters", "none"]), default="none",
              show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--perf", "perf_path", type=click.Path(), default=None)
@click.option("--counter-out", type=click.Path(), default=None,
              help="With --record counters: write the counter-recorded raster.")
@_guard
def run_hw(machine_path, duration_ms, dt_ms, seed, stimulus_file, stim_targets,
           stim_rate_hz, stim_amplitude, background_rate_hz, record, out,
           perf_path, counter_out):
    """Run the fixed-point compiled-machine simulator."""
    m = load_machine(machine_path)
    targets = _parse_targets(stim_targets, stimulus_file)
    stim = None
    if targets.size:
        stim = StimulusSpec(targets=targets, rate_hz=stim_rate_hz,
                            mode=CONDUCTANCE_ONLY, amplitude=stim_amplitude)
    rc = coresim.RunConfig(duration_ms=duration_ms,
                           dt_ms=m.dt_ms if dt_ms is None else dt_ms,
                           seed=seed, stimulus=stim,
                           background_rate_hz=background_rate_hz, record=record)
    spikes, perf = coresim.run_compiled(m, rc)
    spikes.write_csv(out, meta={"machine_hash": m.meta.get("config_hash", "")})
    click.echo(f"{len(spikes)} spikes -> {out}")
    if perf_path:
        payload = perf.to_json_dict()
        payload.update({"duration_ms": duration_ms, "dt_ms": rc.dt_ms, "seed": seed,
                        "machine_hash": m.meta.get("config_hash", "")})
        analysis.write_summary_json(perf_path, payload)
    if counter_out:
        if record != "counters":
            raise ValidationError("--counter-out requires --record counters")
        counter_rec, rep = coresim.record_spikes_via_counters(m, rc)
        counter_rec.write_csv(counter_out)
        click.echo(f"counter payload loss {rep.loss_fraction * 100:.3f}%")


def _build_machine_for(cfgexp: ExperimentConfig, scheme: str):
    c = _load_connectome(cfgexp.connectome)
    if cfgexp.cap_fan_in is not None:
        c = cg.cap_fan_in(c, cfgexp.cap_fan_in, seed=cfgexp.cap_fan_in_seed)
    if cfgexp.quantize_bits is not None:
        c, _ = cg.quantize_weights(c, cfgexp.quantize_bits)
    return c, compile_machine(c, CompressionScheme.parse(scheme),
                              cap=cfgexp.capacities, cfg=cfgexp.hw,
                              dt_ms=cfgexp.dt_ms, params=cfgexp.params)


def _engine_rates(token: str, cfgexp: ExperimentConfig) -> analysis.RateTable:
    """Engine tokens: ref, ref:toggled, ref:gonly, ref:capped, hw,
    hw:delivery, hw:routing."""
    name, _, variant = token.partition(":")
    seeds = cfgexp.trial_seeds()
    if name == "ref":
        toggles = {
            "": ModelToggles(),
            "toggled": ModelToggles(True, True),
            "gonly": ModelToggles(conductance_only_input=True),
            "capped": ModelToggles(capped_weights=True),
        }.get(variant)
        if toggles is None:
            raise ValidationError(f"unknown ref variant {variant!r}")
        c = _load_connectome(cfgexp.connectome)
        if cfgexp.cap_fan_in is not None:
            c = cg.cap_fan_in(c, cfgexp.cap_fan_in, seed=cfgexp.cap_fan_in_seed)
        base = ReferenceConfig(params=cfgexp.params, stimulus=cfgexp.stimulus(),
                               duration_ms=cfgexp.duration_ms, dt_ms=cfgexp.dt_ms,
                               weight_bits=None)
        cfg = apply_model_toggles(base, toggles)
        records = [run_reference_config(c, cfg, s) for s in seeds]
        return analysis.mean_rates(records, c.n_neurons)
    if name == "hw":
        scheme = variant or cfgexp.scheme
        c, machine = _build_machine_for(cfgexp, scheme)
        records = []
        for s in seeds:
            rc = coresim.RunConfig(
                duration_ms=cfgexp.duration_ms, dt_ms=cfgexp.dt_ms, seed=s,
                stimulus=cfgexp.stimulus(mode=CONDUCTANCE_ONLY))
            rec, _ = coresim.run_compiled(machine, rc)
            records.append(rec)
        return analysis.mean_rates(records, c.n_neurons)
    raise ValidationError(f"unknown engine {name!r}")


@main.command()
@click.option("--config", "config_file", required=True, type=click.Path(exists=True))
@click.option("--engines", default="ref:toggled,hw", show_default=True,
              help="Two engine tokens, comma separated.")
@click.option("--trials", type=int, default=None, help="Override config trials.")
@click.option("--seed", type=int, default=None, help="Override config seed.")
@click.option("--active-threshold-hz", default=1.0, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
@_guard
def compare(config_file, engines, trials, seed, active_threshold_hz, out_dir):
    """Run two engines over N trials each and emit parity statistics."""
    import os

    cfgexp = ExperimentConfig.from_kv_file(config_file)
    if trials is not None:
        cfgexp.trials = trials
    if seed is not None:
        cfgexp.seed = seed
    tokens = [t.strip() for t in engines.split(",") if t.strip()]
    if len(tokens) != 2:
        raise ValidationError(f"--engines needs exactly two tokens, got {tokens}")
    rates_a = _engine_rates(tokens[0], cfgexp)
    rates_b = _engine_rates(tokens[1], cfgexp)
    stats = analysis.parity(rates_a, rates_b, active_threshold_hz)

    os.makedirs(out_dir, exist_ok=True)
    meta = {"config_hash": cfgexp.config_hash, "engine_a": tokens[0],
            "engine_b": tokens[1]}
    stats.to_csv(os.path.join(out_dir, "parity.csv"), meta=meta)
    summary = stats.summary_dict()
    summary.update(meta)
    summary["trials"] = cfgexp.trials
    analysis.write_summary_json(os.path.join(out_dir, "summary.json"), summary)
    r_txt = f"{stats.pearson_r:.4f}" if stats.r_defined else "undefined"
    click.echo(f"active pairs {stats.n_active}, pearson r {r_txt}, "
               f"max |drate| {stats.max_abs_diff_hz:.3f} Hz")


@main.command()
@click.option("--machine", "machine_path", required=True, type=click.Path(exists=True))
@click.option("--rates", default="0.5,1,2,5,10,20,40", show_default=True)
@click.option("--duration", "duration_ms", default=1000.0, show_default=True)
@click.option("--seed", required=True, type=int)
@click.option("--out", required=True, type=click.Path())
@_guard
def sweep(machine_path, rates, duration_ms, seed, out):
    """Background-rate scaling study over a compiled machine."""
    m = load_machine(machine_path)
    rate_list = [float(r) for r in rates.split(",") if r.strip()]
    rc = coresim.RunConfig(duration_ms=duration_ms, dt_ms=m.dt_ms, seed=seed)
    rows = coresim.run_background_sweep(m, rate_list, rc)
    with open(out, "w", newline="") as f:
        f.write("rate_hz,spikes,messages_routed,accumulator_additions,neuron_updates\n")
        for row in rows:
            perf = row["perf"]
            f.write(f"{row['rate_hz']},{perf.spikes},{perf.messages_routed},"
                    f"{perf.accumulator_additions},{perf.neuron_updates}\n")
    for row in rows:
        click.echo(f"rate {row['rate_hz']:>5.1f} Hz: {row['perf'].spikes} spikes, "
                   f"{row['perf'].messages_routed} messages "
                   f"({row['wall_time_s']:.3f}s)", err=True)
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
