"""Spike-rate parity statistics and plot-ready data exports.

Validation between engines is statistical: per-neuron mean rates over
repeated trials, matched strictly by neuron index, summarized by a Pearson
correlation over the active pairs and the worst absolute rate difference.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from spikemap.errors import ValidationError
from spikemap.records import SpikeRecord

DEFAULT_ACTIVE_THRESHOLD_HZ = 1.0


@dataclass(eq=False)
class RateTable:
    """Per-neuron mean spike rate in Hz, averaged over trials."""

    rates_hz: np.ndarray
    trials: int
    duration_ms: float
    n_neurons: int


def mean_rates(records: list[SpikeRecord], n_neurons: int) -> RateTable:
    """Exact per-neuron means: total spikes / (trials * duration)."""
    if not records:
        raise ValidationError("need at least one record")
    duration = records[0].duration_ms
    dt = records[0].dt_ms
    for r in records:
        if r.duration_ms != duration or r.dt_ms != dt:
            raise ValidationError("records must share duration and dt")
    counts = np.zeros(n_neurons, dtype=np.int64)
    for r in records:
        counts += r.spike_counts(n_neurons)
    rates = counts / (len(records) * duration / 1000.0)
    return RateTable(rates_hz=rates, trials=len(records),
                     duration_ms=duration, n_neurons=n_neurons)


@dataclass(eq=False)
class ParityStats:
    """Index-matched rate comparison between two engines.

    Pairs where neither side reaches the active threshold are excluded from
    the statistics; ``pearson_r`` is None (with ``r_defined`` False) when
    fewer than two active pairs exist or either side is constant.
    """

    n_neurons: int
    active_threshold_hz: float
    active_idx: np.ndarray
    rates_a: np.ndarray
    rates_b: np.ndarray
    pearson_r: float | None
    r_defined: bool
    max_abs_diff_hz: float
    n_above: int   # rate_b > rate_a
    n_below: int   # rate_b < rate_a

    @property
    def n_active(self) -> int:
        return int(self.active_idx.size)

    def pair_rows(self):
        for i, a, b in zip(self.active_idx, self.rates_a, self.rates_b):
            yield int(i), float(a), float(b)

    def to_csv(self, path, meta: dict | None = None) -> None:
        with open(path, "w", newline="") as f:
            for k, v in (meta or {}).items():
                f.write(f"# {k}={v}\n")
            f.write("neuron_id,rate_a_hz,rate_b_hz\n")
            w = csv.writer(f)
            w.writerows(self.pair_rows())

    def summary_dict(self) -> dict:
        return {
            "n_neurons": self.n_neurons,
            "active_threshold_hz": self.active_threshold_hz,
            "n_active": self.n_active,
            "pearson_r": self.pearson_r,
            "r_defined": self.r_defined,
            "max_abs_diff_hz": self.max_abs_diff_hz,
            "n_above_parity": self.n_above,
            "n_below_parity": self.n_below,
        }


def parity(a: RateTable, b: RateTable,
           active_threshold_hz: float = DEFAULT_ACTIVE_THRESHOLD_HZ) -> ParityStats:
    """Compare two rate tables over pairs where either side is active."""
    if a.n_neurons != b.n_neurons:
        raise ValidationError("rate tables cover different neuron counts")
    ra, rb = a.rates_hz, b.rates_hz
    active = np.flatnonzero(np.maximum(ra, rb) >= active_threshold_hz)
    sa, sb = ra[active], rb[active]
    r = None
    defined = False
    if active.size >= 2 and sa.std() > 0 and sb.std() > 0:
        r = float(np.corrcoef(sa, sb)[0, 1])
        defined = True
    elif active.size >= 2 and np.array_equal(sa, sb):
        r = 1.0  # identical constant vectors sit exactly on parity
        defined = True
    diff = np.abs(sa - sb)
    return ParityStats(
        n_neurons=a.n_neurons,
        active_threshold_hz=active_threshold_hz,
        active_idx=active,
        rates_a=sa,
        rates_b=sb,
        pearson_r=r,
        r_defined=defined,
        max_abs_diff_hz=float(diff.max()) if diff.size else 0.0,
        n_above=int((sb > sa).sum()),
        n_below=int((sb < sa).sum()),
    )


def export_raster(record: SpikeRecord, path, meta: dict | None = None) -> None:
    """CSV raster of (timestep, neuron_id); the round-trip partner of
    SpikeRecord.read_csv."""
    record.write_csv(path, meta=meta)


def export_distribution(values, path, cumulative_sorted: bool = True,
                        meta: dict | None = None) -> None:
    """Write a value list as CSV; in cumulative-sorted mode values ascend
    and are paired with their rank, the plotting convention for
    distribution figures."""
    values = np.asarray(values)
    if cumulative_sorted:
        values = np.sort(values)
    with open(path, "w", newline="") as f:
        for k, v in (meta or {}).items():
            f.write(f"# {k}={v}\n")
        f.write("rank,value\n")
        w = csv.writer(f)
        w.writerows((i, v) for i, v in enumerate(values.tolist()))


def read_distribution(path) -> np.ndarray:
    vals = []
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if not row or row[0].startswith("#") or row[0] == "rank":
                continue
            vals.append(float(row[1]))
    return np.array(vals)


def write_summary_json(path, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
