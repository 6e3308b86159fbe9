"""Spike event records: the unit of all cross-engine validation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from spikemap.errors import ParseError, ValidationError


@dataclass
class SpikeRecord:
    """Ordered (timestep, neuron) events plus the run metadata needed to
    interpret them. Events are kept sorted by (timestep, neuron)."""

    steps: np.ndarray          # int64 timesteps
    neurons: np.ndarray        # int64 global neuron ids (input ordering)
    dt_ms: float
    duration_ms: float
    seed: int
    n_neurons: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=np.int64)
        self.neurons = np.asarray(self.neurons, dtype=np.int64)
        if self.steps.shape != self.neurons.shape:
            raise ValidationError("steps and neurons must be parallel arrays")
        order = np.lexsort((self.neurons, self.steps))
        self.steps = self.steps[order]
        self.neurons = self.neurons[order]
        if self.steps.size:
            n_steps = int(round(self.duration_ms / self.dt_ms))
            if self.steps.max() >= n_steps:
                raise ValidationError("event timestep beyond run duration")

    def __len__(self) -> int:
        return int(self.steps.size)

    def __eq__(self, other) -> bool:
        return (isinstance(other, SpikeRecord)
                and self.dt_ms == other.dt_ms
                and self.duration_ms == other.duration_ms
                and np.array_equal(self.steps, other.steps)
                and np.array_equal(self.neurons, other.neurons))

    def spike_counts(self, n_neurons: int | None = None) -> np.ndarray:
        n = n_neurons if n_neurons is not None else self.n_neurons
        if n <= 0:
            raise ValidationError("n_neurons unknown; pass it explicitly")
        return np.bincount(self.neurons, minlength=n).astype(np.int64)

    def write_csv(self, path, meta: dict | None = None) -> None:
        with open(path, "w", newline="") as f:
            header_meta = {"dt_ms": self.dt_ms, "duration_ms": self.duration_ms,
                           "seed": self.seed, "n_neurons": self.n_neurons}
            header_meta.update(meta or {})
            for k, v in header_meta.items():
                f.write(f"# {k}={v}\n")
            f.write("timestep,neuron_id\n")
            w = csv.writer(f)
            w.writerows(zip(self.steps.tolist(), self.neurons.tolist()))

    @staticmethod
    def read_csv(path) -> "SpikeRecord":
        meta = {}
        steps = []
        neurons = []
        with open(path, newline="") as f:
            header_seen = False
            for lineno, row in enumerate(csv.reader(f), start=1):
                if not row:
                    continue
                if row[0].startswith("#"):
                    body = row[0].lstrip("# ")
                    if "=" in body:
                        k, v = body.split("=", 1)
                        meta[k.strip()] = v.strip()
                    continue
                if not header_seen:
                    if [c.strip() for c in row] != ["timestep", "neuron_id"]:
                        raise ParseError(f"{path}:{lineno}: bad raster header {row!r}")
                    header_seen = True
                    continue
                steps.append(int(row[0]))
                neurons.append(int(row[1]))
        return SpikeRecord(
            steps=np.array(steps, dtype=np.int64),
            neurons=np.array(neurons, dtype=np.int64),
            dt_ms=float(meta.get("dt_ms", 0.1)),
            duration_ms=float(meta.get("duration_ms", 0.0)),
            seed=int(meta.get("seed", 0)),
            n_neurons=int(meta.get("n_neurons", 0)),
            meta=meta,
        )
