"""Key-value config files, experiment bundles, and provenance hashing.

The on-disk config format is plain ``key = value`` lines with ``#``
comments. Dotted keys group related settings (``stimulus.rate_hz``,
``capacities.max_in_units_per_core``, ``params.v_threshold``, ``hw.*``).
Every CLI output that derives from a config carries its sha256 hash so runs
can be traced back to their exact inputs.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from spikemap.compiler import CapacitySpec
from spikemap.errors import ConfigError, ParseError
from spikemap.hardware import HardwareConfig
from spikemap.reference import CONDUCTANCE_ONLY, DIRECT_VOLTAGE, NeuronParams, StimulusSpec


def parse_kv(path) -> dict[str, str]:
    pairs: dict[str, str] = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            k, v = line.split("=", 1)
            pairs[k.strip()] = v.strip()
    return pairs


def write_kv(path, pairs: dict) -> None:
    with open(path, "w") as f:
        for k in sorted(pairs):
            f.write(f"{k} = {pairs[k]}\n")


def kv_hash(pairs: dict) -> str:
    canon = "\n".join(f"{k} = {pairs[k]}" for k in sorted(pairs))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_stim_targets(path) -> np.ndarray:
    """Stimulus target file: a one-column CSV with header ``neuron_id``."""
    ids = []
    with open(path, newline="") as f:
        header_seen = False
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or row[0].startswith("#"):
                continue
            if not header_seen:
                if row[0].strip() != "neuron_id":
                    raise ParseError(f"{path}:{lineno}: expected header 'neuron_id'")
                header_seen = True
                continue
            ids.append(int(row[0]))
    return np.array(ids, dtype=np.int64)


def _subset(pairs: dict[str, str], prefix: str) -> dict[str, str]:
    plen = len(prefix)
    return {k[plen:]: v for k, v in pairs.items() if k.startswith(prefix)}


@dataclass
class ExperimentConfig:
    """Everything a compare/run workflow needs, loadable from one kv file."""

    connectome: str
    scheme: str = "routing"
    dt_ms: float = 0.1
    duration_ms: float = 1000.0
    trials: int = 10
    seed: int = 0
    quantize_bits: int | None = 9
    cap_fan_in: int | None = None
    cap_fan_in_seed: int = 0
    stim_targets: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    stim_rate_hz: float = 150.0
    stim_amplitude: float | None = None
    stim_mode: str = DIRECT_VOLTAGE
    capacities: CapacitySpec | None = None
    params: NeuronParams = field(default_factory=NeuronParams)
    hw: HardwareConfig = field(default_factory=HardwareConfig)
    raw: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return kv_hash(self.raw) if self.raw else kv_hash(self.to_kv())

    def to_kv(self) -> dict[str, str]:
        pairs = {
            "connectome": self.connectome,
            "scheme": self.scheme,
            "dt_ms": str(self.dt_ms),
            "duration_ms": str(self.duration_ms),
            "trials": str(self.trials),
            "seed": str(self.seed),
            "stimulus.rate_hz": str(self.stim_rate_hz),
            "stimulus.mode": self.stim_mode,
            "stimulus.targets": ",".join(str(t) for t in self.stim_targets),
        }
        if self.quantize_bits is not None:
            pairs["quantize_bits"] = str(self.quantize_bits)
        if self.cap_fan_in is not None:
            pairs["cap_fan_in"] = str(self.cap_fan_in)
            pairs["cap_fan_in_seed"] = str(self.cap_fan_in_seed)
        if self.stim_amplitude is not None:
            pairs["stimulus.amplitude"] = str(self.stim_amplitude)
        return pairs

    def stimulus(self, mode: str | None = None) -> StimulusSpec:
        return StimulusSpec(targets=self.stim_targets, rate_hz=self.stim_rate_hz,
                            mode=mode or self.stim_mode, amplitude=self.stim_amplitude)

    def trial_seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.trials)]

    @staticmethod
    def from_kv_file(path) -> "ExperimentConfig":
        pairs = parse_kv(path)
        if "connectome" not in pairs:
            raise ConfigError(f"{path}: missing required key 'connectome'")

        def opt(key, cast, default=None):
            return cast(pairs[key]) if key in pairs else default

        targets = np.empty(0, dtype=np.int64)
        if "stimulus.targets_file" in pairs:
            targets = load_stim_targets(pairs["stimulus.targets_file"])
        elif pairs.get("stimulus.targets"):
            targets = np.array([int(t) for t in pairs["stimulus.targets"].split(",")],
                               dtype=np.int64)

        cap_kv = _subset(pairs, "capacities.")
        params_kv = _subset(pairs, "params.")
        hw_kv = _subset(pairs, "hw.")
        params = NeuronParams(**{k: float(v) for k, v in params_kv.items()}) \
            if params_kv else NeuronParams()
        mode = pairs.get("stimulus.mode", DIRECT_VOLTAGE)
        if mode not in (DIRECT_VOLTAGE, CONDUCTANCE_ONLY):
            raise ConfigError(f"unknown stimulus.mode {mode!r}")

        return ExperimentConfig(
            connectome=pairs["connectome"],
            scheme=pairs.get("scheme", "routing"),
            dt_ms=opt("dt_ms", float, 0.1),
            duration_ms=opt("duration_ms", float, 1000.0),
            trials=opt("trials", int, 10),
            seed=opt("seed", int, 0),
            quantize_bits=opt("quantize_bits", int, 9),
            cap_fan_in=opt("cap_fan_in", int, None),
            cap_fan_in_seed=opt("cap_fan_in_seed", int, 0),
            stim_targets=targets,
            stim_rate_hz=opt("stimulus.rate_hz", float, 150.0),
            stim_amplitude=opt("stimulus.amplitude", float, None),
            stim_mode=mode,
            capacities=CapacitySpec.from_kv(cap_kv) if cap_kv else None,
            params=params,
            hw=HardwareConfig.from_kv(hw_kv) if hw_kv else HardwareConfig(),
            raw=pairs,
        )
