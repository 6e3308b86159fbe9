"""Virtual machine model: resource limits, fixed-point math, per-core RNG.

Everything the compiler and the compiled-machine simulator need to agree on
lives here: word formats, the Galois LFSR, and the per-core memory cost
model (4-byte synaptic entries, 4-byte inbound axon headers, 8-byte outbound
routing entries, plus a spike-buffer reserve).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from spikemap.errors import ConfigError, ValidationError

SYN_ENTRY_BYTES = 4
AXON_IN_BYTES = 4
AXON_OUT_BYTES = 8

LFSR_TAPS = 0xD0000001  # maximal-length Galois polynomial, period 2**32 - 1
LFSR_SEED_FALLBACK = 0x9E3779B9  # zero state is absorbing; remap to this

# dendritic accumulator slots saturate to 24 bits (applied when a slot is
# consumed, so delivery order cannot change results)
ACC_MAX = (1 << 23) - 1
ACC_MIN = -(1 << 23)


@dataclass(frozen=True)
class FixedPointSpec:
    """Q-format: ``word_bits`` two's-complement words with ``frac_bits``
    fractional bits. Multiplications truncate toward zero."""

    frac_bits: int = 12
    word_bits: int = 32
    rounding: str = "truncate_toward_zero"

    def __post_init__(self):
        if not self.frac_bits < self.word_bits - 2:
            raise ConfigError(
                f"frac_bits {self.frac_bits} must be < word_bits - 2 ({self.word_bits - 2})")

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def max_int(self) -> int:
        return (1 << (self.word_bits - 1)) - 1

    @property
    def min_int(self) -> int:
        return -(1 << (self.word_bits - 1))


def to_fixed(x: float, spec: FixedPointSpec = FixedPointSpec()) -> int:
    """Quantize to fixed point with round-half-to-even; saturates on overflow."""
    v = int(np.rint(float(x) * spec.scale))
    return min(max(v, spec.min_int), spec.max_int)


def to_fixed_arr(x, spec: FixedPointSpec = FixedPointSpec()) -> tuple[np.ndarray, np.ndarray]:
    """Array quantization returning (values, clipped_mask)."""
    raw = np.rint(np.asarray(x, dtype=np.float64) * spec.scale)
    clipped = (raw > spec.max_int) | (raw < spec.min_int)
    return np.clip(raw, spec.min_int, spec.max_int).astype(np.int64), clipped


def from_fixed(v, spec: FixedPointSpec = FixedPointSpec()):
    """Inverse of ``to_fixed`` (exact for in-range fixed values)."""
    return np.asarray(v, dtype=np.float64) / spec.scale if np.ndim(v) else v / spec.scale


def mul_q(a: int, b: int, frac_bits: int = 12) -> int:
    """Fixed-point multiply with truncation toward zero."""
    p = a * b
    return p >> frac_bits if p >= 0 else -((-p) >> frac_bits)


class Lfsr:
    """32-bit Galois LFSR; each draw shifts 32 times collecting the output
    bit, so consecutive draws come from disjoint state windows."""

    def __init__(self, seed: int):
        state = seed & 0xFFFFFFFF
        self.state = state if state != 0 else LFSR_SEED_FALLBACK

    def next_u32(self) -> int:
        s = self.state
        out = 0
        for i in range(32):
            out |= (s & 1) << i
            s = (s >> 1) ^ ((-(s & 1)) & LFSR_TAPS)
        self.state = s & 0xFFFFFFFF
        return out

    def bernoulli(self, p_threshold: int) -> bool:
        """True with probability ``p_threshold / 2**32``."""
        return self.next_u32() < p_threshold


def probability_threshold(p: float) -> int:
    """Probability in [0, 1] to the Q0.32 threshold ``bernoulli`` compares
    against (p=1 maps to 2**32: always true)."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"probability must be in [0, 1], got {p}")
    return int(round(p * 2.0**32))


@dataclass(frozen=True)
class HardwareConfig:
    """Per-core and per-chip resource limits of the virtual machine."""

    cores_per_chip: int = 120
    syn_mem_bytes: int = 131072
    axon_prog_max_entries: int = 65536
    spike_buffer_reserve_bytes: int = 8192
    counters_per_chip: int = 992
    payload_counters_per_chip: int = 224
    accum_depth: int = 32

    def __post_init__(self):
        for name in ("cores_per_chip", "syn_mem_bytes", "axon_prog_max_entries",
                     "counters_per_chip", "payload_counters_per_chip", "accum_depth"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.spike_buffer_reserve_bytes < 0:
            raise ConfigError("spike_buffer_reserve_bytes must be >= 0")

    @staticmethod
    def from_kv(pairs: dict) -> "HardwareConfig":
        known = {f for f in HardwareConfig.__dataclass_fields__}
        kwargs = {k: int(v) for k, v in pairs.items() if k in known}
        unknown = set(pairs) - known
        if unknown:
            raise ConfigError(f"unknown hardware config keys: {sorted(unknown)}")
        return HardwareConfig(**kwargs)


@dataclass
class CoreUsage:
    """What one core holds, in countable units."""

    n_syn_entries: int = 0
    n_axons_in: int = 0
    n_out_entries: int = 0
    n_neurons: int = 0


@dataclass(eq=False)
class MemoryReport:
    """Per-core byte accounting against the synaptic memory limit."""

    chip: np.ndarray
    core: np.ndarray
    bytes_syn: np.ndarray
    bytes_axon_in: np.ndarray
    bytes_axon_out: np.ndarray
    reserve_bytes: int
    syn_mem_bytes: int
    out_entries: np.ndarray = field(default=None)
    axon_prog_max_entries: int = 0

    @property
    def total_bytes(self) -> np.ndarray:
        return (self.bytes_syn + self.bytes_axon_in + self.bytes_axon_out
                + self.reserve_bytes)

    @property
    def utilization(self) -> np.ndarray:
        return self.total_bytes / self.syn_mem_bytes

    @property
    def over_memory(self) -> np.ndarray:
        return self.total_bytes > self.syn_mem_bytes

    @property
    def over_axon_program(self) -> np.ndarray:
        if self.out_entries is None:
            return np.zeros(len(self.chip), dtype=bool)
        return self.out_entries > self.axon_prog_max_entries

    @property
    def ok(self) -> bool:
        return not (self.over_memory.any() or self.over_axon_program.any())

    def to_csv(self, path, meta: dict | None = None) -> None:
        with open(path, "w", newline="") as f:
            for k, v in (meta or {}).items():
                f.write(f"# {k}={v}\n")
            f.write("chip,core,bytes_syn,bytes_axon_in,bytes_axon_out,utilization\n")
            w = csv.writer(f)
            util = self.utilization
            w.writerows(
                (int(self.chip[i]), int(self.core[i]), int(self.bytes_syn[i]),
                 int(self.bytes_axon_in[i]), int(self.bytes_axon_out[i]),
                 f"{util[i]:.6f}")
                for i in range(len(self.chip))
            )


def memory_cost(cores: list[CoreUsage], cfg: HardwareConfig) -> MemoryReport:
    """Apply the byte cost model to per-core contents. Reports, never raises."""
    n = len(cores)
    syn = np.array([c.n_syn_entries * SYN_ENTRY_BYTES for c in cores], dtype=np.int64)
    ain = np.array([c.n_axons_in * AXON_IN_BYTES for c in cores], dtype=np.int64)
    aout = np.array([c.n_out_entries * AXON_OUT_BYTES for c in cores], dtype=np.int64)
    outn = np.array([c.n_out_entries for c in cores], dtype=np.int64)
    core_ids = np.arange(n, dtype=np.int64)
    return MemoryReport(
        chip=core_ids // cfg.cores_per_chip,
        core=core_ids % cfg.cores_per_chip,
        bytes_syn=syn,
        bytes_axon_in=ain,
        bytes_axon_out=aout,
        reserve_bytes=cfg.spike_buffer_reserve_bytes,
        syn_mem_bytes=cfg.syn_mem_bytes,
        out_entries=outn,
        axon_prog_max_entries=cfg.axon_prog_max_entries,
    )


def core_lfsr_seed(global_seed: int, core_index: int) -> int:
    """Per-core LFSR seed: global seed XOR absolute core index."""
    s = (global_seed ^ core_index) & 0xFFFFFFFF
    return s if s != 0 else LFSR_SEED_FALLBACK
