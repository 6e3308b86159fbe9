"""Connectome graphs: loading, condensing, quantizing, capping, synthesis.

A connectome is a flat directed weighted graph with integer weights and one
uniform synaptic delay. Internally it is stored target-major (CSR over
destination neurons) because that is what both the compiler and the delivery
cost model consume; a source-major view is derived on demand for spike
propagation.
"""

from __future__ import annotations

import array
import csv
from dataclasses import dataclass, field

import numpy as np

from spikemap.errors import GenerationError, ParseError, ValidationError

DEFAULT_DELAY_MS = 1.8
DEFAULT_WEIGHT_SCALE_MV = 0.275


@dataclass(eq=False)
class Connectome:
    """Condensed directed graph in target-major CSR form.

    ``in_ptr[d]:in_ptr[d+1]`` indexes the in-edges of destination ``d`` in
    ``in_src``/``in_w``, sorted by source index. After condensation there is
    at most one edge per (src, dst) pair and no zero weights. Autapses
    (src == dst) are permitted.
    """

    n_neurons: int
    in_ptr: np.ndarray  # int64, len n_neurons + 1
    in_src: np.ndarray  # int32, len n_edges
    in_w: np.ndarray    # int32, len n_edges
    delay_ms: float = DEFAULT_DELAY_MS
    weight_scale_mv: float = DEFAULT_WEIGHT_SCALE_MV
    _out_cache: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.delay_ms <= 0:
            raise ValidationError(f"delay_ms must be positive, got {self.delay_ms}")
        if self.in_src.size and (self.in_src.min() < 0 or self.in_src.max() >= self.n_neurons):
            raise ValidationError("source index out of range")
        if len(self.in_ptr) != self.n_neurons + 1:
            raise ValidationError("in_ptr length must be n_neurons + 1")

    @property
    def n_edges(self) -> int:
        return int(self.in_src.size)

    def edge_array(self) -> np.ndarray:
        """All edges as an (n_edges, 3) int64 array of (src, dst, weight)."""
        dst = np.repeat(np.arange(self.n_neurons, dtype=np.int64), np.diff(self.in_ptr))
        return np.column_stack([self.in_src.astype(np.int64), dst, self.in_w.astype(np.int64)])

    def out_adjacency(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Source-major view: (out_ptr, out_dst, out_w), targets sorted per source."""
        if self._out_cache is None:
            edges = self.edge_array()
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            src = edges[order, 0]
            out_ptr = np.zeros(self.n_neurons + 1, dtype=np.int64)
            np.cumsum(np.bincount(src, minlength=self.n_neurons), out=out_ptr[1:])
            self._out_cache = (out_ptr, edges[order, 1].astype(np.int32),
                               edges[order, 2].astype(np.int32))
        return self._out_cache

    def save_npz(self, path) -> None:
        np.savez_compressed(
            path,
            n_neurons=np.int64(self.n_neurons),
            in_ptr=self.in_ptr,
            in_src=self.in_src,
            in_w=self.in_w,
            delay_ms=np.float64(self.delay_ms),
            weight_scale_mv=np.float64(self.weight_scale_mv),
        )

    @staticmethod
    def load_npz(path) -> "Connectome":
        with np.load(path) as z:
            return Connectome(
                n_neurons=int(z["n_neurons"]),
                in_ptr=z["in_ptr"],
                in_src=z["in_src"],
                in_w=z["in_w"],
                delay_ms=float(z["delay_ms"]),
                weight_scale_mv=float(z["weight_scale_mv"]),
            )

    def to_csv(self, path) -> None:
        """Write the condensed edge table back out as src,dst,weight rows."""
        edges = self.edge_array()
        with open(path, "w", newline="") as f:
            f.write(f"# n_neurons={self.n_neurons}\n")
            f.write("src,dst,weight\n")
            w = csv.writer(f)
            w.writerows(edges.tolist())


@dataclass(eq=False)
class DegreeStats:
    """Exact per-neuron fan-in/fan-out counts plus maxima."""

    fan_in: np.ndarray
    fan_out: np.ndarray

    @property
    def max_fan_in(self) -> int:
        return int(self.fan_in.max()) if self.fan_in.size else 0

    @property
    def max_fan_out(self) -> int:
        return int(self.fan_out.max()) if self.fan_out.size else 0

    def cumulative_sorted(self, which: str) -> np.ndarray:
        """Values in ascending order, the plotting convention for distributions."""
        values = {"fan_in": self.fan_in, "fan_out": self.fan_out}[which]
        return np.sort(values)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            f.write("neuron_id,fan_in,fan_out\n")
            w = csv.writer(f)
            w.writerows(
                (i, int(fi), int(fo))
                for i, (fi, fo) in enumerate(zip(self.fan_in, self.fan_out))
            )


@dataclass
class QuantReport:
    """Saturation accounting from a weight quantization pass."""

    bits: int
    cap_hi: int
    cap_lo: int
    n_capped_pos: int
    n_capped_neg: int

    def __post_init__(self):
        assert self.cap_hi == 2 ** (self.bits - 1) - 1
        assert self.cap_lo == -(2 ** (self.bits - 1))


def condense_edges(src, dst, w, n_neurons: int | None = None) -> Connectome:
    """Build a condensed Connectome from parallel edge arrays.

    Duplicate (src, dst) pairs are summed; edges whose summed weight is zero
    are dropped (a zero-weight connection delivers nothing and is
    indistinguishable from no connection).
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    w = np.asarray(w, dtype=np.int64)
    if src.size and (src.min() < 0 or dst.min() < 0):
        raise ValidationError("negative neuron index in edge table")
    n_implied = int(max(src.max(initial=-1), dst.max(initial=-1))) + 1
    n = n_implied if n_neurons is None else int(n_neurons)
    if n < n_implied:
        raise ValidationError(
            f"declared n_neurons={n} smaller than max index {n_implied - 1}")

    if src.size:
        key = dst * n + src  # target-major ordering baked into the key
        order = np.argsort(key, kind="stable")
        key_s = key[order]
        w_s = w[order]
        boundaries = np.flatnonzero(np.diff(key_s)) + 1
        starts = np.concatenate([[0], boundaries])
        w_sum = np.add.reduceat(w_s, starts)
        key_u = key_s[starts]
        keep = w_sum != 0
        key_u = key_u[keep]
        w_sum = w_sum[keep]
        cond_dst = key_u // n
        cond_src = (key_u % n).astype(np.int32)
        cond_w = w_sum.astype(np.int32)
    else:
        cond_dst = np.empty(0, dtype=np.int64)
        cond_src = np.empty(0, dtype=np.int32)
        cond_w = np.empty(0, dtype=np.int32)

    in_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(cond_dst, minlength=n), out=in_ptr[1:])
    return Connectome(n_neurons=n, in_ptr=in_ptr, in_src=cond_src, in_w=cond_w)


def load_edge_table(path, format: str = "csv",
                    delay_ms: float = DEFAULT_DELAY_MS,
                    weight_scale_mv: float = DEFAULT_WEIGHT_SCALE_MV) -> Connectome:
    """Load a flattened synaptic-pair table and condense it.

    Expected layout: optional ``# key=value`` comment lines (``n_neurons``
    recognized), a ``src,dst,weight`` header, then integer rows. Multi-edges
    are summed. ``n_neurons`` defaults to 1 + max index seen.
    """
    if format != "csv":
        raise ValidationError(f"unsupported edge table format: {format!r}")

    n_override = None
    srcs = array.array("q")
    dsts = array.array("q")
    ws = array.array("q")
    header_seen = False
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or (row[0].startswith("#") and len(row) <= 3):
                if row and "n_neurons=" in row[0]:
                    n_override = int(row[0].split("n_neurons=")[1])
                continue
            if not header_seen:
                cols = [c.strip().lower() for c in row]
                if cols != ["src", "dst", "weight"]:
                    raise ParseError(
                        f"{path}:{lineno}: expected header 'src,dst,weight', got {row!r}")
                header_seen = True
                continue
            if len(row) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            try:
                s, d, wv = int(row[0]), int(row[1]), int(row[2])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-integer value in row {row!r}") from exc
            if s < 0 or d < 0:
                raise ValidationError(f"{path}:{lineno}: negative neuron index in row {row!r}")
            srcs.append(s)
            dsts.append(d)
            ws.append(wv)
    if not header_seen:
        raise ParseError(f"{path}: missing 'src,dst,weight' header")

    c = condense_edges(np.frombuffer(srcs, dtype=np.int64) if srcs else [],
                       np.frombuffer(dsts, dtype=np.int64) if dsts else [],
                       np.frombuffer(ws, dtype=np.int64) if ws else [],
                       n_neurons=n_override)
    c.delay_ms = delay_ms
    c.weight_scale_mv = weight_scale_mv
    return c


def quantize_weights(c: Connectome, bits: int) -> tuple[Connectome, QuantReport]:
    """Clamp weights to the signed range of ``bits`` (one bit for sign).

    Weights already in range pass through unchanged; saturations are counted
    by sign. Never flips a sign, never grows a magnitude.
    """
    if not 2 <= bits <= 16:
        raise ValidationError(f"bits must be in [2, 16], got {bits}")
    cap_hi = 2 ** (bits - 1) - 1
    cap_lo = -(2 ** (bits - 1))
    w = c.in_w
    n_pos = int((w > cap_hi).sum())
    n_neg = int((w < cap_lo).sum())
    clipped = np.clip(w, cap_lo, cap_hi).astype(np.int32)
    out = Connectome(c.n_neurons, c.in_ptr.copy(), c.in_src.copy(), clipped,
                     delay_ms=c.delay_ms, weight_scale_mv=c.weight_scale_mv)
    report = QuantReport(bits=bits, cap_hi=cap_hi, cap_lo=cap_lo,
                         n_capped_pos=n_pos, n_capped_neg=n_neg)
    return out, report


def cap_fan_in(c: Connectome, max_in: int, seed: int) -> Connectome:
    """Limit every neuron's fan-in to ``max_in`` by sampling plus rescaling.

    For a neuron with k > max_in in-edges, a uniform random sample of
    ``max_in`` edges is kept and each kept weight is multiplied by
    k / max_in, rounded to the nearest integer away from zero so no kept
    weight collapses to 0. Total delivered weight is preserved in
    expectation. Neurons at or under the cap are untouched.
    """
    if max_in < 1:
        raise ValidationError(f"max_in must be >= 1, got {max_in}")
    fan_in = np.diff(c.in_ptr)
    if not (fan_in > max_in).any():
        return c

    rng = np.random.default_rng(seed)
    keep_src = []
    keep_dst = []
    keep_w = []
    for d in range(c.n_neurons):
        lo, hi = int(c.in_ptr[d]), int(c.in_ptr[d + 1])
        k = hi - lo
        if k == 0:
            continue
        if k <= max_in:
            keep_src.append(c.in_src[lo:hi])
            keep_w.append(c.in_w[lo:hi].astype(np.int64))
        else:
            pick = rng.choice(k, size=max_in, replace=False)
            pick.sort()
            scale = k / max_in
            w = c.in_w[lo:hi][pick].astype(np.float64) * scale
            w_round = np.sign(w) * np.floor(np.abs(w) + 0.5)  # half away from zero
            keep_src.append(c.in_src[lo:hi][pick])
            keep_w.append(w_round.astype(np.int64))
        keep_dst.append(np.full(len(keep_src[-1]), d, dtype=np.int64))

    out = condense_edges(np.concatenate(keep_src), np.concatenate(keep_dst),
                         np.concatenate(keep_w), n_neurons=c.n_neurons)
    out.delay_ms = c.delay_ms
    out.weight_scale_mv = c.weight_scale_mv
    return out


def degree_stats(c: Connectome) -> DegreeStats:
    """Exact fan-in/fan-out per neuron."""
    fan_in = np.diff(c.in_ptr).astype(np.int64)
    fan_out = np.bincount(c.in_src, minlength=c.n_neurons).astype(np.int64)
    return DegreeStats(fan_in=fan_in, fan_out=fan_out)


def _heavy_tail_degrees(rng, n: int, mean_degree: float, tail_exponent: float) -> np.ndarray:
    """Lognormal body with a Pareto tail; a few outliers sit an order of
    magnitude above the median, the rest cluster around it."""
    tail_fraction = 0.02
    sigma = 0.6
    body_mean_target = mean_degree * (1 - 0.35)  # tail carries the rest of the mass
    mu = np.log(max(body_mean_target, 1e-9)) - sigma**2 / 2
    deg = rng.lognormal(mu, sigma, size=n)
    n_tail = max(1, int(round(tail_fraction * n)))
    tail_idx = rng.choice(n, size=n_tail, replace=False)
    xm = max(4.0 * body_mean_target, 1.0)
    deg[tail_idx] = xm * (1.0 + rng.pareto(tail_exponent, size=n_tail))
    deg = np.clip(np.round(deg), 0, n - 1).astype(np.int64)
    # nudge the total onto the requested mean
    target = int(round(mean_degree * n))
    diff = target - int(deg.sum())
    if diff != 0:
        idx = rng.choice(n, size=abs(diff), replace=True)
        np.add.at(deg, idx, 1 if diff > 0 else -1)
        deg = np.clip(deg, 0, n - 1)
    return deg


def generate_synthetic(n: int, mean_degree: float, tail_exponent: float = 2.0,
                       w_dist: dict | None = None, seed: int = 0,
                       delay_ms: float = DEFAULT_DELAY_MS,
                       weight_scale_mv: float = DEFAULT_WEIGHT_SCALE_MV) -> Connectome:
    """Generate a heavy-tailed random connectome, deterministic under seed.

    Out- and in-degree sequences are drawn independently from a
    lognormal-body / Pareto-tail mixture, equalized in total, and realized
    with the configuration model; self-loops and duplicate pairs are
    rejected before condensation. ``w_dist`` is ``{"kind": "uniform_int",
    "lo": int, "hi": int}`` (zero weights are resampled to ±1); default is
    uniform over [-32, 32].
    """
    if n < 1:
        raise GenerationError(f"n must be >= 1, got {n}")
    if mean_degree < 0:
        raise GenerationError(f"mean_degree must be >= 0, got {mean_degree}")
    if mean_degree >= n:
        raise GenerationError(f"mean_degree {mean_degree} infeasible for n={n}")
    if w_dist is None:
        w_dist = {"kind": "uniform_int", "lo": -32, "hi": 32}

    rng = np.random.default_rng(seed)
    if mean_degree == 0:
        return Connectome(n, np.zeros(n + 1, dtype=np.int64),
                          np.empty(0, dtype=np.int32), np.empty(0, dtype=np.int32),
                          delay_ms=delay_ms, weight_scale_mv=weight_scale_mv)

    d_out = _heavy_tail_degrees(rng, n, mean_degree, tail_exponent)
    d_in = _heavy_tail_degrees(rng, n, mean_degree, tail_exponent)
    # equalize stub totals so the configuration model can pair them
    gap = int(d_out.sum()) - int(d_in.sum())
    grow = d_in if gap > 0 else d_out
    if gap != 0:
        idx = rng.choice(n, size=abs(gap), replace=True)
        np.add.at(grow, idx, 1)

    src = np.repeat(np.arange(n, dtype=np.int64), d_out)
    dst = np.repeat(np.arange(n, dtype=np.int64), d_in)
    rng.shuffle(dst)
    ok = src != dst
    src, dst = src[ok], dst[ok]
    pair = src * n + dst
    _, first = np.unique(pair, return_index=True)
    first.sort()
    src, dst = src[first], dst[first]
    if src.size == 0 and mean_degree > 0:
        raise GenerationError("degree sequence produced no realizable edges")

    if w_dist.get("kind") != "uniform_int":
        raise GenerationError(f"unknown weight distribution kind {w_dist.get('kind')!r}")
    lo, hi = int(w_dist["lo"]), int(w_dist["hi"])
    if lo > hi:
        raise GenerationError(f"weight bounds out of order: [{lo}, {hi}]")
    w = rng.integers(lo, hi + 1, size=src.size, dtype=np.int64)
    zero = w == 0
    if zero.any():
        w[zero] = rng.choice(np.array([-1, 1], dtype=np.int64), size=int(zero.sum()))

    c = condense_edges(src, dst, w, n_neurons=n)
    c.delay_ms = delay_ms
    c.weight_scale_mv = weight_scale_mv
    return c
