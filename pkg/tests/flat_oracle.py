"""Independent flat fixed-point simulator used as the oracle for the
compiled-machine engine.

Walks the condensed edge list directly; no axon tables, no routing entries,
no delivery lists. It only shares the machine's *placement* (which core a
neuron lives on and in what local order), because the per-core LFSR streams
are defined by placement. Everything else, including the LFSR itself, is
re-implemented here.
"""

import numpy as np
from numba import njit, uint64

from spikemap.hardware import ACC_MAX, ACC_MIN, core_lfsr_seed, probability_threshold, to_fixed
from spikemap.reference import check_step_count, steps_from_ms


@njit(cache=True)
def _oracle_kernel(n_steps, depth, n, n_cores, core_ptr,
                   v, g, refrac, ring, lfsr,
                   stim_flag, stim_thresh, stim_amp,
                   bg_enabled, bg_thresh,
                   cv, cg, v0, vr, vth, refrac_steps, delay_steps,
                   frac_bits, word_lo, word_hi, acc_lo, acc_hi,
                   out_ptr, out_tgt, out_wfx):
    taps = uint64(0xD0000001)
    ev_cap = 1 << 14
    ev_s = np.empty(ev_cap, dtype=np.int64)
    ev_n = np.empty(ev_cap, dtype=np.int64)
    n_ev = 0
    counts = np.zeros(n, dtype=np.int64)

    for t in range(n_steps):
        slot = t % depth
        wslot = (t + delay_steps) % depth
        for core in range(n_cores):
            s = lfsr[core]
            for i in range(core_ptr[core], core_ptr[core + 1]):
                acc = ring[slot, i]
                ring[slot, i] = 0
                if acc > acc_hi:
                    acc = acc_hi
                elif acc < acc_lo:
                    acc = acc_lo

                stim_add = 0
                if stim_flag[i] != 0:
                    u = uint64(0)
                    for b in range(32):
                        u |= (s & uint64(1)) << uint64(b)
                        s = (s >> uint64(1)) ^ ((uint64(0) - (s & uint64(1))) & taps)
                    if u < stim_thresh[i]:
                        stim_add = stim_amp

                fire = False
                if refrac[i] > 0:
                    refrac[i] -= 1
                else:
                    gg = g[i] + acc + stim_add
                    if gg > word_hi:
                        gg = word_hi
                    elif gg < word_lo:
                        gg = word_lo
                    dv = cv * (v0 - v[i] + gg)
                    if dv >= 0:
                        dv >>= frac_bits
                    else:
                        dv = -((-dv) >> frac_bits)
                    vv = v[i] + dv
                    if vv > word_hi:
                        vv = word_hi
                    elif vv < word_lo:
                        vv = word_lo
                    dg = cg * gg
                    if dg >= 0:
                        dg >>= frac_bits
                    else:
                        dg = -((-dg) >> frac_bits)
                    gg = gg - dg
                    if gg > word_hi:
                        gg = word_hi
                    elif gg < word_lo:
                        gg = word_lo
                    if vv > vth:
                        fire = True
                        vv = vr
                        gg = 0
                        refrac[i] = refrac_steps
                    v[i] = vv
                    g[i] = gg

                if bg_enabled != 0:
                    u = uint64(0)
                    for b in range(32):
                        u |= (s & uint64(1)) << uint64(b)
                        s = (s >> uint64(1)) ^ ((uint64(0) - (s & uint64(1))) & taps)
                    if (not fire) and u < bg_thresh[i]:
                        fire = True

                if fire:
                    if n_ev == ev_cap:
                        ns = np.empty(ev_cap * 2, dtype=np.int64)
                        nn = np.empty(ev_cap * 2, dtype=np.int64)
                        ns[:ev_cap] = ev_s
                        nn[:ev_cap] = ev_n
                        ev_s = ns
                        ev_n = nn
                        ev_cap *= 2
                    ev_s[n_ev] = t
                    ev_n[n_ev] = i
                    n_ev += 1
                    counts[i] += 1
                    for e in range(out_ptr[i], out_ptr[i + 1]):
                        ring[wslot, out_tgt[e]] += out_wfx[e]
            lfsr[core] = s

    return ev_s[:n_ev], ev_n[:n_ev], counts


def flat_fixed_run(c, core_of, n_cores, params, fx, hw, duration_ms, dt_ms, seed,
                   stim_targets=None, stim_rate_hz=0.0, stim_amplitude=0.0,
                   background_rate_hz=0.0):
    """Run the flat oracle. ``core_of`` is the neuron -> core placement the
    machine under test uses; the permutation, edge CSR, and all constants
    are derived here from scratch.

    Returns (steps, neurons, spikes_per_neuron) in original neuron ids.
    """
    n = c.n_neurons
    n_steps = check_step_count(duration_ms, dt_ms)
    delay_steps = steps_from_ms(c.delay_ms, dt_ms)
    depth = hw.accum_depth
    assert delay_steps >= 1 and delay_steps < depth

    perm = np.argsort(core_of, kind="stable").astype(np.int64)
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n, dtype=np.int64)
    core_ptr = np.zeros(n_cores + 1, dtype=np.int64)
    np.cumsum(np.bincount(core_of, minlength=n_cores), out=core_ptr[1:])

    edges = c.edge_array()
    src_slot = inv[edges[:, 0]]
    dst_slot = inv[edges[:, 1]]
    order = np.lexsort((dst_slot, src_slot))
    src_slot = src_slot[order]
    out_tgt = dst_slot[order]
    wscale_fx = to_fixed(c.weight_scale_mv, fx)
    out_wfx = edges[order, 2] * wscale_fx
    out_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src_slot, minlength=n), out=out_ptr[1:])

    stim_flag = np.zeros(n, dtype=np.uint8)
    stim_thresh = np.zeros(n, dtype=np.uint64)
    stim_amp_fx = 0
    if stim_targets is not None and len(stim_targets):
        slots = inv[np.asarray(stim_targets, dtype=np.int64)]
        stim_flag[slots] = 1
        stim_thresh[slots] = np.uint64(
            probability_threshold(stim_rate_hz * dt_ms / 1000.0))
        stim_amp_fx = to_fixed(stim_amplitude, fx)

    bg_enabled = 1 if background_rate_hz > 0 else 0
    bg_thresh = np.zeros(n, dtype=np.uint64)
    if bg_enabled:
        bg_thresh[:] = np.uint64(
            probability_threshold(background_rate_hz * dt_ms / 1000.0))

    v = np.full(n, to_fixed(params.v_rest, fx), dtype=np.int64)
    g = np.zeros(n, dtype=np.int64)
    refrac = np.zeros(n, dtype=np.int64)
    ring = np.zeros((depth, n), dtype=np.int64)
    lfsr = np.array([core_lfsr_seed(seed, k) for k in range(n_cores)], dtype=np.uint64)

    ev_s, ev_n, counts = _oracle_kernel(
        n_steps, depth, n, n_cores, core_ptr,
        v, g, refrac, ring, lfsr,
        stim_flag, stim_thresh, np.int64(stim_amp_fx),
        np.uint8(bg_enabled), bg_thresh,
        np.int64(to_fixed(dt_ms / params.tau_mem_ms, fx)),
        np.int64(to_fixed(dt_ms / params.tau_in_ms, fx)),
        np.int64(to_fixed(params.v_rest, fx)),
        np.int64(to_fixed(params.v_reset, fx)),
        np.int64(to_fixed(params.v_threshold, fx)),
        np.int64(params.refrac_steps(dt_ms)),
        np.int64(delay_steps),
        np.int64(fx.frac_bits), np.int64(fx.min_int), np.int64(fx.max_int),
        np.int64(ACC_MIN), np.int64(ACC_MAX),
        out_ptr, out_tgt, out_wfx,
    )
    counts_orig = np.zeros(n, dtype=np.int64)
    counts_orig[perm] = counts
    order = np.lexsort((perm[ev_n], ev_s))
    return ev_s[order], perm[ev_n][order], counts_orig
