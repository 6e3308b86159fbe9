"""Hot loops for the compiled-machine simulator, JIT-compiled with numba.

All state is integer fixed point, so results are bit-exact across hosts.
Cores are processed sequentially inside a step; because every delivery lands
at least one step in the future, this is equivalent to the barrier semantics
(all cores finish step t before any starts t+1).
"""

import numpy as np
from numba import njit, uint64

LFSR_TAPS = uint64(0xD0000001)


@njit(cache=True)
def lfsr_draw(s):
    """One 32-bit draw: shift the Galois register 32 times, collecting the
    output bit each shift. Returns (new state, value)."""
    s = uint64(s)
    out = uint64(0)
    for i in range(32):
        out |= (s & uint64(1)) << uint64(i)
        s = (s >> uint64(1)) ^ ((uint64(0) - (s & uint64(1))) & LFSR_TAPS)
    return s, out


@njit(cache=True, inline="always")
def _mulq(a, b, frac_bits):
    p = a * b
    if p >= 0:
        return p >> frac_bits
    return -((-p) >> frac_bits)


@njit(cache=True, inline="always")
def _sat(x, lo, hi):
    if x > hi:
        return hi
    if x < lo:
        return lo
    return x


@njit(cache=True)
def run_machine(
    n_steps, depth, n, n_cores,
    core_nrn_ptr,
    v, g, refrac,
    ring,
    lfsr,
    stim_flag, stim_thresh, stim_amp_fx,
    bg_enabled, bg_thresh,
    cv, cg, v0, vr, vth,
    refrac_steps,
    wscale_fx,
    frac_bits, word_lo, word_hi, acc_lo, acc_hi,
    core_axon_ptr, axon_del_ptr, del_w, del_delay, del_local,
    out_ptr, out_core, out_axon,
    counters_on,
):
    """Run the whole simulation; see coresim.run_compiled for the contract.

    Per neuron per step: consume the matured accumulator slot (saturating to
    the 24-bit range on consumption), add stimulus, integrate unless
    refractory, threshold, then an optional forced background spike drawn
    from the core's LFSR. Spikes fire their outbound routing entries, whose
    delivery lists append scaled weights into target accumulator slots at
    now + delay. Stimulus then background draws are consumed per neuron in
    ascending local order, so streams are reproducible.
    """
    ev_cap = 1 << 14
    ev_s = np.empty(ev_cap, dtype=np.int64)
    ev_n = np.empty(ev_cap, dtype=np.int64)
    n_ev = 0
    pay_cap = 1 << 10
    pay_s = np.empty(pay_cap, dtype=np.int64)
    pay_n = np.empty(pay_cap, dtype=np.int64)
    n_pay = 0

    spikes_per_neuron = np.zeros(n, dtype=np.int64)
    counter_counts = np.zeros(n_cores, dtype=np.int64)
    step_count = np.zeros(n_cores, dtype=np.int64)
    first_pay = np.full(n_cores, -1, dtype=np.int64)

    spikes = 0
    messages = 0
    acc_adds = 0
    acc_sats = 0

    for t in range(n_steps):
        slot = t % depth
        for core in range(n_cores):
            s = lfsr[core]
            lo = core_nrn_ptr[core]
            hi = core_nrn_ptr[core + 1]
            for i in range(lo, hi):
                acc = ring[slot, i]
                ring[slot, i] = 0
                if acc > acc_hi:
                    acc = acc_hi
                    acc_sats += 1
                elif acc < acc_lo:
                    acc = acc_lo
                    acc_sats += 1

                stim_add = 0
                if stim_flag[i] != 0:
                    s, u = lfsr_draw(s)
                    if u < stim_thresh[i]:
                        stim_add = stim_amp_fx

                fire = False
                if refrac[i] > 0:
                    refrac[i] -= 1  # frozen: inputs discarded
                else:
                    gg = _sat(g[i] + acc + stim_add, word_lo, word_hi)
                    vv = _sat(v[i] + _mulq(cv, v0 - v[i] + gg, frac_bits),
                              word_lo, word_hi)
                    gg = _sat(gg - _mulq(cg, gg, frac_bits), word_lo, word_hi)
                    if vv > vth:
                        fire = True
                        vv = vr
                        gg = 0
                        refrac[i] = refrac_steps
                    v[i] = vv
                    g[i] = gg

                if bg_enabled != 0:
                    s, u = lfsr_draw(s)
                    # forced emission: routed like a spike, membrane untouched
                    if (not fire) and u < bg_thresh[i]:
                        fire = True

                if fire:
                    if n_ev == ev_cap:
                        new_s = np.empty(ev_cap * 2, dtype=np.int64)
                        new_n = np.empty(ev_cap * 2, dtype=np.int64)
                        new_s[:ev_cap] = ev_s
                        new_n[:ev_cap] = ev_n
                        ev_s = new_s
                        ev_n = new_n
                        ev_cap *= 2
                    ev_s[n_ev] = t
                    ev_n[n_ev] = i
                    n_ev += 1
                    spikes += 1
                    spikes_per_neuron[i] += 1
                    if counters_on != 0:
                        step_count[core] += 1
                        if first_pay[core] < 0:
                            first_pay[core] = i
                    for e in range(out_ptr[i], out_ptr[i + 1]):
                        dcore = out_core[e]
                        axon = core_axon_ptr[dcore] + out_axon[e]
                        dbase = core_nrn_ptr[dcore]
                        for k in range(axon_del_ptr[axon], axon_del_ptr[axon + 1]):
                            wslot = (t + del_delay[k]) % depth
                            ring[wslot, dbase + del_local[k]] += del_w[k] * wscale_fx
                            acc_adds += 1
                        messages += 1
            lfsr[core] = s

        if counters_on != 0:
            for core in range(n_cores):
                if step_count[core] > 0:
                    counter_counts[core] += step_count[core]
                    if n_pay == pay_cap:
                        new_s = np.empty(pay_cap * 2, dtype=np.int64)
                        new_n = np.empty(pay_cap * 2, dtype=np.int64)
                        new_s[:pay_cap] = pay_s
                        new_n[:pay_cap] = pay_n
                        pay_s = new_s
                        pay_n = new_n
                        pay_cap *= 2
                    pay_s[n_pay] = t
                    pay_n[n_pay] = first_pay[core]
                    n_pay += 1
                    step_count[core] = 0
                    first_pay[core] = -1

    return (ev_s[:n_ev], ev_n[:n_ev], spikes_per_neuron,
            spikes, messages, acc_adds, acc_sats,
            counter_counts, pay_s[:n_pay], pay_n[:n_pay])
