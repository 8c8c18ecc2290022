"""Network assembly and the pure-NumPy integration backend.

The compartment's synapse graph is flattened into arrays once per run:
per-neuron membrane parameters, per-channel synapse kinetics (a channel is a
(receptor class, sign) pair) and a CSR list of outgoing synapses per
presynaptic neuron. Both backends consume exactly this layout; the Cython
core mirrors the arithmetic below step for step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .compartment import Compartment
from .errors import UnstableIntegrationError

SPIKE_THRESHOLD_MV = 0.0
V_LIMIT_MV = 200.0


def vtrap(x, y):
    """x / (1 - exp(-x/y)) with the removable singularity at x = 0 handled."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-7 * y
    with np.errstate(over="ignore"):
        denom = -np.expm1(-x / y)
    np.divide(x, denom, out=out, where=~small)
    out[small] = y + np.asarray(x)[small] / 2.0
    return out


def rate_constants(V):
    """Classic Hodgkin-Huxley alpha/beta rates (V in mV, rates in 1/ms)."""
    V = np.asarray(V, dtype=float)
    am = 0.1 * vtrap(V + 40.0, 10.0)
    bm = 4.0 * np.exp(-(V + 65.0) / 18.0)
    ah = 0.07 * np.exp(-(V + 65.0) / 20.0)
    bh = 1.0 / (1.0 + np.exp(-(V + 35.0) / 10.0))
    an = 0.01 * vtrap(V + 55.0, 10.0)
    bn = 0.125 * np.exp(-(V + 65.0) / 80.0)
    return am, bm, ah, bh, an, bn


def gating_steady_state(V):
    am, bm, ah, bh, an, bn = rate_constants(V)
    return am / (am + bm), ah / (ah + bh), an / (an + bn)


def double_exp_peak_norm(tau_rise: float, tau_decay: float) -> float:
    """Peak of exp(-t/tau_decay) - exp(-t/tau_rise); used to normalize gates
    so a unit-weight spike yields unit peak conductance (times g_peak_scale)."""
    t_peak = tau_rise * tau_decay / (tau_decay - tau_rise) * np.log(tau_decay / tau_rise)
    return float(np.exp(-t_peak / tau_decay) - np.exp(-t_peak / tau_rise))


@dataclass
class Network:
    """Flattened, immutable run-time view of a compartment's dynamics."""

    neuron_ids: np.ndarray          # sorted neuron ids, defines index order
    positions: np.ndarray           # (n, dim)
    # per-neuron membrane parameters
    C_m: np.ndarray
    g_Na: np.ndarray
    g_K: np.ndarray
    g_L: np.ndarray
    E_Na: np.ndarray
    E_K: np.ndarray
    E_L: np.ndarray
    V_rest: np.ndarray
    # channels: one per (receptor_class, sign) pair present in the graph
    channel_keys: list               # [(class_id, sign), ...]
    chan_tau_rise: np.ndarray
    chan_tau_decay: np.ndarray
    chan_inv_norm: np.ndarray
    chan_g_scale: np.ndarray
    chan_E: np.ndarray
    # synapses in CSR order by presynaptic neuron index
    syn_offsets: np.ndarray          # (n+1,) int64
    syn_post: np.ndarray             # int64 neuron index
    syn_chan: np.ndarray             # int64 channel index
    syn_weight: np.ndarray
    # stimuli resolved to index arrays
    stim_targets: list = field(default_factory=list)   # list of int64 arrays
    stim_amplitude: np.ndarray = field(default_factory=lambda: np.zeros(0))
    stim_onset: np.ndarray = field(default_factory=lambda: np.zeros(0))
    stim_offset: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_neurons(self) -> int:
        return len(self.neuron_ids)

    @property
    def n_channels(self) -> int:
        return len(self.channel_keys)

    def external_current(self, t: float) -> np.ndarray:
        I = np.zeros(self.n_neurons)
        for k, idx in enumerate(self.stim_targets):
            if self.stim_onset[k] <= t < self.stim_offset[k]:
                I[idx] += self.stim_amplitude[k]
        return I


@dataclass
class NetworkState:
    """Mutable integration state; one slot per neuron, channels stacked."""

    t: float
    V: np.ndarray
    m: np.ndarray
    h: np.ndarray
    n: np.ndarray
    s_rise: np.ndarray     # (n_channels, n_neurons)
    s_decay: np.ndarray
    spiked: np.ndarray     # bool, spikes detected in the last completed step
    clamp_events: int = 0

    def copy(self) -> "NetworkState":
        return NetworkState(self.t, self.V.copy(), self.m.copy(), self.h.copy(),
                            self.n.copy(), self.s_rise.copy(), self.s_decay.copy(),
                            self.spiked.copy(), self.clamp_events)


def build_network(compartment: Compartment, params) -> Network:
    """Flatten compartment + model parameters into the backend array layout."""
    ids = np.asarray(compartment.sorted_neuron_ids(), dtype=np.int64)
    index_of = {int(nid): k for k, nid in enumerate(ids)}
    neurons = compartment.neuron_index()
    n = len(ids)

    hh_arrays = {k: np.empty(n) for k in
                 ("C_m", "g_Na", "g_K", "g_L", "E_Na", "E_K", "E_L", "V_rest")}
    for k, nid in enumerate(ids):
        hp = params.hh_for(neurons[int(nid)].class_id)
        hh_arrays["C_m"][k] = hp.C_m
        hh_arrays["g_Na"][k] = hp.g_Na
        hh_arrays["g_K"][k] = hp.g_K
        hh_arrays["g_L"][k] = hp.g_L
        hh_arrays["E_Na"][k] = hp.E_Na
        hh_arrays["E_K"][k] = hp.E_K
        hh_arrays["E_L"][k] = hp.E_L
        hh_arrays["V_rest"][k] = hp.resting_potential()

    synapses = compartment.all_synapses()
    channel_keys = sorted({(s.receptor_class, s.sign) for s in synapses})
    chan_index = {key: i for i, key in enumerate(channel_keys)}
    nchan = len(channel_keys)
    tau_r = np.empty(nchan)
    tau_d = np.empty(nchan)
    inv_norm = np.empty(nchan)
    g_scale = np.empty(nchan)
    E = np.empty(nchan)
    for i, (cid, sign) in enumerate(channel_keys):
        sp = params.syn_for(cid)
        tau_r[i] = sp.tau_rise
        tau_d[i] = sp.tau_decay
        inv_norm[i] = 1.0 / double_exp_peak_norm(sp.tau_rise, sp.tau_decay)
        g_scale[i] = sp.g_peak_scale
        cls = compartment.class_by_id(cid)
        if not cls.is_modulatory:
            E[i] = cls.synaptic_reversal_mV
        else:
            E[i] = sp.E_exc if sign > 0 else sp.E_inh

    flat = sorted(
        ((index_of[s.pre_neuron], index_of[s.post_neuron],
          chan_index[(s.receptor_class, s.sign)], s.weight) for s in synapses),
    )
    syn_pre = np.array([f[0] for f in flat], dtype=np.int64)
    syn_post = np.array([f[1] for f in flat], dtype=np.int64)
    syn_chan = np.array([f[2] for f in flat], dtype=np.int64)
    syn_weight = np.array([f[3] for f in flat], dtype=float)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.add.at(offsets, syn_pre + 1, 1)
    offsets = np.cumsum(offsets)

    return Network(
        neuron_ids=ids,
        positions=compartment.positions(),
        channel_keys=channel_keys,
        chan_tau_rise=tau_r,
        chan_tau_decay=tau_d,
        chan_inv_norm=inv_norm,
        chan_g_scale=g_scale,
        chan_E=E,
        syn_offsets=offsets,
        syn_post=syn_post,
        syn_chan=syn_chan,
        syn_weight=syn_weight,
        **hh_arrays,
    )


def initial_state(net: Network) -> NetworkState:
    V = net.V_rest.copy()
    m, h, nn = gating_steady_state(V)
    nchan = net.n_channels
    n = net.n_neurons
    return NetworkState(
        t=0.0, V=V, m=np.asarray(m), h=np.asarray(h), n=np.asarray(nn),
        s_rise=np.zeros((nchan, n)), s_decay=np.zeros((nchan, n)),
        spiked=np.zeros(n, dtype=bool),
    )


def _derivatives(net: Network, V, m, h, n, s_rise, s_decay, I_ext):
    am, bm, ah, bh, an, bn = rate_constants(V)
    I_ion = (net.g_Na * m**3 * h * (V - net.E_Na)
             + net.g_K * n**4 * (V - net.E_K)
             + net.g_L * (V - net.E_L))
    if net.n_channels:
        g_syn = net.chan_g_scale[:, None] * net.chan_inv_norm[:, None] * (s_decay - s_rise)
        I_syn = np.sum(g_syn * (net.chan_E[:, None] - V[None, :]), axis=0)
    else:
        I_syn = 0.0
    dV = (I_ext + I_syn - I_ion) / net.C_m
    dm = am * (1.0 - m) - bm * m
    dh = ah * (1.0 - h) - bh * h
    dn = an * (1.0 - n) - bn * n
    dsr = -s_rise / net.chan_tau_rise[:, None] if net.n_channels else s_rise
    dsd = -s_decay / net.chan_tau_decay[:, None] if net.n_channels else s_decay
    return dV, dm, dh, dn, dsr, dsd


def step_state(net: Network, state: NetworkState, dt: float) -> NetworkState:
    """One RK4 step of the whole network, in place semantics on a copy.

    Presynaptic spikes recorded in `state.spiked` (from the previous step)
    are applied to the targets' synaptic gates before integrating; spikes
    produced by this step are detected on the updated voltages.
    """
    s = state.copy()
    if s.spiked.any() and len(net.syn_post):
        spiking = np.flatnonzero(s.spiked)
        for pre in spiking:
            a, b = net.syn_offsets[pre], net.syn_offsets[pre + 1]
            np.add.at(s.s_rise, (net.syn_chan[a:b], net.syn_post[a:b]), net.syn_weight[a:b])
            np.add.at(s.s_decay, (net.syn_chan[a:b], net.syn_post[a:b]), net.syn_weight[a:b])

    I_ext = net.external_current(s.t)
    y = (s.V, s.m, s.h, s.n, s.s_rise, s.s_decay)
    k1 = _derivatives(net, *y, I_ext)
    y2 = tuple(a + 0.5 * dt * k for a, k in zip(y, k1))
    k2 = _derivatives(net, *y2, I_ext)
    y3 = tuple(a + 0.5 * dt * k for a, k in zip(y, k2))
    k3 = _derivatives(net, *y3, I_ext)
    y4 = tuple(a + dt * k for a, k in zip(y, k3))
    k4 = _derivatives(net, *y4, I_ext)
    new = tuple(a + dt / 6.0 * (ka + 2 * kb + 2 * kc + kd)
                for a, ka, kb, kc, kd in zip(y, k1, k2, k3, k4))
    V_new, m_new, h_new, n_new, sr_new, sd_new = new

    clamped = 0
    for g in (m_new, h_new, n_new):
        lo = g < 0.0
        hi = g > 1.0
        clamped += int(lo.sum() + hi.sum())
        np.clip(g, 0.0, 1.0, out=g)

    if np.max(np.abs(V_new), initial=0.0) > V_LIMIT_MV:
        raise UnstableIntegrationError(s.t + dt)

    s.spiked = (s.V < SPIKE_THRESHOLD_MV) & (V_new >= SPIKE_THRESHOLD_MV)
    s.V, s.m, s.h, s.n = V_new, m_new, h_new, n_new
    s.s_rise, s.s_decay = sr_new, sd_new
    s.t = state.t + dt
    s.clamp_events = state.clamp_events + clamped
    return s


def run_pure(net: Network, state: NetworkState, dt: float, n_steps: int,
             record_every: int, u_out: np.ndarray):
    """Integrate n_steps, filling u_out (recorded steps x neurons) with
    V - V_rest. Returns (final state, spike step/neuron arrays)."""
    spike_steps: list[int] = []
    spike_neurons: list[int] = []
    u_out[0] = state.V - net.V_rest
    row = 1
    for step in range(1, n_steps + 1):
        state = step_state(net, state, dt)
        if state.spiked.any():
            for k in np.flatnonzero(state.spiked):
                spike_steps.append(step)
                spike_neurons.append(int(k))
        if step % record_every == 0:
            u_out[row] = state.V - net.V_rest
            row += 1
    return state, np.asarray(spike_steps, dtype=np.int64), np.asarray(spike_neurons, dtype=np.int64)
