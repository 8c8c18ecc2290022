"""Hodgkin-Huxley membrane and synapse dynamics over a compartment's graph.

Two interchangeable backends integrate the same flattened network layout:
a compiled Cython core (preferred) and a pure-NumPy fallback. Selection
happens at import; set ``NCELLSIM_BACKEND=pure`` or ``cython`` to force one.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import _network
from ._network import (
    Network,
    NetworkState,
    build_network as _build_network,
    initial_state,
    rate_constants,
    gating_steady_state,
    double_exp_peak_norm,
)
from .compartment import Compartment
from .errors import NonFiniteStateError

try:  # compiled core is optional; the pure backend is always available
    from . import _core
    _HAVE_CORE = True
except ImportError:  # pragma: no cover - depends on build environment
    _core = None
    _HAVE_CORE = False

MAX_STABLE_DT_MS = 0.05


def default_backend() -> str:
    forced = os.environ.get("NCELLSIM_BACKEND")
    if forced in ("pure", "cython"):
        return forced
    return "cython" if _HAVE_CORE else "pure"


def available_backends() -> list[str]:
    return ["cython", "pure"] if _HAVE_CORE else ["pure"]


@dataclass(frozen=True)
class HHParameters:
    """Classical squid-axon set by default; all overridable per class."""

    C_m: float = 1.0       # uF/cm^2
    g_Na: float = 120.0    # mS/cm^2
    g_K: float = 36.0
    g_L: float = 0.3
    E_Na: float = 50.0     # mV
    E_K: float = -77.0
    E_L: float = -54.4

    def __post_init__(self):
        if self.C_m <= 0 or min(self.g_Na, self.g_K, self.g_L) <= 0:
            raise ValueError("capacitance and conductances must be positive")

    def membrane_current(self, V: float) -> float:
        m, h, n = gating_steady_state(V)
        return float(self.g_Na * m**3 * h * (V - self.E_Na)
                     + self.g_K * n**4 * (V - self.E_K)
                     + self.g_L * (V - self.E_L))

    def resting_potential(self) -> float:
        """Equilibrium V with all synapses silent, from a root solve."""
        lo, hi = -90.0, -40.0
        flo, fhi = self.membrane_current(lo), self.membrane_current(hi)
        if flo * fhi > 0:  # widen for unusual parameter sets
            lo, hi = -120.0, 0.0
        return float(brentq(self.membrane_current, lo, hi, xtol=1e-12))


@dataclass(frozen=True)
class SynapseParameters:
    """Double-exponential conductance kinetics for one receptor class.

    E_exc / E_inh are the reversal potentials used for the excitatory and
    inhibitory channel of a modulatory class; non-modulatory classes use
    their NeurotransmitterClass reversal directly.
    """

    tau_rise: float = 0.5     # ms
    tau_decay: float = 5.0    # ms
    g_peak_scale: float = 1.0  # mS/cm^2 per unit synapse weight
    E_exc: float = 0.0        # mV
    E_inh: float = -80.0      # mV

    def __post_init__(self):
        if not 0 < self.tau_rise < self.tau_decay:
            raise ValueError("need 0 < tau_rise < tau_decay")
        if self.g_peak_scale < 0:
            raise ValueError("g_peak_scale must be >= 0")


@dataclass
class ModelParameters:
    """Per-class parameter tables with shared defaults."""

    default_hh: HHParameters = field(default_factory=HHParameters)
    default_syn: SynapseParameters = field(default_factory=SynapseParameters)
    hh_by_class: dict[int, HHParameters] = field(default_factory=dict)
    syn_by_class: dict[int, SynapseParameters] = field(default_factory=dict)

    def hh_for(self, class_id: int) -> HHParameters:
        return self.hh_by_class.get(class_id, self.default_hh)

    def syn_for(self, class_id: int) -> SynapseParameters:
        return self.syn_by_class.get(class_id, self.default_syn)


@dataclass(frozen=True)
class ChannelKinetics:
    """One synaptic conductance channel as seen by a single neuron."""

    tau_rise: float
    tau_decay: float
    g_peak: float
    e_syn: float

    @property
    def inv_norm(self) -> float:
        return 1.0 / double_exp_peak_norm(self.tau_rise, self.tau_decay)


@dataclass
class NeuronState:
    """Single-neuron state: membrane plus per-channel gate pairs."""

    V: float
    m: float
    h: float
    n: float
    s_rise: np.ndarray
    s_decay: np.ndarray


def hh_derivative(state: NeuronState, channels: Sequence[ChannelKinetics],
                  I_ext: float, params: HHParameters) -> NeuronState:
    """Time derivative of a single neuron's state (returned in NeuronState
    slots). Synaptic current per channel is g(s) * (E_syn - V)."""
    values = [state.V, state.m, state.h, state.n, I_ext,
              *np.ravel(state.s_rise), *np.ravel(state.s_decay)]
    if not all(math.isfinite(v) for v in values):
        raise NonFiniteStateError("non-finite neuron state or input")
    am, bm, ah, bh, an, bn = rate_constants(state.V)
    I_ion = (params.g_Na * state.m**3 * state.h * (state.V - params.E_Na)
             + params.g_K * state.n**4 * (state.V - params.E_K)
             + params.g_L * (state.V - params.E_L))
    I_syn = 0.0
    dsr = np.zeros(len(channels))
    dsd = np.zeros(len(channels))
    for c, ch in enumerate(channels):
        g = ch.g_peak * ch.inv_norm * (state.s_decay[c] - state.s_rise[c])
        I_syn += g * (ch.e_syn - state.V)
        dsr[c] = -state.s_rise[c] / ch.tau_rise
        dsd[c] = -state.s_decay[c] / ch.tau_decay
    dV = (I_ext + I_syn - I_ion) / params.C_m
    return NeuronState(
        V=float(dV),
        m=float(am * (1 - state.m) - bm * state.m),
        h=float(ah * (1 - state.h) - bh * state.h),
        n=float(an * (1 - state.n) - bn * state.n),
        s_rise=dsr,
        s_decay=dsd,
    )


@dataclass
class StimulusSpec:
    """Constant-current stimulus on a neuron selection."""

    amplitude: float               # uA/cm^2
    onset: float                   # ms
    offset: float                  # ms
    class_label: str | None = None
    ncell: int | None = None
    neuron_ids: Sequence[int] | None = None

    def __post_init__(self):
        selectors = [self.class_label is not None, self.ncell is not None,
                     self.neuron_ids is not None]
        if sum(selectors) != 1:
            raise ValueError("exactly one of class_label / ncell / neuron_ids required")
        if not math.isfinite(self.amplitude):
            raise ValueError("stimulus amplitude must be finite")
        if not self.onset < self.offset:
            raise ValueError("stimulus needs onset < offset")

    def resolve(self, compartment: Compartment) -> np.ndarray:
        """Neuron ids selected by this stimulus, sorted."""
        if self.neuron_ids is not None:
            known = {n.neuron_id for n in compartment.neurons}
            missing = [i for i in self.neuron_ids if i not in known]
            if missing:
                raise ValueError(f"stimulus targets unknown neurons {missing}")
            return np.asarray(sorted(set(int(i) for i in self.neuron_ids)), dtype=np.int64)
        if self.class_label is not None:
            cls = [c.id for c in compartment.classes if c.label == self.class_label]
            if not cls:
                raise ValueError(f"no class labelled {self.class_label!r}")
            wanted = set(cls)
            return np.asarray(sorted(n.neuron_id for n in compartment.neurons
                                     if n.class_id in wanted), dtype=np.int64)
        return np.asarray(sorted(n.neuron_id for n in compartment.neurons
                                 if n.ncell_id == self.ncell), dtype=np.int64)


@dataclass
class SimulationConfig:
    duration: float               # ms
    dt: float = 0.025             # ms
    seed: int = 0
    record_every: int = 1
    stimuli: list[StimulusSpec] = field(default_factory=list)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.duration < self.dt:
            raise ValueError("duration must be >= dt")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        for s in self.stimuli:
            if s.offset > self.duration + 1e-9:
                raise ValueError("stimulus offset exceeds duration")


@dataclass
class SimulationRecord:
    """Recorded per-neuron synaptic potentials and spike times."""

    times: np.ndarray              # (n_recorded,) ms
    neuron_ids: np.ndarray         # sorted ids; column order of u
    u: np.ndarray                  # (n_recorded, n_neurons) mV, V - V_rest
    spikes: list[np.ndarray]       # per neuron, strictly increasing times (ms)
    v_rest: np.ndarray
    dt: float
    record_every: int
    clamp_events: int
    backend: str

    @property
    def sample_rate_hz(self) -> float:
        return 1000.0 / (self.dt * self.record_every)

    def u_by_id(self, step_index: int) -> dict[int, float]:
        row = self.u[step_index]
        return {int(nid): float(row[k]) for k, nid in enumerate(self.neuron_ids)}


def build_network(compartment: Compartment,
                  params: ModelParameters | None = None) -> Network:
    return _build_network(compartment, params or ModelParameters())


def step_network(state: NetworkState, network: Network, dt: float) -> NetworkState:
    """One RK4 step of the whole network (pure backend semantics)."""
    if dt > MAX_STABLE_DT_MS:
        raise ValueError(f"dt={dt} ms exceeds stability guard {MAX_STABLE_DT_MS} ms")
    return _network.step_state(network, state, dt)


def simulate(compartment: Compartment, config: SimulationConfig,
             params: ModelParameters | None = None,
             backend: str | None = None, threads: int = 1) -> SimulationRecord:
    """Integrate 0..duration and record u = V - V_rest at the configured
    stride. Deterministic for identical inputs, regardless of `threads`."""
    if config.dt > MAX_STABLE_DT_MS:
        raise ValueError(f"dt={config.dt} ms exceeds stability guard {MAX_STABLE_DT_MS} ms")
    backend = backend or default_backend()
    if backend not in ("cython", "pure"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "cython" and not _HAVE_CORE:
        raise RuntimeError("compiled core not available; use backend='pure'")

    net = build_network(compartment, params)
    _attach_stimuli(net, compartment, config.stimuli)

    n_steps = int(round(config.duration / config.dt))
    n_rec = n_steps // config.record_every + 1
    times = np.arange(n_rec) * (config.dt * config.record_every)
    n = net.n_neurons
    u_out = np.empty((n_rec, n))
    state = initial_state(net)

    if backend == "cython":
        stim_index = (np.concatenate(net.stim_targets_idx)
                      if net.stim_targets_idx else np.zeros(0, dtype=np.int64))
        stim_ptr = np.zeros(len(net.stim_targets_idx) + 1, dtype=np.int64)
        for k, idx in enumerate(net.stim_targets_idx):
            stim_ptr[k + 1] = stim_ptr[k] + len(idx)
        spike_steps, spike_neurons, clamp_events = _core.run_network(
            state.V, state.m, state.h, state.n, state.s_rise, state.s_decay,
            net.C_m, net.g_Na, net.g_K, net.g_L, net.E_Na, net.E_K, net.E_L,
            net.V_rest,
            net.chan_tau_rise, net.chan_tau_decay, net.chan_inv_norm,
            net.chan_g_scale, net.chan_E,
            net.syn_offsets, net.syn_post, net.syn_chan, net.syn_weight,
            stim_index, stim_ptr, net.stim_amplitude, net.stim_onset,
            net.stim_offset,
            config.dt, n_steps, config.record_every, u_out, max(1, threads))
    else:
        state, spike_steps, spike_neurons = _network.run_pure(
            net, state, config.dt, n_steps, config.record_every, u_out)
        clamp_events = state.clamp_events

    spikes: list[list[float]] = [[] for _ in range(n)]
    for step, k in zip(spike_steps, spike_neurons):
        spikes[int(k)].append(float(step * config.dt))
    return SimulationRecord(
        times=times,
        neuron_ids=net.neuron_ids,
        u=u_out,
        spikes=[np.asarray(s) for s in spikes],
        v_rest=net.V_rest,
        dt=config.dt,
        record_every=config.record_every,
        clamp_events=int(clamp_events),
        backend=backend,
    )


def _attach_stimuli(net: Network, compartment: Compartment,
                    stimuli: Sequence[StimulusSpec]) -> None:
    index_of = {int(nid): k for k, nid in enumerate(net.neuron_ids)}
    targets = []
    for s in stimuli:
        ids = s.resolve(compartment)
        targets.append(np.asarray([index_of[int(i)] for i in ids], dtype=np.int64))
    net.stim_targets_idx = targets
    net.stim_targets = targets  # pure backend reads this name
    net.stim_amplitude = np.asarray([s.amplitude for s in stimuli], dtype=float)
    net.stim_onset = np.asarray([s.onset for s in stimuli], dtype=float)
    net.stim_offset = np.asarray([s.offset for s in stimuli], dtype=float)
