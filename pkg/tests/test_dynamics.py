"""Membrane/synapse integration: fixed point, oracle agreement, backends."""

import numpy as np
import pytest

from ncellsim.compartment import (
    Compartment,
    NCell,
    Neuron,
    NeurotransmitterClass,
    SpatialDomain,
    Synapse,
)
from ncellsim.dynamics import (
    ChannelKinetics,
    HHParameters,
    ModelParameters,
    NeuronState,
    SimulationConfig,
    StimulusSpec,
    SynapseParameters,
    available_backends,
    hh_derivative,
    simulate,
)
from ncellsim.errors import NonFiniteStateError

from helpers import uniform_rho
from oracles import count_spikes, hh_integrate, hh_resting_potential

HAVE_CYTHON = "cython" in available_backends()


def line_compartment(n_neurons, synapses=(), classes=None):
    """n neurons on a line in one n-cell; uniform fields."""
    domain = SpatialDomain(2, ((0.0, 8.0), (0.0, 8.0)), (4, 4))
    if classes is None:
        classes = [NeurotransmitterClass(0, "exc", 0.0)]
    neurons = [Neuron(i, min(i, len(classes) - 1) if len(classes) > 1 else 0,
                      0, i, (0.5 + i, 0.5)) for i in range(n_neurons)]
    ncell = NCell(0, list(range(n_neurons)), list(synapses),
                  np.ones(n_neurons))
    rho = {c.id: uniform_rho(domain.grid_shape, domain.cell_volume)
           for c in classes}
    chi = {0: np.ones(domain.grid_shape)}
    return Compartment(domain=domain, classes=classes, ncells=[ncell],
                       neurons=neurons, rho=rho, chi=chi)


def stim(amplitude, ids, onset=0.0, offset=1e9):
    return StimulusSpec(amplitude=amplitude, onset=onset, offset=offset,
                        neuron_ids=list(ids))


class TestRestingState:
    def test_resting_potential_matches_bisection_oracle(self):
        ours = HHParameters().resting_potential()
        theirs = hh_resting_potential()
        assert ours == pytest.approx(theirs, abs=1e-6)

    def test_rest_is_fixed_point(self):
        comp = line_compartment(1)
        cfg = SimulationConfig(duration=25.0, dt=0.025)
        rec = simulate(comp, cfg, backend="pure")
        assert np.max(np.abs(rec.u)) < 1e-6

    def test_zero_stimulus_u_zero(self):
        comp = line_compartment(3)
        cfg = SimulationConfig(duration=100.0, dt=0.025, record_every=10)
        rec = simulate(comp, cfg)
        assert np.max(np.abs(rec.u)) < 1e-6
        assert all(len(s) == 0 for s in rec.spikes)


class TestScalarOracle:
    @pytest.mark.parametrize("backend", available_backends())
    def test_driven_neuron_matches_reference(self, backend):
        dt = 0.025
        comp = line_compartment(1)
        cfg = SimulationConfig(duration=200.0, dt=dt,
                               stimuli=[stim(10.0, [0], 0.0, 200.0)])
        rec = simulate(comp, cfg, backend=backend)
        _, v_ref = hh_integrate(200.0, dt, lambda t: 10.0)
        v_sim = rec.u[:, 0] + rec.v_rest[0]
        assert np.max(np.abs(v_sim - v_ref)) < 1e-3

    def test_firing_rate_at_10uA(self):
        comp = line_compartment(1)
        cfg = SimulationConfig(duration=1000.0, dt=0.025, record_every=4,
                               stimuli=[stim(10.0, [0], 0.0, 1000.0)])
        rec = simulate(comp, cfg)
        rate = len(rec.spikes[0])
        assert 50 <= rate <= 90

    def test_oracle_firing_rate_agrees(self):
        _, v = hh_integrate(1000.0, 0.025, lambda t: 10.0)
        comp = line_compartment(1)
        cfg = SimulationConfig(duration=1000.0, dt=0.025,
                               stimuli=[stim(10.0, [0], 0.0, 1000.0)])
        rec = simulate(comp, cfg)
        assert abs(len(rec.spikes[0]) - count_spikes(v)) <= 1


class TestHhDerivative:
    def channels(self):
        return [ChannelKinetics(0.5, 5.0, 1.0, 0.0)]

    def state(self, V=-65.0):
        return NeuronState(V=V, m=0.05, h=0.6, n=0.32,
                           s_rise=np.zeros(1), s_decay=np.zeros(1))

    def test_silent_synapse_contributes_nothing(self):
        p = HHParameters()
        with_ch = hh_derivative(self.state(), self.channels(), 0.0, p)
        without = hh_derivative(self.state(), [], 0.0, p)
        assert with_ch.V == pytest.approx(without.V, abs=1e-12)

    def test_open_synapse_depolarizes(self):
        p = HHParameters()
        s = self.state()
        s.s_decay = np.array([1.0])
        d = hh_derivative(s, self.channels(), 0.0, p)
        base = hh_derivative(self.state(), self.channels(), 0.0, p)
        assert d.V > base.V  # excitatory current (E_syn=0 > V)

    def test_nonfinite_rejected(self):
        with pytest.raises(NonFiniteStateError):
            hh_derivative(self.state(V=float("nan")), [], 0.0, HHParameters())


class TestSynapticTransmission:
    def make(self, reversal, sign):
        classes = [NeurotransmitterClass(0, "pre", 0.0),
                   NeurotransmitterClass(1, "syn", reversal,
                                         is_modulatory=True)]
        syn = Synapse(0, 1, 1, 1.0, sign)
        comp = line_compartment(2, synapses=[syn], classes=classes)
        return comp

    def run(self, reversal, sign):
        comp = self.make(reversal, sign)
        cfg = SimulationConfig(duration=80.0, dt=0.025, record_every=4,
                               stimuli=[stim(10.0, [0], 0.0, 80.0)])
        params = ModelParameters(
            syn_by_class={1: SynapseParameters(tau_rise=0.5, tau_decay=5.0,
                                               g_peak_scale=0.05)})
        return simulate(comp, cfg, params)

    def test_excitatory_sign_depolarizes_post(self):
        rec = self.run(0.0, 1)
        assert len(rec.spikes[0]) > 0  # pre fired
        assert np.max(rec.u[:, 1]) > 0.5

    def test_inhibitory_sign_hyperpolarizes_post(self):
        rec = self.run(0.0, -1)
        assert np.min(rec.u[:, 1]) < -0.5
        assert np.max(rec.u[:, 1]) < 0.5

    def test_no_spike_no_transmission(self):
        comp = self.make(0.0, 1)
        cfg = SimulationConfig(duration=50.0, dt=0.025,
                               stimuli=[stim(1.0, [0], 0.0, 50.0)])  # subthreshold
        rec = simulate(comp, cfg)
        assert len(rec.spikes[0]) == 0
        assert np.max(np.abs(rec.u[:, 1])) < 1e-9


class TestBackends:
    @pytest.mark.skipif(not HAVE_CYTHON, reason="compiled core not built")
    def test_backends_agree(self):
        classes = [NeurotransmitterClass(0, "exc", 0.0)]
        syn = Synapse(0, 1, 0, 0.8, 1)
        comp = line_compartment(3, synapses=[syn], classes=classes)
        cfg = SimulationConfig(duration=200.0, dt=0.025, record_every=4,
                               stimuli=[stim(10.0, [0], 0.0, 200.0)])
        a = simulate(comp, cfg, backend="pure")
        b = simulate(comp, cfg, backend="cython")
        assert np.max(np.abs(a.u - b.u)) < 1e-6

    @pytest.mark.skipif(not HAVE_CYTHON, reason="compiled core not built")
    def test_thread_count_bit_identical(self):
        syn = [Synapse(i, (i + 1) % 8, 0, 0.5, 1) for i in range(8)]
        comp = line_compartment(8, synapses=syn)
        cfg = SimulationConfig(duration=150.0, dt=0.025, record_every=4,
                               stimuli=[stim(10.0, [0], 0.0, 150.0)])
        ref = simulate(comp, cfg, backend="cython", threads=1)
        for threads in (2, 3, 8):
            out = simulate(comp, cfg, backend="cython", threads=threads)
            np.testing.assert_array_equal(ref.u, out.u)

    def test_dt_refinement_stays_close(self):
        comp = line_compartment(1)
        dur = 100.0
        cfg1 = SimulationConfig(duration=dur, dt=0.025, record_every=2,
                                stimuli=[stim(10.0, [0], 0.0, dur)])
        cfg2 = SimulationConfig(duration=dur, dt=0.0125, record_every=4,
                                stimuli=[stim(10.0, [0], 0.0, dur)])
        a = simulate(comp, cfg1)
        b = simulate(comp, cfg2)
        assert np.max(np.abs(a.u - b.u)) < 0.5


class TestConfigValidation:
    def test_dt_guard(self):
        comp = line_compartment(1)
        cfg = SimulationConfig(duration=10.0, dt=0.05)
        simulate(comp, cfg)  # boundary ok
        with pytest.raises(ValueError, match="stability guard"):
            simulate(comp, SimulationConfig(duration=10.0, dt=0.06))

    def test_stimulus_selector_exclusivity(self):
        with pytest.raises(ValueError):
            StimulusSpec(amplitude=1.0, onset=0.0, offset=1.0,
                         class_label="a", ncell=0)
        with pytest.raises(ValueError):
            StimulusSpec(amplitude=1.0, onset=0.0, offset=1.0)

    def test_stimulus_times(self):
        with pytest.raises(ValueError):
            StimulusSpec(amplitude=1.0, onset=5.0, offset=5.0, ncell=0)

    def test_offset_beyond_duration(self):
        with pytest.raises(ValueError, match="offset exceeds duration"):
            SimulationConfig(duration=10.0, stimuli=[
                StimulusSpec(amplitude=1.0, onset=0.0, offset=20.0, ncell=0)])

    def test_resolve_by_class_and_ncell(self):
        classes = [NeurotransmitterClass(0, "a", 0.0),
                   NeurotransmitterClass(1, "b", 0.0)]
        comp = line_compartment(3, classes=classes)
        by_class = StimulusSpec(amplitude=1.0, onset=0.0, offset=1.0,
                                class_label="b").resolve(comp)
        assert list(by_class) == [1, 2]
        by_cell = StimulusSpec(amplitude=1.0, onset=0.0, offset=1.0,
                               ncell=0).resolve(comp)
        assert list(by_cell) == [0, 1, 2]
        with pytest.raises(ValueError, match="unknown neurons"):
            stim(1.0, [99]).resolve(comp)


class TestRecordShape:
    def test_record_stride_and_times(self):
        comp = line_compartment(2)
        cfg = SimulationConfig(duration=10.0, dt=0.025, record_every=40)
        rec = simulate(comp, cfg)
        assert rec.u.shape == (11, 2)
        np.testing.assert_allclose(rec.times, np.arange(11) * 1.0)
        assert rec.sample_rate_hz == pytest.approx(1000.0)

    def test_first_row_is_initial_state(self):
        comp = line_compartment(2)
        cfg = SimulationConfig(duration=5.0, dt=0.025)
        rec = simulate(comp, cfg)
        np.testing.assert_allclose(rec.u[0], 0.0, atol=1e-12)

    def test_spike_times_increasing(self):
        comp = line_compartment(1)
        cfg = SimulationConfig(duration=500.0, dt=0.025,
                               stimuli=[stim(10.0, [0], 0.0, 500.0)])
        rec = simulate(comp, cfg)
        st = rec.spikes[0]
        assert len(st) > 10
        assert np.all(np.diff(st) > 0)
