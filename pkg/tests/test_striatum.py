"""Striatal compartment builder: counts, edge legality, determinism,
connection statistics."""

import numpy as np
import pytest
from scipy import stats

from ncellsim.compartment import validate_compartment
from ncellsim.errors import ForbiddenEdgeError, InvalidFractionsError
from ncellsim.striatum import (
    CLASS_ID,
    EDGE_TABLE,
    POPULATION_CLASS,
    POPULATIONS,
    StriatumParams,
    build_striatum,
    build_striatum_detailed,
    cholinergic_center_neuron,
    demo_stimulus,
    largest_remainder_counts,
)


@pytest.fixture(scope="module")
def built():
    params = StriatumParams(total_neurons=400, seed=3)
    return params, *build_striatum_detailed(params)


class TestCounts:
    def test_largest_remainder_sums_exactly(self):
        fr = {"St1A": 0.48, "St1B": 0.48, "St2": 0.01,
              "St3": 0.015, "St4": 0.015}
        for total in (400, 6400, 997):
            counts = largest_remainder_counts(fr, total)
            assert sum(counts.values()) == total

    def test_largest_remainder_rounds_to_largest_fraction_first(self):
        counts = largest_remainder_counts(
            {"St1A": 0.5, "St1B": 0.26, "St2": 0.24, "St3": 0.0, "St4": 0.0},
            10)
        assert counts == {"St1A": 5, "St1B": 3, "St2": 2, "St3": 0, "St4": 0}

    def test_population_sizes(self, built):
        params, comp, layout = built
        pops = list(layout.population_of.values())
        assert len(pops) == 400
        want = largest_remainder_counts(params.fractions, 400)
        for pop in POPULATIONS:
            assert pops.count(pop) == want[pop]

    def test_spiny_share(self, built):
        _, _, layout = built
        pops = list(layout.population_of.values())
        spiny = pops.count("St1A") + pops.count("St1B")
        assert spiny / len(pops) == pytest.approx(0.96, abs=1e-12)

    def test_default_full_size(self):
        assert StriatumParams().total_neurons == 6400


class TestGeometry:
    def test_one_neuron_per_lattice_site(self, built):
        _, comp, _ = built
        positions = {n.position for n in comp.neurons}
        assert len(positions) == 400
        for x, y in positions:
            assert x % 1.0 == 0.5 and y % 1.0 == 0.5

    def test_compartment_validates(self, built):
        _, comp, _ = built
        assert validate_compartment(comp) == []

    def test_class_assignment_follows_population(self, built):
        _, comp, layout = built
        for n in comp.neurons:
            pop = layout.population_of[n.neuron_id]
            assert n.class_id == CLASS_ID[POPULATION_CLASS[pop]]

    def test_ncell_tiling(self, built):
        params, comp, _ = built
        # 20x20 lattice with 8x8 blocks tiles into 3x3 = 9 n-cells
        assert len(comp.ncells) == 9
        assert sum(len(c.node_neurons) for c in comp.ncells) == 400


class TestEdges:
    def test_all_synapses_in_edge_table(self, built):
        _, comp, layout = built
        assert len(layout.synapse_pops) == len(list(comp.all_synapses()))
        for pre_pop, post_pop, sign in layout.synapse_pops:
            assert (pre_pop, post_pop) in EDGE_TABLE
            assert sign == EDGE_TABLE[(pre_pop, post_pop)][1]

    def test_receptor_class_matches_table(self, built):
        _, comp, layout = built
        for syn in comp.all_synapses():
            pre_pop = layout.population_of[syn.pre_neuron]
            post_pop = layout.population_of[syn.post_neuron]
            label, sign = EDGE_TABLE[(pre_pop, post_pop)]
            assert syn.receptor_class == CLASS_ID[label]
            assert syn.sign == sign

    def test_no_self_synapse(self, built):
        _, comp, _ = built
        assert all(s.pre_neuron != s.post_neuron for s in comp.all_synapses())

    def test_connection_rate_is_binomial(self):
        # realized in-block edge count should sit inside a wide binomial CI
        params = StriatumParams(total_neurons=400, seed=11)
        params.connection_probabilities = {e: 0.15 for e in EDGE_TABLE}
        params.adjacent_factor = 0.0
        comp, layout = build_striatum_detailed(params)
        edge = ("St1A", "St1B")
        n_in, _ = layout.candidate_counts[edge]
        realized = sum(1 for e in layout.synapse_pops if e[:2] == edge)
        lo, hi = stats.binom.interval(0.9999, n_in, 0.15)
        assert lo <= realized <= hi

    def test_weight_decay(self):
        params = StriatumParams(total_neurons=400, seed=2,
                                weight_decay_length=4.0)
        params.weight_scales = {e: 1.0 for e in params.weight_scales}
        comp, _ = build_striatum_detailed(params)
        pos = {n.neuron_id: np.asarray(n.position) for n in comp.neurons}
        for s in comp.all_synapses():
            d = float(np.linalg.norm(pos[s.pre_neuron] - pos[s.post_neuron]))
            assert s.weight == pytest.approx(np.exp(-d / 4.0), rel=1e-9)


class TestDeterminism:
    def test_same_seed_same_checksum(self):
        a = build_striatum(StriatumParams(total_neurons=400, seed=7))
        b = build_striatum(StriatumParams(total_neurons=400, seed=7))
        assert a.checksum() == b.checksum()

    def test_different_seed_different_checksum(self):
        a = build_striatum(StriatumParams(total_neurons=400, seed=7))
        b = build_striatum(StriatumParams(total_neurons=400, seed=8))
        assert a.checksum() != b.checksum()


class TestValidation:
    def test_fractions_must_sum_to_one(self):
        params = StriatumParams(total_neurons=400)
        params.fractions["St1A"] = 0.9
        with pytest.raises(InvalidFractionsError):
            params.validate()

    def test_fractions_must_cover_populations(self):
        params = StriatumParams(total_neurons=400)
        del params.fractions["St2"]
        with pytest.raises(InvalidFractionsError):
            params.validate()

    def test_forbidden_edge_rejected(self):
        params = StriatumParams(total_neurons=400)
        params.connection_probabilities[("St1A", "St4")] = 0.1
        with pytest.raises(ForbiddenEdgeError):
            params.validate()

    def test_non_square_total_rejected(self):
        with pytest.raises(InvalidFractionsError):
            StriatumParams(total_neurons=300).resolved_grid_side()


class TestDemoStimulus:
    def test_center_neuron_is_cholinergic(self, built):
        _, comp, layout = built
        nid = cholinergic_center_neuron(comp)
        assert layout.population_of[nid] == "St4"

    def test_center_neuron_is_nearest_st4(self, built):
        _, comp, layout = built
        nid = cholinergic_center_neuron(comp)
        center = np.array([10.0, 10.0])
        pos = {n.neuron_id: np.asarray(n.position) for n in comp.neurons}
        best = min((i for i, p in layout.population_of.items() if p == "St4"),
                   key=lambda i: np.linalg.norm(pos[i] - center))
        assert nid == best

    def test_demo_stimulus_defaults(self, built):
        _, comp, _ = built
        s = demo_stimulus(comp, duration=500.0)
        assert s.amplitude == 10.0
        assert s.onset == 0.0 and s.offset == 500.0
        assert s.neuron_ids == [cholinergic_center_neuron(comp)]
