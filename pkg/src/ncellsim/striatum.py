"""Ready-made corpus-striatum compartment: five populations on a square
lattice, the microcircuit edge set with its excitatory/inhibitory signs, an
8x8-block n-cell tiling, and the tonic cholinergic point stimulus used by
the demo pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.ndimage import gaussian_filter

from .compartment import (
    Compartment,
    InvalidCompartmentError,
    NCell,
    Neuron,
    NeurotransmitterClass,
    SpatialDomain,
    Synapse,
    validate_compartment,
)
from .dynamics import (
    HHParameters,
    ModelParameters,
    SimulationConfig,
    StimulusSpec,
    SynapseParameters,
)
from .errors import ForbiddenEdgeError, InvalidFractionsError

POPULATIONS = ("St1A", "St1B", "St2", "St3", "St4")

# population -> neurotransmitter class label
POPULATION_CLASS = {
    "St1A": "GABA",  # spiny projection, direct pathway
    "St1B": "GABA",  # spiny projection, indirect pathway
    "St2": "DA",     # dopaminergic interneurons
    "St3": "GABA",   # GABAergic interneurons
    "St4": "ACh",    # cholinergic interneurons
}

CLASS_SPECS = [
    # (id, label, reversal mV, modulatory)
    (0, "GABA", -80.0, False),
    (1, "DA", 0.0, True),
    (2, "ACh", 0.0, True),
]
CLASS_ID = {label: cid for cid, label, _, _ in CLASS_SPECS}

# Microcircuit edge set: (pre_pop, post_pop) -> (receptor class label, sign).
# Spiny collaterals and the GABAergic interneuron projections are inhibitory;
# cholinergic output inhibits the direct-pathway spiny cells, effectively
# excites the indirect pathway, and drives the dopaminergic interneurons;
# dopamine acts with opposite signs on the two spiny populations (D1/D2).
EDGE_TABLE: dict[tuple[str, str], tuple[str, int]] = {
    ("St1A", "St1A"): ("GABA", -1),
    ("St1A", "St1B"): ("GABA", -1),
    ("St1B", "St1A"): ("GABA", -1),
    ("St1B", "St1B"): ("GABA", -1),
    ("St3", "St1A"): ("GABA", -1),
    ("St3", "St1B"): ("GABA", -1),
    ("St3", "St4"): ("GABA", -1),
    ("St4", "St1A"): ("ACh", -1),
    ("St4", "St1B"): ("ACh", +1),
    ("St4", "St2"): ("ACh", +1),
    ("St2", "St1A"): ("DA", +1),
    ("St2", "St1B"): ("DA", -1),
}

DEFAULT_FRACTIONS = {
    "St1A": 0.48,
    "St1B": 0.48,
    "St2": 0.01,
    "St3": 0.015,
    "St4": 0.015,
}

DEFAULT_CONNECTION_PROBABILITY = 0.1   # within an n-cell block
DEFAULT_ADJACENT_FACTOR = 0.5          # adjacent-block probability multiplier
DEFAULT_BLOCK_SIDE = 8
DEFAULT_STIMULUS_UA_PER_CM2 = 10.0

# The cholinergic fan-out is dense so a single tonically firing source can
# recruit a contiguous neighborhood.
DEFAULT_EDGE_PROBABILITIES = {
    edge: (0.6 if edge[0] == "St4" else DEFAULT_CONNECTION_PROBABILITY)
    for edge in EDGE_TABLE
}

# Per-edge weight scales. The St4 -> St1B weights are capped near the 1:1
# entrainment plateau of the follower response (roughly w <= 0.2 for the
# default cholinergic kinetics): nearby followers lock to the source rate
# instead of free-running faster, which keeps the population rhythm inside
# the gamma band, while the exponential distance decay below makes the
# recruitment latency grow monotonically with distance (the radial wave).
# Dopaminergic drive and the direct cholinergic projection onto St1A stay
# far below firing threshold; at larger values they add rebound and
# second-order spikes whose latencies do not correlate with distance.
DEFAULT_WEIGHT_SCALES = {
    ("St1A", "St1A"): 1.0,
    ("St1A", "St1B"): 1.0,
    ("St1B", "St1A"): 1.0,
    ("St1B", "St1B"): 1.0,
    ("St3", "St1A"): 1.0,
    ("St3", "St1B"): 1.0,
    ("St3", "St4"): 1.0,
    ("St4", "St1A"): 0.02,
    ("St4", "St1B"): 0.2,
    ("St4", "St2"): 0.05,
    ("St2", "St1A"): 0.05,
    ("St2", "St1B"): 0.05,
}

DEFAULT_WEIGHT_DECAY_LENGTH = 20.0


@dataclass
class StriatumParams:
    total_neurons: int = 6400
    grid_side: int | None = None     # derived as sqrt(total_neurons) if None
    fractions: dict = dc_field(default_factory=lambda: dict(DEFAULT_FRACTIONS))
    connection_probabilities: dict = dc_field(
        default_factory=lambda: dict(DEFAULT_EDGE_PROBABILITIES))
    adjacent_factor: float = DEFAULT_ADJACENT_FACTOR
    weight_scales: dict = dc_field(
        default_factory=lambda: dict(DEFAULT_WEIGHT_SCALES))
    weight_decay_length: float | None = DEFAULT_WEIGHT_DECAY_LENGTH
    # synaptic weight = scale * exp(-distance / weight_decay_length)
    block_side: int = DEFAULT_BLOCK_SIDE
    rho_perturbation: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        if set(self.fractions) != set(POPULATIONS):
            raise InvalidFractionsError(
                f"fractions must cover exactly {POPULATIONS}")
        total = sum(self.fractions.values())
        if abs(total - 1.0) > 1e-9:
            raise InvalidFractionsError(f"fractions sum to {total!r}, expected 1")
        for pop, f in self.fractions.items():
            if not 0.0 <= f <= 1.0:
                raise InvalidFractionsError(f"fraction for {pop} is {f}, outside [0, 1]")
        for edge, p in self.connection_probabilities.items():
            if edge not in EDGE_TABLE:
                raise ForbiddenEdgeError(f"edge {edge} is not part of the microcircuit")
            if not 0.0 <= p <= 1.0:
                raise InvalidFractionsError(f"probability for edge {edge} is {p}")
        for edge in self.weight_scales:
            if edge not in EDGE_TABLE:
                raise ForbiddenEdgeError(f"edge {edge} is not part of the microcircuit")

    def resolved_grid_side(self) -> int:
        if self.grid_side is not None:
            if self.grid_side ** 2 != self.total_neurons:
                raise InvalidFractionsError(
                    f"grid_side^2 = {self.grid_side ** 2} != total_neurons "
                    f"{self.total_neurons}")
            return self.grid_side
        side = math.isqrt(self.total_neurons)
        if side * side != self.total_neurons:
            raise InvalidFractionsError(
                f"total_neurons {self.total_neurons} is not a perfect square")
        return side


@dataclass
class StriatumLayout:
    """Builder-side bookkeeping for tests and frame rendering."""

    grid_side: int
    population_of: dict[int, str]            # neuron_id -> population
    synapse_pops: list[tuple[str, str, int]]  # (pre_pop, post_pop, sign) per synapse
    candidate_counts: dict[tuple[str, str], tuple[int, int]]  # edge -> (n_in, n_adj)


def largest_remainder_counts(fractions: dict, total: int) -> dict:
    """Population counts summing exactly to total."""
    raw = {pop: fractions[pop] * total for pop in POPULATIONS}
    counts = {pop: int(math.floor(raw[pop])) for pop in POPULATIONS}
    short = total - sum(counts.values())
    remainders = sorted(POPULATIONS, key=lambda p: raw[p] - counts[p], reverse=True)
    for pop in remainders[:short]:
        counts[pop] += 1
    return counts


def _perturbed_density(side: int, amplitude: float, rng) -> np.ndarray:
    """Uniform density with a smooth seeded perturbation, unit integral."""
    noise = rng.standard_normal((side, side))
    smooth = gaussian_filter(noise, sigma=max(side / 8.0, 1.0), mode="wrap")
    peak = np.max(np.abs(smooth))
    if peak > 0:
        smooth = smooth / peak
    f = 1.0 + amplitude * smooth
    f = np.clip(f, 0.0, None)
    return f / f.sum()  # lattice cell volume is 1


def build_striatum_detailed(params: StriatumParams) -> tuple[Compartment, StriatumLayout]:
    params.validate()
    side = params.resolved_grid_side()
    total = params.total_neurons
    rng = np.random.default_rng(params.seed)

    domain = SpatialDomain(
        dimension=2,
        bounds=((0.0, float(side)), (0.0, float(side))),
        grid_resolution=(side, side),
    )

    counts = largest_remainder_counts(params.fractions, total)

    # per-population density fields; also used for site assignment below
    pop_rho = {pop: _perturbed_density(side, params.rho_perturbation, rng)
               for pop in POPULATIONS}

    # assign populations to lattice sites, weighted by each population's field
    site_pop = np.empty(total, dtype=object)
    remaining = np.arange(total)
    for pop in POPULATIONS:
        k = counts[pop]
        if k == 0:
            continue
        w = pop_rho[pop].ravel()[remaining]
        chosen = rng.choice(len(remaining), size=k, replace=False, p=w / w.sum())
        site_pop[remaining[chosen]] = pop
        remaining = np.delete(remaining, np.sort(chosen))

    classes = [NeurotransmitterClass(cid, label, rev, mod)
               for cid, label, rev, mod in CLASS_SPECS]

    rows, cols = np.divmod(np.arange(total), side)
    positions = np.column_stack([rows + 0.5, cols + 0.5]).astype(float)

    blocks_per_side = math.ceil(side / params.block_side)
    block_of = (rows // params.block_side) * blocks_per_side + (cols // params.block_side)
    n_blocks = blocks_per_side ** 2

    neurons = [Neuron(neuron_id=i, class_id=CLASS_ID[POPULATION_CLASS[site_pop[i]]],
                      ncell_id=int(block_of[i]), node_index=0,
                      position=(float(positions[i, 0]), float(positions[i, 1])))
               for i in range(total)]
    # node_index = order within the block's node list
    members: dict[int, list[int]] = {b: [] for b in range(n_blocks)}
    for i in range(total):
        members[int(block_of[i])].append(i)
    for b, ids in members.items():
        for node_index, nid in enumerate(ids):
            n = neurons[nid]
            neurons[nid] = Neuron(n.neuron_id, n.class_id, n.ncell_id,
                                  node_index, n.position)

    # synapse sampling: candidates live in the same or an adjacent block
    pop_sites = {pop: np.flatnonzero(site_pop == pop) for pop in POPULATIONS}
    block_coord = np.column_stack([rows // params.block_side, cols // params.block_side])
    by_block: dict[str, dict[int, np.ndarray]] = {}
    for pop in POPULATIONS:
        d: dict[int, np.ndarray] = {}
        for nid in pop_sites[pop]:
            d.setdefault(int(block_of[nid]), []).append(nid)
        by_block[pop] = {b: np.asarray(v, dtype=np.int64) for b, v in d.items()}

    synapses_by_cell: dict[int, list[Synapse]] = {b: [] for b in range(n_blocks)}
    synapse_pops: list[tuple[str, str, int]] = []
    candidate_counts: dict[tuple[str, str], tuple[int, int]] = {}

    for edge in sorted(EDGE_TABLE):
        pre_pop, post_pop = edge
        receptor_label, sign = EDGE_TABLE[edge]
        p_in = params.connection_probabilities.get(edge, 0.0)
        p_adj = p_in * params.adjacent_factor
        receptor = CLASS_ID[receptor_label]
        scale = params.weight_scales.get(edge, 1.0)
        n_in = n_adj = 0
        for pre in pop_sites[pre_pop]:
            pre = int(pre)
            bi, bj = int(block_coord[pre, 0]), int(block_coord[pre, 1])
            cand_list = []
            prob_list = []
            for dbi in (-1, 0, 1):
                for dbj in (-1, 0, 1):
                    b = (bi + dbi) * blocks_per_side + (bj + dbj)
                    if not (0 <= bi + dbi < blocks_per_side
                            and 0 <= bj + dbj < blocks_per_side):
                        continue
                    posts = by_block[post_pop].get(b)
                    if posts is None:
                        continue
                    inside = dbi == 0 and dbj == 0
                    posts = posts[posts != pre]
                    if not len(posts):
                        continue
                    cand_list.append(posts)
                    prob_list.append(np.full(len(posts), p_in if inside else p_adj))
                    if inside:
                        n_in += len(posts)
                    else:
                        n_adj += len(posts)
            if not cand_list:
                continue
            cand = np.concatenate(cand_list)
            prob = np.concatenate(prob_list)
            hit = cand[rng.random(len(cand)) < prob]
            if not len(hit):
                continue
            d = np.linalg.norm(positions[hit] - positions[pre], axis=1)
            if params.weight_decay_length:
                w = scale * np.exp(-d / params.weight_decay_length)
            else:
                w = np.full(len(hit), scale)
            cell = int(block_of[pre])
            for post, weight in zip(hit, w):
                synapses_by_cell[cell].append(
                    Synapse(pre, int(post), receptor, float(weight), sign))
                synapse_pops.append((pre_pop, post_pop, sign))
        candidate_counts[edge] = (n_in, n_adj)

    ncells = [NCell(ncell_id=b, node_neurons=members[b],
                    synapses=synapses_by_cell[b],
                    psi=np.ones(len(members[b])))
              for b in range(n_blocks)]

    # chi: block indicator smoothed by a one-cell overlap ring
    chi: dict[int, np.ndarray] = {}
    for b in range(n_blocks):
        bi, bj = divmod(b, blocks_per_side)
        f = np.zeros((side, side))
        r0, r1 = bi * params.block_side, min((bi + 1) * params.block_side, side)
        c0, c1 = bj * params.block_side, min((bj + 1) * params.block_side, side)
        f[max(r0 - 1, 0):min(r1 + 1, side), max(c0 - 1, 0):min(c1 + 1, side)] = 0.5
        f[r0:r1, c0:c1] = 1.0
        chi[b] = f

    # per-class rho: fraction-weighted mix of the population fields
    rho: dict[int, np.ndarray] = {}
    for cid, label, _, _ in CLASS_SPECS:
        pops = [pop for pop in POPULATIONS if POPULATION_CLASS[pop] == label]
        mix = sum(params.fractions[pop] * pop_rho[pop] for pop in pops)
        rho[cid] = np.asarray(mix) / np.sum(mix)

    comp = Compartment(
        domain=domain,
        classes=classes,
        ncells=ncells,
        neurons=neurons,
        rho=rho,
        chi=chi,
        g_kind="sum",
        allow_cross_cell_synapses=True,
    )
    violations = validate_compartment(comp)
    if violations:
        raise InvalidCompartmentError(violations)
    layout = StriatumLayout(
        grid_side=side,
        population_of={i: str(site_pop[i]) for i in range(total)},
        synapse_pops=synapse_pops,
        candidate_counts=candidate_counts,
    )
    return comp, layout


def build_striatum(params: StriatumParams | None = None) -> Compartment:
    comp, _ = build_striatum_detailed(params or StriatumParams())
    return comp


def cholinergic_center_neuron(comp: Compartment) -> int:
    """The St4 (ACh) neuron closest to the domain center."""
    center = np.asarray([(lo + hi) / 2 for lo, hi in comp.domain.bounds])
    ach = CLASS_ID["ACh"]
    best, best_d = None, np.inf
    for n in comp.neurons:
        if n.class_id != ach:
            continue
        d = float(np.linalg.norm(np.asarray(n.position) - center))
        if d < best_d:
            best, best_d = n.neuron_id, d
    if best is None:
        raise InvalidFractionsError("compartment has no cholinergic neurons")
    return best


def demo_stimulus(comp: Compartment, duration: float = 2000.0,
                  amplitude: float = DEFAULT_STIMULUS_UA_PER_CM2) -> StimulusSpec:
    """Tonic excitatory drive onto a single central cholinergic neuron."""
    return StimulusSpec(amplitude=amplitude, onset=0.0, offset=duration,
                        neuron_ids=[cholinergic_center_neuron(comp)])


def default_model_parameters() -> ModelParameters:
    """Synapse kinetics per receptor class for the striatum demo.

    The cholinergic channel decays slowly enough that a tonically firing
    source sums temporally in its targets; this is what turns the
    distance-decayed weights into a radial recruitment order. The GABA
    conductance is kept weak: strong spiny collateral inhibition adds
    rebound spikes and latency jitter that wash out the radial ordering.
    """
    return ModelParameters(
        default_hh=HHParameters(),
        default_syn=SynapseParameters(),
        syn_by_class={
            CLASS_ID["GABA"]: SynapseParameters(tau_rise=0.5, tau_decay=5.0,
                                                g_peak_scale=0.05),
            CLASS_ID["DA"]: SynapseParameters(tau_rise=1.0, tau_decay=20.0,
                                              g_peak_scale=0.4),
            CLASS_ID["ACh"]: SynapseParameters(tau_rise=15.0, tau_decay=30.0,
                                               g_peak_scale=0.45),
        },
    )


def demo_sim_config(duration: float = 2000.0, dt: float = 0.025,
                    record_every: int = 40, seed: int = 0,
                    stimulus: StimulusSpec | None = None) -> SimulationConfig:
    stimuli = [stimulus] if stimulus is not None else []
    return SimulationConfig(duration=duration, dt=dt, seed=seed,
                            record_every=record_every, stimuli=stimuli)
