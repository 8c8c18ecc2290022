"""The averaging transformation: per-neuron potentials to the macroscopic
potential v(t).

The transformation is linear in u with time-independent coefficients, so the
fast path folds the density, composition and normalizer fields into one
weight per neuron once; `average_naive` keeps the direct lattice evaluation
as a permanent reference oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .compartment import Compartment, G_EPSILON, validate_compartment
from .errors import InvalidCompartmentError, MissingNeuronError, ShapeMismatchError


@dataclass
class AveragingWeights:
    neuron_ids: np.ndarray      # sorted
    weights: np.ndarray         # aligned with neuron_ids
    g_kind: str
    grid_resolution: tuple[int, ...]
    compartment_checksum: str

    def weight_of(self, neuron_id: int) -> float:
        k = int(np.searchsorted(self.neuron_ids, neuron_id))
        if k >= len(self.neuron_ids) or self.neuron_ids[k] != neuron_id:
            raise MissingNeuronError(f"no weight for neuron {neuron_id}")
        return float(self.weights[k])


def precompute_weights(compartment: Compartment, *, validate: bool = True) -> AveragingWeights:
    """Fold all time-independent coefficients into one weight per neuron.

    weight(x) = psi(x) * sum_y rho_class(x)(y) * chi_ncell(x)(y)
                / (|I| * g(chi(y))) * dV, skipping lattice points where
    g(chi) < G_EPSILON (they carry no n-cell).
    """
    if validate:
        violations = validate_compartment(compartment)
        if violations:
            raise InvalidCompartmentError(violations)

    dv = compartment.domain.cell_volume
    n_cells = len(compartment.ncells)
    g = compartment.g_values()
    mask = g >= G_EPSILON
    inv_g = np.zeros_like(g)
    np.divide(1.0, g, out=inv_g, where=mask)

    # shared lattice factor per (class, ncell) pair
    factor: dict[tuple[int, int], float] = {}

    def pair_factor(class_id: int, ncell_id: int) -> float:
        key = (class_id, ncell_id)
        if key not in factor:
            rho = compartment.rho[class_id]
            chi = compartment.chi[ncell_id]
            factor[key] = float(np.sum(rho * chi * inv_g) * dv / n_cells)
        return factor[key]

    neuron_index = compartment.neuron_index()
    ids = np.asarray(compartment.sorted_neuron_ids(), dtype=np.int64)
    weights = np.zeros(len(ids))
    for nc in compartment.ncells:
        for node_idx, nid in enumerate(nc.node_neurons):
            psi = float(nc.psi[node_idx])
            if psi == 0.0:
                continue  # exact zero weight for psi = 0
            neuron = neuron_index[nid]
            k = int(np.searchsorted(ids, nid))
            weights[k] = psi * pair_factor(neuron.class_id, nc.ncell_id)

    return AveragingWeights(
        neuron_ids=ids,
        weights=weights,
        g_kind=compartment.g_kind,
        grid_resolution=compartment.domain.grid_shape,
        compartment_checksum=compartment.checksum(),
    )


def average(weights: AveragingWeights, u_snapshot: Mapping[int, float]) -> float:
    """v = sum_x w[x] * u[x], summed in fixed neuron-id order."""
    total = 0.0
    for k, nid in enumerate(weights.neuron_ids):
        try:
            u = u_snapshot[int(nid)]
        except KeyError:
            raise MissingNeuronError(f"u snapshot missing neuron {int(nid)}") from None
        total += weights.weights[k] * u
    return float(total)


def average_array(weights: AveragingWeights, u_row: np.ndarray) -> float:
    """Fast path for a snapshot already aligned with weights.neuron_ids."""
    if u_row.shape != weights.weights.shape:
        raise ShapeMismatchError(
            f"snapshot shape {u_row.shape} != weights {weights.weights.shape}")
    return float(u_row @ weights.weights)


def average_naive(compartment: Compartment, u_snapshot: Mapping[int, float]) -> float:
    """Direct evaluation by explicit loops over classes, lattice points,
    n-cells and nodes. Reference oracle for `precompute_weights` + `average`;
    intentionally unoptimized."""
    domain = compartment.domain
    dv = domain.cell_volume
    n_cells = len(compartment.ncells)
    g = compartment.g_values()
    neuron_index = compartment.neuron_index()

    for nc in compartment.ncells:
        for nid in nc.node_neurons:
            if int(nid) not in u_snapshot:
                raise MissingNeuronError(f"u snapshot missing neuron {int(nid)}")

    v = 0.0
    for cls in compartment.classes:
        rho = compartment.rho[cls.id]
        for flat_idx in range(rho.size):
            y = np.unravel_index(flat_idx, rho.shape)
            if g[y] < G_EPSILON:
                continue
            inner = 0.0
            for nc in compartment.ncells:
                cell_sum = 0.0
                for node_idx, nid in enumerate(nc.node_neurons):
                    if neuron_index[nid].class_id != cls.id:
                        continue
                    cell_sum += float(nc.psi[node_idx]) * u_snapshot[int(nid)]
                inner += float(compartment.chi[nc.ncell_id][y]) * cell_sum
            v += float(rho[y]) * inner / (n_cells * float(g[y])) * dv
    return v


def average_trace(weights: AveragingWeights, record) -> np.ndarray:
    """Apply the averaging to every recorded step of a SimulationRecord."""
    if record.u.shape[1] != len(weights.neuron_ids) or \
            not np.array_equal(np.asarray(record.neuron_ids), weights.neuron_ids):
        raise ShapeMismatchError("record neuron set does not match weights")
    return record.u @ weights.weights
