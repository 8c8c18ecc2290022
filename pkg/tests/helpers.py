"""Shared builders for small test compartments."""

from __future__ import annotations

import numpy as np

from ncellsim.compartment import (
    Compartment,
    NCell,
    Neuron,
    NeurotransmitterClass,
    SpatialDomain,
    Synapse,
)


def uniform_rho(shape, cell_volume):
    """Constant density that integrates to exactly 1 over the lattice."""
    f = np.full(shape, 1.0)
    return f / (f.sum() * cell_volume)


def tiny_compartment(g_kind="sum", n_neurons=3, with_synapses=True):
    """One 2x... lattice, one n-cell, a couple of neurons; always valid."""
    domain = SpatialDomain(2, ((0.0, 4.0), (0.0, 4.0)), (4, 4))
    classes = [
        NeurotransmitterClass(0, "inh", -80.0),
        NeurotransmitterClass(1, "exc", 0.0),
    ]
    neurons = [
        Neuron(i, i % 2, 0, i, (0.5 + i, 0.5 + i))
        for i in range(n_neurons)
    ]
    synapses = []
    if with_synapses and n_neurons >= 2:
        synapses = [
            Synapse(0, 1, 0, 0.5, -1),
            Synapse(1, 0, 1, 1.0, 1),
        ]
    ncell = NCell(0, [n.neuron_id for n in neurons], synapses,
                  np.ones(n_neurons))
    rho = {c.id: uniform_rho(domain.grid_shape, domain.cell_volume)
           for c in classes}
    chi = {0: np.ones(domain.grid_shape)}
    return Compartment(domain=domain, classes=classes, ncells=[ncell],
                       neurons=neurons, rho=rho, chi=chi, g_kind=g_kind)


def random_compartment(rng, max_ncells=5, max_neurons=50, max_res=16,
                       g_kind=None, dimension=None):
    """Randomized valid compartment for oracle-equivalence sweeps."""
    dim = dimension if dimension is not None else int(rng.integers(2, 4))
    res = tuple(int(rng.integers(2, max_res + 1)) for _ in range(dim))
    # extents >= 1.6 keep the domain volume > 1 so a density bounded by 1
    # can still integrate to 1
    bounds = tuple(
        (float(lo), float(lo + rng.uniform(1.6, 10.0)))
        for lo in rng.uniform(-5.0, 5.0, size=dim)
    )
    domain = SpatialDomain(dim, bounds, res)

    n_classes = int(rng.integers(1, 4))
    classes = []
    for cid in range(n_classes):
        reversal = float(rng.uniform(-95.0, 5.0))
        classes.append(NeurotransmitterClass(
            cid, f"c{cid}", reversal, is_modulatory=bool(rng.integers(0, 2))))

    n_ncells = int(rng.integers(1, max_ncells + 1))
    n_neurons = int(rng.integers(n_ncells, max_neurons + 1))
    cell_of = np.sort(rng.integers(0, n_ncells, size=n_neurons))
    # make sure every n-cell has at least one node
    cell_of[:n_ncells] = np.arange(n_ncells)

    lower = domain.lower
    span = domain.extents
    neurons = []
    nodes = {k: [] for k in range(n_ncells)}
    for nid in range(n_neurons):
        k = int(cell_of[nid])
        pos = tuple(lower + rng.random(dim) * span)
        neurons.append(Neuron(nid, int(rng.integers(0, n_classes)), k,
                              len(nodes[k]), pos))
        nodes[k].append(nid)

    ncells = []
    for k in range(n_ncells):
        ids = nodes[k]
        synapses = []
        if len(ids) >= 2:
            for _ in range(int(rng.integers(0, 2 * len(ids)))):
                pre, post = rng.choice(ids, size=2, replace=False)
                cls = classes[int(rng.integers(0, n_classes))]
                if cls.is_modulatory:
                    sign = int(rng.choice([-1, 1]))
                else:
                    sign = 1 if cls.synaptic_reversal_mV >= -30.0 else -1
                synapses.append(Synapse(int(pre), int(post), cls.id,
                                        float(rng.uniform(0.0, 2.0)), sign))
        psi = rng.uniform(0.0, 2.0, size=len(ids))
        psi[int(rng.integers(0, len(ids)))] += 0.5  # at least one positive
        ncells.append(NCell(k, ids, synapses, psi))

    dv = domain.cell_volume
    volume = dv * np.prod(res)
    rho = {}
    for c in classes:
        # values in [0.5, 1.5] normalized by ~volume stay within [0, 1]
        f = 0.5 + rng.random(size=res)
        f /= f.sum() * dv
        assert f.max() <= 1.0 + 1e-12, (f.max(), volume)
        rho[c.id] = f
    chi = {k: rng.uniform(0.0, 1.0, size=res) for k in range(n_ncells)}
    # guarantee g > 0 somewhere
    for k in chi:
        chi[k].flat[0] = max(chi[k].flat[0], 0.5)

    kind = g_kind if g_kind is not None else str(rng.choice(["sum", "max", "const"]))
    params = {"value": float(rng.uniform(0.5, 2.0))} if kind == "const" else {}
    return Compartment(domain=domain, classes=classes, ncells=ncells,
                       neurons=neurons, rho=rho, chi=chi,
                       g_kind=kind, g_params=params)
