"""Compartment data model: spatial domain, neuron classes, n-cell graphs and
the sampled density/composition fields, plus validation and position sampling.

A compartment is the full structural description of one brain region: a
quadrature lattice over an axis-aligned domain, per-class neuron densities
``rho``, per-n-cell composition fields ``chi``, per-node averaging weights
``psi`` and a normalizer ``g`` over the chi vector.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DomainEmptyError,
    DuplicateIdError,
    InvalidCompartmentError,
    UnresolvedReferenceError,
    ZeroDensityError,
)

G_KINDS = ("sum", "max", "const")

# Lattice points where g(chi) falls below this threshold carry no n-cell and
# are skipped by the quadrature.
G_EPSILON = 1e-12

# Non-modulatory classes act excitatory iff their reversal is above this (mV).
EXCITATORY_REVERSAL_THRESHOLD_MV = -30.0


@dataclass(frozen=True)
class NeurotransmitterClass:
    id: int
    label: str
    synaptic_reversal_mV: float
    is_modulatory: bool = False


@dataclass(frozen=True)
class SpatialDomain:
    """Axis-aligned box with a uniform midpoint-quadrature lattice."""

    dimension: int
    bounds: tuple[tuple[float, float], ...]
    grid_resolution: tuple[int, ...]

    @property
    def extents(self) -> np.ndarray:
        b = np.asarray(self.bounds, dtype=float)
        return b[:, 1] - b[:, 0]

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.bounds, dtype=float)[:, 0]

    @property
    def cell_sizes(self) -> np.ndarray:
        return self.extents / np.asarray(self.grid_resolution, dtype=float)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_sizes))

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return tuple(self.grid_resolution)

    def contains(self, position: Sequence[float]) -> bool:
        p = np.asarray(position, dtype=float)
        b = np.asarray(self.bounds, dtype=float)
        return bool(np.all(p >= b[:, 0]) and np.all(p <= b[:, 1]))

    def cell_center(self, multi_index: Sequence[int]) -> np.ndarray:
        return self.lower + (np.asarray(multi_index, dtype=float) + 0.5) * self.cell_sizes


@dataclass(frozen=True)
class Neuron:
    neuron_id: int
    class_id: int
    ncell_id: int
    node_index: int
    position: tuple[float, ...]


@dataclass(frozen=True)
class Synapse:
    pre_neuron: int
    post_neuron: int
    receptor_class: int
    weight: float
    sign: int


@dataclass
class NCell:
    """Finite directed synapse graph with per-node averaging weights."""

    ncell_id: int
    node_neurons: list[int]
    synapses: list[Synapse]
    psi: np.ndarray  # per node, aligned with node_neurons

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float)


@dataclass
class Compartment:
    domain: SpatialDomain
    classes: list[NeurotransmitterClass]
    ncells: list[NCell]
    neurons: list[Neuron]
    rho: dict[int, np.ndarray]  # class_id -> field on the quadrature lattice
    chi: dict[int, np.ndarray]  # ncell_id -> field on the quadrature lattice
    g_kind: str = "sum"
    g_params: dict = field(default_factory=dict)
    allow_cross_cell_synapses: bool = False

    def class_by_id(self, class_id: int) -> NeurotransmitterClass:
        return self._class_index()[class_id]

    def _class_index(self) -> dict[int, NeurotransmitterClass]:
        return {c.id: c for c in self.classes}

    def neuron_by_id(self, neuron_id: int) -> Neuron:
        return self.neuron_index()[neuron_id]

    def neuron_index(self) -> dict[int, Neuron]:
        return {n.neuron_id: n for n in self.neurons}

    def sorted_neuron_ids(self) -> list[int]:
        return sorted(n.neuron_id for n in self.neurons)

    def positions(self) -> np.ndarray:
        """(n_neurons, dim) array in sorted neuron_id order."""
        idx = self.neuron_index()
        return np.array([idx[i].position for i in self.sorted_neuron_ids()], dtype=float)

    def all_synapses(self) -> list[Synapse]:
        out: list[Synapse] = []
        for nc in self.ncells:
            out.extend(nc.synapses)
        return out

    def g_values(self) -> np.ndarray:
        """Evaluate g(chi(y)) on the quadrature lattice."""
        return evaluate_g(self.chi, self.domain.grid_shape, self.g_kind, self.g_params)

    def checksum(self) -> str:
        """SHA-256 over the full structure; used to bind derived artifacts."""
        h = hashlib.sha256()
        h.update(json.dumps({
            "dimension": self.domain.dimension,
            "bounds": self.domain.bounds,
            "grid_resolution": self.domain.grid_resolution,
            "g_kind": self.g_kind,
            "g_params": self.g_params,
            "allow_cross_cell": self.allow_cross_cell_synapses,
            "classes": [(c.id, c.label, c.synaptic_reversal_mV, c.is_modulatory)
                        for c in sorted(self.classes, key=lambda c: c.id)],
        }, sort_keys=True).encode())
        for nc in sorted(self.ncells, key=lambda nc: nc.ncell_id):
            h.update(json.dumps({
                "ncell_id": nc.ncell_id,
                "nodes": nc.node_neurons,
                "synapses": [(s.pre_neuron, s.post_neuron, s.receptor_class, s.weight, s.sign)
                             for s in nc.synapses],
            }, sort_keys=True).encode())
            h.update(np.ascontiguousarray(nc.psi, dtype="<f8").tobytes())
        for n in sorted(self.neurons, key=lambda n: n.neuron_id):
            h.update(json.dumps((n.neuron_id, n.class_id, n.ncell_id, n.node_index,
                                 list(n.position))).encode())
        for cid in sorted(self.rho):
            h.update(np.ascontiguousarray(self.rho[cid], dtype="<f8").tobytes())
        for nid in sorted(self.chi):
            h.update(np.ascontiguousarray(self.chi[nid], dtype="<f8").tobytes())
        return h.hexdigest()


def evaluate_g(chi: Mapping[int, np.ndarray], grid_shape: tuple[int, ...],
               kind: str, params: Mapping | None = None) -> np.ndarray:
    if kind not in G_KINDS:
        raise ValueError(f"unknown g kind {kind!r}; expected one of {G_KINDS}")
    if kind == "const":
        value = float((params or {}).get("value", 1.0))
        return np.full(grid_shape, value)
    stack = np.stack([chi[k] for k in sorted(chi)]) if chi else np.zeros((1,) + grid_shape)
    if kind == "sum":
        return stack.sum(axis=0)
    return stack.max(axis=0)


@dataclass(frozen=True)
class Violation:
    code: str
    entity: str
    measured: float | None
    message: str


def validate_compartment(c: Compartment) -> list[Violation]:
    """Check every structural invariant; returns violations (empty = valid)."""
    out: list[Violation] = []

    def bad(code, entity, measured, message):
        out.append(Violation(code, entity, measured, message))

    # domain geometry
    if c.domain.dimension not in (2, 3):
        bad("domain.dimension", "domain", c.domain.dimension,
            f"dimension must be 2 or 3, got {c.domain.dimension}")
    if len(c.domain.bounds) != c.domain.dimension or \
            len(c.domain.grid_resolution) != c.domain.dimension:
        bad("domain.shape", "domain", None, "bounds/grid_resolution length != dimension")
        return out  # geometry is broken; later checks would be nonsense
    for k, (lo, hi) in enumerate(c.domain.bounds):
        if not hi > lo:
            bad("domain.extent", f"axis {k}", hi - lo,
                f"axis {k} has non-positive extent {hi - lo}")
    for k, r in enumerate(c.domain.grid_resolution):
        if r < 2:
            bad("domain.resolution", f"axis {k}", r,
                f"axis {k} grid_resolution {r} < 2")

    # classes
    ids = [cl.id for cl in c.classes]
    if sorted(ids) != list(range(len(ids))):
        bad("class.ids", "classes", None,
            f"class ids {sorted(ids)} are not contiguous from 0")
    for cl in c.classes:
        if not (-100.0 <= cl.synaptic_reversal_mV <= 10.0):
            bad("class.reversal", cl.label, cl.synaptic_reversal_mV,
                f"class {cl.label} reversal {cl.synaptic_reversal_mV} mV outside [-100, 10]")
    class_ids = set(ids)

    # neurons
    seen_ids: set[int] = set()
    seen_nodes: set[tuple[int, int]] = set()
    for n in c.neurons:
        if n.neuron_id in seen_ids:
            bad("neuron.duplicate", str(n.neuron_id), None,
                f"duplicate neuron_id {n.neuron_id}")
        seen_ids.add(n.neuron_id)
        if (n.ncell_id, n.node_index) in seen_nodes:
            bad("neuron.node", str(n.neuron_id), None,
                f"duplicate (ncell_id, node_index) = ({n.ncell_id}, {n.node_index})")
        seen_nodes.add((n.ncell_id, n.node_index))
        if n.class_id not in class_ids:
            bad("neuron.class", str(n.neuron_id), n.class_id,
                f"neuron {n.neuron_id} references unknown class {n.class_id}")
        if not c.domain.contains(n.position):
            bad("neuron.position", str(n.neuron_id), None,
                f"neuron {n.neuron_id} position {n.position} outside domain bounds")

    # membership: each neuron in exactly one n-cell node list
    membership: dict[int, list[int]] = {}
    for nc in c.ncells:
        for node_idx, nid in enumerate(nc.node_neurons):
            membership.setdefault(nid, []).append(nc.ncell_id)
    for n in c.neurons:
        cells = membership.get(n.neuron_id, [])
        if len(cells) != 1:
            bad("neuron.membership", str(n.neuron_id), len(cells),
                f"neuron {n.neuron_id} appears in {len(cells)} n-cell node lists")
        elif cells[0] != n.ncell_id:
            bad("neuron.membership", str(n.neuron_id), None,
                f"neuron {n.neuron_id} claims ncell {n.ncell_id} but is listed in {cells[0]}")
    for nid in membership:
        if nid not in seen_ids:
            bad("ncell.node", str(nid), None,
                f"n-cell node references unknown neuron {nid}")

    class_of = {n.neuron_id: n.class_id for n in c.neurons}
    cls_index = c._class_index()

    # n-cells and synapses
    for nc in c.ncells:
        nodes = set(nc.node_neurons)
        if len(nc.psi) != len(nc.node_neurons):
            bad("ncell.psi", str(nc.ncell_id), len(nc.psi),
                f"n-cell {nc.ncell_id} psi length {len(nc.psi)} != node count {len(nc.node_neurons)}")
        else:
            if np.any(nc.psi < 0):
                bad("ncell.psi", str(nc.ncell_id), float(nc.psi.min()),
                    f"n-cell {nc.ncell_id} has negative psi")
            if not np.any(nc.psi > 0):
                bad("ncell.psi", str(nc.ncell_id), float(nc.psi.max()),
                    f"n-cell {nc.ncell_id} has no strictly positive psi")
        for s in nc.synapses:
            ent = f"{s.pre_neuron}->{s.post_neuron}"
            if s.weight < 0:
                bad("synapse.weight", ent, s.weight, f"synapse {ent} weight {s.weight} < 0")
            if s.pre_neuron == s.post_neuron:
                bad("synapse.self", ent, None, f"synapse {ent} is a self-loop")
            for endpoint in (s.pre_neuron, s.post_neuron):
                if endpoint not in seen_ids:
                    bad("synapse.ref", ent, endpoint,
                        f"synapse {ent} references unknown neuron {endpoint}")
            if s.pre_neuron in seen_ids and s.pre_neuron not in nodes:
                bad("synapse.internal", ent, None,
                    f"synapse {ent} pre endpoint not a node of n-cell {nc.ncell_id}")
            if s.post_neuron in seen_ids and s.post_neuron not in nodes \
                    and not c.allow_cross_cell_synapses:
                bad("synapse.internal", ent, None,
                    f"synapse {ent} post endpoint not a node of n-cell {nc.ncell_id}")
            if s.sign not in (-1, 1):
                bad("synapse.sign", ent, s.sign, f"synapse {ent} sign must be +1 or -1")
            elif s.receptor_class in cls_index:
                rc = cls_index[s.receptor_class]
                if not rc.is_modulatory:
                    natural = 1 if rc.synaptic_reversal_mV >= EXCITATORY_REVERSAL_THRESHOLD_MV else -1
                    if s.sign != natural:
                        bad("synapse.sign", ent, s.sign,
                            f"synapse {ent} sign {s.sign} inconsistent with "
                            f"non-modulatory class {rc.label} (reversal {rc.synaptic_reversal_mV} mV)")
            else:
                bad("synapse.receptor", ent, s.receptor_class,
                    f"synapse {ent} references unknown receptor class {s.receptor_class}")

    # fields
    shape = c.domain.grid_shape
    dv = c.domain.cell_volume
    for cl in c.classes:
        if cl.id not in c.rho:
            bad("rho.missing", cl.label, None, f"no rho field for class {cl.label}")
            continue
        f = c.rho[cl.id]
        if f.shape != shape:
            bad("rho.shape", cl.label, None,
                f"rho[{cl.label}] shape {f.shape} != lattice {shape}")
            continue
        if np.any(f < 0) or np.any(f > 1):
            bad("rho.range", cl.label, float(f.min()),
                f"rho[{cl.label}] values outside [0, 1]")
        integral = float(f.sum() * dv)
        if abs(integral - 1.0) > 1e-6:
            bad("rho.normalization", cl.label, integral,
                f"rho[{cl.label}] integrates to {integral:.6g}, expected 1")
    for nc in c.ncells:
        if nc.ncell_id not in c.chi:
            bad("chi.missing", str(nc.ncell_id), None,
                f"no chi field for n-cell {nc.ncell_id}")
            continue
        f = c.chi[nc.ncell_id]
        if f.shape != shape:
            bad("chi.shape", str(nc.ncell_id), None,
                f"chi[{nc.ncell_id}] shape {f.shape} != lattice {shape}")
        elif np.any(f < 0):
            bad("chi.range", str(nc.ncell_id), float(f.min()),
                f"chi[{nc.ncell_id}] has negative values")

    if c.ncells and all(nc.ncell_id in c.chi and c.chi[nc.ncell_id].shape == shape
                        for nc in c.ncells):
        g = c.g_values()
        if float(g.max(initial=0.0)) < G_EPSILON:
            bad("g.positivity", "g", float(g.max(initial=0.0)),
                f"g(chi) < {G_EPSILON} at every lattice point")

    return out


def sample_positions(domain: SpatialDomain, rho_field: np.ndarray, count: int,
                     seed: int) -> np.ndarray:
    """Draw `count` i.i.d. positions from a lattice-sampled density.

    Inverse-CDF over lattice cells, then uniform jitter inside the chosen
    cell. Bit-identical output for identical (field, count, seed).
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    f = np.asarray(rho_field, dtype=float)
    if f.shape != domain.grid_shape:
        raise ValueError(f"field shape {f.shape} != lattice {domain.grid_shape}")
    if np.any(f < 0):
        raise ValueError("density field has negative values")
    flat = f.ravel()
    total = flat.sum()
    if total <= 0:
        raise ZeroDensityError("density field sums to zero")
    if count == 0:
        return np.empty((0, domain.dimension))
    cdf = np.cumsum(flat) / total
    rng = np.random.default_rng(seed)
    u = rng.random(count)
    cells = np.searchsorted(cdf, u, side="right")
    cells = np.minimum(cells, flat.size - 1)
    multi = np.stack(np.unravel_index(cells, f.shape), axis=1).astype(float)
    jitter = rng.random((count, domain.dimension))
    return domain.lower + (multi + jitter) * domain.cell_sizes


def build_compartment(spec: Mapping) -> Compartment:
    """Assemble and validate a Compartment from a parsed spec mapping.

    The mapping uses the documented spec-file schema (see docs/spec_format.md);
    `ncellsim.specfile.load` produces it from disk. Neuron positions given as
    null are sampled from the neuron's class rho field using spec["sampling"]["seed"].
    """
    domain = _build_domain(spec["domain"])
    classes = _build_classes(spec["classes"])
    class_ids = {c.id for c in classes}

    ncells: list[NCell] = []
    neurons: list[Neuron] = []
    pending: list[tuple[int, int]] = []  # (index into neurons, class_id) needing a position
    seen_neurons: set[int] = set()
    seen_ncells: set[int] = set()
    for nc_spec in spec["ncells"]:
        ncell_id = int(nc_spec["ncell_id"])
        if ncell_id in seen_ncells:
            raise DuplicateIdError(f"duplicate ncell_id {ncell_id}")
        seen_ncells.add(ncell_id)
        node_ids: list[int] = []
        for node_index, node in enumerate(nc_spec["nodes"]):
            nid = int(node["neuron_id"])
            if nid in seen_neurons:
                raise DuplicateIdError(f"duplicate neuron_id {nid}")
            seen_neurons.add(nid)
            cid = int(node["class_id"])
            if cid not in class_ids:
                raise UnresolvedReferenceError(
                    f"neuron {nid} references unknown class {cid}")
            pos = node.get("position")
            if pos is None:
                pending.append((len(neurons), cid))
                pos = (math.nan,) * domain.dimension
            neurons.append(Neuron(nid, cid, ncell_id, node_index, tuple(map(float, pos))))
            node_ids.append(nid)
        synapses = []
        for s in nc_spec.get("synapses", []):
            syn = Synapse(int(s["pre"]), int(s["post"]), int(s["receptor_class"]),
                          float(s["weight"]), int(s["sign"]))
            synapses.append(syn)
        psi = np.asarray(nc_spec["psi"], dtype=float)
        ncells.append(NCell(ncell_id, node_ids, synapses, psi))

    for nc in ncells:
        for s in nc.synapses:
            for endpoint, role in ((s.pre_neuron, "pre"), (s.post_neuron, "post")):
                if endpoint not in seen_neurons:
                    raise UnresolvedReferenceError(
                        f"synapse {s.pre_neuron}->{s.post_neuron} {role}_neuron "
                        f"{endpoint} does not exist")

    rho = _build_fields(spec["fields"].get("rho", {}), domain, "rho")
    chi = _build_fields(spec["fields"].get("chi", {}), domain, "chi")
    for cl in classes:
        if cl.id not in rho:
            raise UnresolvedReferenceError(f"no rho field for class id {cl.id}")
    for nc in ncells:
        if nc.ncell_id not in chi:
            raise UnresolvedReferenceError(f"no chi field for ncell_id {nc.ncell_id}")

    if pending:
        sampling = spec.get("sampling")
        if sampling is None or "seed" not in sampling:
            raise UnresolvedReferenceError(
                "neurons without positions require a top-level sampling.seed")
        seed = int(sampling["seed"])
        by_class: dict[int, list[int]] = {}
        for idx, cid in pending:
            by_class.setdefault(cid, []).append(idx)
        for cid in sorted(by_class):
            idxs = by_class[cid]
            pts = sample_positions(domain, rho[cid], len(idxs), seed + cid)
            for idx, p in zip(idxs, pts):
                n = neurons[idx]
                neurons[idx] = Neuron(n.neuron_id, n.class_id, n.ncell_id,
                                      n.node_index, tuple(p))

    g_spec = spec.get("g", {"kind": "sum"})
    options = spec.get("options", {})
    comp = Compartment(
        domain=domain,
        classes=classes,
        ncells=ncells,
        neurons=neurons,
        rho=rho,
        chi=chi,
        g_kind=g_spec.get("kind", "sum"),
        g_params=dict(g_spec.get("params", {})),
        allow_cross_cell_synapses=bool(options.get("allow_cross_cell_synapses", False)),
    )
    violations = validate_compartment(comp)
    if violations:
        raise InvalidCompartmentError(violations)
    return comp


def _build_domain(d: Mapping) -> SpatialDomain:
    dim = int(d["dimension"])
    bounds = tuple((float(lo), float(hi)) for lo, hi in d["bounds"])
    res = tuple(int(r) for r in d["grid_resolution"])
    for k, (lo, hi) in enumerate(bounds):
        if not hi > lo:
            raise DomainEmptyError(f"domain axis {k} has non-positive extent {hi - lo}")
    return SpatialDomain(dim, bounds, res)


def _build_classes(specs: Iterable[Mapping]) -> list[NeurotransmitterClass]:
    classes = []
    seen = set()
    for c in specs:
        cid = int(c["id"])
        if cid in seen:
            raise DuplicateIdError(f"duplicate class id {cid}")
        seen.add(cid)
        classes.append(NeurotransmitterClass(
            id=cid,
            label=str(c["label"]),
            synaptic_reversal_mV=float(c["synaptic_reversal_mV"]),
            is_modulatory=bool(c.get("is_modulatory", False)),
        ))
    return classes


def _build_fields(entries: Mapping, domain: SpatialDomain, name: str) -> dict[int, np.ndarray]:
    from .gridio import read_grid  # local import: gridio depends only on numpy

    out: dict[int, np.ndarray] = {}
    for key, value in entries.items():
        k = int(key)
        if isinstance(value, Mapping) and "file" in value:
            arr = read_grid(value["file"])
        else:
            arr = np.asarray(value, dtype=float)
            if arr.ndim == 1:
                arr = arr.reshape(domain.grid_shape)
        if arr.shape != domain.grid_shape:
            raise UnresolvedReferenceError(
                f"{name}[{k}] shape {arr.shape} does not match lattice {domain.grid_shape}")
        out[k] = arr
    return out
