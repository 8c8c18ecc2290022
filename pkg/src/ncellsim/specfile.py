"""Reading and writing compartment spec files and simulation configs.

Both are JSON documents with a fixed schema (see docs/spec_format.md);
unknown keys are rejected so typos fail loudly instead of being ignored.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .compartment import Compartment
from .dynamics import (
    HHParameters,
    ModelParameters,
    SimulationConfig,
    StimulusSpec,
    SynapseParameters,
)
from .errors import SpecFormatError

_DOMAIN_KEYS = {"dimension", "bounds", "grid_resolution"}
_CLASS_KEYS = {"id", "label", "synaptic_reversal_mV", "is_modulatory"}
_NCELL_KEYS = {"ncell_id", "nodes", "synapses", "psi"}
_NODE_KEYS = {"neuron_id", "class_id", "position"}
_SYNAPSE_KEYS = {"pre", "post", "receptor_class", "weight", "sign"}
_FIELDS_KEYS = {"rho", "chi"}
_G_KEYS = {"kind", "params"}
_TOP_KEYS = {"domain", "classes", "ncells", "fields", "g", "sampling", "options"}
_SAMPLING_KEYS = {"seed"}
_OPTIONS_KEYS = {"allow_cross_cell_synapses"}

_CONFIG_KEYS = {"dt", "duration", "seed", "record_every", "stimuli", "hh", "synapses"}
_STIM_KEYS = {"amplitude", "onset", "offset", "target"}
_TARGET_KEYS = {"class_label", "ncell", "neuron_ids"}
_HH_KEYS = {"C_m", "g_Na", "g_K", "g_L", "E_Na", "E_K", "E_L"}
_SYNPARAM_KEYS = {"tau_rise", "tau_decay", "g_peak_scale", "E_exc", "E_inh"}


def _load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecFormatError(f"{path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecFormatError(
            f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise SpecFormatError(f"{path}: top level must be an object")
    return doc


def _check_keys(mapping: Mapping, allowed: set, context: str, required: set = frozenset()):
    unknown = set(mapping) - allowed
    if unknown:
        raise SpecFormatError(f"{context}: unknown keys {sorted(unknown)}")
    missing = required - set(mapping)
    if missing:
        raise SpecFormatError(f"{context}: missing required keys {sorted(missing)}")


def load_spec(path) -> dict:
    """Load and schema-check a compartment spec; relative field-file paths
    resolve against the spec's directory."""
    doc = _load_json(path)
    _check_keys(doc, _TOP_KEYS, str(path),
                required={"domain", "classes", "ncells", "fields"})
    _check_keys(doc["domain"], _DOMAIN_KEYS, "domain", required=_DOMAIN_KEYS)
    for c in doc["classes"]:
        _check_keys(c, _CLASS_KEYS, "classes[]",
                    required={"id", "label", "synaptic_reversal_mV"})
    for nc in doc["ncells"]:
        _check_keys(nc, _NCELL_KEYS, "ncells[]", required={"ncell_id", "nodes", "psi"})
        for node in nc["nodes"]:
            _check_keys(node, _NODE_KEYS, "ncells[].nodes[]",
                        required={"neuron_id", "class_id"})
        for s in nc.get("synapses", []):
            _check_keys(s, _SYNAPSE_KEYS, "ncells[].synapses[]", required=_SYNAPSE_KEYS)
    _check_keys(doc["fields"], _FIELDS_KEYS, "fields")
    if "g" in doc:
        _check_keys(doc["g"], _G_KEYS, "g", required={"kind"})
    if "sampling" in doc:
        _check_keys(doc["sampling"], _SAMPLING_KEYS, "sampling", required={"seed"})
    if "options" in doc:
        _check_keys(doc["options"], _OPTIONS_KEYS, "options")

    base = Path(path).parent
    for section in doc["fields"].values():
        for value in section.values():
            if isinstance(value, dict):
                if set(value) != {"file"}:
                    raise SpecFormatError(
                        "fields entries must be inline arrays or {\"file\": path}")
                value["file"] = str(base / value["file"])
    return doc


def compartment_to_spec(comp: Compartment) -> dict:
    """Serialize a compartment back to the spec schema with inline fields."""
    neurons = comp.neuron_index()
    return {
        "domain": {
            "dimension": comp.domain.dimension,
            "bounds": [list(b) for b in comp.domain.bounds],
            "grid_resolution": list(comp.domain.grid_resolution),
        },
        "classes": [
            {"id": c.id, "label": c.label, "synaptic_reversal_mV": c.synaptic_reversal_mV,
             "is_modulatory": c.is_modulatory}
            for c in sorted(comp.classes, key=lambda c: c.id)
        ],
        "ncells": [
            {
                "ncell_id": nc.ncell_id,
                "nodes": [
                    {"neuron_id": nid, "class_id": neurons[nid].class_id,
                     "position": list(neurons[nid].position)}
                    for nid in nc.node_neurons
                ],
                "synapses": [
                    {"pre": s.pre_neuron, "post": s.post_neuron,
                     "receptor_class": s.receptor_class, "weight": s.weight,
                     "sign": s.sign}
                    for s in nc.synapses
                ],
                "psi": [float(p) for p in nc.psi],
            }
            for nc in sorted(comp.ncells, key=lambda nc: nc.ncell_id)
        ],
        "fields": {
            "rho": {str(k): np.asarray(v).ravel().tolist() for k, v in comp.rho.items()},
            "chi": {str(k): np.asarray(v).ravel().tolist() for k, v in comp.chi.items()},
        },
        "g": {"kind": comp.g_kind, "params": comp.g_params},
        "options": {"allow_cross_cell_synapses": comp.allow_cross_cell_synapses},
    }


def save_spec(path, comp: Compartment) -> None:
    Path(path).write_text(json.dumps(compartment_to_spec(comp)))


def load_sim_config(path, comp: Compartment) -> tuple[SimulationConfig, ModelParameters]:
    doc = _load_json(path)
    return sim_config_from_dict(doc, comp, context=str(path))


def sim_config_from_dict(doc: Mapping, comp: Compartment,
                         context: str = "config") -> tuple[SimulationConfig, ModelParameters]:
    _check_keys(doc, _CONFIG_KEYS, context, required={"duration"})
    stimuli = []
    for s in doc.get("stimuli", []):
        _check_keys(s, _STIM_KEYS, "stimuli[]", required=_STIM_KEYS)
        _check_keys(s["target"], _TARGET_KEYS, "stimuli[].target")
        if len(s["target"]) != 1:
            raise SpecFormatError("stimuli[].target must use exactly one selector")
        stimuli.append(StimulusSpec(
            amplitude=float(s["amplitude"]),
            onset=float(s["onset"]),
            offset=float(s["offset"]),
            **s["target"],
        ))
    config = SimulationConfig(
        duration=float(doc["duration"]),
        dt=float(doc.get("dt", 0.025)),
        seed=int(doc.get("seed", 0)),
        record_every=int(doc.get("record_every", 1)),
        stimuli=stimuli,
    )

    label_to_id = {c.label: c.id for c in comp.classes}

    def by_label(section: Mapping, allowed: set, build, default):
        table = {}
        base = default
        for label, overrides in section.items():
            _check_keys(overrides, allowed, f"{context}:{label}")
            if label == "default":
                base = build(**overrides)
            elif label in label_to_id:
                table[label_to_id[label]] = overrides
            else:
                raise SpecFormatError(f"{context}: unknown class label {label!r}")
        return base, {cid: build(**{**_as_dict(base), **ov}) for cid, ov in table.items()}

    hh_default, hh_by_class = by_label(doc.get("hh", {}), _HH_KEYS,
                                       HHParameters, HHParameters())
    syn_default, syn_by_class = by_label(doc.get("synapses", {}), _SYNPARAM_KEYS,
                                         SynapseParameters, SynapseParameters())
    params = ModelParameters(default_hh=hh_default, default_syn=syn_default,
                             hh_by_class=hh_by_class, syn_by_class=syn_by_class)
    return config, params


def _as_dict(obj) -> dict:
    from dataclasses import asdict
    return asdict(obj)
