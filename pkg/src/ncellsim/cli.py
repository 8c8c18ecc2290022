"""Command-line entry point: validate, simulate, analyze, demo-striatum.

Exit codes: 0 success, 1 domain error, 2 usage or parse error. Outputs are
written atomically (``.partial`` suffix, then rename) together with a run
manifest sufficient to re-run the experiment exactly.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, analysis, averaging, dynamics, gridio, specfile, striatum
from .compartment import build_compartment
from .errors import NcellsimError, SpecFormatError

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def _sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _atomic_write(path: Path, writer) -> None:
    tmp = path.with_name(path.name + ".partial")
    writer(tmp)
    os.replace(tmp, path)


def _write_manifest(out_dir: Path, payload: dict, force: bool) -> None:
    path = out_dir / "manifest.json"
    if path.exists() and not force:
        raise NcellsimError(
            f"{path} already exists; pass --force to overwrite the run")
    payload = dict(payload)
    payload["tool_version"] = __version__
    payload["created_utc"] = datetime.now(timezone.utc).isoformat()
    _atomic_write(path, lambda p: p.write_text(json.dumps(payload, indent=2)))


def _prepare_out_dir(out: str, force: bool) -> Path:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.json"
    if manifest.exists() and not force:
        raise NcellsimError(
            f"{manifest} already exists; pass --force to overwrite the run")
    return out_dir


def cmd_validate(args) -> int:
    spec = specfile.load_spec(args.spec)
    from .compartment import validate_compartment
    from .errors import (DomainEmptyError, DuplicateIdError,
                         InvalidCompartmentError, UnresolvedReferenceError)
    try:
        comp = build_compartment(spec)
        violations = []
    except InvalidCompartmentError as exc:
        violations = exc.violations
    except (DuplicateIdError, UnresolvedReferenceError, DomainEmptyError) as exc:
        print(f"INVALID: {exc}")
        return EXIT_DOMAIN
    if not violations:
        print("OK")
        return EXIT_OK
    for v in violations:
        measured = "" if v.measured is None else f" (measured {v.measured:.6g})"
        print(f"VIOLATION [{v.code}] {v.entity}: {v.message}{measured}")
    return EXIT_DOMAIN


def _run_pipeline(comp, config, params, out_dir: Path, fmt: str, threads: int):
    record = dynamics.simulate(comp, config, params, threads=threads)
    weights = averaging.precompute_weights(comp, validate=False)
    v = averaging.average_trace(weights, record)

    outputs = {}
    if fmt == "csv":
        _atomic_write(out_dir / "record.csv",
                      lambda p: gridio.write_record_csv(p, record.times, record.u))
        outputs["record"] = "record.csv"
    else:
        _atomic_write(out_dir / "record.bin",
                      lambda p: gridio.write_record_binary(p, record.times, record.u))
        outputs["record"] = "record.bin"
    _atomic_write(out_dir / "v_trace.csv",
                  lambda p: gridio.write_trace_csv(p, record.times, v))
    outputs["v_trace"] = "v_trace.csv"
    _atomic_write(out_dir / "spikes.json",
                  lambda p: gridio.write_spikes_json(p, record.neuron_ids, record.spikes))
    outputs["spikes"] = "spikes.json"
    _atomic_write(out_dir / "weights.csv",
                  lambda p: gridio.write_weights_csv(p, weights.neuron_ids, weights.weights))
    outputs["weights"] = "weights.csv"
    return record, weights, v, outputs


def cmd_simulate(args) -> int:
    spec = specfile.load_spec(args.spec)
    comp = build_compartment(spec)
    config, params = specfile.load_sim_config(args.config, comp)
    if args.seed is not None:
        config.seed = args.seed
    out_dir = _prepare_out_dir(args.out, args.force)
    record, weights, v, outputs = _run_pipeline(
        comp, config, params, out_dir, args.format, args.threads)
    _write_manifest(out_dir, {
        "command": "simulate",
        "spec_path": str(args.spec),
        "config_path": str(args.config),
        "digest": _sha256_text(_sha256_file(args.spec) + _sha256_file(args.config)
                               + f"seed={config.seed}"),
        "seed": config.seed,
        "backend": record.backend,
        "outputs": outputs,
    }, args.force)
    print(f"simulated {len(record.neuron_ids)} neurons, "
          f"{len(record.times)} recorded steps -> {out_dir}")
    return EXIT_OK


def _load_record_any(path):
    path = Path(path)
    if path.suffix == ".csv":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        times, u = data[:, 0], data[:, 1:]
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        ids = np.asarray([int(h.strip().lstrip("n")) for h in header[1:]], dtype=np.int64)
    else:
        times, u = gridio.read_record_binary(path)
        ids = np.arange(u.shape[1], dtype=np.int64)
    class _Shim:
        pass
    shim = _Shim()
    shim.times, shim.u, shim.neuron_ids = times, u, ids
    return shim


def _analyze_outputs(v_times, v, args, out_dir: Path, record=None, positions=None,
                     source=None):
    dt_ms = float(v_times[1] - v_times[0])
    sample_rate = 1000.0 / dt_ms
    band = tuple(args.band)
    report = analysis.spectrum_report(v, sample_rate, cutoff=args.cutoff, band=band)
    outputs = {}
    _atomic_write(out_dir / "spectrum.json",
                  lambda p: p.write_text(report.to_json()))
    outputs["spectrum"] = "spectrum.json"
    rad = None
    if record is not None and source is not None:
        latencies = analysis.activation_latencies(record, args.threshold)
        rad = analysis.radiality_score(latencies, positions, source)
        _atomic_write(out_dir / "radiality.json",
                      lambda p: p.write_text(rad.to_json()))
        outputs["radiality"] = "radiality.json"
    if args.plots:
        _atomic_write(out_dir / "spectrum.svg",
                      lambda p: analysis.plot_spectrum_svg(report, p))
        outputs["spectrum_plot"] = "spectrum.svg"
        if rad is not None:
            _atomic_write(out_dir / "radiality.svg",
                          lambda p: analysis.plot_radiality_svg(rad, positions, p))
            outputs["radiality_plot"] = "radiality.svg"
    return report, rad, outputs


def cmd_analyze(args) -> int:
    v_times, v = gridio.read_trace_csv(args.v_trace)
    if len(v_times) < 2:
        raise NcellsimError("v trace too short to derive a sample rate")
    out_dir = _prepare_out_dir(args.out, args.force)

    record = positions = source = None
    if args.record is not None:
        if args.spec is None:
            raise NcellsimError("--record also requires --spec for neuron positions")
        comp = build_compartment(specfile.load_spec(args.spec))
        record = _load_record_any(args.record)
        positions = {n.neuron_id: np.asarray(n.position) for n in comp.neurons}
        if args.source_neuron is not None:
            source = positions[args.source_neuron]
        elif args.source is not None:
            source = np.asarray(args.source)
        else:
            raise NcellsimError("radiality needs --source or --source-neuron")

    report, rad, outputs = _analyze_outputs(v_times, v, args, out_dir,
                                            record, positions, source)
    _write_manifest(out_dir, {
        "command": "analyze",
        "v_trace_path": str(args.v_trace),
        "digest": _sha256_file(args.v_trace),
        "outputs": outputs,
    }, args.force)
    print(f"dominant frequency: {report.dominant_hz:.2f} Hz "
          f"(band {report.band[0]}-{report.band[1]} Hz)")
    if rad is not None:
        print(f"radiality: pearson r = {rad.pearson_r:.3f} over {rad.n_active} neurons")
    return EXIT_OK


def _write_frames(out_dir: Path, record, layout, stride_ms: float, threshold: float):
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(exist_ok=True)
    side = layout.grid_side
    dt_rec = float(record.times[1] - record.times[0])
    step = max(1, int(round(stride_ms / dt_rec)))
    count = 0
    for row in range(0, len(record.times), step):
        grid = np.zeros((side, side), dtype=int)
        active = record.u[row] >= threshold
        for k, nid in enumerate(record.neuron_ids):
            if active[k]:
                grid[int(nid) // side, int(nid) % side] = 1
        np.savetxt(frames_dir / f"frame_{count:05d}.csv", grid, fmt="%d", delimiter=",")
        count += 1
    return count


def cmd_demo_striatum(args) -> int:
    params = striatum.StriatumParams(seed=args.seed if args.seed is not None else 0)
    if args.total_neurons is not None:
        params.total_neurons = args.total_neurons
    comp, layout = striatum.build_striatum_detailed(params)
    out_dir = _prepare_out_dir(args.out, args.force)

    _atomic_write(out_dir / "striatum_spec.json", lambda p: specfile.save_spec(p, comp))

    stim = striatum.demo_stimulus(comp, duration=args.duration)
    config = striatum.demo_sim_config(duration=args.duration,
                                      seed=params.seed, stimulus=stim)
    model = striatum.default_model_parameters()
    record, weights, v, outputs = _run_pipeline(
        comp, config, model, out_dir, args.format, args.threads)
    outputs["spec"] = "striatum_spec.json"

    positions = {n.neuron_id: np.asarray(n.position) for n in comp.neurons}
    source = positions[stim.neuron_ids[0]]
    report, rad, an_outputs = _analyze_outputs(record.times, v, args, out_dir,
                                               record, positions, source)
    outputs.update(an_outputs)

    if not args.no_frames:
        n_frames = _write_frames(out_dir, record, layout, args.frame_stride,
                                 args.threshold)
        outputs["frames"] = f"frames/ ({n_frames} files)"

    _write_manifest(out_dir, {
        "command": "demo-striatum",
        "digest": _sha256_text(json.dumps({
            "total_neurons": params.total_neurons,
            "duration": args.duration,
            "seed": params.seed,
        }, sort_keys=True)),
        "seed": params.seed,
        "total_neurons": params.total_neurons,
        "duration_ms": args.duration,
        "backend": record.backend,
        "outputs": outputs,
    }, args.force)
    print(f"demo: {params.total_neurons} neurons, backend={record.backend}")
    print(f"dominant frequency: {report.dominant_hz:.2f} Hz")
    if rad is not None:
        print(f"radiality: pearson r = {rad.pearson_r:.3f} over {rad.n_active} neurons")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncellsim",
        description="Compartment simulation, averaging and LFP-style analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        if needs_out:
            p.add_argument("--out", default=os.environ.get("NCELLSIM_OUT", "out"),
                           help="output directory (env NCELLSIM_OUT)")
            p.add_argument("--force", action="store_true",
                           help="overwrite an existing run in --out")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--format", choices=["csv", "binary"], default="binary")

    p = sub.add_parser("validate", help="validate a compartment spec file")
    p.add_argument("spec")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="simulate a compartment and emit v(t)")
    p.add_argument("spec")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_simulate)

    def analysis_flags(p):
        p.add_argument("--cutoff", type=float, default=analysis.DEFAULT_CUTOFF_HZ)
        p.add_argument("--band", type=float, nargs=2,
                       default=list(analysis.DEFAULT_BAND_HZ))
        p.add_argument("--threshold", type=float,
                       default=analysis.DEFAULT_ACTIVATION_THRESHOLD_MV,
                       help="activation threshold in mV above rest")
        p.add_argument("--plots", action="store_true", help="emit SVG plots")

    p = sub.add_parser("analyze", help="spectral and radiality analysis of v(t)")
    p.add_argument("v_trace")
    p.add_argument("--record", default=None)
    p.add_argument("--spec", default=None)
    p.add_argument("--source", type=float, nargs="+", default=None)
    p.add_argument("--source-neuron", type=int, default=None)
    common(p)
    analysis_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("demo-striatum", help="build and run the striatum demo")
    p.add_argument("--total-neurons", type=int, default=None)
    p.add_argument("--duration", type=float, default=2000.0)
    p.add_argument("--frame-stride", type=float, default=1.0,
                   help="frame emission stride in simulated ms")
    p.add_argument("--no-frames", action="store_true")
    common(p)
    analysis_flags(p)
    p.set_defaults(func=cmd_demo_striatum)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpecFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NcellsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
