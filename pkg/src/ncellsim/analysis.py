"""LFP-style analysis of the averaged potential and wave-propagation metrics:
zero-phase FIR low-pass, Welch power spectrum, dominant frequency, and the
latency/distance radiality score.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Mapping

import numpy as np
from scipy import signal as sps

from .errors import (
    EmptyBandError,
    NyquistViolationError,
    SignalTooShortError,
    TooFewActiveError,
)

FIR_TAPS = 255
DEFAULT_CUTOFF_HZ = 300.0
DEFAULT_BAND_HZ = (10.0, 120.0)
DEFAULT_ACTIVATION_THRESHOLD_MV = 20.0


@dataclass
class SpectrumReport:
    sample_rate: float
    filtered: np.ndarray
    frequencies: np.ndarray
    power: np.ndarray
    dominant_hz: float
    band: tuple[float, float]

    def to_json(self, include_signal: bool = False) -> str:
        payload = {
            "sample_rate_hz": self.sample_rate,
            "dominant_hz": self.dominant_hz,
            "band_hz": list(self.band),
            "frequencies_hz": self.frequencies.tolist(),
            "power": self.power.tolist(),
        }
        if include_signal:
            payload["filtered"] = self.filtered.tolist()
        return json.dumps(payload)


@dataclass
class RadialityReport:
    source: tuple[float, ...]
    latencies: dict[int, float]
    pearson_r: float
    n_active: int

    def to_json(self) -> str:
        d = asdict(self)
        d["latencies"] = {str(k): v for k, v in self.latencies.items()}
        return json.dumps(d)


def fir_lowpass_taps(sample_rate: float, cutoff: float, n_taps: int = FIR_TAPS) -> np.ndarray:
    """Windowed-sinc (Hamming) taps, normalized to unit DC gain."""
    if cutoff >= sample_rate / 2:
        raise NyquistViolationError(
            f"cutoff {cutoff} Hz >= Nyquist {sample_rate / 2} Hz")
    return sps.firwin(n_taps, cutoff, window="hamming", fs=sample_rate)


def lowpass(signal_in: np.ndarray, sample_rate: float, cutoff: float = DEFAULT_CUTOFF_HZ,
            n_taps: int = FIR_TAPS) -> np.ndarray:
    """Zero-phase low-pass: the FIR applied forward and backward."""
    x = np.asarray(signal_in, dtype=float)
    if x.size < n_taps:
        raise SignalTooShortError(
            f"signal length {x.size} < filter length {n_taps}")
    taps = fir_lowpass_taps(sample_rate, cutoff, n_taps)
    return sps.filtfilt(taps, [1.0], x, padlen=min(3 * n_taps, x.size - 1))


def periodogram(signal_in: np.ndarray, sample_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Welch estimate: Hann window, 50% overlap, segment length = largest
    power of two <= length / 4; one-sided density."""
    x = np.asarray(signal_in, dtype=float)
    if x.size < 64:
        raise SignalTooShortError(f"need >= 64 samples, got {x.size}")
    nperseg = 1 << int(np.log2(x.size / 4))
    freqs, power = sps.welch(x, fs=sample_rate, window="hann", nperseg=nperseg,
                             noverlap=nperseg // 2, detrend="constant",
                             return_onesided=True, scaling="density")
    return freqs, power


def dominant_frequency(frequencies: np.ndarray, power: np.ndarray,
                       band: tuple[float, float] = DEFAULT_BAND_HZ) -> float:
    """Frequency of maximum power inside band; ties break toward lower f."""
    lo, hi = band
    in_band = (frequencies >= lo) & (frequencies <= hi)
    if not np.any(in_band):
        raise EmptyBandError(f"no spectrum bins inside band ({lo}, {hi}) Hz")
    f = frequencies[in_band]
    p = power[in_band]
    return float(f[int(np.argmax(p))])  # argmax returns the first (lowest-f) maximum


def spectrum_report(signal_in: np.ndarray, sample_rate: float,
                    cutoff: float = DEFAULT_CUTOFF_HZ,
                    band: tuple[float, float] = DEFAULT_BAND_HZ) -> SpectrumReport:
    filtered = lowpass(signal_in, sample_rate, cutoff)
    freqs, power = periodogram(filtered, sample_rate)
    dom = dominant_frequency(freqs, power, band)
    return SpectrumReport(sample_rate=sample_rate, filtered=filtered,
                          frequencies=freqs, power=power, dominant_hz=dom,
                          band=band)


def activation_latencies(record, threshold_mV: float = DEFAULT_ACTIVATION_THRESHOLD_MV
                         ) -> dict[int, float]:
    """First upward crossing of u through threshold, per neuron (ms)."""
    if not np.isfinite(threshold_mV):
        raise ValueError("threshold must be finite")
    u = record.u
    times = record.times
    above = u >= threshold_mV
    out: dict[int, float] = {}
    for k, nid in enumerate(record.neuron_ids):
        col = above[:, k]
        if col[0]:
            out[int(nid)] = float(times[0])
            continue
        crossings = np.flatnonzero(~col[:-1] & col[1:])
        if crossings.size:
            out[int(nid)] = float(times[crossings[0] + 1])
    return out


def radiality_score(latencies: Mapping[int, float], positions: Mapping[int, np.ndarray],
                    source: np.ndarray) -> RadialityReport:
    """Pearson correlation between activation latency and Euclidean distance
    from the source, over active neurons."""
    ids = sorted(latencies)
    if len(ids) < 3:
        raise TooFewActiveError(f"need >= 3 active neurons, got {len(ids)}")
    src = np.asarray(source, dtype=float)
    dist = np.array([np.linalg.norm(np.asarray(positions[i], dtype=float) - src)
                     for i in ids])
    lat = np.array([latencies[i] for i in ids])
    if np.ptp(dist) == 0 or np.ptp(lat) == 0:
        r = 0.0  # degenerate: no variance on one axis
    else:
        r = float(np.corrcoef(dist, lat)[0, 1])
    return RadialityReport(
        source=tuple(float(c) for c in src),
        latencies={int(i): float(latencies[i]) for i in ids},
        pearson_r=r,
        n_active=len(ids),
    )


def plot_spectrum_svg(report: SpectrumReport, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.semilogy(report.frequencies, np.maximum(report.power, 1e-30))
    ax.axvline(report.dominant_hz, color="r", ls="--",
               label=f"dominant {report.dominant_hz:.1f} Hz")
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("power (model mV$^2$/Hz)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_radiality_svg(report: RadialityReport, positions: Mapping[int, np.ndarray],
                       path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    src = np.asarray(report.source)
    ids = sorted(report.latencies)
    dist = [float(np.linalg.norm(np.asarray(positions[i]) - src)) for i in ids]
    lat = [report.latencies[i] for i in ids]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(dist, lat, s=12, alpha=0.7)
    ax.set_xlabel("distance from source (model units)")
    ax.set_ylabel("activation latency (ms)")
    ax.set_title(f"pearson r = {report.pearson_r:.3f}, n = {report.n_active}")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
