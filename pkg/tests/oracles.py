"""Independent reference implementations used to check the package.

Everything here is written against the underlying math, not against the
package internals: a scalar Hodgkin-Huxley integrator, a direct DFT filter
response, and small statistics helpers. Kept deliberately slow and literal.
"""

from __future__ import annotations

import numpy as np


# -- scalar Hodgkin-Huxley reference -----------------------------------------

def _vtrap(x, y):
    if abs(x) < 1e-7 * y:
        return y + 0.5 * x
    return x / (-(np.exp(-x / y) - 1.0))


def hh_rates(V):
    """Classic squid-axon rate constants at membrane potential V (mV)."""
    alpha_m = 0.1 * _vtrap(V + 40.0, 10.0)
    beta_m = 4.0 * np.exp(-(V + 65.0) / 18.0)
    alpha_h = 0.07 * np.exp(-(V + 65.0) / 20.0)
    beta_h = 1.0 / (1.0 + np.exp(-(V + 35.0) / 10.0))
    alpha_n = 0.01 * _vtrap(V + 55.0, 10.0)
    beta_n = 0.125 * np.exp(-(V + 65.0) / 80.0)
    return alpha_m, beta_m, alpha_h, beta_h, alpha_n, beta_n


HH_CONST = dict(C_m=1.0, g_Na=120.0, g_K=36.0, g_L=0.3,
                E_Na=50.0, E_K=-77.0, E_L=-54.4)


def hh_derivative(y, I_ext, p=HH_CONST):
    V, m, h, n = y
    am, bm, ah, bh, an, bn = hh_rates(V)
    I_ion = (p["g_Na"] * m ** 3 * h * (V - p["E_Na"])
             + p["g_K"] * n ** 4 * (V - p["E_K"])
             + p["g_L"] * (V - p["E_L"]))
    return np.array([
        (I_ext - I_ion) / p["C_m"],
        am * (1.0 - m) - bm * m,
        ah * (1.0 - h) - bh * h,
        an * (1.0 - n) - bn * n,
    ])


def hh_steady_gates(V):
    am, bm, ah, bh, an, bn = hh_rates(V)
    return am / (am + bm), ah / (ah + bh), an / (an + bn)


def hh_resting_potential(p=HH_CONST, lo=-90.0, hi=-40.0):
    """Root of the steady-state current balance by bisection."""
    def f(V):
        m, h, n = hh_steady_gates(V)
        return -(p["g_Na"] * m ** 3 * h * (V - p["E_Na"])
                 + p["g_K"] * n ** 4 * (V - p["E_K"])
                 + p["g_L"] * (V - p["E_L"]))
    a, b = lo, hi
    fa = f(a)
    for _ in range(200):
        mid = 0.5 * (a + b)
        fm = f(mid)
        if fa * fm <= 0:
            b = mid
        else:
            a, fa = mid, fm
    return 0.5 * (a + b)


def hh_integrate(duration, dt, I_of_t, V0=None, p=HH_CONST):
    """Fixed-step RK4 on a single unconnected neuron.

    I_of_t maps time (ms) to current density; returns (times, V array)
    including the initial sample.
    """
    if V0 is None:
        V0 = hh_resting_potential(p)
    m0, h0, n0 = hh_steady_gates(V0)
    y = np.array([V0, m0, h0, n0])
    n_steps = int(round(duration / dt))
    out = np.empty(n_steps + 1)
    out[0] = y[0]
    for k in range(n_steps):
        t = k * dt
        k1 = hh_derivative(y, I_of_t(t), p)
        k2 = hh_derivative(y + 0.5 * dt * k1, I_of_t(t), p)
        k3 = hh_derivative(y + 0.5 * dt * k2, I_of_t(t), p)
        k4 = hh_derivative(y + dt * k3, I_of_t(t), p)
        y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = y[0]
    return np.arange(n_steps + 1) * dt, out


def count_spikes(V, threshold=0.0):
    """Rising-edge crossings of threshold."""
    above = V >= threshold
    return int(np.sum(~above[:-1] & above[1:]))


# -- signal-processing references --------------------------------------------

def fir_response_at(taps, freq_hz, sample_rate):
    """Complex frequency response of an FIR filter by direct evaluation."""
    k = np.arange(len(taps))
    return complex(np.sum(taps * np.exp(-2j * np.pi * freq_hz * k / sample_rate)))


def dft_peak_frequency(x, sample_rate, lo, hi):
    """Dominant frequency via a plain rFFT magnitude peak inside [lo, hi]."""
    x = np.asarray(x, dtype=float)
    spec = np.abs(np.fft.rfft(x - x.mean()))
    freqs = np.fft.rfftfreq(x.size, d=1.0 / sample_rate)
    mask = (freqs >= lo) & (freqs <= hi)
    return float(freqs[mask][np.argmax(spec[mask])])


# -- statistics helpers ------------------------------------------------------

def chi_square_stat(counts, expected):
    counts = np.asarray(counts, dtype=float)
    expected = np.asarray(expected, dtype=float)
    return float(np.sum((counts - expected) ** 2 / expected))


def pearson(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm = x - x.mean()
    ym = y - y.mean()
    return float(np.sum(xm * ym) / np.sqrt(np.sum(xm ** 2) * np.sum(ym ** 2)))
