# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled integration core: fixed-step RK4 over the flattened network.

Mirrors the arithmetic of `ncellsim._network.step_state`; the per-neuron
stage loop runs under OpenMP (each neuron reads only previous-step state and
writes its own slot, so results are independent of the thread count).
"""

from libc.math cimport exp, fabs
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
cimport openmp

from .errors import UnstableIntegrationError

DEF MAXC = 16

SPIKE_THRESHOLD = 0.0
V_LIMIT = 200.0


cdef inline double c_vtrap(double x, double y) nogil:
    if fabs(x) < 1e-7 * y:
        return y + 0.5 * x
    return x / (-(exp(-x / y) - 1.0))


cdef inline double dv_dt(double V, double m, double h, double n,
                         double* sa, double* sb, int nchan,
                         double* gsc, double* inorm, double* Echan,
                         double I_ext, double C_m, double g_Na, double g_K,
                         double g_L, double E_Na, double E_K, double E_L) nogil:
    cdef double I_ion, I_syn, g
    cdef int c
    I_ion = (g_Na * m * m * m * h * (V - E_Na)
             + g_K * n * n * n * n * (V - E_K)
             + g_L * (V - E_L))
    I_syn = 0.0
    for c in range(nchan):
        g = gsc[c] * inorm[c] * (sb[c] - sa[c])
        I_syn += g * (Echan[c] - V)
    return (I_ext + I_syn - I_ion) / C_m


def run_network(double[::1] V, double[::1] m, double[::1] h, double[::1] n,
                double[:, ::1] sa, double[:, ::1] sb,
                double[::1] C_m, double[::1] g_Na, double[::1] g_K,
                double[::1] g_L, double[::1] E_Na, double[::1] E_K,
                double[::1] E_L, double[::1] V_rest,
                double[::1] tau_r, double[::1] tau_d, double[::1] inv_norm,
                double[::1] g_scale, double[::1] E_chan,
                long[::1] syn_offsets, long[::1] syn_post,
                long[::1] syn_chan, double[::1] syn_weight,
                long[::1] stim_index, long[::1] stim_ptr,
                double[::1] stim_amp, double[::1] stim_on, double[::1] stim_off,
                double dt, long n_steps, long record_every,
                double[:, ::1] u_out, int num_threads):
    """Integrate in place; returns (spike_steps, spike_neurons, clamp_events)."""
    cdef long nn = V.shape[0]
    cdef int nchan = <int>sa.shape[0]
    cdef long n_stim = stim_amp.shape[0]
    if nchan > MAXC:
        raise ValueError(f"compiled core supports at most {MAXC} channels, got {nchan}")
    if num_threads < 1:
        num_threads = 1

    scratch = [np.empty(nn) for _ in range(4)]
    cdef double[::1] V2 = scratch[0]
    cdef double[::1] m2 = scratch[1]
    cdef double[::1] h2 = scratch[2]
    cdef double[::1] n2 = scratch[3]
    sa2_arr = np.empty((nchan, nn)) if nchan else np.empty((0, nn))
    sb2_arr = np.empty((nchan, nn)) if nchan else np.empty((0, nn))
    cdef double[:, ::1] sa2 = sa2_arr
    cdef double[:, ::1] sb2 = sb2_arr
    iext_arr = np.zeros(nn)
    cdef double[::1] I_ext = iext_arr
    # per-thread gate scratch: [sa0 | sb0 | saS | sbS], MAXC slots each
    gate_arr = np.zeros((num_threads, 4 * MAXC))
    cdef double[:, ::1] gate_buf = gate_arr
    spiked_arr = np.zeros(nn, dtype=np.uint8)
    cdef unsigned char[::1] spiked = spiked_arr

    cdef long step, i, j, a, b, k, row = 1, clamp_events = 0
    cdef int c, nt = num_threads
    cdef long clamped_step
    cdef double t, v_old, v_new, x
    cdef bint any_spike = 0, unstable = 0
    cdef double vmax

    spike_steps = []
    spike_neurons = []

    # RK4 stage multipliers for the linear synaptic-gate ODEs (y' = -y/tau)
    cdef double ga2[MAXC]
    cdef double ga3[MAXC]
    cdef double ga4[MAXC]
    cdef double gaf[MAXC]
    cdef double gb2[MAXC]
    cdef double gb3[MAXC]
    cdef double gb4[MAXC]
    cdef double gbf[MAXC]
    cdef double gsc_l[MAXC]
    cdef double inorm_l[MAXC]
    cdef double Echan_l[MAXC]
    for c in range(nchan):
        x = dt / tau_r[c]
        ga2[c] = 1.0 - 0.5 * x
        ga3[c] = 1.0 - 0.5 * x * ga2[c]
        ga4[c] = 1.0 - x * ga3[c]
        gaf[c] = 1.0 - x / 6.0 * (1.0 + 2.0 * ga2[c] + 2.0 * ga3[c] + ga4[c])
        x = dt / tau_d[c]
        gb2[c] = 1.0 - 0.5 * x
        gb3[c] = 1.0 - 0.5 * x * gb2[c]
        gb4[c] = 1.0 - x * gb3[c]
        gbf[c] = 1.0 - x / 6.0 * (1.0 + 2.0 * gb2[c] + 2.0 * gb3[c] + gb4[c])
        gsc_l[c] = g_scale[c]
        inorm_l[c] = inv_norm[c]
        Echan_l[c] = E_chan[c]

    for i in range(nn):
        u_out[0, i] = V[i] - V_rest[i]

    for step in range(1, n_steps + 1):
        t = (step - 1) * dt

        # synaptic increments from spikes detected in the previous step
        if any_spike:
            for i in range(nn):
                if spiked[i]:
                    a = syn_offsets[i]
                    b = syn_offsets[i + 1]
                    for j in range(a, b):
                        sa[syn_chan[j], syn_post[j]] += syn_weight[j]
                        sb[syn_chan[j], syn_post[j]] += syn_weight[j]

        # external currents for this step
        for i in range(nn):
            I_ext[i] = 0.0
        for k in range(n_stim):
            if stim_on[k] <= t and t < stim_off[k]:
                for j in range(stim_ptr[k], stim_ptr[k + 1]):
                    I_ext[stim_index[j]] += stim_amp[k]

        clamped_step = 0
        with nogil:
            clamped_step = _step_all(V, m, h, n, sa, sb, V2, m2, h2, n2, sa2, sb2,
                                     C_m, g_Na, g_K, g_L, E_Na, E_K, E_L,
                                     I_ext, nchan, ga2, ga3, ga4, gaf,
                                     gb2, gb3, gb4, gbf, gsc_l, inorm_l, Echan_l,
                                     gate_buf, dt, nn, nt)
        clamp_events += clamped_step

        any_spike = 0
        vmax = 0.0
        for i in range(nn):
            v_old = V[i]
            v_new = V2[i]
            if fabs(v_new) > vmax:
                vmax = fabs(v_new)
            if v_old < SPIKE_THRESHOLD and v_new >= SPIKE_THRESHOLD:
                spiked[i] = 1
                any_spike = 1
                spike_steps.append(step)
                spike_neurons.append(i)
            else:
                spiked[i] = 0
        if vmax > V_LIMIT:
            raise UnstableIntegrationError(step * dt)

        for i in range(nn):
            V[i] = V2[i]
            m[i] = m2[i]
            h[i] = h2[i]
            n[i] = n2[i]
        for c in range(nchan):
            for i in range(nn):
                sa[c, i] = sa2[c, i]
                sb[c, i] = sb2[c, i]

        if step % record_every == 0:
            for i in range(nn):
                u_out[row, i] = V[i] - V_rest[i]
            row += 1

    return (np.asarray(spike_steps, dtype=np.int64),
            np.asarray(spike_neurons, dtype=np.int64),
            clamp_events)


cdef long _step_all(double[::1] V, double[::1] m, double[::1] h, double[::1] n,
                    double[:, ::1] sa, double[:, ::1] sb,
                    double[::1] V2, double[::1] m2, double[::1] h2, double[::1] n2,
                    double[:, ::1] sa2, double[:, ::1] sb2,
                    double[::1] C_m, double[::1] g_Na, double[::1] g_K,
                    double[::1] g_L, double[::1] E_Na, double[::1] E_K,
                    double[::1] E_L, double[::1] I_ext, int nchan,
                    double* ga2, double* ga3, double* ga4, double* gaf,
                    double* gb2, double* gb3, double* gb4, double* gbf,
                    double* gsc, double* inorm, double* Echan,
                    double[:, ::1] gate_buf,
                    double dt, long nn, int nt) nogil:
    cdef long i, clamped = 0
    cdef int c, tid
    cdef double v0, m0, h0, n0, Iex
    cdef double am, bm, ah, bh, an, bn
    cdef double kv1, km1, kh1, kn1, kv2, km2, kh2, kn2
    cdef double kv3, km3, kh3, kn3, kv4, km4, kh4, kn4
    cdef double vS, mS, hS, nS, vf, mf, hf, nf
    # prange privatizes scalars but not C arrays, so per-channel gate
    # values live in a per-thread slice of gate_buf
    cdef double* sa0
    cdef double* sb0
    cdef double* saS
    cdef double* sbS

    for i in prange(nn, num_threads=nt, schedule="static"):
        tid = openmp.omp_get_thread_num()
        sa0 = &gate_buf[tid, 0]
        sb0 = &gate_buf[tid, MAXC]
        saS = &gate_buf[tid, 2 * MAXC]
        sbS = &gate_buf[tid, 3 * MAXC]
        v0 = V[i]; m0 = m[i]; h0 = h[i]; n0 = n[i]
        Iex = I_ext[i]
        for c in range(nchan):
            sa0[c] = sa[c, i]
            sb0[c] = sb[c, i]

        # stage 1
        am = 0.1 * c_vtrap(v0 + 40.0, 10.0); bm = 4.0 * exp(-(v0 + 65.0) / 18.0)
        ah = 0.07 * exp(-(v0 + 65.0) / 20.0); bh = 1.0 / (1.0 + exp(-(v0 + 35.0) / 10.0))
        an = 0.01 * c_vtrap(v0 + 55.0, 10.0); bn = 0.125 * exp(-(v0 + 65.0) / 80.0)
        kv1 = dv_dt(v0, m0, h0, n0, sa0, sb0, nchan, gsc, inorm, Echan, Iex,
                    C_m[i], g_Na[i], g_K[i], g_L[i], E_Na[i], E_K[i], E_L[i])
        km1 = am * (1.0 - m0) - bm * m0
        kh1 = ah * (1.0 - h0) - bh * h0
        kn1 = an * (1.0 - n0) - bn * n0

        # stage 2
        vS = v0 + 0.5 * dt * kv1; mS = m0 + 0.5 * dt * km1
        hS = h0 + 0.5 * dt * kh1; nS = n0 + 0.5 * dt * kn1
        for c in range(nchan):
            saS[c] = sa0[c] * ga2[c]
            sbS[c] = sb0[c] * gb2[c]
        am = 0.1 * c_vtrap(vS + 40.0, 10.0); bm = 4.0 * exp(-(vS + 65.0) / 18.0)
        ah = 0.07 * exp(-(vS + 65.0) / 20.0); bh = 1.0 / (1.0 + exp(-(vS + 35.0) / 10.0))
        an = 0.01 * c_vtrap(vS + 55.0, 10.0); bn = 0.125 * exp(-(vS + 65.0) / 80.0)
        kv2 = dv_dt(vS, mS, hS, nS, saS, sbS, nchan, gsc, inorm, Echan, Iex,
                    C_m[i], g_Na[i], g_K[i], g_L[i], E_Na[i], E_K[i], E_L[i])
        km2 = am * (1.0 - mS) - bm * mS
        kh2 = ah * (1.0 - hS) - bh * hS
        kn2 = an * (1.0 - nS) - bn * nS

        # stage 3
        vS = v0 + 0.5 * dt * kv2; mS = m0 + 0.5 * dt * km2
        hS = h0 + 0.5 * dt * kh2; nS = n0 + 0.5 * dt * kn2
        for c in range(nchan):
            saS[c] = sa0[c] * ga3[c]
            sbS[c] = sb0[c] * gb3[c]
        am = 0.1 * c_vtrap(vS + 40.0, 10.0); bm = 4.0 * exp(-(vS + 65.0) / 18.0)
        ah = 0.07 * exp(-(vS + 65.0) / 20.0); bh = 1.0 / (1.0 + exp(-(vS + 35.0) / 10.0))
        an = 0.01 * c_vtrap(vS + 55.0, 10.0); bn = 0.125 * exp(-(vS + 65.0) / 80.0)
        kv3 = dv_dt(vS, mS, hS, nS, saS, sbS, nchan, gsc, inorm, Echan, Iex,
                    C_m[i], g_Na[i], g_K[i], g_L[i], E_Na[i], E_K[i], E_L[i])
        km3 = am * (1.0 - mS) - bm * mS
        kh3 = ah * (1.0 - hS) - bh * hS
        kn3 = an * (1.0 - nS) - bn * nS

        # stage 4
        vS = v0 + dt * kv3; mS = m0 + dt * km3
        hS = h0 + dt * kh3; nS = n0 + dt * kn3
        for c in range(nchan):
            saS[c] = sa0[c] * ga4[c]
            sbS[c] = sb0[c] * gb4[c]
        am = 0.1 * c_vtrap(vS + 40.0, 10.0); bm = 4.0 * exp(-(vS + 65.0) / 18.0)
        ah = 0.07 * exp(-(vS + 65.0) / 20.0); bh = 1.0 / (1.0 + exp(-(vS + 35.0) / 10.0))
        an = 0.01 * c_vtrap(vS + 55.0, 10.0); bn = 0.125 * exp(-(vS + 65.0) / 80.0)
        kv4 = dv_dt(vS, mS, hS, nS, saS, sbS, nchan, gsc, inorm, Echan, Iex,
                    C_m[i], g_Na[i], g_K[i], g_L[i], E_Na[i], E_K[i], E_L[i])
        km4 = am * (1.0 - mS) - bm * mS
        kh4 = ah * (1.0 - hS) - bh * hS
        kn4 = an * (1.0 - nS) - bn * nS

        vf = v0 + dt / 6.0 * (kv1 + 2.0 * kv2 + 2.0 * kv3 + kv4)
        mf = m0 + dt / 6.0 * (km1 + 2.0 * km2 + 2.0 * km3 + km4)
        hf = h0 + dt / 6.0 * (kh1 + 2.0 * kh2 + 2.0 * kh3 + kh4)
        nf = n0 + dt / 6.0 * (kn1 + 2.0 * kn2 + 2.0 * kn3 + kn4)

        if mf < 0.0:
            mf = 0.0; clamped += 1
        elif mf > 1.0:
            mf = 1.0; clamped += 1
        if hf < 0.0:
            hf = 0.0; clamped += 1
        elif hf > 1.0:
            hf = 1.0; clamped += 1
        if nf < 0.0:
            nf = 0.0; clamped += 1
        elif nf > 1.0:
            nf = 1.0; clamped += 1

        V2[i] = vf; m2[i] = mf; h2[i] = hf; n2[i] = nf
        for c in range(nchan):
            sa2[c, i] = sa0[c] * gaf[c]
            sb2[c, i] = sb0[c] * gbf[c]
    return clamped
