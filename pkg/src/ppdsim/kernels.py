"""Fixed-step integration of the analog network over one bit interval.

Within a bit interval every switch is held, so the network is a set of
storage nodes joined by wired edges (series R plus optional diode), resistive
loads, and wireless links whose carrier envelope relaxes exponentially
toward the drive bit. Each substep is a Heun (explicit trapezoid) update of
the node voltages; the envelope is advanced exactly.

Energy crossing each element is accumulated as ``V_mid * I_avg * dt`` with
``V_mid`` the node's average over the substep, which makes per-node energy
bookkeeping exact: ``0.5*C*(V1**2 - V0**2) = V_mid * C * (V1 - V0)``.

Two interchangeable backends exist. ``numba`` (default) compiles the loop
version; ``numpy`` vectorizes each substep and needs no compiler. Select with
the ``PPDSIM_BACKEND`` environment variable.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

from .analog import MIN_RECTIFIER_VOLTAGE

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

VMIN = MIN_RECTIFIER_VOLTAGE


def _loop_derivs(V, C, fixed, g_load, e_src, e_dst, e_r, e_vd, e_uni, e_on,
                 w_node, w_eff, w_idle, env, r_link, r_node, r_kp, r_on,
                 I_e, I_load, P_r, I_r, I_draw, w_loaded, dVdt):
    n = V.shape[0]
    for i in range(n):
        I_load[i] = V[i] * g_load[i]
        dVdt[i] = -I_load[i]
    for k in range(e_src.shape[0]):
        cur = 0.0
        if e_on[k]:
            dv = V[e_src[k]] - V[e_dst[k]]
            if e_uni[k]:
                cur = (dv - e_vd[k]) / e_r[k]
                if cur < 0.0:
                    cur = 0.0
            else:
                cur = dv / e_r[k]
        I_e[k] = cur
        dVdt[e_src[k]] -= cur
        dVdt[e_dst[k]] += cur
    nw = w_node.shape[0]
    for w in range(nw):
        I_draw[w] = 0.0
        w_loaded[w] = 0
    for r in range(r_link.shape[0]):
        w = r_link[r]
        amp = V[w_node[w]] * env[w]
        p = 0.0
        if r_on[r]:
            p = r_kp[r] * amp * amp
            w_loaded[w] = 1
        P_r[r] = p
        vr = V[r_node[r]]
        if vr < VMIN:
            vr = VMIN
        I_r[r] = p / vr
        dVdt[r_node[r]] += I_r[r]
        I_draw[w] += p / w_eff[w]
    for w in range(nw):
        vt = V[w_node[w]]
        if w_loaded[w] == 0:
            amp = vt * env[w]
            I_draw[w] = w_idle[w] * amp * amp
        if vt < VMIN:
            vt = VMIN
        I_draw[w] = I_draw[w] / vt
        dVdt[w_node[w]] -= I_draw[w]
    for i in range(n):
        if fixed[i]:
            dVdt[i] = 0.0
        else:
            dVdt[i] /= C[i]


def _loop_integrate(V, C, fixed, g_load, e_src, e_dst, e_r, e_vd, e_uni, e_on,
                    w_node, w_eff, w_idle, env, env_target, alpha,
                    r_link, r_node, r_kp, r_on,
                    n_sub, s0, dt, sample_idx, decim,
                    acc_src, acc_dst, acc_load, acc_draw, acc_rx,
                    demod_env, demod_vdrive,
                    tr_V, tr_I, tr_Ir, tr_Id, tr_env, row0):
    n = V.shape[0]
    m = e_src.shape[0]
    nw = w_node.shape[0]
    nr = r_link.shape[0]
    I_e1 = np.zeros(m)
    I_e2 = np.zeros(m)
    I_l1 = np.zeros(n)
    I_l2 = np.zeros(n)
    P_r1 = np.zeros(nr)
    P_r2 = np.zeros(nr)
    I_r1 = np.zeros(nr)
    I_r2 = np.zeros(nr)
    I_d1 = np.zeros(nw)
    I_d2 = np.zeros(nw)
    loaded = np.zeros(nw, dtype=np.int64)
    k1 = np.zeros(n)
    k2 = np.zeros(n)
    Vs = np.zeros(n)
    env_new = np.zeros(nw)
    for s in range(s0, s0 + n_sub):
        for w in range(nw):
            env_new[w] = env[w] + (env_target[w] - env[w]) * alpha[w]
        _loop_derivs(V, C, fixed, g_load, e_src, e_dst, e_r, e_vd, e_uni, e_on,
                     w_node, w_eff, w_idle, env, r_link, r_node, r_kp, r_on,
                     I_e1, I_l1, P_r1, I_r1, I_d1, loaded, k1)
        for i in range(n):
            Vs[i] = V[i] + dt * k1[i]
            if Vs[i] < 0.0:
                Vs[i] = 0.0
        _loop_derivs(Vs, C, fixed, g_load, e_src, e_dst, e_r, e_vd, e_uni, e_on,
                     w_node, w_eff, w_idle, env_new, r_link, r_node, r_kp, r_on,
                     I_e2, I_l2, P_r2, I_r2, I_d2, loaded, k2)
        for i in range(n):
            v1 = V[i] + 0.5 * dt * (k1[i] + k2[i])
            if v1 < 0.0:
                v1 = 0.0
            Vs[i] = 0.5 * (V[i] + v1)  # reuse as the midpoint voltage
            V[i] = v1
        for k in range(m):
            ib = 0.5 * (I_e1[k] + I_e2[k])
            acc_src[k] += Vs[e_src[k]] * ib * dt
            acc_dst[k] += Vs[e_dst[k]] * ib * dt
            I_e1[k] = ib
        for i in range(n):
            acc_load[i] += Vs[i] * 0.5 * (I_l1[i] + I_l2[i]) * dt
        for r in range(nr):
            ib = 0.5 * (I_r1[r] + I_r2[r])
            acc_rx[r] += Vs[r_node[r]] * ib * dt
            I_r1[r] = ib
        for w in range(nw):
            ib = 0.5 * (I_d1[w] + I_d2[w])
            acc_draw[w] += Vs[w_node[w]] * ib * dt
            I_d1[w] = ib
            env[w] = env_new[w]
        if s == sample_idx:
            for w in range(nw):
                demod_env[w] = env[w]
                demod_vdrive[w] = V[w_node[w]]
        if (s + 1) % decim == 0:
            row = row0 + s // decim
            for i in range(n):
                tr_V[row, i] = V[i]
            for k in range(m):
                tr_I[row, k] = I_e1[k]
            for r in range(nr):
                tr_Ir[row, r] = I_r1[r]
            for w in range(nw):
                tr_Id[row, w] = I_d1[w]
                tr_env[row, w] = env[w]


def _numpy_derivs(V, C, fixed, g_load, e_src, e_dst, e_r, e_vd, e_uni, e_on,
                  w_node, w_eff, w_idle, env, r_link, r_node, r_kp, r_on):
    n = V.shape[0]
    nw = w_node.shape[0]
    dv = V[e_src] - V[e_dst]
    I_e = np.where(e_uni, np.maximum(0.0, (dv - e_vd) / e_r), dv / e_r)
    I_e = np.where(e_on, I_e, 0.0)
    I_load = V * g_load
    amp = V[w_node] * env
    amp_r = amp[r_link]
    P_r = np.where(r_on, r_kp * amp_r * amp_r, 0.0)
    I_r = P_r / np.maximum(V[r_node], VMIN)
    loaded = np.bincount(r_link, weights=r_on.astype(np.float64), minlength=nw) > 0
    P_draw = np.bincount(r_link, weights=P_r / w_eff[r_link], minlength=nw)
    P_draw = np.where(loaded, P_draw, w_idle * amp * amp)
    I_draw = P_draw / np.maximum(V[w_node], VMIN)
    net = (np.bincount(e_dst, weights=I_e, minlength=n)
           - np.bincount(e_src, weights=I_e, minlength=n)
           - I_load
           + np.bincount(r_node, weights=I_r, minlength=n)
           - np.bincount(w_node, weights=I_draw, minlength=n))
    dVdt = np.where(fixed, 0.0, net / C)
    return dVdt, I_e, I_load, I_r, I_draw


def _numpy_integrate(V, C, fixed, g_load, e_src, e_dst, e_r, e_vd, e_uni, e_on,
                     w_node, w_eff, w_idle, env, env_target, alpha,
                     r_link, r_node, r_kp, r_on,
                     n_sub, s0, dt, sample_idx, decim,
                     acc_src, acc_dst, acc_load, acc_draw, acc_rx,
                     demod_env, demod_vdrive,
                     tr_V, tr_I, tr_Ir, tr_Id, tr_env, row0):
    args = (C, fixed, g_load, e_src, e_dst, e_r, e_vd, e_uni, e_on, w_node, w_eff, w_idle)
    for s in range(s0, s0 + n_sub):
        env_new = env + (env_target - env) * alpha
        k1, Ie1, Il1, Ir1, Id1 = _numpy_derivs(V, *args, env, r_link, r_node, r_kp, r_on)
        Vs = np.maximum(V + dt * k1, 0.0)
        k2, Ie2, Il2, Ir2, Id2 = _numpy_derivs(Vs, *args, env_new, r_link, r_node, r_kp, r_on)
        V1 = np.maximum(V + 0.5 * dt * (k1 + k2), 0.0)
        Vm = 0.5 * (V + V1)
        Ie = 0.5 * (Ie1 + Ie2)
        Ir = 0.5 * (Ir1 + Ir2)
        Id = 0.5 * (Id1 + Id2)
        acc_src += Vm[e_src] * Ie * dt
        acc_dst += Vm[e_dst] * Ie * dt
        acc_load += Vm * 0.5 * (Il1 + Il2) * dt
        acc_rx += Vm[r_node] * Ir * dt
        acc_draw += Vm[w_node] * Id * dt
        V[:] = V1
        env[:] = env_new
        if s == sample_idx:
            demod_env[:] = env
            demod_vdrive[:] = V[w_node]
        if (s + 1) % decim == 0:
            row = row0 + s // decim
            tr_V[row] = V
            tr_I[row] = Ie
            tr_Ir[row] = Ir
            tr_Id[row] = Id
            tr_env[row] = env


def _select_backend(name: str | None = None):
    name = (name or os.environ.get("PPDSIM_BACKEND", "numba")).strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown PPDSIM_BACKEND {name!r}; use 'numba' or 'numpy'")
    if name == "numba" and numba is None:
        warnings.warn("numba is not importable; falling back to the numpy backend")
        name = "numpy"
    return name


if numba is not None:
    # compiled lazily on first call; _loop_integrate resolves the jitted helper
    _loop_derivs = numba.njit(cache=True)(_loop_derivs)
    _loop_integrate = numba.njit(cache=True)(_loop_integrate)


def get_integrator(name: str | None = None):
    """Return ``(backend_name, integrate_interval)`` for the requested backend."""
    name = _select_backend(name)
    if name == "numpy":
        return name, _numpy_integrate
    return name, _loop_integrate


BACKEND = _select_backend()
