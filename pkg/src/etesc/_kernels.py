"""Compiled inner loops for sim_engine.run.

Kind codes: 0 static, 1 dynamic, 2 periodic-static, 3 periodic-dynamic, 4 continuous.
Record layout (full):    t, theta_hat[n], theta[n], y, g_hat[n], g_held[n], u[n], xi, upsilon
Record layout (average): same, then v_av
Window accumulator acc:  count, sum|th_hat-th*|, sum|th-th*|, sum|y-Q*|, max of the three
"""

import math

import numpy as np
from numba import njit

STATIC, DYNAMIC, P_STATIC, P_DYNAMIC, CONTINUOUS = 0, 1, 2, 3, 4


@njit(cache=True)
def _dither(w, a, tt, S, M):
    for i in range(w.shape[0]):
        s = math.sin(w[i] * tt)
        S[i] = a[i] * s
        M[i] = 2.0 / a[i] * s


@njit(cache=True)
def _map(H, ts, Qs, th, shift, u, S, D):
    # y at theta = th + shift*u + S
    n = th.shape[0]
    for i in range(n):
        D[i] = th[i] + shift * u[i] + S[i] - ts[i]
    q = 0.0
    for i in range(n):
        r = 0.0
        for j in range(n):
            r += H[i, j] * D[j]
        q += D[i] * r
    return Qs + 0.5 * q


@njit(cache=True)
def _xi(M, yd, gh, sig, al, be):
    # Xi for G = M*yd and e = gh - G
    gg = 0.0
    ee = 0.0
    for i in range(M.shape[0]):
        g = M[i] * yd
        gg += g * g
        d = gh[i] - g
        ee += d * d
    return sig * al * gg - be * math.sqrt(ee) * math.sqrt(gg)


@njit(cache=True)
def _ups_rate(ups, x, mu, ga):
    lo = -ups / ga
    return -mu * ups + (x if x > lo else lo)


@njit(cache=True)
def full_kernel(H, ts, Qs, a, w, K, wh, kind, sig, al, be, mu, ga, ups0, hsteps,
                th0, dt, nsteps, dec, win_start, rec, ev, acc):
    """Returns (n_events, n_records, status, bad_step). status 1 = non-finite state."""
    n = th0.shape[0]
    th = th0.copy()
    gh = np.zeros(n)
    u = np.zeros(n)
    S0 = np.empty(n)
    M0 = np.empty(n)
    Sm = np.empty(n)
    Mm = np.empty(n)
    S1 = np.empty(n)
    M1 = np.empty(n)
    D = np.empty(n)
    dyn = kind == DYNAMIC or kind == P_DYNAMIC

    _dither(w, a, 0.0, S0, M0)
    y0 = _map(H, ts, Qs, th, 0.0, u, S0, D)
    eta = y0 if wh > 0.0 else 0.0
    ups = ups0
    xi0 = _xi(M0, y0 - eta, gh, sig, al, be)

    ev[0, 0] = 0.0
    ev[0, 1] = xi0
    ev[0, 2] = ups
    ne = 1
    nr = _record(rec, 0, 0.0, th, S0, y0, M0, y0 - eta, gh, u, xi0, ups)

    for k in range(nsteps):
        t0 = k * dt
        tm = t0 + 0.5 * dt
        t1 = (k + 1) * dt
        _dither(w, a, tm, Sm, Mm)
        ym = _map(H, ts, Qs, th, 0.5 * dt, u, Sm, D)
        _dither(w, a, t1, S1, M1)
        y1 = _map(H, ts, Qs, th, dt, u, S1, D)

        # RK4 on (eta, upsilon); theta_hat' = u is constant over the step
        k1e = wh * (y0 - eta)
        k2e = wh * (ym - (eta + 0.5 * dt * k1e))
        k3e = wh * (ym - (eta + 0.5 * dt * k2e))
        k4e = wh * (y1 - (eta + dt * k3e))
        if dyn:
            e1 = eta
            e2 = eta + 0.5 * dt * k1e
            e3 = eta + 0.5 * dt * k2e
            e4 = eta + dt * k3e
            k1u = _ups_rate(ups, _xi(M0, y0 - e1, gh, sig, al, be), mu, ga)
            u2 = ups + 0.5 * dt * k1u
            k2u = _ups_rate(u2, _xi(Mm, ym - e2, gh, sig, al, be), mu, ga)
            u3 = ups + 0.5 * dt * k2u
            k3u = _ups_rate(u3, _xi(Mm, ym - e3, gh, sig, al, be), mu, ga)
            u4 = ups + dt * k3u
            k4u = _ups_rate(u4, _xi(M1, y1 - e4, gh, sig, al, be), mu, ga)
            ups = ups + dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        eta = eta + dt / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e)
        for i in range(n):
            th[i] = th[i] + dt * u[i]

        if not (math.isfinite(y1) and math.isfinite(eta) and math.isfinite(ups)):
            return ne, nr, 1, k + 1

        yd = y1 - eta
        x = _xi(M1, yd, gh, sig, al, be)
        if kind == STATIC:
            fire = x < 0.0
        elif kind == DYNAMIC:
            fire = ups + ga * x < 0.0
        elif kind == CONTINUOUS:
            fire = True
        elif (k + 1) % hsteps == 0:
            if kind == P_STATIC:
                fire = x < 0.0
            else:
                fire = ups + ga * x < 0.0
        else:
            fire = False
        if fire:
            ev[ne, 0] = t1
            ev[ne, 1] = x
            ev[ne, 2] = ups
            ne += 1
            for i in range(n):
                gh[i] = M1[i] * yd
            for i in range(n):
                r = 0.0
                for j in range(n):
                    r += K[i, j] * gh[j]
                u[i] = r
            x = sig * al * _sq(gh)

        if t1 >= win_start:
            _accumulate(acc, th, S1, ts, y1, Qs)
        if (k + 1) % dec == 0:
            nr = _record(rec, nr, t1, th, S1, y1, M1, yd, gh, u, x, ups)

        y0 = y1
        for i in range(n):
            M0[i] = M1[i]
    return ne, nr, 0, nsteps


@njit(cache=True)
def _sq(v):
    s = 0.0
    for i in range(v.shape[0]):
        s += v[i] * v[i]
    return s


@njit(cache=True)
def _accumulate(acc, th, S, ts, y, Qs):
    a0 = 0.0
    a1 = 0.0
    for i in range(th.shape[0]):
        d = th[i] - ts[i]
        a0 += d * d
        d = d + S[i]
        a1 += d * d
    a0 = math.sqrt(a0)
    a1 = math.sqrt(a1)
    a2 = abs(y - Qs)
    acc[0] += 1.0
    acc[1] += a0
    acc[2] += a1
    acc[3] += a2
    if a0 > acc[4]:
        acc[4] = a0
    if a1 > acc[5]:
        acc[5] = a1
    if a2 > acc[6]:
        acc[6] = a2


@njit(cache=True)
def _record(rec, r, t, th, S, y, M, yd, gh, u, x, ups):
    n = th.shape[0]
    c = 0
    rec[r, c] = t
    c += 1
    for i in range(n):
        rec[r, c + i] = th[i]
    c += n
    for i in range(n):
        rec[r, c + i] = th[i] + S[i]
    c += n
    rec[r, c] = y
    c += 1
    for i in range(n):
        rec[r, c + i] = M[i] * yd
    c += n
    for i in range(n):
        rec[r, c + i] = gh[i]
    c += n
    for i in range(n):
        rec[r, c + i] = u[i]
    c += n
    rec[r, c] = x
    rec[r, c + 1] = ups
    return r + 1


@njit(cache=True)
def average_kernel(H, Hinv, ts, Qs, K, P, kind, sig, al, be, mu, ga, ups0, hsteps,
                   th0, dt, nsteps, dec, rec, ev):
    """Average system in original time: G' = H*K G_held, upsilon' = -mu upsilon + Xi."""
    n = th0.shape[0]
    HK = H @ K
    g = H @ (th0 - ts)
    gh = g.copy()
    u = K @ gh
    rate = HK @ gh
    zero = np.zeros(n)
    dyn = kind == DYNAMIC or kind == P_DYNAMIC
    ups = ups0
    ev[0, 0] = 0.0
    ev[0, 1] = sig * al * _sq(g)
    ev[0, 2] = ups
    ne = 1
    nr = _record_av(rec, 0, 0.0, g, gh, Hinv, ts, H, Qs, u, P, ev[0, 1], ups, zero)
    ga_ = np.empty(n)
    # continuous control (e = 0): RK4 of the linear flow, i.e. its 4th-order Taylor propagator
    A = dt * HK
    A2 = A @ A
    phi = np.eye(n) + A + A2 / 2.0 + A2 @ A / 6.0 + A2 @ A2 / 24.0
    for k in range(nsteps):
        t1 = (k + 1) * dt
        if kind == CONTINUOUS:
            g = phi @ g
            rate = HK @ g
        elif dyn:
            # G is affine in t between events, so the RK4 stages are exact in G
            x1 = _xi_av(g, gh, rate, 0.0, sig, al, be, ga_)
            k1u = _ups_rate(ups, x1, mu, ga)
            xm = _xi_av(g, gh, rate, 0.5 * dt, sig, al, be, ga_)
            k2u = _ups_rate(ups + 0.5 * dt * k1u, xm, mu, ga)
            k3u = _ups_rate(ups + 0.5 * dt * k2u, xm, mu, ga)
            x4 = _xi_av(g, gh, rate, dt, sig, al, be, ga_)
            k4u = _ups_rate(ups + dt * k3u, x4, mu, ga)
            ups = ups + dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        if kind != CONTINUOUS:
            for i in range(n):
                g[i] = g[i] + dt * rate[i]
        if not (np.all(np.isfinite(g)) and math.isfinite(ups)):
            return ne, nr, 1, k + 1
        x = _xi_av(g, gh, rate, 0.0, sig, al, be, ga_)
        if kind == STATIC:
            fire = x < 0.0
        elif kind == DYNAMIC:
            fire = ups + ga * x < 0.0
        elif kind == CONTINUOUS:
            fire = True
        elif (k + 1) % hsteps == 0:
            fire = (x < 0.0) if kind == P_STATIC else (ups + ga * x < 0.0)
        else:
            fire = False
        if fire:
            ev[ne, 0] = t1
            ev[ne, 1] = x
            ev[ne, 2] = ups
            ne += 1
            for i in range(n):
                gh[i] = g[i]
            u = K @ gh
            rate = HK @ gh
            x = sig * al * _sq(gh)
        if (k + 1) % dec == 0:
            nr = _record_av(rec, nr, t1, g, gh, Hinv, ts, H, Qs, u, P, x, ups, zero)
    return ne, nr, 0, nsteps


@njit(cache=True)
def _xi_av(g, gh, rate, s, sig, al, be, buf):
    for i in range(g.shape[0]):
        buf[i] = g[i] + s * rate[i]
    gg = 0.0
    ee = 0.0
    for i in range(g.shape[0]):
        gg += buf[i] * buf[i]
        d = gh[i] - buf[i]
        ee += d * d
    return sig * al * gg - be * math.sqrt(ee) * math.sqrt(gg)


@njit(cache=True)
def _record_av(rec, r, t, g, gh, Hinv, ts, H, Qs, u, P, x, ups, zero):
    th = Hinv @ g + ts
    d = th - ts
    y = Qs + 0.5 * (d @ H @ d)
    v = g @ P @ g
    r2 = _record(rec, r, t, th, zero, y, g, 1.0, gh, u, x, ups)
    rec[r, rec.shape[1] - 1] = v
    return r2
