"""Compiled numerical kernels.

Everything on the objective-evaluation hot path lives here as nopython
numba functions operating on plain floats and packed arrays: Kepler and
universal-variable solvers, the zero-revolution Lambert solver, the
linked-conic flyby rotation, and the full trajectory cost. The public
modules (ephemeris, astro, model) wrap these with validated interfaces;
batch and scalar evaluation call the same functions, so results are
bit-identical regardless of batching.

Units inside the kernels: km, km/s, km^3/s^2. Epochs are MJD2000 days at
the call boundary and converted to seconds where needed.
"""

import math

import numpy as np
from numba import njit

DAY_S = 86400.0
TWO_PI = 2.0 * math.pi
FOUR_PI2 = 4.0 * math.pi * math.pi

# Additive penalty for decode failures and constraint violations. Large
# enough to dominate any feasible total delta-v, finite so the objective
# stays total.
PENALTY = 1.0e4
ARRIVAL_WEIGHT = 100.0

STATUS_OK = 0
STATUS_LAMBERT = 1
STATUS_PROPAGATE = 2
STATUS_EPHEMERIS = 3
STATUS_FLYBY = 4


@njit(cache=True)
def stumpff(z):
    """Stumpff functions C(z), S(z).

    The series branch reaches |z| = 0.01 so the trigonometric forms
    never suffer the 1 - cos cancellation near zero.
    """
    if z > 1.0e-2:
        sz = math.sqrt(z)
        half_sin = math.sin(0.5 * sz)
        # 1 - cos x = 2 sin^2(x/2): exact, no cancellation near whole
        # revolutions
        c = 2.0 * half_sin * half_sin / z
        s = (sz - math.sin(sz)) / (sz * z)
    elif z < -1.0e-2:
        sz = math.sqrt(-z)
        half_sinh = math.sinh(0.5 * sz)
        c = 2.0 * half_sinh * half_sinh / (-z)
        s = (math.sinh(sz) - sz) / (sz * (-z))
    else:
        z2 = z * z
        c = (0.5 - z / 24.0 + z2 / 720.0 - z2 * z / 40320.0
             + z2 * z2 / 3628800.0)
        s = (1.0 / 6.0 - z / 120.0 + z2 / 5040.0 - z2 * z / 362880.0
             + z2 * z2 / 39916800.0)
    return c, s


@njit(cache=True)
def kepler_ecc_anomaly(m_anom, ecc):
    """Solve E - e sin E = M by Newton iteration.

    Returns (E, converged). Residual target 1e-13 rad, at most 50 steps,
    initial guess E = M + e sin M; adequate for e < 0.95.
    """
    m = m_anom % TWO_PI
    if m > math.pi:
        m -= TWO_PI
    e_anom = m + ecc * math.sin(m)
    for _ in range(50):
        se = math.sin(e_anom)
        resid = e_anom - ecc * se - m
        if abs(resid) < 1.0e-13:
            return e_anom, True
        e_anom -= resid / (1.0 - ecc * math.cos(e_anom))
    if abs(e_anom - ecc * math.sin(e_anom) - m) < 1.0e-13:
        return e_anom, True
    return e_anom, False


@njit(cache=True)
def ephem_state(bid, t, mu_sun, el0, el_rate, el_n0, el_epoch):
    """Heliocentric state of catalog body `bid` at epoch t (MJD2000 days).

    Mean elements drift linearly at their secular rates; the mean anomaly
    additionally advances at the two-body mean motion el_n0 implied by the
    reference semi-major axis. Velocity is the analytic conic derivative.
    """
    dt = t - el_epoch[bid]
    a = el0[bid, 0] + el_rate[bid, 0] * dt
    e = el0[bid, 1] + el_rate[bid, 1] * dt
    inc = el0[bid, 2] + el_rate[bid, 2] * dt
    raan = el0[bid, 3] + el_rate[bid, 3] * dt
    argp = el0[bid, 4] + el_rate[bid, 4] * dt
    m = el0[bid, 5] + (el_n0[bid] + el_rate[bid, 5]) * dt

    e_anom, ok = kepler_ecc_anomaly(m, e)
    if not ok or a <= 0.0 or e < 0.0 or e >= 1.0:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False

    ce = math.cos(e_anom)
    se = math.sin(e_anom)
    root = math.sqrt(1.0 - e * e)
    rmag = a * (1.0 - e * ce)
    xp = a * (ce - e)
    yp = a * root * se
    vk = math.sqrt(mu_sun * a) / rmag
    vxp = -vk * se
    vyp = vk * root * ce

    co = math.cos(argp)
    so = math.sin(argp)
    cr = math.cos(raan)
    sr = math.sin(raan)
    ci = math.cos(inc)
    si = math.sin(inc)
    # Perifocal P, Q axes expressed in the heliocentric frame.
    px = cr * co - sr * so * ci
    py = sr * co + cr * so * ci
    pz = so * si
    qx = -cr * so - sr * co * ci
    qy = -sr * so + cr * co * ci
    qz = co * si

    rx = xp * px + yp * qx
    ry = xp * py + yp * qy
    rz = xp * pz + yp * qz
    vx = vxp * px + vyp * qx
    vy = vxp * py + vyp * qy
    vz = vxp * pz + vyp * qz
    return rx, ry, rz, vx, vy, vz, True


@njit(cache=True)
def _univ_tof(chi, r0, vr0, alpha, sqmu):
    """Universal Kepler equation: time of flight and its chi-derivative."""
    z = alpha * chi * chi
    c, s = stumpff(z)
    t = (r0 * vr0 / sqmu * chi * chi * c
         + (1.0 - alpha * r0) * chi * chi * chi * s
         + r0 * chi) / sqmu
    dt = (r0 * vr0 / sqmu * chi * (1.0 - z * s)
          + (1.0 - alpha * r0) * chi * chi * c
          + r0) / sqmu
    return t, dt


@njit(cache=True)
def propagate_uv(rx, ry, rz, vx, vy, vz, mu, dt_s):
    """Two-body propagation by dt_s seconds (universal variables).

    Handles elliptic, near-parabolic and hyperbolic motion, forward or
    backward. Returns the new state and a success flag.
    """
    if dt_s == 0.0:
        return rx, ry, rz, vx, vy, vz, True
    r0 = math.sqrt(rx * rx + ry * ry + rz * rz)
    v2 = vx * vx + vy * vy + vz * vz
    vr0 = (rx * vx + ry * vy + rz * vz) / r0
    alpha = 2.0 / r0 - v2 / mu
    sqmu = math.sqrt(mu)

    if alpha > 0.0:
        # Elliptic: fold out whole revolutions toward the nearest one.
        # The state repeats each period, and large chi values lose
        # precision in the Stumpff terms.
        period = TWO_PI / (sqmu * alpha * math.sqrt(alpha))
        revs = round(dt_s / period)
        if revs != 0.0:
            dt_s = dt_s - revs * period
            if dt_s == 0.0:
                return rx, ry, rz, vx, vy, vz, True

    chi = sqmu * abs(alpha) * dt_s
    if chi == 0.0:
        chi = sqmu * dt_s / r0

    # t(chi) is monotone increasing (dt/dchi = r/sqrt(mu) > 0), so bracket
    # the root by geometric expansion, then polish with safeguarded
    # Newton. Steps shrink again when the hyperbolic Stumpff terms
    # overflow past the bracket.
    step = max(abs(chi), sqmu * abs(dt_s) / r0, 1.0)
    lo = chi
    hi = chi
    t, _ = _univ_tof(chi, r0, vr0, alpha, sqmu)
    it = 0
    if not math.isfinite(t):
        lo = 0.0
        hi = 0.0
        t = 0.0
        step = max(sqmu * abs(dt_s) / r0, 1.0)
    if t < dt_s:
        while it < 200:
            cand = hi + step
            t, _ = _univ_tof(cand, r0, vr0, alpha, sqmu)
            if math.isfinite(t):
                hi = cand
                if t >= dt_s:
                    break
                step *= 2.0
            else:
                step *= 0.25
            it += 1
    else:
        while it < 200:
            cand = lo - step
            t, _ = _univ_tof(cand, r0, vr0, alpha, sqmu)
            if math.isfinite(t):
                lo = cand
                if t <= dt_s:
                    break
                step *= 2.0
            else:
                step *= 0.25
            it += 1
    if it >= 200:
        return rx, ry, rz, vx, vy, vz, False

    tol = max(1.0e-13 * abs(dt_s), 1.0e-10)
    ok = False
    chi = 0.5 * (lo + hi)
    for _ in range(160):
        t, dtd = _univ_tof(chi, r0, vr0, alpha, sqmu)
        err = t - dt_s
        if abs(err) <= tol:
            ok = True
            break
        if err > 0.0:
            hi = chi
        else:
            lo = chi
        if hi - lo <= 4.0e-16 * max(abs(lo), abs(hi), 1.0):
            # bracket at floating-point resolution: the time residual is
            # evaluation noise, the state is converged
            ok = True
            break
        if dtd > 0.0:
            nxt = chi - err / dtd
        else:
            nxt = 0.5 * (lo + hi)
        if nxt <= lo or nxt >= hi or not math.isfinite(nxt):
            nxt = 0.5 * (lo + hi)
        chi = nxt
    if not ok:
        return rx, ry, rz, vx, vy, vz, False

    z = alpha * chi * chi
    c, s = stumpff(z)
    f = 1.0 - chi * chi * c / r0
    g = dt_s - chi * chi * chi * s / sqmu
    nrx = f * rx + g * vx
    nry = f * ry + g * vy
    nrz = f * rz + g * vz
    rn = math.sqrt(nrx * nrx + nry * nry + nrz * nrz)
    fd = sqmu / (rn * r0) * (alpha * chi * chi * chi * s - chi)
    gd = 1.0 - chi * chi * c / rn
    nvx = fd * rx + gd * vx
    nvy = fd * ry + gd * vy
    nvz = fd * rz + gd * vz
    return nrx, nry, nrz, nvx, nvy, nvz, True


@njit(cache=True)
def _lambert_y(z, rsum, a_geom):
    c, s = stumpff(z)
    if c <= 0.0:
        return -1.0, c, s
    y = rsum + a_geom * (z * s - 1.0) / math.sqrt(c)
    return y, c, s


@njit(cache=True)
def lambert_uv(r1x, r1y, r1z, r2x, r2y, r2z, tof_s, mu, prograde):
    """Zero-revolution Lambert solve, universal-variable formulation.

    Transfer direction follows the sign of the z-component of r1 x r2
    (prograde keeps it, retrograde flips it). Transfer angles within
    1e-4 rad of pi are rejected: the transfer plane is undefined there.

    Returns (v1, v2, status); status 0 on success, 1 on bad time of
    flight, 2 on degenerate geometry, 3 on non-convergence.
    """
    zero = 0.0
    if tof_s <= 0.0 or not math.isfinite(tof_s):
        return zero, zero, zero, zero, zero, zero, STATUS_LAMBERT
    r1n = math.sqrt(r1x * r1x + r1y * r1y + r1z * r1z)
    r2n = math.sqrt(r2x * r2x + r2y * r2y + r2z * r2z)
    if r1n == 0.0 or r2n == 0.0:
        return zero, zero, zero, zero, zero, zero, 2
    cosd = (r1x * r2x + r1y * r2y + r1z * r2z) / (r1n * r2n)
    if cosd > 1.0:
        cosd = 1.0
    elif cosd < -1.0:
        cosd = -1.0
    dth = math.acos(cosd)
    cz = r1x * r2y - r1y * r2x
    if prograde:
        if cz < 0.0:
            dth = TWO_PI - dth
    else:
        if cz >= 0.0:
            dth = TWO_PI - dth
    if abs(dth - math.pi) < 1.0e-4:
        return zero, zero, zero, zero, zero, zero, 2
    if dth < 1.0e-8 or dth > TWO_PI - 1.0e-8:
        return zero, zero, zero, zero, zero, zero, 2

    a_geom = math.sin(dth) * math.sqrt(r1n * r2n / (1.0 - cosd))
    rsum = r1n + r2n
    sqmu = math.sqrt(mu)
    target = sqmu * tof_s

    # Bracket: F(z) = chi(z) - target is monotone increasing in z.
    zhi = FOUR_PI2 * (1.0 - 1.0e-9)
    zlo = -FOUR_PI2
    zfloor = -1.0e30
    y, c, s = _lambert_y(zlo, rsum, a_geom)
    k = 0
    while y <= 0.0 and k < 80:
        zfloor = zlo
        zlo *= 0.5
        y, c, s = _lambert_y(zlo, rsum, a_geom)
        k += 1
    if y <= 0.0:
        return zero, zero, zero, zero, zero, zero, 3
    chi = (y / c) ** 1.5 * s + a_geom * math.sqrt(y)
    k = 0
    while chi >= target and k < 80:
        # Root is below zlo: extend downward without crossing y <= 0.
        if zfloor > -1.0e29:
            znew = 0.5 * (zfloor + zlo)
        else:
            znew = 2.0 * zlo - 10.0
        y2, c2, s2 = _lambert_y(znew, rsum, a_geom)
        if not math.isfinite(y2):
            break
        if y2 <= 0.0:
            zfloor = znew
        else:
            zlo = znew
            y, c, s = y2, c2, s2
            chi = (y / c) ** 1.5 * s + a_geom * math.sqrt(y)
        k += 1
    if chi >= target:
        return zero, zero, zero, zero, zero, zero, 3

    z = 0.0
    if z <= zlo or z >= zhi:
        z = 0.5 * (zlo + zhi)
    status = 3
    y_fin = 0.0
    for _ in range(60):
        y, c, s = _lambert_y(z, rsum, a_geom)
        if y <= 0.0:
            zlo = z
            z = 0.5 * (zlo + zhi)
            continue
        sy = math.sqrt(y)
        fval = (y / c) ** 1.5 * s + a_geom * sy - target
        if abs(fval) <= 1.0e-11 * target:
            status = STATUS_OK
            y_fin = y
            break
        if fval > 0.0:
            zhi = z
        else:
            zlo = z
        if abs(z) > 1.0e-8:
            fp = ((y / c) ** 1.5
                  * ((c - 1.5 * s / c) / (2.0 * z) + 0.75 * s * s / c)
                  + 0.125 * a_geom * (3.0 * (s / c) * sy
                                      + a_geom * math.sqrt(c / y)))
        else:
            fp = (math.sqrt(2.0) / 40.0 * y ** 1.5
                  + 0.125 * a_geom * (sy + a_geom * math.sqrt(0.5 / y)))
        if fp > 0.0:
            znew = z - fval / fp
        else:
            znew = 0.5 * (zlo + zhi)
        if znew <= zlo or znew >= zhi or not math.isfinite(znew):
            znew = 0.5 * (zlo + zhi)
        z = znew
    if status != STATUS_OK:
        return zero, zero, zero, zero, zero, zero, 3

    f = 1.0 - y_fin / r1n
    g = a_geom * math.sqrt(y_fin / mu)
    gd = 1.0 - y_fin / r2n
    v1x = (r2x - f * r1x) / g
    v1y = (r2y - f * r1y) / g
    v1z = (r2z - f * r1z) / g
    v2x = (gd * r2x - r1x) / g
    v2y = (gd * r2y - r1y) / g
    v2z = (gd * r2z - r1z) / g
    return v1x, v1y, v1z, v2x, v2y, v2z, STATUS_OK


@njit(cache=True)
def rodrigues(vx, vy, vz, ux, uy, uz, angle):
    """Rotate vector v about unit axis u by angle (right-handed)."""
    ca = math.cos(angle)
    sa = math.sin(angle)
    dot = ux * vx + uy * vy + uz * vz
    cx = uy * vz - uz * vy
    cy = uz * vx - ux * vz
    cz = ux * vy - uy * vx
    k = dot * (1.0 - ca)
    return (vx * ca + cx * sa + ux * k,
            vy * ca + cy * sa + uy * k,
            vz * ca + cz * sa + uz * k)


@njit(cache=True)
def flyby_turn(vix, viy, viz, vpx, vpy, vpz, eta, hbar, mu_body, radius,
               ref_mode):
    """Rotate an incoming relative velocity through a powered-free flyby.

    The hyperbola plane normal is the reference direction n_i rotated by
    eta about the incoming relative velocity; the relative vector then
    turns by gamma = pi - 2 beta inside that plane. ref_mode 0 takes n_i
    normal to the incoming velocity within the xy plane, ref_mode 1 takes
    it normal to the plane spanned by the relative and planet velocities.
    """
    zero = 0.0
    vin = math.sqrt(vix * vix + viy * viy + viz * viz)
    if vin < 1.0e-12:
        return zero, zero, zero, STATUS_FLYBY
    rp = radius * (1.0 + hbar)
    ecc_h = 1.0 + rp * vin * vin / mu_body
    beta = math.acos(1.0 / ecc_h)
    gamma = math.pi - 2.0 * beta
    ux = vix / vin
    uy = viy / vin
    uz = viz / vin
    if ref_mode == 0:
        sxy = math.hypot(ux, uy)
        if sxy < 1.0e-10:
            return zero, zero, zero, STATUS_FLYBY
        nix = -uy / sxy
        niy = ux / sxy
        niz = 0.0
    else:
        nix = viy * vpz - viz * vpy
        niy = viz * vpx - vix * vpz
        niz = vix * vpy - viy * vpx
        nn = math.sqrt(nix * nix + niy * niy + niz * niz)
        vpn = math.sqrt(vpx * vpx + vpy * vpy + vpz * vpz)
        if nn < 1.0e-10 * vin * max(vpn, 1.0e-12):
            return zero, zero, zero, STATUS_FLYBY
        nix /= nn
        niy /= nn
        niz /= nn
    npx, npy, npz = rodrigues(nix, niy, niz, ux, uy, uz, eta)
    vox, voy, voz = rodrigues(vix, viy, viz, npx, npy, npz, gamma)
    return vox, voy, voz, STATUS_OK


@njit(cache=True)
def traj_eval(y, seq, head_idx, idx_launch, idx_t, idx_eps, idx_eta, idx_h,
              obj_mode, arr_mode, arr_val,
              mu_sun, b_mu, b_radius, el0, el_rate, el_n0, el_epoch,
              dsm_mag, dsm_epoch, tof_days, dsm_pos, dsm_vec,
              fly_vin, fly_vout, body_r, body_v, dep_v):
    """Decode one solution vector and return its total delta-v objective.

    Layout is carried by index maps prepared per problem: idx_launch holds
    the positions of (vinf, alpha, delta, t0) with vinf = -1 selecting the
    Lambert first leg; idx_t / idx_eps / idx_eta / idx_h give the per-leg
    variable positions (idx_eps[0] = -1 when leg one has no maneuver).
    Output arrays receive the per-leg breakdown for reporting.

    Returns (f, vinf0, vinf_arrival, status, legs_done). Failures map to
    a finite additive penalty that grows with the number of unresolved
    legs and, for arrival-speed constraints, with the violation.
    """
    npl = seq.shape[0]
    nleg = npl - 1
    nids = b_mu.shape[0] - 1

    ids = np.empty(npl, np.int64)
    for sslot in range(npl):
        if seq[sslot] >= 0:
            ids[sslot] = seq[sslot]
        else:
            bid = int(round(y[head_idx[sslot]]))
            if bid < 1:
                bid = 1
            elif bid > nids:
                bid = nids
            ids[sslot] = bid

    for k in range(nleg):
        dsm_mag[k] = 0.0
        dsm_epoch[k] = 0.0
        tof_days[k] = y[idx_t[k]]
        for j in range(3):
            dsm_pos[k, j] = 0.0
            dsm_vec[k, j] = 0.0

    t0 = y[idx_launch[3]]
    rx, ry, rz, pvx, pvy, pvz, ok = ephem_state(
        ids[0], t0, mu_sun, el0, el_rate, el_n0, el_epoch)
    body_r[0, 0] = rx
    body_r[0, 1] = ry
    body_r[0, 2] = rz
    body_v[0, 0] = pvx
    body_v[0, 1] = pvy
    body_v[0, 2] = pvz
    if not ok:
        return PENALTY * (2.0 + 1.0), 0.0, 0.0, STATUS_EPHEMERIS, 0

    vinf0 = 0.0
    total_dsm = 0.0
    vinf_arr = 0.0
    status = STATUS_OK
    legs_done = 0
    t = t0
    vx = 0.0
    vy = 0.0
    vz = 0.0
    k_start = 0

    if idx_launch[0] >= 0:
        vinf_mag = y[idx_launch[0]]
        alpha = y[idx_launch[1]]
        delta = y[idx_launch[2]]
        sd = math.sin(delta)
        vx = pvx + vinf_mag * sd * math.cos(alpha)
        vy = pvy + vinf_mag * sd * math.sin(alpha)
        vz = pvz + vinf_mag * math.cos(delta)
        vinf0 = vinf_mag
        dep_v[0] = vx
        dep_v[1] = vy
        dep_v[2] = vz
    else:
        # Simplified first leg: plain Lambert arc from body 0 to body 1.
        tof1 = y[idx_t[0]]
        b1x, b1y, b1z, b1vx, b1vy, b1vz, ok = ephem_state(
            ids[1], t0 + tof1, mu_sun, el0, el_rate, el_n0, el_epoch)
        if not ok:
            status = STATUS_EPHEMERIS
        else:
            body_r[1, 0] = b1x
            body_r[1, 1] = b1y
            body_r[1, 2] = b1z
            body_v[1, 0] = b1vx
            body_v[1, 1] = b1vy
            body_v[1, 2] = b1vz
            v1x, v1y, v1z, a2x, a2y, a2z, lst = lambert_uv(
                rx, ry, rz, b1x, b1y, b1z, tof1 * DAY_S, mu_sun, True)
            if lst != STATUS_OK:
                status = STATUS_LAMBERT
            else:
                vinf0 = math.sqrt((v1x - pvx) ** 2 + (v1y - pvy) ** 2
                                  + (v1z - pvz) ** 2)
                vx = v1x
                vy = v1y
                vz = v1z
                dep_v[0] = v1x
                dep_v[1] = v1y
                dep_v[2] = v1z
                t = t0 + tof1
                legs_done = 1
                k_start = 1
                if npl > 2:
                    vinx = a2x - b1vx
                    viny = a2y - b1vy
                    vinz = a2z - b1vz
                    fly_vin[0, 0] = vinx
                    fly_vin[0, 1] = viny
                    fly_vin[0, 2] = vinz
                    bid = ids[1]
                    vox, voy, voz, fst = flyby_turn(
                        vinx, viny, vinz, b1vx, b1vy, b1vz,
                        y[idx_eta[0]], y[idx_h[0]],
                        b_mu[bid], b_radius[bid], 0)
                    if fst != STATUS_OK:
                        status = STATUS_FLYBY
                    else:
                        fly_vout[0, 0] = vox
                        fly_vout[0, 1] = voy
                        fly_vout[0, 2] = voz
                        rx = b1x
                        ry = b1y
                        rz = b1z
                        vx = b1vx + vox
                        vy = b1vy + voy
                        vz = b1vz + voz
                else:
                    vinf_arr = math.sqrt((a2x - b1vx) ** 2
                                         + (a2y - b1vy) ** 2
                                         + (a2z - b1vz) ** 2)
        if status != STATUS_OK:
            f = total_dsm + (vinf0 if obj_mode == 0 else 0.0)
            f += PENALTY * (1.0 + (nleg - legs_done) / nleg)
            return f, vinf0, 0.0, status, legs_done

    for k in range(k_start, nleg):
        tof = y[idx_t[k]]
        eps = y[idx_eps[k]] if idx_eps[k] >= 0 else 0.0
        # Coast to the maneuver point.
        mrx, mry, mrz, mvx, mvy, mvz, ok = propagate_uv(
            rx, ry, rz, vx, vy, vz, mu_sun, eps * tof * DAY_S)
        if not ok:
            status = STATUS_PROPAGATE
            break
        bid = ids[k + 1]
        tbx, tby, tbz, tvx, tvy, tvz, ok = ephem_state(
            bid, t + tof, mu_sun, el0, el_rate, el_n0, el_epoch)
        if not ok:
            status = STATUS_EPHEMERIS
            break
        body_r[k + 1, 0] = tbx
        body_r[k + 1, 1] = tby
        body_r[k + 1, 2] = tbz
        body_v[k + 1, 0] = tvx
        body_v[k + 1, 1] = tvy
        body_v[k + 1, 2] = tvz
        l1x, l1y, l1z, l2x, l2y, l2z, lst = lambert_uv(
            mrx, mry, mrz, tbx, tby, tbz,
            (1.0 - eps) * tof * DAY_S, mu_sun, True)
        if lst != STATUS_OK:
            status = STATUS_LAMBERT
            break
        dvx = l1x - mvx
        dvy = l1y - mvy
        dvz = l1z - mvz
        dmag = math.sqrt(dvx * dvx + dvy * dvy + dvz * dvz)
        dsm_mag[k] = dmag
        dsm_epoch[k] = t + eps * tof
        dsm_pos[k, 0] = mrx
        dsm_pos[k, 1] = mry
        dsm_pos[k, 2] = mrz
        dsm_vec[k, 0] = dvx
        dsm_vec[k, 1] = dvy
        dsm_vec[k, 2] = dvz
        total_dsm += dmag
        t += tof
        legs_done = k + 1
        if k < nleg - 1:
            vinx = l2x - tvx
            viny = l2y - tvy
            vinz = l2z - tvz
            fly_vin[k, 0] = vinx
            fly_vin[k, 1] = viny
            fly_vin[k, 2] = vinz
            vox, voy, voz, fst = flyby_turn(
                vinx, viny, vinz, tvx, tvy, tvz,
                y[idx_eta[k]], y[idx_h[k]],
                b_mu[bid], b_radius[bid], 0)
            if fst != STATUS_OK:
                status = STATUS_FLYBY
                break
            fly_vout[k, 0] = vox
            fly_vout[k, 1] = voy
            fly_vout[k, 2] = voz
            rx = tbx
            ry = tby
            rz = tbz
            vx = tvx + vox
            vy = tvy + voy
            vz = tvz + voz
        else:
            vinf_arr = math.sqrt((l2x - tvx) ** 2 + (l2y - tvy) ** 2
                                 + (l2z - tvz) ** 2)

    f = total_dsm + (vinf0 if obj_mode == 0 else 0.0)
    if status == STATUS_OK:
        if arr_mode == 1:
            # Minimum-arrival-speed (impactor) problems: the relative
            # speed is not braked away, so it carries no cost, only the
            # constraint penalty.
            if vinf_arr < arr_val:
                f += PENALTY + ARRIVAL_WEIGHT * (arr_val - vinf_arr)
        else:
            f += vinf_arr
            if arr_mode == 2 and vinf_arr > arr_val:
                f += PENALTY + ARRIVAL_WEIGHT * (vinf_arr - arr_val)
    else:
        f += PENALTY * (1.0 + (nleg - legs_done) / nleg)
    if not math.isfinite(f):
        f = 1.0e5
    return f, vinf0, vinf_arr, status, legs_done


@njit(cache=True)
def eval_batch(ys, seq, head_idx, idx_launch, idx_t, idx_eps, idx_eta,
               idx_h, obj_mode, arr_mode, arr_val,
               mu_sun, b_mu, b_radius, el0, el_rate, el_n0, el_epoch, out):
    """Objective value for each row of ys (scratch reused across rows)."""
    npl = seq.shape[0]
    nleg = npl - 1
    nfly = max(npl - 2, 1)
    dsm_mag = np.empty(nleg)
    dsm_epoch = np.empty(nleg)
    tof_days = np.empty(nleg)
    dsm_pos = np.empty((nleg, 3))
    dsm_vec = np.empty((nleg, 3))
    fly_vin = np.empty((nfly, 3))
    fly_vout = np.empty((nfly, 3))
    body_r = np.empty((npl, 3))
    body_v = np.empty((npl, 3))
    dep_v = np.empty(3)
    for i in range(ys.shape[0]):
        f, _, _, _, _ = traj_eval(
            ys[i], seq, head_idx, idx_launch, idx_t, idx_eps, idx_eta,
            idx_h, obj_mode, arr_mode, arr_val,
            mu_sun, b_mu, b_radius, el0, el_rate, el_n0, el_epoch,
            dsm_mag, dsm_epoch, tof_days, dsm_pos, dsm_vec,
            fly_vin, fly_vout, body_r, body_v, dep_v)
        out[i] = f


@njit(cache=True)
def two_impulse(t0, tof, id1, id2, mu_sun, el0, el_rate, el_n0, el_epoch):
    """Total delta-v of a direct two-impulse transfer (days in, km/s out)."""
    r1x, r1y, r1z, p1x, p1y, p1z, ok1 = ephem_state(
        id1, t0, mu_sun, el0, el_rate, el_n0, el_epoch)
    r2x, r2y, r2z, p2x, p2y, p2z, ok2 = ephem_state(
        id2, t0 + tof, mu_sun, el0, el_rate, el_n0, el_epoch)
    if not (ok1 and ok2):
        return PENALTY
    v1x, v1y, v1z, v2x, v2y, v2z, st = lambert_uv(
        r1x, r1y, r1z, r2x, r2y, r2z, tof * DAY_S, mu_sun, True)
    if st != STATUS_OK:
        return PENALTY
    dv1 = math.sqrt((v1x - p1x) ** 2 + (v1y - p1y) ** 2 + (v1z - p1z) ** 2)
    dv2 = math.sqrt((v2x - p2x) ** 2 + (v2y - p2y) ** 2 + (v2z - p2z) ** 2)
    return dv1 + dv2


@njit(cache=True)
def three_impulse(t0, eps, tof, id1, id2, dv1_mode, dv1_mag,
                  mu_sun, el0, el_rate, el_n0, el_epoch):
    """Departure burn, mid-course correction at eps*tof, arrival burn."""
    r1x, r1y, r1z, p1x, p1y, p1z, ok1 = ephem_state(
        id1, t0, mu_sun, el0, el_rate, el_n0, el_epoch)
    r2x, r2y, r2z, p2x, p2y, p2z, ok2 = ephem_state(
        id2, t0 + tof, mu_sun, el0, el_rate, el_n0, el_epoch)
    if not (ok1 and ok2):
        return PENALTY
    dv1 = 0.0
    vx = p1x
    vy = p1y
    vz = p1z
    if dv1_mode == 1:
        pn = math.sqrt(p1x * p1x + p1y * p1y + p1z * p1z)
        vx += dv1_mag * p1x / pn
        vy += dv1_mag * p1y / pn
        vz += dv1_mag * p1z / pn
        dv1 = dv1_mag
    mrx, mry, mrz, mvx, mvy, mvz, ok = propagate_uv(
        r1x, r1y, r1z, vx, vy, vz, mu_sun, eps * tof * DAY_S)
    if not ok:
        return PENALTY
    l1x, l1y, l1z, l2x, l2y, l2z, st = lambert_uv(
        mrx, mry, mrz, r2x, r2y, r2z, (1.0 - eps) * tof * DAY_S,
        mu_sun, True)
    if st != STATUS_OK:
        return PENALTY
    dvs = math.sqrt((l1x - mvx) ** 2 + (l1y - mvy) ** 2 + (l1z - mvz) ** 2)
    dv2 = math.sqrt((l2x - p2x) ** 2 + (l2y - p2y) ** 2 + (l2z - p2z) ** 2)
    return dv1 + dvs + dv2


@njit(cache=True)
def scan_grid(t0s, tofs, id1, id2, mode, eps_sweep, dv1_mode, dv1_mag,
              mu_sun, el0, el_rate, el_n0, el_epoch, out):
    """Fill out[i, j] with transfer cost at (t0s[i], tofs[j]).

    mode 0: two-impulse cost. mode 1: minimum of the three-impulse cost
    over the fixed eps sweep.
    """
    for i in range(t0s.shape[0]):
        for j in range(tofs.shape[0]):
            if mode == 0:
                out[i, j] = two_impulse(
                    t0s[i], tofs[j], id1, id2,
                    mu_sun, el0, el_rate, el_n0, el_epoch)
            else:
                best = 1.0e30
                for k in range(eps_sweep.shape[0]):
                    val = three_impulse(
                        t0s[i], eps_sweep[k], tofs[j], id1, id2,
                        dv1_mode, dv1_mag,
                        mu_sun, el0, el_rate, el_n0, el_epoch)
                    if val < best:
                        best = val
                out[i, j] = best
