"""Two-body propagation, Lambert arcs and linked-conic flyby geometry.

All operations are thin validated wrappers over the compiled kernels in
``_kernels``; the same code paths serve single calls and the batched
objective evaluation, so values match bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ephemeris import Body, CartesianState, DAY_S


class LambertError(RuntimeError):
    """Lambert solve rejected or failed to converge."""


class PropagationError(RuntimeError):
    """Universal Kepler propagation failed to converge."""


@dataclass(frozen=True)
class Quaternion:
    """Unit rotation quaternion, vector part first."""

    vec: np.ndarray
    scalar: float

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Quaternion":
        axis = np.asarray(axis, dtype=float)
        n = np.linalg.norm(axis)
        if n < 1.0e-12:
            raise ValueError("rotation axis must be non-zero")
        half = 0.5 * angle
        return cls(axis / n * math.sin(half), math.cos(half))

    def norm(self) -> float:
        return math.sqrt(float(self.vec @ self.vec) + self.scalar ** 2)

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        t = 2.0 * np.cross(self.vec, v)
        return v + self.scalar * t + np.cross(self.vec, t)


def rotate(v, axis, angle: float) -> np.ndarray:
    """Rotate v about the unit axis by angle (right-handed, norm preserving)."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if abs(n - 1.0) > 1.0e-9:
        raise ValueError(f"axis must be unit length, |axis| = {n}")
    v = np.asarray(v, dtype=float)
    x, y, z = _kernels.rodrigues(v[0], v[1], v[2],
                                 axis[0], axis[1], axis[2], float(angle))
    return np.array([x, y, z])


def propagate_kepler(state: CartesianState, mu: float,
                     dt_days: float) -> CartesianState:
    """Propagate a heliocentric state by dt_days (negative allowed)."""
    if mu <= 0.0:
        raise ValueError("mu must be positive")
    r, v = state.r, state.v
    rx, ry, rz, vx, vy, vz, ok = _kernels.propagate_uv(
        r[0], r[1], r[2], v[0], v[1], v[2], mu, dt_days * DAY_S)
    if not ok:
        raise PropagationError(
            f"universal Kepler iteration failed for dt = {dt_days} days")
    return CartesianState(np.array([rx, ry, rz]), np.array([vx, vy, vz]),
                          state.epoch + dt_days)


def lambert(r1, r2, tof_days: float, mu: float,
            direction: str = "prograde") -> tuple[np.ndarray, np.ndarray]:
    """Solve the zero-revolution Lambert problem between two positions.

    Returns departure and arrival velocities (km/s). Raises LambertError
    for non-positive time of flight, transfer angles within 1e-4 rad of
    pi (undefined plane) and solver non-convergence.
    """
    if direction not in ("prograde", "retrograde"):
        raise ValueError(f"unknown transfer direction {direction!r}")
    if tof_days <= 0.0:
        raise LambertError("time of flight must be positive")
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    v1x, v1y, v1z, v2x, v2y, v2z, status = _kernels.lambert_uv(
        r1[0], r1[1], r1[2], r2[0], r2[1], r2[2],
        tof_days * DAY_S, mu, direction == "prograde")
    if status == _kernels.STATUS_OK:
        return np.array([v1x, v1y, v1z]), np.array([v2x, v2y, v2z])
    if status == 2:
        raise LambertError("degenerate transfer geometry "
                           "(transfer angle at or within 1e-4 rad of pi)")
    raise LambertError("universal-variable iteration did not converge")


def beta_angle(h_norm: float, v_inf: float, body: Body) -> float:
    """Half-plane angle beta of the flyby hyperbola.

    beta = arccos(1/e_h) with e_h = 1 + r_p v_inf^2 / mu, and pericenter
    radius r_p = R (1 + h_norm); the velocity turn angle is pi - 2 beta.
    """
    if v_inf <= 0.0:
        raise ValueError("v_inf must be positive")
    rp = body.radius_km * (1.0 + h_norm)
    ecc_h = 1.0 + rp * v_inf * v_inf / body.mu_km3s2
    return math.acos(1.0 / ecc_h)


@dataclass(frozen=True)
class FlybyGeometry:
    """Resolved swing-by: relative velocities and hyperbola-plane data."""

    v_in_rel: np.ndarray
    v_out_rel: np.ndarray
    eta: float
    h_norm: float
    beta: float
    gamma: float
    n_plane: np.ndarray


def flyby_outgoing(v_in_rel, v_planet, eta: float, h_norm: float,
                   body: Body, ref_mode: str = "xy-normal") -> FlybyGeometry:
    """Outgoing relative velocity after an unpowered flyby.

    The reference direction n_i is rotated by eta about the incoming
    relative velocity to fix the hyperbola plane, then the relative
    velocity turns by gamma = pi - 2 beta inside that plane. ref_mode
    "xy-normal" builds n_i normal to the incoming velocity within the xy
    plane (the default); "velocity-plane-normal" uses the normal of the
    plane spanned by the relative and planet velocities.
    """
    modes = {"xy-normal": 0, "velocity-plane-normal": 1}
    if ref_mode not in modes:
        raise ValueError(f"unknown ref_mode {ref_mode!r}")
    vi = np.asarray(v_in_rel, dtype=float)
    vp = np.asarray(v_planet, dtype=float)
    vin = np.linalg.norm(vi)
    if vin <= 0.0:
        raise ValueError("incoming relative velocity must be non-zero")
    if h_norm < body.min_altitude_km / body.radius_km - 1.0e-12:
        raise ValueError(
            f"normalized altitude {h_norm} below body minimum "
            f"{body.min_altitude_km / body.radius_km}")

    vox, voy, voz, status = _kernels.flyby_turn(
        vi[0], vi[1], vi[2], vp[0], vp[1], vp[2],
        float(eta), float(h_norm), body.mu_km3s2, body.radius_km,
        modes[ref_mode])
    if status != _kernels.STATUS_OK:
        raise ValueError("degenerate flyby reference direction; "
                         "perturb the eta parameterization")

    u = vi / vin
    if ref_mode == "xy-normal":
        n_i = np.array([-u[1], u[0], 0.0])
        n_i /= np.linalg.norm(n_i)
    else:
        n_i = np.cross(vi, vp)
        n_i /= np.linalg.norm(n_i)
    n_plane = rotate(n_i, u, eta)
    beta = beta_angle(h_norm, vin, body)
    return FlybyGeometry(
        v_in_rel=vi, v_out_rel=np.array([vox, voy, voz]),
        eta=float(eta), h_norm=float(h_norm), beta=beta,
        gamma=math.pi - 2.0 * beta, n_plane=n_plane)
