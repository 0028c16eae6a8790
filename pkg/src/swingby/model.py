"""Multiple gravity-assist trajectory model and objective.

A problem fixes a body sequence (ids may be left free per slot), box
bounds on the solution vector, the launch parameterization and the
objective mode. Decoding a vector walks the legs: launch (parameterized
asymptote or a plain Lambert first leg), coast to the deep space maneuver
at fraction eps of the leg, Lambert to the next body, then an unpowered
flyby into the following leg. The objective is launch + maneuvers +
arrival relative speed, with decode failures and arrival-speed
constraint violations mapped to finite additive penalties
(1e4 km/s + 100 km/s per km/s of violation) so the search objective
stays total.

Solution vector layout (fixed sequence, parameterized launch):

    [vinf, alpha, delta, t0, T1, eps1, eta1, h1, ..., T_{N-1}, eps_{N-1}]

with free-sequence problems prepending one integer id per free slot. In
lambert-first-leg mode the launch block shrinks to [t0, T1] and leg one
carries no maneuver.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import _kernels
from .astro import FlybyGeometry, flyby_outgoing
from .ephemeris import BodyCatalog, format_date, load_catalog

PENALTY = _kernels.PENALTY

TWO_PI = 2.0 * math.pi
_DEF_ALPHA = (-math.pi, math.pi)
_DEF_DELTA = (0.0, math.pi)
_DEF_ETA = (-math.pi, math.pi)

LAUNCH_MODES = ("parameterized-asymptote", "lambert-first-leg")
OBJECTIVE_MODES = ("total-with-launch", "fixed-launch")


class ProblemError(ValueError):
    """Raised for malformed or inconsistent problem definitions."""


def launch_asymptote(v_inf: float, alpha: float, delta: float) -> np.ndarray:
    """Escape asymptote vector from magnitude, right ascension, declination.

    Components are v_inf (sin d cos a, sin d sin a, cos d); delta acts as
    the polar angle from +z, so delta in [0, pi] covers the full sphere.
    """
    if v_inf < 0.0:
        raise ValueError("v_inf must be non-negative")
    sd = math.sin(delta)
    return np.array([v_inf * sd * math.cos(alpha),
                     v_inf * sd * math.sin(alpha),
                     v_inf * math.cos(delta)])


@dataclass(frozen=True)
class Leg:
    """One phase: departure body to target body with one mid-course burn."""

    body_from: int
    body_to: int
    t_start: float
    tof_days: float
    eps: float
    r_start: np.ndarray
    v_start: np.ndarray
    dsm_epoch: float
    dsm_pos: np.ndarray
    dsm_dv: np.ndarray
    dsm_kms: float


@dataclass(frozen=True)
class FlybyRecord:
    body: int
    epoch: float
    geometry: FlybyGeometry
    altitude_km: float


@dataclass(frozen=True)
class Trajectory:
    legs: list[Leg]
    flybys: list[FlybyRecord]
    dv_launch: float
    dv_arrival: float
    total_objective: float
    status: int
    sequence: list[int]

    @property
    def feasible(self) -> bool:
        return self.status == _kernels.STATUS_OK

    @property
    def dv_deterministic(self) -> float:
        return sum(leg.dsm_kms for leg in self.legs)


class MgaProblem:
    """Validated search definition bound to a body catalog."""

    def __init__(self, catalog: BodyCatalog, sequence, launch_mode: str,
                 objective_mode: str, bounds: dict,
                 fixed_vinf_kms: float | None = None,
                 arrival_constraint: dict | None = None,
                 name: str = "problem", optimizer_defaults: dict | None = None):
        if launch_mode not in LAUNCH_MODES:
            raise ProblemError(f"unknown launch_mode {launch_mode!r}")
        if objective_mode not in OBJECTIVE_MODES:
            raise ProblemError(f"unknown objective_mode {objective_mode!r}")
        if objective_mode == "fixed-launch":
            if launch_mode != "parameterized-asymptote":
                raise ProblemError(
                    "fixed-launch objective requires the parameterized "
                    "launch model")
            if fixed_vinf_kms is None or fixed_vinf_kms <= 0.0:
                raise ProblemError(
                    "fixed-launch objective requires fixed_vinf_kms > 0")

        self.catalog = catalog
        self.launch_mode = launch_mode
        self.objective_mode = objective_mode
        self.fixed_vinf = fixed_vinf_kms
        self.arrival_constraint = dict(arrival_constraint or {})
        self.name = name
        self.optimizer_defaults = dict(optimizer_defaults or {})

        self._parse_sequence(sequence)
        self._build_layout()
        self._assemble_bounds(bounds)
        self._validate()

        arr_mode = 0
        arr_val = 0.0
        if "min_vinf" in self.arrival_constraint:
            arr_mode, arr_val = 1, float(self.arrival_constraint["min_vinf"])
        elif "max_vinf" in self.arrival_constraint:
            arr_mode, arr_val = 2, float(self.arrival_constraint["max_vinf"])
        if len(self.arrival_constraint) > 1:
            raise ProblemError("arrival_constraint takes one of "
                               "min_vinf | max_vinf")
        self._arr = (arr_mode, arr_val)
        obj_mode = 0 if objective_mode == "total-with-launch" else 1
        self._kernel_args = (
            self._seq_fixed, self._head_idx, self._idx_launch,
            self._idx_t, self._idx_eps, self._idx_eta, self._idx_h,
            obj_mode, arr_mode, arr_val) + catalog.pack()

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------
    def _parse_sequence(self, sequence):
        if isinstance(sequence, dict):
            try:
                free = sequence["free"]
                dep = int(free["departure"])
                arr = int(free["arrival"])
                id_bounds = [(int(lo), int(hi)) for lo, hi
                             in free["id_bounds"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise ProblemError(f"malformed free sequence: {sequence}"
                                   ) from exc
            nslots = int(free.get("slots", len(id_bounds)))
            if nslots != len(id_bounds):
                raise ProblemError("free sequence slots != len(id_bounds)")
            self.sequence = [dep] + [None] * nslots + [arr]
            self.slot_bounds = id_bounds
        else:
            self.sequence = [int(b) for b in sequence]
            self.slot_bounds = []
        if len(self.sequence) < 2:
            raise ProblemError("sequence needs at least two bodies")
        self.n_bodies = len(self.sequence)
        self.n_legs = self.n_bodies - 1
        self.n_flybys = self.n_bodies - 2

    def _build_layout(self):
        npl = self.n_bodies
        self._seq_fixed = np.array(
            [-1 if b is None else b for b in self.sequence], dtype=np.int64)
        self._head_idx = np.full(npl, -1, dtype=np.int64)
        names: list[str] = []
        pos = 0
        for s, b in enumerate(self.sequence):
            if b is None:
                self._head_idx[s] = pos
                names.append(f"p{s}")
                pos += 1
        self.n_head = pos

        self._idx_launch = np.full(4, -1, dtype=np.int64)
        self._idx_t = np.full(self.n_legs, -1, dtype=np.int64)
        self._idx_eps = np.full(self.n_legs, -1, dtype=np.int64)
        self._idx_eta = np.full(max(self.n_flybys, 1), -1, dtype=np.int64)
        self._idx_h = np.full(max(self.n_flybys, 1), -1, dtype=np.int64)

        if self.launch_mode == "parameterized-asymptote":
            self._idx_launch[:] = (pos, pos + 1, pos + 2, pos + 3)
            names += ["vinf", "alpha", "delta", "t0"]
            pos += 4
            for k in range(self.n_legs):
                self._idx_t[k] = pos
                self._idx_eps[k] = pos + 1
                names += [f"T{k + 1}", f"eps{k + 1}"]
                pos += 2
                if k < self.n_flybys:
                    self._idx_eta[k] = pos
                    self._idx_h[k] = pos + 1
                    names += [f"eta{k + 1}", f"h{k + 1}"]
                    pos += 2
        else:
            self._idx_launch[3] = pos
            self._idx_t[0] = pos + 1
            names += ["t0", "T1"]
            pos += 2
            for k in range(1, self.n_legs):
                self._idx_eta[k - 1] = pos
                self._idx_h[k - 1] = pos + 1
                self._idx_t[k] = pos + 2
                self._idx_eps[k] = pos + 3
                names += [f"eta{k}", f"h{k}", f"T{k + 1}", f"eps{k + 1}"]
                pos += 4
        self.n_vars = pos
        self.names = names

    def _assemble_bounds(self, bounds: dict):
        lower = np.empty(self.n_vars)
        upper = np.empty(self.n_vars)
        mask = np.zeros(self.n_vars, dtype=bool)

        def pair(key, default=None):
            val = bounds.get(key, default)
            if val is None:
                raise ProblemError(f"bounds missing {key!r}")
            return float(val[0]), float(val[1])

        for s, (lo, hi) in enumerate(self.slot_bounds):
            i = self._head_idx[np.where(self._seq_fixed < 0)[0][s]]
            lower[i], upper[i] = lo, hi
            mask[i] = True

        if self.launch_mode == "parameterized-asymptote":
            if self.objective_mode == "fixed-launch":
                v = float(self.fixed_vinf)
                lower[self._idx_launch[0]] = v
                upper[self._idx_launch[0]] = v
            else:
                lo, hi = pair("vinf")
                lower[self._idx_launch[0]] = lo
                upper[self._idx_launch[0]] = hi
            for key, idx, default in (("alpha", 1, _DEF_ALPHA),
                                      ("delta", 2, _DEF_DELTA)):
                lo, hi = pair(key, default)
                lower[self._idx_launch[idx]] = lo
                upper[self._idx_launch[idx]] = hi
        lo, hi = pair("t0")
        lower[self._idx_launch[3]], upper[self._idx_launch[3]] = lo, hi

        tofs = bounds.get("tof")
        if tofs is None or len(tofs) != self.n_legs:
            raise ProblemError(
                f"bounds['tof'] needs {self.n_legs} [lo, hi] pairs")
        n_eps = int(np.sum(self._idx_eps >= 0))
        eps = bounds.get("eps") or []
        if len(eps) != n_eps:
            raise ProblemError(
                f"bounds['eps'] needs {n_eps} [lo, hi] pairs")
        etas = bounds.get("eta", [_DEF_ETA] * self.n_flybys)
        hs = bounds.get("h")
        if self.n_flybys and (hs is None or len(hs) != self.n_flybys):
            raise ProblemError(
                f"bounds['h'] needs {self.n_flybys} [lo, hi] pairs")
        if len(etas) != self.n_flybys:
            raise ProblemError(
                f"bounds['eta'] needs {self.n_flybys} [lo, hi] pairs")

        eps_count = 0
        for k in range(self.n_legs):
            lower[self._idx_t[k]] = float(tofs[k][0])
            upper[self._idx_t[k]] = float(tofs[k][1])
            if self._idx_eps[k] >= 0:
                lower[self._idx_eps[k]] = float(eps[eps_count][0])
                upper[self._idx_eps[k]] = float(eps[eps_count][1])
                eps_count += 1
            if k < self.n_flybys:
                lower[self._idx_eta[k]] = float(etas[k][0])
                upper[self._idx_eta[k]] = float(etas[k][1])
                lower[self._idx_h[k]] = float(hs[k][0])
                upper[self._idx_h[k]] = float(hs[k][1])

        self.lower = lower
        self.upper = upper
        self.integer_mask = mask

    def _validate(self):
        cat = self.catalog
        for s, b in enumerate(self.sequence):
            if b is not None and b not in cat:
                raise ProblemError(f"sequence body {b} not in catalog")
        for lo, hi in self.slot_bounds:
            for bid in range(lo, hi + 1):
                if bid not in cat:
                    raise ProblemError(
                        f"free-slot id range [{lo}, {hi}] not contiguous "
                        f"in catalog (missing {bid})")

        pin = (self._idx_launch[0]
               if self.objective_mode == "fixed-launch" else -1)
        for i in range(self.n_vars):
            if not self.lower[i] <= self.upper[i]:
                raise ProblemError(
                    f"bounds for {self.names[i]} reversed: "
                    f"[{self.lower[i]}, {self.upper[i]}]")
            if self.lower[i] == self.upper[i] and i != pin:
                raise ProblemError(
                    f"bounds for {self.names[i]} are degenerate")

        for k in range(self.n_legs):
            if self.lower[self._idx_t[k]] <= 0.0:
                raise ProblemError(f"T{k + 1} lower bound must be positive")
            if self._idx_eps[k] >= 0:
                lo = self.lower[self._idx_eps[k]]
                hi = self.upper[self._idx_eps[k]]
                if lo < 0.0 or hi > 1.0:
                    raise ProblemError(
                        f"eps{k + 1} bounds must lie inside [0, 1]")

        # Flyby altitude floors: lower bound of each normalized altitude
        # may not dip below the body's minimum over every admissible id.
        for k in range(self.n_flybys):
            slot = k + 1
            if self.sequence[slot] is not None:
                ids = [self.sequence[slot]]
            else:
                free_pos = [s for s, b in enumerate(self.sequence)
                            if b is None].index(slot)
                lo, hi = self.slot_bounds[free_pos]
                ids = list(range(lo, hi + 1))
            floor = max(cat.body(b).min_altitude_km / cat.body(b).radius_km
                        for b in ids)
            if self.lower[self._idx_h[k]] < floor - 1.0e-12:
                raise ProblemError(
                    f"h{k + 1} lower bound {self.lower[self._idx_h[k]]} "
                    f"below minimum altitude ratio {floor:.6f}")

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------
    def _scratch(self):
        nleg = self.n_legs
        nfly = max(self.n_flybys, 1)
        npl = self.n_bodies
        return (np.empty(nleg), np.empty(nleg), np.empty(nleg),
                np.empty((nleg, 3)), np.empty((nleg, 3)),
                np.empty((nfly, 3)), np.empty((nfly, 3)),
                np.empty((npl, 3)), np.empty((npl, 3)), np.empty(3))

    def objective(self, y) -> float:
        """Total delta-v objective for one solution vector (km/s)."""
        y = np.ascontiguousarray(y, dtype=float)
        f, _, _, _, _ = _kernels.traj_eval(y, *self._kernel_args,
                                           *self._scratch())
        return float(f)

    def evaluate_many(self, ys) -> np.ndarray:
        """Objective for each row of ys; identical bits to objective()."""
        ys = np.ascontiguousarray(ys, dtype=float)
        out = np.empty(ys.shape[0])
        _kernels.eval_batch(ys, *self._kernel_args, out)
        return out

    def resolve_sequence(self, y) -> list[int]:
        ids = []
        nid = max(self.catalog.bodies)
        for s, b in enumerate(self.sequence):
            if b is not None:
                ids.append(b)
            else:
                bid = int(round(float(y[self._head_idx[s]])))
                ids.append(min(max(bid, 1), nid))
        return ids

    def decode(self, y) -> Trajectory:
        """Full trajectory record for one solution vector."""
        y = np.ascontiguousarray(y, dtype=float)
        scratch = self._scratch()
        (dsm_mag, dsm_epoch, tof_days, dsm_pos, dsm_vec,
         fly_vin, fly_vout, body_r, body_v, dep_v) = scratch
        f, vinf0, vinf_arr, status, legs_done = _kernels.traj_eval(
            y, *self._kernel_args, *scratch)

        ids = self.resolve_sequence(y)
        t0 = float(y[self._idx_launch[3]])
        legs: list[Leg] = []
        flybys: list[FlybyRecord] = []
        t = t0
        for k in range(min(legs_done, self.n_legs)):
            eps = float(y[self._idx_eps[k]]) if self._idx_eps[k] >= 0 else 0.0
            if k == 0:
                v_start = dep_v.copy()
            else:
                v_start = body_v[k] + fly_vout[k - 1]
            legs.append(Leg(
                body_from=ids[k], body_to=ids[k + 1], t_start=t,
                tof_days=float(tof_days[k]), eps=eps,
                r_start=body_r[k].copy(), v_start=v_start,
                dsm_epoch=float(dsm_epoch[k]), dsm_pos=dsm_pos[k].copy(),
                dsm_dv=dsm_vec[k].copy(), dsm_kms=float(dsm_mag[k])))
            t += float(tof_days[k])
            flyby_failed = (status == _kernels.STATUS_FLYBY
                            and legs_done == k + 1)
            if k < self.n_flybys and not flyby_failed:
                body = self.catalog.body(ids[k + 1])
                geom = flyby_outgoing(
                    fly_vin[k].copy(), body_v[k + 1].copy(),
                    float(y[self._idx_eta[k]]), float(y[self._idx_h[k]]),
                    body)
                flybys.append(FlybyRecord(
                    body=ids[k + 1], epoch=t, geometry=geom,
                    altitude_km=float(y[self._idx_h[k]]) * body.radius_km))
        return Trajectory(legs=legs, flybys=flybys, dv_launch=float(vinf0),
                          dv_arrival=float(vinf_arr),
                          total_objective=float(f), status=int(status),
                          sequence=ids)

    def summarize(self, y, f: float | None = None) -> dict:
        """Per-leg breakdown of a solution for archives and reports."""
        traj = self.decode(y)
        t0 = float(np.asarray(y, dtype=float)[self._idx_launch[3]])
        names = {b.id: b.name for b in self.catalog.bodies.values()}
        return {
            "t0_mjd2000": t0,
            "launch_date": format_date(t0),
            "sequence": traj.sequence,
            "sequence_names": [names.get(b, str(b)) for b in traj.sequence],
            "vinf0_kms": traj.dv_launch,
            "legs": [{
                "from": leg.body_from, "to": leg.body_to,
                "tof_days": leg.tof_days, "dsm_kms": leg.dsm_kms,
                "dsm_epoch_mjd2000": leg.dsm_epoch, "eps": leg.eps,
            } for leg in traj.legs],
            "tof_days": float(sum(leg.tof_days for leg in traj.legs)),
            "arrival_vinf_kms": traj.dv_arrival,
            "dsm_total_kms": traj.dv_deterministic,
            "total_kms": float(f) if f is not None else traj.total_objective,
            "feasible": traj.feasible,
        }


# ----------------------------------------------------------------------
# direct transfer sub-models
# ----------------------------------------------------------------------
def two_impulse_cost(catalog: BodyCatalog, t0: float, tof_days: float,
                     p1: int, p2: int) -> float:
    """Departure plus arrival delta-v of a direct Lambert transfer."""
    if tof_days <= 0.0:
        raise ValueError("tof_days must be positive")
    mu_sun, _, _, el0, el_rate, el_n0, el_epoch = catalog.pack()
    return float(_kernels.two_impulse(
        float(t0), float(tof_days), int(p1), int(p2),
        mu_sun, el0, el_rate, el_n0, el_epoch))


def three_impulse_cost(catalog: BodyCatalog, t0: float, eps: float,
                       tof_days: float, p1: int, p2: int,
                       dv1_kms: float = 0.0) -> float:
    """Three-impulse transfer cost with the mid-course burn at eps*tof.

    dv1_kms > 0 applies the departure burn along the departure planet's
    velocity; dv1_kms = 0 reduces leg one to a ballistic coast.
    """
    if tof_days <= 0.0:
        raise ValueError("tof_days must be positive")
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    mu_sun, _, _, el0, el_rate, el_n0, el_epoch = catalog.pack()
    mode = 1 if dv1_kms != 0.0 else 0
    return float(_kernels.three_impulse(
        float(t0), float(eps), float(tof_days), int(p1), int(p2),
        mode, float(dv1_kms), mu_sun, el0, el_rate, el_n0, el_epoch))


def grid_scan(catalog: BodyCatalog, p1: int, p2: int,
              t0_range, tof_range, n_t0: int, n_tof: int,
              mode: str = "two", eps_sweep=None, dv1_kms: float = 0.0):
    """Transfer-cost grid over launch date and time of flight.

    Returns (t0s, tofs, cost) with cost[i, j] at (t0s[i], tofs[j]). In
    "three-optimal-eps" mode each cell carries the minimum of the
    three-impulse cost over the eps sweep (default 0 to 0.95 in 20
    steps).
    """
    if n_t0 < 2 or n_tof < 2:
        raise ValueError("grid needs at least 2 samples per axis")
    if mode not in ("two", "three-optimal-eps"):
        raise ValueError(f"unknown grid mode {mode!r}")
    t0s = np.linspace(float(t0_range[0]), float(t0_range[1]), n_t0)
    tofs = np.linspace(float(tof_range[0]), float(tof_range[1]), n_tof)
    if eps_sweep is None:
        eps_sweep = np.linspace(0.0, 0.95, 20)
    eps_sweep = np.ascontiguousarray(eps_sweep, dtype=float)
    out = np.empty((n_t0, n_tof))
    mu_sun, _, _, el0, el_rate, el_n0, el_epoch = catalog.pack()
    _kernels.scan_grid(
        t0s, tofs, int(p1), int(p2), 0 if mode == "two" else 1,
        eps_sweep, 1 if dv1_kms != 0.0 else 0, float(dv1_kms),
        mu_sun, el0, el_rate, el_n0, el_epoch, out)
    return t0s, tofs, out


# ----------------------------------------------------------------------
# problem files
# ----------------------------------------------------------------------
def _data_path(name: str):
    return resources.files("swingby") / "data" / f"{name}.json"


def load_problem(source, catalog: BodyCatalog | None = None) -> MgaProblem:
    """Load a problem definition from JSON (path, shipped name, or dict).

    The file's ``catalog`` field names either a shipped catalog or a
    path; an explicit ``catalog`` argument overrides it.
    """
    if isinstance(source, dict):
        raw = dict(source)
        name = raw.get("name", "problem")
    else:
        path = Path(source)
        if not path.exists():
            shipped = _data_path(str(source))
            if shipped.is_file():
                raw = json.loads(shipped.read_text())
            else:
                raise ProblemError(f"problem file not found: {source}")
        else:
            try:
                raw = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ProblemError(
                    f"{path}:{exc.lineno}: invalid JSON ({exc.msg})"
                    ) from exc
        name = raw.get("name", Path(str(source)).stem)

    if catalog is None:
        cat_ref = raw.get("catalog", "solar_system")
        if isinstance(cat_ref, str) and not Path(cat_ref).exists():
            shipped = _data_path(cat_ref)
            if shipped.is_file():
                catalog = load_catalog(shipped.read_text())
            else:
                raise ProblemError(f"catalog not found: {cat_ref}")
        else:
            catalog = load_catalog(Path(cat_ref))

    for key in ("sequence", "launch_mode", "objective_mode", "bounds"):
        if key not in raw:
            raise ProblemError(f"problem missing field {key!r}")
    return MgaProblem(
        catalog=catalog,
        sequence=raw["sequence"],
        launch_mode=raw["launch_mode"],
        objective_mode=raw["objective_mode"],
        bounds=raw["bounds"],
        fixed_vinf_kms=raw.get("fixed_vinf_kms"),
        arrival_constraint=raw.get("arrival_constraint"),
        name=name,
        optimizer_defaults=raw.get("optimizer"))
