"""Analytical planetary ephemerides from mean Keplerian elements.

A body catalog carries heliocentric mean elements at a reference epoch
plus linear secular rates; states at arbitrary epochs follow from solving
Kepler's equation on the drifted elements. Epochs are MJD2000: days
elapsed since 2000-01-01 00:00.

The shipped catalog (``data/solar_system.json``) holds Mercury through
Pluto (J2000 mean elements and per-day secular rates) plus comet 67P and
asteroid (10302) 1989 ML with fixed osculating elements.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from importlib import resources
from pathlib import Path

import numpy as np

from . import _kernels

DAY_S = 86400.0
_MJD2000_BASE = datetime(2000, 1, 1)

_ELEMENT_KEYS = ("a_km", "e", "i_rad", "raan_rad", "argp_rad", "M0_rad")


class CatalogError(ValueError):
    """Raised for malformed or non-physical catalog data."""


class EphemerisError(RuntimeError):
    """Raised when a body state cannot be evaluated."""


def mjd2000_from_datetime(dt: datetime) -> float:
    return (dt - _MJD2000_BASE).total_seconds() / DAY_S


def datetime_from_mjd2000(t: float) -> datetime:
    return _MJD2000_BASE + timedelta(days=t)


def format_date(t: float) -> str:
    """Render an MJD2000 epoch as DD/MM/YY."""
    return datetime_from_mjd2000(t).strftime("%d/%m/%y")


@dataclass(frozen=True)
class KeplerElements:
    """Heliocentric mean elements at a reference epoch.

    ``rates`` holds per-day linear drifts in the same element order
    (a, e, i, raan, argp, M0). The M0 rate is the secular excess on top
    of the two-body mean motion implied by ``a``; zero rates therefore
    leave pure Keplerian motion, not a frozen body.
    """

    a_km: float
    e: float
    i_rad: float
    raan_rad: float
    argp_rad: float
    M0_rad: float
    epoch_mjd2000: float
    rates: tuple[float, float, float, float, float, float] = (
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.e < 0.0:
            raise CatalogError(f"negative eccentricity {self.e}")
        if self.e < 1.0 and self.a_km <= 0.0:
            raise CatalogError(f"non-positive semi-major axis {self.a_km}")


@dataclass(frozen=True)
class Body:
    id: int
    name: str
    mu_km3s2: float
    radius_km: float
    min_altitude_km: float
    elements: KeplerElements

    def __post_init__(self):
        if self.mu_km3s2 <= 0.0:
            raise CatalogError(f"{self.name}: non-positive mu")
        if self.radius_km <= 0.0:
            raise CatalogError(f"{self.name}: non-positive radius")


@dataclass(frozen=True)
class CartesianState:
    """Heliocentric position (km) and velocity (km/s) at an epoch."""

    r: np.ndarray
    v: np.ndarray
    epoch: float


@dataclass
class BodyCatalog:
    bodies: dict[int, Body]
    central_mu: float
    _pack: tuple = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.bodies)

    def __contains__(self, bid: int) -> bool:
        return bid in self.bodies

    def body(self, bid: int) -> Body:
        try:
            return self.bodies[bid]
        except KeyError:
            raise KeyError(f"unknown body id {bid}") from None

    def period_days(self, bid: int) -> float:
        a = self.body(bid).elements.a_km
        return 2.0 * math.pi * math.sqrt(a ** 3 / self.central_mu) / DAY_S

    def pack(self):
        """Arrays indexed by body id for the compiled kernels."""
        if self._pack is None:
            nid = max(self.bodies)
            mu = np.zeros(nid + 1)
            radius = np.zeros(nid + 1)
            el0 = np.zeros((nid + 1, 6))
            el_rate = np.zeros((nid + 1, 6))
            el_n0 = np.zeros(nid + 1)
            el_epoch = np.zeros(nid + 1)
            for bid, body in self.bodies.items():
                el = body.elements
                mu[bid] = body.mu_km3s2
                radius[bid] = body.radius_km
                el0[bid] = (el.a_km, el.e, el.i_rad, el.raan_rad,
                            el.argp_rad, el.M0_rad)
                el_rate[bid] = el.rates
                el_n0[bid] = math.sqrt(self.central_mu / el.a_km ** 3) * DAY_S
                el_epoch[bid] = el.epoch_mjd2000
            self._pack = (self.central_mu, mu, radius, el0, el_rate,
                          el_n0, el_epoch)
        return self._pack

    def with_zero_rates(self) -> "BodyCatalog":
        """Copy of the catalog with all secular rates zeroed."""
        zeroed = {}
        for bid, body in self.bodies.items():
            el = body.elements
            zeroed[bid] = Body(
                body.id, body.name, body.mu_km3s2, body.radius_km,
                body.min_altitude_km,
                KeplerElements(el.a_km, el.e, el.i_rad, el.raan_rad,
                               el.argp_rad, el.M0_rad, el.epoch_mjd2000))
        return BodyCatalog(zeroed, self.central_mu)


def body_state(catalog: BodyCatalog, bid: int, epoch: float) -> CartesianState:
    """Heliocentric state of a catalog body at an MJD2000 epoch."""
    if bid not in catalog:
        raise KeyError(f"unknown body id {bid}")
    mu_sun, _, _, el0, el_rate, el_n0, el_epoch = catalog.pack()
    rx, ry, rz, vx, vy, vz, ok = _kernels.ephem_state(
        bid, float(epoch), mu_sun, el0, el_rate, el_n0, el_epoch)
    if not ok:
        raise EphemerisError(
            f"Kepler solve failed for body {bid} at epoch {epoch}")
    return CartesianState(np.array([rx, ry, rz]), np.array([vx, vy, vz]),
                          float(epoch))


def _parse_elements(raw: dict, where: str) -> KeplerElements:
    missing = [k for k in _ELEMENT_KEYS + ("epoch_mjd2000",) if k not in raw]
    if missing:
        raise CatalogError(f"{where}: missing element fields {missing}")
    rates_raw = raw.get("rates", {})
    rates = tuple(float(rates_raw.get(k, 0.0)) for k in _ELEMENT_KEYS)
    return KeplerElements(
        a_km=float(raw["a_km"]), e=float(raw["e"]),
        i_rad=float(raw["i_rad"]), raan_rad=float(raw["raan_rad"]),
        argp_rad=float(raw["argp_rad"]), M0_rad=float(raw["M0_rad"]),
        epoch_mjd2000=float(raw["epoch_mjd2000"]), rates=rates)


def load_catalog(source) -> BodyCatalog:
    """Build a validated catalog from JSON text, a path, or a parsed dict.

    Rejects duplicate ids and non-physical values (mu <= 0, e < 0,
    radius <= 0).
    """
    if isinstance(source, BodyCatalog):
        return source
    if isinstance(source, dict):
        raw = source
    else:
        text = None
        if isinstance(source, Path):
            text = source.read_text()
        elif isinstance(source, str):
            stripped = source.lstrip()
            if stripped.startswith("{"):
                text = source
            else:
                text = Path(source).read_text()
        else:
            text = source.read()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CatalogError(f"catalog is not valid JSON: {exc}") from exc

    if "central_mu_km3s2" not in raw:
        raise CatalogError("catalog missing central_mu_km3s2")
    central_mu = float(raw["central_mu_km3s2"])
    if central_mu <= 0.0:
        raise CatalogError("central_mu_km3s2 must be positive")
    bodies: dict[int, Body] = {}
    for entry in raw.get("bodies", []):
        try:
            bid = int(entry["id"])
            name = str(entry["name"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CatalogError(f"malformed body entry: {entry}") from exc
        if bid in bodies:
            raise CatalogError(f"duplicate body id {bid}")
        body = Body(
            id=bid, name=name,
            mu_km3s2=float(entry["mu_km3s2"]),
            radius_km=float(entry["radius_km"]),
            min_altitude_km=float(entry.get("min_altitude_km", 0.0)),
            elements=_parse_elements(entry["elements"], name))
        bodies[bid] = body
    if not bodies:
        raise CatalogError("catalog holds no bodies")
    return BodyCatalog(bodies, central_mu)


def default_catalog() -> BodyCatalog:
    """The shipped Mercury-to-Pluto + 67P + 1989ML catalog."""
    text = (resources.files("swingby") / "data" / "solar_system.json"
            ).read_text()
    return load_catalog(text)
