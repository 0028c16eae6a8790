"""Multiple gravity-assist trajectory design and global search."""

from .astro import (FlybyGeometry, LambertError, PropagationError,
                    Quaternion, beta_angle, flyby_outgoing, lambert,
                    propagate_kepler, rotate)
from .ephemeris import (Body, BodyCatalog, CartesianState, CatalogError,
                        EphemerisError, KeplerElements, body_state,
                        datetime_from_mjd2000, default_catalog, format_date,
                        load_catalog, mjd2000_from_datetime)
from .model import (Leg, MgaProblem, ProblemError, Trajectory, grid_scan,
                    launch_asymptote, load_problem, three_impulse_cost,
                    two_impulse_cost)

__version__ = "0.1.0"

__all__ = [
    "Body", "BodyCatalog", "CartesianState", "CatalogError",
    "EphemerisError", "FlybyGeometry", "KeplerElements", "LambertError",
    "Leg", "MgaProblem", "ProblemError", "PropagationError", "Quaternion",
    "Trajectory", "beta_angle", "body_state", "datetime_from_mjd2000",
    "default_catalog", "flyby_outgoing", "format_date", "grid_scan",
    "lambert", "launch_asymptote", "load_catalog", "load_problem",
    "mjd2000_from_datetime", "propagate_kepler", "rotate",
    "three_impulse_cost", "two_impulse_cost",
]
