"""Scenario geometry: link distances, arrival/departure angles and pathloss.

The transmitter, receiver and the two surfaces sit at ``(0, d1, dH)``,
``(d2, d1, 0)``, ``(0, 0, dH)`` and ``(d2, 0, 0)``. RIS 1 and RIS 2 are
rotated by pi/4 and 3pi/4 about the vertical axis. Distances and angles are
the closed forms tabulated for this layout.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import DomainError, check_positive

LINKS = ("H1", "H2", "G1", "G2", "D")

PATHLOSS_REF_DB = 35.6
PATHLOSS_EXPONENT_DB = 22.0


def wrap_angle(x):
    """Map an angle onto (-pi, pi]."""
    y = np.mod(x + np.pi, 2.0 * np.pi) - np.pi
    return float(np.pi) if y == -np.pi else float(y)


@dataclass(frozen=True)
class LinkGeometry:
    """Distance and angles of one line-of-sight path.

    ``aoa_*`` refer to the receiving end of the link (matrix rows),
    ``aod_*`` to the transmitting end (matrix columns). Elevation is zero
    on ends that are linear arrays.
    """

    distance: float
    aoa_azimuth: float
    aoa_elevation: float
    aod_azimuth: float
    aod_elevation: float


@dataclass(frozen=True)
class ScenarioLayout:
    d1: float
    d2: float
    dH: float
    links: dict

    def __getitem__(self, link):
        return self.links[link]

    def distance(self, link):
        return self.links[link].distance


def build_scenario(d1, d2, dH=0.0):
    """Evaluate every distance and angle of the two-surface layout.

    Parameters
    ----------
    d1, d2 : float
        Horizontal offsets in meters, both strictly positive.
    dH : float
        Height of transmitter and RIS 1 above the receiver plane; 0 gives a
        coplanar layout with all elevations equal to zero.

    Returns
    -------
    ScenarioLayout
    """
    d1 = check_positive(d1, "d1")
    d2 = check_positive(d2, "d2")
    dH = check_positive(dH, "dH", strict=False)

    w = wrap_angle
    quarter = np.pi / 4
    links = {
        "H1": LinkGeometry(d1, w(quarter), 0.0, w(np.pi / 2), 0.0),
        "H2": LinkGeometry(
            float(np.sqrt(d1**2 + d2**2)),
            w(quarter - np.arctan(d2 / d1)), 0.0,
            w(np.arctan(d1 / d2)), 0.0,
        ),
        "G1": LinkGeometry(
            float(np.sqrt(d1**2 + d2**2 + dH**2)),
            w(np.arctan(d2 / d1)), 0.0,
            w(np.arctan(d1 / d2)), w(np.arctan(dH / np.sqrt(d1**2 + d2**2))),
        ),
        "G2": LinkGeometry(
            float(np.sqrt(d1**2 + dH**2)),
            0.0, 0.0,
            w(quarter), w(np.arctan(dH / d1)),
        ),
        "D": LinkGeometry(d2, w(quarter), 0.0, w(quarter), 0.0),
    }
    return ScenarioLayout(d1, d2, dH, links)


def pathloss_db(d):
    """Large-scale loss ``35.6 + 22 log10(d)`` in dB, valid for d >= 1 m."""
    d = np.asarray(d, dtype=float)
    if np.any(~np.isfinite(d)) or np.any(d < 1.0):
        raise DomainError(f"pathloss model needs d >= 1 m, got {d}")
    out = PATHLOSS_REF_DB + PATHLOSS_EXPONENT_DB * np.log10(d)
    return float(out) if out.ndim == 0 else out


def pathloss_linear(d):
    """Linear power gain ``10**(-pathloss_db(d)/10)``."""
    return 10.0 ** (-pathloss_db(d) / 10.0)


def dbm_to_watts(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)
