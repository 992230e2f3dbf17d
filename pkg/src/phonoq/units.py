"""Unit conversions used at the package boundaries.

Everything internal is SI: frequencies in Hz at interfaces, angular rates in
rad/s, powers in W, energies in J.  dBm, dB and eV only appear here.
"""

import numpy as np

EV = 1.602176634e-19  # J per eV


def dbm_to_watt(p_dbm):
    """Convert power from dBm to W."""
    return 1e-3 * 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)


def watt_to_dbm(p_watt):
    """Convert power from W to dBm."""
    return 10.0 * np.log10(np.asarray(p_watt, dtype=float) / 1e-3)


def db_to_linear(x_db):
    """Power ratio from dB."""
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x):
    """Power ratio to dB."""
    return 10.0 * np.log10(np.asarray(x, dtype=float))


def ev_to_joule(e_ev):
    return np.asarray(e_ev, dtype=float) * EV


def joule_to_ev(e_j):
    return np.asarray(e_j, dtype=float) / EV
