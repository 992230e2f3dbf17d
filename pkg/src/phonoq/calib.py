"""Y-factor gain and attenuation calibration from Johnson-Nyquist noise.

A matched 50-ohm load at temperature T delivers the noise power

    P_R = dF * (h f / 2) * coth(h f / (2 kB T))        (full form)
        ~ dF * kB T                                    (classical limit)

into the output line (the matched-load voltage divider costs the familiar
factor of four relative to the open-circuit value, and the 1/2 term carries
the zero-point fluctuations).  The spectrum analyzer then sees

    P_out(f) = G(f) [ h f dF N_sys(f) + P_R(f) ],

so sweeping the load temperature and fitting a line to P_out vs P_R yields
the gain G(f) from the slope and the added noise quanta N_sys(f) from the
intercept.  Subtracting the gain from a through-transmission measurement
gives the input-line attenuation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.constants import h, k as k_B

from .units import linear_to_db


@dataclass(frozen=True)
class NoiseSweep:
    """Output noise power vs (load temperature, frequency).

    spectra has shape (n_temperatures, n_frequencies) in watts; delta_f is
    the resolution bandwidth.
    """

    temperatures: np.ndarray
    frequencies: np.ndarray
    spectra: np.ndarray
    delta_f: float

    def __post_init__(self):
        object.__setattr__(self, "temperatures", np.asarray(self.temperatures, dtype=float))
        object.__setattr__(self, "frequencies", np.asarray(self.frequencies, dtype=float))
        object.__setattr__(self, "spectra", np.asarray(self.spectra, dtype=float))
        if self.temperatures.size < 2:
            raise ValueError("need >= 2 load temperatures")
        if self.spectra.shape != (self.temperatures.size, self.frequencies.size):
            raise ValueError("spectra must be (n_temperatures, n_frequencies)")
        if np.any(self.spectra <= 0) or self.delta_f <= 0:
            raise ValueError("powers and bandwidth must be positive")


def johnson_noise_power(t, delta_f: float, f, form: str = "full"):
    """Matched-load Johnson-Nyquist noise power in bandwidth delta_f."""
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    if np.any(t <= 0) or np.any(f <= 0) or delta_f <= 0:
        raise ValueError("temperature, frequency and bandwidth must be positive")
    if form == "classical":
        return delta_f * k_B * t
    if form == "full":
        return delta_f * (h * f / 2.0) / np.tanh(h * f / (2.0 * k_B * t))
    raise ValueError("form must be 'full' or 'classical'")


@dataclass
class GainResult:
    """Per-frequency gain, added noise, and (optionally) input attenuation."""

    frequencies: np.ndarray
    gain: np.ndarray            # linear power ratio
    n_sys: np.ndarray           # added noise quanta
    gain_sigma: np.ndarray
    attenuation_db: Optional[np.ndarray] = None

    @property
    def gain_db(self) -> np.ndarray:
        return linear_to_db(self.gain)


def gain_from_noise_sweep(sweep: NoiseSweep, form: str = "full") -> GainResult:
    """Per-frequency linear fit of P_out vs P_R: slope = G, intercept -> N_sys."""
    p_r = johnson_noise_power(sweep.temperatures[:, None], sweep.delta_f,
                              sweep.frequencies[None, :], form=form)
    span = p_r.max(axis=0) / p_r.min(axis=0)
    if np.any(span < 3.0):
        raise ValueError("temperature sweep spans less than a factor 3 in noise power")

    n_f = sweep.frequencies.size
    gain = np.empty(n_f)
    n_sys = np.empty(n_f)
    gain_sigma = np.empty(n_f)
    for j in range(n_f):
        a = np.column_stack([p_r[:, j], np.ones_like(p_r[:, j])])
        coef, res_ss, *_ = np.linalg.lstsq(a, sweep.spectra[:, j], rcond=None)
        slope, intercept = coef
        if slope <= 0:
            raise ValueError(f"negative fitted gain at {sweep.frequencies[j]:.4g} Hz")
        gain[j] = slope
        n_sys[j] = intercept / (slope * h * sweep.frequencies[j] * sweep.delta_f)
        dof = max(p_r.shape[0] - 2, 1)
        chi2 = float(res_ss[0]) if np.size(res_ss) else 0.0
        cov = np.linalg.inv(a.T @ a) * chi2 / dof
        gain_sigma[j] = math.sqrt(max(cov[0, 0], 0.0))
    return GainResult(frequencies=sweep.frequencies.copy(), gain=gain,
                      n_sys=n_sys, gain_sigma=gain_sigma)


def attenuation_from_transmission(s21_freq, s21_db, gain_freq, gain_db):
    """Input-line attenuation: gain minus total transmission, in dB.

    The gain curve is interpolated onto the s21 grid; frequencies outside the
    measured gain band raise.
    """
    s21_freq = np.asarray(s21_freq, dtype=float)
    s21_db = np.asarray(s21_db, dtype=float)
    gain_freq = np.asarray(gain_freq, dtype=float)
    gain_db = np.asarray(gain_db, dtype=float)
    if s21_freq.min() < gain_freq.min() or s21_freq.max() > gain_freq.max():
        raise ValueError("s21 grid extends beyond the calibrated gain band")
    gain_on_s21 = np.interp(s21_freq, gain_freq, gain_db)
    return gain_on_s21 - s21_db
