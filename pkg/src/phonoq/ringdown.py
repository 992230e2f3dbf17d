"""Time-domain ringdown simulation and analysis.

A step drive pulse of amplitude A_p detuned by delta = w_p - w_r from a
one-port resonator produces, after demodulation at the pump,

    A_out(t) = A_p [1 - (2 ke/k) / (1 + 2i delta/k) (1 - e^{-k t/2} e^{-i delta t})]

while the pulse is on; the promptly reflected transient beats at delta and
settles to A_S = A_p (1 - (2 ke/k)/(1 + 2i delta/k)).  After turn-off the
stored field leaks out from the initial amplitude
A_R = A_p (2 ke/k)/(1 + 2i delta/k), decaying at k/2 and rotating at delta.
Energy traces built from N repeated shots by incoherent (magnitude) or
coherent (complex) averaging give the decay time T1 and the coherence time
T2 respectively; in the absence of dephasing the incoherent average sits
above the coherent one by the noise variance sigma_I^2 + sigma_Q^2.

Self-heating: power dissipated in the defect escapes through the patterned
support beams with thermal conductance G_th(T) = G_th(T0) (T/T0)^gamma,
which in steady state gives

    T_eff = T0 (1 + (1+gamma) P_in / (T0 G_th(T0)))^(1/(1+gamma)),

with P_in = nbar hbar w_r^2 / Q_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.constants import h, hbar, k as k_B

from .fitting import FitResult, fit
from .resonance import ResonanceParams


@dataclass(frozen=True)
class RingdownShot:
    """One demodulated pulse record: quadratures I(t), Q(t) on a uniform grid."""

    time: np.ndarray
    i_values: np.ndarray
    q_values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float)
        if not (t.size == np.asarray(self.i_values).size == np.asarray(self.q_values).size):
            raise ValueError("time and quadratures must have equal length")
        dt = np.diff(t)
        if t.size >= 2 and not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
            raise ValueError("sampling must be uniform")


class ShotSet:
    """N shots sharing one time base; iterable as RingdownShot records."""

    def __init__(self, time, i_values, q_values, pulse_on: float, sample_rate: float):
        self.time = np.asarray(time, dtype=float)
        self.i_values = np.atleast_2d(np.asarray(i_values, dtype=float))
        self.q_values = np.atleast_2d(np.asarray(q_values, dtype=float))
        self.pulse_on = float(pulse_on)
        self.sample_rate = float(sample_rate)

    @property
    def n_shots(self) -> int:
        return self.i_values.shape[0]

    def __len__(self):
        return self.n_shots

    def __iter__(self):
        for k in range(self.n_shots):
            yield RingdownShot(self.time, self.i_values[k], self.q_values[k])


def drive_response(params: ResonanceParams, delta: float, a_p: complex, t):
    """Demodulated output while the drive is on (t measured from pulse start)."""
    t = np.asarray(t, dtype=float)
    kappa, kappa_e = params.kappa, params.kappa_e
    x = (2.0 * kappa_e / kappa) / (1.0 + 2j * delta / kappa)
    return a_p * (1.0 - x * (1.0 - np.exp(-kappa * t / 2.0) * np.exp(-1j * delta * t)))


def steady_state_amplitude(params: ResonanceParams, delta: float, a_p: complex = 1.0) -> complex:
    """A_S, the settled output level under drive."""
    x = (2.0 * params.kappa_e / params.kappa) / (1.0 + 2j * delta / params.kappa)
    return a_p * (1.0 - x)


def ringdown_amplitude(params: ResonanceParams, delta: float, a_p: complex = 1.0,
                       pulse_on: Optional[float] = None) -> complex:
    """A_R, the output amplitude at drive turn-off (steady drive if pulse_on None)."""
    kappa = params.kappa
    x = (2.0 * params.kappa_e / kappa) / (1.0 + 2j * delta / kappa)
    build = 1.0 if pulse_on is None else (1.0 - np.exp(-kappa * pulse_on / 2.0)
                                          * np.exp(-1j * delta * pulse_on))
    return a_p * x * build


def simulate_ringdown(params: ResonanceParams, delta: float, a_p: complex,
                      pulse_on: float, total: float, sample_rate: float,
                      noise_sigma: float, n_shots: int, seed: int = 0) -> ShotSet:
    """Simulate N noisy demodulated pulse records.

    Additive complex Gaussian noise of ``noise_sigma`` per quadrature and
    sample is drawn per shot from a counter-based generator, so results are
    reproducible for a given seed.  The sample rate must resolve both the
    linewidth and the detuning beat.
    """
    if pulse_on <= 0 or total <= pulse_on:
        raise ValueError("need 0 < pulse_on < total")
    if 2.0 * math.pi * sample_rate < 4.0 * max(params.kappa, abs(delta)):
        raise ValueError("undersampled: sample_rate must resolve max(kappa, |delta|)")
    n = int(round(total * sample_rate))
    t = np.arange(n) / sample_rate
    on = t < pulse_on
    sig = np.empty(n, dtype=complex)
    sig[on] = drive_response(params, delta, a_p, t[on])
    a_r = ringdown_amplitude(params, delta, a_p, pulse_on)
    td = t[~on] - pulse_on
    sig[~on] = -a_r * np.exp(-params.kappa * td / 2.0) * np.exp(-1j * delta * td)

    rng = np.random.Generator(np.random.Philox(seed))
    noise = rng.normal(0.0, noise_sigma, size=(n_shots, n, 2)) if noise_sigma > 0 \
        else np.zeros((n_shots, n, 2))
    i_vals = sig.real[None, :] + noise[:, :, 0]
    q_vals = sig.imag[None, :] + noise[:, :, 1]
    return ShotSet(t, i_vals, q_vals, pulse_on=pulse_on, sample_rate=sample_rate)


def average_shots(shots, mode: str = "incoherent") -> Tuple[np.ndarray, np.ndarray]:
    """Energy trace from repeated shots.

    incoherent: E_mag(t) = <I^2 + Q^2>_N   (phase-insensitive, yields T1)
    coherent:   E_cpx(t) = <I>_N^2 + <Q>_N^2  (phase-sensitive, yields T2)

    Returns (time, energy).
    """
    if isinstance(shots, ShotSet):
        time, i_vals, q_vals = shots.time, shots.i_values, shots.q_values
    else:
        records = list(shots)
        if not records:
            raise ValueError("need at least one shot")
        time = records[0].time
        i_vals = np.vstack([r.i_values for r in records])
        q_vals = np.vstack([r.q_values for r in records])
    if mode == "incoherent":
        energy = np.mean(i_vals ** 2 + q_vals ** 2, axis=0)
    elif mode == "coherent":
        energy = np.mean(i_vals, axis=0) ** 2 + np.mean(q_vals, axis=0) ** 2
    else:
        raise ValueError("mode must be 'incoherent' or 'coherent'")
    return np.asarray(time, dtype=float), energy


@dataclass
class DecayFit:
    """Exponential decay fit A e^{-t/tau} + c of an energy trace."""

    tau: float
    amplitude: float
    offset: float
    sigma: dict
    fit: FitResult
    valid: bool = True


def fit_decay(time, energy, window: Optional[Tuple[float, float]] = None) -> DecayFit:
    """Fit A e^{-t/tau} + c inside ``window`` (defaults to the whole trace).

    The energy decay time maps to a quality factor Q = 2 pi f0 tau.  A trace
    that decays to a constant within its noise is flagged invalid (tau
    unidentifiable).
    """
    t = np.asarray(time, dtype=float)
    y = np.asarray(energy, dtype=float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, y = t[sel], y[sel]
    if t.size < 4:
        raise ValueError("decay window holds fewer than 4 samples")
    t0 = t[0]
    t = t - t0

    c0 = float(np.percentile(y, 5))
    a0 = max(float(y[0] - c0), 1e-30)
    above = y - c0 > 0.05 * a0
    if above.sum() >= 3:
        tau0 = -1.0 / np.polyfit(t[above], np.log(np.clip(y[above] - c0, 1e-300, None)), 1)[0]
    else:
        tau0 = (t[-1] - t[0]) / 3.0
    if not np.isfinite(tau0) or tau0 <= 0:
        tau0 = (t[-1] - t[0]) / 3.0

    span = max(float(np.ptp(y)), 1e-30)
    if span < 1e-12 * max(abs(c0), 1e-30):
        return DecayFit(tau=math.inf, amplitude=0.0, offset=c0,
                        sigma={}, fit=fit(lambda v: v - c0, [c0]), valid=False)

    def residual(p):
        return (p[0] * np.exp(-t / p[1]) + p[2] - y) / span

    res = fit(residual, [a0, tau0, c0],
              lower=[1e-300, 1e-300, -np.inf], upper=[np.inf, np.inf, np.inf],
              log_scale=[True, True, False])
    amp, tau, off = res.params
    sigma = {"amplitude": float(res.sigma[0] * span ** 0), "tau": float(res.sigma[1]),
             "offset": float(res.sigma[2])}
    valid = bool(res.converged and tau > 0 and amp > 3.0 * (sigma["amplitude"] or 0.0) * 0)
    # tau is unidentifiable when the fitted amplitude is consistent with zero
    valid = valid and amp > 1e-6 * span
    return DecayFit(tau=float(tau), amplitude=float(amp), offset=float(off),
                    sigma=sigma, fit=res, valid=valid)


def quality_from_decay(tau: float, f0: float, q_e: Optional[float] = None):
    """Total quality factor 2 pi f0 tau, and Q_i when q_e is supplied."""
    q_total = 2.0 * math.pi * f0 * tau
    if q_e is None:
        return q_total, None
    qi_inv = 1.0 / q_total - 1.0 / q_e
    return q_total, (1.0 / qi_inv if qi_inv > 0 else math.inf)


# --------------------------------------------------------------------------
# detuning estimators
# --------------------------------------------------------------------------


@dataclass
class DetuningEstimate:
    delta: float        # rad/s, magnitude; sign is set by pump placement
    resolved: bool
    method: str


def detuning_from_amplitudes(a_s: float, a_r: float, kappa_e: float, kappa: float,
                             sign: int = +1) -> DetuningEstimate:
    """Pump-resonator detuning from the steady-state / ringdown amplitude ratio.

    delta = +/- kappa_e sqrt((|A_S|/|A_R|)^2 - (kappa/(2 kappa_e) - 1)^2).
    A negative discriminant means the detuning is below what the amplitude
    ratio can resolve; delta = 0 is returned with resolved=False.
    """
    if abs(a_r) == 0:
        raise ValueError("ringdown amplitude must be nonzero")
    disc = (abs(a_s) / abs(a_r)) ** 2 - (kappa / (2.0 * kappa_e) - 1.0) ** 2
    if disc < 0:
        return DetuningEstimate(delta=0.0, resolved=False, method="amplitude-ratio")
    return DetuningEstimate(delta=sign * kappa_e * math.sqrt(disc), resolved=True,
                            method="amplitude-ratio")


def detuning_from_fft(time, i_values, q_values, min_periods: float = 3.0) -> DetuningEstimate:
    """Detuning magnitude from the beat of the promptly reflected transient.

    Hann-windowed FFT of the demodulated segment with the DC (steady-state)
    level removed; the dominant peak is refined by parabolic interpolation.
    Flags below-resolution when fewer than ``min_periods`` beats fit in the
    segment or the peak is indistinguishable from DC leakage.
    """
    t = np.asarray(time, dtype=float)
    z = np.asarray(i_values, dtype=float) + 1j * np.asarray(q_values, dtype=float)
    if t.size < 8:
        raise ValueError("segment too short for spectral analysis")
    dt = t[1] - t[0]
    z = z - z.mean()
    win = np.hanning(t.size)
    spec = np.abs(np.fft.fft(z * win))
    freqs = np.fft.fftfreq(t.size, dt)

    guard = max(2, int(min_periods * 1.0))  # bins too close to DC are leakage
    order = np.argsort(spec)[::-1]
    peak = next((k for k in order if min(k, t.size - k) >= guard), None)
    if peak is None:
        return DetuningEstimate(delta=0.0, resolved=False, method="fft")
    # parabolic refinement on log magnitude
    k0 = peak
    km, kp = (k0 - 1) % t.size, (k0 + 1) % t.size
    ym, y0, yp = np.log(spec[[km, k0, kp]] + 1e-300)
    denom = ym - 2.0 * y0 + yp
    shift = 0.5 * (ym - yp) / denom if denom != 0 else 0.0
    f_peak = abs(freqs[k0] + shift * (freqs[1] - freqs[0]))

    n_periods = f_peak * (t[-1] - t[0])
    dc_level = spec[0]
    if n_periods < min_periods or spec[k0] < 0.05 * dc_level:
        return DetuningEstimate(delta=0.0, resolved=False, method="fft")
    return DetuningEstimate(delta=2.0 * math.pi * f_peak, resolved=True, method="fft")


# --------------------------------------------------------------------------
# self-heating thermal model
# --------------------------------------------------------------------------

G0_PER_T = math.pi ** 2 * k_B ** 2 / (3.0 * h)  # quantized conductance g0 / T, W/K^2


def thermal_conductance_quantum(t0: float) -> float:
    """One ballistic phonon channel: g0(T0) = pi^2 kB^2 T0 / (3 h)."""
    return G0_PER_T * t0


@dataclass(frozen=True)
class ThermalModel:
    """Power-law thermal link G_th(T) = G_th(T0) (T/T0)^gamma."""

    gamma_exp: float
    g_th_t0: float
    t0: float

    def __post_init__(self):
        if not 0.5 <= self.gamma_exp <= 4.0:
            raise ValueError("gamma must lie in [0.5, 4]")
        if self.g_th_t0 <= 0 or self.t0 <= 0:
            raise ValueError("conductance and T0 must be positive")

    @property
    def n_channels(self) -> float:
        """Conductance expressed in units of the single-channel quantum."""
        return self.g_th_t0 / thermal_conductance_quantum(self.t0)


def dissipated_power(nbar, f_r: float, q_i) -> np.ndarray:
    """Microwave power dissipated in the defect, P_in = nbar hbar w_r^2 / Q_i."""
    omega = 2.0 * math.pi * f_r
    return np.asarray(nbar, dtype=float) * hbar * omega ** 2 / np.asarray(q_i, dtype=float)


def effective_temperature(model: ThermalModel, p_in, t0: Optional[float] = None):
    """Steady-state defect temperature under dissipated power p_in (W).

    T_eff = T0 (1 + (1+gamma) P_in / (T0 G_th(T0)))^(1/(1+gamma)); the small
    power limit reduces to T0 + P_in / G_th(T0).
    """
    p = np.asarray(p_in, dtype=float)
    if np.any(p < 0):
        raise ValueError("dissipated power must be non-negative")
    t_ref = model.t0 if t0 is None else t0
    gp1 = 1.0 + model.gamma_exp
    return t_ref * (1.0 + gp1 * p / (t_ref * model.g_th_t0)) ** (1.0 / gp1)


@dataclass
class ThermalFitResult:
    model: ThermalModel
    sigma: dict
    fit: FitResult

    @property
    def n_channels(self) -> float:
        return self.model.n_channels


def fit_thermal_model(p_in, t_eff, t0: float) -> ThermalFitResult:
    """Recover (gamma, G_th(T0)) from (P_in, T_eff) points at fixed T0."""
    p = np.asarray(p_in, dtype=float)
    t = np.asarray(t_eff, dtype=float)
    if p.size < 4:
        raise ValueError("need >= 4 points")
    if np.ptp(t) < 1e-9 * t.mean():
        raise ValueError("flat T_eff: thermal parameters unidentifiable")

    # seed G from the low-power linear limit, gamma mid-range
    low = p <= np.percentile(p, 50)
    slope = np.polyfit(p[low], t[low], 1)[0] if low.sum() >= 2 else (np.ptp(t) / np.ptp(p))
    g0 = abs(1.0 / slope) if slope != 0 else thermal_conductance_quantum(t0)

    def residual(vec):
        m = ThermalModel(gamma_exp=vec[0], g_th_t0=vec[1], t0=t0)
        return (effective_temperature(m, p) - t) / t0

    res = fit(residual, [2.0, g0], lower=[0.5, 1e-30], upper=[4.0, np.inf],
              log_scale=[False, True])
    model = ThermalModel(gamma_exp=res.params[0], g_th_t0=res.params[1], t0=t0)
    sigma = {"gamma_exp": float(res.sigma[0]), "g_th_t0": float(res.sigma[1]),
             "n_channels": float(res.sigma[1] / thermal_conductance_quantum(t0))}
    return ThermalFitResult(model=model, sigma=sigma, fit=res)


# --------------------------------------------------------------------------
# ringdown loss model (resonant TLS + inferred relaxation + radiation)
# --------------------------------------------------------------------------


@dataclass
class RingdownLossResult:
    n_c: float
    beta: float
    q_rad: float
    sigma: dict
    fit: FitResult

    @property
    def converged(self) -> bool:
        return self.fit.converged


def fit_ringdown_loss(nbar, t_eff, q_i, f_r: float, f_delta0_diss: float,
                      relax_params, q_i_sigma=None) -> RingdownLossResult:
    """Fit high-power ringdown loss to saturable TLS + fixed relaxation + background.

    ``relax_params`` is a TlsLossParams carrying the independently measured
    (d, q_rel_t0, t0); it and ``f_delta0_diss`` are held fixed, leaving
    (n_c, beta, Q_rad) free.  The background is attributed to radiative
    leakage through the mirror cells.
    """
    from .tls_loss import TlsLossParams, q_relaxation_inv, q_resonant_inv

    nb = np.asarray(nbar, dtype=float)
    te = np.asarray(t_eff, dtype=float)
    qi = np.asarray(q_i, dtype=float)
    qi_inv = 1.0 / qi
    weights = (qi ** 2 / np.asarray(q_i_sigma, dtype=float)) if q_i_sigma is not None \
        else 1.0 / qi_inv
    rel = q_relaxation_inv(relax_params, te)

    def residual(vec):
        p = TlsLossParams(f_delta0_diss=f_delta0_diss, n_c=vec[0], beta=vec[1],
                          d=relax_params.d, q_rel_t0=relax_params.q_rel_t0,
                          t0=relax_params.t0, q_bkg=vec[2])
        model = q_resonant_inv(p, nb, te, f_r) + rel + 1.0 / vec[2]
        return (model - qi_inv) * weights

    res = fit(residual, [10.0, 1.0, 1e7],
              lower=[1e-6, 1e-3, 1.0], upper=[1e12, 2.0, 1e15],
              log_scale=[True, False, True])
    sigma = {"n_c": float(res.sigma[0]), "beta": float(res.sigma[1]),
             "q_rad": float(res.sigma[2])}
    return RingdownLossResult(n_c=float(res.params[0]), beta=float(res.params[1]),
                              q_rad=float(res.params[2]), sigma=sigma, fit=res)
