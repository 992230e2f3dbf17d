"""Phenomenological two-level-system (TLS) loss and frequency-shift models.

The internal loss of an acoustic resonator coupled to a TLS bath splits into
a saturable resonant part, a relaxation part growing as T^d, and an optional
constant background:

    1/Q_i = 1/Q_res(nbar, T) + 1/Q_rel(T) + 1/Q_bkg

with

    1/Q_res = F*delta0_diss * tanh(x) / sqrt(1 + (nbar/n_c)^beta * tanh(x)),
    x = h f / (2 k_B T),
    1/Q_rel = (1/Q_rel_T0) * (T/T0)^d.

The tanh inside the square root carries the temperature dependence of the
TLS decay time (Crowley et al. 2023) and is kept exactly as written.  The
dispersive TLS response shifts the resonance frequency (Phillips 1987),

    df/f0 = (F*delta0_reac / pi) * [Re Psi(1/2 + h f / (2 pi i k_B T))
                                    - ln(h f / (2 pi k_B T))],

referenced to the zero-temperature frequency f0, with Psi the complex
digamma function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.constants import h, k as k_B
from scipy.optimize import brentq

from .fitting import FitError, FitResult, fit


class UnidentifiableError(ValueError):
    """Raised when the data cannot constrain the requested parameters."""


# --------------------------------------------------------------------------
# complex digamma
# --------------------------------------------------------------------------

# Bernoulli-number coefficients B_2n / (2n) of the asymptotic series
_ASYMP = (1.0 / 12.0, -1.0 / 120.0, 1.0 / 252.0, -1.0 / 240.0,
          1.0 / 132.0, -691.0 / 32760.0, 1.0 / 12.0, -3617.0 / 8160.0)


def complex_digamma(z):
    """Digamma function for complex argument.

    Arguments with Re(z) < 1/2 are reflected via
    Psi(z) = Psi(1 - z) - pi / tan(pi z); the remainder are pushed to
    Re >= 8 with the recurrence Psi(z+1) = Psi(z) + 1/z and evaluated with
    an eight-term asymptotic series, accurate to ~1e-12 relative.  Poles at
    non-positive integers raise.
    """
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    pole = (z.imag == 0) & (z.real <= 0) & (z.real == np.round(z.real))
    if np.any(pole):
        raise ValueError("digamma pole at non-positive integer argument")

    out = np.zeros_like(z)
    refl = z.real < 0.5
    w = np.where(refl, 1.0 - z, z)
    out[refl] -= np.pi / np.tan(np.pi * z[refl])

    # upward recurrence until Re(w) >= 8 (at most 8 steps since Re >= 0.5)
    for _ in range(8):
        low = w.real < 8.0
        if not np.any(low):
            break
        out[low] -= 1.0 / w[low]
        w[low] += 1.0
    inv2 = 1.0 / (w * w)
    series = np.zeros_like(w)
    term = inv2.copy()
    for c in _ASYMP:
        series += c * term
        term *= inv2
    out += np.log(w) - 0.5 / w - series
    return out[0] if scalar else out


# --------------------------------------------------------------------------
# loss model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TlsLossParams:
    """Joint TLS loss model parameters.

    q_bkg defaults to infinity (no power- and temperature-independent
    background).  t0 is a fixed reference temperature, never fitted: it is
    exactly degenerate with q_rel_t0.
    """

    f_delta0_diss: float
    n_c: float
    beta: float
    d: float
    q_rel_t0: float
    t0: float
    q_bkg: float = math.inf

    def __post_init__(self):
        if min(self.f_delta0_diss, self.n_c, self.beta, self.d,
               self.q_rel_t0, self.t0, self.q_bkg) <= 0:
            raise ValueError("all loss parameters must be strictly positive")
        if not 0 < self.beta <= 2:
            raise ValueError("beta must lie in (0, 2]")
        if not 0.5 <= self.d <= 4:
            raise ValueError("d must lie in [0.5, 4]")


def q_resonant_inv(p: TlsLossParams, nbar, t, f):
    """Saturable resonant-TLS loss 1/Q_res(nbar, T) at probe frequency f."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("temperature must be positive")
    th = np.tanh(h * np.asarray(f, dtype=float) / (2.0 * k_B * t))
    sat = np.sqrt(1.0 + (np.asarray(nbar, dtype=float) / p.n_c) ** p.beta * th)
    return p.f_delta0_diss * th / sat


def q_relaxation_inv(p: TlsLossParams, t):
    """Relaxation-TLS loss 1/Q_rel(T) = (T/T0)^d / Q_rel_T0."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("temperature must be positive")
    return (t / p.t0) ** p.d / p.q_rel_t0


def q_total_inv(p: TlsLossParams, nbar, t, f):
    """Total internal loss: resonant + relaxation + background."""
    bkg = 0.0 if math.isinf(p.q_bkg) else 1.0 / p.q_bkg
    return q_resonant_inv(p, nbar, t, f) + q_relaxation_inv(p, t) + bkg


@dataclass(frozen=True)
class LossDataset:
    """Measured Q_i over a (nbar, T) grid at probe frequency freq_hz."""

    nbar: np.ndarray
    temp_k: np.ndarray
    q_i: np.ndarray
    q_i_sigma: np.ndarray
    freq_hz: np.ndarray

    def __post_init__(self):
        for name in ("nbar", "temp_k", "q_i", "q_i_sigma", "freq_hz"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.nbar.size
        if any(getattr(self, k).size != n for k in ("temp_k", "q_i", "q_i_sigma", "freq_hz")):
            raise ValueError("all columns must have equal length")
        if np.any(self.nbar < 0) or np.any(self.temp_k <= 0) or np.any(self.q_i <= 0):
            raise ValueError("need nbar >= 0, T > 0, Q_i > 0")


_JOINT_NAMES = ("f_delta0_diss", "n_c", "beta", "d", "q_rel_t0")
_JOINT_BOUNDS = {
    "f_delta0_diss": (1e-12, 1.0, True),
    "n_c": (1e-6, 1e12, True),
    "beta": (1e-3, 2.0, False),
    "d": (0.5, 4.0, False),
    "q_rel_t0": (1.0, 1e15, True),
    "q_bkg": (1.0, 1e15, True),
}


@dataclass
class JointFitResult:
    params: TlsLossParams
    sigma: dict
    fit: FitResult

    @property
    def converged(self) -> bool:
        return self.fit.converged

    def as_dict(self) -> dict:
        vals = {
            "f_delta0_diss": self.params.f_delta0_diss, "n_c": self.params.n_c,
            "beta": self.params.beta, "d": self.params.d,
            "q_rel_t0": self.params.q_rel_t0, "t0": self.params.t0,
            "q_bkg": self.params.q_bkg,
        }
        out = {}
        for k, v in vals.items():
            out[k] = {"value": v, "sigma": self.sigma.get(k, 0.0)}
        return out


def _joint_seed(data: LossDataset, t0: float) -> dict:
    qi_inv = 1.0 / data.q_i
    t_min, t_max = data.temp_k.min(), data.temp_k.max()
    cold = data.temp_k <= t_min * 1.001
    base = qi_inv[cold & (data.nbar <= np.quantile(data.nbar[cold], 0.25))]
    f_delta0 = float(np.median(base)) if base.size else float(np.max(qi_inv))
    hot = data.temp_k >= t_max * 0.999
    rel_hot = max(float(np.median(qi_inv[hot])), 1e-12)
    d0 = 2.0
    q_rel_t0 = (t_max / t0) ** d0 / rel_hot
    return {
        "f_delta0_diss": max(f_delta0, 1e-12),
        "n_c": float(np.median(data.nbar[data.nbar > 0])) if np.any(data.nbar > 0) else 1.0,
        "beta": 1.0,
        "d": d0,
        "q_rel_t0": q_rel_t0,
    }


def joint_fit(data: LossDataset, fix: Optional[dict] = None, t0: float = 0.25,
              fit_background: bool = False, guess: Optional[dict] = None) -> JointFitResult:
    """Jointly fit 1/Q_i(nbar, T) to resonant + relaxation (+ background) loss.

    Residuals are taken in inverse-Q space, where the model is additive, and
    weighted by the propagated sigma of 1/Q_i.  ``fix`` pins any subset of
    {f_delta0_diss, n_c, beta, d, q_rel_t0, q_bkg} to given values.  The
    background is pinned to zero unless ``fit_background`` is set.

    Needs more than one distinct temperature whenever d or q_rel_t0 are free.
    """
    fix = dict(fix or {})
    n_temps = np.unique(np.round(data.temp_k, 12)).size
    free = [n for n in _JOINT_NAMES if n not in fix]
    if fit_background and "q_bkg" not in fix:
        free.append("q_bkg")
    if n_temps < 2 and ("d" in free or "q_rel_t0" in free):
        raise UnidentifiableError(
            "single-temperature data cannot constrain d and q_rel_t0; fix them or extend the sweep")

    seed = _joint_seed(data, t0)
    seed["q_bkg"] = 1.0 / max(np.min(1.0 / data.q_i) * 0.1, 1e-12)
    seed.update(guess or {})
    qi_inv = 1.0 / data.q_i
    sigma_inv = data.q_i_sigma / data.q_i ** 2
    weights = np.where(sigma_inv > 0, 1.0 / np.where(sigma_inv > 0, sigma_inv, 1.0), 1.0 / qi_inv)

    def build(vec) -> TlsLossParams:
        vals = dict(fix)
        for name, v in zip(free, vec):
            vals[name] = v
        vals.setdefault("q_bkg", math.inf)
        return TlsLossParams(t0=t0, **{k: vals.get(k, seed.get(k)) for k in
                                       ("f_delta0_diss", "n_c", "beta", "d", "q_rel_t0", "q_bkg")})

    def residual(vec):
        p = build(vec)
        return (q_total_inv(p, data.nbar, data.temp_k, data.freq_hz) - qi_inv) * weights

    x0 = [min(max(seed[n], _JOINT_BOUNDS[n][0]), _JOINT_BOUNDS[n][1]) for n in free]
    lower = [_JOINT_BOUNDS[n][0] for n in free]
    upper = [_JOINT_BOUNDS[n][1] for n in free]
    log_scale = [_JOINT_BOUNDS[n][2] for n in free]
    res = fit(residual, x0, lower=lower, upper=upper, log_scale=log_scale)
    params = build(res.params)
    sigma = {name: float(res.sigma[i]) for i, name in enumerate(free)}
    return JointFitResult(params=params, sigma=sigma, fit=res)


# --------------------------------------------------------------------------
# frequency shift and thermometry
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FreqShiftParams:
    """Reactive TLS response: loss tangent and zero-temperature frequency."""

    f_delta0_reac: float
    f0: float

    def __post_init__(self):
        if self.f_delta0_reac <= 0 or self.f0 <= 0:
            raise ValueError("f_delta0_reac and f0 must be positive")


def _shift_bracket(f_r, t):
    """The digamma bracket of the dispersive shift; scale-invariant in h f / k T."""
    t = np.asarray(t, dtype=float)
    z = 0.5 + h * np.asarray(f_r, dtype=float) / (2j * math.pi * k_B * t)
    return np.real(complex_digamma(z)) - np.log(h * np.asarray(f_r, dtype=float) /
                                                (2.0 * math.pi * k_B * t))


def freq_shift(p: FreqShiftParams, t, f_r=None):
    """Fractional frequency shift (f_r(T) - f0)/f0 of the dispersive TLS model."""
    if np.any(np.asarray(t) <= 0):
        raise ValueError("temperature must be positive")
    f_probe = p.f0 if f_r is None else f_r
    return (p.f_delta0_reac / math.pi) * _shift_bracket(f_probe, t)


@dataclass
class FreqShiftFit:
    params: FreqShiftParams
    sigma: dict
    fit: FitResult
    monotone: bool = True

    @property
    def converged(self) -> bool:
        return self.fit.converged


def fit_freq_shift(temp_k, f_r_hz, f_r_probe: Optional[float] = None) -> FreqShiftFit:
    """Fit (T, f_r) data to the dispersive-shift model, recovering
    (f_delta0_reac, f0).

    The digamma argument uses the fixed probe frequency (shifts are ppm
    scale, so the distinction never matters).  A series that decreases with
    temperature beyond its scatter is flagged non-monotone.
    """
    t = np.asarray(temp_k, dtype=float)
    f_r = np.asarray(f_r_hz, dtype=float)
    if t.size < 5:
        raise ValueError("need >= 5 temperature points")
    order = np.argsort(t)
    t, f_r = t[order], f_r[order]
    probe = float(f_r_probe) if f_r_probe else float(np.median(f_r))

    def residual(vec):
        p = FreqShiftParams(f_delta0_reac=vec[0], f0=vec[1])
        return (p.f0 * (1.0 + freq_shift(p, t, probe)) - f_r) / probe

    span = f_r.max() - f_r.min()
    fd0 = max((span / probe) / max(_shift_bracket(probe, t.max()), 1e-9), 1e-9)
    res = fit(residual, [fd0, float(f_r[0])],
              lower=[1e-12, 0.5 * probe], upper=[1.0, 1.5 * probe],
              log_scale=[True, False])
    params = FreqShiftParams(f_delta0_reac=res.params[0], f0=res.params[1])
    sigma = {"f_delta0_reac": float(res.sigma[0]), "f0": float(res.sigma[1])}

    # non-monotone check on the upper monotone branch of the model
    t_knee = h * probe / (2.0 * k_B)
    hi = t > t_knee
    monotone = True
    if hi.sum() >= 3:
        df = np.diff(f_r[hi])
        scatter = np.std(residual(res.params)) * probe
        monotone = bool(np.all(df > -5.0 * max(scatter, 1e-12)))
    return FreqShiftFit(params=params, sigma=sigma, fit=res, monotone=monotone)


def invert_freq_to_temperature(p: FreqShiftParams, shift: float,
                               t_lo: float = 1e-3, t_hi: float = 5.0,
                               f_r: Optional[float] = None) -> float:
    """Temperature at which the dispersive model produces ``shift`` = df/f0.

    The model rises monotonically above its shallow minimum near
    h f / (2 k_B); positive shifts are inverted there by a bracketed solve.
    Shifts whose magnitude is below the model magnitude at the lower bracket
    (including zero, the T -> 0 asymptote) return ``t_lo``.  Anything else is
    outside the invertible range and raises, quoting the attainable interval.
    """
    probe = p.f0 if f_r is None else f_r

    def g(t):
        return float(freq_shift(p, t, probe))

    floor = abs(g(t_lo))
    top = g(t_hi)
    if shift > top:
        raise ValueError(f"shift outside attainable range [{-floor:.3e}, {top:.3e}]")
    if shift <= 0.0:
        if abs(shift) <= floor:
            return t_lo
        raise ValueError(
            f"shift below the monotone branch; attainable range [{-floor:.3e}, {top:.3e}]")
    # minimum of the curve sits near h f / (2 kB); bracket the rising branch
    t_knee = h * probe / (2.0 * k_B)
    a = max(t_lo, t_knee)
    if g(a) >= shift:
        a = t_lo
    t = brentq(lambda x: g(x) - shift, a, t_hi, xtol=1e-15, rtol=1e-12)
    return float(t)


# --------------------------------------------------------------------------
# participation decomposition
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ParticipationPoint:
    """One resonance: aluminum participation and fitted loss tangent."""

    f_al: float
    f_delta0: float
    sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.f_al <= 1.0:
            raise ValueError("participation must lie in [0, 1]")


@dataclass
class ParticipationResult:
    delta_qz: float
    delta_al: float
    sigma_qz: float
    sigma_al: float
    cov: np.ndarray


def participation_decomposition(points: Sequence[ParticipationPoint]) -> ParticipationResult:
    """Split loss tangents into host and electrode contributions.

    Weighted linear regression of F*delta0 = F_Al * delta_Al +
    (1 - F_Al) * delta_qz over the participation ratio.  With measurement
    sigmas given, the covariance is (A^T W A)^-1; otherwise it is scaled by
    the residual variance.
    """
    f_al = np.array([pt.f_al for pt in points], dtype=float)
    y = np.array([pt.f_delta0 for pt in points], dtype=float)
    sig = np.array([pt.sigma for pt in points], dtype=float)
    if f_al.size < 2 or np.ptp(f_al) == 0:
        raise UnidentifiableError("need >= 2 distinct participation values")
    have_sigma = np.all(sig > 0)
    w = 1.0 / sig if have_sigma else np.ones_like(y)
    a_mat = np.column_stack([1.0 - f_al, f_al]) * w[:, None]
    b = y * w
    coef, res_ss, rank, _ = np.linalg.lstsq(a_mat, b, rcond=None)
    cov = np.linalg.inv(a_mat.T @ a_mat)
    if not have_sigma:
        dof = max(y.size - 2, 1)
        chi2 = float(np.sum((a_mat @ coef - b) ** 2))
        cov = cov * chi2 / dof
    sig_qz, sig_al = np.sqrt(np.diag(cov))
    return ParticipationResult(delta_qz=float(coef[0]), delta_al=float(coef[1]),
                               sigma_qz=float(sig_qz), sigma_al=float(sig_al), cov=cov)


# --------------------------------------------------------------------------
# radiation leakage through the mirror cells
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RadiationLeakParams:
    """Exponential mirror-leakage model 1/Q_i(N) = q_mirr0 e^{-beta N} + 1/q_tls.

    q_mirr0 is the radiative loss (an inverse quality factor) extrapolated to
    zero mirror cells; the radiation-limited quality factor at N cells is
    Q_rad(N) = e^{beta N} / q_mirr0.
    """

    q_mirr0: float
    beta_mirr: float
    q_tls_const: float

    def __post_init__(self):
        if min(self.q_mirr0, self.beta_mirr, self.q_tls_const) <= 0:
            raise ValueError("all radiation parameters must be positive")

    def q_i_inv(self, n_mirr):
        return self.q_mirr0 * np.exp(-self.beta_mirr * np.asarray(n_mirr, dtype=float)) \
            + 1.0 / self.q_tls_const

    def q_rad(self, n_mirr):
        """Extrapolated radiation-limited quality factor at n_mirr cells."""
        return np.exp(self.beta_mirr * np.asarray(n_mirr, dtype=float)) / self.q_mirr0


@dataclass
class RadiationFitResult:
    params: RadiationLeakParams
    sigma: dict
    fit: FitResult
    resolved: bool  # False when the data never rises above the TLS plateau


def radiation_model_fit(n_mirr, q_i, q_i_sigma=None) -> RadiationFitResult:
    """Fit Q_i(N_mirr) to exponentially suppressed radiative leakage.

    Flat or plateau-only data leaves beta unconstrained; the fit then returns
    the plateau model with ``resolved=False``.
    """
    n = np.asarray(n_mirr, dtype=float)
    qi = np.asarray(q_i, dtype=float)
    if np.unique(n).size < 4:
        raise ValueError("need >= 4 distinct mirror counts")
    qi_inv = 1.0 / qi
    sig_inv = (np.asarray(q_i_sigma, dtype=float) / qi ** 2) if q_i_sigma is not None else None
    weights = 1.0 / sig_inv if sig_inv is not None else 1.0 / qi_inv

    q_tls0 = float(qi.max())
    excess = qi_inv - 1.0 / (q_tls0 * 1.05)
    pos = excess > 0
    if pos.sum() >= 2:
        slope, intercept = np.polyfit(n[pos], np.log(excess[pos]), 1)
        beta0 = max(-slope, 1e-3)
        q00 = math.exp(intercept)
    else:
        beta0, q00 = 1.0, float(qi_inv.max())

    def residual(vec):
        p = RadiationLeakParams(q_mirr0=vec[0], beta_mirr=vec[1], q_tls_const=vec[2])
        return (p.q_i_inv(n) - qi_inv) * weights

    spread = (qi_inv.max() - qi_inv.min()) / np.median(qi_inv)
    if spread < 1e-9:
        # exactly flat: return the plateau model directly
        params = RadiationLeakParams(q_mirr0=1e-300 + qi_inv.mean() * 1e-12,
                                     beta_mirr=1.0, q_tls_const=1.0 / qi_inv.mean())
        dummy = fit(lambda v: (v[0] - qi_inv * 0.0), [0.0])
        return RadiationFitResult(params=params,
                                  sigma={"q_mirr0": math.inf, "beta_mirr": math.inf,
                                         "q_tls_const": float(np.std(qi))},
                                  fit=dummy, resolved=False)

    res = fit(residual, [q00, beta0, q_tls0],
              lower=[1e-30, 1e-6, 1.0], upper=[1e6, 20.0, 1e15],
              log_scale=[True, False, True])
    params = RadiationLeakParams(q_mirr0=res.params[0], beta_mirr=res.params[1],
                                 q_tls_const=res.params[2])
    sigma = {"q_mirr0": float(res.sigma[0]), "beta_mirr": float(res.sigma[1]),
             "q_tls_const": float(res.sigma[2])}
    rad_max = params.q_mirr0 * math.exp(-params.beta_mirr * n.min())
    resolved = rad_max > 0.05 / params.q_tls_const
    return RadiationFitResult(params=params, sigma=sigma, fit=res, resolved=resolved)
