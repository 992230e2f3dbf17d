"""Single-port reflection resonances: DCM lineshape, fits, and sweep planning.

The reflection coefficient of a one-port resonator traces a circle in the
complex plane.  We model it with the diameter correction method (DCM) of
Khalil et al., J. Appl. Phys. 111, 054510 (2012),

    S11(f) = 1 - e^{i phi} * (2 Q / |Qe|) / (1 + 2i Q (f - f_r) / f_r),

where the complex external quality factor Qe_hat = Qe e^{-i phi} absorbs the
rotation of the resonance circle caused by impedance mismatch.  The
DCM-adjusted external quality factor is Qe = |Qe_hat| / cos(phi) and the
total quality factor obeys 1/Q = 1/Q_i + 1/Q_e.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.constants import h, hbar

from .fitting import FitResult, fit, propagate_sigma


class NoResonanceError(ValueError):
    """Raised when a trace shows no usable dip."""


@dataclass(frozen=True)
class ComplexTrace:
    """A frequency sweep of a complex quantity (S-parameter or admittance)."""

    freq: np.ndarray
    values: np.ndarray
    kind: str = "reflection"  # or "admittance"

    def __post_init__(self):
        object.__setattr__(self, "freq", np.asarray(self.freq, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=complex))
        if self.kind not in ("reflection", "admittance"):
            raise ValueError(f"unknown trace kind {self.kind!r}")
        if self.freq.size != self.values.size or self.freq.size < 3:
            raise ValueError("trace needs >= 3 points with matching lengths")
        if not np.all(np.diff(self.freq) > 0):
            raise ValueError("frequencies must be strictly increasing")
        if not (np.all(np.isfinite(self.freq)) and np.all(np.isfinite(self.values))):
            raise ValueError("trace contains non-finite samples")

    @property
    def span(self) -> float:
        return float(self.freq[-1] - self.freq[0])


@dataclass(frozen=True)
class ResonanceParams:
    """DCM parameter set for one reflection resonance.

    f_r in Hz; q_i, qe_mag unitless; phi in rad.  Derived quantities follow
    the DCM conventions: q_e = qe_mag / cos(phi), 1/q = 1/q_i + 1/q_e and
    kappa_{i,e} = 2 pi f_r / q_{i,e}.
    """

    f_r: float
    q_i: float
    qe_mag: float
    phi: float = 0.0

    def __post_init__(self):
        if not (self.f_r > 0 and self.q_i > 0 and self.qe_mag > 0):
            raise ValueError("f_r, q_i and |Qe| must be positive")
        if not abs(self.phi) < math.pi / 2:
            raise ValueError("|phi| must be below pi/2")

    @property
    def q_e(self) -> float:
        return self.qe_mag / math.cos(self.phi)

    @property
    def q_total(self) -> float:
        return 1.0 / (1.0 / self.q_i + 1.0 / self.q_e)

    @property
    def kappa_i(self) -> float:
        return 2.0 * math.pi * self.f_r / self.q_i

    @property
    def kappa_e(self) -> float:
        return 2.0 * math.pi * self.f_r / self.q_e

    @property
    def kappa(self) -> float:
        return self.kappa_i + self.kappa_e


def eval_s11(params: ResonanceParams, f):
    """DCM reflection coefficient at frequency f (Hz, scalar or array)."""
    f = np.asarray(f, dtype=float)
    q = params.q_total
    num = np.exp(1j * params.phi) * (2.0 * q / params.qe_mag)
    return 1.0 - num / (1.0 + 2j * q * (f - params.f_r) / params.f_r)


def intracavity_phonons(params: ResonanceParams, p_s: float, delta: float = 0.0):
    """Mean intracavity phonon number for drive power p_s (W) at the sample.

    For a pump detuned by ``delta`` (rad/s) from the resonance,
    nbar = kappa_e / (delta^2 + (kappa/2)^2) * P_s / (hbar omega_r); on
    resonance this reduces to 4 kappa_e / kappa^2 * P_s / (h f_r).
    """
    if np.any(np.asarray(p_s) < 0):
        raise ValueError("drive power must be non-negative")
    omega_r = 2.0 * math.pi * params.f_r
    lorentz = params.kappa_e / (np.asarray(delta, dtype=float) ** 2 + (params.kappa / 2.0) ** 2)
    return lorentz * np.asarray(p_s, dtype=float) / (hbar * omega_r)


@dataclass(frozen=True)
class SweepPlan:
    """Frequency points for one resonance sweep, densest at the center."""

    points: np.ndarray
    w: float
    span: float
    n: int


def homophasal_sweep(f_r: float, kappa: float, span: float, n: int) -> SweepPlan:
    """Plan a sweep whose points are equally spaced in resonance-circle phase.

    Linearly spaced frequency points cluster at the off-resonant ends of the
    resonance circle; spacing the points uniformly in the circle phase keeps
    every sample informative (Baity et al. 2023, Ganjam et al. 2023).  With
    W = span / (kappa / 2 pi) the points are

        f_k = f_r + (span/2) * tan(k * dtheta / (n-1)) / tan(dtheta/2),

    k = -(n-1)/2 .. (n-1)/2.  We use dtheta = 2 arctan(W), which agrees with
    arctan(2W / (1 - W^2)) for W < 1 and stays continuous through W = 1.
    The limit W -> 0 recovers a linear sweep.
    """
    if n % 2 == 0 or n < 3:
        raise ValueError("n must be odd and >= 3")
    if span <= 0 or kappa <= 0:
        raise ValueError("span and kappa must be positive")
    w = span / (kappa / (2.0 * math.pi))
    dtheta = 2.0 * math.atan(w)
    k = np.arange(n) - (n - 1) // 2
    points = f_r + (span / 2.0) * np.tan(k * dtheta / (n - 1)) / math.tan(dtheta / 2.0)
    # guarantee the exact symmetry the formula promises
    points[(n - 1) // 2] = f_r
    points[0] = f_r - span / 2.0
    points[-1] = f_r + span / 2.0
    return SweepPlan(points=points, w=w, span=span, n=n)


@dataclass
class ReflectionFit:
    """Result of a DCM reflection fit with per-quantity uncertainties."""

    params: ResonanceParams
    sigma: dict
    fit: FitResult
    background: np.ndarray  # complex [a, b] of the co-fit (a + b (f - f_r))

    @property
    def converged(self) -> bool:
        return self.fit.converged

    def as_dict(self) -> dict:
        """JSON-ready mapping with value and sigma per quantity."""
        p = self.params
        values = {
            "f_r_hz": p.f_r, "q_i": p.q_i, "qe_mag": p.qe_mag, "phi_rad": p.phi,
            "q_e_dcm": p.q_e, "kappa_i_rad_s": p.kappa_i, "kappa_e_rad_s": p.kappa_e,
        }
        return {k: {"value": values[k], "sigma": self.sigma.get(k, 0.0)} for k in values}


def _edge_baseline(trace: ComplexTrace, frac: float = 0.1):
    """Complex affine baseline a + b (f - f_c) from the trace edges."""
    n = max(3, int(round(frac * trace.freq.size)))
    idx = np.r_[0:n, trace.freq.size - n:trace.freq.size]
    f_c = trace.freq[trace.freq.size // 2]
    a_mat = np.column_stack([np.ones(idx.size), trace.freq[idx] - f_c])
    coef, *_ = np.linalg.lstsq(a_mat, trace.values[idx], rcond=None)
    return coef, f_c, idx


def _seed_from_trace(freq, z_norm, span):
    """Automatic (f_r, q, qe_mag, phi) seed from a normalized trace."""
    mag = np.abs(z_norm)
    i_min = int(np.argmin(mag))
    f_r0 = float(freq[i_min])
    depth = 1.0 - mag[i_min]

    # full width at half dip depth; fall back to span/10 for shallow dips
    level = 1.0 - depth / 2.0
    below = mag < level
    fwhm = None
    if below.any():
        left = i_min
        while left > 0 and below[left - 1]:
            left -= 1
        right = i_min
        while right < mag.size - 1 and below[right + 1]:
            right += 1
        if right > left:
            fwhm = freq[right] - freq[left]
    if fwhm is None or fwhm <= 0:
        fwhm = span / 10.0
    q0 = f_r0 / fwhm

    s_min = z_norm[i_min]
    phi0 = float(np.angle(1.0 - s_min))
    phi0 = np.clip(phi0, -1.4, 1.4)
    qe0 = 2.0 * q0 / max(abs(1.0 - s_min), 1e-12)
    qi_inv = 1.0 / q0 - math.cos(phi0) / qe0
    qi0 = 1.0 / qi_inv if qi_inv > 0 else 10.0 * q0
    return f_r0, qi0, qe0, phi0


def fit_reflection(trace: ComplexTrace, guess: Optional[ResonanceParams] = None,
                   fit_background: bool = True) -> ReflectionFit:
    """Fit the DCM model to a complex reflection trace.

    The trace is first normalized by a complex affine baseline estimated from
    its off-resonant edges, which makes the fitted q_i insensitive to a global
    complex scaling of the raw data.  A residual background (a + b (f - f_r))
    is co-fit by default to absorb what the edge estimate missed.

    Raises NoResonanceError when the dip depth is below 3x the edge noise.
    """
    if trace.kind != "reflection":
        raise ValueError("fit_reflection expects a reflection trace")
    freq = trace.freq
    z = trace.values
    coef, f_c, edge_idx = _edge_baseline(trace)
    z_norm = z / (coef[0] + coef[1] * (freq - f_c))

    noise = np.std(np.abs(z_norm[edge_idx]))
    depth = 1.0 - np.min(np.abs(z_norm))
    if depth < 3.0 * noise or depth <= 0:
        raise NoResonanceError("no resonance found: dip depth below 3x noise RMS")

    if guess is not None:
        seed = (guess.f_r, guess.q_i, guess.qe_mag, guess.phi)
    else:
        seed = _seed_from_trace(freq, z_norm, trace.span)

    f_lo, f_hi = freq[0], freq[-1]
    names = ["f_r_hz", "q_i", "qe_mag", "phi_rad"]
    x0 = list(seed)
    lower = [f_lo, 1.0, 1.0, -1.57]
    upper = [f_hi, np.inf, np.inf, 1.57]
    log_scale = [False, True, True, False]
    span = trace.span
    if fit_background:
        # multiplicative complex affine background co-fit against the raw trace
        x0 += [coef[0].real, coef[0].imag, (coef[1] * span).real, (coef[1] * span).imag]
        lower += [-np.inf] * 4
        upper += [np.inf] * 4
        log_scale += [False] * 4

    def residual(p):
        rp = ResonanceParams(f_r=p[0], q_i=p[1], qe_mag=p[2], phi=p[3])
        model = eval_s11(rp, freq)
        if fit_background:
            bg = (p[4] + 1j * p[5]) + (p[6] + 1j * p[7]) * (freq - p[0]) / span
            model = bg * model
        d = model - z
        return np.concatenate([d.real, d.imag])

    # the natural frequency scale is the linewidth, not f_r itself
    q_tot_seed = 1.0 / (1.0 / seed[1] + math.cos(seed[3]) / seed[2])
    x_scale = [max(seed[0] / q_tot_seed, span * 1e-4), 1.0, 1.0, 1.0]
    if fit_background:
        x_scale += [1.0] * 4
    res = fit(residual, x0, lower=lower, upper=upper, log_scale=log_scale, x_scale=x_scale)
    p = res.params
    params = ResonanceParams(f_r=p[0], q_i=p[1], qe_mag=p[2], phi=p[3])

    sigma = {name: float(res.sigma[i]) for i, name in enumerate(names)}
    core_cov = res.cov[:4, :4]
    core = p[:4]
    derived = {
        "q_e_dcm": lambda q: ResonanceParams(q[0], q[1], q[2], q[3]).q_e,
        "kappa_i_rad_s": lambda q: ResonanceParams(q[0], q[1], q[2], q[3]).kappa_i,
        "kappa_e_rad_s": lambda q: ResonanceParams(q[0], q[1], q[2], q[3]).kappa_e,
    }
    for name, fn in derived.items():
        sigma[name] = propagate_sigma(fn, core, core_cov)

    background = (np.array([p[4] + 1j * p[5], (p[6] + 1j * p[7]) / span])
                  if fit_background else np.array([1.0 + 0j, 0.0 + 0j]))
    return ReflectionFit(params=params, sigma=sigma, fit=res, background=background * 1.0)
