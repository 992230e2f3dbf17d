"""Seeded synthetic datasets for every fitter in the package.

Each generator forward-evaluates the corresponding model on a declared grid,
adds seeded noise drawn from a counter-based generator (equal seeds give
byte-identical files), and returns the module-native dataset plus a manifest
embedding the truth.  Fitters never see the manifest; recovery tests compare
against it afterwards.

Noise conventions: complex traces get additive complex Gaussian noise
(instrument-like); quality-factor datasets get fractional Gaussian noise on
1/Q_i, matching how each quantity is actually measured.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.constants import h, hbar, k as k_B

from . import io
from .calib import NoiseSweep, johnson_noise_power
from .circuit_id import BvdCircuit, eval_admittance
from .resonance import ComplexTrace, ResonanceParams, eval_s11, homophasal_sweep
from .ringdown import ShotSet, ThermalModel, dissipated_power, effective_temperature, \
    simulate_ringdown
from .tls_loss import FreqShiftParams, LossDataset, ParticipationPoint, RadiationLeakParams, \
    TlsLossParams, freq_shift, q_relaxation_inv, q_resonant_inv, q_total_inv
from .units import db_to_linear

SCHEMA_VERSION = 1

_TARGETS = ("reflection", "loss-grid", "freq-shift", "ringdown", "ringdown-loss",
            "admittance", "noise-sweep", "participation", "radiation")


@dataclass(frozen=True)
class SynthSpec:
    """Declaration of one synthetic dataset: truth + grid + noise + seed."""

    target: str
    truth: dict
    grid: dict
    noise: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.target not in _TARGETS:
            raise ValueError(f"unknown synth target {self.target!r}; know {_TARGETS}")
        if any(v < 0 for v in self.noise.values() if isinstance(v, (int, float))):
            raise ValueError("noise levels must be non-negative")


@dataclass
class GeneratedData:
    """In-memory payload plus manifest; ``files`` lists anything written."""

    spec: SynthSpec
    payload: dict
    manifest: dict
    files: list = field(default_factory=list)


def _rng(spec: SynthSpec) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(spec.seed))


def _manifest(spec: SynthSpec) -> dict:
    return {"schema_version": SCHEMA_VERSION, "target": spec.target,
            "truth": spec.truth, "grid": spec.grid, "noise": spec.noise,
            "seed": spec.seed}


# --------------------------------------------------------------------------
# generators per target
# --------------------------------------------------------------------------


def _gen_reflection(spec: SynthSpec, rng) -> dict:
    t = spec.truth
    params = ResonanceParams(f_r=t["f_r_hz"], q_i=t["q_i"], qe_mag=t["qe_mag"],
                             phi=t.get("phi_rad", 0.0))
    g = spec.grid
    if g.get("plan", "homophasal") == "homophasal":
        plan = homophasal_sweep(params.f_r, params.kappa, g["span_hz"], g["n"])
        freq = plan.points
    else:
        freq = np.linspace(params.f_r - g["span_hz"] / 2.0,
                           params.f_r + g["span_hz"] / 2.0, g["n"])
    values = eval_s11(params, freq)
    sigma = spec.noise.get("sigma", 0.0)
    if sigma > 0:
        values = values + sigma * (rng.standard_normal(freq.size)
                                   + 1j * rng.standard_normal(freq.size))
    return {"trace": ComplexTrace(freq=freq, values=values, kind="reflection"),
            "params": params}


def _loss_params(t: dict) -> TlsLossParams:
    return TlsLossParams(
        f_delta0_diss=t["f_delta0_diss"], n_c=t["n_c"], beta=t["beta"], d=t["d"],
        q_rel_t0=t["q_rel_t0"], t0=t["t0"], q_bkg=t.get("q_bkg", math.inf))


def _gen_loss_grid(spec: SynthSpec, rng) -> dict:
    p = _loss_params(spec.truth)
    g = spec.grid
    nbar = np.logspace(math.log10(g["nbar_min"]), math.log10(g["nbar_max"]), g["n_nbar"])
    temps = np.logspace(math.log10(g["t_min_k"]), math.log10(g["t_max_k"]), g["n_temp"])
    nb, tt = [a.ravel() for a in np.meshgrid(nbar, temps)]
    f = np.full_like(nb, g["freq_hz"])
    qi_inv = q_total_inv(p, nb, tt, f)
    frac = spec.noise.get("frac", 0.0)
    if frac > 0:
        qi_inv = qi_inv * (1.0 + frac * rng.standard_normal(qi_inv.size))
    q_i = 1.0 / qi_inv
    return {"dataset": LossDataset(nbar=nb, temp_k=tt, q_i=q_i,
                                   q_i_sigma=frac * q_i if frac > 0 else np.full_like(q_i, 0.0),
                                   freq_hz=f),
            "params": p}


def _gen_freq_shift(spec: SynthSpec, rng) -> dict:
    t = spec.truth
    params = FreqShiftParams(f_delta0_reac=t["f_delta0_reac"], f0=t["f0_hz"])
    g = spec.grid
    temps = np.logspace(math.log10(g["t_min_k"]), math.log10(g["t_max_k"]), g["n_temp"])
    f_r = params.f0 * (1.0 + freq_shift(params, temps))
    sigma = spec.noise.get("sigma_hz", 0.0)
    if sigma > 0:
        f_r = f_r + sigma * rng.standard_normal(temps.size)
    return {"temp_k": temps, "f_r_hz": f_r, "params": params}


def _gen_ringdown(spec: SynthSpec, rng) -> dict:
    t = spec.truth
    params = ResonanceParams(f_r=t["f_r_hz"], q_i=t["q_i"], qe_mag=t["qe_mag"],
                             phi=t.get("phi_rad", 0.0))
    g = spec.grid
    shots = simulate_ringdown(
        params, delta=t.get("delta_rad_s", 0.0), a_p=t.get("a_p", 1.0),
        pulse_on=g["pulse_on_s"], total=g["total_s"], sample_rate=g["sample_rate_hz"],
        noise_sigma=spec.noise.get("sigma", 0.0), n_shots=g["n_shots"], seed=spec.seed)
    return {"shots": shots, "params": params}


def _selfconsistent_ringdown_loss(truth: dict, nbar: np.ndarray):
    """Q_i and T_eff vs nbar with self-heating folded in."""
    loss = TlsLossParams(
        f_delta0_diss=truth["f_delta0_diss"], n_c=truth["n_c"], beta=truth["beta"],
        d=truth["d"], q_rel_t0=truth["q_rel_t0"], t0=truth["t0_rel_k"],
        q_bkg=truth["q_rad"])
    thermal = ThermalModel(gamma_exp=truth["gamma_exp"],
                           g_th_t0=truth["n_channels"] * math.pi ** 2 * k_B ** 2
                           * truth["t0_k"] / (3.0 * h),
                           t0=truth["t0_k"])
    f_r = truth["f_r_hz"]
    t_eff = np.full_like(nbar, truth["t0_k"])
    q_i = np.full_like(nbar, 1e7)
    for _ in range(200):
        qi_inv = q_total_inv(loss, nbar, t_eff, f_r)
        q_new = 1.0 / qi_inv
        p_in = dissipated_power(nbar, f_r, q_new)
        t_new = effective_temperature(thermal, p_in)
        if np.max(np.abs(t_new - t_eff) / t_eff) < 1e-14 and \
           np.max(np.abs(q_new - q_i) / q_i) < 1e-14:
            q_i, t_eff = q_new, t_new
            break
        q_i, t_eff = q_new, t_new
    return q_i, t_eff, loss, thermal


def _gen_ringdown_loss(spec: SynthSpec, rng) -> dict:
    g = spec.grid
    nbar = np.logspace(math.log10(g["nbar_min"]), math.log10(g["nbar_max"]), g["n"])
    q_i, t_eff, loss, thermal = _selfconsistent_ringdown_loss(spec.truth, nbar)
    frac = spec.noise.get("frac", 0.0)
    qi_inv = 1.0 / q_i
    if frac > 0:
        qi_inv = qi_inv * (1.0 + frac * rng.standard_normal(nbar.size))
    q_i_noisy = 1.0 / qi_inv
    sigma_t = spec.noise.get("sigma_t_k", 0.0)
    t_noisy = t_eff + sigma_t * rng.standard_normal(nbar.size) if sigma_t > 0 else t_eff
    return {"nbar": nbar, "t_eff_k": t_noisy, "q_i": q_i_noisy,
            "q_i_sigma": frac * q_i_noisy if frac > 0 else np.zeros_like(q_i),
            "loss_params": loss, "thermal": thermal,
            "q_i_clean": q_i, "t_eff_clean": t_eff}


def _gen_admittance(spec: SynthSpec, rng) -> dict:
    circuits = [BvdCircuit(**c) for c in spec.truth["circuits"]]
    c0 = spec.truth["c0_f"]
    g = spec.grid
    pts = [np.logspace(math.log10(g["f_min_hz"]), math.log10(g["f_max_hz"]),
                       g.get("n_background", 200))]
    for circ in circuits:
        f_r = circ.omega_r / (2.0 * math.pi)
        width = f_r / circ.q_i
        half = g.get("linewidths", 6.0) * width
        pts.append(np.linspace(f_r - half, f_r + half, g.get("n_per_resonance", 41)))
    freq = np.unique(np.concatenate(pts))
    w = 2.0 * math.pi * freq
    s = 1j * w
    y = c0 * s
    for circ in circuits:
        y = y + 1.0 / (circ.r + s * circ.l + 1.0 / (s * circ.c))
    snr_db = spec.noise.get("snr_db")
    if snr_db is not None:
        sigma = np.abs(y) * 10.0 ** (-snr_db / 20.0)
        y = y + sigma * (rng.standard_normal(freq.size) + 1j * rng.standard_normal(freq.size)) \
            / math.sqrt(2.0)
    return {"trace": ComplexTrace(freq=freq, values=y, kind="admittance"),
            "circuits": circuits, "c0_f": c0}


def _gen_noise_sweep(spec: SynthSpec, rng) -> dict:
    t = spec.truth
    g = spec.grid
    temps = np.arange(g["t_min_k"], g["t_max_k"] + 1e-9, g["t_step_k"])
    freqs = np.linspace(g["f_min_hz"], g["f_max_hz"], g["n_freq"])
    gain = db_to_linear(t["gain_db"])
    n_sys = k_B * t["t_amp_k"] / (h * freqs)
    p_r = johnson_noise_power(temps[:, None], g["delta_f_hz"], freqs[None, :], form="full")
    p_out = gain * (h * freqs[None, :] * g["delta_f_hz"] * n_sys[None, :] + p_r)
    frac = spec.noise.get("frac", 0.0)
    if frac > 0:
        p_out = p_out * (1.0 + frac * rng.standard_normal(p_out.shape))
    return {"sweep": NoiseSweep(temperatures=temps, frequencies=freqs,
                                spectra=p_out, delta_f=g["delta_f_hz"]),
            "gain": gain, "n_sys": n_sys}


def _gen_participation(spec: SynthSpec, rng) -> dict:
    t = spec.truth
    g = spec.grid
    f_al = np.asarray(g.get("f_al", np.linspace(g.get("f_al_min", 0.0),
                                                g.get("f_al_max", 0.05), g.get("n", 12))))
    y = t["delta_al"] * f_al + t["delta_qz"] * (1.0 - f_al)
    sigma = spec.noise.get("sigma", 0.0)
    if sigma > 0:
        y = y + sigma * rng.standard_normal(f_al.size)
    points = [ParticipationPoint(f_al=a, f_delta0=max(v, 1e-12), sigma=sigma or 0.0)
              for a, v in zip(f_al, y)]
    return {"points": points}


def _gen_radiation(spec: SynthSpec, rng) -> dict:
    t = spec.truth
    params = RadiationLeakParams(q_mirr0=t["q_mirr0"], beta_mirr=t["beta_mirr"],
                                 q_tls_const=t["q_tls_const"])
    g = spec.grid
    n_mirr = np.arange(g["n_min"], g["n_max"] + 1)
    qi_inv = params.q_i_inv(n_mirr)
    frac = spec.noise.get("frac", 0.0)
    if frac > 0:
        qi_inv = qi_inv * (1.0 + frac * rng.standard_normal(n_mirr.size))
    q_i = 1.0 / qi_inv
    return {"n_mirr": n_mirr.astype(float), "q_i": q_i,
            "q_i_sigma": frac * q_i if frac > 0 else None, "params": params}


_GENERATORS = {
    "reflection": _gen_reflection,
    "loss-grid": _gen_loss_grid,
    "freq-shift": _gen_freq_shift,
    "ringdown": _gen_ringdown,
    "ringdown-loss": _gen_ringdown_loss,
    "admittance": _gen_admittance,
    "noise-sweep": _gen_noise_sweep,
    "participation": _gen_participation,
    "radiation": _gen_radiation,
}


def _write_files(spec: SynthSpec, payload: dict, manifest: dict, out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if spec.target in ("reflection", "admittance"):
        files.append(io.write_trace(out / "trace.csv", payload["trace"]))
    elif spec.target == "loss-grid":
        files.append(io.write_loss_dataset(out / "loss_grid.csv", payload["dataset"]))
    elif spec.target == "freq-shift":
        files.append(io.write_freq_shift(out / "freq_shift.csv",
                                         payload["temp_k"], payload["f_r_hz"]))
    elif spec.target == "ringdown":
        files.append(io.write_shots(out / "shots", payload["shots"]))
    elif spec.target == "ringdown-loss":
        files.append(io.write_ringdown_loss(out / "ringdown_loss.csv", payload["nbar"],
                                            payload["t_eff_k"], payload["q_i"],
                                            payload["q_i_sigma"]))
    elif spec.target == "noise-sweep":
        files.append(io.write_noise_sweep(out / "noise_sweep.csv", payload["sweep"]))
    elif spec.target == "participation":
        files.append(io.write_participation(out / "participation.csv", payload["points"]))
    elif spec.target == "radiation":
        files.append(io.write_radiation(out / "radiation.csv", payload["n_mirr"],
                                        payload["q_i"], payload["q_i_sigma"]))
    manifest_path = out / "manifest.json"
    io.write_json(manifest_path, manifest)
    files.append(manifest_path)
    return [str(f) for f in files]


def generate(spec: SynthSpec, out_dir: Optional[str] = None) -> GeneratedData:
    """Generate the dataset declared by ``spec``; write files when out_dir given."""
    rng = _rng(spec)
    payload = _GENERATORS[spec.target](spec, rng)
    manifest = _manifest(spec)
    files = _write_files(spec, payload, manifest, out_dir) if out_dir else []
    return GeneratedData(spec=spec, payload=payload, manifest=manifest, files=files)


# --------------------------------------------------------------------------
# named presets with published truth values
# --------------------------------------------------------------------------


def paper_presets() -> dict:
    """Catalog of ready-made synthetic specs mirroring the measured devices."""
    presets = {}

    presets["table1-grid"] = SynthSpec(
        target="loss-grid",
        truth={"f_delta0_diss": 1.26e-5, "n_c": 10.0, "beta": 0.56, "d": 1.9,
               "q_rel_t0": 8.3e6, "t0": 0.25},
        grid={"nbar_min": 1.0, "nbar_max": 126.0, "n_nbar": 21,
              "t_min_k": 0.025, "t_max_k": 1.0, "n_temp": 10, "freq_hz": 499.5e6},
        noise={"frac": 0.02}, seed=2024)

    presets["fig1g-reflection"] = SynthSpec(
        target="reflection",
        truth={"f_r_hz": 499.5e6, "q_i": 161000.0, "qe_mag": 1.2e7, "phi_rad": 0.1},
        grid={"plan": "homophasal", "span_hz": 499.5e6 / 1.59e5 * 5.0, "n": 201},
        noise={"sigma": 0.0025}, seed=11)

    presets["fig3-freqshift"] = SynthSpec(
        target="freq-shift",
        truth={"f_delta0_reac": 1.14e-5, "f0_hz": 502.1e6},
        grid={"t_min_k": 0.025, "t_max_k": 1.0, "n_temp": 25},
        noise={"sigma_hz": 2.0}, seed=3)

    presets["fig3-participation"] = SynthSpec(
        target="participation",
        truth={"delta_qz": 4.5e-6, "delta_al": 4.9e-4},
        grid={"f_al_min": 0.002, "f_al_max": 0.055, "n": 12},
        noise={"sigma": 1.1e-6}, seed=5)

    presets["appB-radiation"] = SynthSpec(
        target="radiation",
        truth={"q_mirr0": 4.1e-3, "beta_mirr": 1.71, "q_tls_const": 4.9e5},
        grid={"n_min": 2, "n_max": 10},
        noise={"frac": 0.01}, seed=7)

    presets["fig4-ringdown"] = SynthSpec(
        target="ringdown-loss",
        truth={"f_delta0_diss": 1.0e-5, "n_c": 10.3, "beta": 0.84, "q_rad": 6.14e7,
               "d": 1.84, "q_rel_t0": 1.48e6, "t0_rel_k": 0.5,
               "gamma_exp": 2.6, "n_channels": 1.6, "t0_k": 0.025,
               "f_r_hz": 502.1e6},
        grid={"nbar_min": 1e3, "nbar_max": 3e7, "n": 25},
        noise={"frac": 0.01, "sigma_t_k": 0.0}, seed=9)

    presets["fig4-shots"] = SynthSpec(
        target="ringdown",
        truth={"f_r_hz": 502.1e6, "q_i": 2.84e7, "qe_mag": 1.19e7, "phi_rad": 0.0,
               "delta_rad_s": 0.0, "a_p": 1.0},
        grid={"pulse_on_s": 0.15, "total_s": 0.165, "sample_rate_hz": 20e3,
              "n_shots": 1000},
        noise={"sigma": 0.05}, seed=13)

    presets["appF-gaincal"] = SynthSpec(
        target="noise-sweep",
        truth={"gain_db": 57.4, "t_amp_k": 1.1},
        grid={"t_min_k": 0.5, "t_max_k": 6.0, "t_step_k": 0.25,
              "f_min_hz": 450e6, "f_max_hz": 550e6, "n_freq": 11, "delta_f_hz": 1e6},
        noise={"frac": 0.002}, seed=17)

    f_centers = np.linspace(265e6, 735e6, 17)
    q_is = 1e4 * (1.0 + 0.4 * np.sin(np.arange(17)))
    circuits = []
    for f_c, q_i in zip(f_centers, q_is):
        c = 1e-15
        omega = 2.0 * math.pi * f_c
        l = 1.0 / (omega ** 2 * c)
        r = math.sqrt(l / c) / q_i
        circuits.append({"r": r, "l": l, "c": c, "c0": 1e-13})
    presets["17-resonance-admittance"] = SynthSpec(
        target="admittance",
        truth={"circuits": circuits, "c0_f": 1e-13},
        grid={"f_min_hz": 250e6, "f_max_hz": 750e6, "n_background": 240,
              "n_per_resonance": 41, "linewidths": 6.0},
        noise={"snr_db": 60.0}, seed=21)

    return presets
