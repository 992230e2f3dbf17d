"""Readers and writers for the package's on-disk formats.

All files are plain CSV with a header row (SI units encoded in the column
names) or JSON.  Formats:

    trace CSV          freq_hz,re,im                  (reflection S11)
    admittance CSV     freq_hz,re_siemens,im_siemens
    loss dataset CSV   nbar,temp_k,q_i,q_i_sigma,freq_hz
    freq-shift CSV     temp_k,f_r_hz
    participation CSV  f_al,f_delta0,sigma
    radiation CSV      n_mirr,q_i[,q_i_sigma]
    ringdown-loss CSV  nbar,t_eff_k,q_i[,q_i_sigma]
    shot CSV           time_s,i,q        (one file per shot + manifest JSON)
    noise sweep CSV    temp_k,freq_hz,p_out_w
    calib result CSV   freq_hz,gain_db,n_sys,atten_db
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .calib import NoiseSweep
from .resonance import ComplexTrace
from .ringdown import ShotSet
from .tls_loss import LossDataset, ParticipationPoint


def _read_columns(path, required: Sequence[str], optional: Sequence[str] = ()) -> dict:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty file")
        names = [n.strip() for n in reader.fieldnames]
        missing = [c for c in required if c not in names]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}; found {names}")
        rows = list(reader)
    out = {}
    for col in list(required) + [c for c in optional if c in names]:
        out[col] = np.array([float(r[col]) for r in rows])
    return out


def _write_csv(path, header: Sequence[str], columns: Sequence[np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt="%.17g")
    return path


def read_trace(path, kind: str = "reflection") -> ComplexTrace:
    if kind == "admittance":
        cols = _read_columns(path, ["freq_hz", "re_siemens", "im_siemens"])
        values = cols["re_siemens"] + 1j * cols["im_siemens"]
    else:
        cols = _read_columns(path, ["freq_hz", "re", "im"])
        values = cols["re"] + 1j * cols["im"]
    return ComplexTrace(freq=cols["freq_hz"], values=values, kind=kind)


def write_trace(path, trace: ComplexTrace) -> Path:
    if trace.kind == "admittance":
        header = ["freq_hz", "re_siemens", "im_siemens"]
    else:
        header = ["freq_hz", "re", "im"]
    return _write_csv(path, header, [trace.freq, trace.values.real, trace.values.imag])


def read_loss_dataset(path) -> LossDataset:
    cols = _read_columns(path, ["nbar", "temp_k", "q_i", "q_i_sigma", "freq_hz"])
    return LossDataset(**cols)


def write_loss_dataset(path, data: LossDataset) -> Path:
    return _write_csv(path, ["nbar", "temp_k", "q_i", "q_i_sigma", "freq_hz"],
                      [data.nbar, data.temp_k, data.q_i, data.q_i_sigma, data.freq_hz])


def read_freq_shift(path):
    cols = _read_columns(path, ["temp_k", "f_r_hz"])
    return cols["temp_k"], cols["f_r_hz"]


def write_freq_shift(path, temp_k, f_r_hz) -> Path:
    return _write_csv(path, ["temp_k", "f_r_hz"], [temp_k, f_r_hz])


def read_participation(path):
    cols = _read_columns(path, ["f_al", "f_delta0"], optional=["sigma"])
    sig = cols.get("sigma", np.zeros_like(cols["f_al"]))
    return [ParticipationPoint(f_al=a, f_delta0=d, sigma=s)
            for a, d, s in zip(cols["f_al"], cols["f_delta0"], sig)]


def write_participation(path, points: Sequence[ParticipationPoint]) -> Path:
    return _write_csv(path, ["f_al", "f_delta0", "sigma"],
                      [[p.f_al for p in points], [p.f_delta0 for p in points],
                       [p.sigma for p in points]])


def read_radiation(path):
    cols = _read_columns(path, ["n_mirr", "q_i"], optional=["q_i_sigma"])
    return cols["n_mirr"], cols["q_i"], cols.get("q_i_sigma")


def write_radiation(path, n_mirr, q_i, q_i_sigma=None) -> Path:
    if q_i_sigma is None:
        return _write_csv(path, ["n_mirr", "q_i"], [n_mirr, q_i])
    return _write_csv(path, ["n_mirr", "q_i", "q_i_sigma"], [n_mirr, q_i, q_i_sigma])


def read_ringdown_loss(path):
    cols = _read_columns(path, ["nbar", "t_eff_k", "q_i"], optional=["q_i_sigma"])
    return cols["nbar"], cols["t_eff_k"], cols["q_i"], cols.get("q_i_sigma")


def write_ringdown_loss(path, nbar, t_eff_k, q_i, q_i_sigma=None) -> Path:
    if q_i_sigma is None:
        return _write_csv(path, ["nbar", "t_eff_k", "q_i"], [nbar, t_eff_k, q_i])
    return _write_csv(path, ["nbar", "t_eff_k", "q_i", "q_i_sigma"],
                      [nbar, t_eff_k, q_i, q_i_sigma])


def write_shots(directory, shots: ShotSet, extra_manifest: Optional[dict] = None) -> Path:
    """One time_s,i,q CSV per shot plus a manifest.json describing the set."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for k in range(shots.n_shots):
        name = f"shot_{k:05d}.csv"
        _write_csv(directory / name, ["time_s", "i", "q"],
                   [shots.time, shots.i_values[k], shots.q_values[k]])
        files.append(name)
    manifest = {
        "n_shots": shots.n_shots,
        "sample_rate_hz": shots.sample_rate,
        "pulse_on_s": shots.pulse_on,
        "total_s": float(shots.time[-1] + (shots.time[1] - shots.time[0])),
        "files": files,
    }
    manifest.update(extra_manifest or {})
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def read_shots(manifest_path) -> ShotSet:
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    directory = manifest_path.parent
    i_rows, q_rows = [], []
    time = None
    for name in manifest["files"]:
        cols = _read_columns(directory / name, ["time_s", "i", "q"])
        time = cols["time_s"]
        i_rows.append(cols["i"])
        q_rows.append(cols["q"])
    return ShotSet(time, np.vstack(i_rows), np.vstack(q_rows),
                   pulse_on=manifest["pulse_on_s"], sample_rate=manifest["sample_rate_hz"])


def read_noise_sweep(path, delta_f: Optional[float] = None) -> NoiseSweep:
    cols = _read_columns(path, ["temp_k", "freq_hz", "p_out_w"], optional=["delta_f_hz"])
    temps = np.unique(cols["temp_k"])
    freqs = np.unique(cols["freq_hz"])
    spectra = np.full((temps.size, freqs.size), np.nan)
    ti = np.searchsorted(temps, cols["temp_k"])
    fi = np.searchsorted(freqs, cols["freq_hz"])
    spectra[ti, fi] = cols["p_out_w"]
    if np.any(np.isnan(spectra)):
        raise ValueError(f"{path}: sweep grid is not complete over (temp, freq)")
    if delta_f is None:
        if "delta_f_hz" not in cols:
            raise ValueError("resolution bandwidth needed: pass delta_f or add a delta_f_hz column")
        delta_f = float(cols["delta_f_hz"][0])
    return NoiseSweep(temperatures=temps, frequencies=freqs, spectra=spectra, delta_f=delta_f)


def write_noise_sweep(path, sweep: NoiseSweep) -> Path:
    temps = np.repeat(sweep.temperatures, sweep.frequencies.size)
    freqs = np.tile(sweep.frequencies, sweep.temperatures.size)
    powers = sweep.spectra.ravel()
    bw = np.full_like(powers, sweep.delta_f)
    return _write_csv(path, ["temp_k", "freq_hz", "p_out_w", "delta_f_hz"],
                      [temps, freqs, powers, bw])


def write_calib_result(path, frequencies, gain_db, n_sys, atten_db=None) -> Path:
    if atten_db is None:
        atten_db = np.full_like(np.asarray(gain_db, dtype=float), np.nan)
    return _write_csv(path, ["freq_hz", "gain_db", "n_sys", "atten_db"],
                      [frequencies, gain_db, n_sys, atten_db])


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True))
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()
