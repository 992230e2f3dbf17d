"""Equivalent-circuit identification from one-port admittance data.

Admittance spectra are approximated by a rational model in the Laplace
variable s = i omega,

    Y(s) = sum_k [ c_k / (s - p_k) + c_k* / (s - p_k*) ] + e s,

using the pole-relocation vector-fitting scheme of Gustavsen & Semlyen
(IEEE Trans. Power Delivery 14, 1052 (1999)).  Each conjugate pole/residue
pair maps onto a Butterworth-Van Dyke branch (series RLC shunted by C0)
plus a voltage-controlled current source absorbing the residual admittance
b / (s^2 + s c + d) that the plain BVD topology cannot represent:

    L = 1 / (2 c_k'),   R = -p_k' / c_k',   C = 2 c_k' / |p_k|^2,
    C0 = e,             b = -2 (c_k' p_k' + c_k'' p_k''),   g = b L C.

Resonance-theory mapping at line impedance Z0:
w_r = 1/sqrt(LC), Q_i = sqrt(L/C)/R, Q_e = sqrt(L/C)/Z0, kappa_i = R/L,
kappa_e = Z0/L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .resonance import ComplexTrace, ResonanceParams


@dataclass(frozen=True)
class PoleResidueModel:
    """Conjugate-pair rational admittance model.

    Only the upper-half-plane member of each pair is stored; evaluation adds
    the conjugate.  ``e`` is the proportional (capacitive) coefficient in
    farads.  ``stable`` is False when pole flipping failed to keep every
    pole in the left half plane.
    """

    poles: np.ndarray            # complex, Im > 0 members
    residues: np.ndarray         # complex, matching order
    e: float
    stable: bool = True

    def __post_init__(self):
        object.__setattr__(self, "poles", np.atleast_1d(np.asarray(self.poles, dtype=complex)))
        object.__setattr__(self, "residues",
                           np.atleast_1d(np.asarray(self.residues, dtype=complex)))
        if self.poles.size != self.residues.size:
            raise ValueError("poles and residues must pair up")

    @property
    def pole_frequencies_hz(self) -> np.ndarray:
        return np.abs(self.poles.imag) / (2.0 * math.pi)

    def sorted_by_frequency(self) -> "PoleResidueModel":
        order = np.argsort(np.abs(self.poles.imag))
        return PoleResidueModel(self.poles[order], self.residues[order], self.e, self.stable)


@dataclass(frozen=True)
class BvdCircuit:
    """Butterworth-Van Dyke circuit with optional VCCS shunt."""

    r: float      # ohm
    l: float      # henry
    c: float      # farad
    c0: float     # farad
    b: float = 0.0   # VCCS numerator, A rad^2/s^2 per volt

    def __post_init__(self):
        if min(self.r, self.l, self.c, self.c0) <= 0:
            raise ValueError("R, L, C, C0 must be positive for a passive circuit")

    @property
    def g(self) -> float:
        """VCCS control factor g = b L C."""
        return self.b * self.l * self.c

    @property
    def omega_r(self) -> float:
        return 1.0 / math.sqrt(self.l * self.c)

    @property
    def q_i(self) -> float:
        return math.sqrt(self.l / self.c) / self.r


def eval_admittance(model: Union[PoleResidueModel, BvdCircuit], omega):
    """Complex admittance of a pole/residue model or a BVD(+VCCS) circuit."""
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ValueError("omega must be positive")
    s = 1j * w
    if isinstance(model, PoleResidueModel):
        y = np.zeros_like(s)
        for p, c in zip(model.poles, model.residues):
            y = y + c / (s - p) + np.conj(c) / (s - np.conj(p))
        return y + model.e * s
    if isinstance(model, BvdCircuit):
        y = 1.0 / (model.r + s * model.l + 1.0 / (s * model.c)) + model.c0 * s
        if model.b != 0.0:
            denom = s ** 2 + s * model.r / model.l + 1.0 / (model.l * model.c)
            y = y + model.b / denom
        return y
    raise TypeError("model must be a PoleResidueModel or BvdCircuit")


# --------------------------------------------------------------------------
# vector fitting
# --------------------------------------------------------------------------


def _pair_basis(s: np.ndarray, poles: np.ndarray) -> np.ndarray:
    """Real-coefficient basis columns for conjugate pole pairs.

    For each stored pole p the two columns are 1/(s-p) + 1/(s-p*) and
    i/(s-p) - i/(s-p*); real coefficient vectors (x1, x2) then encode the
    complex residue c = x1 + i x2.
    """
    cols = np.empty((s.size, 2 * poles.size), dtype=complex)
    for k, p in enumerate(poles):
        a = 1.0 / (s - p)
        b = 1.0 / (s - np.conj(p))
        cols[:, 2 * k] = a + b
        cols[:, 2 * k + 1] = 1j * (a - b)
    return cols


def _weighted_lstsq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-scaled least squares; returns the solution in original scaling."""
    norms = np.linalg.norm(a, axis=0)
    norms[norms == 0] = 1.0
    x, residuals, rank, _ = np.linalg.lstsq(a / norms, b, rcond=None)
    if rank < a.shape[1]:
        raise np.linalg.LinAlgError(
            f"rank-deficient vector-fit system (rank {rank} < {a.shape[1]}); "
            "try fewer pole pairs")
    return x / norms


def _relocate_poles(z: np.ndarray, s: np.ndarray, poles: np.ndarray,
                    weights: np.ndarray) -> np.ndarray:
    """One sigma-iteration: solve the linearized problem and return new poles."""
    npair = poles.size
    phi = _pair_basis(s, poles)
    # unknowns: [residues (2 npair), e, sigma residues (2 npair)]
    a = np.hstack([phi, s[:, None], -phi * z[:, None]])
    a = a * weights[:, None]
    b = z * weights
    a_ri = np.vstack([a.real, a.imag])
    b_ri = np.concatenate([b.real, b.imag])
    x = _weighted_lstsq(a_ri, b_ri)
    sig = x[2 * npair + 1:]

    # zeros of sigma(s) = 1 + sum_k sig_k phi_k(s): eigenvalues of A - b c^T
    a_mat = np.zeros((2 * npair, 2 * npair))
    b_vec = np.zeros(2 * npair)
    c_vec = np.zeros(2 * npair)
    for k, p in enumerate(poles):
        i = 2 * k
        a_mat[i, i] = a_mat[i + 1, i + 1] = p.real
        a_mat[i, i + 1] = p.imag
        a_mat[i + 1, i] = -p.imag
        b_vec[i] = 2.0
        c_vec[i] = sig[i]
        c_vec[i + 1] = sig[i + 1]
    h = a_mat - np.outer(b_vec, c_vec)
    new = np.linalg.eigvals(h)
    new = new[np.imag(new) > 0]
    # flip any unstable poles into the left half plane
    new = np.where(new.real > 0, -np.conj(new) * np.array(1.0), new)
    new = np.array([p if p.real <= 0 else complex(-p.real, p.imag) for p in new])
    if new.size < npair:
        # eigenvalues that collapsed onto the real axis: re-seed them nearby
        missing = npair - new.size
        pad = poles[:missing] * (1.0 + 1e-3)
        new = np.concatenate([new, pad])
    return np.sort_complex(new)


def _solve_residues(z: np.ndarray, s: np.ndarray, poles: np.ndarray,
                    weights: np.ndarray) -> Tuple[np.ndarray, float]:
    phi = _pair_basis(s, poles)
    a = np.hstack([phi, s[:, None]]) * weights[:, None]
    b = z * weights
    a_ri = np.vstack([a.real, a.imag])
    b_ri = np.concatenate([b.real, b.imag])
    x = _weighted_lstsq(a_ri, b_ri)
    res = x[0:2 * poles.size:2] + 1j * x[1:2 * poles.size:2]
    return res, float(x[-1])


def vector_fit(trace: ComplexTrace, n_pairs: int, n_iter: int = 30,
               pole_tol: float = 1e-9) -> PoleResidueModel:
    """Fit an admittance trace with ``n_pairs`` conjugate pole pairs plus e s.

    Initial poles are log-spaced across the data band with imaginary/real
    ratio 100; each iteration solves the 1/|Y|-weighted linearized problem,
    relocates the poles to the zeros of the scaling function (flipping any
    unstable ones), and stops once the maximum relative pole movement falls
    below ``pole_tol``.  Residues and the proportional term are solved last.
    """
    if trace.kind != "admittance":
        raise ValueError("vector_fit expects an admittance trace")
    w = 2.0 * math.pi * trace.freq
    z = trace.values.copy()
    w_scale = w[-1]
    s = 1j * (w / w_scale)

    weights = 1.0 / np.abs(z)
    weights[~np.isfinite(weights)] = 1.0

    if n_pairs == 0:
        # proportional term only
        a = (s[:, None] * weights[:, None])
        a_ri = np.vstack([a.real, a.imag])
        b_ri = np.concatenate([(z * weights).real, (z * weights).imag])
        e = float(np.linalg.lstsq(a_ri, b_ri, rcond=None)[0][0]) / w_scale
        return PoleResidueModel(poles=np.empty(0, dtype=complex),
                                residues=np.empty(0, dtype=complex), e=e)

    w_lo, w_hi = w[0] / w_scale, 1.0
    beta = np.logspace(math.log10(max(w_lo, 1e-6)), math.log10(w_hi), n_pairs)
    poles = np.array([complex(-b / 100.0, b) for b in beta])

    for _ in range(max(n_iter, 1)):
        new = _relocate_poles(z, s, poles, weights)
        move = np.max(np.abs(new - poles) / np.abs(poles))
        poles = new
        if move < pole_tol:
            break

    residues, e_scaled = _solve_residues(z, s, poles, weights)
    stable = bool(np.all(poles.real < 0))
    model = PoleResidueModel(poles=poles * w_scale, residues=residues * w_scale,
                             e=e_scaled / w_scale, stable=stable)
    return model.sorted_by_frequency()


# --------------------------------------------------------------------------
# circuit mapping
# --------------------------------------------------------------------------


def to_equivalent_circuit(pole: complex, residue: complex, e: float) -> BvdCircuit:
    """Map one conjugate pole/residue pair (+ proportional term) to a BVD circuit."""
    cr, ci = residue.real, residue.imag
    pr, pi = pole.real, pole.imag
    if cr <= 0:
        raise ValueError("non-passive fit: residue real part must be positive (L > 0)")
    l = 1.0 / (2.0 * cr)
    r = -pr / cr
    c = 2.0 * cr / abs(pole) ** 2
    b = -2.0 * (cr * pr + ci * pi)
    return BvdCircuit(r=r, l=l, c=c, c0=e, b=b)


def circuit_to_resonance(circuit: BvdCircuit, z0: float = 50.0) -> ResonanceParams:
    """Resonance parameters of a BVD branch read out through impedance z0."""
    sqrt_lc = math.sqrt(circuit.l / circuit.c)
    omega_r = 1.0 / math.sqrt(circuit.l * circuit.c)
    return ResonanceParams(f_r=omega_r / (2.0 * math.pi),
                           q_i=sqrt_lc / circuit.r,
                           qe_mag=sqrt_lc / z0,
                           phi=0.0)


def vccs_ratio(pole: complex, residue: complex, omega) -> np.ndarray:
    """Diagnostic |Y_VCCS| / |Y_BVD| = |c p* + c* p| / (|c + c*| omega).

    Small values justify dropping the VCCS shunt near the frequencies of
    interest; the ratio falls off as 1/omega.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ValueError("omega must be positive")
    num = abs(2.0 * (residue.real * pole.real + residue.imag * pole.imag))
    den = abs(2.0 * residue.real)
    return num / (den * w)


def extract_resonances(model: PoleResidueModel, z0: float = 50.0):
    """BVD circuit and resonance parameters for every fitted pair."""
    out = []
    for p, c in zip(model.poles, model.residues):
        circuit = to_equivalent_circuit(p, c, model.e)
        out.append((circuit, circuit_to_resonance(circuit, z0)))
    return out
