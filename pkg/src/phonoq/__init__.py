"""phonoq: analysis toolkit for phononic-crystal resonator spectroscopy.

Submodules
----------
fitting      bounded Levenberg-Marquardt engine shared by every fit
resonance    DCM reflection lineshape, circle fits, sweep planning
tls_loss     phenomenological TLS loss / frequency-shift models and fits
tls_micro    microscopic TLS bath: susceptibilities, rates, Monte Carlo
ringdown     time-domain ringdown simulation and analysis
circuit_id   vector fitting of admittance data to equivalent circuits
calib        Johnson-Nyquist Y-factor gain and attenuation calibration
synth        seeded synthetic datasets for every fitter
cli          command-line entry points
"""

__version__ = "0.1.0"

from . import calib, circuit_id, fitting, resonance, ringdown, synth, tls_loss, tls_micro  # noqa: F401
