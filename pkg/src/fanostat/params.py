"""Physical parameters, unit conversions, and derived dimensionless quantities.

Conventions used throughout the package:

* spectral quantities in ueV, times in ps, rates in 1/ps
* single conversion constant ``HBAR_UEV_PS`` (hbar in ueV*ps)
* dimensionless detuning ``delta = 2*(E_laser - E_transition)/(hbar*gamma)``
* dimensionless time ``tau_t = tau*gamma/2`` (time in units of ``2/gamma``)
* transition frequencies quoted in THz are ordinary frequencies (E = h*nu)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

HBAR_UEV_PS = 658.2119569

# documented units for every PhysicalParams field (also used in run metadata)
PARAM_UNITS = {
    "omega0": "ueV",
    "lifetime": "ps",
    "dephasing_time": "ps",
    "beta": "1",
    "t0": "1",
    "sigma_wander": "ueV",
    "drive_amp": "ps^-1/2",
    "detector_resp": "ps",
}


def hbar_gamma(lifetime_ps):
    """Energy unit hbar*gamma in ueV for a given radiative lifetime 1/gamma."""
    if lifetime_ps <= 0:
        raise ValueError("lifetime must be positive")
    return HBAR_UEV_PS / lifetime_ps


def phi_from_t0(t0):
    """Background phase phi = arctan(r0/t0) with r0 = -sqrt(1 - t0^2).

    Lies in (-pi/2, 0]; cos(phi) = t0 exactly.
    """
    t0 = np.asarray(t0, dtype=float)
    if np.any(t0 < 0) or np.any(t0 > 1):
        raise ValueError("t0 must lie in [0, 1]")
    out = np.arctan2(-np.sqrt(1.0 - t0 * t0), t0)
    return float(out) if out.ndim == 0 else out


def energy_from_thz(freq_thz):
    """Transition energy in ueV from an ordinary frequency in THz (E = h*nu)."""
    return 2.0 * math.pi * HBAR_UEV_PS * freq_thz


def thz_from_energy(energy_uev):
    """Ordinary frequency in THz from an energy in ueV."""
    return energy_uev / (2.0 * math.pi * HBAR_UEV_PS)


def detuning_to_delta(detuning_uev, lifetime_ps):
    """Dimensionless detuning from a laser-transition detuning in ueV."""
    return 2.0 * np.asarray(detuning_uev, dtype=float) / hbar_gamma(lifetime_ps)


def delta_to_detuning(delta, lifetime_ps):
    """Inverse of :func:`detuning_to_delta`."""
    return np.asarray(delta, dtype=float) * hbar_gamma(lifetime_ps) / 2.0


def tau_to_dimensionless(tau_ps, lifetime_ps):
    """Dimensionless delay tau*gamma/2 from a delay in ps."""
    return np.asarray(tau_ps, dtype=float) / (2.0 * lifetime_ps)


def tau_from_dimensionless(tau_t, lifetime_ps):
    """Inverse of :func:`tau_to_dimensionless`."""
    return np.asarray(tau_t, dtype=float) * 2.0 * lifetime_ps


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional parameters of the emitter, waveguide background, and drive.

    Attributes
    ----------
    omega0 : float
        Transition energy in ueV, measured from the same reference as the
        detunings in any dataset it is compared against.
    lifetime : float
        Radiative lifetime 1/gamma in ps.
    dephasing_time : float
        Pure dephasing time 1/gamma_de in ps.
    beta : float
        Probability of decay into the guided mode, in [0, 1].
    t0 : float
        Bare waveguide amplitude transmission at the transition wavelength,
        in [0, 1].
    sigma_wander : float
        Standard deviation of the spectral wandering in ueV.
    drive_amp : float
        Coherent drive amplitude, square root of the photon flux in ps^-1/2.
    detector_resp : float
        Detector response standard deviation in ps.
    """

    omega0: float = 0.0
    lifetime: float = 125.0
    dephasing_time: float = 38000.0
    beta: float = 0.99
    t0: float = 0.62
    sigma_wander: float = 4.7
    drive_amp: float = 0.0
    detector_resp: float = 34.0

    def __post_init__(self):
        # dephasing_time may be +inf (no pure dephasing)
        for name in ("omega0", "lifetime", "beta", "t0", "sigma_wander",
                     "drive_amp", "detector_resp"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if self.lifetime <= 0:
            raise ValueError("lifetime must be positive")
        if not self.dephasing_time > 0:
            raise ValueError("dephasing_time must be positive")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if not 0.0 <= self.t0 <= 1.0:
            raise ValueError("t0 must lie in [0, 1]")
        if self.sigma_wander < 0:
            raise ValueError("sigma_wander must be non-negative")
        if self.detector_resp < 0:
            raise ValueError("detector_resp must be non-negative")

    @property
    def gamma(self):
        """Radiative decay rate in 1/ps."""
        return 1.0 / self.lifetime

    @property
    def hbar_gamma(self):
        """Linewidth energy unit hbar*gamma in ueV."""
        return hbar_gamma(self.lifetime)

    def replace(self, **changes) -> "PhysicalParams":
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        vals.update(changes)
        return PhysicalParams(**vals)

    @classmethod
    def from_mapping(cls, mapping) -> "PhysicalParams":
        """Build from a flat mapping; unknown keys raise."""
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in mapping.items()})

    def to_mapping(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class DimensionlessParams:
    """Reduced quantities consumed by the correlator formulas.

    ``delta`` is the detuning in units of hbar*gamma/2, ``zeta`` the
    dephasing measure ``1 + 2*gamma_de/gamma``, ``alpha`` the reduced drive
    intensity ``4*beta*|drive|^2/gamma``, ``phi`` the background phase,
    ``T0 = t0^2`` the bare intensity transmission, ``sigma`` the wandering
    width and ``t_resp`` the detector width, both in delta / tau_t units.
    """

    delta: float
    zeta: float
    alpha: float
    phi: float
    T0: float
    sigma: float
    t_resp: float

    def __post_init__(self):
        if self.zeta < 1.0:
            raise ValueError("zeta must be >= 1")
        if self.alpha < 0.0:
            raise ValueError("alpha must be >= 0")
        if not -math.pi / 2 < self.phi <= 0.0:
            raise ValueError("phi must lie in (-pi/2, 0]")
        if self.sigma < 0 or self.t_resp < 0:
            raise ValueError("sigma and t_resp must be >= 0")


def to_dimensionless(p: PhysicalParams, laser_energy_uev) -> DimensionlessParams:
    """Reduce dimensional parameters at a given laser energy.

    The laser energy is measured from the same reference as ``p.omega0``.
    """
    if not math.isfinite(laser_energy_uev):
        raise ValueError("laser energy must be finite")
    hg = p.hbar_gamma
    return DimensionlessParams(
        delta=2.0 * (laser_energy_uev - p.omega0) / hg,
        zeta=1.0 + 2.0 * p.lifetime / p.dephasing_time,
        alpha=4.0 * p.beta * p.drive_amp**2 * p.lifetime,
        phi=phi_from_t0(p.t0),
        T0=p.t0**2,
        sigma=2.0 * p.sigma_wander / hg,
        t_resp=p.detector_resp / (2.0 * p.lifetime),
    )


def from_dimensionless(d: DimensionlessParams, lifetime_ps, omega0_uev=0.0):
    """Invert the reduction back to dimensional quantities, given the lifetime.

    Returns a dict with ``laser_energy``, ``dephasing_time``, ``sigma_wander``,
    ``t0`` and ``detector_resp``; ``alpha`` is passed through unchanged since
    splitting it into beta and drive amplitude is not unique.
    """
    hg = hbar_gamma(lifetime_ps)
    out = {
        "laser_energy": omega0_uev + d.delta * hg / 2.0,
        "sigma_wander": d.sigma * hg / 2.0,
        "t0": math.cos(d.phi),
        "detector_resp": d.t_resp * 2.0 * lifetime_ps,
        "alpha": d.alpha,
    }
    if d.zeta > 1.0:
        out["dephasing_time"] = 2.0 * lifetime_ps / (d.zeta - 1.0)
    else:
        out["dephasing_time"] = math.inf
    return out


@dataclass(frozen=True)
class CouplingVector:
    """Coupling of the emitter to the left- and right-moving guided modes."""

    left: complex
    right: complex

    @property
    def norm_squared(self):
        return abs(self.left) ** 2 + abs(self.right) ** 2

    def as_array(self):
        return np.array([self.left, self.right], dtype=complex)


def coupling_vector(beta, gamma, phi) -> CouplingVector:
    """Guided-mode coupling for an emitter centered in the background cavity.

    Both components equal ``i*exp(i*phi/2)*sqrt(beta*gamma/2)``; the squared
    norm is ``beta*gamma``.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    d = 1j * np.exp(1j * phi / 2.0) * math.sqrt(beta * gamma / 2.0)
    return CouplingVector(left=complex(d), right=complex(d))


@dataclass(frozen=True)
class ScatteringMatrix:
    """2x2 unitary scattering matrix of the bare waveguide background."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError("scattering matrix must be 2x2")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def unitarity_defect(self):
        m = self.matrix
        return float(np.max(np.abs(m.conj().T @ m - np.eye(2))))


def scattering_matrix(t0) -> ScatteringMatrix:
    """Background scattering matrix ((t0, i*r0), (i*r0, t0)), r0 = -sqrt(1-t0^2)."""
    if not 0.0 <= t0 <= 1.0:
        raise ValueError("t0 must lie in [0, 1]")
    r0 = -math.sqrt(1.0 - t0 * t0)
    return ScatteringMatrix(np.array([[t0, 1j * r0], [1j * r0, t0]], dtype=complex))
