"""Numerical ground truth: driven two-level dynamics and output correlators.

This module never touches the closed-form correlators. It integrates the
rotating-frame equations of motion for the emitter averages, applies the
regression rule (two-time correlators obey the same linear system, with the
inhomogeneous term scaled by the equal-time expectation of the sandwich
operators), and assembles the transmitted-field correlators from the
input-output relation ``c_out = t0*c_in + d*sigma_minus``.

Reduced units as elsewhere: time in 2/gamma, so the population decays at
rate 2 and the coherence at rate zeta; the drive enters as
``g = i*exp(i*phi/2)*sqrt(alpha/2)``.

Operator products are reduced through an explicit algebra table over the
basis ("1", "-", "+", "z"), which keeps every initial condition and moment
assembly testable in isolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .params import DimensionlessParams

# products sigma_a * sigma_b as {basis_label: coefficient}
PRODUCT_TABLE = {
    ("-", "-"): {},
    ("-", "+"): {"1": 0.5, "z": -0.5},
    ("-", "z"): {"-": 1.0},
    ("+", "-"): {"1": 0.5, "z": 0.5},
    ("+", "+"): {},
    ("+", "z"): {"+": -1.0},
    ("z", "-"): {"-": -1.0},
    ("z", "+"): {"+": 1.0},
    ("z", "z"): {"1": 1.0},
}


def reduce_product(ops):
    """Reduce a product of basis operators to basis coefficients.

    ``ops`` is a sequence over {"1", "-", "+", "z"}; the result maps basis
    labels to complex coefficients.
    """
    acc = {"1": 1.0 + 0j}
    for op in ops:
        if op == "1":
            continue
        if op not in ("-", "+", "z"):
            raise ValueError(f"unknown operator label {op!r}")
        nxt: dict[str, complex] = {}
        for label, coef in acc.items():
            if label == "1":
                nxt[op] = nxt.get(op, 0.0) + coef
                continue
            for lbl2, c2 in PRODUCT_TABLE[(label, op)].items():
                nxt[lbl2] = nxt.get(lbl2, 0.0) + coef * c2
        acc = nxt
    return acc


@dataclass(frozen=True)
class BlochState:
    """One-time emitter averages in the rotating frame."""

    s_minus: complex
    s_z: float

    @property
    def s_plus(self):
        return np.conj(self.s_minus)

    @property
    def population(self):
        return (1.0 + self.s_z) / 2.0

    def physicality_defect(self):
        """How far |<sigma_->|^2 exceeds (1+s_z)(1-s_z)/4; <= 0 is physical."""
        return abs(self.s_minus) ** 2 - (1.0 + self.s_z) * (1.0 - self.s_z) / 4.0

    def moment(self, coeffs):
        """Expectation of a basis-coefficient dict in this state."""
        vals = {"1": 1.0, "-": self.s_minus, "+": np.conj(self.s_minus),
                "z": self.s_z}
        return sum(c * vals[k] for k, c in coeffs.items())


@dataclass(frozen=True)
class RegressionVector:
    """Two-time correlator triple <L sigma_l(t+tau) R> for l in (-, +, z).

    ``identity`` is <L R>, which scales the inhomogeneous term of the
    evolution (the regression rule); it is constant along the trajectory.
    """

    components: np.ndarray
    identity: complex

    def __post_init__(self):
        comp = np.asarray(self.components, dtype=complex)
        if comp.shape != (3,):
            raise ValueError("components must be a length-3 complex vector")
        comp.setflags(write=False)
        object.__setattr__(self, "components", comp)


def drive_amplitude(params: DimensionlessParams):
    """Reduced drive g = i*exp(i*phi/2)*sqrt(alpha/2)."""
    return 1j * np.exp(1j * params.phi / 2.0) * math.sqrt(params.alpha / 2.0)


def bloch_matrix(params: DimensionlessParams):
    """Linear system (M, b) with d/dtau (s-, s+, s_z) = M v + b."""
    g = drive_amplitude(params)
    dlt, z = params.delta, params.zeta
    M = np.array([
        [1j * dlt - z, 0.0, -g],
        [0.0, -1j * dlt - z, -np.conj(g)],
        [2.0 * np.conj(g), 2.0 * g, -2.0],
    ], dtype=complex)
    b = np.array([0.0, 0.0, -2.0], dtype=complex)
    return M, b


def steady_state(params: DimensionlessParams) -> BlochState:
    """Stationary emitter averages; the undriven limit is the ground state."""
    M, b = bloch_matrix(params)
    try:
        v = np.linalg.solve(M, -b)
    except np.linalg.LinAlgError as err:
        raise ValueError("stationary system is singular") from err
    residual = float(np.max(np.abs(M @ v + b)))
    if residual > 1e-12:
        raise ValueError(f"stationary residual too large: {residual:.2e}")
    state = BlochState(s_minus=complex(v[0]), s_z=float(np.real(v[2])))
    if abs(np.imag(v[2])) > 1e-12 or abs(np.conj(v[0]) - v[1]) > 1e-10:
        raise ValueError("stationary solution violates conjugation symmetry")
    return state


def _as_vector(initial):
    if isinstance(initial, BlochState):
        return np.array([initial.s_minus, np.conj(initial.s_minus),
                         initial.s_z], dtype=complex), 1.0 + 0j
    if isinstance(initial, RegressionVector):
        return initial.components.astype(complex), initial.identity
    raise TypeError("initial must be a BlochState or RegressionVector")


def evolve(initial, duration, params: DimensionlessParams, t_eval=None,
           rtol=1e-10, atol=1e-12):
    """Propagate a state or regression vector for a reduced duration.

    Returns ``(times, states)`` with ``states`` of shape (n, 3). Uses an
    adaptive high-order explicit integrator; the system is linear, so the
    terminal state can be cross-checked against the matrix exponential
    (see :func:`propagate_exact`).
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    v0, ident = _as_vector(initial)
    M, b = bloch_matrix(params)
    binh = b * ident

    def rhs(_t, y):
        return M @ y + binh

    sol = solve_ivp(rhs, (0.0, duration), v0, method="DOP853", rtol=rtol,
                    atol=atol, t_eval=t_eval, dense_output=False)
    if not sol.success:
        raise RuntimeError(f"integration failed: {sol.message}")
    return sol.t, sol.y.T


def propagate_exact(initial, tau, params: DimensionlessParams):
    """Closed-form propagation of the linear system via matrix exponential."""
    v0, ident = _as_vector(initial)
    M, b = bloch_matrix(params)
    vinf = np.linalg.solve(M, -b * ident)
    return vinf + expm(M * tau) @ (v0 - vinf)


def _kappa(params: DimensionlessParams, beta):
    """Emitter amplitude relative to the background field, d/(t0*alpha_in)."""
    if params.alpha <= 0:
        raise ValueError("output correlators need a finite drive (alpha > 0)")
    t0 = math.cos(params.phi)
    if t0 <= 0:
        raise ValueError("t0 = 0 leaves no transmitted background to normalize by")
    return 1j * np.exp(1j * params.phi / 2.0) * beta * math.sqrt(2.0 / params.alpha) / t0


def output_correlator_g1(params: DimensionlessParams, beta):
    """Stationary normalized transmission assembled from steady-state moments."""
    if beta == 0.0:
        return 1.0
    ss = steady_state(params)
    kap = _kappa(params, beta)
    n = ss.moment(reduce_product(("+", "-")))
    return float(1.0 + 2.0 * np.real(kap * ss.s_minus) + abs(kap) ** 2 * np.real(n))


def regression_initials(ss: BlochState):
    """Equal-time initial conditions for the two regression propagations.

    Returns ``(u0, v0)``: u has (L, R) = (1, sigma_minus), v has
    (L, R) = (sigma_plus, sigma_minus). Components are the sandwiched
    one-time operators (-, +, z), built through the product table.
    """
    u_comp = [ss.moment(reduce_product((l, "-"))) for l in ("-", "+", "z")]
    v_comp = [ss.moment(reduce_product(("+", l, "-"))) for l in ("-", "+", "z")]
    u0 = RegressionVector(np.array(u_comp), identity=ss.moment({"-": 1.0}))
    v0 = RegressionVector(np.array(v_comp), identity=ss.moment(reduce_product(("+", "-"))))
    return u0, v0


def output_correlator_g2(tau_grid, params: DimensionlessParams, beta,
                         rtol=1e-10, atol=1e-12):
    """Normalized two-time intensity correlator of the transmitted field.

    Propagates the two regression vectors over ``tau_grid`` (reduced units,
    non-negative, increasing) and assembles the normally ordered four-point
    correlator; the result is normalized by the squared stationary intensity
    so it approaches 1 at long delay.
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    if tau_grid.ndim != 1 or tau_grid.size == 0:
        raise ValueError("tau_grid must be a non-empty 1-d array")
    if np.any(tau_grid < 0) or np.any(np.diff(tau_grid) <= 0):
        raise ValueError("tau_grid must be non-negative and increasing")
    if beta == 0.0:
        return np.ones_like(tau_grid)

    ss = steady_state(params)
    kap = _kappa(params, beta)
    u0, v0 = regression_initials(ss)
    M, b = bloch_matrix(params)

    # propagate both vectors as one 6-dimensional linear system
    y0 = np.concatenate([u0.components, v0.components])
    binh = np.concatenate([b * u0.identity, b * v0.identity])
    Mbig = np.zeros((6, 6), dtype=complex)
    Mbig[:3, :3] = M
    Mbig[3:, 3:] = M

    def rhs(_t, y):
        return Mbig @ y + binh

    span = (0.0, float(tau_grid[-1])) if tau_grid[-1] > 0 else (0.0, 1e-12)
    t_eval = tau_grid if tau_grid[-1] > 0 else None
    sol = solve_ivp(rhs, span, y0, method="DOP853", rtol=rtol, atol=atol,
                    t_eval=t_eval)
    if not sol.success:
        raise RuntimeError(f"integration failed: {sol.message}")
    y = sol.y if t_eval is not None else y0[:, None]
    um, up, uz = y[0], y[1], y[2]
    vm, _vp, vz = y[3], y[4], y[5]

    n_ss = np.real(ss.moment(reduce_product(("+", "-"))))
    u_n = (u0.identity + uz) / 2.0          # <(sig+ sig-)(t+tau) sig-(t)>
    v_n = (v0.identity + vz) / 2.0          # <sig+ (sig+ sig-)(t+tau) sig->
    k2 = abs(kap) ** 2

    G = (1.0
         + 4.0 * np.real(kap * ss.s_minus)
         + 2.0 * k2 * n_ss
         + 2.0 * np.real(kap**2 * um)
         + 2.0 * k2 * np.real(up)
         + 2.0 * k2 * np.real(kap * u_n)
         + 2.0 * k2 * np.real(kap * vm)
         + k2**2 * np.real(v_n))
    imag_defect = float(np.max(np.abs(np.imag(v_n))))
    if imag_defect > 1e-8:
        raise RuntimeError(f"sandwich correlator not real: {imag_defect:.2e}")

    g1 = 1.0 + 2.0 * np.real(kap * ss.s_minus) + k2 * n_ss
    g2 = G / g1**2
    if np.any(g2 < -1e-8):
        raise RuntimeError("negative correlator beyond tolerance: integration fault")
    return g2
