"""Least-squares inference of physical parameters from measured data.

Two layers: a phenomenological asymmetric-lineshape fit for quick looks at
transmission scans, and the full physical model fit (transmission plus
photon-correlation data, jointly or sequentially) over the parameter set
(omega0, gamma, gamma_de, sigma, t0, beta).

The full fit runs a bounded trust-region least-squares in a transformed
space: rates and widths are fit in log space, t0 and beta through a logistic
map, and omega0 linearly. Weights are inverse variance; an optional scalar
knob rebalances transmission against correlation data.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .averaging import AveragingSpec, ModelCurves
from .params import PhysicalParams, to_dimensionless

FIT_FIELDS = ("omega0", "lifetime", "dephasing_time", "sigma_wander", "t0", "beta")

DEFAULT_BOUNDS = {
    "omega0": (-20.0, 20.0),
    "lifetime": (10.0, 2000.0),
    "dephasing_time": (100.0, 1e7),
    "sigma_wander": (0.2, 50.0),
    "t0": (0.02, 0.995),
    "beta": (0.05, 0.9999),
}


@dataclass(frozen=True)
class G2Histogram:
    """Raw coincidence histogram at one detuning: tau grid (ps) and counts."""

    detuning: float
    tau_ps: np.ndarray
    counts: np.ndarray
    uncertainty: np.ndarray | None = None

    def __post_init__(self):
        tau = np.asarray(self.tau_ps, dtype=float)
        cnt = np.asarray(self.counts, dtype=float)
        if tau.ndim != 1 or tau.shape != cnt.shape:
            raise ValueError("tau_ps and counts must be matching 1-d arrays")
        if np.any(cnt < 0):
            raise ValueError("histogram counts must be non-negative")
        unc = self.uncertainty
        if unc is not None:
            unc = np.asarray(unc, dtype=float)
            if unc.shape != cnt.shape or np.any(unc <= 0):
                raise ValueError("uncertainty must be positive and match counts")
            unc.setflags(write=False)
        tau.setflags(write=False)
        cnt.setflags(write=False)
        object.__setattr__(self, "tau_ps", tau)
        object.__setattr__(self, "counts", cnt)
        object.__setattr__(self, "uncertainty", unc)

    def tail_mask(self, tail_fraction=0.2):
        """Bins counted as "long delay" for the normalization level."""
        atau = np.abs(self.tau_ps)
        return atau >= np.quantile(atau, 1.0 - tail_fraction)

    def normalized(self, tail_fraction=0.2):
        """g2 values and sigmas, normalized to the long-delay level.

        Model curves compared against these values must be normalized by
        their own mean over the same bins (see ``tail_mask``), which removes
        the shared scale even when the grid does not quite reach the
        asymptote.
        """
        norm = float(np.mean(self.counts[self.tail_mask(tail_fraction)]))
        if norm <= 0:
            raise ValueError("histogram tail level is zero; cannot normalize")
        unc = self.uncertainty
        if unc is None:
            unc = np.sqrt(np.maximum(self.counts, 1.0))
        return self.counts / norm, unc / norm


@dataclass(frozen=True)
class MeasurementSet:
    """Ingested experimental records.

    ``transmission`` and ``g2zero`` are (n, 3) arrays with columns
    (detuning ueV, value, uncertainty); either may be empty. Histograms are
    optional time-resolved g2 records.
    """

    transmission: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    g2zero: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    g2_histograms: tuple = ()

    def __post_init__(self):
        for name in ("transmission", "g2zero"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.size == 0:
                arr = arr.reshape(0, 3)
            if arr.ndim != 2 or arr.shape[1] != 3:
                raise ValueError(f"{name} must be an (n, 3) array")
            if not np.all(np.isfinite(arr[:, 0])):
                raise ValueError(f"{name} detunings must be finite")
            if np.any(arr[:, 2] <= 0):
                raise ValueError(f"{name} uncertainties must be positive")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "g2_histograms", tuple(self.g2_histograms))

    @property
    def n_points(self):
        return (self.transmission.shape[0] + self.g2zero.shape[0]
                + sum(h.tau_ps.size for h in self.g2_histograms))


def fano_lineshape(delta_uev, q, gamma_uev, amplitude, offset):
    """Asymmetric lineshape amplitude*(q + eps)^2/(1 + eps^2) + offset.

    ``eps = 2*delta/gamma`` is the detuning in half-linewidth units; q sets
    the asymmetry (the zero sits at delta = -q*gamma/2).
    """
    if gamma_uev <= 0:
        raise ValueError("gamma_uev must be positive")
    eps = 2.0 * np.asarray(delta_uev, dtype=float) / gamma_uev
    out = amplitude * (q + eps) ** 2 / (1.0 + eps * eps) + offset
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FanoFit:
    q: float
    gamma_uev: float
    amplitude: float
    offset: float
    residuals: np.ndarray
    converged: bool
    degenerate: bool


def _fano_initial_guess(delta, value):
    i_min, i_max = int(np.argmin(value)), int(np.argmax(value))
    d_min, d_max = delta[i_min], delta[i_max]
    if d_min * d_max < 0 and abs(d_min) > 1e-12:
        gamma = 2.0 * math.sqrt(-d_min * d_max)
        q = -2.0 * d_min / gamma
    else:
        gamma = max(np.ptp(delta) / 4.0, 1e-6)
        q = -1.0
    amp = (value[i_max] - value[i_min]) / (1.0 + q * q)
    return q, gamma, max(amp, 1e-12), value[i_min]


def fit_fano(transmission_points) -> FanoFit:
    """Weighted lineshape fit of (detuning, transmission, uncertainty) rows."""
    pts = np.asarray(transmission_points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("transmission_points must be an (n, 3) array")
    if pts.shape[0] < 8:
        raise ValueError("need at least 8 points to fit the lineshape")
    delta, value, unc = pts[:, 0], pts[:, 1], pts[:, 2]
    if np.any(unc <= 0):
        raise ValueError("uncertainties must be positive")

    def resid(p):
        q, lg, amp, off = p
        return (fano_lineshape(delta, q, math.exp(lg), amp, off) - value) / unc

    q0, g0, a0, o0 = _fano_initial_guess(delta, value)
    sol = least_squares(resid, [q0, math.log(g0), a0, o0], method="trf",
                        x_scale="jac", max_nfev=200 * 5)
    jac = sol.jac
    sv = np.linalg.svd(jac, compute_uv=False)
    degenerate = bool(sv[0] / max(sv[-1], 1e-300) > 1e8)
    return FanoFit(q=float(sol.x[0]), gamma_uev=float(math.exp(sol.x[1])),
                   amplitude=float(sol.x[2]), offset=float(sol.x[3]),
                   residuals=sol.fun, converged=bool(sol.status > 0),
                   degenerate=degenerate)


# ---------------------------------------------------------------------------
# full model fit


def _logit(x):
    return math.log(x / (1.0 - x))


def _expit(x):
    return 1.0 / (1.0 + math.exp(-x))


def pack_params(p: PhysicalParams):
    """Physical parameters -> unconstrained fit vector."""
    return np.array([
        p.omega0,
        math.log(1.0 / p.lifetime),
        math.log(1.0 / p.dephasing_time),
        math.log(p.sigma_wander),
        _logit(p.t0),
        _logit(p.beta),
    ])


def unpack_params(x, template: PhysicalParams) -> PhysicalParams:
    """Inverse of :func:`pack_params`; non-fitted fields from ``template``."""
    return template.replace(
        omega0=float(x[0]),
        lifetime=1.0 / math.exp(x[1]),
        dephasing_time=1.0 / math.exp(x[2]),
        sigma_wander=math.exp(x[3]),
        t0=_expit(x[4]),
        beta=_expit(x[5]),
    )


def _transformed_bounds(bounds):
    lo = pack_params(PhysicalParams(
        omega0=bounds["omega0"][0], lifetime=bounds["lifetime"][1],
        dephasing_time=bounds["dephasing_time"][1],
        sigma_wander=bounds["sigma_wander"][0], t0=bounds["t0"][0],
        beta=bounds["beta"][0]))
    hi = pack_params(PhysicalParams(
        omega0=bounds["omega0"][1], lifetime=bounds["lifetime"][0],
        dephasing_time=bounds["dephasing_time"][0],
        sigma_wander=bounds["sigma_wander"][1], t0=bounds["t0"][1],
        beta=bounds["beta"][1]))
    return lo, hi


class _Objective:
    """Weighted residual vector shared by the objective and the fitter."""

    def __init__(self, data: MeasurementSet, template: PhysicalParams,
                 avg_kwargs=None, g2_weight=1.0, datasets=("transmission", "g2")):
        self.data = data
        self.template = template
        self.avg_kwargs = avg_kwargs or {}
        self.g2_weight = g2_weight
        self.datasets = datasets
        self.n_excluded = 0

    def model(self, params: PhysicalParams) -> ModelCurves:
        d = to_dimensionless(params, params.omega0)
        spec = AveragingSpec(sigma=d.sigma, t_resp=d.t_resp, **self.avg_kwargs)
        return ModelCurves(params, spec)

    def residuals(self, params: PhysicalParams) -> dict:
        mdl = self.model(params)
        out = {}
        if "transmission" in self.datasets and self.data.transmission.shape[0]:
            det, val, unc = self.data.transmission.T
            out["transmission"] = (mdl.transmission(det) - val) / unc
        if "g2" in self.datasets:
            if self.data.g2zero.shape[0]:
                det, val, unc = self.data.g2zero.T
                out["g2zero"] = self.g2_weight * (mdl.g2zero(det) - val) / unc
            for i, hist in enumerate(self.data.g2_histograms):
                meas, sig = hist.normalized()
                model = mdl.g2_trace(hist.detuning, hist.tau_ps)
                model = model / np.mean(model[hist.tail_mask()])
                out[f"g2_histogram_{i}"] = self.g2_weight * (model - meas) / sig
        return out

    def vector(self, x):
        parts = []
        res = self.residuals(unpack_params(x, self.template))
        for key in sorted(res):
            parts.append(res[key])
        if not parts:
            raise ValueError("measurement set is empty")
        vec = np.concatenate(parts)
        bad = ~np.isfinite(vec)
        if np.any(bad):
            self.n_excluded += int(np.sum(bad))
            vec = np.where(bad, 0.0, vec)
        return vec


def model_objective(params: PhysicalParams, data: MeasurementSet,
                    spec: AveragingSpec | None = None, g2_weight=1.0):
    """Weighted sum of squared residuals of the averaged model against data.

    Points where the model evaluation is not finite are excluded with a
    warning rather than poisoning the objective.
    """
    if data.n_points == 0:
        raise ValueError("measurement set is empty")
    avg_kwargs = {}
    if spec is not None:
        avg_kwargs = {"quadrature_points": spec.quadrature_points,
                      "quadrature_span": spec.quadrature_span}
    obj = _Objective(data, params, avg_kwargs, g2_weight)
    vec = obj.vector(pack_params(params))
    if obj.n_excluded:
        warnings.warn(f"{obj.n_excluded} residual(s) non-finite and excluded",
                      RuntimeWarning, stacklevel=2)
    return float(np.dot(vec, vec))


@dataclass(frozen=True)
class FitResult:
    """Outcome of a full-model fit."""

    params: PhysicalParams
    objective: float
    residuals: dict
    n_eval: int
    converged: bool
    bounds_hit: dict
    stderr: dict
    message: str
    n_excluded: int = 0
    n_starts: int = 1


MULTISTART_T0 = (0.3, 0.5, 0.7, 0.9)
MULTISTART_SIGMA = (2.0, 5.0, 10.0)


def _single_fit(obj: _Objective, x0, lo, hi):
    x0 = np.clip(x0, lo + 1e-9, hi - 1e-9)
    return least_squares(obj.vector, x0, bounds=(lo, hi), method="trf",
                         x_scale="jac", ftol=1e-10, gtol=1e-8, xtol=1e-10,
                         max_nfev=4000)


def fit_full_model(data: MeasurementSet, initial: PhysicalParams,
                   bounds: dict | None = None, multi_start: bool = False,
                   mode: str = "joint", g2_weight: float = 1.0,
                   avg_kwargs: dict | None = None) -> FitResult:
    """Fit the averaged model to a measurement set.

    Parameters
    ----------
    data : MeasurementSet
    initial : PhysicalParams
        Starting point; also supplies the fixed instrument fields
        (detector response, drive amplitude).
    bounds : dict, optional
        Per-field (low, high) in physical units; merged over defaults.
    multi_start : bool
        Additionally start from the coarse (t0, sigma) grid and keep the
        best result. Useful against lineshape-asymmetry local minima.
    mode : str
        "joint" fits all datasets at once; "sequential" first fits the
        transmission scan alone, then refines on everything.
    g2_weight : float
        Scalar rebalancing of correlation data against transmission.
    """
    if mode not in ("joint", "sequential"):
        raise ValueError("mode must be 'joint' or 'sequential'")
    if data.n_points == 0:
        raise ValueError("measurement set is empty")
    bnds = dict(DEFAULT_BOUNDS)
    if bounds:
        bnds.update(bounds)
    lo, hi = _transformed_bounds(bnds)
    x_init = pack_params(initial)
    if np.any(x_init < lo - 1e-12) or np.any(x_init > hi + 1e-12):
        raise ValueError("initial parameters violate the bounds")

    obj = _Objective(data, initial, avg_kwargs, g2_weight)

    starts = [x_init]
    if multi_start:
        for t0g in MULTISTART_T0:
            for sg in MULTISTART_SIGMA:
                starts.append(pack_params(initial.replace(t0=t0g, sigma_wander=sg)))

    best = None
    for x0 in starts:
        if mode == "sequential" and data.transmission.shape[0]:
            stage1 = _Objective(data, initial, avg_kwargs, g2_weight,
                                datasets=("transmission",))
            s1 = _single_fit(stage1, x0, lo, hi)
            x0 = s1.x
        sol = _single_fit(obj, x0, lo, hi)
        if best is None or sol.cost < best.cost:
            best = sol

    params = unpack_params(best.x, initial)
    residuals = obj.residuals(params)
    vec = np.concatenate([residuals[k] for k in sorted(residuals)])
    objective = float(np.nansum(vec * vec))

    atol = 1e-6 * np.maximum(np.abs(lo), np.abs(hi))
    hit = (np.abs(best.x - lo) <= atol) | (np.abs(best.x - hi) <= atol)
    bounds_hit = dict(zip(FIT_FIELDS, map(bool, hit)))

    stderr = _stderr_proxy(best, initial, vec.size)

    return FitResult(params=params, objective=objective, residuals=residuals,
                     n_eval=int(best.nfev), converged=bool(best.status > 0),
                     bounds_hit=bounds_hit, stderr=stderr,
                     message=str(best.message), n_excluded=obj.n_excluded,
                     n_starts=len(starts))


def _stderr_proxy(sol, template, n_res):
    """Curvature-based parameter uncertainties in physical units.

    A diagnostic, not a posterior: inverse Gauss-Newton curvature scaled by
    the residual variance, pushed through the parameter transform.
    """
    J = sol.jac
    n_par = J.shape[1]
    dof = max(n_res - n_par, 1)
    scale = 2.0 * sol.cost / dof
    try:
        cov_t = np.linalg.inv(J.T @ J) * scale
    except np.linalg.LinAlgError:
        return {k: math.inf for k in FIT_FIELDS}
    x = sol.x
    # d(physical)/d(transformed): lifetime = exp(-p1), sigma = exp(p3), etc.
    grads = np.array([
        1.0,
        math.exp(-x[1]),
        math.exp(-x[2]),
        math.exp(x[3]),
        _expit(x[4]) * (1.0 - _expit(x[4])),
        _expit(x[5]) * (1.0 - _expit(x[5])),
    ])
    err = np.sqrt(np.maximum(np.diag(cov_t), 0.0)) * grads
    return dict(zip(FIT_FIELDS, map(float, err)))


def fit_report(result: FitResult, data: MeasurementSet) -> dict:
    """JSON-ready summary of a fit, including conventions and diagnostics."""
    p = result.params
    d = to_dimensionless(p, p.omega0)
    return {
        "parameters": p.to_mapping(),
        "parameter_stderr": result.stderr,
        "dimensionless": {
            "zeta": d.zeta, "phi": d.phi, "T0": d.T0,
            "sigma": d.sigma, "t_resp": d.t_resp, "alpha": d.alpha,
        },
        "objective": result.objective,
        "converged": result.converged,
        "n_eval": result.n_eval,
        "n_starts": result.n_starts,
        "n_excluded_residuals": result.n_excluded,
        "bounds_hit": result.bounds_hit,
        "residual_summary": {
            k: {"n": int(v.size), "rms": float(np.sqrt(np.mean(v**2)))}
            for k, v in result.residuals.items()
        },
        "data_summary": {
            "transmission_points": int(data.transmission.shape[0]),
            "g2zero_points": int(data.g2zero.shape[0]),
            "histograms": len(data.g2_histograms),
        },
        "conventions": {
            "frequency": "ordinary (E = h * nu); omega0 stored in ueV",
            "reduced_time": "tau_t = tau * gamma / 2",
            "detector_width": "t_resp_t = detector_resp * gamma / 2",
            "g2_normalization": "model curves normalized to long-delay value",
        },
    }
