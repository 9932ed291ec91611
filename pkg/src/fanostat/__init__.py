"""Photon statistics of a driven two-level emitter in a waveguide with a
Fabry-Perot background: closed-form correlators, ensemble averaging, an
independent Bloch-equation solver, and parameter fitting."""

__version__ = "0.1.0"

from .params import (HBAR_UEV_PS, CouplingVector, DimensionlessParams,
                     PhysicalParams, ScatteringMatrix, coupling_vector,
                     detuning_to_delta, delta_to_detuning, energy_from_thz,
                     from_dimensionless, hbar_gamma, phi_from_t0,
                     scattering_matrix, tau_from_dimensionless,
                     tau_to_dimensionless, thz_from_energy, to_dimensionless)
from .correlators import (CorrelatorDecomposition, G2Coefficients, g1_general,
                          g1_ideal, g2_coefficients, g2_tau_general,
                          g2_tau_parts, g2zero_ideal, ideal_min_g2zero)
from .averaging import (AveragingSpec, ModelCurves, SampledCurve, avg_g1,
                        avg_g2, check_refinement, convolve_detector)
from .bloch import (BlochState, RegressionVector, bloch_matrix, evolve,
                    output_correlator_g1, output_correlator_g2,
                    propagate_exact, reduce_product, regression_initials,
                    steady_state)
from .fitting import (FanoFit, FitResult, G2Histogram, MeasurementSet,
                      fano_lineshape, fit_fano, fit_full_model, fit_report,
                      model_objective)
from .io import (DataFormatError, LoadReport, load_measurements,
                 merge_measurements, params_from_config, read_config,
                 write_series)
from .cli import FPBackground, ScanRequest, fp_background, oracle_check, run_scan

__all__ = [name for name in dir() if not name.startswith("_")]
