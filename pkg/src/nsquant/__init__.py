"""Local linear quantile curves for locally stationary time series."""
from .kernel import EPANECHNIKOV, KernelSpec, get_kernel, jackknife_kernel
from .solver import UnitTimeSeries, LocalFitProblem, QuantileFit, check_loss, psi, fit_local_linear, fit_local_constant
from .curvefit import QuantileCurve, estimate_raw_curve, second_stage_smooth, jackknife_curve, iqr_curve
from .bandwidth import select_bandwidth, local_bandwidth_profile, yj_rule_of_thumb, variance_correction
from .inference import pointwise_band, iqr_band, long_run_variance, density_at_quantile, neighborhood

__version__ = "0.1.0"
