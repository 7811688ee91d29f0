"""Global average treatment effects in sharp regression discontinuity designs
from a main ``(x, w, y)`` sample fused with an auxiliary ``(u, x)`` sample."""
from .dataset import AuxSample, MainSample, load_aux_csv, load_main_csv, positivity_diagnostic
from .estimators import PointEstimates, estimate_all, tau_dr, tau_f, tau_h
from .features import BasisSpec
from .inference import BootstrapResult, bootstrap
from .minimax import FitConfig, fit_bridges, fit_outcome_bridge, fit_treatment_bridge, load_config
from .netfn import FunctionModel

__version__ = "0.1.0"

__all__ = [
    "AuxSample", "BasisSpec", "BootstrapResult", "FitConfig", "FunctionModel", "MainSample",
    "PointEstimates", "bootstrap", "estimate_all", "fit_bridges", "fit_outcome_bridge",
    "fit_treatment_bridge", "load_aux_csv", "load_config", "load_main_csv", "positivity_diagnostic",
    "tau_dr", "tau_f", "tau_h",
]
