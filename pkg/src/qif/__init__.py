"""Quadratic inference functions for marginal regression on longitudinal data."""

__version__ = "0.1.0"

from .corrbasis import BasisSet, make_basis, read_basis
from .distributions import chi2_quantile, chi2_sf, noncentral_chi2_sf, power
from .errors import *  # noqa: F401,F403
from .inference import (GofResult, PowerSpec, TestResult, estimate_ncp, goodness_of_fit,
                        standard_errors, test_linear)
from .linalg import pinv_psd
from .mcstudy import (SimulationDesign, StudyReport, gen_binary_ar1, gen_gaussian_ar1,
                      run_study)
from .model import (BERNOULLI, GAUSSIAN, Family, LongitudinalDataset, SubjectRecord,
                    evaluate_subject, get_family, load_dataset, read_csv)
from .score import ScoreState, score_state, subject_score
from .solver import FitOptions, FitResult, LinearConstraint, QifEval, fit, qif_value
