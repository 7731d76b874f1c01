"""Dynamic Bayesian optimization for tracking a moving objective maximum.

A spatio-temporal Gaussian process surrogate queried through acquisition
functions (EI, PI, and the memory-score EI cooling variant) drives a
fixed-budget per-frame search, applied to video object tracking with a
pluggable similarity oracle.
"""

from .acquisition import (
    AcqConfig,
    AcqKind,
    SearchHistory,
    expected_improvement,
    ms_ei_xi,
    probability_of_improvement,
    select_next,
)
from .dop import DynamicObjective, MovingPeakParams, make_moving_peak, true_argmax
from .geometry import BoundingBox, iou
from .gp import GpFitError, GpModel, Sample, fit_hyperparams, gp_extend, gp_fit, gp_predict, log_marginal_likelihood
from .harness import EvalReport, Sequence, emit_report, load_sequence, run_baseline_tm, run_eval
from .kernels import KernelSpec, MaternFamily, SpatioTemporalKernel, kernel_eval, st_kernel_eval
from .protocol import ExternalOracle, ProtocolError, ScoreClient, external_query
from .similarity import (
    DopOracle,
    Frame,
    ImageCrop,
    NccOracle,
    SimilarityOracle,
    TripletScore,
    extract_patch,
    load_image,
    ncc_score,
    triplet_score,
)
from .tracker import (
    ScoreGrid,
    TrackerConfig,
    TrackerState,
    render_score_grid,
    tracker_init,
    tracker_step,
    update_location,
    upsample_bicubic,
)

__version__ = "0.1.0"
