"""Accept/reject decisions for recorded exercise repetitions using multi-dimensional
DTW templates or discrete HMMs over skeleton-derived features."""

__version__ = "0.1.0"

from .dtw import DtwTemplate, mddtw_distance, select_template
from .evaluator import (
    AcceptanceInterval,
    ExperimentConfig,
    ResultTable,
    Verdict,
    calibrate,
    evaluate_dtw,
    evaluate_hmm,
    run_experiment,
    segment_phases,
)
from .hmm import HmmModel, LogLikelihood, baum_welch, forward, init_model
from .kinematics import AngleSequence, PlaneSet, angle_sequence, estimate_planes, plane_angle
from .motion import ACTIVITIES, ActivityDefinition, SkeletonSequence, load_sequence, normalize
from .quantizer import SymbolSequence, quantize, quantize_sequence
from .synth import MotionScript, generate, generate_dataset
