"""Profile-linkage risk estimation across two social networks."""

from .assignment import Assignment, brute_force_assignment, hungarian, threshold_classifier
from .bp import BPConfig, FactorGraph, MarginalTable, PrunePolicy, bp_match, build_factor_graph, extract_matching, run_bp, targeted_rank
from .core import (
    AttributeRecord,
    ChannelMatrix,
    CouplingGroundTruth,
    Dataset,
    DatasetSplit,
    Gender,
    Match,
    MatchSet,
    Network,
    PairValues,
    SimilarityMatrix,
    UserProfile,
)
from .errors import ProfRiskError
from .synth import SynthConfig, synth_similarity_matrix, synthesize_dataset
from .weights import LogisticConfig, WeightVector, build_similarity_matrix, eval_similarity, fit_logistic, prepare_training

__version__ = "0.1.0"
