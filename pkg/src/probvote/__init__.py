"""Loop closure detection by scoring nearest-neighbour votes against a binomial null."""
from .detector import LoopDetector, StepResult
from .evaluation import EvalConfig, PRPoint, classify_pair, max_recall_at_full_precision, pr_curve
from .index import IndexConfig, MultiIndex, adaptive_k, brute_force_knn, exact_knn, exact_knn_batch, train_index
from .model import MapDatabase, MapError
from .probability import ApproxPolicy, binomial_pmf, poisson_pmf, vote_probability
from .projection import ProjectionModel, fit_projection, project
from .scoring import best_candidate, candidate_landmarks, detect_loop, score_all
from .synth import synth_generate
from .verification import RatioTestVerifier, VerificationResult, verify_stub
from .voting import DetectorConfig, TemporalFirewallError, VoteTally

__version__ = "0.1.0"
