"""Label-free self-play RL for text correction.

Clean sentences are stochastically corrupted into pseudo-labelled pairs,
candidate corrections are scored with a cluster-consensus reward over
sentence embeddings, and a small edit-lattice policy is optimized with
clipped proximal updates.  A theory suite verifies the reward-exactness,
variance, clip-bias, and generalization claims empirically.
"""

from .corruptor import ConfusionTables, OperatorPrior, PseudoPair, generate_pairs
from .embedder import EmbeddingCache, NgramEncoder, cosine
from .policy import LatticePolicy, PolicyParams, init_params
from .reward import RewardConfig, final_reward, score_candidates
from .textcore import edit_distance, normalize
from .trainer import TrainerConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "ConfusionTables",
    "EmbeddingCache",
    "LatticePolicy",
    "NgramEncoder",
    "OperatorPrior",
    "PolicyParams",
    "PseudoPair",
    "RewardConfig",
    "TrainerConfig",
    "__version__",
    "cosine",
    "edit_distance",
    "evaluate",
    "final_reward",
    "generate_pairs",
    "init_params",
    "normalize",
    "score_candidates",
    "train",
]
