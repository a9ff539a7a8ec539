"""Consensus maximisation by learned tree search over minimax-fit bases."""

from .errors import BudgetExhausted, ContractError, FormatError, SolverError
from .model import Dataset, DataPoint, consensus, residual, residuals
from .minimax import MinimaxFit, extract_basis, minimax_fit
from .search import SearchResult, optimal_search, random_rollout, rollout
from .refine import local_tree_refinement
from .baselines import RansacConfig, lo_ransac, ransac
from .datagen import GenSpec, generate
from .network import NetworkParams, encode_state, forward, backward
from .training import TrainConfig, Trainer, evaluate_policy, train

__version__ = "0.1.0"
