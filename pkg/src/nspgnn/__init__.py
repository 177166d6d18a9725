"""Neighbor-similarity-preserving GNN toolkit."""

__version__ = "0.1.0"

from .graph import (  # noqa: F401
    DataSplit,
    Dataset,
    Graph,
    build_graph,
    homophily_ratio,
    normalized_adjacency,
    powered_features,
)
from .similarity import (  # noqa: F401
    LinkScoreSets,
    SimilarityMatrix,
    kl_divergence,
    link_scores,
    separation_report,
    similarity_matrix,
)
from .dual_knn import DualKnnGraphs, build_dual_knn, knn_select  # noqa: F401
from .model import (  # noqa: F401
    ModelParams,
    backward,
    forward,
    gates,
    gcn_forward,
    init_params,
    load_params,
    nsp_sanitize,
    save_params,
)
from .training import (  # noqa: F401
    AdamState,
    TrainConfig,
    TrainResult,
    accuracy,
    adam_step,
    nll_loss,
    train,
)
from .attack import (  # noqa: F401
    AttackConfig,
    AttackReport,
    attack_kernel,
    attack_loss,
    brute_force_attack,
    gradient_attack,
    theorem1_verification,
)
from .synthetic import SyntheticSpec, generate_synthetic, stratified_split  # noqa: F401
from .experiment import run_experiment  # noqa: F401
