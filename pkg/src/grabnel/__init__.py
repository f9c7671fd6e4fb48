"""Black-box adversarial attacks on graph classifiers."""

from .acquisition import AcquisitionConfig, expected_improvement
from .attack import (
    ATTACKERS,
    AttackConfig,
    AttackResult,
    attack_loss,
    genetic_attack,
    grabnel_attack,
    grabnel_no_sequential_attack,
    random_attack,
    resolve_budgets,
    sequential_random_attack,
)
from .data import (
    ERGenConfig,
    LabeledDataset,
    generate_er_dataset,
    graph_to_json,
    json_to_graph,
    load_dataset,
    parse_tudataset,
    save_dataset,
)
from .graph import (
    AttackMode,
    ConstraintMode,
    ConstraintSet,
    Flip,
    Graph,
    Inject,
    InvalidPerturbation,
    Perturbation,
    Rewire,
    Swap,
    apply_perturbation,
    check_constraint,
    connected_components,
    edit_distance_from_base,
    two_hop_neighbors,
)
from .harness import Campaign, VictimSpec, adversarial_pattern_stats, run_campaign
from .surrogate import SurrogateConfig, SurrogatePosterior, fit, log_evidence, predict
from .victim import (
    GCNWeights,
    InProcessSession,
    SubprocessSession,
    TcpSession,
    TrainConfig,
    VictimResponse,
    VictimSession,
    gcn_forward,
    load_weights,
    save_weights,
    train_gcn,
)
from .wl import WLVocabulary, refit_vocabulary, wl_extract_continuous, wl_extract_discrete

__all__ = [
    "ATTACKERS",
    "AcquisitionConfig",
    "AttackConfig",
    "AttackMode",
    "AttackResult",
    "Campaign",
    "ConstraintMode",
    "ConstraintSet",
    "ERGenConfig",
    "Flip",
    "GCNWeights",
    "Graph",
    "InProcessSession",
    "Inject",
    "InvalidPerturbation",
    "LabeledDataset",
    "Perturbation",
    "Rewire",
    "SubprocessSession",
    "SurrogateConfig",
    "SurrogatePosterior",
    "Swap",
    "TcpSession",
    "TrainConfig",
    "VictimResponse",
    "VictimSession",
    "VictimSpec",
    "adversarial_pattern_stats",
    "apply_perturbation",
    "attack_loss",
    "check_constraint",
    "connected_components",
    "edit_distance_from_base",
    "expected_improvement",
    "fit",
    "gcn_forward",
    "generate_er_dataset",
    "genetic_attack",
    "grabnel_attack",
    "grabnel_no_sequential_attack",
    "graph_to_json",
    "json_to_graph",
    "load_dataset",
    "load_weights",
    "log_evidence",
    "parse_tudataset",
    "predict",
    "random_attack",
    "refit_vocabulary",
    "resolve_budgets",
    "run_campaign",
    "save_dataset",
    "save_weights",
    "sequential_random_attack",
    "train_gcn",
    "two_hop_neighbors",
    "wl_extract_continuous",
    "wl_extract_discrete",
]
