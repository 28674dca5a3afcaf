"""formgraph: layout-only form understanding.

Parses OCR'd form pages into word-relation graphs with a tiny edge-featured
graph attention scorer, decodes them exactly under hard logical constraints
via 0-1 integer linear programming, and converts the result deterministically
into fully connected entity-relation graphs.
"""

from .graphs import (
    BoundingBox,
    Document,
    Entity,
    EntityRelationGraph,
    EntityRelationLabel,
    EntityType,
    MalformedGraphError,
    Word,
    WordRelationGraph,
    WordRelationLabel,
    canonicalize,
)
from .ingest import (
    AnnotatedDocument,
    DatasetSplit,
    Neighborhood,
    augment_proximate,
    build_neighborhood,
    funsd_split,
    load_funsd,
    load_xfund,
    read_annotated,
    sort_reading_order,
    write_annotated,
)
from .convert import erg_to_wrg, verify_constraints, wrg_to_erg
from .features import edge_features, node_features
from .model import ModelConfig, ScoreTable, count_parameters, forward, load_checkpoint, save_checkpoint
from .ilp import ConstraintConfig, IlpProblem, IlpSolution, build_ilp, brute_force, decode, solve_branch_and_bound
from .training import TrainResult, train
from .metrics import PrfReport, entity_prf, relation_prf, zero_shot_eval
from .pipeline import PredictionResult, predict_corpus, predict_document
from .estimator import RelationGraphParser

__version__ = "0.1.0"

__all__ = [
    "AnnotatedDocument", "BoundingBox", "ConstraintConfig", "DatasetSplit",
    "Document", "Entity", "EntityRelationGraph", "EntityRelationLabel",
    "EntityType", "IlpProblem", "IlpSolution", "MalformedGraphError",
    "ModelConfig", "Neighborhood", "PredictionResult", "PrfReport",
    "RelationGraphParser", "ScoreTable", "TrainResult", "Word",
    "WordRelationGraph", "WordRelationLabel", "augment_proximate",
    "build_ilp", "build_neighborhood", "brute_force", "canonicalize",
    "count_parameters", "decode", "edge_features", "entity_prf",
    "erg_to_wrg", "forward", "funsd_split", "load_checkpoint", "load_funsd",
    "load_xfund", "node_features", "predict_corpus", "predict_document",
    "read_annotated", "relation_prf", "save_checkpoint",
    "solve_branch_and_bound", "sort_reading_order", "train",
    "verify_constraints", "wrg_to_erg", "write_annotated", "zero_shot_eval",
]
