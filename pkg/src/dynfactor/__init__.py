"""Streaming network embedding by space-projection updates of a truncated SVD."""
from .engine import Engine
from .graph import AddEdge, AddNode, DeltaVectors, DynamicGraph, RemoveEdge
from .linalg import SparseRowMatrix, SvdTriple, randomized_tsvd
from .ppr import EnhancerParams, PPREnhancer
from .state import FactorState
from .update import ProjectionUpdate, handle_event, update_embedding_e, update_embedding_n

__version__ = "0.1.0"
