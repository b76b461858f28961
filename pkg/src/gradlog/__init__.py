"""gradlog: exact inference and gradient-based training for probabilistic
logic programs with neural predicates."""

from .parser import parse_dataset, parse_program, parse_query, parse_vectors
from .pipeline import run_query
from .semiring import ParameterStore

__all__ = [
    "parse_program",
    "parse_dataset",
    "parse_query",
    "parse_vectors",
    "run_query",
    "ParameterStore",
]

__version__ = "0.1.0"
