"""Botnet lifecycle state prediction from IDS alert streams."""
from .errors import (
    BotforecastError,
    EmptyInputError,
    InsufficientDataError,
    ParseError,
    SchemaError,
    StructuralError,
    ValidationError,
)
from .events import (
    DEFAULT_ALPHABET,
    FULL_ALPHABET,
    CollapsedTrace,
    HostTrace,
    StateAlphabet,
    TraceEvent,
    collapse,
    self_transition_stats,
)
from .higher_order import ContextMatrix, estimate_m
from .markov import TransitionMatrix, estimate, is_aperiodic, is_irreducible, reversibility_report, stationary
from .predictor import PredictionRecord, Predictor, WarningKind
from .semi_markov import IntervalSet, SemiMarkovModel, classify_interval, estimate_smc

__version__ = "0.1.0"

__all__ = [
    "BotforecastError",
    "EmptyInputError",
    "InsufficientDataError",
    "ParseError",
    "SchemaError",
    "StructuralError",
    "ValidationError",
    "DEFAULT_ALPHABET",
    "FULL_ALPHABET",
    "CollapsedTrace",
    "HostTrace",
    "StateAlphabet",
    "TraceEvent",
    "collapse",
    "self_transition_stats",
    "ContextMatrix",
    "estimate_m",
    "TransitionMatrix",
    "estimate",
    "is_aperiodic",
    "is_irreducible",
    "reversibility_report",
    "stationary",
    "PredictionRecord",
    "Predictor",
    "WarningKind",
    "IntervalSet",
    "SemiMarkovModel",
    "classify_interval",
    "estimate_smc",
]
