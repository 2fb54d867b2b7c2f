# src/sms_verify/unlearning/__init__.py

from .unlearn_base import BaseUnlearner, TraceReading, UnlearnResult, UnlearnTrace, TRACE_COLUMNS
from .unlearn_factory import ApproxOptions, RetrainOptions, SisaOptions, UnlearnerOptions, get_unlearner
from .backends.retrain import retrain_unlearn
from .backends.sisa import ShardedModel, load_sharded, save_sharded, sisa_predict, sisa_train, sisa_unlearn
from .backends.approx import approx_unlearn

__all__ = [
    "BaseUnlearner",
    "TraceReading",
    "UnlearnResult",
    "UnlearnTrace",
    "TRACE_COLUMNS",
    "ApproxOptions",
    "RetrainOptions",
    "SisaOptions",
    "UnlearnerOptions",
    "get_unlearner",
    "retrain_unlearn",
    "ShardedModel",
    "load_sharded",
    "save_sharded",
    "sisa_predict",
    "sisa_train",
    "sisa_unlearn",
    "approx_unlearn",
]
