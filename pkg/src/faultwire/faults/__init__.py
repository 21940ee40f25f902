"""Fault-injection rules, operators and the pipeline engine."""

from .engine import Emission, FaultEngine, RulePipeline, apply_pipeline
from .expr import ExprEvalError, ExprSyntaxError, eval_expr, parse_expr
from .model import (
    BufferOp,
    DuplicateOp,
    FaultConfig,
    FaultConfigError,
    FaultRule,
    MapOp,
    RandomDelayOp,
    RandomDropOp,
    compile_config,
    load_fault_config,
    rule_active,
)

__all__ = [
    "BufferOp",
    "DuplicateOp",
    "Emission",
    "ExprEvalError",
    "ExprSyntaxError",
    "FaultConfig",
    "FaultConfigError",
    "FaultEngine",
    "FaultRule",
    "MapOp",
    "RandomDelayOp",
    "RandomDropOp",
    "RulePipeline",
    "apply_pipeline",
    "compile_config",
    "eval_expr",
    "load_fault_config",
    "parse_expr",
    "rule_active",
]
