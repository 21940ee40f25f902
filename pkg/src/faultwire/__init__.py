"""faultwire: an MQTT fault-injection testbed for self-healing IoT pipelines.

A minimal MQTT 3.1.1 broker whose publish path can corrupt, drop, delay,
duplicate and reorder messages through configurable operator pipelines, a
library of self-healing stream nodes, and a deterministic experiment
harness that replays sensor data against baseline and self-healing flows
and compares their alarm behavior.
"""

from .faults.engine import Emission, FaultEngine
from .faults.model import FaultConfig, FaultRule, compile_config, load_fault_config
from .flows import AlarmEvent, FlowSpec, FlowVariant, build_flow
from .harness.experiment import (
    ExperimentSpec,
    MessageLog,
    builtin_experiments,
    get_experiment,
    run_experiment,
)
from .harness.metrics import AlarmSignal, MetricsReport, overlap, transitions
from .healing import AlarmLevel, Reading, Thresholds
from .mqtt.broker import BrokerCore, Message, Subscription, route
from .replay import DatasetSeries, ReplayPlan, load_dataset, schedule

__version__ = "0.1.0"

__all__ = [
    "AlarmEvent",
    "AlarmLevel",
    "AlarmSignal",
    "BrokerCore",
    "DatasetSeries",
    "Emission",
    "ExperimentSpec",
    "FaultConfig",
    "FaultEngine",
    "FaultRule",
    "FlowSpec",
    "FlowVariant",
    "Message",
    "MessageLog",
    "MetricsReport",
    "Reading",
    "ReplayPlan",
    "Subscription",
    "Thresholds",
    "build_flow",
    "builtin_experiments",
    "compile_config",
    "get_experiment",
    "load_dataset",
    "load_fault_config",
    "overlap",
    "route",
    "run_experiment",
    "schedule",
    "transitions",
]
