"""Multiuser OFDM-IDMA link simulator with SAGE/ECM receivers under multiple CFOs."""

from .framing import FrameConfig
from .receivers import ReceiverConfig, run_receiver
from .sim import ExperimentConfig, load_config, run_experiment

__all__ = ["FrameConfig", "ReceiverConfig", "run_receiver", "ExperimentConfig", "load_config", "run_experiment"]
