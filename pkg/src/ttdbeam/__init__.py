"""Near-field wideband multi-user hybrid beamforming with true-time delayers."""

from .beamformer import DelayNetwork, DigitalPrecoder, FullyDigitalPrecoder, HybridBeamformer, PhaseNetwork
from .channel import ChannelTensor, Scenario, build_channel, sample_scenario
from .config import Architecture, ConfigurationError, SystemConfig, desk_config

__all__ = [
    "Architecture",
    "ChannelTensor",
    "ConfigurationError",
    "DelayNetwork",
    "DigitalPrecoder",
    "FullyDigitalPrecoder",
    "HybridBeamformer",
    "PhaseNetwork",
    "Scenario",
    "SystemConfig",
    "build_channel",
    "desk_config",
    "sample_scenario",
]
