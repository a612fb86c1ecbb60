"""Two-way molecular relay channel toolkit.

Implements a diffusion-based two-way relay link between two transceivers,
with two modulation schemes for the relay hop: logical XOR forwarding at the
relay (SNC) and reaction-based in-medium XOR (PNC), both with adaptive-rate
ISI mitigation, plus the matching error-probability analysis and a seeded
Monte Carlo simulator that acts as an independent cross-check.
"""

from molrelay.config import SystemConfig, ConfigError, load_config, unit_convert
from molrelay.channel import Link, LinkGains, ChannelGains, impulse_response

__all__ = [
    "SystemConfig",
    "ConfigError",
    "load_config",
    "unit_convert",
    "Link",
    "LinkGains",
    "ChannelGains",
    "impulse_response",
]

__version__ = "0.1.0"
