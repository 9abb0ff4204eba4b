"""Client side of the engine's stdio JSON environment bridge."""

__version__ = "0.1.0"

from .adapter import BridgeAdapter, BridgeProtocolError, bridge_serve
from .conformance import ConformanceResult, conformance_suite

__all__ = [
    "__version__",
    "BridgeAdapter",
    "BridgeProtocolError",
    "bridge_serve",
    "ConformanceResult",
    "conformance_suite",
]
