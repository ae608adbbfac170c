from .base import DetectorSlot, bootstrap, detect, fine_tune, max_score
from .external import ExternalDetector, StdioEndpoint, TcpEndpoint
from .simulated import LatentWorld, SimulatedDetector, SimulatedDetectorParams

__all__ = [
    "DetectorSlot",
    "ExternalDetector",
    "LatentWorld",
    "SimulatedDetector",
    "SimulatedDetectorParams",
    "StdioEndpoint",
    "TcpEndpoint",
    "bootstrap",
    "detect",
    "fine_tune",
    "max_score",
]
