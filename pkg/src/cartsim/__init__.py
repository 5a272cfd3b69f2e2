"""Simulation of heralded remote entanglement with CART photon sources."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .model import BirefringenceSpec, CavityGeometry, DriveConfig, NodeConfig, derive_geometry
from .emission import EmissionRecord, TimeGrid, Wavepacket, simulate_emission
from .interference import (CoincidenceMap, DetectionScheme, WindowedResult, coincidence_map_frequency,
                           coincidence_map_polarization, hom_visibility, window_aggregate)
from .experiments import (Preset, SweepSpec, balance_drives, load_preset, run_birefringence_heatmap,
                          run_window_curves)

__all__ = [
    "__version__", "BirefringenceSpec", "CavityGeometry", "DriveConfig", "NodeConfig", "derive_geometry",
    "EmissionRecord", "TimeGrid", "Wavepacket", "simulate_emission", "CoincidenceMap", "DetectionScheme",
    "WindowedResult", "coincidence_map_frequency", "coincidence_map_polarization", "hom_visibility",
    "window_aggregate", "Preset", "SweepSpec", "balance_drives", "load_preset", "run_birefringence_heatmap",
    "run_window_curves",
]
