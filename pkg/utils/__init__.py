# Utils package initialization
from .channel import DiscreteChannel, get_preset, sample_discrete_channel
from .errors import ConfigError, UwbSimError
from .signal_model import SystemConfig
from .transceiver import Scheme
from .montecarlo import BerExperiment, coupling_histogram, equivalence_test, run_ber, run_ber_grid
from .mutual_info import LoadParams, mutual_information, spectral_efficiency_curve
from .artifact_store import ArtifactStore
from .figures import FigureGenerator

__all__ = [
    'DiscreteChannel',
    'get_preset',
    'sample_discrete_channel',
    'ConfigError',
    'UwbSimError',
    'SystemConfig',
    'Scheme',
    'BerExperiment',
    'coupling_histogram',
    'equivalence_test',
    'run_ber',
    'run_ber_grid',
    'LoadParams',
    'mutual_information',
    'spectral_efficiency_curve',
    'ArtifactStore',
    'FigureGenerator',
]
