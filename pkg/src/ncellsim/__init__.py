"""ncellsim: compartment-level neural simulation and averaging.

Builds brain-region compartments (n-cell graphs embedded in a spatial
domain), integrates Hodgkin-Huxley synaptic dynamics over them, averages the
per-neuron potentials into a macroscopic trace v(t), and analyzes it
LFP-style.
"""

__version__ = "0.1.0"

from .compartment import (  # noqa: F401
    Compartment,
    NCell,
    Neuron,
    NeurotransmitterClass,
    SpatialDomain,
    Synapse,
    build_compartment,
    sample_positions,
    validate_compartment,
)
from .dynamics import (  # noqa: F401
    HHParameters,
    ModelParameters,
    SimulationConfig,
    SimulationRecord,
    StimulusSpec,
    SynapseParameters,
    default_backend,
    simulate,
)
from .averaging import (  # noqa: F401
    AveragingWeights,
    average,
    average_naive,
    average_trace,
    precompute_weights,
)
from .analysis import (  # noqa: F401
    RadialityReport,
    SpectrumReport,
    activation_latencies,
    dominant_frequency,
    lowpass,
    periodogram,
    radiality_score,
)
from .striatum import StriatumParams, build_striatum, demo_stimulus  # noqa: F401
