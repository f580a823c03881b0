"""Model extraction of quantum neural networks served under drifting device noise."""

from . import cleanse, datapipe, kernels, noisemodel, qnnaas, simcore
from .simcore import ParamCircuit, StateVector

__version__ = "0.1.0"
__all__ = ["ParamCircuit", "StateVector", "cleanse", "datapipe", "kernels", "noisemodel", "qnnaas",
           "simcore", "__version__"]
