"""Generally capable lost-sales inventory control: train, estimate, decide."""
from .params import SpaceBounds, Parameterization, make_parameterization, sample_parameterization
from .nn import Network, TrainConfig, load_weights, save_weights

__version__ = "0.1.0"
