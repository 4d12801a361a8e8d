"""FourierMamba image deraining at desk scale, built on a small numpy autodiff core."""

from .autodiff import Tensor, backward, grad_check
from .net import ModelConfig, ModelWeights, forward, init_weights, load_weights, loss_total, save_weights

__all__ = [
    "Tensor", "backward", "grad_check",
    "ModelConfig", "ModelWeights", "forward", "init_weights", "load_weights", "loss_total", "save_weights",
]
__version__ = "0.1.0"
