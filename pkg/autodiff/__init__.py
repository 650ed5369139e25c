from autodiff.tensor import Tape, Tensor, as_tensor, backward
from autodiff.gradcheck import grad_check, grad_check_detailed, grad_check_named

__all__ = [
    "Tape",
    "Tensor",
    "as_tensor",
    "backward",
    "grad_check",
    "grad_check_detailed",
    "grad_check_named",
]
