# autodiff/gradcheck.py

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

import numpy as np

from autodiff.tensor import Tape, Tensor, backward

logger = logging.getLogger(__name__)

ScalarFn = Callable[..., Tensor]


@dataclass
class GradCheckResult:
    max_rel_error: float
    per_leaf: List[float] = field(default_factory=list)
    entries_checked: int = 0

    def as_dict(self) -> dict:
        return {
            "max_rel_error": self.max_rel_error,
            "per_leaf": list(self.per_leaf),
            "entries_checked": self.entries_checked,
        }


def _entries(shape, sample: int | None, rng: np.random.Generator) -> List[tuple]:
    every = list(np.ndindex(*shape)) if shape else [()]
    if sample is None or sample >= len(every):
        return every
    picks = rng.choice(len(every), size=sample, replace=False)
    return [every[i] for i in sorted(picks)]


def grad_check_detailed(
    f: ScalarFn,
    point: Sequence,
    step: float = 1e-5,
    floor: float = 1e-8,
    sample: int | None = None,
    seed: int = 0,
) -> GradCheckResult:
    """Compare reverse-mode gradients of `f` against central differences.

    `f` receives one Tensor per entry of `point` and must return a scalar
    Tensor. `sample` limits the number of entries perturbed per leaf.
    """
    arrays = [np.array(p, dtype=np.float64) for p in point]
    tape = Tape()
    leaves = [tape.leaf(a) for a in arrays]
    root = f(*leaves)
    grads = backward(tape, root)
    rng = np.random.default_rng(seed)

    per_leaf: List[float] = []
    checked = 0
    for i, base in enumerate(arrays):
        analytic = grads[leaves[i].grad_id]
        worst = 0.0
        for idx in _entries(base.shape, sample, rng):
            plus = [a if j != i else a.copy() for j, a in enumerate(arrays)]
            minus = [a if j != i else a.copy() for j, a in enumerate(arrays)]
            plus[i][idx] += step
            minus[i][idx] -= step
            f_plus = f(*[Tensor(a) for a in plus]).item()
            f_minus = f(*[Tensor(a) for a in minus]).item()
            fd = (f_plus - f_minus) / (2.0 * step)
            an = float(analytic[idx])
            err = abs(an - fd) / max(abs(an), abs(fd), floor)
            worst = max(worst, err)
            checked += 1
        per_leaf.append(worst)
    result = GradCheckResult(max(per_leaf, default=0.0), per_leaf, checked)
    logger.debug("grad_check: %s", result.as_dict())
    return result


def grad_check(
    f: ScalarFn,
    point: Sequence,
    step: float = 1e-5,
    floor: float = 1e-8,
    sample: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error |analytic - fd| / max(|analytic|, |fd|, floor) over all leaves."""
    return grad_check_detailed(f, point, step, floor, sample, seed).max_rel_error


def grad_check_named(
    f: Callable[[Dict[str, Tensor]], Tensor],
    named_point: Dict[str, np.ndarray],
    **kwargs,
) -> Dict[str, float]:
    """grad_check over a name -> array mapping; returns max error per name."""
    names = list(named_point)

    def positional(*tensors: Tensor) -> Tensor:
        return f(dict(zip(names, tensors)))

    result = grad_check_detailed(positional, [named_point[n] for n in names], **kwargs)
    return dict(zip(names, result.per_leaf))
