from dataclasses import dataclass
from typing import Iterable

from . import kernels
from .tensor import Parameter


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(
    params: Iterable[Parameter],
    lr: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update per parameter, then zero its gradient.

    Each parameter keeps its own step counter, so a shared encoder updated by
    several pairs advances once per pair update.
    """
    for p in params:
        p.t += 1
        bc1 = 1.0 - beta1**p.t
        bc2 = 1.0 - beta2**p.t
        kernels.adam_update(p.data, p.grad, p.m, p.v, lr, beta1, beta2, eps, bc1, bc2)
        p.grad[...] = 0.0
