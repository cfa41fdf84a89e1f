"""Hot loops behind a backend switch.

The compiled extension is used when it was built; otherwise the numpy
fallback in ``_pykernels`` is selected at import. ``set_backend`` switches
explicitly (the benchmark and the backend-equivalence tests use it).
"""

import logging

import numpy as np

from . import _pykernels

logger = logging.getLogger(__name__)

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_impl = _compiled if _compiled is not None else _pykernels


def available_backends():
    return ["cython", "python"] if _compiled is not None else ["python"]


def backend() -> str:
    return "cython" if _impl is _compiled else "python"


def set_backend(name: str) -> None:
    global _impl
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available; build the extension first")
        _impl = _compiled
    elif name == "python":
        _impl = _pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")


def adam_update(value, grad, m, v, lr, beta1, beta2, eps, bc1, bc2):
    """In-place bias-corrected Adam update of ``value``, ``m`` and ``v`` (C-contiguous float64)."""
    _impl.adam_update(
        value.reshape(-1), np.ascontiguousarray(grad).reshape(-1), m.reshape(-1), v.reshape(-1),
        float(lr), float(beta1), float(beta2), float(eps), float(bc1), float(bc2),
    )


def relu_forward(x: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _impl.relu_forward(x.reshape(-1)).reshape(x.shape)


def relu_backward(x: np.ndarray, grad: np.ndarray) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    grad = np.ascontiguousarray(grad, dtype=np.float64)
    return _impl.relu_backward(x.reshape(-1), grad.reshape(-1)).reshape(x.shape)


def joint_errors(pred: np.ndarray, gt: np.ndarray, dim: int) -> np.ndarray:
    pred = np.ascontiguousarray(pred, dtype=np.float64)
    gt = np.ascontiguousarray(gt, dtype=np.float64)
    return np.asarray(_impl.joint_errors(pred, gt, int(dim)))


def fraction_at_most(values: np.ndarray, thresholds) -> np.ndarray:
    values = np.ascontiguousarray(values, dtype=np.float64).reshape(-1)
    thresholds = np.ascontiguousarray(thresholds, dtype=np.float64).reshape(-1)
    return np.asarray(_impl.fraction_at_most(values, thresholds))
