"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def adam_update(value, grad, m, v, lr, beta1, beta2, eps, bc1, bc2):
    c1 = 1.0 - beta1
    c2 = 1.0 - beta2
    m *= beta1
    m += c1 * grad
    v *= beta2
    v += c2 * (grad * grad)
    value -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def relu_forward(x):
    return np.where(x > 0.0, x, 0.0)


def relu_backward(x, grad):
    return np.where(x > 0.0, grad, 0.0)


def joint_errors(pred, gt, dim):
    frames, width = pred.shape
    d = (pred - gt).reshape(frames, width // dim, dim)
    acc = d[..., 0] * d[..., 0]
    for k in range(1, dim):
        acc = acc + d[..., k] * d[..., k]
    return np.sqrt(acc)


def fraction_at_most(values, thresholds):
    ordered = np.sort(values)
    counts = np.searchsorted(ordered, thresholds, side="right")
    return counts / float(values.shape[0])
