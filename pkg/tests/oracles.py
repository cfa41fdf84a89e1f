"""Independent reference computations used by the tests.

Nothing here goes through the tape: finite differences perturb parameter
storage directly and the metric references are scalar Python loops.
"""

import math

import numpy as np


def finite_difference(loss_fn, params, step=1e-5, coords_per_param=None, rng=None, order=2, signature=None):
    """Central differences of ``loss_fn()`` w.r.t. parameter entries.

    Returns ``{param: (flat_indices, estimates)}``. With ``coords_per_param``
    only that many random entries per parameter are perturbed. ``order=4``
    uses the five-point stencil. ``signature`` is called after every loss
    evaluation and should return the ReLU sign pattern; coordinates whose
    perturbations change it straddle a kink and get a NaN estimate.
    """
    offsets = {2: ((1, 0.5), (-1, -0.5)), 4: ((2, -1 / 12), (1, 8 / 12), (-1, -8 / 12), (-2, 1 / 12))}[order]
    base_sig = None
    if signature is not None:
        loss_fn()
        base_sig = signature()
    out = {}
    for p in params:
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if coords_per_param is not None and flat.size > coords_per_param:
            idx = np.sort(rng.choice(flat.size, coords_per_param, replace=False))
        est = np.empty(idx.size)
        for n, i in enumerate(idx):
            orig = flat[i]
            total = 0.0
            kink = False
            for k, w in offsets:
                flat[i] = orig + k * step
                total += w * loss_fn()
                if base_sig is not None and signature() != base_sig:
                    kink = True
            flat[i] = orig
            est[n] = np.nan if kink else total / step
        out[p] = (idx, est)
    return out


class ReluSigns:
    """Records the sign pattern of every ReLU input between ``reset`` calls (monkeypatch helper)."""

    def __init__(self, kernels_module):
        self.kernels = kernels_module
        self.original = kernels_module.relu_forward
        self.log = []

    def __enter__(self):
        def spy(x):
            self.log.append((np.asarray(x) > 0).tobytes())
            return self.original(x)

        self.kernels.relu_forward = spy
        return self

    def __exit__(self, *exc):
        self.kernels.relu_forward = self.original

    def __call__(self):
        sig = tuple(self.log)
        self.log = []
        return sig


def relative_error(a, b, floor=1e-8):
    """|a - b| / max(|a|, |b|, floor); NaN entries of either side are dropped."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    keep = ~(np.isnan(a) | np.isnan(b))
    a, b = a[keep], b[keep]
    if a.size == 0:
        return np.zeros(1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / denom


def adam_reference(p, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Scalar Adam trajectory evaluated step by step with plain floats."""
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p = p - lr * m_hat / (math.sqrt(v_hat) + eps)
    return p


def joint_errors_loop(pred, gt, dim):
    frames = len(pred)
    joints = len(pred[0]) // dim
    out = [[0.0] * joints for _ in range(frames)]
    for f in range(frames):
        for j in range(joints):
            s = 0.0
            for k in range(dim):
                d = pred[f][j * dim + k] - gt[f][j * dim + k]
                s += d * d
            out[f][j] = math.sqrt(s)
    return out


def mean_loop(errors):
    vals = [e for row in errors for e in row]
    return math.fsum(vals) / len(vals)


def median_loop(errors):
    vals = sorted(e for row in errors for e in row)
    n = len(vals)
    if n % 2:
        return vals[n // 2]
    return 0.5 * (vals[n // 2 - 1] + vals[n // 2])


def pck_loop(errors, thresholds):
    vals = [e for row in errors for e in row]
    return [sum(1 for e in vals if e <= d) / len(vals) for d in thresholds]


def pcf_loop(errors, thresholds):
    worst = [max(row) for row in errors]
    return [sum(1 for w in worst if w <= d) / len(worst) for d in thresholds]


def gaussian_logpdf(z, mu, var):
    return -0.5 * (np.log(2 * np.pi * var) + (z - mu) ** 2 / var)


def kl_monte_carlo(mu, log_var, n, rng):
    """KL(q || N(0, I)) estimated as the mean log-density ratio over ``n`` draws from q.

    Summed over latent dims, averaged over the batch rows of ``mu``.
    """
    var = np.exp(log_var)
    totals = []
    for row_mu, row_var in zip(mu, var):
        z = row_mu + np.sqrt(row_var) * rng.standard_normal((n, row_mu.size))
        ratio = gaussian_logpdf(z, row_mu, row_var) - gaussian_logpdf(z, 0.0, 1.0)
        totals.append(ratio.sum(axis=1).mean())
    return float(np.mean(totals))
