"""Latent-space diagnostics: interpolation walks, axis sweeps, posterior samples, embedding export."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .models import KeypointDecoder, KeypointEncoder
from .tensor import Tensor
from .vae import GaussianParams, reparameterize


@dataclass
class WalkResult:
    """Latent walk: ``lambdas[k]``, ``z[k]`` and ``decoded[modality][k]`` per step."""

    lambdas: np.ndarray
    z: np.ndarray
    decoded: dict

    def __len__(self):
        return len(self.lambdas)


def _slerp(z1: np.ndarray, z2: np.ndarray, lam: float) -> np.ndarray:
    n1, n2 = np.linalg.norm(z1), np.linalg.norm(z2)
    if n1 == 0.0 or n2 == 0.0:
        return (1.0 - lam) * z1 + lam * z2
    cos = np.clip(np.dot(z1, z2) / (n1 * n2), -1.0, 1.0)
    omega = np.arccos(cos)
    if omega < 1e-12:
        return (1.0 - lam) * z1 + lam * z2
    s = np.sin(omega)
    return np.sin((1.0 - lam) * omega) / s * z1 + np.sin(lam * omega) / s * z2


def _decode_rows(decoders: Mapping[str, KeypointDecoder], z: np.ndarray) -> dict:
    # one row per call so every step is decoded exactly as a lone sample would be
    return {
        name: np.vstack([dec.decode(z[k : k + 1]).data for k in range(len(z))])
        for name, dec in decoders.items()
    }


def interpolate(
    enc: KeypointEncoder,
    decoders: Mapping[str, KeypointDecoder],
    x1,
    x2,
    steps: int,
    handedness=(1.0, 1.0),
    spherical: bool = False,
) -> WalkResult:
    """Decode ``steps`` evenly spaced points on the segment between the posterior means of x1 and x2."""
    if steps < 2:
        raise ValueError("a walk needs at least 2 steps")
    h = handedness if enc.spec.handedness_flag else None
    pair = np.vstack([np.reshape(x1, (1, -1)), np.reshape(x2, (1, -1))])
    z1 = enc.mean(pair[:1], None if h is None else h[:1])[0]
    z2 = enc.mean(pair[1:], None if h is None else h[1:])[0]
    lambdas = np.linspace(0.0, 1.0, steps)
    if spherical:
        z = np.vstack([_slerp(z1, z2, lam) for lam in lambdas])
    else:
        z = np.vstack([(1.0 - lam) * z1 + lam * z2 for lam in lambdas])
    return WalkResult(lambdas, z, _decode_rows(decoders, z))


def single_axis_sweep(
    enc: KeypointEncoder,
    decoders: Mapping[str, KeypointDecoder],
    x,
    axis: int,
    values: Sequence[float],
    handedness=(1.0,),
) -> WalkResult:
    """Vary latent coordinate ``axis`` over ``values`` with the rest held at the posterior mean of x.

    ``lambdas`` holds the swept coordinate values.
    """
    h = handedness if enc.spec.handedness_flag else None
    base = enc.mean(np.reshape(x, (1, -1)), h)[0]
    if not 0 <= axis < base.size:
        raise ValueError(f"axis {axis} out of range for latent dim {base.size}")
    values = np.asarray(values, dtype=np.float64)
    z = np.repeat(base[None, :], values.size, axis=0)
    z[:, axis] = values
    return WalkResult(values, z, _decode_rows(decoders, z))


def sample_posterior(
    enc: KeypointEncoder,
    dec: KeypointDecoder,
    x,
    k: int,
    rng: np.random.Generator | None = None,
    handedness=(1.0,),
    noise=None,
) -> np.ndarray:
    """Decode ``k`` reparameterized draws from q(z | x) for a single input; returns [k x dim].

    ``noise`` replaces the standard-normal draws (``0`` decodes the mean ``k`` times).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    h = handedness if enc.spec.handedness_flag else None
    g = enc.encode(np.reshape(x, (1, -1)), h)
    mu = np.repeat(g.mu.data, k, axis=0)
    lv = np.repeat(g.log_var.data, k, axis=0)
    s = reparameterize(GaussianParams(Tensor(mu), Tensor(lv)), rng, noise)
    return dec.decode(s.z).data


def export_embeddings(path, encoders: Mapping[str, KeypointEncoder], features: Mapping[str, np.ndarray], handedness=None) -> int:
    """Write posterior means as CSV rows ``modality,index,mu0..``; returns the number of rows."""
    latent = next(iter(encoders.values())).latent_dim if encoders else 0
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["modality", "index"] + [f"mu{k}" for k in range(latent)])
        for name in sorted(encoders):
            enc = encoders[name]
            x = features[name]
            if len(x) == 0:
                raise ValueError("no samples to embed")
            mu = enc.mean(x, handedness if enc.spec.handedness_flag else None)
            for i, row in enumerate(mu):
                w.writerow([name, i] + [repr(float(v)) for v in row])
                rows += 1
    return rows


def read_embeddings(path) -> list[tuple[str, int, np.ndarray]]:
    lines = list(csv.reader(Path(path).read_text().splitlines()))
    if not lines or lines[0][:2] != ["modality", "index"]:
        raise ValueError(f"{path}: missing embedding header")
    return [(r[0], int(r[1]), np.array([float(v) for v in r[2:]])) for r in lines[1:]]


def write_walk(path, walk: WalkResult, modalities=("2d", "3d")) -> None:
    """CSV: ``lambda`` then the decoded coordinates of each modality present in the walk."""
    mods = [m for m in modalities if m in walk.decoded]
    header = ["lambda"]
    for m in mods:
        dim = walk.decoded[m].shape[1]
        coords = "xyz"[: 3 if m == "3d" else 2]
        header += [f"{m}_j{j}_{c}" for j in range(dim // len(coords)) for c in coords]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, lam in enumerate(walk.lambdas):
            row = [repr(float(lam))]
            for m in mods:
                row += [repr(float(v)) for v in walk.decoded[m][k]]
            w.writerow(row)


def read_walk(path) -> tuple[list[str], np.ndarray]:
    lines = list(csv.reader(Path(path).read_text().splitlines()))
    return lines[0], np.array([[float(v) for v in r] for r in lines[1:]])


def max_step_delta(walk: WalkResult, modality: str) -> float:
    """Largest Euclidean distance between consecutive decoded outputs."""
    d = np.diff(walk.decoded[modality], axis=0)
    return float(np.linalg.norm(d, axis=1).max()) if len(d) else 0.0


def walk_svg(walk: WalkResult, bones, modality: str = "2d", cell: int = 120) -> str:
    """Self-contained SVG: one panel per step with the decoded 2D skeleton drawn as line segments."""
    poses = walk.decoded[modality].reshape(len(walk), -1, 2)
    lo = poses.reshape(-1, 2).min(axis=0)
    hi = poses.reshape(-1, 2).max(axis=0)
    span = float(max(hi - lo)) or 1.0
    pad = 10.0
    fit = (cell - 2 * pad) / span
    width = cell * len(walk)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{cell + 20}" '
        f'viewBox="0 0 {width} {cell + 20}">',
        f'<rect x="0" y="0" width="{width}" height="{cell + 20}" fill="white"/>',
    ]
    for k, pose in enumerate(poses):
        ox = k * cell
        pts = (pose - lo) * fit + pad
        for a, b in bones:
            parts.append(
                f'<line x1="{ox + pts[a, 0]:.3f}" y1="{pts[a, 1]:.3f}" '
                f'x2="{ox + pts[b, 0]:.3f}" y2="{pts[b, 1]:.3f}" stroke="black" stroke-width="1.5"/>'
            )
        parts.append(
            f'<text x="{ox + cell / 2:.1f}" y="{cell + 14}" font-size="11" '
            f'text-anchor="middle">{walk.lambdas[k]:.2f}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
