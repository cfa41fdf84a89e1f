"""Keypoint encoders/decoders and the binary weight checkpoint format."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import tensor as T
from .errors import FormatError, ShapeError
from .tensor import Parameter, Tensor
from .vae import LOG_VAR_MAX, LOG_VAR_MIN, GaussianParams

N_JOINTS = 21
DEFAULT_HIDDEN = (512, 512, 512, 512, 512)
HEAD_SCALE = 0.01
MAGIC = b"XMVAE1"
_MODALITY_IDS = {"2d": 2, "3d": 3}


@dataclass(frozen=True)
class ModalitySpec:
    name: str
    flat_dim: int
    handedness_flag: bool = False

    @property
    def coords(self) -> int:
        return self.flat_dim // N_JOINTS


def modality(name: str, handedness_flag: bool = False) -> ModalitySpec:
    dims = {"2d": 2 * N_JOINTS, "3d": 3 * N_JOINTS}
    if name not in dims:
        raise ValueError(f"unknown modality {name!r}; expected one of {sorted(dims)}")
    return ModalitySpec(name, dims[name], handedness_flag)


def handedness_feature(handedness, n: int) -> np.ndarray:
    """Column of +1 (right) / -1 (left) from 'R'/'L' strings, bools (True = right) or numbers."""
    h = np.asarray(handedness)
    if h.shape != (n,):
        raise ShapeError(f"expected {n} handedness flags, got shape {h.shape}")
    if h.dtype.kind in "US":
        bad = ~np.isin(h, ["L", "R"])
        if bad.any():
            raise ValueError("handedness strings must be 'L' or 'R'")
        col = np.where(h == "R", 1.0, -1.0)
    elif h.dtype == bool:
        col = np.where(h, 1.0, -1.0)
    else:
        col = np.where(h.astype(np.float64) > 0, 1.0, -1.0)
    return col.reshape(n, 1)


class _MLP:
    def __init__(self, prefix: str, sizes: list[int]):
        self.layers = []
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            w = Parameter(np.zeros((fan_in, fan_out)), f"{prefix}.hidden{k}.weight")
            b = Parameter(np.zeros(fan_out), f"{prefix}.hidden{k}.bias")
            self.layers.append((w, b))

    def __call__(self, h: Tensor) -> Tensor:
        for w, b in self.layers:
            h = T.relu(T.linear(h, w, b))
        return h


class KeypointEncoder:
    """q(z | x): hidden (Linear, ReLU) stack with separate mean and log-variance heads."""

    def __init__(self, spec: ModalitySpec, latent_dim: int = 32, hidden=DEFAULT_HIDDEN):
        if latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        self.spec = spec
        self.latent_dim = latent_dim
        self.hidden = tuple(hidden)
        prefix = f"enc.{spec.name}"
        in_dim = spec.flat_dim + (1 if spec.handedness_flag else 0)
        self.body = _MLP(prefix, [in_dim, *self.hidden])
        last = self.hidden[-1] if self.hidden else in_dim
        self.mu_w = Parameter(np.zeros((last, latent_dim)), f"{prefix}.mu.weight")
        self.mu_b = Parameter(np.zeros(latent_dim), f"{prefix}.mu.bias")
        self.lv_w = Parameter(np.zeros((last, latent_dim)), f"{prefix}.log_var.weight")
        self.lv_b = Parameter(np.zeros(latent_dim), f"{prefix}.log_var.bias")

    @property
    def parameters(self) -> list[Parameter]:
        flat = [p for layer in self.body.layers for p in layer]
        return flat + [self.mu_w, self.mu_b, self.lv_w, self.lv_b]

    def heads(self):
        return [(self.mu_w, self.mu_b), (self.lv_w, self.lv_b)]

    def encode(self, x, handedness=None) -> GaussianParams:
        x = T.as_tensor(x)
        if x.data.ndim != 2 or x.shape[1] != self.spec.flat_dim:
            raise ShapeError(
                f"{self.spec.name} encoder expects [batch x {self.spec.flat_dim}], got {x.shape}"
            )
        if self.spec.handedness_flag:
            if handedness is None:
                raise ValueError(f"{self.spec.name} encoder requires a handedness flag per sample")
            x = T.concat([x, Tensor(handedness_feature(handedness, x.shape[0]))])
        h = self.body(x)
        mu = T.linear(h, self.mu_w, self.mu_b)
        log_var = T.clamp(T.linear(h, self.lv_w, self.lv_b), LOG_VAR_MIN, LOG_VAR_MAX)
        return GaussianParams(mu, log_var)

    def mean(self, x, handedness=None) -> np.ndarray:
        return self.encode(x, handedness).mu.data


class KeypointDecoder:
    """p(x | z): hidden (Linear, ReLU) stack and a linear output layer."""

    def __init__(self, spec: ModalitySpec, latent_dim: int = 32, hidden=DEFAULT_HIDDEN):
        if latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        self.spec = spec
        self.latent_dim = latent_dim
        self.hidden = tuple(hidden)
        prefix = f"dec.{spec.name}"
        self.body = _MLP(prefix, [latent_dim, *self.hidden])
        last = self.hidden[-1] if self.hidden else latent_dim
        self.out_w = Parameter(np.zeros((last, spec.flat_dim)), f"{prefix}.out.weight")
        self.out_b = Parameter(np.zeros(spec.flat_dim), f"{prefix}.out.bias")

    @property
    def parameters(self) -> list[Parameter]:
        flat = [p for layer in self.body.layers for p in layer]
        return flat + [self.out_w, self.out_b]

    def decode(self, z) -> Tensor:
        z = T.as_tensor(z)
        if z.data.ndim != 2 or z.shape[1] != self.latent_dim:
            raise ShapeError(f"decoder expects [batch x {self.latent_dim}], got {z.shape}")
        return T.linear(self.body(z), self.out_w, self.out_b)

    def weights(self) -> list[np.ndarray]:
        return [w.data for w, _ in self.body.layers] + [self.out_w.data]


def lipschitz_bound(decoder: KeypointDecoder, norm: str = "fro") -> float:
    """Upper bound on the decoder's Lipschitz constant (ReLU is 1-Lipschitz).

    ``norm="fro"`` multiplies per-layer Frobenius norms; ``norm=2`` uses the
    tighter spectral norms.
    """
    bound = 1.0
    for w in decoder.weights():
        bound *= float(np.linalg.norm(w, norm))
    return bound


def _glorot(rng: np.random.Generator, shape) -> np.ndarray:
    limit = math.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def init_weights(model, rng) -> None:
    """Glorot-uniform weights, zero biases; the log-variance head is scaled down so posteriors start near unit variance."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    head_ids = set()
    if isinstance(model, KeypointEncoder):
        head_ids = {id(model.lv_w)}
    for p in model.parameters:
        if p.data.ndim == 2:
            w = _glorot(rng, p.shape)
            if id(p) in head_ids:
                w = w * HEAD_SCALE
            p.assign(w)
        else:
            p.assign(np.zeros(p.shape))


def count_parameters(model) -> int:
    return sum(p.size for p in model.parameters)


class ModelSet:
    """One encoder and one decoder per modality, shared by every pair that names it."""

    def __init__(self, encoders: dict, decoders: dict, latent_dim: int):
        self.encoders = dict(encoders)
        self.decoders = dict(decoders)
        self.latent_dim = latent_dim

    @classmethod
    def build(
        cls,
        enc_modalities: Iterable[str],
        dec_modalities: Iterable[str],
        latent_dim: int = 32,
        hidden=DEFAULT_HIDDEN,
        handedness_flag: bool = True,
        seed: int = 0,
    ) -> "ModelSet":
        encoders, decoders = {}, {}
        # each model's stream depends only on (seed, role, modality), so variants share initial weights
        for name in sorted(set(enc_modalities)):
            encoders[name] = KeypointEncoder(modality(name, handedness_flag), latent_dim, hidden)
            init_weights(encoders[name], np.random.default_rng([seed, 0, _MODALITY_IDS[name]]))
        for name in sorted(set(dec_modalities)):
            decoders[name] = KeypointDecoder(modality(name), latent_dim, hidden)
            init_weights(decoders[name], np.random.default_rng([seed, 1, _MODALITY_IDS[name]]))
        return cls(encoders, decoders, latent_dim)

    @property
    def parameters(self) -> list[Parameter]:
        out = []
        for name in sorted(self.encoders):
            out += self.encoders[name].parameters
        for name in sorted(self.decoders):
            out += self.decoders[name].parameters
        return out

    def state(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters}

    def save(self, path) -> None:
        save_checkpoint(path, [(p.name, p.data) for p in self.parameters])

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray]) -> "ModelSet":
        """Rebuild models from checkpoint tensors; architecture is inferred from names and shapes."""
        groups: dict[tuple, dict] = {}
        for name, arr in state.items():
            parts = name.split(".")
            if len(parts) != 4 or parts[0] not in ("enc", "dec"):
                raise FormatError(f"unexpected parameter name {name!r}")
            groups.setdefault((parts[0], parts[1]), {})[f"{parts[2]}.{parts[3]}"] = arr
        encoders, decoders, latent = {}, {}, None
        for (kind, mod), params in sorted(groups.items()):
            n_hidden = sum(1 for k in params if k.startswith("hidden") and k.endswith("weight"))
            try:
                hidden = tuple(params[f"hidden{k}.weight"].shape[1] for k in range(n_hidden))
                if kind == "enc":
                    lat = params["mu.weight"].shape[1]
                    in_dim = params["hidden0.weight"].shape[0] if hidden else params["mu.weight"].shape[0]
                    base = modality(mod)
                    if in_dim not in (base.flat_dim, base.flat_dim + 1):
                        raise FormatError(f"encoder {mod} input width {in_dim} does not match modality")
                    model = KeypointEncoder(modality(mod, in_dim == base.flat_dim + 1), lat, hidden)
                    encoders[mod] = model
                else:
                    lat = params["hidden0.weight"].shape[0] if hidden else params["out.weight"].shape[0]
                    model = KeypointDecoder(modality(mod), lat, hidden)
                    decoders[mod] = model
            except (KeyError, ValueError) as exc:
                raise FormatError(f"incomplete or inconsistent parameters for {kind}.{mod}: {exc}") from exc
            if latent is not None and lat != latent:
                raise FormatError("models disagree on latent dimensionality")
            latent = lat
            expected = {p.name: p for p in model.parameters}
            if set(expected) != {f"{kind}.{mod}.{k}" for k in params}:
                raise FormatError(f"parameter set of {kind}.{mod} does not match its architecture")
            for pname, p in expected.items():
                arr = state[pname]
                if arr.shape != p.shape:
                    raise FormatError(f"{pname}: shape {arr.shape}, expected {p.shape}")
                p.assign(arr)
        if latent is None:
            raise FormatError("checkpoint holds no parameters")
        return cls(encoders, decoders, latent)

    @classmethod
    def load(cls, path) -> "ModelSet":
        return cls.from_state(load_checkpoint(path))


def save_checkpoint(path, named_arrays) -> None:
    """Write ``MAGIC`` then, per tensor: name length, name, rank, extents, little-endian float64 data."""
    chunks = [MAGIC]
    for name, arr in named_arrays:
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if not buf.startswith(MAGIC):
        raise FormatError(f"{path}: bad magic, not an XMVAE1 checkpoint")
    pos = len(MAGIC)
    out: dict[str, np.ndarray] = {}

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError(f"{path}: truncated checkpoint")
        piece = buf[pos : pos + n]
        pos += n
        return piece

    while pos < len(buf):
        (name_len,) = struct.unpack("<I", take(4))
        try:
            name = take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: parameter name is not UTF-8") from exc
        (rank,) = struct.unpack("<I", take(4))
        if rank > 8:
            raise FormatError(f"{path}: implausible rank {rank} for {name!r}")
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        data = np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64)
        if name in out:
            raise FormatError(f"{path}: duplicate parameter {name!r}")
        out[name] = data.reshape(shape)
    return out
