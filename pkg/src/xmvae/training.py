"""Cross-modal training over encoder/decoder pairs, the four variants and semi-supervision."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError
from .hand import PoseSample, normalize_pose
from .metrics import joint_errors, mean_epe, median_epe
from .models import DEFAULT_HIDDEN, ModelSet
from .optim import adam_step
from .tensor import GradientTape, backward
from .vae import LossBreakdown, elbo_terms

logger = logging.getLogger(__name__)

MM_PER_UNIT = 45.0  # length of the palm -> middle-base reference bone of the default skeleton
HANDEDNESS_MODES = ("flag", "mirror")


@dataclass(frozen=True)
class VariantConfig:
    variant: int
    input: str = "2d"
    target: str = "3d"


def build_pairs(v: VariantConfig) -> list[tuple[str, str]]:
    """Ordered (encoder, decoder) modality pairs for a variant, duplicates removed."""
    i, t = v.input, v.target
    table = {
        1: [(i, t)],
        2: [(i, t), (t, t)],
        3: [(i, t), (i, i)],
        4: [(i, t), (i, i), (t, t)],
    }
    if v.variant not in table:
        raise ValueError(f"unknown variant {v.variant}; expected 1-4")
    pairs = []
    for p in table[v.variant]:
        if p not in pairs:
            pairs.append(p)
    return pairs


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-4
    seed: int = 0
    beta: float = 1.0
    samples: int = 1
    latent_dim: int = 32
    hidden: tuple = DEFAULT_HIDDEN
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    recon_mode: str = "squared"
    handedness_mode: str = "flag"
    one_batch_per_pair: bool = False
    mm_per_unit: float = MM_PER_UNIT
    recon_units: str = "mm"

    @property
    def recon_unit(self) -> float:
        return self.mm_per_unit if self.recon_units == "mm" else 1.0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.samples < 1 or self.latent_dim < 1:
            raise ValueError("epochs, batch_size, samples and latent_dim must be positive")
        if self.lr < 0 or self.beta < 0:
            raise ValueError("lr and beta must be non-negative")
        if self.handedness_mode not in HANDEDNESS_MODES:
            raise ValueError(f"handedness_mode must be one of {HANDEDNESS_MODES}")
        if self.recon_units not in ("mm", "normalized"):
            raise ValueError("recon_units must be 'mm' or 'normalized'")
        if self.recon_mode not in ("squared", "euclidean"):
            raise ValueError("recon_mode must be 'squared' or 'euclidean'")


@dataclass(frozen=True)
class SemiSupConfig:
    """Samples without 3D labels feed only the pairs listed in ``unlabeled_pairs``.

    ``None`` means the input-modality autoencoding pair of the variant.
    """

    label_fraction: float = 1.0
    unlabeled_pairs: tuple | None = None


@dataclass
class PairData:
    """Normalized model inputs for a list of samples."""

    features: dict
    handedness: np.ndarray
    labeled: np.ndarray

    def __len__(self):
        return len(self.handedness)

    def subset(self, idx) -> "PairData":
        return PairData({k: v[idx] for k, v in self.features.items()}, self.handedness[idx], self.labeled[idx])


def prepare(samples: Sequence[PoseSample], handedness_mode: str = "flag") -> PairData:
    """T and S normalization per modality; H by mirroring when ``handedness_mode="mirror"``."""
    flags = "TSH" if handedness_mode == "mirror" else "TS"
    f2, f3 = [], []
    for s in samples:
        f2.append(normalize_pose(s.joints2d, flags, s.handedness)[0].ravel())
        f3.append(normalize_pose(s.joints3d, flags, s.handedness)[0].ravel())
    return PairData(
        features={"2d": np.array(f2).reshape(-1, 42), "3d": np.array(f3).reshape(-1, 63)},
        handedness=np.array([1.0 if s.handedness == "R" else -1.0 for s in samples]),
        labeled=np.array([bool(s.labeled) for s in samples]),
    )


def build_models(pairs, cfg: TrainConfig) -> ModelSet:
    return ModelSet.build(
        [k for k, _ in pairs],
        [l for _, l in pairs],
        latent_dim=cfg.latent_dim,
        hidden=cfg.hidden,
        handedness_flag=cfg.handedness_mode == "flag",
        seed=cfg.seed,
    )


def _pair_indices(data: PairData, pair, semi: SemiSupConfig | None, unlabeled_ok) -> np.ndarray:
    if semi is None or pair in unlabeled_ok:
        return np.arange(len(data))
    return np.nonzero(data.labeled)[0]


def train_epoch(
    models: ModelSet,
    pairs,
    data: PairData,
    cfg: TrainConfig,
    rng: np.random.Generator,
    semi: SemiSupConfig | None = None,
    unlabeled_ok=(),
) -> list[LossBreakdown]:
    """One pass per pair, in order, over shuffled mini-batches; returns mean losses per pair."""
    report = []
    for pair in pairs:
        enc = models.encoders[pair[0]]
        dec = models.decoders[pair[1]]
        params = enc.parameters + dec.parameters
        idx = _pair_indices(data, pair, semi, unlabeled_ok)
        if idx.size == 0:
            raise ValueError(f"pair {pair} has no samples to train on")
        order = idx[rng.permutation(idx.size)]
        if cfg.one_batch_per_pair:
            order = order[: cfg.batch_size]
        x_in = data.features[pair[0]]
        x_out = data.features[pair[1]]
        flag = data.handedness if enc.spec.handedness_flag else None
        sums = np.zeros(3)
        for start in range(0, order.size, cfg.batch_size):
            b = order[start : start + cfg.batch_size]
            with GradientTape() as tape:
                total, recon, kl = elbo_terms(
                    x_in[b], x_out[b], enc, dec, rng,
                    handedness=None if flag is None else flag[b],
                    beta=cfg.beta, samples=cfg.samples, recon_mode=cfg.recon_mode, unit=cfg.recon_unit,
                )
            values = (recon.item(), kl.item(), total.item())
            if not all(math.isfinite(v) for v in values):
                raise NumericalError(
                    f"non-finite loss for pair {pair[0]}->{pair[1]} at batch offset {start}: "
                    f"reconstruction={values[0]}, kl={values[1]}"
                )
            backward(total, tape)
            adam_step(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
            sums += np.array(values) * b.size
        n = min(order.size, cfg.batch_size) if cfg.one_batch_per_pair else order.size
        r, k, t = sums / n
        report.append(LossBreakdown(reconstruction=float(r), kl=float(k), total=float(t)))
    return report


def predict(models: ModelSet, data: PairData, src: str, dst: str) -> np.ndarray:
    """Posterior-mean prediction of modality ``dst`` from ``src`` (no sampling)."""
    enc = models.encoders[src]
    flag = data.handedness if enc.spec.handedness_flag else None
    mu = enc.encode(data.features[src], flag).mu
    return models.decoders[dst].decode(mu).data


def evaluate(models: ModelSet, data: PairData, src: str, dst: str, mm_per_unit: float = MM_PER_UNIT):
    """Per-joint errors (mm-equivalents) of the ``src -> dst`` prediction."""
    pred = predict(models, data, src, dst)
    dim = 3 if dst == "3d" else 2
    return joint_errors(pred * mm_per_unit, data.features[dst] * mm_per_unit, dim)


@dataclass
class HistoryRow:
    epoch: int
    pair: str
    reconstruction: float
    kl: float
    total: float
    heldout_mean_epe: float
    heldout_median_epe: float


HISTORY_HEADER = "epoch\tpair\treconstruction\tkl\ttotal\theldout_mean_epe\theldout_median_epe"


def write_history(path, rows: Sequence[HistoryRow]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(HISTORY_HEADER + "\n")
        for r in rows:
            fh.write(
                f"{r.epoch}\t{r.pair}\t{r.reconstruction!r}\t{r.kl!r}\t{r.total!r}\t"
                f"{r.heldout_mean_epe!r}\t{r.heldout_median_epe!r}\n"
            )


def read_history(path) -> list[HistoryRow]:
    lines = open(path).read().splitlines()
    if not lines or lines[0] != HISTORY_HEADER:
        raise ValueError(f"{path}: missing history header")
    rows = []
    for line in lines[1:]:
        e, p, *vals = line.split("\t")
        rows.append(HistoryRow(int(e), p, *[float(v) for v in vals]))
    return rows


@dataclass
class TrainResult:
    models: ModelSet
    history: list = field(default_factory=list)
    pairs: list = field(default_factory=list)


def train(
    v: VariantConfig,
    dataset: PairData,
    cfg: TrainConfig,
    semi: SemiSupConfig | None = None,
    heldout: PairData | None = None,
    models: ModelSet | None = None,
    on_epoch: Callable | None = None,
) -> TrainResult:
    """Run ``cfg.epochs`` epochs of pair-alternating training for variant ``v``.

    Without ``semi`` every pair sees every sample. With ``semi`` only the
    autoencoding pair of the input modality sees unlabeled samples.
    """
    pairs = build_pairs(v)
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if models is None:
        models = build_models(pairs, cfg)
    unlabeled_ok = ()
    if semi is not None:
        unlabeled_ok = semi.unlabeled_pairs if semi.unlabeled_pairs is not None else ((v.input, v.input),)
    rng = np.random.default_rng([cfg.seed, 7])
    history = []
    for epoch in range(cfg.epochs):
        report = train_epoch(models, pairs, dataset, cfg, rng, semi, unlabeled_ok)
        mean_e = median_e = float("nan")
        if heldout is not None and len(heldout):
            errs = evaluate(models, heldout, v.input, v.target, cfg.mm_per_unit)
            mean_e, median_e = mean_epe(errs), median_epe(errs)
        for pair, loss in zip(pairs, report):
            history.append(
                HistoryRow(epoch, f"{pair[0]}->{pair[1]}", loss.reconstruction, loss.kl, loss.total, mean_e, median_e)
            )
        logger.info("epoch %d %s heldout mean EPE %.3f", epoch, report, mean_e)
        if on_epoch is not None:
            on_epoch(epoch, report, mean_e)
    return TrainResult(models=models, history=history, pairs=pairs)


def linear_baseline(train_data: PairData, src: str = "2d", dst: str = "3d", use_handedness: bool = True):
    """Closed-form least-squares affine map ``src -> dst``; returns a predict function."""

    def design(d: PairData):
        cols = [d.features[src]]
        if use_handedness:
            cols.append(d.handedness[:, None])
        cols.append(np.ones((len(d), 1)))
        return np.hstack(cols)

    coef, *_ = np.linalg.lstsq(design(train_data), train_data.features[dst], rcond=None)
    return lambda d: design(d) @ coef
