"""Train a coordinate-to-colour network on a single image and sample it back."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from .coords import FEATURE_CONVENTION, GridSpec, resample_grid, training_grid
from .errors import InvalidInputError, TrainingDivergedError
from .nn_core import AdamState, NetworkArch, NetworkParams, adam_step, backward, forward, init_params

log = logging.getLogger(__name__)

FULL_BATCH_MAX_PIXELS = 64 * 64
LARGE_IMAGE_BATCH = 4096

BatchSize = Union[int, str, None]


@dataclass(frozen=True)
class TrainConfig:
    """Training settings.

    ``batch_size``: ``None`` trains full-batch, an int uses shuffled mini-batches
    of that size, ``"auto"`` picks full-batch up to 64x64 pixels and 4096 above.
    ``plateau_window`` enables early stopping once the loss improves by less than
    ``plateau_tol`` over that many epochs.
    """

    arch: NetworkArch = field(default_factory=NetworkArch)
    lr: float = 1e-4
    epochs: int = 3000
    batch_size: BatchSize = "auto"
    seed: int = 0
    snapshot_epochs: tuple[int, ...] = ()
    dtype: str = "float64"
    plateau_window: Optional[int] = None
    plateau_tol: float = 1e-6

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidInputError(f"epochs must be >= 1, got {self.epochs}")
        if not 0 < self.lr < 1:
            raise InvalidInputError(f"lr must be in (0, 1), got {self.lr}")
        bs = self.batch_size
        if not (bs is None or bs == "auto" or (isinstance(bs, int) and bs >= 1)):
            raise InvalidInputError(f"batch_size must be None, 'auto' or a positive int, got {bs!r}")
        if self.dtype not in ("float64", "float32"):
            raise InvalidInputError(f"dtype must be float64 or float32, got {self.dtype}")
        if any(e < 0 for e in self.snapshot_epochs):
            raise InvalidInputError("snapshot epochs must be >= 0")
        object.__setattr__(self, "snapshot_epochs", tuple(sorted(set(int(e) for e in self.snapshot_epochs))))

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def resolved_batch_size(self, n_samples: int) -> Optional[int]:
        if self.batch_size == "auto":
            return None if n_samples <= FULL_BATCH_MAX_PIXELS else LARGE_IMAGE_BATCH
        return self.batch_size


@dataclass
class TrainedModel:
    params: NetworkParams
    source_height: int
    source_width: int
    feature_convention: str = FEATURE_CONVENTION
    final_loss: float = float("nan")


@dataclass
class TrainResult:
    model: TrainedModel
    loss_history: list[float]
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)


def check_image(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise InvalidInputError(f"expected an HxWx3 image, got shape {np.shape(image)}")
    return img


def check_mask(mask, height: int, width: int) -> np.ndarray:
    m = np.asarray(mask)
    if m.dtype != bool:
        raise InvalidInputError("mask must be boolean")
    if m.shape != (height, width):
        raise InvalidInputError(f"mask shape {m.shape} does not match image {height}x{width}")
    if not m.any():
        raise InvalidInputError("mask selects no pixels")
    return m


def square_mask(height: int, width: int, rng: np.random.Generator) -> tuple[np.ndarray, tuple[int, int, int]]:
    """Mask with one axis-aligned square of side min(H, W) // 4 removed at a random position.

    Returns the mask (True = observed) and the removed square as (top, left, side).
    """
    side = min(height, width) // 4
    if side < 1:
        raise InvalidInputError(f"image {height}x{width} too small for a completion patch")
    top = int(rng.integers(0, height - side + 1))
    left = int(rng.integers(0, width - side + 1))
    mask = np.ones((height, width), dtype=bool)
    mask[top : top + side, left : left + side] = False
    return mask, (top, left, side)


def train(
    image,
    mask=None,
    config: TrainConfig = TrainConfig(),
    callback: Optional[Callable[[int, float], None]] = None,
) -> TrainResult:
    """Fit a fresh network to the (masked-in) pixels of ``image``.

    ``callback(epoch, loss)`` is invoked after every epoch. Raises
    ``TrainingDivergedError`` as soon as the loss or parameters stop being finite.
    """
    img = check_image(image)
    h, w, _ = img.shape
    feats, rows, cols = training_grid(h, w)
    if mask is not None:
        keep = check_mask(mask, h, w)[rows, cols]
        feats, rows, cols = feats[keep], rows[keep], cols[keep]
    targets = img[rows, cols]
    # only the selected targets are validated; excluded pixels are never read
    if not np.isfinite(targets).all() or targets.min() < 0 or targets.max() > 1:
        raise InvalidInputError("training pixel values must lie in [0, 1]")

    dtype = np.dtype(config.dtype)
    x = feats.astype(dtype)
    t = targets.astype(dtype)
    n = x.shape[0]
    batch = config.resolved_batch_size(n)

    params = init_params(config.arch, config.seed, dtype=dtype)
    state = AdamState.fresh(params)
    shuffle_rng = np.random.default_rng([config.seed, 0x5EED])

    snapshots: dict[int, np.ndarray] = {}
    model = TrainedModel(params, h, w)
    if 0 in config.snapshot_epochs:
        snapshots[0] = reconstruct(model, h, w)

    history: list[float] = []
    for epoch in range(1, config.epochs + 1):
        if batch is None or batch >= n:
            loss, grads = backward(params, x, t)
            adam_step(params, grads, state, config.lr)
        else:
            order = shuffle_rng.permutation(n)
            total = 0.0
            for start in range(0, n, batch):
                idx = order[start : start + batch]
                bl, grads = backward(params, x[idx], t[idx])
                adam_step(params, grads, state, config.lr)
                total += bl * len(idx)
            loss = total / n
        if not np.isfinite(loss) or not params.all_finite():
            raise TrainingDivergedError(epoch)
        history.append(loss)
        if callback is not None:
            callback(epoch, loss)
        if epoch in config.snapshot_epochs:
            snapshots[epoch] = reconstruct(model, h, w)
        win = config.plateau_window
        if win and epoch > win and history[-win - 1] - loss < config.plateau_tol:
            log.info("loss plateaued at epoch %d (%.3g)", epoch, loss)
            break

    model.final_loss = history[-1]
    return TrainResult(model, history, snapshots)


def reconstruct(model: TrainedModel, out_height: int, out_width: int, chunk: int = 65536) -> np.ndarray:
    """Sample the learned colour function on an ``out_height x out_width`` grid spanning the source frame."""
    if model.feature_convention != FEATURE_CONVENTION:
        raise InvalidInputError(f"model uses feature convention {model.feature_convention!r}")
    feats = resample_grid(GridSpec(model.source_height, model.source_width, out_height, out_width))
    feats = feats.astype(model.params.dtype)
    out = np.empty((feats.shape[0], 3), dtype=model.params.dtype)
    for start in range(0, feats.shape[0], chunk):
        out[start : start + chunk] = forward(model.params, feats[start : start + chunk])[0]
    return out.reshape(out_height, out_width, 3).astype(np.float64)


def memorize(image, config: TrainConfig = TrainConfig()) -> TrainResult:
    return train(image, None, config)


def denoise(noisy, config: TrainConfig = TrainConfig()) -> np.ndarray:
    """Denoising is implicit: the fitted function is smoother than the noise."""
    img = check_image(noisy)
    res = train(img, None, config)
    return reconstruct(res.model, img.shape[0], img.shape[1])


def upsample(low_res, factor: int, config: TrainConfig, out_shape: Optional[tuple[int, int]] = None) -> np.ndarray:
    """Train on ``low_res`` and resample at ``factor`` times its size (or exactly ``out_shape``)."""
    img = check_image(low_res)
    if factor < 1:
        raise InvalidInputError(f"factor must be >= 1, got {factor}")
    res = train(img, None, config)
    oh, ow = out_shape if out_shape is not None else (img.shape[0] * factor, img.shape[1] * factor)
    return reconstruct(res.model, oh, ow)


def complete(image, mask, config: TrainConfig) -> np.ndarray:
    img = check_image(image)
    check_mask(mask, img.shape[0], img.shape[1])
    res = train(img, mask, config)
    return reconstruct(res.model, img.shape[0], img.shape[1])
