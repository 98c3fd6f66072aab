"""Mini-batch training for the volumetric regressor.

Targets are standardized to zero mean / unit scale over the training set
before optimization (Adam's per-step displacement is bounded by the learning
rate, so raw clinical-scale targets would be unreachable in any realistic
epoch budget); the fitted affine is stored on the ModelState so predictions
come back in raw units. The reported history is in raw target units too.

Epoch shuffling and per-sample augmentation each use their own counter-based
substream, so sample k of epoch e is reproducible in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..augment import AugmentPolicy, apply_policy
from ..errors import (
    LeakageError,
    NumericOverflowError,
    SampleSizeError,
    TrainingDivergedError,
)
from ..rng import substream
from .model import ModelState, init_params, mse_loss, mse_loss_and_grad
from .optim import AdamState, TrainConfig, adam_step
from .spec import NetSpec, build_plan


@dataclass
class TrainResult:
    state: ModelState
    history: list = field(default_factory=list)
    best_epoch: int | None = None
    best_val_loss: float | None = None


def _check_disjoint(train_subject_ids, val_subject_ids) -> None:
    if train_subject_ids is None or val_subject_ids is None:
        return
    overlap = sorted(set(train_subject_ids) & set(val_subject_ids))
    if overlap:
        raise LeakageError(
            f"subjects appear in both train and validation sets: {overlap[:5]}"
            + ("..." if len(overlap) > 5 else "")
        )


def train_regressor(
    spec: NetSpec,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray | None = None,
    y_val: np.ndarray | None = None,
    config: TrainConfig | None = None,
    augment_policy: AugmentPolicy | None = None,
    train_subject_ids=None,
    val_subject_ids=None,
    train_visits=None,
    log=None,
) -> TrainResult:
    """Train from a fresh init, tracking the best validation epoch.

    Returns the parameters from the epoch with the strictly lowest validation
    loss (the final epoch when no validation set is given).
    """
    config = config or TrainConfig()
    config.validate()
    if augment_policy is not None:
        augment_policy.validate()
    _check_disjoint(train_subject_ids, val_subject_ids)

    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64).ravel()
    n = x_train.shape[0]
    if n == 0:
        raise SampleSizeError("training set is empty")
    if y_train.shape[0] != n:
        raise SampleSizeError(
            f"targets ({y_train.shape[0]}) do not match volumes ({n})"
        )
    has_val = x_val is not None and y_val is not None and len(y_val) > 0
    if has_val:
        x_val = np.asarray(x_val, dtype=np.float64)
        y_val = np.asarray(y_val, dtype=np.float64).ravel()

    mu = float(np.mean(y_train))
    sd = float(np.std(y_train))
    scale = sd if sd > 0 else 1.0
    y_train_std = (y_train - mu) / scale
    y_val_std = (y_val - mu) / scale if has_val else None

    plan = build_plan(spec)
    params = init_params(plan, config.rng_seed)
    adam = AdamState.zeros(plan.n_params)
    raw_factor = scale * scale  # std-unit MSE -> raw-unit MSE

    history: list = []
    best_val = np.inf
    best_epoch: int | None = None
    best_params = params.copy()

    for epoch in range(config.epochs):
        order = substream(config.rng_seed, "shuffle", epoch).permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            if augment_policy is None:
                xb = x_train[idx]
            else:
                xb = np.stack(
                    [
                        apply_policy(
                            x_train[i],
                            augment_policy,
                            substream(augment_policy.rng_seed, "augment", epoch, int(i)),
                        )
                        for i in idx
                    ]
                )
            try:
                loss, grad = mse_loss_and_grad(plan, params, xb, y_train_std[idx])
            except NumericOverflowError as exc:
                raise TrainingDivergedError(
                    f"non-finite activations at epoch {epoch}: {exc}", epoch=epoch
                ) from exc
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"training loss became non-finite at epoch {epoch}", epoch=epoch
                )
            adam_step(
                params, grad, adam,
                config.learning_rate, config.beta1, config.beta2, config.epsilon,
            )
            loss_sum += loss * len(idx)
        entry = {"epoch": epoch, "train_loss": (loss_sum / n) * raw_factor}
        if has_val:
            val_loss = mse_loss(plan, params, x_val, y_val_std) * raw_factor
            if not np.isfinite(val_loss):
                raise TrainingDivergedError(
                    f"validation loss became non-finite at epoch {epoch}", epoch=epoch
                )
            entry["val_loss"] = val_loss
            if val_loss < best_val:
                best_val = val_loss
                best_epoch = epoch
                best_params = params.copy()
        if log is not None:
            msg = f"epoch {epoch}: train_loss={entry['train_loss']:.6g}"
            if has_val:
                msg += f" val_loss={entry['val_loss']:.6g}"
            log(msg)
        history.append(entry)

    if not has_val:
        best_params = params
        best_epoch = config.epochs - 1
        best_val = None  # type: ignore[assignment]
    state = ModelState(
        spec=spec,
        params=best_params,
        target_mean=mu,
        target_scale=scale,
        epoch=best_epoch if best_epoch is not None else config.epochs - 1,
        best_val_loss=float(best_val) if best_val is not None and np.isfinite(best_val) else float("inf"),
        rng_seed=config.rng_seed,
        adam_state=adam,
        augment_policy=augment_policy.to_dict() if augment_policy is not None else None,
        train_visits=tuple(train_visits) if train_visits is not None else (),
    )
    return TrainResult(
        state=state,
        history=history,
        best_epoch=best_epoch,
        best_val_loss=None if best_val is None or not np.isfinite(best_val) else float(best_val),
    )
