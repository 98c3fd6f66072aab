"""Parameter layout, forward pass and exact gradients for the regressor.

Parameters live in one flat float64 vector; ``NetPlan.fields`` names each
slice. Residual blocks are conv3 -> ReLU -> conv3, summed with an identity
shortcut (or a 1x1x1 projection when channels or stride change), then ReLU.
No normalization layers anywhere.

``forward`` is in standardized target units and maps all-zero parameters to
an all-zero prediction; ``ModelState.predict`` undoes the target affine
recorded at training time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..rng import substream
from .ops import (
    affine_backward,
    affine_forward,
    check_finite,
    conv3d_backward,
    conv3d_forward,
    global_avg_pool_backward,
    global_avg_pool_forward,
    relu_backward,
    relu_forward,
)
from .spec import NetPlan, NetSpec, build_plan


def param_views(plan: NetPlan, params: np.ndarray) -> dict:
    """Named, reshaped views into the flat parameter vector (shared memory)."""
    return {
        f.name: params[f.offset : f.offset + f.size].reshape(f.shape)
        for f in plan.fields
    }


def init_params(plan: NetPlan, seed: int) -> np.ndarray:
    """Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) weights, zero biases."""
    rng = substream(seed, "init")
    params = np.zeros(plan.n_params, dtype=np.float64)
    views = param_views(plan, params)
    for f in plan.fields:
        if not f.name.endswith(".w"):
            continue  # biases stay zero
        if len(f.shape) == 5:
            fan_in = int(np.prod(f.shape[1:]))
        else:
            fan_in = int(f.shape[0])
        bound = float(np.sqrt(6.0 / fan_in))
        views[f.name][...] = rng.uniform(-bound, bound, size=f.shape)
    return params


def _as_batch(x: np.ndarray) -> np.ndarray:
    if x.ndim != 4:
        raise ShapeError(f"expected volume batch (N, D1, D2, D3), got shape {x.shape}")
    return np.asarray(x, dtype=np.float64)[:, None, :, :, :]


def net_forward_cached(plan: NetPlan, params: np.ndarray, x: np.ndarray):
    v = param_views(plan, params)
    a = _as_batch(x)
    if a.shape[2:] != plan.spec.input_dims:
        raise ShapeError(
            f"volume dims {a.shape[2:]} do not match network input {plan.spec.input_dims}"
        )
    cache: dict = {}

    out, xp = conv3d_forward(a, v["stem.w"], v["stem.b"], plan.stem.stride, plan.stem.pad)
    cache["stem.xp"] = xp
    out, mask = relu_forward(out)
    cache["stem.mask"] = mask
    check_finite("stem", out)

    for blk in plan.blocks:
        block_in = out
        h, xp1 = conv3d_forward(
            block_in, v[f"{blk.name}.conv1.w"], v[f"{blk.name}.conv1.b"],
            blk.conv1.stride, blk.conv1.pad,
        )
        cache[f"{blk.name}.conv1.xp"] = xp1
        h, m1 = relu_forward(h)
        cache[f"{blk.name}.relu1"] = m1
        h, xp2 = conv3d_forward(
            h, v[f"{blk.name}.conv2.w"], v[f"{blk.name}.conv2.b"],
            blk.conv2.stride, blk.conv2.pad,
        )
        cache[f"{blk.name}.conv2.xp"] = xp2
        if blk.projection is not None:
            shortcut, xpp = conv3d_forward(
                block_in, v[f"{blk.name}.proj.w"], v[f"{blk.name}.proj.b"],
                blk.projection.stride, blk.projection.pad,
            )
            cache[f"{blk.name}.proj.xp"] = xpp
        else:
            shortcut = block_in
        out, m2 = relu_forward(h + shortcut)
        cache[f"{blk.name}.relu2"] = m2
        check_finite(blk.name, out)

    pooled, pshape = global_avg_pool_forward(out)
    cache["gap.shape"] = pshape
    cache["head.x"] = pooled
    pred = affine_forward(pooled, v["head.w"], v["head.b"])
    check_finite("head", pred)
    return pred, cache


def net_forward(plan: NetPlan, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    pred, _ = net_forward_cached(plan, params, x)
    return pred


def net_backward(plan: NetPlan, params: np.ndarray, cache: dict, dpred: np.ndarray):
    """Gradient of a scalar loss wrt every parameter, given dloss/dpred."""
    v = param_views(plan, params)
    grad = np.zeros_like(params)
    gv = param_views(plan, grad)

    dx, dw, db = affine_backward(dpred, cache["head.x"], v["head.w"])
    gv["head.w"][...] = dw
    gv["head.b"][...] = db
    g = global_avg_pool_backward(dx, cache["gap.shape"])

    for blk in reversed(plan.blocks):
        g = relu_backward(g, cache[f"{blk.name}.relu2"])
        dmain, dw2, db2 = conv3d_backward(
            g, cache[f"{blk.name}.conv2.xp"], v[f"{blk.name}.conv2.w"],
            blk.conv2.stride, blk.conv2.pad, blk.conv2.in_dims,
        )
        gv[f"{blk.name}.conv2.w"][...] = dw2
        gv[f"{blk.name}.conv2.b"][...] = db2
        dmain = relu_backward(dmain, cache[f"{blk.name}.relu1"])
        dmain, dw1, db1 = conv3d_backward(
            dmain, cache[f"{blk.name}.conv1.xp"], v[f"{blk.name}.conv1.w"],
            blk.conv1.stride, blk.conv1.pad, blk.conv1.in_dims,
        )
        gv[f"{blk.name}.conv1.w"][...] = dw1
        gv[f"{blk.name}.conv1.b"][...] = db1
        if blk.projection is not None:
            dshort, dwp, dbp = conv3d_backward(
                g, cache[f"{blk.name}.proj.xp"], v[f"{blk.name}.proj.w"],
                blk.projection.stride, blk.projection.pad, blk.projection.in_dims,
            )
            gv[f"{blk.name}.proj.w"][...] = dwp
            gv[f"{blk.name}.proj.b"][...] = dbp
        else:
            dshort = g
        g = dmain + dshort

    g = relu_backward(g, cache["stem.mask"])
    _, dws, dbs = conv3d_backward(
        g, cache["stem.xp"], v["stem.w"], plan.stem.stride, plan.stem.pad,
        plan.stem.in_dims,
    )
    gv["stem.w"][...] = dws
    gv["stem.b"][...] = dbs
    return grad


def mse_loss_and_grad(plan: NetPlan, params: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Mean squared error over the batch and its exact parameter gradient."""
    pred, cache = net_forward_cached(plan, params, x)
    r = pred - np.asarray(y, dtype=np.float64)
    loss = float(np.mean(r * r))
    dpred = (2.0 / r.shape[0]) * r
    return loss, net_backward(plan, params, cache, dpred)


def mse_loss(plan: NetPlan, params: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    r = net_forward(plan, params, x) - np.asarray(y, dtype=np.float64)
    return float(np.mean(r * r))


@dataclass
class ModelState:
    """A trained (or initialized) regressor: architecture + flat parameters.

    target_mean / target_scale record the affine standardization applied to
    targets during training, so predictions come back in raw target units.
    adam_state carries the optimizer moments so training can resume from a
    checkpoint; train_visits is the training-split manifest consulted by the
    deviation-scoring leakage guard; augment_policy stores the training
    augmentation config verbatim for provenance.
    """

    spec: NetSpec
    params: np.ndarray
    target_mean: float = 0.0
    target_scale: float = 1.0
    epoch: int = 0
    best_val_loss: float = float("inf")
    rng_seed: int = 0
    adam_state: "object | None" = None
    augment_policy: dict | None = None
    train_visits: tuple = ()

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64).ravel()
        self._plan_cache: NetPlan | None = None
        if self.params.shape[0] != self.plan.n_params:
            raise ShapeError(
                f"parameter vector has {self.params.shape[0]} entries, "
                f"architecture needs {self.plan.n_params}"
            )
        if not (np.isfinite(self.target_mean) and np.isfinite(self.target_scale)):
            raise ShapeError("target_mean/target_scale must be finite")
        self.train_visits = tuple(
            (str(s), str(v)) for s, v in self.train_visits
        )

    @property
    def plan(self) -> NetPlan:
        if self._plan_cache is None:
            self._plan_cache = build_plan(self.spec)
        return self._plan_cache

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Raw network output in standardized target units."""
        return net_forward(self.plan, self.params, x)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Predictions in original target units."""
        return self.target_mean + self.target_scale * self.forward(x)

    @staticmethod
    def initialize(spec: NetSpec, seed: int) -> "ModelState":
        plan = build_plan(spec)
        return ModelState(spec=spec, params=init_params(plan, seed))
