"""Finite-difference verification of the analytic gradients."""

from __future__ import annotations

import numpy as np

from ..rng import substream
from .model import init_params, mse_loss, mse_loss_and_grad
from .spec import NetSpec, build_plan, make_spec


def gradient_check(
    spec: NetSpec | None = None,
    n_samples: int = 2,
    n_directions: int = 24,
    eps: float = 1e-6,
    seed: int = 0,
) -> dict:
    """Compare analytic gradients against central differences.

    Checks the full-vector directional derivative along random unit
    directions plus a handful of individual coordinates. Returns a summary
    dict with the worst relative error observed.
    """
    spec = spec or make_spec("tiny", input_dims=(7, 7, 7))
    plan = build_plan(spec)
    rng = substream(seed, "gradcheck")
    params = init_params(plan, seed)
    x = rng.normal(size=(n_samples, *spec.input_dims))
    y = rng.normal(size=n_samples)

    _, grad = mse_loss_and_grad(plan, params, x, y)

    def loss_at(p):
        return mse_loss(plan, p, x, y)

    worst = 0.0
    checks = []
    for k in range(n_directions):
        d = rng.normal(size=plan.n_params)
        d /= np.linalg.norm(d)
        num = (loss_at(params + eps * d) - loss_at(params - eps * d)) / (2 * eps)
        ana = float(grad @ d)
        denom = max(abs(num), abs(ana), 1e-12)
        rel = abs(num - ana) / denom
        worst = max(worst, rel)
        checks.append({"kind": "direction", "index": k, "analytic": ana,
                       "numeric": num, "rel_error": rel})
    coords = rng.choice(plan.n_params, size=min(16, plan.n_params), replace=False)
    for j in sorted(int(c) for c in coords):
        e = np.zeros(plan.n_params)
        e[j] = eps
        num = (loss_at(params + e) - loss_at(params - e)) / (2 * eps)
        ana = float(grad[j])
        denom = max(abs(num), abs(ana), 1e-12)
        rel = abs(num - ana) / denom
        worst = max(worst, rel)
        checks.append({"kind": "coordinate", "index": j, "analytic": ana,
                       "numeric": num, "rel_error": rel})
    return {
        "n_params": plan.n_params,
        "eps": eps,
        "max_rel_error": worst,
        "passed": bool(worst < 1e-4),
        "checks": checks,
    }
