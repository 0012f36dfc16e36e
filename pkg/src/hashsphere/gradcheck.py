"""End-to-end gradient check: analytic table + MLP gradients vs central differences.

Everything runs in float64. The relative-L2 normalizer is frozen at the
unperturbed prediction so the finite-difference loss is the same function
the analytic gradient differentiates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .interp import gather
from .models import Model, make_encoder
from .nn import REL_L2_EPS, MLPConfig, mlp_backward, mlp_forward, relative_l2_loss
from .tasks.sampling import sample_uniform_sphere

_ACTIVATIONS = {
    "hashsphere": ("identity", "exponential", 3),
    "grid2d": ("identity", "exponential", 3),
    "grid3d": ("identity", "exponential", 3),
    "hashgridsphere": ("leaky_relu", "sigmoid", 1),
}


@dataclass
class GradCheckResult:
    encoder: str
    max_rel_error: float
    probes: int


def _setup(kind, levels, features, hidden_width, table_cap, batch, rng):
    base = 2 if kind == "hashgridsphere" else 4
    enc = make_encoder(kind, levels=levels, features=features, table_cap=table_cap,
                       base_resolution=base, dir_level_cap=2)
    hidden, out_act, width = _ACTIVATIONS[kind]
    mlp_cfg = MLPConfig(enc.output_width, width, 2, hidden_width, hidden, out_act)
    model = Model.create(enc, mlp_cfg, int(rng.integers(2**31)), dtype=np.float64)
    # Larger tables than the training init so every term carries signal.
    for t in model.tables:
        t[...] = rng.uniform(-1.0, 1.0, t.shape)
    d = sample_uniform_sphere(rng, batch)
    inputs = (rng.random((batch, 3)), d) if kind == "hashgridsphere" else (d,)
    target = rng.uniform(0.2, 0.8, (batch, width))
    return model, inputs, target


def gradient_check(kind: str = "hashsphere", levels: int = 3, features: int = 2, hidden_width: int = 8,
                   table_cap: int = 64, probes: int = 100, batch: int = 16, seed: int = 0,
                   step: float = 1e-4, floor: float = 1e-6) -> GradCheckResult:
    """Max over ``probes`` random parameters of ``|a - n| / max(|a|, |n|, floor)``.

    Even probes hit table entries touched by the batch, odd ones hit MLP
    weights and biases. Probes whose stencil changes the sign of any hidden
    pre-activation are redrawn.
    """
    rng = np.random.default_rng(seed)
    model, inputs, target = _setup(kind, levels, features, hidden_width, table_cap, batch, rng)
    lookups = model.encoder.lookup(*inputs)
    feats = gather(lookups, model.tables)
    out, cache = mlp_forward(feats, model.mlp, model.mlp_config)
    denom = out**2 + REL_L2_EPS

    def loss():
        o, c = mlp_forward(gather(lookups, model.tables), model.mlp, model.mlp_config)
        signs = b"".join(np.signbit(z).tobytes() for z in c.pre[:-1])
        return relative_l2_loss(o, target, denom=denom)[0], signs

    _, g = relative_l2_loss(out, target, denom=denom)
    gm, gin = mlp_backward(cache, g, model.mlp, model.mlp_config)
    table_grads = model.table_grads(lookups, gin)
    params = list(model.tables) + model.mlp.arrays()
    grads = table_grads + gm.arrays()

    touched = [(lvl, int(r)) for lvl, lk in enumerate(lookups) for r in np.unique(lk.rows)]
    n_tables = len(model.tables)
    worst = 0.0
    done = 0
    for i in range(50 * probes):
        if done == probes:
            break
        if i % 2 == 0:
            lvl, row = touched[rng.integers(len(touched))]
            idx, pos = lvl, (row, int(rng.integers(model.encoder.features)))
        else:
            idx = n_tables + int(rng.integers(len(params) - n_tables))
            pos = tuple(int(rng.integers(s)) for s in params[idx].shape)
        p = params[idx]
        orig = p[pos]
        vals, patterns = [], set()
        for k in (2, 1, -1, -2):
            p[pos] = orig + k * step
            v, signs = loss()
            vals.append(v)
            patterns.add(signs)
        p[pos] = orig
        if len(patterns) > 1:
            continue  # the stencil straddles an activation kink
        # Fourth-order central stencil.
        numeric = (-vals[0] + 8.0 * vals[1] - 8.0 * vals[2] + vals[3]) / (12.0 * step)
        analytic = float(grads[idx][pos])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        worst = max(worst, err)
        done += 1
    return GradCheckResult(kind, worst, done)
