"""Training loops, evaluation metrics and memory accounting for both tasks."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..geodesic import build_dense_tables, face_count
from ..models import Encoder, Model
from ..nn import AdamState, MLPConfig, adam_step, l2_regularization, mlp_backward, relative_l2_loss
from .envmap import EnvMap, envmap_lookup, stratified_texel_directions
from .sampling import fibonacci_sphere, rotate_away, sample_latitude_band, sample_uniform_sphere
from .synthetic import SyntheticField5D, synthetic_field

BANDS = 18
BAND_REL_EPS = 0.01
NOVEL_ANGLE_DEG = 1.8
MIN_NOVEL_GAP_DEG = 0.5


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    steps: int = 512
    lr: float = 0.01
    batch_size: int = 2**14
    seed: int = 0
    weight_decay: float = 0.0
    band_samples: int = 8192


def envmap_mlp_config(encoder: Encoder, hidden_layers: int = 2, hidden_width: int = 16) -> MLPConfig:
    return MLPConfig(encoder.output_width, 3, hidden_layers, hidden_width, "identity", "exponential")


def joint_mlp_config(encoder: Encoder, hidden_layers: int = 2, hidden_width: int = 16) -> MLPConfig:
    return MLPConfig(encoder.output_width, 1, hidden_layers, hidden_width, "leaky_relu", "sigmoid")


@dataclass
class TrainReport:
    encoder: str
    loss_curve: list[float]
    initial_rel_l2: float
    final_rel_l2: float
    final_psnr: float
    band_errors: list[float]
    encoding_bytes: int
    mlp_bytes: int
    dense_table_bytes: int
    wall_seconds: float
    config: dict = field(default_factory=dict)
    train_error: float = float("nan")
    novel_error: float = float("nan")

    @property
    def memory_bytes(self) -> int:
        return self.encoding_bytes + self.mlp_bytes

    @property
    def polar_ratio(self) -> float:
        return polar_ratio(self.band_errors) if self.band_errors else float("nan")


# -- metrics ----------------------------------------------------------------


def rel_l2(pred, ref) -> float:
    return relative_l2_loss(np.asarray(pred, dtype=np.float64), np.asarray(ref, dtype=np.float64))[0]


def tonemapped_psnr(pred, ref) -> float:
    """PSNR of ``log(1 + x)`` images, peak = max tonemapped reference."""
    a = np.log1p(np.maximum(np.asarray(pred, dtype=np.float64), 0.0))
    b = np.log1p(np.asarray(ref, dtype=np.float64))
    mse = float(np.mean((a - b) ** 2))
    peak = float(b.max()) if b.size else 1.0
    if mse == 0.0:
        return float("inf")
    return 10.0 * math.log10(max(peak, 1e-12) ** 2 / mse)


def metrics_from_predictions(pred, ref) -> dict:
    return {"rel_l2": rel_l2(pred, ref), "psnr": tonemapped_psnr(pred, ref)}


def polar_ratio(bands) -> float:
    """Worst polar band over the median of mid-latitude bands (30..150 deg)."""
    b = np.asarray(bands, dtype=np.float64)
    n = len(b)
    mid = b[n // 6 : n - n // 6]
    return float(max(b[0], b[-1]) / np.median(mid))


def memory_footprint(tables, mlp_arrays) -> int:
    """Bytes of all trainable scalars at 4 bytes each."""
    return 4 * (int(sum(np.size(t) for t in tables)) + int(sum(np.size(a) for a in mlp_arrays)))


def dense_table_bytes(encoder: Encoder) -> int:
    """Storage of face->vertex lookup tables (int32 triples) for dense levels."""
    cfg = encoder.config
    if encoder.kind == "hashsphere":
        levels = range(cfg.last_dense_level + 1)
    elif encoder.kind == "hashgridsphere":
        levels = range(cfg.dense_dir_level + 1)
    else:
        return 0
    return int(sum(12 * face_count(lvl) for lvl in levels))


def latitude_error_profile(model: Model, env: EnvMap, bands: int = BANDS, samples: int = 8192, seed: int = 0) -> list[float]:
    """Mean ``|pred - ref| / (ref + 0.01)`` per colatitude band (north first)."""
    rng = np.random.default_rng(seed)
    edges = np.linspace(0.0, np.pi, bands + 1)
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        d = sample_latitude_band(rng, lo, hi, samples)
        ref = envmap_lookup(env, d)
        pred = model.predict(d).astype(np.float64)
        out.append(float(np.mean(np.abs(pred - ref) / (ref + BAND_REL_EPS))))
    return out


# -- training ---------------------------------------------------------------


def fit(model: Model, sampler, steps: int, lr: float, weight_decay: float = 0.0) -> list[float]:
    """Generic Adam loop; ``sampler(step)`` returns ``(inputs_tuple, target)``."""
    state = AdamState(lr=lr)
    curve = []
    for step in range(steps):
        inputs, target = sampler(step)
        out, lookups, _, cache = model.forward(*inputs)
        loss, g = relative_l2_loss(out, target.astype(out.dtype))
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {step}")
        gm, gin = mlp_backward(cache, g, model.mlp, model.mlp_config)
        grads = model.table_grads(lookups, gin) + gm.arrays()
        params = model.parameter_arrays()
        if weight_decay > 0:
            penalty, reg = l2_regularization(params, weight_decay)
            loss += penalty
            grads = [g_ + r for g_, r in zip(grads, reg)]
        curve.append(loss)
        adam_step(params, grads, state)
        model.mlp.version += 1
    return curve


def train_envmap(env: EnvMap, encoder: Encoder, mlp_config: MLPConfig | None = None,
                 cfg: TrainConfig | None = None, return_model: bool = False):
    """Fit ``encoder`` + MLP to ``env`` from fresh uniform direction batches."""
    cfg = cfg or TrainConfig()
    mlp_config = mlp_config or envmap_mlp_config(encoder)
    init_ss, train_ss, eval_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    model = Model.create(encoder, mlp_config, int(init_ss.generate_state(1)[0]))
    train_rng = np.random.default_rng(train_ss)
    eval_rng = np.random.default_rng(eval_ss)
    eval_dirs = stratified_texel_directions(env.height, env.width, eval_rng)
    eval_ref = envmap_lookup(env, eval_dirs)

    t0 = time.perf_counter()
    initial = rel_l2(model.predict(eval_dirs), eval_ref)

    def sampler(step):
        d = sample_uniform_sphere(train_rng, cfg.batch_size)
        return (d,), envmap_lookup(env, d)

    curve = fit(model, sampler, cfg.steps, cfg.lr, cfg.weight_decay)
    pred = model.predict(eval_dirs)
    metrics = metrics_from_predictions(pred, eval_ref)
    bands = latitude_error_profile(model, env, samples=cfg.band_samples, seed=int(eval_ss.generate_state(1)[0]))
    report = TrainReport(
        encoder=encoder.kind,
        loss_curve=curve,
        initial_rel_l2=initial,
        final_rel_l2=metrics["rel_l2"],
        final_psnr=metrics["psnr"],
        band_errors=bands,
        encoding_bytes=4 * model.encoding_param_count(),
        mlp_bytes=4 * model.mlp_param_count(),
        dense_table_bytes=dense_table_bytes(encoder),
        wall_seconds=time.perf_counter() - t0,
        config={"encoder": encoder.to_dict(), "mlp": asdict(mlp_config), "train": asdict(cfg),
                "map": [env.height, env.width]},
    )
    return (report, model) if return_model else report


def joint_split(n_train: int = 256, angle_deg: float = NOVEL_ANGLE_DEG) -> tuple[np.ndarray, np.ndarray]:
    """Fibonacci training directions and their tilted held-out twins."""
    train = fibonacci_sphere(n_train)
    novel = rotate_away(train, math.radians(angle_deg))
    gap = np.degrees(np.arccos(np.clip(novel @ train.T, -1.0, 1.0))).min()
    if gap <= MIN_NOVEL_GAP_DEG:
        raise TrainingError(f"novel directions within {gap:.3f} deg of the training set")
    return train, novel


def _joint_target(target):
    if isinstance(target, SyntheticField5D):
        peak = target.peak if target.lobes else 1.0
        return lambda x, d: synthetic_field(x, d, target) / peak
    return target


def train_joint(target, encoder: Encoder, mlp_config: MLPConfig | None = None,
                cfg: TrainConfig | None = None, eval_positions: int = 32, return_model: bool = False):
    """Fit the joint encoding on 256 fixed directions; report train vs novel error.

    ``target`` is a :class:`SyntheticField5D` (rescaled by its peak into
    ``(0, 1]``) or any callable ``(x, d) -> values`` already in ``[0, 1]``.
    """
    cfg = cfg or TrainConfig(steps=4096, lr=0.005, batch_size=2**12)
    mlp_config = mlp_config or joint_mlp_config(encoder)
    fn = _joint_target(target)
    train_dirs, novel_dirs = joint_split()
    init_ss, train_ss, eval_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    model = Model.create(encoder, mlp_config, int(init_ss.generate_state(1)[0]))
    train_rng = np.random.default_rng(train_ss)
    eval_rng = np.random.default_rng(eval_ss)

    pos = eval_rng.random((eval_positions * len(train_dirs), 3))
    d_train = np.repeat(train_dirs, eval_positions, axis=0)
    d_novel = np.repeat(novel_dirs, eval_positions, axis=0)
    ref_train = fn(pos, d_train).reshape(-1, 1)
    ref_novel = fn(pos, d_novel).reshape(-1, 1)

    t0 = time.perf_counter()
    initial = rel_l2(model.predict(pos, d_train), ref_train)

    def sampler(step):
        x = train_rng.random((cfg.batch_size, 3))
        d = train_dirs[train_rng.integers(0, len(train_dirs), cfg.batch_size)]
        return (x, d), fn(x, d).reshape(-1, 1)

    curve = fit(model, sampler, cfg.steps, cfg.lr, cfg.weight_decay)
    pred_train = model.predict(pos, d_train)
    pred_novel = model.predict(pos, d_novel)
    train_m = metrics_from_predictions(pred_train, ref_train)
    novel_m = metrics_from_predictions(pred_novel, ref_novel)
    report = TrainReport(
        encoder=encoder.kind,
        loss_curve=curve,
        initial_rel_l2=initial,
        final_rel_l2=train_m["rel_l2"],
        final_psnr=train_m["psnr"],
        band_errors=[],
        encoding_bytes=4 * model.encoding_param_count(),
        mlp_bytes=4 * model.mlp_param_count(),
        dense_table_bytes=dense_table_bytes(encoder),
        wall_seconds=time.perf_counter() - t0,
        config={"encoder": encoder.to_dict(), "mlp": asdict(mlp_config), "train": asdict(cfg)},
        train_error=train_m["rel_l2"],
        novel_error=novel_m["rel_l2"],
    )
    return (report, model) if return_model else report
