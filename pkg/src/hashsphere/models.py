"""Encoder + MLP bundles shared by training, checkpoints and the CLI."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import baseline_grids, joint_encoding, sphere_encoding
from .baseline_grids import GridEncodingConfig
from .hashing import HashConfig
from .interp import check_tables, gather, scatter
from .joint_encoding import JointConfig
from .nn import MLPConfig, MLPParams, init_mlp, mlp_forward
from .sphere_encoding import HashSphereConfig

ENCODERS = ("hashsphere", "grid2d", "grid3d", "hashgridsphere")
ENCODER_IDS = {name: i for i, name in enumerate(ENCODERS)}


class Encoder:
    """Uniform wrapper: ``lookup(*inputs)`` plus table bookkeeping."""

    kind: str
    config: object

    def __init__(self, kind: str, config):
        if kind not in ENCODERS:
            raise ValueError(f"unknown encoder {kind!r}; choose from {ENCODERS}")
        self.kind = kind
        self.config = config

    @property
    def features(self) -> int:
        return self.config.features

    @property
    def output_width(self) -> int:
        return self.config.output_width

    def table_rows(self) -> list[int]:
        return self.config.table_rows()

    def init_params(self, seed: int, dtype=np.float32) -> list[np.ndarray]:
        if self.kind == "hashsphere":
            return sphere_encoding.init_params(self.config, seed, dtype)
        if self.kind == "hashgridsphere":
            return joint_encoding.init_params(self.config, seed, dtype)
        return baseline_grids.init_params(self.config, seed, dtype)

    def lookup(self, *inputs):
        if self.kind == "hashsphere":
            return sphere_encoding.lookup(inputs[0], self.config)
        if self.kind == "grid2d":
            return baseline_grids.lookup(baseline_grids.polar_map(inputs[0]), self.config)
        if self.kind == "grid3d":
            return baseline_grids.lookup(baseline_grids.cartesian_map(inputs[0]), self.config)
        return joint_encoding.lookup(inputs[0], inputs[1], self.config)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "config": asdict(self.config)}

    @classmethod
    def from_dict(cls, data: dict) -> "Encoder":
        kind, cfg = data["kind"], dict(data["config"])
        if kind in ("hashsphere", "hashgridsphere"):
            cfg["hash"] = HashConfig.from_dict(cfg["hash"])
            config = HashSphereConfig(**cfg) if kind == "hashsphere" else JointConfig(**cfg)
        else:
            config = GridEncodingConfig(**cfg)
        return cls(kind, config)


def make_encoder(kind: str, levels: int = 8, features: int = 2, table_cap: int = 2**14,
                 base_resolution: int | None = None, per_level_scale: float = 2.0,
                 dir_level_cap: int = 4) -> Encoder:
    if kind == "hashsphere":
        return Encoder(kind, HashSphereConfig(levels, features, HashConfig(table_cap=table_cap)))
    if kind in ("grid2d", "grid3d"):
        return Encoder(kind, GridEncodingConfig(
            dims=2 if kind == "grid2d" else 3,
            base_resolution=8 if base_resolution is None else base_resolution,
            per_level_scale=per_level_scale, levels=levels, table_cap=table_cap, features=features,
        ))
    if kind == "hashgridsphere":
        return Encoder(kind, JointConfig(
            levels=levels, base_resolution=16 if base_resolution is None else base_resolution,
            per_level_scale=per_level_scale, dir_level_cap=dir_level_cap, features=features,
            hash=HashConfig(table_cap=table_cap),
        ))
    raise ValueError(f"unknown encoder {kind!r}; choose from {ENCODERS}")


@dataclass
class Model:
    encoder: Encoder
    tables: list[np.ndarray]
    mlp_config: MLPConfig
    mlp: MLPParams

    @classmethod
    def create(cls, encoder: Encoder, mlp_config: MLPConfig, seed: int, dtype=np.float32) -> "Model":
        ss = np.random.SeedSequence(seed)
        enc_seed, mlp_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
        if mlp_config.input_width != encoder.output_width:
            raise ValueError("MLP input width must equal the encoding width")
        return cls(encoder, encoder.init_params(enc_seed, dtype), mlp_config, init_mlp(mlp_config, mlp_seed, dtype))

    def check(self) -> None:
        check_tables(self.tables, self.encoder.table_rows(), self.encoder.features)

    def forward(self, *inputs):
        """Returns (prediction, lookups, features, mlp cache)."""
        lookups = self.encoder.lookup(*inputs)
        feats = gather(lookups, self.tables)
        out, cache = mlp_forward(feats, self.mlp, self.mlp_config)
        return out, lookups, feats, cache

    def predict(self, *inputs, chunk: int = 65536) -> np.ndarray:
        n = len(inputs[0])
        outs = []
        for start in range(0, n, chunk):
            part = [np.asarray(a)[start : start + chunk] for a in inputs]
            outs.append(self.forward(*part)[0])
        return np.concatenate(outs) if outs else np.zeros((0, self.mlp_config.output_width))

    def table_grads(self, lookups, feature_grad) -> list[np.ndarray]:
        return scatter(lookups, feature_grad, self.encoder.table_rows(), self.encoder.features)

    def parameter_arrays(self) -> list[np.ndarray]:
        return list(self.tables) + self.mlp.arrays()

    def encoding_param_count(self) -> int:
        return int(sum(t.size for t in self.tables))

    def mlp_param_count(self) -> int:
        return int(sum(a.size for a in self.mlp.arrays()))
