import math

import numpy as np
import pytest

from hashsphere.geodesic import vertex_count
from hashsphere.models import Model, make_encoder
from hashsphere.nn import MLPConfig
from hashsphere.tasks.envmap import (
    EnvMap, envmap_lookup, procedural_envmap, procedural_radiance, stratified_texel_directions,
    texel_directions,
)
from hashsphere.tasks.sampling import fibonacci_sphere, rotate_away, sample_latitude_band, sample_uniform_sphere
from hashsphere.tasks.synthetic import SyntheticField5D, lobe_axes, synthetic_field
from hashsphere.tasks.training import (
    TrainConfig, TrainingError, dense_table_bytes, joint_split, latitude_error_profile, memory_footprint,
    metrics_from_predictions, polar_ratio, rel_l2, tonemapped_psnr, train_envmap, train_joint,
)

# -- env maps -------------------------------------------------------------------


def test_constant_map_lookup():
    env = EnvMap(np.full((1, 1, 3), 2.5))
    np.testing.assert_allclose(envmap_lookup(env, sample_uniform_sphere(0, 100)), 2.5)


def test_texel_center_returns_texel():
    env = procedural_envmap("noise", 32, 16)
    d = texel_directions(16, 32).reshape(-1, 3)
    np.testing.assert_allclose(envmap_lookup(env, d), env.pixels.reshape(-1, 3), rtol=1e-6)


def test_lookup_within_lipschitz_bound_of_nearest():
    h, w = 64, 128
    env = procedural_envmap("gradient", w, h)
    d = sample_uniform_sphere(1, 5000)
    exact = procedural_radiance("gradient", d)
    # The gradient map changes by at most ~1.1 per radian; a texel spans pi/h.
    bound = 1.1 * math.pi / h
    assert np.abs(envmap_lookup(env, d) - exact).max() < bound


def test_longitude_wraps():
    env = EnvMap(np.random.default_rng(0).random((8, 16, 3)))
    a = envmap_lookup(env, np.array([[-1.0, 1e-9, 0.0]]))
    b = envmap_lookup(env, np.array([[-1.0, -1e-9, 0.0]]))
    np.testing.assert_allclose(a, b, atol=1e-6)


def test_envmap_validation():
    with pytest.raises(ValueError):
        EnvMap(np.full((2, 4, 3), -1.0))
    with pytest.raises(ValueError):
        EnvMap(np.zeros((2, 4)))
    with pytest.raises(ValueError):
        procedural_radiance("sunset", np.zeros((1, 3)))


@pytest.mark.parametrize("name", ["constant", "gradient", "noise", "pointlights"])
def test_procedural_maps_are_valid(name):
    env = procedural_envmap(name, 64, 32)
    assert env.pixels.shape == (32, 64, 3)
    assert np.all(env.pixels > 0)
    assert np.array_equal(env.pixels, procedural_envmap(name, 64, 32).pixels)


def test_stratified_directions_stay_in_texels():
    rng = np.random.default_rng(0)
    d = stratified_texel_directions(8, 16, rng).reshape(8, 16, 3)
    theta = np.arccos(d[..., 2])
    row = np.floor(theta / (np.pi / 8))
    assert np.array_equal(row, np.broadcast_to(np.arange(8)[:, None], (8, 16)))


# -- sampling -------------------------------------------------------------------


def test_uniform_sphere_statistics():
    d = sample_uniform_sphere(0, 100_000)
    assert np.abs(np.linalg.norm(d, axis=1) - 1).max() < 1e-6
    assert np.linalg.norm(d.mean(axis=0)) < 0.02
    assert 0.49 <= np.mean(d[:, 2] > 0) <= 0.51
    assert np.array_equal(d, sample_uniform_sphere(0, 100_000))
    with pytest.raises(ValueError):
        sample_uniform_sphere(0, 0)


def test_latitude_band_sampling():
    d = sample_latitude_band(np.random.default_rng(0), 0.2, 0.4, 1000)
    theta = np.arccos(d[:, 2])
    assert theta.min() >= 0.2 - 1e-12 and theta.max() <= 0.4 + 1e-12


def test_joint_split_hygiene():
    train, novel = joint_split()
    assert train.shape == novel.shape == (256, 3)
    ang = np.degrees(np.arccos(np.clip(np.einsum("ij,ij->i", train, novel), -1, 1)))
    np.testing.assert_allclose(ang, 1.8, atol=1e-9)
    gaps = np.degrees(np.arccos(np.clip(novel @ train.T, -1, 1))).min()
    assert gaps > 0.5
    with pytest.raises(TrainingError):
        joint_split(angle_deg=0.1)
    assert np.array_equal(fibonacci_sphere(256), train)
    np.testing.assert_allclose(np.linalg.norm(rotate_away(train, 0.3), axis=1), 1.0)


# -- synthetic field -------------------------------------------------------------


def test_synthetic_field_examples():
    assert np.all(synthetic_field(np.zeros((3, 3)), np.tile([0, 0, 1.0], (3, 1)), SyntheticField5D.empty()) == 0)
    f = SyntheticField5D(np.array([0.7]), np.array([10.0]), np.array([[0.0, 0.0, 1.0]]), np.zeros((1, 3, 3)))
    x = np.full((1, 3), 0.3)
    assert np.isclose(synthetic_field(x, np.array([[0, 0, 1.0]]), f)[0], 0.7)
    assert np.isclose(synthetic_field(x, np.array([[1.0, 0, 0]]), f)[0], 0.7 * math.exp(-10))


def test_synthetic_field_bounds_and_axes():
    f = SyntheticField5D.random(4, 0)
    rng = np.random.default_rng(0)
    x = rng.random((1000, 3))
    d = sample_uniform_sphere(rng, 1000)
    v = synthetic_field(x, d, f)
    assert np.all(v > 0) and np.all(v <= f.peak)
    mu = lobe_axes(x, f)
    np.testing.assert_allclose(np.linalg.norm(mu, axis=-1), 1.0)
    # axes move with position
    assert np.abs(lobe_axes(np.zeros((1, 3)), f) - lobe_axes(np.ones((1, 3)), f)).max() > 0.1
    with pytest.raises(ValueError):
        SyntheticField5D(np.array([-1.0]), np.array([1.0]), np.zeros((1, 3)), np.zeros((1, 3, 3)))


# -- metrics and memory -----------------------------------------------------------


def test_metrics():
    ref = np.array([[1.0, 2.0, 3.0]])
    assert rel_l2(ref, ref) == 0
    assert tonemapped_psnr(ref, ref) == float("inf")
    m = metrics_from_predictions(ref * 1.1, ref)
    a, b = np.log1p(ref * 1.1), np.log1p(ref)
    assert np.isclose(m["psnr"], 10 * np.log10(b.max() ** 2 / np.mean((a - b) ** 2)))


def test_polar_ratio():
    bands = np.ones(18)
    assert polar_ratio(bands) == 1.0
    bands[0] = 4.0
    assert polar_ratio(bands) == 4.0


def test_perfect_model_has_zero_band_error():
    class Exact:
        def predict(self, d):
            return procedural_radiance("gradient", d)

    env = procedural_envmap("gradient", 8, 4)
    env_exact = EnvMap(np.ones((4, 8, 3)))

    class One:
        def predict(self, d):
            return np.ones((len(d), 3))

    assert latitude_error_profile(One(), env_exact, samples=256) == [0.0] * 18
    assert len(latitude_error_profile(Exact(), env, samples=64)) == 18


def test_memory_footprint_formulas():
    assert memory_footprint([], []) == 0
    enc = make_encoder("hashsphere")
    model = Model.create(enc, MLPConfig(16), 0)
    expected_enc = 4 * 2 * sum(min(2**14, 10 * 4**l + 2) for l in range(8))
    assert memory_footprint(model.tables, []) == expected_enc
    mlp = MLPConfig(12, 3)
    assert mlp.param_count() * 4 == 4 * (12 * 16 + 16 + 16 * 16 + 16 + 16 * 3 + 3)
    assert dense_table_bytes(enc) == sum(12 * 20 * 4**l for l in range(6))
    assert dense_table_bytes(make_encoder("grid2d")) == 0


# -- training ----------------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["hashsphere", "grid2d", "grid3d"])
def test_constant_map_is_fit(kind):
    env = procedural_envmap("constant", 64, 32)
    r = train_envmap(env, make_encoder(kind), cfg=TrainConfig(steps=512, band_samples=256))
    assert r.final_rel_l2 < 1e-4


def test_envmap_training_is_deterministic():
    env = procedural_envmap("gradient", 64, 32)
    cfg = TrainConfig(steps=6, batch_size=512, band_samples=64, seed=5)
    a = train_envmap(env, make_encoder("hashsphere", levels=4), cfg=cfg)
    b = train_envmap(env, make_encoder("hashsphere", levels=4), cfg=cfg)
    assert a.loss_curve == b.loss_curve and a.final_rel_l2 == b.final_rel_l2
    c = train_envmap(env, make_encoder("hashsphere", levels=4), cfg=TrainConfig(steps=6, batch_size=512, band_samples=64, seed=6))
    assert c.loss_curve != a.loss_curve


def test_gradient_map_loss_drops_tenfold():
    env = procedural_envmap("gradient", 128, 64)
    r = train_envmap(env, make_encoder("hashsphere"), cfg=TrainConfig(steps=128, band_samples=512))
    assert r.loss_curve[-1] < r.loss_curve[0] / 10
    assert r.final_rel_l2 < r.initial_rel_l2 / 10
    assert r.encoding_bytes == 4 * 2 * sum(min(2**14, vertex_count(l)) for l in range(8))
    assert r.memory_bytes == r.encoding_bytes + r.mlp_bytes
    assert len(r.band_errors) == 18


def test_non_finite_loss_aborts(monkeypatch):
    import hashsphere.tasks.training as training

    real = training.relative_l2_loss
    calls = []

    def poisoned(pred, target):
        calls.append(1)
        loss, g = real(pred, target)
        return (float("nan") if len(calls) == 3 else loss), g

    monkeypatch.setattr(training, "relative_l2_loss", poisoned)
    env = procedural_envmap("gradient", 8, 4)
    with pytest.raises(TrainingError, match=r"non-finite loss at step \d+"):
        train_envmap(env, make_encoder("hashsphere", levels=2), cfg=TrainConfig(steps=5, batch_size=64, band_samples=16))


def test_joint_constant_field():
    enc = make_encoder("hashgridsphere", levels=4, table_cap=2**12, base_resolution=4)

    def target(x, d):
        return np.full(len(d), 0.5)

    r = train_joint(target, enc, cfg=TrainConfig(steps=300, lr=0.005, batch_size=256), eval_positions=4)
    assert r.train_error < 1e-4 and r.novel_error < 1e-4


def test_joint_training_is_deterministic():
    enc = make_encoder("hashgridsphere", levels=3, table_cap=2**12, base_resolution=4)
    f = SyntheticField5D.random(2, 1)
    cfg = TrainConfig(steps=5, lr=0.005, batch_size=128)
    a = train_joint(f, enc, cfg=cfg, eval_positions=2)
    b = train_joint(f, enc, cfg=cfg, eval_positions=2)
    assert a.loss_curve == b.loss_curve and a.novel_error == b.novel_error
