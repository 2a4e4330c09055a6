import json

import numpy as np
import pytest

import latentsteer as ls


@pytest.fixture(scope="module")
def toy():
    return ls.toy_backend(seed=7)


def test_backend_shapes(toy):
    assert toy.kind == "toy"
    assert toy.wplus_shape == (6, 4)
    assert toy.style_channels == 64
    assert toy.image_shape == (4, 4, 3)
    geometry = json.loads(toy.geometry_json)
    assert geometry["group_boundaries"] == [2, 4]
    w = toy.sample_wplus(3)
    assert w.shape == (6, 4)
    assert np.array_equal(w, toy.sample_wplus(3))
    assert toy.to_style(w).shape == (64,)
    image = toy.render(w)
    assert image.shape == (4, 4, 3)
    assert image.min() >= 0.0 and image.max() <= 1.0
    assert np.allclose(image, toy.render_style(toy.to_style(w)))


def test_errors_carry_codes(toy):
    with pytest.raises(ls.LatentsteerError) as err:
        toy.render(np.zeros((5, 4)))
    assert err.value.code == "shape_mismatch"
    with pytest.raises(ls.LatentsteerError) as err:
        ls.Backend.from_json(json.dumps({"kind": "real"}))
    assert err.value.code == "backend_unavailable"
    no_id = ls.toy_backend(identity_dim=0)
    with pytest.raises(ls.LatentsteerError) as err:
        no_id.identity_loss(no_id.sample_wplus(0), no_id.sample_wplus(1))
    assert err.value.code == "identity_loss_unavailable"


def test_png_round_trip(toy):
    image = toy.render(toy.sample_wplus(1))
    back = ls.decode_png(ls.encode_png(image))
    assert back.shape == image.shape
    assert np.abs(back - image).max() <= 0.5 / 255 + 1e-12


def test_inverter_round_trip(toy):
    w = toy.sample_wplus(2)
    assert np.abs(toy.invert(toy.render(w)) - w).max() < 1e-6


def test_clip_distance_range(toy):
    d = toy.clip_distance(toy.render(toy.sample_wplus(4)), "a face with glasses")
    assert 0.0 <= d <= 2.0
    assert toy.identity_loss(toy.sample_wplus(4), toy.sample_wplus(4)) == pytest.approx(0.0, abs=1e-12)


def test_objective_at_source_is_clip_only(toy):
    w = toy.sample_wplus(5)
    terms = toy.objective(w, w, "a smiling face")
    assert terms["l2"] == 0.0
    assert terms["total"] == pytest.approx(terms["clip"], abs=1e-12)


def test_optimize_reduces_objective(toy):
    w = toy.sample_wplus(6)
    out = toy.optimize(w, "a face with glasses", steps=30, learning_rate=0.05)
    assert out["code"].shape == (6, 4)
    assert out["image"].shape == (4, 4, 3)
    assert len(out["trace"]) == 31
    assert out["trace"][-1]["total"] < out["trace"][0]["total"]
    assert out["trace_csv"].count("\n") >= 31
    assert toy.gradient_check(w, w, "a face with glasses", probes=16) < 1e-3


def test_progress_can_cancel(toy):
    calls = []

    def progress(done, total):
        calls.append(done)
        return done < 3

    with pytest.raises(ls.LatentsteerError) as err:
        toy.optimize(toy.sample_wplus(0), "x", steps=50, progress=progress)
    assert err.value.code == "cancelled"
    assert calls == [1, 2, 3]


def test_global_direction(toy):
    stats = toy.precompute_stats(sample_count=50, pair_count=4, seed=1)
    assert stats.deltas.shape[0] == 64
    assert stats.channel_std.shape == (64,)
    back = ls.ChannelStats.from_bytes(stats.to_bytes())
    assert back.key == stats.key
    assert np.array_equal(back.channel_std, stats.channel_std.astype(np.float32).astype(np.float64))

    r = toy.relevance(stats, "a smiling face", "a face")
    d = toy.direction(stats, "a smiling face", "a face", k=5)
    assert np.count_nonzero(d) == 5
    top = np.argsort(-np.abs(r), kind="stable")[:5]
    assert set(np.flatnonzero(d)) == set(top)
    loose = toy.direction(stats, "a smiling face", "a face", beta=0.0)
    strict = toy.direction(stats, "a smiling face", "a face", beta=0.2)
    assert np.count_nonzero(strict) <= np.count_nonzero(loose)
    with pytest.raises(ls.LatentsteerError):
        toy.direction(stats, "a smiling face", "a face")

    s = toy.to_style(toy.sample_wplus(9))
    code, image = toy.apply_global(s, d, 0.0)
    assert np.array_equal(code, s)
    assert np.allclose(image, toy.render_style(s))
    code, _ = toy.apply_global(s, d, 3.0)
    assert np.allclose(code, s + 3.0 * d)


def test_template_bank():
    bank = ls.template_bank()
    assert len(bank) == 80
    assert ls.DEFAULT_TEMPLATE_BANK == "imagenet-80"
    assert ls.DEFAULT_PAIR_COUNT == 100
    assert ls.DEFAULT_PERTURB_ALPHA == 5.0


def test_mapper_train_apply_and_checkpoint(toy):
    config = dict(hidden_dim=16, layers_per_branch=3, lambda_l2=0.05, lambda_id=0.0,
                  learning_rate=1e-2, steps=40, seed=4)
    w = toy.sample_wplus(11)
    mapper = ls.train_mapper(toy, "a face with glasses", count=8, latent_seed=1, **config)
    assert mapper.steps_trained == 40
    assert len(mapper.loss_history) == 40
    assert mapper.loss_history[-1] < mapper.loss_history[0]
    assert json.loads(mapper.config_json)["hidden_dim"] == 16

    code, image = toy.apply_mapper(mapper, w)
    assert np.allclose(code, w + mapper.residual(w))
    assert image.shape == (4, 4, 3)

    back = ls.Mapper.from_bytes(mapper.to_bytes())
    assert back.prompt == "a face with glasses"
    assert np.allclose(back.residual(w), mapper.residual(w), atol=1e-5)

    report = mapper.similarity(toy.sample_training_latents(5, 2))
    assert report["pairs"] + report["excluded_pairs"] == 10
    assert -1.0 <= report["mean"] <= 1.0


class LinearGenerator:
    """W+ (2 x 3) flattened as the style code; pixels = clamp(0.5 + 0.1 * A s)."""

    def __init__(self):
        self.a = np.random.default_rng(0).normal(size=(12, 6))

    def geometry_json(self):
        return json.dumps({"num_layers": 3, "latent_dim": 2,
                           "style_channel_counts": [2, 2, 2], "group_boundaries": [1, 2]})

    def image_shape(self):
        return (2, 2)

    def to_style(self, w):
        return np.asarray(w).reshape(-1)

    def to_style_vjp(self, w, cotangent):
        return np.asarray(cotangent)

    def synthesize(self, s):
        return 0.5 + 0.1 * self.a @ s

    def synthesize_vjp(self, s, cotangent):
        return 0.1 * self.a.T @ cotangent

    def sample_wplus(self, seed):
        return np.random.default_rng(seed % 2**32).normal(scale=0.1, size=(3, 2))

    def fingerprint(self):
        return "linear-test"


class LinearEncoder:
    def __init__(self):
        self.b = np.random.default_rng(1).normal(size=(5, 12))

    def embed_dim(self):
        return 5

    def embed(self, image):
        return self.b @ np.asarray(image).reshape(-1)

    def embed_vjp(self, image, cotangent):
        x = np.asarray(image).reshape(-1)
        e = self.b @ x
        n = np.linalg.norm(e)
        u = e / n
        return self.b.T @ ((cotangent - u * (u @ cotangent)) / n)

    def fingerprint(self):
        return "linear-encoder"


class HashText:
    def embed_dim(self):
        return 5

    def embed(self, sentence):
        return np.random.default_rng(sum(sentence.encode())).normal(size=5)

    def fingerprint(self):
        return "hash-text"


def test_python_components():
    backend = ls.Backend.from_python(LinearGenerator(), LinearEncoder(), HashText())
    assert backend.kind == "python"
    assert backend.wplus_shape == (3, 2)
    assert not backend.has_identity and not backend.has_inverter
    w = backend.sample_wplus(0)
    assert backend.gradient_check(w, w, "red", lambda_id=0.0, probes=6) < 1e-4
    out = backend.optimize(w, "red", lambda_id=0.0, steps=20, learning_rate=0.5)
    assert out["trace"][-1]["total"] < out["trace"][0]["total"]
    with pytest.raises(ls.LatentsteerError) as err:
        backend.invert(backend.render(w))
    assert err.value.code == "inversion_unavailable"
