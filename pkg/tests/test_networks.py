"""Network construction, growth, and code-conditioning behavior."""

import numpy as np
import pytest
import torch

from morphspace.networks import (
    Discriminator,
    EqualizedConv2d,
    EqualizedLinear,
    Generator,
    MinibatchStddev,
    NetConfig,
    StyleAffine,
    adain,
    parameter_count,
)


def small_config(**overrides):
    base = dict(k_layers=3, t_dim=4, z_dim=8, base_channels=16, max_resolution=16)
    base.update(overrides)
    return NetConfig(**base)


def codes_for(config, batch, rng):
    z = torch.from_numpy(rng.standard_normal((batch, config.k_layers, config.z_dim)).astype(np.float32))
    t = torch.from_numpy(rng.uniform(-1, 1, (batch, config.k_layers, config.t_dim)).astype(np.float32))
    return z, t


class TestNetConfig:
    def test_stage_count_follows_resolution(self):
        assert small_config(max_resolution=4, k_layers=1).num_stages == 1
        assert small_config(max_resolution=16).num_stages == 3
        assert small_config(max_resolution=64).num_stages == 5

    def test_stage_resolutions_double(self):
        cfg = small_config(max_resolution=64)
        assert [cfg.resolution(s) for s in range(cfg.num_stages)] == [4, 8, 16, 32, 64]

    def test_channels_halve_with_floor(self):
        cfg = small_config(base_channels=16, max_resolution=64, min_channels=4, k_layers=2)
        assert [cfg.channels(s) for s in range(5)] == [16, 8, 4, 4, 4]

    def test_rejects_non_power_of_two_resolution(self):
        with pytest.raises(ValueError):
            small_config(max_resolution=24)
        with pytest.raises(ValueError):
            small_config(max_resolution=2)

    def test_rejects_more_code_layers_than_stages(self):
        with pytest.raises(ValueError):
            small_config(max_resolution=8, k_layers=3)

    def test_rejects_non_positive_dims(self):
        with pytest.raises(ValueError):
            small_config(t_dim=0)
        with pytest.raises(ValueError):
            small_config(z_dim=-1)


class TestAdain:
    def test_output_stats_match_style_float32(self):
        rng = np.random.default_rng(0)
        x = torch.from_numpy(rng.standard_normal((4, 6, 8, 8)).astype(np.float32))
        scale = torch.from_numpy(rng.standard_normal((4, 6)).astype(np.float32))
        bias = torch.from_numpy(rng.standard_normal((4, 6)).astype(np.float32))
        out = adain(x, scale, bias)
        mean = out.mean(dim=(2, 3))
        std = out.var(dim=(2, 3), unbiased=False).sqrt()
        assert torch.allclose(mean, bias, atol=1e-3)
        assert torch.allclose(std, scale.abs(), atol=1e-3)

    def test_output_stats_match_style_float64(self):
        rng = np.random.default_rng(1)
        x = torch.from_numpy(rng.standard_normal((3, 5, 16, 16)))
        scale = torch.from_numpy(rng.standard_normal((3, 5)))
        bias = torch.from_numpy(rng.standard_normal((3, 5)))
        out = adain(x, scale, bias)
        assert torch.allclose(out.mean(dim=(2, 3)), bias, atol=1e-4)
        assert torch.allclose(out.var(dim=(2, 3), unbiased=False).sqrt(), scale.abs(), atol=1e-4)

    def test_unbatched_style_broadcasts(self):
        x = torch.randn(2, 3, 4, 4)
        out = adain(x, torch.ones(3) * 2.0, torch.zeros(3))
        assert out.shape == x.shape
        assert torch.allclose(out.var(dim=(2, 3), unbiased=False).sqrt(), torch.full((2, 3), 2.0), atol=1e-3)

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            adain(torch.randn(2, 3, 4), torch.ones(3), torch.zeros(3))
        with pytest.raises(ValueError):
            adain(torch.randn(2, 3, 4, 4), torch.ones(5), torch.zeros(3))

    def test_gradcheck(self):
        x = torch.randn(2, 3, 5, 5, dtype=torch.float64, requires_grad=True)
        scale = torch.randn(2, 3, dtype=torch.float64, requires_grad=True)
        bias = torch.randn(2, 3, dtype=torch.float64, requires_grad=True)
        assert torch.autograd.gradcheck(adain, (x, scale, bias))


class TestStyleAffine:
    def test_starts_as_identity_modulation(self):
        rng = np.random.default_rng(3)
        affine = StyleAffine(12, 7, rng)
        tz = torch.randn(5, 12)
        scale, bias = affine(tz)
        assert torch.equal(scale, torch.ones(5, 7))
        assert torch.equal(bias, torch.zeros(5, 7))

    def test_responds_to_codes_after_weight_change(self):
        rng = np.random.default_rng(4)
        affine = StyleAffine(6, 3, rng)
        with torch.no_grad():
            affine.fc.weight.normal_()
        a = affine(torch.ones(1, 6))
        b = affine(-torch.ones(1, 6))
        assert not torch.allclose(a[0], b[0])


class TestEqualizedLayers:
    def test_conv_applies_runtime_scale(self):
        rng = np.random.default_rng(5)
        conv = EqualizedConv2d(3, 4, 3, rng)
        assert conv.scale == pytest.approx(np.sqrt(2.0) / np.sqrt(3 * 9))
        x = torch.randn(2, 3, 6, 6)
        manual = torch.nn.functional.conv2d(x, conv.weight * conv.scale, conv.bias, padding=1)
        assert torch.equal(conv(x), manual)

    def test_linear_applies_runtime_scale(self):
        rng = np.random.default_rng(6)
        lin = EqualizedLinear(8, 2, rng, gain=1.0)
        assert lin.scale == pytest.approx(1.0 / np.sqrt(8))
        x = torch.randn(3, 8)
        assert torch.equal(lin(x), torch.nn.functional.linear(x, lin.weight * lin.scale, lin.bias))

    def test_weights_start_unit_normal(self):
        rng = np.random.default_rng(7)
        conv = EqualizedConv2d(32, 32, 3, rng)
        assert conv.weight.std().item() == pytest.approx(1.0, abs=0.05)


class TestMinibatchStddev:
    def test_appends_one_channel(self):
        out = MinibatchStddev()(torch.randn(4, 3, 4, 4))
        assert out.shape == (4, 4, 4, 4)

    def test_feature_is_constant_and_shared(self):
        out = MinibatchStddev()(torch.randn(4, 3, 4, 4))
        feat = out[:, 3]
        assert torch.allclose(feat, feat.flatten()[0].expand_as(feat))

    def test_identical_batch_gives_near_zero(self):
        x = torch.randn(1, 3, 4, 4).repeat(4, 1, 1, 1)
        feat = MinibatchStddev()(x)[:, 3]
        assert feat.abs().max().item() < 1e-3


class TestGenerator:
    def test_output_shape_and_range(self):
        cfg = small_config()
        gen = Generator(cfg, seed=0)
        z, t = codes_for(cfg, 3, np.random.default_rng(0))
        out = gen(z, t)
        assert out.shape == (3, 3, 4, 4)
        assert out.abs().max().item() <= 1.0

    def test_same_seed_same_params(self):
        cfg = small_config()
        a, b = Generator(cfg, seed=9), Generator(cfg, seed=9)
        for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb and torch.equal(pa, pb)
        c = Generator(cfg, seed=10)
        assert not torch.equal(a.const, c.const)

    def test_grow_only_advances_one_stage(self):
        gen = Generator(small_config(), seed=0)
        with pytest.raises(ValueError):
            gen.grow(2)
        gen.grow(1)
        gen.grow(2)
        assert gen.resolution == 16
        with pytest.raises(ValueError):
            gen.grow(3)

    def test_grow_preserves_existing_parameters(self):
        gen = Generator(small_config(), seed=1)
        before = {n: p.detach().clone() for n, p in gen.named_parameters()}
        gen.grow(1)
        after = dict(gen.named_parameters())
        for name, old in before.items():
            assert torch.equal(old, after[name])
        assert parameter_count(gen) > sum(p.numel() for p in before.values())

    def test_fresh_stage_is_inert_at_zero_alpha(self):
        cfg = small_config()
        gen = Generator(cfg, seed=2)
        z, t = codes_for(cfg, 2, np.random.default_rng(1))
        old = gen(z, t)
        gen.grow(1)
        gen.fade_alpha = 0.0
        new = gen(z, t)
        assert new.shape == (2, 3, 8, 8)
        # blended output is a nearest upsample of the old stage's image
        assert torch.equal(new[:, :, ::2, ::2], old)
        assert torch.equal(new[:, :, 1::2, 1::2], old)

    def test_full_alpha_uses_new_stage(self):
        cfg = small_config()
        gen = Generator(cfg, seed=2)
        z, t = codes_for(cfg, 2, np.random.default_rng(1))
        gen.grow(1)
        gen.fade_alpha = 0.0
        faded = gen(z, t)
        gen.fade_alpha = 1.0
        assert not torch.equal(gen(z, t), faded)

    def test_active_layers_track_stage(self):
        gen = Generator(small_config(max_resolution=32, k_layers=2), seed=0)
        assert gen.active_layers == 1
        gen.grow(1)
        assert gen.active_layers == 2
        gen.grow(2)
        assert gen.active_layers == 2  # capped by k_layers

    def test_inactive_code_layers_are_ignored(self):
        cfg = small_config()
        gen = Generator(cfg, seed=3)  # stage 0: only layer 0 is injected
        rng = np.random.default_rng(2)
        z, t = codes_for(cfg, 2, rng)
        z2, t2 = z.clone(), t.clone()
        z2[:, 1:] = torch.randn_like(z2[:, 1:])
        t2[:, 1:] = torch.rand_like(t2[:, 1:])
        assert torch.equal(gen(z, t), gen(z2, t2))

    def test_intermediate_features_per_conditioned_layer(self):
        cfg = small_config()
        gen = Generator(cfg, seed=4)
        gen.grow(1)
        z, t = codes_for(cfg, 2, np.random.default_rng(3))
        feats = gen.intermediate_features(z, t)
        assert len(feats) == 2
        assert feats[0].shape == (2, cfg.channels(0), 4, 4)
        assert feats[1].shape == (2, cfg.channels(1), 8, 8)

    def test_style_scale_bias_identity_at_init(self):
        cfg = small_config()
        gen = Generator(cfg, seed=5)
        t_k = torch.randn(2, cfg.t_dim)
        z_k = torch.randn(2, cfg.z_dim)
        scale, bias = gen.style_scale_bias(0, t_k, z_k)
        assert torch.equal(scale, torch.ones(2, cfg.channels(0)))
        assert torch.equal(bias, torch.zeros(2, cfg.channels(0)))
        with pytest.raises(ValueError):
            gen.style_scale_bias(1, t_k, z_k)

    def test_rejects_misshapen_codes(self):
        cfg = small_config()
        gen = Generator(cfg, seed=6)
        z, t = codes_for(cfg, 2, np.random.default_rng(4))
        with pytest.raises(ValueError):
            gen(z[:, :2], t)
        with pytest.raises(ValueError):
            gen(z, t[..., :2])
        with pytest.raises(ValueError):
            gen(z[:1], t)


class TestDiscriminator:
    def test_forward_shapes(self):
        cfg = small_config()
        disc = Discriminator(cfg, seed=0)
        logits, proj = disc(torch.randn(5, 3, 4, 4))
        assert logits.shape == (5,)
        assert proj.shape == (5, cfg.k_layers, cfg.t_dim)
        assert proj.abs().max().item() < 1.0

    def test_projections_for_future_layers_are_zero(self):
        cfg = small_config()
        disc = Discriminator(cfg, seed=1)
        _, proj = disc(torch.randn(3, 3, 4, 4))
        assert torch.equal(proj[:, 1:], torch.zeros(3, 2, cfg.t_dim))
        assert not torch.allclose(proj[:, 0], torch.zeros(3, cfg.t_dim))

    def test_rejects_wrong_resolution_or_channels(self):
        disc = Discriminator(small_config(), seed=2)
        with pytest.raises(ValueError):
            disc(torch.randn(2, 3, 8, 8))
        with pytest.raises(ValueError):
            disc(torch.randn(2, 1, 4, 4))

    def test_grow_preserves_existing_parameters(self):
        disc = Discriminator(small_config(), seed=3)
        before = {n: p.detach().clone() for n, p in disc.named_parameters()}
        n_before = parameter_count(disc)
        disc.grow(1)
        after = dict(disc.named_parameters())
        for name, old in before.items():
            assert torch.equal(old, after[name])
        assert parameter_count(disc) > n_before
        with pytest.raises(ValueError):
            disc.grow(3)

    def test_zero_alpha_matches_previous_stage_on_pooled_input(self):
        cfg = small_config()
        small = Discriminator(cfg, seed=4)
        grown = Discriminator(cfg, seed=4)
        grown.grow(1)
        grown.fade_alpha = 0.0
        x = torch.randn(4, 3, 8, 8)
        logits_small, proj_small = small(torch.nn.functional.avg_pool2d(x, 2))
        logits_grown, proj_grown = grown(x)
        assert torch.allclose(logits_grown, logits_small, atol=1e-6)
        # the freshly added head is gated off entirely at alpha zero
        assert torch.equal(proj_grown[:, 1], torch.zeros(4, cfg.t_dim))
        assert torch.allclose(proj_grown[:, 0], proj_small[:, 0], atol=1e-6)

    def test_new_head_fades_in_linearly(self):
        # the newest head reads the pre-blend activation, so its gate is
        # exactly linear in alpha
        cfg = small_config()
        disc = Discriminator(cfg, seed=5)
        disc.grow(1)
        x = torch.randn(3, 3, 8, 8)
        disc.fade_alpha = 1.0
        full = disc(x)[1][:, 1]
        disc.fade_alpha = 0.5
        half = disc(x)[1][:, 1]
        assert torch.equal(half, 0.5 * full)

    def test_score_and_projection_gradients_are_disjoint(self):
        cfg = small_config()
        disc = Discriminator(cfg, seed=6)
        x = torch.randn(4, 3, 4, 4)

        disc.adv_score(x).sum().backward()
        touched = {n for n, p in disc.named_parameters() if p.grad is not None}
        assert all(not n.startswith("proj_heads.") for n in touched)
        assert any(n.startswith("adv_head.") for n in touched)

        disc.zero_grad(set_to_none=True)
        disc.project(x).sum().backward()
        touched = {n for n, p in disc.named_parameters() if p.grad is not None}
        assert all(not n.startswith("adv_head.") for n in touched)
        assert any(n.startswith("proj_heads.") for n in touched)

    def test_same_seed_same_params(self):
        cfg = small_config()
        a, b = Discriminator(cfg, seed=7), Discriminator(cfg, seed=7)
        for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb and torch.equal(pa, pb)


class TestGeneratorDiscriminatorPair:
    def test_round_trip_shapes_across_growth(self):
        cfg = small_config()
        gen, disc = Generator(cfg, seed=0), Discriminator(cfg, seed=1)
        rng = np.random.default_rng(5)
        for stage in range(cfg.num_stages):
            if stage:
                gen.grow(stage)
                disc.grow(stage)
            z, t = codes_for(cfg, 2, rng)
            img = gen(z, t)
            assert img.shape[-1] == cfg.resolution(stage)
            logits, proj = disc(img)
            assert logits.shape == (2,)
            assert proj.shape == (2, cfg.k_layers, cfg.t_dim)
