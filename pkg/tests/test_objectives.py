import math

import numpy as np
import pytest
import torch

from morphspace.objectives import (
    LossReport,
    adv_loss_discriminator,
    adv_loss_generator,
    mi_loss,
)


class TestAdversarialLosses:
    def test_zero_logits_hand_value(self):
        # softplus(0) = ln 2 for both real and fake terms
        zeros = torch.zeros(8)
        d = adv_loss_discriminator(zeros, zeros)
        assert abs(float(d) - 2.0 * math.log(2.0)) < 1e-6
        g = adv_loss_generator(zeros)
        assert abs(float(g) - math.log(2.0)) < 1e-6

    def test_unit_logits_hand_value(self):
        # real = fake = 1: softplus(-1) + softplus(1) = ln(1+e^-1) + ln(1+e)
        ones = torch.ones(4)
        d = adv_loss_discriminator(ones, ones)
        expected = math.log(1 + math.e**-1) + math.log(1 + math.e)
        assert abs(float(d) - expected) < 1e-6

    def test_d_loss_decreases_with_separation(self):
        real = torch.tensor([3.0, 2.5])
        fake = torch.tensor([-3.0, -2.5])
        good = adv_loss_discriminator(real, fake)
        bad = adv_loss_discriminator(fake, real)
        assert float(good) < 0.2 < float(bad)

    def test_g_nonsaturating_matches_manual(self):
        logits = torch.tensor([-2.0, 0.5, 3.0])
        manual = float(torch.nn.functional.softplus(-logits).mean())
        assert abs(float(adv_loss_generator(logits)) - manual) < 1e-7

    def test_g_saturating_variant(self):
        logits = torch.tensor([-2.0, 0.5, 3.0])
        manual = -float(torch.nn.functional.softplus(logits).mean())
        assert abs(float(adv_loss_generator(logits, saturating=True)) - manual) < 1e-7

    def test_saturating_and_nonsaturating_agree_on_gradient_sign(self):
        logits = torch.tensor([0.3], requires_grad=True)
        adv_loss_generator(logits).backward()
        g_ns = float(logits.grad)
        logits2 = torch.tensor([0.3], requires_grad=True)
        adv_loss_generator(logits2, saturating=True).backward()
        g_s = float(logits2.grad)
        assert g_ns < 0 and g_s < 0  # both push the logit up

    def test_extreme_logits_stay_finite(self):
        real = torch.tensor([900.0, -900.0])
        fake = torch.tensor([-900.0, 900.0])
        assert math.isfinite(float(adv_loss_discriminator(real, fake)))
        assert math.isfinite(float(adv_loss_generator(fake)))

    def test_empty_batch_rejected(self):
        empty = torch.zeros(0)
        with pytest.raises(ValueError):
            adv_loss_discriminator(empty, empty)
        with pytest.raises(ValueError):
            adv_loss_generator(empty)


class TestMiLoss:
    def test_one_hot_hand_value(self):
        # single pair differing by 1 in one coordinate: 0.5 * 1^2 = 0.5
        t = torch.zeros(1, 2, 3)
        tp = t.clone()
        tp[0, 1, 2] = 1.0
        assert abs(float(mi_loss(t, tp)) - 0.5) < 1e-9

    def test_matches_gaussian_negative_log_density(self):
        # Independently coded oracle: the factorized unit-variance Gaussian
        # negative log-density of t under mean t_proj, constant dropped.
        rng = np.random.default_rng(42)
        for _ in range(100):
            k, dim, batch = rng.integers(1, 6), rng.integers(1, 6), rng.integers(1, 9)
            t = rng.uniform(-1, 1, (batch, k, dim))
            tp = rng.uniform(-1, 1, (batch, k, dim))
            nll = 0.0
            for b in range(batch):
                for i in range(k):
                    for j in range(dim):
                        pdf = math.exp(-0.5 * (t[b, i, j] - tp[b, i, j]) ** 2) / math.sqrt(2 * math.pi)
                        nll -= math.log(pdf)
            expected = nll / batch - 0.5 * k * dim * math.log(2 * math.pi)
            got = float(mi_loss(torch.tensor(t), torch.tensor(tp)))
            assert abs(got - expected) < 1e-6

    def test_perfect_projection_is_zero(self):
        t = torch.rand(4, 3, 4)
        assert float(mi_loss(t, t)) == 0.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            mi_loss(torch.zeros(2, 3, 4), torch.zeros(2, 3, 5))

    def test_gradient_pulls_projection_toward_code(self):
        t = torch.full((2, 1, 2), 0.5)
        tp = torch.zeros(2, 1, 2, requires_grad=True)
        mi_loss(t, tp).backward()
        assert torch.all(tp.grad < 0)  # increasing tp toward t lowers the loss


class TestLossReport:
    def test_totals_are_derived(self):
        r = LossReport(d_adv_loss=1.25, g_adv_loss=0.75, mi_loss=0.5, lam=2.0)
        assert r.total_g == 0.75 + 2.0 * 0.5
        assert r.total_d == 1.25 + 2.0 * 0.5
        d = r.as_dict()
        assert d["total_g"] == r.total_g and d["lambda"] == 2.0

    def test_lambda_zero_drops_mi_from_totals(self):
        r = LossReport(d_adv_loss=1.0, g_adv_loss=1.0, mi_loss=123.0, lam=0.0)
        assert r.total_g == 1.0 and r.total_d == 1.0
