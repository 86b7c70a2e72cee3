"""Optical link: fading statistics, transmit/detect arithmetic, BER."""

import numpy as np
import pytest

from splitsnn import channel as ch
from splitsnn.rng import derive_rng

from oracles import analytic_ber, binomial_halfwidth

EVAL_CONSTANTS = dict(responsivity=0.8, amplifier_gain=1000.0,
                      free_space_loss=ch.loss_db_to_linear(14.3),
                      on_power=1e-3)


def link(**overrides):
    kw = dict(EVAL_CONSTANTS)
    kw.update(overrides)
    return ch.LinkParams(**kw)


class TestLinkParams:
    def test_db_conversion_at_parse(self):
        params = ch.LinkParams.from_config({
            "responsivity": 0.8,
            "amplifier_gain_db": 30.0,
            "free_space_loss_db": 14.3,
            "on_power": 1e-3,
        })
        assert params.amplifier_gain == pytest.approx(1000.0)
        assert params.free_space_loss == pytest.approx(10 ** -1.43)
        # a loss figure must become a factor <= 1
        assert params.free_space_loss < 1

    def test_rejects_double_db_spec(self):
        with pytest.raises(ValueError):
            ch.LinkParams.from_config({"amplifier_gain": 100.0,
                                       "amplifier_gain_db": 20.0})

    @pytest.mark.parametrize("bad", [
        {"responsivity": -0.1},
        {"free_space_loss": 0.0},
        {"free_space_loss": 1.5},
        {"amplifier_gain": 0.5},
        {"pointing_variance": -1e-9},
        {"noise_floor": -1.0},
    ])
    def test_rejects_out_of_range(self, bad):
        kw = dict(EVAL_CONSTANTS)
        kw.update(bad)
        with pytest.raises(ValueError):
            ch.LinkParams(**kw)


class TestPointingError:
    def test_zero_variance_is_exactly_zero(self):
        e = ch.sample_pointing_error(0.0, 3, derive_rng(0, "pe"))
        assert e.tolist() == [0.0, 0.0, 0.0]

    def test_mean_is_twice_variance(self):
        sigma2 = 0.1
        e = ch.sample_pointing_error(sigma2, 10 ** 6, derive_rng(1, "pe"))
        assert np.all(e >= 0)
        assert e.mean() == pytest.approx(2 * sigma2, rel=0.01)

    def test_fading_mean_matches_threshold_factor(self):
        # E[exp(-G e)] = (1 + G sigma^2)^-2, the factor in the threshold
        sensitivity, sigma2 = 5.0, 0.1   # sigma^2 G = 0.5
        e = ch.sample_pointing_error(sigma2, 10 ** 6, derive_rng(2, "pe"))
        assert np.exp(-sensitivity * e).mean() == pytest.approx(
            (1 + sensitivity * sigma2) ** -2, rel=0.01)

    def test_rejects_negative_variance(self):
        with pytest.raises(ValueError):
            ch.sample_pointing_error(-0.1, 10, derive_rng(0, "pe"))


class TestTransmit:
    def test_noiseless_one_bit_arithmetic(self):
        params = link(free_space_loss=0.03715)
        received, draw = ch.transmit([1], params, derive_rng(0, "tx"))
        expected = 0.8 * 1000.0 * 0.03715 * 1e-3
        assert received.samples[0] == pytest.approx(expected, rel=1e-12)
        assert draw.pointing_errors[0] == 0.0

    def test_zero_bit_zero_noise(self):
        received, _ = ch.transmit([0], link(), derive_rng(0, "tx"))
        assert received.samples[0] == 0.0

    def test_fading_mean_on_ones(self):
        # sigma^2 G = 0.5 -> mean received level is (1.5)^-2 of clean
        params = link(pointing_sensitivity=1e6, pointing_variance=5e-7)
        received, _ = ch.transmit(np.ones(10 ** 6, dtype=np.int8), params,
                                  derive_rng(3, "tx"))
        assert received.samples.mean() == pytest.approx(
            params.on_level * (1.5) ** -2, rel=0.01)

    def test_reproducible_for_fixed_stream(self):
        params = link(pointing_variance=2e-7, noise_floor=1e-8)
        bits = derive_rng(4, "bits").integers(0, 2, 64)
        a, draw_a = ch.transmit(bits, params, derive_rng(4, "tx"))
        b, draw_b = ch.transmit(bits, params, derive_rng(4, "tx"))
        np.testing.assert_array_equal(a.samples, b.samples)
        np.testing.assert_array_equal(draw_a.pointing_errors,
                                      draw_b.pointing_errors)

    def test_rejects_empty_and_nonbinary(self):
        with pytest.raises(ValueError):
            ch.transmit([], link(), derive_rng(0, "tx"))
        with pytest.raises(ValueError):
            ch.transmit([0, 2], link(), derive_rng(0, "tx"))


class TestDecisionThreshold:
    def test_formula_at_zero_pointing_error(self):
        params = link(free_space_loss=0.03715)
        assert ch.decision_threshold(params) == pytest.approx(
            0.5 * 0.8 * 1000.0 * 1e-3 * 0.03715, rel=1e-12)

    def test_unity_sigma2g_quarters_threshold(self):
        base = ch.decision_threshold(link())
        quartered = ch.decision_threshold(
            link(pointing_sensitivity=1e6, pointing_variance=1e-6))
        assert quartered == pytest.approx(base / 4, rel=1e-12)

    def test_zero_power_zero_threshold(self):
        assert ch.decision_threshold(link(on_power=0.0)) == 0.0


class TestDetect:
    def test_direct_comparison(self):
        out = ch.detect(np.array([0.03, 0.001]), 0.0149)
        assert out.tolist() == [1, 0]

    def test_tie_goes_to_zero(self):
        assert ch.detect(np.array([0.0149]), 0.0149).tolist() == [0]

    def test_binary_and_length_preserving(self):
        y = derive_rng(5, "y").normal(0, 1, 257)
        out = ch.detect(y, 0.1)
        assert out.shape == y.shape
        assert set(np.unique(out)) <= {0, 1}

    def test_noiseless_roundtrip(self):
        params = link()
        bits = derive_rng(6, "bits").integers(0, 2, 10 ** 4, dtype=np.int8)
        received, _ = ch.transmit(bits, params, derive_rng(6, "tx"))
        decided = ch.detect(received, ch.decision_threshold(params))
        np.testing.assert_array_equal(decided, bits)


class TestSoftReceive:
    def test_normalization_identity(self):
        params = link()
        received, _ = ch.transmit([1, 0], params, derive_rng(0, "sr"))
        np.testing.assert_allclose(ch.soft_receive(received, params),
                                   [1.0, 0.0], atol=1e-12)

    def test_fading_mean(self):
        params = link(pointing_sensitivity=1e6, pointing_variance=5e-7)
        received, _ = ch.transmit(np.ones(10 ** 6, dtype=np.int8), params,
                                  derive_rng(7, "sr"))
        assert ch.soft_receive(received, params).mean() == pytest.approx(
            (1.5) ** -2, rel=0.01)

    def test_noise_variance_on_zeros(self):
        floor = 1e-8
        params = link(noise_floor=floor)
        received, _ = ch.transmit(np.zeros(200_000, dtype=np.int8), params,
                                  derive_rng(8, "sr"))
        soft = ch.soft_receive(received, params)
        assert soft.var() == pytest.approx(floor / params.on_level ** 2,
                                           rel=0.05)
        # no clipping: Gaussian noise makes some values negative
        assert soft.min() < 0

    def test_rejects_zero_power(self):
        with pytest.raises(ValueError):
            ch.soft_receive(np.array([0.0]), link(on_power=0.0))


class TestEstimateBer:
    def test_noiseless_channel_is_error_free(self):
        assert ch.estimate_ber(link(), 10 ** 4, derive_rng(9, "ber")) == 0.0

    def test_noise_dominated_limit_is_half(self):
        params = link(noise_floor=1e4)   # sigma0 huge vs signal
        rate = ch.estimate_ber(params, 10 ** 5, derive_rng(10, "ber"))
        assert rate == pytest.approx(0.5, abs=4 * np.sqrt(0.25 / 10 ** 5))

    def test_matches_quadrature_oracle_mid_snr(self):
        theta = ch.decision_threshold(
            link(pointing_sensitivity=1e6, pointing_variance=2e-7))
        params = link(pointing_sensitivity=1e6, pointing_variance=2e-7,
                      noise_floor=(theta / 2.5) ** 2)
        oracle = analytic_ber(params)
        n = 200_000
        rate = ch.estimate_ber(params, n, derive_rng(11, "ber"))
        assert abs(rate - oracle) <= binomial_halfwidth(oracle, n)

    def test_monotone_in_noise_floor(self):
        theta = ch.decision_threshold(link())
        rates = []
        for i, ratio in enumerate((3.0, 2.0, 1.2)):
            params = link(noise_floor=(theta / ratio) ** 2)
            rates.append(ch.estimate_ber(params, 200_000,
                                         derive_rng(12, "ber", i)))
        assert rates[0] < rates[1] < rates[2]
