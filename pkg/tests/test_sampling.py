from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from d2ace.errors import ConfigError, ContractError
from d2ace.linalg import RandomStream
from d2ace.sampling import (SamplingSchedule, batches_per_epoch, draw_batch,
                            mixing_coefficient, mixture_distribution,
                            quantization_index, quantization_indices,
                            selection_pressure, weight_to_probability)


class TestQuantizationIndex:
    def test_boundaries(self):
        assert quantization_index(1.0, 10) == 0
        assert quantization_index(0.0, 10) == 10

    def test_hand_value(self):
        # ceil((1 - 0.25) * 10) = ceil(7.5) = 8
        assert quantization_index(0.25, 10) == 8

    def test_out_of_range(self):
        with pytest.raises(ContractError):
            quantization_index(1.2, 10)
        with pytest.raises(ContractError):
            quantization_index(-0.1, 10)

    @given(st.floats(min_value=0.0, max_value=1.0),
           st.integers(min_value=1, max_value=10_000))
    def test_bound_property(self, w, n):
        q = quantization_index(w, n)
        assert 0 <= q <= n

    @given(st.integers(min_value=2, max_value=200))
    @settings(max_examples=50)
    def test_monotone_in_weight(self, n):
        ws = np.sort(np.random.default_rng(n).random(16))
        qs = quantization_indices(ws, n)
        assert np.all(np.diff(qs) <= 0)      # higher weight, lower index


class TestSelectionPressure:
    def test_endpoints(self):
        sched = SamplingSchedule()
        assert selection_pressure(11, sched) == pytest.approx(100.0, abs=1e-9)
        assert selection_pressure(100, sched) == pytest.approx(1.0, abs=1e-9)

    def test_geometric_midpoint(self):
        sched = SamplingSchedule()
        mid = (sched.warmup_epochs + 1 + sched.total_epochs) / 2.0
        assert selection_pressure(mid, sched) == pytest.approx(10.0, abs=1e-9)

    def test_strictly_decreasing(self):
        sched = SamplingSchedule()
        vals = [selection_pressure(t, sched) for t in range(11, 101)]
        assert np.all(np.diff(vals) < 0)

    def test_constant_decay_ratio(self):
        sched = SamplingSchedule()
        vals = np.array([selection_pressure(t, sched) for t in range(11, 101)])
        ratios = vals[1:] / vals[:-1]
        assert np.max(np.abs(ratios - ratios[0])) < 1e-12

    def test_warmup_epoch_rejected(self):
        with pytest.raises(ConfigError):
            selection_pressure(10, SamplingSchedule())
        with pytest.raises(ConfigError):
            selection_pressure(101, SamplingSchedule())


class TestMixingCoefficient:
    def test_documented_epochs(self):
        sched = SamplingSchedule()
        assert mixing_coefficient(30, sched) == 0.7
        assert mixing_coefficient(70, sched) == 0.3

    def test_linear_midpoint(self):
        assert mixing_coefficient(50, SamplingSchedule()) == pytest.approx(0.5, abs=1e-12)

    def test_clamps(self):
        sched = SamplingSchedule()
        assert mixing_coefficient(5, sched) == 0.7
        assert mixing_coefficient(90, sched) == 0.3


class TestWeightToProbability:
    def test_two_point_hand_case(self):
        sched = SamplingSchedule()
        dist = weight_to_probability(np.array([1.0, 0.0]), 11, sched)
        assert dist.probs[0] == pytest.approx(100.0 / 101.0, abs=1e-12)
        assert dist.probs[1] == pytest.approx(1.0 / 101.0, abs=1e-12)
        assert np.array_equal(dist.q_index, [0, 2])

    def test_no_pressure_is_uniform(self):
        sched = SamplingSchedule()
        dist = weight_to_probability(np.random.default_rng(0).random(7), 100, sched)
        assert np.allclose(dist.probs, 1.0 / 7.0, atol=1e-9)

    def test_equal_weights_uniform(self):
        dist = weight_to_probability(np.full(5, 0.3), 20, SamplingSchedule())
        assert np.allclose(dist.probs, 0.2, atol=1e-15)

    def test_monotone_in_weight(self):
        w = np.array([0.9, 0.1, 0.5, 0.5])
        dist = weight_to_probability(w, 15, SamplingSchedule())
        assert dist.probs[0] > dist.probs[2] > dist.probs[1]
        assert dist.probs[2] == dist.probs[3]

    def test_positivity_fuzz(self):
        # executable form of the strict-positivity guarantee
        rng = np.random.default_rng(1)
        sched = SamplingSchedule()
        for _ in range(1000):
            n = int(rng.integers(2, 64))
            w = rng.random(n)
            t = int(rng.integers(11, 101))
            p_mix = float(rng.random())
            mix = mixture_distribution(weight_to_probability(w, t, sched),
                                       weight_to_probability(rng.random(n), t, sched),
                                       p_mix)
            assert mix.probs.min() > 0.0
            assert abs(mix.probs.sum() - 1.0) < 1e-12


class TestMixtureDistribution:
    def test_boundary_coefficients(self):
        sched = SamplingSchedule()
        u = weight_to_probability(np.array([1.0, 0.0]), 11, sched)
        h = weight_to_probability(np.array([0.0, 1.0]), 11, sched)
        assert np.allclose(mixture_distribution(u, h, 1.0).probs, u.probs)
        assert np.allclose(mixture_distribution(u, h, 0.0).probs, h.probs)

    def test_hand_blend(self):
        from d2ace.sampling import SamplingDistribution
        u = SamplingDistribution(probs=np.array([0.8, 0.2]))
        h = SamplingDistribution(probs=np.array([0.2, 0.8]))
        mix = mixture_distribution(u, h, 0.5)
        assert np.allclose(mix.probs, [0.5, 0.5])

    def test_min_bounded_below(self):
        sched = SamplingSchedule()
        u = weight_to_probability(np.array([1.0, 0.0, 0.3]), 11, sched)
        h = weight_to_probability(np.array([0.2, 0.9, 0.3]), 11, sched)
        mix = mixture_distribution(u, h, 0.4)
        assert mix.probs.min() >= min(u.probs.min(), h.probs.min()) - 1e-15


class TestDrawBatch:
    def test_point_mass_concentrates(self):
        from d2ace.sampling import SamplingDistribution
        probs = np.full(10, 1e-9)
        probs[3] = 1.0 - 9e-9
        dist = SamplingDistribution(probs=probs / probs.sum())
        draws = draw_batch(dist, 10_000, RandomStream(0, purpose="draw"))
        assert np.mean(draws == 3) > 0.999

    def test_uniform_frequencies_within_3_sigma(self):
        from d2ace.sampling import SamplingDistribution
        n, total = 8, 100_000
        dist = SamplingDistribution(probs=np.full(n, 1.0 / n))
        draws = draw_batch(dist, total, RandomStream(1, purpose="draw"))
        counts = np.bincount(draws, minlength=n)
        expected = total / n
        sigma = np.sqrt(total * (1 / n) * (1 - 1 / n))
        assert np.max(np.abs(counts - expected)) < 3 * sigma

    def test_two_stage_matches_direct_mixture(self):
        sched = SamplingSchedule()
        rng_w = np.random.default_rng(2)
        u = weight_to_probability(rng_w.random(12), 20, sched)
        h = weight_to_probability(rng_w.random(12), 20, sched)
        mix = mixture_distribution(u, h, 0.6)
        total = 100_000
        two_stage = draw_batch(mix, total, RandomStream(3, purpose="two-stage"))
        from d2ace.sampling import SamplingDistribution
        direct = draw_batch(SamplingDistribution(probs=mix.probs), total,
                            RandomStream(4, purpose="direct"))
        f1 = np.bincount(two_stage, minlength=12) / total
        f2 = np.bincount(direct, minlength=12) / total
        sigma = np.sqrt(mix.probs * (1 - mix.probs) / total)
        assert np.all(np.abs(f1 - f2) < 6 * sigma + 1e-12)
        assert np.all(np.abs(f1 - mix.probs) < 4 * sigma + 1e-3)

    def test_reproducible_given_stream(self):
        sched = SamplingSchedule()
        dist = weight_to_probability(np.random.default_rng(5).random(9), 25, sched)
        a = draw_batch(dist, 64, RandomStream(6, epoch=3, purpose="batches"))
        b = draw_batch(dist, 64, RandomStream(6, epoch=3, purpose="batches"))
        assert np.array_equal(a, b)

    def test_without_replacement_unique(self):
        sched = SamplingSchedule()
        dist = weight_to_probability(np.random.default_rng(7).random(20), 30, sched)
        batch = draw_batch(dist, 20, RandomStream(8, purpose="wr"), with_replacement=False)
        assert len(set(batch.tolist())) == 20


class TestBatchesPerEpoch:
    def test_ceil_division(self):
        assert batches_per_epoch(100, 10) == 10
        assert batches_per_epoch(101, 10) == 11
        assert batches_per_epoch(5, 10) == 1


class TestDecileLossHistogram:
    def test_counts_partition_everything(self):
        from d2ace.sampling import decile_loss_histogram
        rng = np.random.default_rng(0)
        probs = rng.random(57)
        probs /= probs.sum()
        hist = decile_loss_histogram(probs, rng.random(57))
        assert hist.sum() == 57
        assert hist.shape == (10, 3)

    def test_high_probability_tracks_high_loss(self):
        from d2ace.sampling import decile_loss_histogram
        losses = np.linspace(0.0, 1.0, 100)
        probs = losses + 0.01            # sampling aligned with loss
        hist = decile_loss_histogram(probs / probs.sum(), losses)
        # top decile is pure high-tier, bottom decile pure low-tier
        assert hist[0, 0] == 10 and hist[0, 1] == hist[0, 2] == 0
        assert hist[9, 2] == 10 and hist[9, 0] == hist[9, 1] == 0
