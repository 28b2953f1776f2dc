from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cejroute.errors import ConfigError
from cejroute.imbalance import (
    ClassWeights,
    LossConfig,
    SamplerConfig,
    WeightConfig,
    cb_ce_loss,
    cb_focal_loss,
    class_aware_batches,
    class_weights,
    effective_number,
    read_class_counts,
    read_weights_json,
    write_weights_json,
)

mpmath.mp.dps = 50


def mp_effective_number(n, beta):
    beta = mpmath.mpf(str(beta))
    return (1 - beta ** n) / (1 - beta)


def mp_class_weights(counts, beta, w_min, w_max):
    """High-precision replication of the weight pipeline: raw -> unit-mean
    normalize -> clamp -> unit-mean re-normalize."""
    raw = [1 / mp_effective_number(n, beta) for n in counts]
    total = mpmath.fsum(raw)
    norm = [w * len(counts) / total for w in raw]
    clamped = [min(max(w, mpmath.mpf(str(w_min))), mpmath.mpf(str(w_max))) for w in norm]
    mean = mpmath.fsum(clamped) / len(clamped)
    return [float(w / mean) for w in clamped]


UNIT_WEIGHTS = (1.0, 1.0)


class TestEffectiveNumber:
    def test_single_sample_is_one(self):
        assert effective_number(1, 0.999) == pytest.approx(1.0, abs=1e-15)

    def test_n100(self):
        assert effective_number(100, 0.999) == pytest.approx(
            float(mp_effective_number(100, 0.999)), abs=1e-9)
        assert effective_number(100, 0.999) == pytest.approx(95.21, abs=0.01)

    def test_n1000_approaches_saturation(self):
        en = effective_number(1000, 0.999)
        assert en == pytest.approx(float(mp_effective_number(1000, 0.999)), abs=1e-9)
        assert en == pytest.approx(632.3, abs=0.05)
        assert en < 1.0 / (1.0 - 0.999)

    def test_beta_zero_collapses_to_one(self):
        for n in (1, 10, 10_000):
            assert effective_number(n, 0.0) == 1.0

    def test_validation(self):
        with pytest.raises(ConfigError):
            effective_number(0, 0.999)
        with pytest.raises(ConfigError):
            effective_number(10, 1.0)
        with pytest.raises(ConfigError):
            effective_number(10, -0.1)

    @given(st.integers(min_value=1, max_value=100_000),
           st.floats(min_value=1e-6, max_value=0.9999))
    def test_increasing_and_bounded(self, n, beta):
        en_n = effective_number(n, beta)
        en_next = effective_number(n + 1, beta)
        assert en_n <= 1.0 / (1.0 - beta) + 1e-9
        # strict growth holds until the beta^n increment falls below the
        # float resolution of the saturating bound
        if beta ** n / (1.0 - beta) > en_n * 1e-12:
            assert en_next > en_n
        else:
            assert en_next >= en_n


class TestClassWeights:
    def test_uniform_counts_give_unit_weights(self):
        cw = class_weights([500, 500])
        assert cw.weights == (1.0, 1.0)

    @given(st.integers(min_value=1, max_value=50_000),
           st.integers(min_value=2, max_value=8),
           st.floats(min_value=0.0, max_value=0.9999))
    def test_uniform_symmetry_any_beta(self, count, n_classes, beta):
        cw = class_weights([count] * n_classes, WeightConfig(beta=beta))
        np.testing.assert_allclose(cw.weights, 1.0, atol=1e-12)

    def test_imbalanced_900_100(self):
        cw = class_weights([900, 100])
        expected = mp_class_weights([900, 100], 0.999, 0.25, 4.0)
        np.testing.assert_allclose(cw.weights, expected, atol=1e-12)
        np.testing.assert_allclose(cw.weights, [0.277, 1.723], atol=1e-3)
        # no clamping triggered on this pair
        assert cw.normalized == cw.clamped

    def test_extreme_imbalance_clamps_then_renormalizes(self):
        cfg = WeightConfig(beta=0.999, w_min=0.25, w_max=4.0)
        cw = class_weights([10_000, 10], cfg)
        # the majority weight clamps up to w_min=0.25 (with C=2 a normalized
        # weight can never exceed 2, so the upper clamp is unreachable here)
        assert cw.clamped[0] == pytest.approx(0.25, abs=1e-15)
        expected = mp_class_weights([10_000, 10], 0.999, 0.25, 4.0)
        np.testing.assert_allclose(cw.weights, expected, atol=1e-12)
        # the re-normalization pushes the clamped value marginally below the
        # bound; the invariant binds pre-renormalization
        assert cw.weights[0] < 0.25
        assert all(0.25 - 1e-12 <= w <= 4.0 + 1e-12 for w in cw.clamped)

    def test_unit_mean_after_renormalization(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            counts = rng.integers(1, 100_000, size=rng.integers(2, 12)).tolist()
            cw = class_weights(counts)
            assert abs(float(np.mean(cw.weights)) - 1.0) <= 1e-9

    def test_matches_high_precision_oracle_random(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            counts = rng.integers(1, 1_000_000, size=rng.integers(2, 12)).tolist()
            cw = class_weights(counts)
            expected = mp_class_weights(counts, 0.999, 0.25, 4.0)
            np.testing.assert_allclose(cw.weights, expected, atol=1e-9)

    def test_zero_count_instructs_caller(self):
        with pytest.raises(ConfigError, match="drop or merge"):
            class_weights([100, 0])

    def test_weights_json_round_trip(self, tmp_path, edos_b_schema):
        counts_path = tmp_path / "counts.json"
        counts_path.write_text(
            '{"1. threats, plans to harm and incitement": 89, "2. derogation": 454, '
            '"3. animosity": 333, "4. prejudiced discussions": 94}',
            encoding="utf-8")
        counts = read_class_counts(counts_path, edos_b_schema)
        assert counts == (89, 454, 333, 94)
        cw = class_weights(counts)
        out = tmp_path / "weights.json"
        write_weights_json(out, edos_b_schema, cw)
        back = read_weights_json(out, edos_b_schema)
        assert back.weights == cw.weights
        assert back.clamped == cw.clamped


class TestLosses:
    def test_confident_correct_near_zero(self):
        loss = cb_ce_loss([10.0, -10.0], 0, UNIT_WEIGHTS, LossConfig(label_smoothing_eps=0.0))
        assert 0.0 <= loss <= 1e-4

    def test_uniform_logits_ln2(self):
        loss = cb_ce_loss([0.0, 0.0], 0, UNIT_WEIGHTS, LossConfig(label_smoothing_eps=0.0))
        assert loss == pytest.approx(math.log(2.0), abs=1e-9)

    def test_weight_scales_linearly(self):
        loss = cb_ce_loss([0.0, 0.0], 0, (2.0, 0.5), LossConfig(label_smoothing_eps=0.0))
        assert loss == pytest.approx(2.0 * math.log(2.0), abs=1e-9)

    def test_smoothed_target_mixes_classes(self):
        # eps=0.2, C=2, logits [1, 0]: target (0.9, 0.1)
        loss = cb_ce_loss([1.0, 0.0], 0, UNIT_WEIGHTS, LossConfig(label_smoothing_eps=0.2))
        p = 1.0 / (1.0 + math.exp(-1.0))
        expected = -(0.9 * math.log(p) + 0.1 * math.log(1 - p))
        assert loss == pytest.approx(expected, abs=1e-12)

    def test_arity_mismatch(self):
        with pytest.raises(ConfigError):
            cb_ce_loss([0.0, 0.0, 0.0], 0, UNIT_WEIGHTS, LossConfig())
        with pytest.raises(ConfigError):
            cb_ce_loss([0.0, 0.0], 5, UNIT_WEIGHTS, LossConfig())

    def test_focal_confident_correct_vanishes(self):
        loss = cb_focal_loss([30.0, 0.0], 0, UNIT_WEIGHTS, LossConfig(gamma=2.0))
        assert loss == pytest.approx(0.0, abs=1e-10)

    def test_focal_uniform_quarter_ln2(self):
        loss = cb_focal_loss([0.0, 0.0], 0, UNIT_WEIGHTS, LossConfig(gamma=2.0))
        assert loss == pytest.approx(0.25 * math.log(2.0), abs=1e-9)

    def test_focal_gamma_zero_reduces_to_ce(self):
        rng = np.random.default_rng(5)
        cfg = LossConfig(gamma=0.0, label_smoothing_eps=0.0)
        for _ in range(100):
            c = int(rng.integers(2, 6))
            logits = rng.normal(0, 3, size=c).tolist()
            gold = int(rng.integers(0, c))
            w = tuple(rng.uniform(0.25, 4.0, size=c).tolist())
            assert cb_focal_loss(logits, gold, w, cfg) == pytest.approx(
                cb_ce_loss(logits, gold, w, cfg), abs=1e-12)

    @given(st.floats(min_value=-8, max_value=8), st.floats(min_value=-8, max_value=8),
           st.floats(min_value=0.0, max_value=5.0))
    def test_focal_non_increasing_in_gold_probability(self, a, b, gamma):
        lo, hi = sorted((a, b))
        w = (1.0, 1.0)
        cfg = LossConfig(gamma=gamma)
        # gold logit hi gives the larger gold probability
        easier = cb_focal_loss([hi, 0.0], 0, w, cfg)
        harder = cb_focal_loss([lo, 0.0], 0, w, cfg)
        assert easier <= harder + 1e-12

    @given(st.lists(st.floats(min_value=-20, max_value=20), min_size=2, max_size=6),
           st.data(), st.floats(min_value=0.1, max_value=5.0))
    def test_focal_never_exceeds_ce(self, logits, data, gamma):
        gold = data.draw(st.integers(min_value=0, max_value=len(logits) - 1))
        w = (1.0,) * len(logits)
        focal = cb_focal_loss(logits, gold, w, LossConfig(gamma=gamma))
        ce = cb_ce_loss(logits, gold, w, LossConfig(label_smoothing_eps=0.0))
        assert focal <= ce + 1e-12


class TestClassAwareBatches:
    def _partitions(self, sizes):
        start = 0
        out = []
        for size in sizes:
            out.append(list(range(start, start + size)))
            start += size
        return out

    def test_quota_b16_c4(self):
        cfg = SamplerConfig(batch_size=16, num_classes=4, seed=0, num_batches=10)
        parts = self._partitions([100, 50, 8, 3])
        for batch in class_aware_batches(parts, cfg):
            assert len(batch) == 16

    def test_exact_occupancy_every_batch(self):
        cfg = SamplerConfig(batch_size=16, num_classes=4, seed=42, num_batches=1000)
        sizes = [120, 60, 9, 4]
        parts = self._partitions(sizes)
        bounds = np.cumsum([0] + sizes)
        for batch in class_aware_batches(parts, cfg):
            counts = np.histogram(batch, bins=bounds)[0]
            assert counts.tolist() == [4, 4, 4, 4]

    def test_floor_quota_c11(self):
        cfg = SamplerConfig(batch_size=16, num_classes=11, seed=1, num_batches=5)
        parts = self._partitions([5] * 11)
        batches = list(class_aware_batches(parts, cfg))
        assert all(len(b) == 11 for b in batches)

    def test_batch_too_small(self):
        cfg = SamplerConfig(batch_size=3, num_classes=4, seed=0, num_batches=1)
        with pytest.raises(ConfigError, match="batch too small"):
            next(class_aware_batches(self._partitions([5, 5, 5, 5]), cfg))

    def test_empty_class(self):
        cfg = SamplerConfig(batch_size=16, num_classes=4, seed=0, num_batches=1)
        parts = self._partitions([5, 5, 5, 0])
        with pytest.raises(ConfigError, match="empty"):
            next(class_aware_batches(parts, cfg))

    def test_seed_determinism_byte_exact(self):
        cfg = SamplerConfig(batch_size=16, num_classes=4, seed=1234, num_batches=50)
        parts = self._partitions([40, 30, 20, 10])
        first = list(class_aware_batches(parts, cfg))
        second = list(class_aware_batches(parts, cfg))
        assert first == second

    def test_different_seeds_differ(self):
        parts = self._partitions([40, 30, 20, 10])
        a = list(class_aware_batches(parts, SamplerConfig(16, 4, seed=1, num_batches=20)))
        b = list(class_aware_batches(parts, SamplerConfig(16, 4, seed=2, num_batches=20)))
        assert a != b

    def test_replacement_resamples_small_classes(self):
        # a 1-element class must appear k times in every batch
        cfg = SamplerConfig(batch_size=8, num_classes=2, seed=9, num_batches=20)
        parts = [[0, 1, 2, 3], [4]]
        for batch in class_aware_batches(parts, cfg):
            assert sum(1 for i in batch if i == 4) == 4
