import math

import numpy as np
import pytest

from exaq.clip_optimizer import DEFAULT_CLIP_MODELS, predict_clip
from exaq.lut_engine import DEFAULT_PACK_WIDTH, build_bundle
from exaq.quantizer import QuantSpec
from exaq.softmax_kernels import (
    output_mse,
    softmax_exaq,
    softmax_exaq_batch,
    softmax_quantized_scalar,
    softmax_reference,
)


def _bundle(M=2, clip=-3.51):
    return build_bundle(QuantSpec.from_clip(M, clip))


class TestReference:
    def test_constant_row_uniform(self):
        r = softmax_reference([4.2, 4.2, 4.2])
        assert np.allclose(r.probs, 1 / 3)

    def test_hand_worked_two_element(self):
        r = softmax_reference([0.0, math.log(3.0)])
        assert np.allclose(r.probs, [0.25, 0.75], atol=1e-12)

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            row = rng.normal(0, 3, rng.integers(1, 200))
            r = softmax_reference(row)
            assert abs(r.probs.sum() - 1.0) < 1e-12

    def test_counters(self):
        r = softmax_reference(np.zeros(17))
        assert r.exp_calls == 17 and r.accum_iters == 17 and r.lut_lookups == 0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            softmax_reference([])


class TestExaqKernel:
    def test_constant_row_exactly_uniform(self):
        b = _bundle()
        for n in (1, 3, 4, 7, 16):
            r = softmax_exaq(np.full(n, -1.0), b.spec, b.exp_lut, b.sum_lut)
            assert np.allclose(r.probs, 1.0 / n, atol=1e-7)

    def test_counter_laws(self):
        b = _bundle()
        for n in list(range(1, 10)) + [64, 1023, 1024, 4096]:
            row = np.linspace(-3, 0, n) if n > 1 else np.array([-1.0])
            r = softmax_exaq(row, b.spec, b.exp_lut, b.sum_lut)
            want_iters = math.ceil(n / 4)
            assert r.exp_calls == 0
            assert r.accum_iters == want_iters
            assert r.lut_lookups == n + want_iters

    def test_eight_elements_two_accumulations(self):
        b = _bundle()
        r = softmax_exaq(np.linspace(-2, 0, 8), b.spec, b.exp_lut, b.sum_lut)
        assert r.accum_iters == 2

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(5)
        b = _bundle()
        for _ in range(200):
            row = rng.normal(0, 1, int(rng.integers(1, 300)))
            a = softmax_exaq(row, b.spec, b.exp_lut, b.sum_lut)
            s = softmax_quantized_scalar(row, b.spec)
            assert np.allclose(a.probs, s.probs, rtol=1e-6, atol=0)

    def test_mismatched_spec_rejected(self):
        b = _bundle(2, -3.51)
        other = QuantSpec.from_clip(2, -2.0)
        with pytest.raises(ValueError):
            softmax_exaq([-1.0, -0.5], other, b.exp_lut, b.sum_lut)
        b3 = _bundle(3, -3.51)
        with pytest.raises(ValueError):
            softmax_exaq([-1.0, -0.5], b3.spec, b.exp_lut, b.sum_lut)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(11)
        b = _bundle()
        row = rng.normal(0, 1.5, 257)
        perm = rng.permutation(row.size)
        r_direct = softmax_exaq(row[perm], b.spec, b.exp_lut, b.sum_lut)
        r_base = softmax_exaq(row, b.spec, b.exp_lut, b.sum_lut)
        assert np.allclose(r_direct.probs, r_base.probs[perm], rtol=1e-6, atol=0)
        ref = softmax_reference(row)
        ref_p = softmax_reference(row[perm])
        assert np.array_equal(ref_p.probs, ref.probs[perm])  # bit-exact

    def test_batch_entry_point(self):
        rng = np.random.default_rng(2)
        b = _bundle()
        block = rng.normal(0, 1, (5, 64))
        results = softmax_exaq_batch(block, b)
        for i, r in enumerate(results):
            single = softmax_exaq(block[i], b.spec, b.exp_lut, b.sum_lut)
            assert np.array_equal(r.probs, single.probs)


class TestScalarOracle:
    def test_constant_row_uniform(self):
        s = QuantSpec.from_clip(2, -3.0)
        r = softmax_quantized_scalar([1.0, 1.0, 1.0, 1.0], s)
        assert np.allclose(r.probs, 0.25)

    def test_counters(self):
        s = QuantSpec.from_clip(2, -3.0)
        r = softmax_quantized_scalar(np.linspace(-2, 0, 9), s)
        assert r.exp_calls == 9 and r.accum_iters == 9 and r.lut_lookups == 0

    def test_finer_bits_better_fidelity(self):
        rng = np.random.default_rng(23)
        model2, model3 = DEFAULT_CLIP_MODELS[2], DEFAULT_CLIP_MODELS[3]
        worse = 0
        for seed in range(20):
            row = rng.normal(0, 1, 512)
            ref = softmax_reference(row)
            mses = {}
            for M in (2, 4):
                clip = predict_clip(model2 if M == 2 else model3, 1.0).clip
                s = QuantSpec.from_clip(M, clip)
                r = softmax_quantized_scalar(row, s)
                mses[M] = output_mse(r.probs, ref.probs)
            if mses[4] > mses[2]:
                worse += 1
        assert worse == 0


class TestEquivalenceSweep:
    def test_ten_thousand_random_rows(self):
        rng = np.random.default_rng(77)
        b = _bundle()
        lengths = rng.integers(1, 48, size=10_000)
        for i, n in enumerate(lengths):
            row = rng.normal(-1.0, 1.2, int(n))
            a = softmax_exaq(row, b.spec, b.exp_lut, b.sum_lut)
            s = softmax_quantized_scalar(row, b.spec)
            assert np.allclose(a.probs, s.probs, rtol=1e-6, atol=0), f"row {i}"

    @pytest.mark.parametrize("M", [2, 3, 4])
    def test_all_lengths_and_seeds(self, M):
        clip = -2.5 * M  # deep enough that codes spread over all levels
        b = build_bundle(QuantSpec.from_clip(M, clip), DEFAULT_PACK_WIDTH[M])
        lengths = list(range(1, 10)) + [64, 1023, 1024, 4096]
        for n in lengths:
            for seed in range(3):
                row = np.random.default_rng(1000 * M + 10 * n + seed).normal(0, 1, n)
                a = softmax_exaq(row, b.spec, b.exp_lut, b.sum_lut)
                s = softmax_quantized_scalar(row, b.spec)
                assert np.allclose(a.probs, s.probs, rtol=1e-6, atol=0)
                assert abs(a.probs.sum() - 1.0) <= 1e-6
                assert abs(s.probs.sum() - 1.0) <= 1e-6


class TestOutputMse:
    def test_identical_vectors(self):
        assert output_mse([0.5, 0.5], [0.5, 0.5]) == 0.0

    def test_orthogonal_unit_vectors(self):
        assert output_mse([1.0, 0.0], [0.0, 1.0]) == 1.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            output_mse([1.0], [0.5, 0.5])

    def test_exaq_beats_naive_on_output_mse(self):
        # codec-level analog of the accuracy-table ordering, averaged per cell
        from exaq.quantizer import calibrate, make_spec_exaq, make_spec_naive
        from exaq.tensor_io import gen_gaussian_tensor

        for sigma in (0.9, 2.0, 3.4):
            tensors = [gen_gaussian_tensor(8, 1024, 0.0, sigma, seed=300 + k)
                       for k in range(50)]
            stats = calibrate(tensors)
            spec_e = make_spec_exaq(stats, 2, DEFAULT_CLIP_MODELS[2])
            spec_n = make_spec_naive(stats, 2)
            mse_e, mse_n = [], []
            for seed in range(20):
                row = gen_gaussian_tensor(1, 1024, 0.0, sigma, seed=400 + seed).array
                ref = softmax_reference(row)
                mse_e.append(output_mse(softmax_quantized_scalar(row, spec_e).probs, ref.probs))
                mse_n.append(output_mse(softmax_quantized_scalar(row, spec_n).probs, ref.probs))
            assert np.mean(mse_e) <= np.mean(mse_n)
