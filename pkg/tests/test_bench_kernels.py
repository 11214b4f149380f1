import numpy as np

from exaq.bench_kernels import exaq_softmax_rows, reference_softmax_rows, warm_up
from exaq.lut_engine import DEFAULT_PACK_WIDTH, build_bundle
from exaq.quantizer import QuantSpec
from exaq.softmax_kernels import softmax_quantized_scalar, softmax_reference


def test_reference_loop_matches_library():
    warm_up()
    rng = np.random.default_rng(1)
    x = rng.normal(0, 1.5, (4, 129))
    out = np.empty_like(x)
    reference_softmax_rows(x, out)
    for i in range(4):
        lib = softmax_reference(x[i])
        assert np.allclose(out[i], lib.probs, rtol=1e-12, atol=0)


def test_exaq_loop_matches_scalar_oracle():
    warm_up()
    rng = np.random.default_rng(2)
    for M in (2, 3, 4):
        P = DEFAULT_PACK_WIDTH[M]
        spec = QuantSpec.from_clip(M, -2.5 * M)
        b = build_bundle(spec, P)
        exp64 = b.exp_lut.entries.astype(np.float64)
        sum64 = b.sum_lut.entries.astype(np.float64)
        x = rng.normal(0, 1, (3, 201))  # non-multiple of pack: tail path
        out = np.empty_like(x)
        codes = np.empty(x.shape[1], np.uint8)
        exaq_softmax_rows(x, exp64, sum64, spec.clip, 1.0 / spec.delta,
                          spec.n_levels, spec.bits, P, codes, out)
        for i in range(3):
            lib = softmax_quantized_scalar(x[i], spec)
            assert np.allclose(out[i], lib.probs, rtol=1e-6, atol=0)


def test_rows_sum_to_one():
    warm_up()
    rng = np.random.default_rng(3)
    x = rng.normal(0, 2, (5, 64))
    out = np.empty_like(x)
    reference_softmax_rows(x, out)
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-12)
