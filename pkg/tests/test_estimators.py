import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import OPERATING_CONFIG, OPERATING_DETECTOR
from mdiqrng import DecoyCertifier, IntensityOptimizer, ToeplitzExtractor
from mdiqrng.entropy import certify, optimize_intensities
from mdiqrng.errors import ValidationError
from mdiqrng.extract import ExtractorConfig, extract_stream, test_only_seed
from mdiqrng.sim import expected_counts


def test_certifier_matches_functional_api():
    counts = expected_counts(OPERATING_CONFIG, OPERATING_DETECTOR)
    est = DecoyCertifier(config=OPERATING_CONFIG, p_d=OPERATING_DETECTOR.p_d).fit(counts)
    assert est.h_min_ == certify(counts, OPERATING_CONFIG, OPERATING_DETECTOR.p_d).h_min
    assert est.bit_rate_ == est.h_min_ * OPERATING_CONFIG.clock_hz
    assert est.fidelity_ is None
    assert est.score() == est.h_min_


def test_certifier_reads_csv(tmp_path):
    counts = expected_counts(OPERATING_CONFIG, OPERATING_DETECTOR)
    path = tmp_path / "c.csv"
    path.write_text(counts.to_csv())
    assert DecoyCertifier(config=OPERATING_CONFIG).score(path) == DecoyCertifier(config=OPERATING_CONFIG).score(counts)


def test_certifier_params_and_clone():
    est = DecoyCertifier(p_d=1e-4, prefactor="literal")
    params = est.get_params()
    assert params["p_d"] == 1e-4 and params["prefactor"] == "literal"
    twin = clone(est.set_params(decoy=False))
    assert twin.get_params()["decoy"] is False
    assert not hasattr(twin, "h_min_")


def test_not_fitted_errors():
    with pytest.raises(NotFittedError):
        DecoyCertifier().score()
    with pytest.raises(NotFittedError):
        IntensityOptimizer().predict()
    with pytest.raises(NotFittedError):
        ToeplitzExtractor(seed=[0, 1]).transform(np.zeros(8, dtype=np.uint8))


def test_optimizer_matches_functional_api():
    est = IntensityOptimizer(OPERATING_DETECTOR, OPERATING_CONFIG, mu_step=0.1, nu_step=0.1).fit()
    res = optimize_intensities(OPERATING_DETECTOR, OPERATING_CONFIG, 0.1, 0.1)
    assert est.predict() == (res.mu_star, res.nu_star)
    assert est.h_ == res.h_star
    assert est.trace_.shape == (len(res.trace), 3)


def test_extractor_matches_functional_api():
    n, h = 512, 0.5
    seed = test_only_seed(ExtractorConfig.seed_length(n, h), 2)
    raw = test_only_seed(3 * n, 5)
    est = ToeplitzExtractor(h_min=h, seed=seed, block_bits=n)
    out = est.fit_transform(raw)
    np.testing.assert_array_equal(out, extract_stream(raw, h, seed, n))
    assert est.output_bits_per_block_ == ExtractorConfig(n, h, seed).m
    with pytest.raises(ValidationError):
        ToeplitzExtractor().fit()
