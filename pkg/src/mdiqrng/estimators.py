"""scikit-learn style wrappers around the certification pipeline.

The functional API in :mod:`mdiqrng.entropy` and :mod:`mdiqrng.extract` does
the work; these classes add ``get_params``/``set_params``, fitted-attribute
conventions and ``check_is_fitted`` errors.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_counts, check_detector, check_experiment
from .decoy import DEFAULT_DARK_COEFF
from .entropy import certify, optimize_intensities
from .extract import DEFAULT_BLOCK_BITS, DEFAULT_EPS_EXT, ExtractorConfig, as_bits, extract_stream
from .errors import ValidationError
from .tomo import OptimizerSettings, SimModel


class DecoyCertifier(BaseEstimator):
    """Certify the min-entropy of one counts table.

    ``fit`` stores the full report in ``report_`` and the headline numbers in
    ``h_min_``, ``bit_rate_`` and ``fidelity_`` (``None`` unless ``sim_eta`` is set).
    """

    def __init__(
        self,
        config=None,
        p_d: float = 8e-5,
        decoy: bool = True,
        prefactor: str = "poisson",
        dark_coefficient: float = DEFAULT_DARK_COEFF,
        sim_eta: float | None = None,
        optimizer: OptimizerSettings | None = None,
    ):
        self.config = config
        self.p_d = p_d
        self.decoy = decoy
        self.prefactor = prefactor
        self.dark_coefficient = dark_coefficient
        self.sim_eta = sim_eta
        self.optimizer = optimizer

    def fit(self, counts, y=None):
        cfg = check_experiment(self.config)
        sim = None if self.sim_eta is None else SimModel(cfg.mu, self.sim_eta, 0.0)
        report = certify(
            check_counts(counts),
            cfg,
            self.p_d,
            decoy=self.decoy,
            prefactor=self.prefactor,
            dark_coefficient=self.dark_coefficient,
            sim_model=sim,
            optimizer=self.optimizer or OptimizerSettings(),
        )
        self.report_ = report
        self.h_min_ = report.h_min
        self.bit_rate_ = report.bit_rate
        self.fidelity_ = report.fidelity_lower
        return self

    def score(self, counts=None, y=None) -> float:
        """Certified bits per pulse; refits on ``counts`` when given."""
        if counts is not None:
            self.fit(counts)
        check_is_fitted(self, "h_min_")
        return self.h_min_


class IntensityOptimizer(BaseEstimator):
    """Grid search for the ``(mu, nu)`` pair that maximizes the certified objective."""

    def __init__(
        self,
        detector=None,
        template=None,
        mu_step: float = 0.01,
        nu_step: float = 0.01,
        objective: str = "entropy",
        decoy: bool = True,
        prefactor: str = "poisson",
        afterpulse_model: str = "mult",
        n_jobs: int | None = None,
    ):
        self.detector = detector
        self.template = template
        self.mu_step = mu_step
        self.nu_step = nu_step
        self.objective = objective
        self.decoy = decoy
        self.prefactor = prefactor
        self.afterpulse_model = afterpulse_model
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        res = optimize_intensities(
            check_detector(self.detector),
            check_experiment(self.template),
            self.mu_step,
            self.nu_step,
            n_jobs=self.n_jobs,
            objective=self.objective,
            decoy=self.decoy,
            prefactor=self.prefactor,
            afterpulse_model=self.afterpulse_model,
        )
        self.result_ = res
        self.mu_ = res.mu_star
        self.nu_ = res.nu_star
        self.h_ = res.h_star
        self.trace_ = np.asarray(res.trace, dtype=float)
        return self

    def predict(self, X=None) -> tuple[float, float]:
        check_is_fitted(self, "mu_")
        return self.mu_, self.nu_


class ToeplitzExtractor(TransformerMixin, BaseEstimator):
    """Toeplitz hashing of raw bit blocks with a fixed seed.

    ``fit`` fixes the block length and checks the seed; ``transform`` maps a
    1-D bit array to the concatenated output of its full blocks.
    """

    def __init__(
        self,
        h_min: float = 0.0737,
        seed=None,
        block_bits: int = DEFAULT_BLOCK_BITS,
        eps_ext: float = DEFAULT_EPS_EXT,
        n_jobs: int | None = None,
    ):
        self.h_min = h_min
        self.seed = seed
        self.block_bits = block_bits
        self.eps_ext = eps_ext
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        if self.seed is None:
            raise ValidationError("ToeplitzExtractor needs a seed")
        cfg = ExtractorConfig(self.block_bits, self.h_min, as_bits(self.seed), self.eps_ext)
        self.output_bits_per_block_ = cfg.m
        self.seed_ = cfg.seed
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "seed_")
        return extract_stream(X, self.h_min, self.seed_, self.block_bits, self.eps_ext, self.n_jobs)
