"""Parameter sweeps behind the loss, intensity and stability reports."""
from __future__ import annotations

from dataclasses import dataclass, replace

from joblib import Parallel, delayed

from .decoy import ExperimentConfig
from .entropy import certify, evaluate_intensities, optimize_intensities
from .errors import ValidationError
from .sim import DetectorModel, SimMode, loss_to_eta, sample_counts
from .tomo import OptimizerSettings, SimModel

NONDECOY_MODES = ("shared", "independent")


@dataclass(frozen=True)
class SweepOptions:
    """Knobs shared by the sweeps.

    ``mode`` picks the reported quantity (``entropy`` or ``fidelity``). In
    ``shared`` non-decoy mode the non-decoy bound is computed from the signal
    rows of the same counts table as the decoy bound; ``independent`` simulates
    a separate all-signal run and optimizes its intensity on its own.
    """

    mode: str = "entropy"
    mu_step: float = 0.01
    nu_step: float = 0.01
    fidelity_step: float = 0.05
    search_optimizer: OptimizerSettings = OptimizerSettings(grid_points=7, refine_starts=0)
    optimizer: OptimizerSettings = OptimizerSettings()
    prefactor: str = "poisson"
    afterpulse_model: str = "mult"
    dark_coefficient: float = 1.0
    nondecoy: str = "shared"
    optimize: bool = True

    def __post_init__(self):
        if self.mode not in ("entropy", "fidelity"):
            raise ValidationError(f"unknown sweep mode {self.mode!r}")
        if self.nondecoy not in NONDECOY_MODES:
            raise ValidationError(f"unknown non-decoy mode {self.nondecoy!r}")

    @property
    def column(self) -> str:
        return "h_min" if self.mode == "entropy" else "fidelity"

    def eval_kwargs(self, final: bool) -> dict:
        return {
            "objective": self.mode,
            "prefactor": self.prefactor,
            "afterpulse_model": self.afterpulse_model,
            "dark_coefficient": self.dark_coefficient,
            "optimizer": self.optimizer if final or self.mode == "entropy" else self.search_optimizer,
        }

    @property
    def steps(self) -> tuple[float, float]:
        if self.mode == "fidelity":
            return max(self.mu_step, self.fidelity_step), max(self.nu_step, self.fidelity_step)
        return self.mu_step, self.nu_step


def _best_point(d: DetectorModel, template: ExperimentConfig, opts: SweepOptions, points=None, decoy=True,
                signal_only=False):
    mu_step, nu_step = opts.steps
    res = optimize_intensities(
        d, template, mu_step, nu_step, points=points, decoy=decoy, signal_only=signal_only,
        **opts.eval_kwargs(final=False),
    )
    return res.mu_star, res.nu_star


def _loss_row(loss_db: float, base: DetectorModel, eta0: float, template: ExperimentConfig, opts: SweepOptions) -> dict:
    d = replace(base, eta=loss_to_eta(loss_db, eta0))
    if opts.optimize:
        mu, nu = _best_point(d, template, opts)
    else:
        mu, nu = template.mu, template.nu
    kw = opts.eval_kwargs(final=True)
    col = opts.column
    row = {"loss_db": loss_db}
    row[f"{col}_decoy"] = evaluate_intensities(mu, nu, d, template, **kw)
    if opts.nondecoy == "shared":
        row[f"{col}_nondecoy"] = evaluate_intensities(mu, nu, d, template, decoy=False, **kw)
    else:
        mu_nd = mu
        if opts.optimize:
            mu_nd, _ = _best_point(d, template, opts, decoy=False, signal_only=True)
        row[f"{col}_nondecoy"] = evaluate_intensities(mu_nd, 0.0, d, template, decoy=False, signal_only=True, **kw)
    row["mu_opt"] = mu
    row["nu_opt"] = nu
    if opts.nondecoy == "independent":
        row["mu_nondecoy_opt"] = mu_nd
    return row


def sweep_loss(
    losses,
    base: DetectorModel,
    template: ExperimentConfig,
    opts: SweepOptions = SweepOptions(),
    eta0: float = 0.55,
    n_jobs: int | None = None,
) -> list[dict]:
    """One row per channel loss (dB); the efficiency is ``eta0 * 10**(-loss/10)``."""
    losses = list(losses)
    if not losses:
        raise ValidationError("loss range is empty")
    if n_jobs in (None, 1):
        return [_loss_row(L, base, eta0, template, opts) for L in losses]
    return Parallel(n_jobs=n_jobs)(delayed(_loss_row)(L, base, eta0, template, opts) for L in losses)


def _mu_row(mu: float, d: DetectorModel, template: ExperimentConfig, opts: SweepOptions) -> dict:
    nu_step = opts.nu_step
    candidates = [(mu, round(k * nu_step, 12)) for k in range(int(mu / nu_step) + 2) if k * nu_step < mu - 1e-12]
    if opts.optimize:
        _, nu = _best_point(d, template, opts, points=candidates)
    else:
        nu = template.nu if template.nu < mu else candidates[-1][1]
    kw = opts.eval_kwargs(final=True)
    col = opts.column
    return {
        "mu": mu,
        f"{col}_decoy": evaluate_intensities(mu, nu, d, template, **kw),
        f"{col}_nondecoy": evaluate_intensities(mu, nu, d, template, decoy=False, **kw),
        "nu_opt": nu,
    }


def sweep_mu(
    mus,
    base: DetectorModel,
    template: ExperimentConfig,
    loss_db: float = 2.6,
    opts: SweepOptions = SweepOptions(),
    eta0: float = 0.55,
    n_jobs: int | None = None,
) -> list[dict]:
    """One row per signal intensity at fixed loss, with the decoy intensity re-optimized."""
    mus = [round(float(m), 12) for m in mus]
    if not mus:
        raise ValidationError("mu range is empty")
    d = replace(base, eta=loss_to_eta(loss_db, eta0))
    if n_jobs in (None, 1):
        return [_mu_row(m, d, template, opts) for m in mus]
    return Parallel(n_jobs=n_jobs)(delayed(_mu_row)(m, d, template, opts) for m in mus)


def _stability_row(second: int, seed: int, d: DetectorModel, cfg: ExperimentConfig, opts: SweepOptions) -> dict:
    counts = sample_counts(cfg, d, SimMode.sampled((seed, second)), opts.afterpulse_model)
    report = certify(
        counts,
        cfg,
        d.p_d,
        prefactor=opts.prefactor,
        dark_coefficient=opts.dark_coefficient,
        sim_model=SimModel(cfg.mu, d.eta),
        optimizer=opts.optimizer,
    )
    return {
        "second": second,
        "n_rounds": cfg.n_rounds,
        "h_min": report.h_min,
        "fidelity": report.fidelity_lower if report.fidelity_lower is not None else 0.0,
    }


def stability(
    seconds: int,
    seed: int,
    d: DetectorModel,
    template: ExperimentConfig,
    rounds_per_second: float | None = None,
    opts: SweepOptions = SweepOptions(),
    n_jobs: int | None = None,
) -> list[dict]:
    """Certify one sampled tomography batch per simulated second.

    The default batch is ``clock_hz * tomography_fraction`` rounds; the counts
    of second ``s`` are drawn from the PRNG streams keyed by ``(seed, s)``.
    """
    if seconds < 1:
        raise ValidationError("seconds must be at least 1")
    n = rounds_per_second if rounds_per_second is not None else template.clock_hz * template.tomography_fraction
    cfg = replace(template, n_rounds=float(n))
    if n_jobs in (None, 1):
        return [_stability_row(s, seed, d, cfg, opts) for s in range(seconds)]
    return Parallel(n_jobs=n_jobs)(delayed(_stability_row)(s, seed, d, cfg, opts) for s in range(seconds))
