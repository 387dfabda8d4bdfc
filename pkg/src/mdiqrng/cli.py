"""Command-line front end.

Settings come from built-in defaults, then ``--config FILE`` (JSON), then
flags. Exit status: 0 certified randomness (or plain success), 2 certified
zero, 1 operational error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import RunConfig, inclusive_range
from .decoy import CountsTable
from .entropy import certify, optimize_intensities
from .errors import MdiQrngError, ValidationError
from .extract import (
    MIN_SELFTEST_BITS,
    ExtractorConfig,
    extract_stream,
    pack_bits,
    read_bits,
    test_only_seed,
    uniformity_selftest,
)
from .sim import SimMode, loss_to_eta, sample_counts
from .sweeps import stability, sweep_loss, sweep_mu
from .tomo import SimModel

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ZERO = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would collide with "certified zero"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temp file in the target directory, then rename over the target."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write(out, text)


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool) or isinstance(v, int):
        return str(int(v))
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(rows[0])
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(row[k]) for k in header])
    return buf.getvalue()


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def parse_loss_range(text: str) -> list[float]:
    """``"L"`` for one value or ``"START:STOP:STEP"`` for an inclusive range."""
    parts = text.split(":")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ValidationError(f"bad loss specification {text!r}") from None
    if len(vals) == 1:
        return vals
    if len(vals) != 3 or vals[2] <= 0 or vals[1] < vals[0]:
        raise ValidationError(f"loss range must be START:STOP:STEP with STEP > 0, got {text!r}")
    return inclusive_range(*vals)


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    model = {}
    if args.prefactor is not None:
        model["prefactor"] = args.prefactor
    if args.afterpulse_model is not None:
        model["afterpulse_model"] = args.afterpulse_model
    if getattr(args, "no_decoy", False):
        model["decoy"] = False
    if model:
        cfg = cfg.with_section("model", **model)
    if getattr(args, "mode", None) is not None:
        cfg = cfg.with_section("sweep", mode=args.mode)
    if getattr(args, "n_jobs", None) is not None:
        cfg = cfg.with_section("search", n_jobs=args.n_jobs)
    return cfg


def _detector_at(cfg: RunConfig, loss_db: float):
    return replace(cfg.detector, eta=loss_to_eta(loss_db, cfg.detector.eta))


def _single_loss(args) -> float:
    if args.loss_db is None:
        return 0.0
    vals = parse_loss_range(args.loss_db)
    if len(vals) != 1:
        raise ValidationError("this command takes a single --loss-db value")
    return vals[0]


def cmd_simulate(args, cfg: RunConfig) -> int:
    d = _detector_at(cfg, _single_loss(args))
    mode = SimMode.sampled(cfg.seed) if args.sampled else SimMode.expectation()
    counts = sample_counts(cfg.experiment, d, mode, cfg.model.afterpulse_model, signal_only=not cfg.model.decoy)
    _emit(counts.to_csv(), args.out)
    return EXIT_OK


def cmd_certify(args, cfg: RunConfig) -> int:
    counts = CountsTable.read_csv(args.counts)
    d = _detector_at(cfg, _single_loss(args))
    sim = None if args.skip_fidelity else SimModel(cfg.experiment.mu, d.eta)
    report = certify(
        counts,
        cfg.experiment,
        d.p_d,
        decoy=cfg.model.decoy,
        prefactor=cfg.model.prefactor,
        dark_coefficient=cfg.model.dark_coefficient,
        sim_model=sim,
        optimizer=cfg.optimizer,
    )
    _emit(report.to_json(), args.out)
    return EXIT_OK if report.h_min > 0 else EXIT_ZERO


def cmd_optimize(args, cfg: RunConfig) -> int:
    d = _detector_at(cfg, _single_loss(args))
    opts = cfg.sweep_options()
    mu_step, nu_step = opts.steps
    res = optimize_intensities(
        d,
        cfg.experiment,
        mu_step,
        nu_step,
        n_jobs=cfg.search.n_jobs,
        decoy=cfg.model.decoy,
        **opts.eval_kwargs(final=False),
    )
    _emit(_dump_json(res.to_dict()), args.out)
    if args.trace:
        rows = [{"mu": mu, "nu": nu, "objective": v} for mu, nu, v in res.trace]
        atomic_write(args.trace, rows_to_csv(rows))
    return EXIT_ZERO if res.is_zero else EXIT_OK


def cmd_sweep_loss(args, cfg: RunConfig) -> int:
    losses = parse_loss_range(args.loss_db) if args.loss_db is not None else cfg.sweep.losses
    opts = cfg.sweep_options()
    if args.no_optimize:
        opts = replace(opts, optimize=False)
    rows = sweep_loss(losses, cfg.detector, cfg.experiment, opts, eta0=cfg.detector.eta, n_jobs=cfg.search.n_jobs)
    _emit(rows_to_csv(rows), args.out)
    return EXIT_OK


def cmd_sweep_mu(args, cfg: RunConfig) -> int:
    loss = _single_loss(args) if args.loss_db is not None else cfg.sweep.fixed_loss_db
    opts = cfg.sweep_options()
    if args.no_optimize:
        opts = replace(opts, optimize=False)
    rows = sweep_mu(cfg.sweep.mus, cfg.detector, cfg.experiment, loss, opts, eta0=cfg.detector.eta,
                    n_jobs=cfg.search.n_jobs)
    _emit(rows_to_csv(rows), args.out)
    return EXIT_OK


def cmd_stability(args, cfg: RunConfig) -> int:
    seconds = args.seconds if args.seconds is not None else cfg.stability.seconds
    d = _detector_at(cfg, _single_loss(args))
    rows = stability(seconds, cfg.seed, d, cfg.experiment, cfg.stability.rounds_per_second,
                     cfg.sweep_options(), n_jobs=cfg.search.n_jobs)
    _emit(rows_to_csv(rows), args.out)
    return EXIT_OK if all(r["h_min"] > 0 for r in rows) else EXIT_ZERO


def cmd_extract(args, cfg: RunConfig) -> int:
    block = args.block_bits if args.block_bits is not None else cfg.extractor.block_bits
    eps = cfg.extractor.eps_ext
    raw = read_bits(args.raw)
    if raw.size == 0:
        raise ValidationError(f"{args.raw} is empty")
    seed_len = ExtractorConfig.seed_length(block, args.h_min, eps)
    flags = []
    if args.seed_file is not None:
        expected = math.ceil(seed_len / 8)
        size = Path(args.seed_file).stat().st_size
        if size != expected:
            raise ValidationError(f"seed file must hold exactly {expected} bytes ({seed_len} bits), got {size}")
        seed = read_bits(args.seed_file, seed_len)
        source = "file"
    else:
        if args.seed is None:
            raise ValidationError("extract needs --seed-file, or --seed for a test-only PRNG seed")
        seed = test_only_seed(seed_len, cfg.seed)
        source = "test-only PRNG (PCG64); not for production use"
        flags.append("test_only_seed")
    bits = extract_stream(raw, args.h_min, seed, block, eps, n_jobs=cfg.search.n_jobs)
    atomic_write(args.out, pack_bits(bits))
    if bits.size >= MIN_SELFTEST_BITS:
        st = uniformity_selftest(bits)
        selftest = {"monobit_p": st.monobit_p, "chisq_byte_p": st.chisq_byte_p, "passed": st.passed()}
    else:
        selftest = None
        flags.append(f"selftest_skipped: fewer than {MIN_SELFTEST_BITS} output bits")
    report = {
        "raw_bits": int(raw.size),
        "block_bits": block,
        "blocks": int(raw.size // block),
        "discarded_bits": int(raw.size % block),
        "output_bits": int(bits.size),
        "h_min": args.h_min,
        "eps_ext": eps,
        "seed_source": source,
        "test_only_seed": source != "file",
        "selftest": selftest,
        "flags": flags,
    }
    text = _dump_json(report)
    if args.report:
        atomic_write(args.report, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--prefactor", choices=["literal", "poisson"])
    common.add_argument("--afterpulse-model", choices=["mult", "add"])
    common.add_argument("--n-jobs", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="mdiqrng", description="Decoy-state MDI-QRNG certification toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_)
        sp.set_defaults(func=func)
        return sp

    sp = add("simulate", cmd_simulate, "Emit a counts CSV from the detector model.")
    sp.add_argument("--loss-db", help="extra channel loss in dB")
    sp.add_argument("--sampled", action="store_true", help="binomial sampling instead of expectations")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--no-decoy", action="store_true", help="all rounds at the signal intensity")

    sp = add("certify", cmd_certify, "Certify min-entropy from a counts CSV.")
    sp.add_argument("counts", help="counts CSV (probe,intensity,trials,clicks)")
    sp.add_argument("--loss-db", help="channel loss used for the reference POVM")
    sp.add_argument("--no-decoy", action="store_true", help="bound from signal counts only")
    sp.add_argument("--skip-fidelity", action="store_true", help="omit the fidelity certificate")

    sp = add("optimize", cmd_optimize, "Brute-force search for the best probe intensities.")
    sp.add_argument("--loss-db")
    sp.add_argument("--mode", choices=["entropy", "fidelity"])
    sp.add_argument("--no-decoy", action="store_true")
    sp.add_argument("--trace", help="write the evaluated lattice to this CSV")

    sp = add("sweep-loss", cmd_sweep_loss, "Decoy vs non-decoy bound as a function of channel loss.")
    sp.add_argument("--loss-db", help="L or START:STOP:STEP (dB)")
    sp.add_argument("--mode", choices=["entropy", "fidelity"])
    sp.add_argument("--no-optimize", action="store_true", help="keep the configured intensities")

    sp = add("sweep-mu", cmd_sweep_mu, "Decoy vs non-decoy bound as a function of signal intensity.")
    sp.add_argument("--loss-db", help="fixed channel loss (dB)")
    sp.add_argument("--mode", choices=["entropy", "fidelity"])
    sp.add_argument("--no-optimize", action="store_true", help="keep the configured decoy intensity")

    sp = add("extract", cmd_extract, "Toeplitz-hash raw bits into near-uniform output.")
    sp.add_argument("--raw", required=True, help="raw bit file (little-endian within bytes)")
    sp.add_argument("--h-min", type=float, required=True, help="certified min-entropy per raw bit")
    sp.add_argument("--seed-file", help="Toeplitz seed file of exact length")
    sp.add_argument("--seed", type=int, help="derive a test-only seed from this PRNG seed")
    sp.add_argument("--block-bits", type=int)
    sp.add_argument("--report", help="self-test JSON path (default: stdout)")

    sp = add("stability", cmd_stability, "Certify one sampled batch per simulated second.")
    sp.add_argument("--seconds", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--loss-db")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "extract" and args.out is None:
        parser.error("extract requires --out")
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except (MdiQrngError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
