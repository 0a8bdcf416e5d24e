"""Command-line front end.

::

    risae [--config FILE] [--seed N] [--out DIR] [--workers N] [--print-config]
          {codebook,train,sweep,baseline,gains}

All outputs are CSV files (plus ``model.ckpt``) written under ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from . import autoencoder as ae
from .baseline import direct_link_ser, qpsk_awgn_ser_analytic, qpsk_awgn_ser_monte_carlo
from .config import ConfigError, ExperimentConfig, load_config
from .numerics import RngStream

log = logging.getLogger("risae")

CHECKPOINT_NAME = "model.ckpt"
SER_HEADER = ["scheme", "snr_db", "ser", "n_symbols", "n_errors"]
LOSS_HEADER = ["iteration", "total_loss", "symbol_loss", "beam_loss"]
GAIN_HEADER = ["target_ser", "l_o_db", "gain_db"]

STREAM_SWEEP = 3
STREAM_BASELINE = 4


@dataclass
class SerCurve:
    scheme: str
    points: list = field(default_factory=list)  # (snr_db, ser, n_symbols, n_errors)

    def __post_init__(self):
        snrs = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(snrs, snrs[1:])):
            raise ValueError(f"{self.scheme}: SNR values must be strictly increasing")
        for snr, ser, n, e in self.points:
            if not 0.0 <= ser <= 1.0 or e > n:
                raise ValueError(f"{self.scheme}: invalid point at {snr} dB")

    @property
    def snr_db(self) -> np.ndarray:
        return np.array([p[0] for p in self.points], dtype=float)

    @property
    def ser(self) -> np.ndarray:
        return np.array([p[1] for p in self.points], dtype=float)


def write_curves(path: Path, curves: Iterable[SerCurve]):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SER_HEADER)
    for c in curves:
        for snr, ser, n, e in c.points:
            w.writerow([c.scheme, repr(float(snr)), repr(float(ser)), int(n), int(e)])
    Path(path).write_text(buf.getvalue())


def read_curves(path: Path) -> dict[str, SerCurve]:
    rows: dict[str, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SER_HEADER:
            raise ValueError(f"{path}: expected header {SER_HEADER}")
        for r in reader:
            rows.setdefault(r["scheme"], []).append(
                (float(r["snr_db"]), float(r["ser"]), int(r["n_symbols"]), int(r["n_errors"])))
    return {k: SerCurve(k, v) for k, v in rows.items()}


def snr_at_ser(curve: SerCurve, target: float) -> Optional[float]:
    """SNR where the curve first falls to ``target``, interpolating log10(SER) linearly.

    Returns ``None`` when no pair of adjacent non-zero points brackets the target.
    """
    s, p = curve.snr_db, curve.ser
    for i in range(len(p) - 1):
        hi, lo = p[i], p[i + 1]
        if hi >= target >= lo:
            if lo <= 0.0:
                return None
            if hi == lo:
                return float(s[i])
            frac = (math.log10(hi) - math.log10(target)) / (math.log10(hi) - math.log10(lo))
            return float(s[i] + frac * (s[i + 1] - s[i]))
    return None


def _analytic_curve(name: str, grid: Sequence[float], fn) -> SerCurve:
    return SerCurve(name, [(snr, float(fn(snr)), 0, 0) for snr in grid])


def ser_interval(n_errors: int, n_symbols: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson binomial confidence interval for an observed SER."""
    ci = binomtest(int(n_errors), int(n_symbols)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def ae_scheme_name(k: int) -> str:
    return "ris_ae_best" if k == 1 else f"ris_ae_top{k}"


def direct_scheme_name(l_o: float) -> str:
    return f"direct_qpsk_lo{l_o:g}"


# ------------------------------------------------------------ commands

def cmd_codebook(config: ExperimentConfig, out: Path) -> Path:
    path = Path(out) / "codebook.csv"
    path.write_text(config.scenario().codebook.to_csv())
    return path


def cmd_train(config: ExperimentConfig, out: Path, log_every: int = 0) -> tuple[Path, Path]:
    model, history = ae.train(config.train_config(), config.scenario(), config.model, log_every=log_every)
    ckpt = Path(out) / CHECKPOINT_NAME
    ae.save_model(ckpt, model)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOSS_HEADER)
    for i, (tot, sym, beam) in enumerate(history):
        w.writerow([i, repr(float(tot)), repr(float(sym)), repr(float(beam))])
    loss_path = Path(out) / "loss.csv"
    loss_path.write_text(buf.getvalue())
    return ckpt, loss_path


def sweep_curves(config: ExperimentConfig, model: ae.EndToEndModel, workers: int = 1) -> list[SerCurve]:
    """Every curve of the sweep: RIS-aided AE per beam policy, then the analytic references.

    The direct-link and unobstructed curves extend past ``snr_hi_db`` by the
    largest obstruction loss so they cover the same SER range as the AE curve.
    """
    sw = config.sweep
    grid = sw.grid()
    root = RngStream(config.seed, STREAM_SWEEP)
    curves = []
    for k in config.top_k:
        policy = ae.BeamPolicy.best() if k == 1 else ae.BeamPolicy.top_k(k)
        points = []
        for i, snr in enumerate(grid):
            ser, e, n = ae.evaluate_ser(model, snr, sw.n_symbols, policy, root.child(k).child(i),
                                        workers=workers, chunk_size=sw.chunk_size)
            points.append((snr, ser, n, e))
            log.info("%s %5.1f dB  SER %.3e (%d/%d, 95%% CI %.2e..%.2e)", ae_scheme_name(k), snr, ser, e, n,
                     *ser_interval(e, n))
        curves.append(SerCurve(ae_scheme_name(k), points))
    wide = sw.grid(max(config.obstruction_losses_db, default=0.0))
    for l_o in config.obstruction_losses_db:
        curves.append(_analytic_curve(direct_scheme_name(l_o), wide, lambda s, l=l_o: direct_link_ser(s, l)))
    curves.append(_analytic_curve("qpsk_awgn_analytic", wide, qpsk_awgn_ser_analytic))
    return curves


def cmd_sweep(config: ExperimentConfig, out: Path, checkpoint: Optional[Path] = None, workers: int = 1) -> Path:
    checkpoint = Path(checkpoint) if checkpoint else Path(out) / CHECKPOINT_NAME
    if not checkpoint.exists():
        raise FileNotFoundError(f"checkpoint {checkpoint} not found; run `risae train` first")
    model = ae.load_model(checkpoint)
    path = Path(out) / "ser.csv"
    write_curves(path, sweep_curves(config, model, workers))
    return path


def cmd_baseline(config: ExperimentConfig, out: Path) -> Path:
    sw = config.sweep
    grid = sw.grid()
    root = RngStream(config.seed, STREAM_BASELINE)
    mc = []
    for i, snr in enumerate(grid):
        ser, e, n = qpsk_awgn_ser_monte_carlo(snr, sw.n_symbols, root.child(i))
        mc.append((snr, ser, n, e))
    path = Path(out) / "baseline.csv"
    write_curves(path, [_analytic_curve("qpsk_awgn_analytic", grid, qpsk_awgn_ser_analytic),
                        SerCurve("qpsk_awgn_mc", mc)])
    return path


def compute_gains(curves: dict[str, SerCurve], targets: Sequence[float],
                  losses: Sequence[float]) -> list[tuple[float, float, Optional[float]]]:
    """``(target, l_o, gain_db)`` rows; gain is direct-link SNR minus RIS-aided AE SNR at the target."""
    ris = curves["ris_ae_best"]
    rows = []
    for t in targets:
        s_ris = snr_at_ser(ris, t)
        for l_o in losses:
            s_dir = snr_at_ser(curves[direct_scheme_name(l_o)], t)
            gain = None if s_ris is None or s_dir is None else s_dir - s_ris
            rows.append((t, l_o, gain))
    return rows


def cmd_gains(ser_csv: Path, out: Path, targets: Sequence[float], losses: Sequence[float]) -> Path:
    rows = compute_gains(read_curves(ser_csv), targets, losses)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GAIN_HEADER)
    for t, l_o, gain in rows:
        w.writerow([repr(float(t)), repr(float(l_o)), "unavailable" if gain is None else repr(gain)])
    path = Path(out) / "gains.csv"
    path.write_text(buf.getvalue())
    return path


# ---------------------------------------------------------------- main

def _parser() -> argparse.ArgumentParser:
    def common(p, default):
        p.add_argument("--config", type=Path, default=default, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=default, help="override the config seed")
        p.add_argument("--out", type=Path, default=default, help="output directory (default: .)")
        p.add_argument("--workers", type=int, default=default, help="Monte Carlo worker threads")
        p.add_argument("--print-config", action="store_true", default=default,
                       help="print the effective config as JSON and exit")
        p.add_argument("-v", "--verbose", action="store_true", default=default)

    parser = argparse.ArgumentParser(prog="risae", description=__doc__.split("\n")[0])
    common(parser, None)
    sub = parser.add_subparsers(dest="command")
    sp = {}
    for name, help_ in [("codebook", "write the RIS codebook CSV"),
                        ("train", "train the end-to-end model"),
                        ("sweep", "SER vs SNR curves for the trained model and references"),
                        ("baseline", "analytic and Monte Carlo QPSK over AWGN"),
                        ("gains", "SNR gain of the RIS-aided AE over the direct link")]:
        sp[name] = sub.add_parser(name, help=help_)
        common(sp[name], argparse.SUPPRESS)
    sp["sweep"].add_argument("--checkpoint", type=Path, help=f"model file (default: <out>/{CHECKPOINT_NAME})")
    sp["gains"].add_argument("--ser-csv", type=Path, help="sweep output (default: <out>/ser.csv)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = config.replace(seed=args.seed)
            config.__post_init__()
    except (ConfigError, ValueError, OSError) as exc:
        print(f"risae: config error: {exc}", file=sys.stderr)
        return 2
    if args.print_config:
        sys.stdout.write(config.to_json())
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    workers = max(1, args.workers or 1)

    try:
        if args.command == "codebook":
            written = [cmd_codebook(config, out)]
        elif args.command == "train":
            written = list(cmd_train(config, out, log_every=500 if args.verbose else 0))
        elif args.command == "sweep":
            written = [cmd_sweep(config, out, getattr(args, "checkpoint", None), workers)]
        elif args.command == "baseline":
            written = [cmd_baseline(config, out)]
        else:
            ser_csv = getattr(args, "ser_csv", None) or out / "ser.csv"
            written = [cmd_gains(ser_csv, out, config.gain_targets, config.obstruction_losses_db)]
    except ae.TrainingDiverged as exc:
        print(f"risae: training diverged: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"risae: {exc}", file=sys.stderr)
        return 1
    for p in written:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
