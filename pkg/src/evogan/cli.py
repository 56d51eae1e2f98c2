"""Experiment runner: ``evogan {classify,fig2_sweep,gan} --config PATH``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

import argparse
import csv
import io
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import DomainError, Tensor
from .config import ConfigError, load_config
from .data import ConsistencyError, FormatError, gen_gaussian_mixture, load_idx, mix_universum, split
from .engine import NumericError, train_classifier, train_evolving_gan
from .losses import Setting, UnlabeledBatch
from .metrics import classification_error, label_entropy
from .models import Discriminator, Generator, save_checkpoint

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class DataError(RuntimeError):
    pass


@dataclass
class Summary:
    """Per-seed rows and their mean/std aggregates for one experiment."""

    group_columns: tuple
    value_columns: tuple
    rows: list  # (group tuple, seed, values tuple)

    def groups(self):
        seen = []
        for group, _, _ in self.rows:
            if group not in seen:
                seen.append(group)
        return seen

    def values(self, group, column):
        j = self.value_columns.index(column)
        return np.array([v[j] for g, _, v in self.rows if g == group], dtype=np.float64)

    def mean(self, group, column):
        return float(np.mean(self.values(group, column)))

    def std(self, group, column):
        # population std over seeds
        return float(np.std(self.values(group, column)))

    def to_csv(self, comment):
        out = io.StringIO()
        out.write(f"# {comment}\n")
        writer = csv.writer(out, lineterminator="\n")
        header = ["kind", *self.group_columns, "seed", "n"]
        for col in self.value_columns:
            header += [col, f"{col}_std"]
        writer.writerow(header)
        for group, seed, vals in self.rows:
            row = ["seed", *map(_cell, group), seed, 1]
            for v in vals:
                row += [_cell(v), ""]
            writer.writerow(row)
        for group in self.groups():
            n = len(self.values(group, self.value_columns[0]))
            row = ["mean", *map(_cell, group), "", n]
            for col in self.value_columns:
                row += [_cell(self.mean(group, col)), _cell(self.std(group, col))]
            writer.writerow(row)
        return out.getvalue()


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return "nan" if not np.isfinite(value) else f"{value:.4f}"
    return str(value)


def _comment(cfg, seed):
    seed_text = ",".join(map(str, cfg.seeds)) if seed is None else str(seed)
    return f"evogan {__version__} config={cfg.digest()} seed={seed_text}"


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# data


def _load_base(cfg, seed):
    if cfg["data.kind"] == "idx":
        for key in ("data.images", "data.labels"):
            if not Path(cfg[key]).is_file():
                raise DataError(f"missing data file {cfg[key]}")
        return load_idx(cfg["data.images"], cfg["data.labels"])
    return gen_gaussian_mixture(cfg["data.L"], cfg["data.per_class"], cfg["data.d"],
                                cfg["data.sep"], cfg["data.seed"] + seed)


def load_split(cfg, seed):
    """Dataset for one seed: base data plus a seeded train/test split."""
    base = _load_base(cfg, seed)
    try:
        return split(base, cfg["data.train"], cfg["data.test"], seed=seed,
                     stratified=cfg["data.stratified"])
    except DomainError as exc:
        raise DataError(str(exc)) from None


def _unlabeled(cfg, ds, seed, ratio=None):
    kind = cfg["data.unlabeled"]
    if kind == "test":
        return UnlabeledBatch(Tensor(ds.X_test))
    if kind == "mixed":
        a = cfg["data.ratio"] if ratio is None else ratio
        return mix_universum(ds, cfg["data.pairs"], a, seed)
    return None


def _discriminator(cfg, ds, seed):
    return Discriminator.create(ds.n_features, ds.L, cfg["model.hidden"],
                                cfg["model.activation"], seed=seed)


def _test_accuracy(cfg, model, ds):
    preds = model.predict(ds.X_test, cfg["model.tie_tol"])
    return classification_error(preds, ds.y_test)[0]


# ---------------------------------------------------------------------------
# experiments


def run_classify(cfg, out_dir=None):
    """Train one model per (setting, seed); per-run logs plus a summary CSV."""
    out = Path(out_dir or cfg.output_dir)
    rows = []
    for seed in cfg.seeds:
        ds = load_split(cfg, seed)
        unl = _unlabeled(cfg, ds, seed)
        for name in cfg["setting.settings"]:
            model, log = train_classifier(cfg.setting_params(name), ds.labeled(), unl,
                                          cfg.train_config(seed), _discriminator(cfg, ds, seed),
                                          (ds.X_test, ds.y_test))
            _write(out / f"classify_{name}_seed{seed}.csv", log.to_csv(comment=_comment(cfg, seed)))
            rows.append(((name,), seed, (_test_accuracy(cfg, model, ds),)))
    summary = Summary(("setting",), ("test_acc",), rows)
    _write(out / "classify_summary.csv", summary.to_csv(_comment(cfg, None)))
    return summary


def run_fig2_sweep(cfg, out_dir=None):
    """Accuracy of every setting at every mixing ratio, averaged over seeds."""
    out = Path(out_dir or cfg.output_dir)
    rows = []
    for a in cfg["data.ratios"]:
        for seed in cfg.seeds:
            ds = load_split(cfg, seed)
            unl = mix_universum(ds, cfg["data.pairs"], a, seed)
            for name in cfg["setting.settings"]:
                model, _ = train_classifier(cfg.setting_params(name), ds.labeled(), unl,
                                            cfg.train_config(seed), _discriminator(cfg, ds, seed))
                rows.append(((a, name), seed, (_test_accuracy(cfg, model, ds),)))
    summary = Summary(("ratio", "setting"), ("test_acc",), rows)
    _write(out / "fig2_summary.csv", summary.to_csv(_comment(cfg, None)))
    return summary


def _baseline_entropy(cfg, ds, seed, fake):
    """Entropy of an inductively trained twin discriminator's labels on ``fake``."""
    tc = replace(cfg.train_config(seed), numiter=cfg["gan.baseline_numiter"])
    model, _ = train_classifier(cfg.setting_params(Setting.INDUCTIVE), ds.labeled(), None, tc,
                                _discriminator(cfg, ds, seed))
    return label_entropy(model.predict(fake, cfg["model.tie_tol"]), ds.L)


def run_gan(cfg, out_dir=None):
    """Evolving and/or U-GAN runs per seed; logs, checkpoints and a summary CSV.

    Summary columns: final test accuracy, generated-label entropy of the
    trained discriminator on fresh generated samples and, when
    ``gan.baseline_numiter`` > 0, the same entropy for an inductively
    trained discriminator of identical architecture.
    """
    out = Path(out_dir or cfg.output_dir)
    rows = []
    baseline = cfg["gan.baseline_numiter"] > 0
    for seed in cfg.seeds:
        ds = load_split(cfg, seed)
        for mode in cfg["schedule.modes"]:
            disc = _discriminator(cfg, ds, seed)
            gen = Generator.create(cfg["model.noise_dim"], ds.n_features, cfg["model.gen_hidden"],
                                   cfg["model.activation"], seed=seed + 1)
            disc, gen, log = train_evolving_gan(cfg.schedule(mode), cfg.train_config(seed),
                                                ds.labeled(), disc, gen, (ds.X_test, ds.y_test))
            stem = out / f"gan_{mode}_seed{seed}"
            _write(stem.with_suffix(".csv"), log.to_csv(comment=_comment(cfg, seed)))
            save_checkpoint(disc, f"{stem}_disc.ckpt")
            save_checkpoint(gen, f"{stem}_gen.ckpt")
            # fresh samples, separate from the in-run evaluation noise
            noise_rng = np.random.Generator(np.random.PCG64([seed, 7]))
            fake = gen.forward(gen.sample_noise(noise_rng, cfg["gan.eval_samples"]), frozen=True).values
            ent = label_entropy(disc.predict(fake, cfg["model.tie_tol"]), ds.L)
            vals = [_test_accuracy(cfg, disc, ds), ent]
            if baseline:
                vals.append(_baseline_entropy(cfg, ds, seed, fake))
            rows.append(((mode,), seed, tuple(vals)))
    columns = ("test_acc", "entropy_bits") + (("inductive_entropy_bits",) if baseline else ())
    summary = Summary(("mode",), columns, rows)
    _write(out / "gan_summary.csv", summary.to_csv(_comment(cfg, None)))
    return summary


RUNNERS = {"classify": run_classify, "fig2_sweep": run_fig2_sweep, "gan": run_gan}


def build_parser():
    parser = argparse.ArgumentParser(prog="evogan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"evogan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--seed", type=int, help="run only this seed")
        p.add_argument("--out", help="output directory (overrides output_dir)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        overrides = {"experiment": args.command}
        if args.seed is not None:
            overrides["seeds"] = (args.seed,)
        if args.out is not None:
            overrides["output_dir"] = args.out
        cfg = cfg.with_overrides(**overrides)
        RUNNERS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError, ConsistencyError, DomainError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
