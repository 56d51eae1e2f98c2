"""Training: epsilon schedule, Adam, GAN objectives and the two training loops.

``train_classifier`` fits a discriminator with a labeled hinge term plus an
optional unlabeled term (universum or semi-supervised). ``train_evolving_gan``
runs the GAN game where generated samples start as universum contradictions
and, once epsilon reaches 1, are treated as unlabeled compliant data while the
generator is frozen.
"""

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .autodiff import DomainError, backward, detach, l2_norm, reduce
from .losses import (
    Setting,
    SettingParams,
    cs_hinge,
    semisup_hinge,
    unified_hinge_from_scores,
)
from .metrics import classification_error, frechet_feature_distance, label_entropy, residual_stats
from .models import decide_rows

DEFAULT_EPS_SET = (-0.05, -0.01, -0.005, -0.001, -0.0005, -0.0001, 1.0)
DEFAULT_EVOLVE_PERIOD = 5000


class ConfigError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


class GenLossKind(str, Enum):
    FM_ONLY = "fm_only"
    FM_PLUS_COMPLIANCE = "fm_plus_compliance"
    FM_PLUS_LDISC = "fm_plus_ldisc"


@dataclass(frozen=True)
class EvolutionSchedule:
    eps_set: tuple = DEFAULT_EPS_SET
    evolve_period: int = DEFAULT_EVOLVE_PERIOD

    def __post_init__(self):
        eps_set = tuple(float(e) for e in self.eps_set)
        object.__setattr__(self, "eps_set", eps_set)
        if not eps_set:
            raise ConfigError("eps_set must not be empty")
        if self.evolve_period < 1:
            raise ConfigError(f"evolve_period must be positive, got {self.evolve_period}")
        if any(e >= 0 for e in eps_set[:-1]):
            raise ConfigError("every eps_set entry but the last must be negative")
        if not (eps_set[-1] < 0 or eps_set[-1] == 1.0):
            raise ConfigError(f"last eps_set entry must be negative or 1.0, got {eps_set[-1]}")

    @classmethod
    def ugan(cls, eps=-0.05):
        """Single negative epsilon: a pure universum GAN."""
        return cls((eps,), DEFAULT_EVOLVE_PERIOD)

    @property
    def evolving(self):
        return self.eps_set[-1] == 1.0


def epsilon_at(schedule, iteration):
    """eps_set[iteration // evolve_period], clamped to the last entry."""
    if iteration < 0:
        raise DomainError(f"iteration must be non-negative, got {iteration}")
    idx = min(iteration // schedule.evolve_period, len(schedule.eps_set) - 1)
    return schedule.eps_set[idx]


@dataclass(frozen=True)
class TrainConfig:
    C_U: float = 0.5
    C_gen: float = 0.1
    lam: float = 0.1
    M: int = 64
    M_unlabeled: int = None
    numiter: int = 1000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_stab: float = 1e-8
    seed: int = 0
    gen_loss_kind: GenLossKind = GenLossKind.FM_PLUS_COMPLIANCE
    log_interval: int = 100
    eval_samples: int = 1000

    def __post_init__(self):
        try:
            object.__setattr__(self, "gen_loss_kind", GenLossKind(self.gen_loss_kind))
        except ValueError:
            raise ConfigError(f"unknown gen_loss_kind {self.gen_loss_kind!r}") from None
        for name in ("C_U", "C_gen", "lam", "lr"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        for name in ("M", "numiter", "log_interval", "eval_samples"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.M_unlabeled is not None and self.M_unlabeled < 1:
            raise ConfigError(f"M_unlabeled must be at least 1, got {self.M_unlabeled}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def for_params(cls, params):
        return cls([np.zeros(p.shape) for p in params], [np.zeros(p.shape) for p in params])


def adam_step(state, params, grads, cfg):
    """One bias-corrected Adam update, mutating ``params`` values in place."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    step = cfg.lr / bc1
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        denom = np.sqrt(v * (1.0 / bc2))
        denom += cfg.eps_stab
        p.values -= step * m / denom


class Adam:
    """Adam bound to a fixed parameter list.

    Parameter values are moved into one flat buffer (each tensor keeps a view)
    so an update costs a handful of vector operations regardless of how many
    tensors there are. The arithmetic is identical to ``adam_step``.
    """

    def __init__(self, params, cfg):
        self.params = list(params)
        self.cfg = cfg
        sizes = [p.values.size for p in self.params]
        self._flat = np.concatenate([p.values.ravel() for p in self.params]) if sizes else np.zeros(0)
        offsets = np.cumsum([0] + sizes)
        for p, lo, hi in zip(self.params, offsets[:-1], offsets[1:]):
            p.values = self._flat[lo:hi].reshape(p.values.shape)
        self.state = AdamState([np.zeros_like(self._flat)], [np.zeros_like(self._flat)])

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros(p.shape) for p in self.params]
        flat_grad = np.concatenate([g.ravel() for g in grads])
        view = _FlatView(self._flat)
        adam_step(self.state, [view], [flat_grad], self.cfg)


class _FlatView:
    __slots__ = ("values",)

    def __init__(self, values):
        self.values = values

    @property
    def shape(self):
        return self.values.shape


def _minimize(loss, opt):
    if not math.isfinite(loss.item()):
        raise NumericError(f"non-finite loss {loss.item()}")
    for p in opt.params:
        p.grad = None
    backward(loss)
    opt.step()


# ---------------------------------------------------------------------------
# GAN objectives


def feature_matching_loss(real_feats, fake_feats):
    """Norm of the difference between batch-mean features."""
    if real_feats.shape[0] == 0 or fake_feats.shape[0] == 0:
        raise DomainError("feature matching needs non-empty batches")
    if real_feats.shape[1] != fake_feats.shape[1]:
        raise DomainError(f"feature widths differ: {real_feats.shape[1]} vs {fake_feats.shape[1]}")
    return l2_norm(reduce("mean", fake_feats, axis=0) - reduce("mean", real_feats, axis=0))


def unlabeled_term(scores_star, eps):
    """Unified hinge of unlabeled scores under ``eps``, summed over copies."""
    return unified_hinge_from_scores(scores_star, eps)


def disc_loss_ugan(scores_lab, y, scores_gen, params, eps):
    """Mean labeled hinge plus C_U times the mean unified loss on generated rows."""
    n, m = scores_lab.shape[0], scores_gen.shape[0]
    if n == 0 or m == 0:
        raise DomainError("discriminator loss needs non-empty batches")
    C_U = params.C_U if isinstance(params, SettingParams) else float(params)
    return cs_hinge(scores_lab, y) * (1.0 / n) + unlabeled_term(scores_gen, eps) * (C_U / m)


def compliance_loss(fake_scores):
    """Mean pseudo-labeled hinge on generated rows."""
    return semisup_hinge(fake_scores) * (1.0 / fake_scores.shape[0])


def gen_loss(fake_scores, real_feats, fake_feats, cfg):
    kind = GenLossKind(cfg.gen_loss_kind)
    fm = feature_matching_loss(real_feats, fake_feats)
    if kind is GenLossKind.FM_ONLY:
        return fm
    if kind is GenLossKind.FM_PLUS_COMPLIANCE:
        return compliance_loss(fake_scores) * cfg.C_gen + fm
    if kind is GenLossKind.FM_PLUS_LDISC:
        return fm + compliance_loss(fake_scores) * cfg.lam
    raise ConfigError(f"unknown gen_loss_kind {kind!r}")


# ---------------------------------------------------------------------------
# metrics log

CSV_COLUMNS = ("iter", "epsilon", "disc_loss", "gen_loss", "train_acc", "test_acc",
               "contradiction_rate", "entropy_bits", "mean_residual", "frechet_proxy")


@dataclass
class MetricsRecord:
    iter: int
    epsilon: float
    disc_loss: float
    gen_loss: float = None
    train_acc: float = None
    test_acc: float = None
    contradiction_rate: float = None
    entropy_bits: float = None
    mean_residual: float = None
    frechet_proxy: float = None


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if not math.isfinite(value):
        return "nan"
    return f"{value:.4f}"


@dataclass
class MetricsLog:
    records: list = field(default_factory=list)

    def append(self, record):
        if self.records and record.iter <= self.records[-1].iter:
            raise ValueError(f"iteration {record.iter} does not follow {self.records[-1].iter}")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def final(self):
        return self.records[-1]

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    def to_csv(self, fh=None, comment=None):
        """Write the log as CSV; returns the text when ``fh`` is None."""
        out = io.StringIO() if fh is None else fh
        if comment:
            out.write(f"# {comment}\n")
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.records:
            row = asdict(r)
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
        return out.getvalue() if fh is None else None


# ---------------------------------------------------------------------------
# training loops


def _streams(seed, n):
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def _accuracy(model, X, y):
    if X is None or len(y) == 0:
        return None, None
    acc, _, contra = classification_error(decide_rows(model.scores(X)), y)
    return acc, contra


def _split_eval(eval_data):
    if eval_data is None:
        return None, None
    X, y = eval_data
    return np.asarray(X, dtype=np.float64), np.asarray(y).reshape(-1)


def train_classifier(setting, labeled, unlabeled, cfg, model, test=None):
    """Minibatch Adam on mean C&S hinge plus C_U times the mean unified loss.

    ``setting`` is a SettingParams; its C_U weights the unlabeled term (the
    config's C_U is ignored here). Inductive runs never touch ``unlabeled``.
    Returns (model, MetricsLog).
    """
    setting = setting if isinstance(setting, SettingParams) else SettingParams(setting)
    X = labeled.Z.values
    y = labeled.y
    n = X.shape[0]
    if X.shape[1] != model.input_dim:
        raise DomainError(f"data has {X.shape[1]} features, model expects {model.input_dim}")
    use_unlabeled = (setting.setting is not Setting.INDUCTIVE and setting.C_U > 0
                     and unlabeled is not None and unlabeled.m > 0)
    U = unlabeled.Zstar.values if use_unlabeled else None
    M = min(cfg.M, n)
    Mu = min(cfg.M_unlabeled or cfg.M, U.shape[0]) if use_unlabeled else 0
    rng_lab, rng_unl = _streams(cfg.seed, 2)
    X_test, y_test = _split_eval(test)
    opt = Adam(model.parameters(), cfg)
    log = MetricsLog()

    for it in range(cfg.numiter):
        idx = rng_lab.choice(n, M, replace=False) if M < n else np.arange(n)
        _, s_lab = model.forward(X[idx])
        loss = cs_hinge(s_lab, y[idx]) * (1.0 / M)
        if use_unlabeled:
            uidx = rng_unl.choice(U.shape[0], Mu, replace=False)
            _, s_unl = model.forward(U[uidx])
            loss = loss + unlabeled_term(s_unl, setting.eps) * (setting.C_U / Mu)
        _minimize(loss, opt)

        if (it + 1) % cfg.log_interval == 0:
            train_acc, _ = _accuracy(model, X, y)
            test_acc, contra = _accuracy(model, X_test, y_test)
            rec = MetricsRecord(it, setting.eps if setting.eps is not None else 0.0,
                                loss.item(), None, train_acc, test_acc, contra)
            if use_unlabeled:
                s_u = model.scores(U[: cfg.eval_samples])
                rec.entropy_bits = _safe_entropy(decide_rows(s_u), model.L)
                rec.mean_residual = residual_stats(s_u)[0]
            log.append(rec)
    return model, log


def _safe_entropy(preds, L):
    try:
        return label_entropy(preds, L)
    except DomainError:
        return 0.0


def evaluate_gan(disc, gen, eval_noise, X_train, y_train, X_test=None, y_test=None):
    """Snapshot metrics of a GAN: accuracies, generated-label entropy, residual, Frechet proxy."""
    fake = gen.forward(eval_noise, frozen=True).values
    fake_feats, fake_scores = disc.forward(fake, frozen=True)
    train_acc, _ = _accuracy(disc, X_train, y_train)
    test_acc, contra = _accuracy(disc, X_test, y_test)
    if test_acc is None:
        _, contra = _accuracy(disc, X_train, y_train)
    X_real = X_test if X_test is not None and len(X_test) >= 2 else X_train
    real_feats = disc.forward(X_real, frozen=True)[0].values
    return {
        "train_acc": train_acc,
        "test_acc": test_acc,
        "contradiction_rate": contra,
        "entropy_bits": _safe_entropy(decide_rows(fake_scores.values), disc.L),
        "mean_residual": residual_stats(fake_scores.values)[0],
        "frechet_proxy": frechet_feature_distance(real_feats, fake_feats.values),
    }


def train_evolving_gan(schedule, cfg, labeled, disc, gen, test=None, on_iteration=None):
    """Run the evolving GAN game.

    Each iteration draws M labeled rows and M generated rows and sets
    eps = epsilon_at(schedule, i). While eps < 0 the discriminator treats
    generated rows as universum samples (margin tolerance -eps) and the
    generator takes a step on ``gen_loss``; once eps >= 0 the discriminator
    uses the semi-supervised loss and the generator is left untouched.

    ``on_iteration(i, eps, disc, gen)``, if given, runs after each iteration.
    Returns (disc, gen, MetricsLog).
    """
    X = labeled.Z.values
    y = labeled.y
    n = X.shape[0]
    M = cfg.M
    if M > n:
        raise DomainError(f"batch size {M} exceeds {n} labeled rows")
    if gen.output_dim != disc.input_dim or X.shape[1] != disc.input_dim:
        raise DomainError("generator output, discriminator input and data widths must agree")
    rng_lab, rng_noise, rng_eval = _streams(cfg.seed, 3)
    X_test, y_test = _split_eval(test)
    eval_noise = gen.sample_noise(rng_eval, cfg.eval_samples)
    opt_d = Adam(disc.parameters(), cfg)
    opt_g = Adam(gen.parameters(), cfg)
    log = MetricsLog()
    g_loss_value = None

    for it in range(cfg.numiter):
        eps = epsilon_at(schedule, it)
        idx = rng_lab.choice(n, M, replace=False)
        xb, yb = X[idx], y[idx]
        noise = gen.sample_noise(rng_noise, M)
        train_gen = eps < 0
        fake = gen.forward(noise, frozen=not train_gen)

        _, s_real = disc.forward(xb)
        _, s_fake = disc.forward(detach(fake))
        d_loss = disc_loss_ugan(s_real, yb, s_fake, cfg.C_U, eps)
        _minimize(d_loss, opt_d)

        if train_gen:
            real_feats, _ = disc.forward(xb, frozen=True)
            fake_feats, fake_scores = disc.forward(fake, frozen=True)
            g_loss = gen_loss(fake_scores, real_feats, fake_feats, cfg)
            _minimize(g_loss, opt_g)
            g_loss_value = g_loss.item()
        else:
            g_loss_value = None

        if on_iteration is not None:
            on_iteration(it, eps, disc, gen)
        if (it + 1) % cfg.log_interval == 0:
            snap = evaluate_gan(disc, gen, eval_noise, X, y, X_test, y_test)
            log.append(MetricsRecord(it, eps, d_loss.item(), g_loss_value, **snap))
    return disc, gen, log
