"""scikit-learn style wrappers around ``train_classifier`` and ``train_evolving_gan``.

Labels may be any hashable values; they are encoded to 1..L internally.
Contradictions (no strictly dominant class) are reported as
``contradiction_label`` by ``predict``.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .autodiff import Tensor
from .engine import EvolutionSchedule, GenLossKind, TrainConfig, train_classifier, train_evolving_gan
from .losses import LabeledBatch, Setting, SettingParams, UnlabeledBatch
from .models import CONTRADICTION, Discriminator, Generator, decide_rows


class _DiscriminatorMixin(ClassifierMixin, TransformerMixin):
    """Prediction helpers shared by estimators holding ``discriminator_``."""

    def decision_function(self, X):
        check_is_fitted(self, "discriminator_")
        X = check_array(X, dtype=np.float64)
        return self.discriminator_.scores(X)

    def predict(self, X):
        codes = decide_rows(self.decision_function(X), self.tie_tol)
        out = np.empty(codes.shape[0], dtype=np.result_type(self.classes_.dtype,
                                                            np.asarray(self.contradiction_label)))
        out[:] = self.contradiction_label
        hit = codes != CONTRADICTION
        out[hit] = self.classes_[codes[hit] - 1]
        return out

    def transform(self, X):
        """Feature map phi(X) of the trained discriminator."""
        check_is_fitted(self, "discriminator_")
        X = check_array(X, dtype=np.float64)
        return self.discriminator_.forward(X, frozen=True)[0].values

    def _encode(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self._encoder = LabelEncoder().fit(y)
        self.classes_ = self._encoder.classes_
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        self.n_features_in_ = X.shape[1]
        return X, self._encoder.transform(y).astype(np.int64) + 1


class UnifiedHingeClassifier(BaseEstimator, _DiscriminatorMixin):
    """Crammer-Singer hinge classifier with an optional unlabeled term.

    ``setting`` picks how ``X_unlabeled`` passed to ``fit`` is used:
    ignored (inductive), pushed towards contradiction (universum) or
    pseudo-labeled (semisupervised).
    """

    def __init__(self, setting="inductive", hidden=(64, 64), activation="leaky_relu", C_U=0.5,
                 delta=0.05, numiter=1000, batch_size=64, unlabeled_batch_size=None, lr=1e-3,
                 tie_tol=0.0, contradiction_label=-1, random_state=0):
        self.setting = setting
        self.hidden = hidden
        self.activation = activation
        self.C_U = C_U
        self.delta = delta
        self.numiter = numiter
        self.batch_size = batch_size
        self.unlabeled_batch_size = unlabeled_batch_size
        self.lr = lr
        self.tie_tol = tie_tol
        self.contradiction_label = contradiction_label
        self.random_state = random_state

    def fit(self, X, y, X_unlabeled=None):
        X, codes = self._encode(X, y)
        params = SettingParams(Setting(self.setting), delta=self.delta, C_U=self.C_U)
        unl = None
        if X_unlabeled is not None:
            U = check_array(X_unlabeled, dtype=np.float64)
            if U.shape[1] != X.shape[1]:
                raise ValueError(f"X_unlabeled has {U.shape[1]} features, X has {X.shape[1]}")
            unl = UnlabeledBatch(Tensor(U))
        elif params.setting is not Setting.INDUCTIVE:
            raise ValueError(f"setting {self.setting!r} needs X_unlabeled")
        cfg = TrainConfig(M=self.batch_size, M_unlabeled=self.unlabeled_batch_size,
                          numiter=self.numiter, lr=self.lr, seed=self.random_state,
                          log_interval=self.numiter)
        model = Discriminator.create(X.shape[1], len(self.classes_), tuple(self.hidden),
                                     self.activation, seed=self.random_state)
        self.discriminator_, self.log_ = train_classifier(
            params, LabeledBatch(Tensor(X), codes, len(self.classes_)), unl, cfg, model)
        return self


class EvolvingGANClassifier(BaseEstimator, _DiscriminatorMixin):
    """Discriminator trained by the evolving universum GAN game.

    ``eps_set=(-0.05,)`` gives the plain universum GAN. After ``fit`` the
    generator is available as ``generator_`` and through ``sample``.
    """

    def __init__(self, eps_set=(-0.05, -0.01, -0.005, -0.001, -0.0005, -0.0001, 1.0),
                 evolve_period=5000, hidden=(64, 64), gen_hidden=(64, 64), noise_dim=16,
                 activation="leaky_relu", C_U=0.5, C_gen=0.1, lam=0.1,
                 gen_loss_kind="fm_plus_compliance", numiter=1000, batch_size=64, lr=1e-3,
                 log_interval=100, tie_tol=0.0, contradiction_label=-1, random_state=0):
        self.eps_set = eps_set
        self.evolve_period = evolve_period
        self.hidden = hidden
        self.gen_hidden = gen_hidden
        self.noise_dim = noise_dim
        self.activation = activation
        self.C_U = C_U
        self.C_gen = C_gen
        self.lam = lam
        self.gen_loss_kind = gen_loss_kind
        self.numiter = numiter
        self.batch_size = batch_size
        self.lr = lr
        self.log_interval = log_interval
        self.tie_tol = tie_tol
        self.contradiction_label = contradiction_label
        self.random_state = random_state

    def fit(self, X, y, X_test=None, y_test=None):
        X, codes = self._encode(X, y)
        L = len(self.classes_)
        test = None
        if X_test is not None:
            X_test, y_test = check_X_y(X_test, y_test, dtype=np.float64)
            test = (X_test, self._encoder.transform(y_test) + 1)
        schedule = EvolutionSchedule(tuple(self.eps_set), self.evolve_period)
        cfg = TrainConfig(C_U=self.C_U, C_gen=self.C_gen, lam=self.lam, M=self.batch_size,
                          numiter=self.numiter, lr=self.lr, seed=self.random_state,
                          gen_loss_kind=GenLossKind(self.gen_loss_kind),
                          log_interval=self.log_interval)
        disc = Discriminator.create(X.shape[1], L, tuple(self.hidden), self.activation,
                                    seed=self.random_state)
        gen = Generator.create(self.noise_dim, X.shape[1], tuple(self.gen_hidden), self.activation,
                               seed=self.random_state + 1)
        self.discriminator_, self.generator_, self.log_ = train_evolving_gan(
            schedule, cfg, LabeledBatch(Tensor(X), codes, L), disc, gen, test)
        return self

    def sample(self, n_samples, random_state=None):
        """Draw ``n_samples`` rows from the trained generator."""
        check_is_fitted(self, "generator_")
        rng = np.random.default_rng(random_state)
        noise = self.generator_.sample_noise(rng, n_samples)
        return self.generator_.forward(noise, frozen=True).values
