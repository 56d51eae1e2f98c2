import numpy as np
import pytest
from numpy.testing import assert_array_equal
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from evogan.data import gen_gaussian_mixture
from evogan.estimators import EvolvingGANClassifier, UnifiedHingeClassifier


@pytest.fixture(scope="module")
def mixture():
    ds = gen_gaussian_mixture(3, 60, 2, 5.0, seed=0)
    names = np.array(["cat", "dog", "eel"])
    return ds.X, names[ds.y - 1]


class TestUnifiedHingeClassifier:
    def test_fit_predict_string_labels(self, mixture):
        X, y = mixture
        clf = UnifiedHingeClassifier(hidden=(), numiter=300, lr=1e-2, contradiction_label="none")
        clf.fit(X, y)
        assert_array_equal(clf.classes_, ["cat", "dog", "eel"])
        assert clf.n_features_in_ == 2
        assert clf.score(X, y) > 0.9
        assert set(clf.predict(X)) <= {"cat", "dog", "eel", "none"}

    def test_decision_function_and_transform(self, mixture):
        X, y = mixture
        clf = UnifiedHingeClassifier(hidden=(5,), numiter=20).fit(X, y)
        assert clf.decision_function(X).shape == (len(X), 3)
        assert clf.transform(X).shape == (len(X), 5)

    def test_contradiction_label(self, mixture):
        X, _ = mixture
        y = np.repeat([10, 20, 30], 60)
        # a huge tolerance makes every row a contradiction
        clf = UnifiedHingeClassifier(hidden=(), numiter=5, tie_tol=1e9).fit(X, y)
        assert_array_equal(clf.predict(X[:5]), [-1] * 5)
        assert clf.score(X, y) == 0.0

    def test_semisupervised_needs_unlabeled(self, mixture):
        X, y = mixture
        with pytest.raises(ValueError):
            UnifiedHingeClassifier(setting="semisupervised", numiter=5).fit(X, y)
        clf = UnifiedHingeClassifier(setting="semisupervised", numiter=5, hidden=())
        clf.fit(X[::2], y[::2], X_unlabeled=X[1::2])
        assert clf.log_.final is not None

    def test_params_and_clone(self):
        clf = UnifiedHingeClassifier(C_U=0.3, hidden=(4,))
        params = clf.get_params()
        assert params["C_U"] == 0.3
        twin = clone(clf)
        assert twin.get_params() == params

    def test_unfitted(self):
        with pytest.raises(NotFittedError):
            UnifiedHingeClassifier().predict(np.zeros((1, 2)))

    def test_validation(self):
        with pytest.raises(ValueError):
            UnifiedHingeClassifier(numiter=1).fit(np.zeros((3, 2)), [1, 1, 1])
        with pytest.raises(ValueError):
            UnifiedHingeClassifier(numiter=1).fit(np.zeros((3, 2)), [1, 2])

    def test_deterministic(self, mixture):
        X, y = mixture
        a = UnifiedHingeClassifier(numiter=30, hidden=(4,), random_state=2).fit(X, y)
        b = UnifiedHingeClassifier(numiter=30, hidden=(4,), random_state=2).fit(X, y)
        assert_array_equal(a.decision_function(X), b.decision_function(X))


class TestEvolvingGANClassifier:
    def test_fit_sample_predict(self, mixture):
        X, y = mixture
        clf = EvolvingGANClassifier(evolve_period=10, hidden=(8,), gen_hidden=(8,), noise_dim=4,
                                    numiter=80, batch_size=16, log_interval=20)
        clf.fit(X, y, X_test=X, y_test=y)
        assert clf.log_.column("epsilon")[-1] == 1.0
        assert clf.sample(7, random_state=0).shape == (7, 2)
        assert clf.predict(X).shape == (len(X),)
        assert clf.log_.final.test_acc is not None

    def test_ugan_mode(self, mixture):
        X, y = mixture
        clf = EvolvingGANClassifier(eps_set=(-0.05,), hidden=(4,), gen_hidden=(4,), numiter=20,
                                    batch_size=8, log_interval=10)
        clf.fit(X, y)
        assert set(clf.log_.column("epsilon")) == {-0.05}

    def test_unfitted_sample(self):
        with pytest.raises(NotFittedError):
            EvolvingGANClassifier().sample(3)
