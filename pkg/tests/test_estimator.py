import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from uss_sim import errors
from uss_sim.estimator import REJECTED, SignatureVerifier, check_signatures


def test_params_round_trip():
    est = SignatureVerifier(n=32, random_state=3)
    assert est.get_params()["n"] == 32
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    est.set_params(l_max=1, s_thresholds={-1: "0.45", 0: "0.35", 1: "0.25"})
    assert est.fit().params_.l_max == 1


def test_unfitted():
    with pytest.raises(NotFittedError):
        SignatureVerifier().transform(np.zeros((1, 512)))


def test_fit_transform_predict():
    est = SignatureVerifier(random_state=1).fit()
    assert est.n_features_in_ == 512
    good = est.authentic_signature()
    X = np.stack([good, 1 - good])
    levels = est.transform(X)
    assert levels.shape == (2, 8)
    assert (levels[0] == 2).all() and (levels[1] == REJECTED).all()
    assert est.predict(X).tolist() == [True, False]
    cls = est.classify(X)
    assert cls[0].authentic and not cls[1].valid


def test_same_seed_same_model():
    a = SignatureVerifier(random_state=5).fit().authentic_signature()
    b = SignatureVerifier(random_state=5).fit().authentic_signature()
    c = SignatureVerifier(random_state=6).fit().authentic_signature()
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_invalid_hyperparameters():
    with pytest.raises(errors.DivisibilityError):
        SignatureVerifier(n=63).fit()


def test_check_signatures():
    with pytest.raises(ValueError):
        check_signatures(np.zeros((2, 5)), 4)
    with pytest.raises(ValueError):
        check_signatures(np.full((1, 4), 2), 4)
    assert check_signatures([[0, 1, 1, 0]], 4).dtype == np.uint8
