"""scikit-learn style facade: fit runs the distribution stage, transform and
predict verify batches of candidate signatures.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from . import core, framework
from .params import ProtocolParams, validate_params

DEFAULT_THRESHOLDS = {-1: "9/20", 0: "7/20", 1: "1/4", 2: "3/20"}
REJECTED = -2


def check_signatures(X, K):
    """2-D array of 0/1 signature bits with K columns, as uint8."""
    X = check_array(X, dtype=None, ensure_2d=True)
    if X.shape[1] != K:
        raise ValueError(f"expected signatures of {K} bits, got {X.shape[1]} columns")
    if not np.isin(X, (0, 1)).all():
        raise ValueError("signature entries must be 0 or 1")
    return X.astype(np.uint8)


class SignatureVerifier(BaseEstimator):
    """Honest multiparty signature setup wrapped as an estimator.

    ``transform`` gives, per sample and recipient, the highest level at which
    the recipient verifies the signature (``-2`` if it fails even at -1);
    ``predict`` gives the majority-vote dispute outcome (True = Valid).
    """

    def __init__(self, num_recipients=8, n=64, num_messages=1, dishonest_fraction="1/8",
                 l_max=2, s_thresholds=None, random_state=0, message=0):
        self.num_recipients = num_recipients
        self.n = n
        self.num_messages = num_messages
        self.dishonest_fraction = dishonest_fraction
        self.l_max = l_max
        self.s_thresholds = s_thresholds
        self.random_state = random_state
        self.message = message

    def _params(self):
        seed = self.random_state
        if seed is None:
            seed = int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])
        return validate_params(ProtocolParams(
            num_recipients=self.num_recipients, n=self.n, num_messages=self.num_messages,
            dishonest_fraction=self.dishonest_fraction, l_max=self.l_max,
            s_thresholds=DEFAULT_THRESHOLDS if self.s_thresholds is None else self.s_thresholds,
            master_seed=int(seed),
        ))

    def fit(self, X=None, y=None):
        self.params_ = self._params()
        self.signer_state_, self.recipient_states_ = core.deal(self.params_)
        self.n_features_in_ = self.params_.K
        return self

    def authentic_signature(self, message=None):
        """Sign(x) without consuming the one-time signature."""
        check_is_fitted(self)
        x = self.message if message is None else message
        return self.signer_state_.signatures[x].reshape(-1).copy()

    def transform(self, X):
        check_is_fitted(self)
        X = check_signatures(X, self.params_.K)
        h = core.hamming_matrix(self.recipient_states_, self.message, X)
        return core.max_levels(self.params_, h)

    def predict(self, X):
        check_is_fitted(self)
        X = check_signatures(X, self.params_.K)
        ok = core.verify_all(self.recipient_states_, self.message, X, -1)
        return 2 * ok.sum(axis=1) > self.params_.num_recipients

    def classify(self, X):
        """SignatureClassification for each row of X."""
        check_is_fitted(self)
        X = check_signatures(X, self.params_.K)
        ref = self.authentic_signature()
        return [framework.classify_signature(self.recipient_states_, self.message, row, ref)
                for row in X]
