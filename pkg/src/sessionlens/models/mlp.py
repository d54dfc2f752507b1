import numpy as np

from .._rng import mix64
from ._base import BaseClassifier, Standardizer
from .linear import _softmax


def _sigmoid(Z):
    return 0.5 * (1.0 + np.tanh(0.5 * Z))


def loss_and_grad(params, X, Y):
    """Mean cross-entropy of the network and its gradient w.r.t. ``params``.

    ``params`` is ``(W1, b1, W2, b2)``; ``Y`` is one-hot.
    """
    W1, b1, W2, b2 = params
    n = X.shape[0]
    H = _sigmoid(X @ W1 + b1)
    P = _softmax(H @ W2 + b2)
    loss = -np.sum(Y * np.log(np.clip(P, 1e-300, None))) / n
    dZ2 = (P - Y) / n
    dW2 = H.T @ dZ2
    db2 = dZ2.sum(axis=0)
    dZ1 = (dZ2 @ W2.T) * H * (1.0 - H)
    dW1 = X.T @ dZ1
    db1 = dZ1.sum(axis=0)
    return loss, (dW1, db1, dW2, db2)


class MLPClassifier(BaseClassifier):
    """One hidden logistic layer, softmax output, mini-batch gradient descent."""

    requires_two_classes = True

    def __init__(self, n_hidden=16, learning_rate=0.1, n_epochs=200, batch_size=32, random_state=0):
        self.n_hidden = n_hidden
        self.learning_rate = learning_rate
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def _init_params(self, d, k):
        rng = np.random.default_rng(mix64(self.random_state, 0))
        a1 = np.sqrt(6.0 / (d + self.n_hidden))
        a2 = np.sqrt(6.0 / (self.n_hidden + k))
        return [rng.uniform(-a1, a1, (d, self.n_hidden)), np.zeros(self.n_hidden),
                rng.uniform(-a2, a2, (self.n_hidden, k)), np.zeros(k)]

    def _fit(self, X, codes):
        self.standardizer_ = Standardizer.fit(X)
        Xs = self.standardizer_.transform(X)
        n, k = Xs.shape[0], self.classes_.size
        Y = np.eye(k)[codes]
        params = self._init_params(Xs.shape[1], k)
        losses = []
        for epoch in range(self.n_epochs):
            order = np.random.default_rng(mix64(self.random_state, epoch + 1)).permutation(n)
            for lo in range(0, n, self.batch_size):
                batch = order[lo:lo + self.batch_size]
                _, grads = loss_and_grad(params, Xs[batch], Y[batch])
                for p, g in zip(params, grads):
                    p -= self.learning_rate * g
            losses.append(loss_and_grad(params, Xs, Y)[0])
        self.params_ = params
        self.loss_curve_ = np.array(losses)

    def _scores(self, X):
        W1, b1, W2, b2 = self.params_
        H = _sigmoid(self.standardizer_.transform(X) @ W1 + b1)
        return H @ W2 + b2

    def _get_state(self):
        return {"params": [p.tolist() for p in self.params_],
                "standardizer": self.standardizer_.to_dict()}

    def _set_state(self, state):
        self.params_ = [np.array(p, dtype=float) for p in state["params"]]
        self.standardizer_ = Standardizer.from_dict(state["standardizer"])
