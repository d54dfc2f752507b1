"""Multinomial logistic regression and one-vs-rest linear SVM."""
import numpy as np
from numba import njit

from .._rng import mix64
from ._base import BaseClassifier, Standardizer


def _augment(X):
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


class SoftmaxRegression(BaseClassifier):
    """L2-penalized multinomial logistic regression by full-batch gradient descent.

    ``step=None`` picks each step by Armijo backtracking: it starts from
    twice the previous accepted step (initially ``1/L`` with
    ``L = 0.5 * lambda_max(X'X / n) + l2``) and halves until the loss drops by
    at least ``step * |grad|^2 / 2``, so the loss never increases. A numeric
    ``step`` is used as a fixed step size instead.
    """

    requires_two_classes = True

    def __init__(self, l2=0.0, n_iter=500, step=None):
        self.l2 = l2
        self.n_iter = n_iter
        self.step = step

    def _objective(self, W, Xa, Y):
        n = Xa.shape[0]
        P = _softmax(Xa @ W)
        loss = -np.sum(Y * np.log(np.clip(P, 1e-300, None))) / n
        loss += 0.5 * self.l2 * np.sum(W[:-1] ** 2)
        grad = Xa.T @ (P - Y) / n
        grad[:-1] += self.l2 * W[:-1]
        return loss, grad

    def _fit(self, X, codes):
        self.standardizer_ = Standardizer.fit(X)
        Xa = _augment(self.standardizer_.transform(X))
        n, k = Xa.shape[0], self.classes_.size
        Y = np.eye(k)[codes]
        search = self.step is None
        if search:
            lip = 0.5 * np.linalg.eigvalsh(Xa.T @ Xa / n)[-1] + self.l2
            step = 0.5 / lip
        else:
            step = self.step
        W = np.zeros((Xa.shape[1], k))
        loss, grad = self._objective(W, Xa, Y)
        losses = [loss]
        for _ in range(self.n_iter):
            if search:
                g2 = float(np.sum(grad * grad))
                step *= 2.0
                while True:
                    W_new = W - step * grad
                    new_loss, new_grad = self._objective(W_new, Xa, Y)
                    if new_loss <= loss - 0.5 * step * g2 or step < 1e-12:
                        break
                    step *= 0.5
                W, loss, grad = W_new, new_loss, new_grad
            else:
                W = W - step * grad
                loss, grad = self._objective(W, Xa, Y)
            losses.append(loss)
        self.coef_ = W
        self.loss_curve_ = np.array(losses)
        self.grad_norm_ = float(np.linalg.norm(grad))

    def _scores(self, X):
        return _augment(self.standardizer_.transform(X)) @ self.coef_

    def _get_state(self):
        return {"coef": self.coef_.tolist(), "standardizer": self.standardizer_.to_dict()}

    def _set_state(self, state):
        self.coef_ = np.array(state["coef"], dtype=float)
        self.standardizer_ = Standardizer.from_dict(state["standardizer"])


@njit(cache=True, nogil=True)
def _pegasos(Xa, s, lam, orders):
    """Projected stochastic subgradient descent on the L2 hinge objective.

    Returns the average of the iterates of the final epoch.
    """
    n, d = Xa.shape
    w = np.zeros(d)
    avg = np.zeros(d)
    radius = 1.0 / np.sqrt(lam)
    t = 0
    n_epochs = orders.shape[0]
    for e in range(n_epochs):
        for p in range(n):
            i = orders[e, p]
            t += 1
            eta = 1.0 / (lam * t)
            margin = 0.0
            for j in range(d):
                margin += w[j] * Xa[i, j]
            margin *= s[i]
            shrink = 1.0 - eta * lam
            for j in range(d):
                w[j] *= shrink
            if margin < 1.0:
                for j in range(d):
                    w[j] += eta * s[i] * Xa[i, j]
            norm = 0.0
            for j in range(d):
                norm += w[j] * w[j]
            norm = np.sqrt(norm)
            if norm > radius:
                for j in range(d):
                    w[j] *= radius / norm
            if e == n_epochs - 1:
                for j in range(d):
                    avg[j] += w[j]
    return avg / n


class LinearSVM(BaseClassifier):
    """One-vs-rest linear SVM, hinge loss with L2 penalty ``1 / (C n)``."""

    requires_two_classes = True

    def __init__(self, C=1.0, n_epochs=50, random_state=0):
        self.C = C
        self.n_epochs = n_epochs
        self.random_state = random_state

    def _fit(self, X, codes):
        self.standardizer_ = Standardizer.fit(X)
        Xa = _augment(self.standardizer_.transform(X))
        n, k = Xa.shape[0], self.classes_.size
        lam = 1.0 / (self.C * n)
        coef = np.zeros((Xa.shape[1], k))
        for c in range(k):
            orders = np.vstack([
                np.random.default_rng(mix64(self.random_state, c * self.n_epochs + e)).permutation(n)
                for e in range(self.n_epochs)
            ])
            s = np.where(codes == c, 1.0, -1.0)
            coef[:, c] = _pegasos(Xa, s, lam, orders)
        self.coef_ = coef

    def _scores(self, X):
        return _augment(self.standardizer_.transform(X)) @ self.coef_

    _get_state = SoftmaxRegression._get_state
    _set_state = SoftmaxRegression._set_state
