"""Small models with exact derivatives, for checking the meta-learner."""

from __future__ import annotations

import numpy as np


class QuadraticProbe:
    """``L(theta) = sum(theta**2)``; the batch is ignored."""

    def loss_and_grad(self, theta, batch=None):
        theta = np.asarray(theta, dtype=np.float64)
        return float(theta @ theta), 2.0 * theta

    def hvp(self, theta, batch, v):
        return 2.0 * np.asarray(v, dtype=np.float64)


class LogisticProbe:
    """Logistic regression, batch ``(X, y)``, mean cross-entropy, exact Hessian."""

    def loss_and_grad(self, theta, batch):
        X, y = batch
        z = X @ theta
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        p = 1.0 / (1.0 + np.exp(-z))
        return loss, X.T @ (p - y) / len(y)

    def hessian(self, theta, batch):
        X, y = batch
        p = 1.0 / (1.0 + np.exp(-(X @ theta)))
        return (X * (p * (1 - p))[:, None]).T @ X / len(y)

    def hvp(self, theta, batch, v):
        return self.hessian(theta, batch) @ v
