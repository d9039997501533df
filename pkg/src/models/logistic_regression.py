import numpy as np

from basics.base_model import BaseModel, register_model
from src.conjugate import LOG_2PI


@register_model
class LogisticRegression(BaseModel):
    """
        Binary responses with P(y=1) = expit(alpha + x^T beta); standard normal priors on
        alpha and every coefficient. theta = (alpha, beta_1, ..., beta_P).
    """
    data_kind = 'binary'
    is_monotone = True

    def hyperparameters(self):
        return {}

    def dim(self, data):
        return data.P + 1

    def param_names(self, data):
        return ['alpha'] + [f'beta{i + 1}' for i in range(data.P)]

    def constraints(self, q):
        return ('real',) * q

    def log_likelihood(self, data, theta):
        theta = np.asarray(theta)
        eta = theta[..., :1]
        if data.P > 0:
            eta = eta + theta[..., 1:] @ data.X.T
        else:
            eta = np.broadcast_to(eta, theta.shape[:-1] + (data.n,))
        return np.sum(data.y * eta - np.logaddexp(0.0, eta), axis=-1)

    def log_prior(self, theta):
        theta = np.asarray(theta)
        return -0.5 * np.sum(theta ** 2 + LOG_2PI, axis=-1)
