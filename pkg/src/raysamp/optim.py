import numpy as np


class NumericalError(FloatingPointError):
    pass


class Adam:
    """Adam with bias correction. Updates parameter arrays in place."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params, grads, lr):
        grads = np.asarray(grads)
        if grads.shape != params.shape:
            raise ValueError(f"gradient shape {grads.shape} != parameter shape {params.shape}")
        bad = ~np.isfinite(grads)
        if bad.any():
            i = int(np.flatnonzero(bad.ravel())[0])
            raise NumericalError(f"non-finite gradient at parameter index {i}")
        if self.m is None:
            self.m = np.zeros_like(params, dtype=np.float64)
            self.v = np.zeros_like(params, dtype=np.float64)
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grads
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grads * grads
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        params -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return params


def adam_step(params, grads, state, lr):
    """Functional wrapper: one Adam update using (and advancing) `state`."""
    return state.step(params, grads, lr)
