"""First-order optimizer with per-parameter adaptive steps and a projection."""
import numpy as np


class ProjectedAdam:
    """Adam steps followed by a projection onto the feasible set.

    Minimises; callers maximising pass the negated gradient.  Tracks the best
    point seen through :meth:`record`.  With ``adapt`` the learning rate
    shrinks by ``down`` after any step that made the objective worse and grows
    by ``up`` (capped at ``max_lr``) otherwise, which keeps Adam from idling in
    long oscillations near an optimum.
    """

    def __init__(self, x0, project, lr=0.03, beta1=0.9, beta2=0.999, eps=1e-12,
                 adapt=True, down=0.7, up=1.05, max_lr=0.1):
        self.x = project(np.array(x0, dtype=float))
        self.project = project
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros_like(self.x)
        self.v = np.zeros_like(self.x)
        self.t = 0
        self.best_value = np.inf
        self.best_x = self.x.copy()
        self.adapt, self.down, self.up, self.max_lr = adapt, down, up, max_lr
        self._last = None

    def record(self, value):
        """Register the objective at the current point; True on a new best."""
        if self.adapt and self._last is not None:
            self.lr = self.lr * self.down if value > self._last else min(self.lr * self.up, self.max_lr)
        self._last = value
        if value < self.best_value:
            self.best_value = value
            self.best_x = self.x.copy()
            return True
        return False

    def step(self, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        self.x = self.project(self.x - self.lr * mhat / (np.sqrt(vhat) + self.eps))
        return self.x
