"""Gaussian MLP policies and the value baseline, in plain numpy.

Networks are tanh-tanh-linear (128/64 hidden).  Parameters live in one flat
float64 vector per network; layer matrices are reshaped views into it, so
in-place writes to the flat vector update the network.  Reverse-mode (vjp)
and forward-mode (jvp) products are hand-rolled; the trust-region update
needs both to form Fisher-vector products without an autodiff dependency.

The human and robot policies are separate networks that share no parameters;
the joint policy concatenates their observation/action interfaces and their
flat parameter vectors so one trust region couples both agents.
"""

from __future__ import annotations

import numpy as np

LOG_STD_MIN = -20.0
LOG_2PI = float(np.log(2.0 * np.pi))


class Mlp:
    """Fully connected tanh network with a linear output layer."""

    def __init__(self, sizes, rng=None, init_scale=0.05):
        self.sizes = tuple(int(s) for s in sizes)
        shapes = []
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            shapes.append((a, b))
            shapes.append((b,))
        self.shapes = shapes
        self.n_params = sum(int(np.prod(s)) for s in shapes)
        self.params = np.zeros(self.n_params)
        self._views = []
        offset = 0
        for s in shapes:
            size = int(np.prod(s))
            self._views.append(self.params[offset:offset + size].reshape(s))
            offset += size
        if rng is not None:
            for v in self._views:
                if v.ndim == 2:  # weights uniform, biases zero
                    v[:] = rng.uniform(-init_scale, init_scale, size=v.shape)

    def layout(self):
        """(name, shape, offset) triples describing the flat parameter order."""
        out = []
        offset = 0
        for i, s in enumerate(self.shapes):
            kind = "W" if len(s) == 2 else "b"
            out.append((f"{kind}{i // 2 + 1}", list(s), offset))
            offset += int(np.prod(s))
        return out

    def _weights(self):
        return self._views[0::2], self._views[1::2]

    def forward(self, x, keep=False):
        """Batch forward pass; ``keep`` retains activations for vjp."""
        ws, bs = self._weights()
        h = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [h]
        n_layers = len(ws)
        for i, (w, b) in enumerate(zip(ws, bs)):
            h = h @ w + b
            if i < n_layers - 1:
                h = np.tanh(h)
            acts.append(h)
        if keep:
            self._acts = acts
        return h

    def vjp(self, x, upstream):
        """Flat gradient of sum_n upstream_n . f(x_n) w.r.t. the parameters."""
        ws, _ = self._weights()
        out = self.forward(x, keep=True)
        acts = self._acts
        grad = np.zeros(self.n_params)
        gviews = []
        offset = 0
        for s in self.shapes:
            size = int(np.prod(s))
            gviews.append(grad[offset:offset + size].reshape(s))
            offset += size
        delta = np.atleast_2d(upstream)
        for i in range(len(ws) - 1, -1, -1):
            gviews[2 * i][:] = acts[i].T @ delta
            gviews[2 * i + 1][:] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ ws[i].T) * (1.0 - acts[i] ** 2)
        return grad

    def jvp(self, x, v):
        """Directional derivative of f(x) along the flat parameter vector v."""
        ws, bs = self._weights()
        vws, vbs = [], []
        offset = 0
        for s in self.shapes:
            size = int(np.prod(s))
            view = v[offset:offset + size].reshape(s)
            (vws if len(s) == 2 else vbs).append(view)
            offset += size
        h = np.atleast_2d(np.asarray(x, dtype=float))
        n_layers = len(ws)
        dh = None
        for i, (w, b, vw, vb) in enumerate(zip(ws, bs, vws, vbs)):
            da = (h @ vw + vb) if dh is None else (dh @ w + h @ vw + vb)
            a = h @ w + b
            if i < n_layers - 1:
                t = np.tanh(a)
                dh = (1.0 - t * t) * da
                h = t
            else:
                dh = da
                h = a
        return dh


class GaussianPolicy:
    """Diagonal Gaussian over actions; the MLP outputs the mean."""

    def __init__(self, obs_dim, act_dim, hidden=(128, 64), rng=None,
                 log_std_init=-1.0, init_scale=0.05):
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        self.mlp = Mlp((obs_dim, *hidden, act_dim), rng=rng, init_scale=init_scale)
        self.log_std = np.full(act_dim, float(log_std_init))
        self.n_params = self.mlp.n_params + act_dim

    def get_params(self) -> np.ndarray:
        return np.concatenate([self.mlp.params, self.log_std])

    def set_params(self, flat: np.ndarray):
        self.mlp.params[:] = flat[:self.mlp.n_params]
        self.log_std[:] = np.maximum(flat[self.mlp.n_params:], LOG_STD_MIN)

    def mean(self, obs):
        return self.mlp.forward(obs)

    def distribution(self, obs):
        mu = self.mlp.forward(obs)
        return mu, np.broadcast_to(self.log_std, mu.shape)

    def sample(self, obs, rng):
        mu = self.mlp.forward(obs)[0]
        std = np.exp(self.log_std)
        action = mu + std * rng.standard_normal(self.act_dim)
        return action, self.log_prob_single(action, mu)

    def log_prob_single(self, action, mu):
        z = (action - mu) / np.exp(self.log_std)
        return float(-0.5 * np.sum(z * z) - np.sum(self.log_std)
                     - 0.5 * self.act_dim * LOG_2PI)

    def log_prob(self, obs, actions):
        mu = self.mlp.forward(obs)
        z = (actions - mu) / np.exp(self.log_std)
        return (-0.5 * np.sum(z * z, axis=1) - np.sum(self.log_std)
                - 0.5 * self.act_dim * LOG_2PI)

    def layout(self):
        out = self.mlp.layout()
        out.append(("log_std", [self.act_dim], self.mlp.n_params))
        return out


class JointPolicy:
    """Unified observation/action interface over two disjoint policies.

    The flat parameter vector is [human | robot]; no index is shared, so a
    single trust-region step over it couples the two agents while keeping
    their networks structurally separate.
    """

    def __init__(self, human: GaussianPolicy, robot: GaussianPolicy):
        self.human = human
        self.robot = robot
        self.obs_dim = human.obs_dim + robot.obs_dim
        self.act_dim = human.act_dim + robot.act_dim
        self.n_params = human.n_params + robot.n_params
        self.obs_split = human.obs_dim
        self.act_split = human.act_dim

    @classmethod
    def build(cls, human_obs, human_act, robot_obs, robot_act, rng,
              hidden=(128, 64), log_std_init=-1.0):
        return cls(GaussianPolicy(human_obs, human_act, hidden, rng, log_std_init),
                   GaussianPolicy(robot_obs, robot_act, hidden, rng, log_std_init))

    def split_obs(self, obs):
        obs = np.asarray(obs)
        return obs[..., :self.obs_split], obs[..., self.obs_split:]

    def concat_obs(self, o_h, o_r):
        return np.concatenate([o_h, o_r], axis=-1)

    def split_action(self, action):
        action = np.asarray(action)
        return action[..., :self.act_split], action[..., self.act_split:]

    def concat_action(self, a_h, a_r):
        return np.concatenate([a_h, a_r], axis=-1)

    def get_params(self):
        return np.concatenate([self.human.get_params(), self.robot.get_params()])

    def set_params(self, flat):
        n = self.human.n_params
        self.human.set_params(flat[:n])
        self.robot.set_params(flat[n:])

    def act(self, joint_obs, rng, stochastic=True):
        o_h, o_r = self.split_obs(joint_obs)
        if stochastic:
            a_h, lp_h = self.human.sample(o_h[None, :] if o_h.ndim == 1 else o_h, rng)
            a_r, lp_r = self.robot.sample(o_r[None, :] if o_r.ndim == 1 else o_r, rng)
            return np.concatenate([a_h, a_r]), lp_h + lp_r
        a_h = self.human.mean(o_h)[0]
        a_r = self.robot.mean(o_r)[0]
        return np.concatenate([a_h, a_r]), 0.0

    def log_prob(self, joint_obs, joint_act):
        o_h, o_r = self.split_obs(joint_obs)
        a_h, a_r = self.split_action(joint_act)
        return self.human.log_prob(o_h, a_h) + self.robot.log_prob(o_r, a_r)

    def distribution(self, joint_obs):
        o_h, o_r = self.split_obs(joint_obs)
        mu_h, ls_h = self.human.distribution(o_h)
        mu_r, ls_r = self.robot.distribution(o_r)
        return (np.concatenate([mu_h, mu_r], axis=1),
                np.concatenate([ls_h, ls_r], axis=1))

    def parts(self):
        """(policy, obs slice, act slice, param offset) per agent."""
        return (
            (self.human, slice(0, self.obs_split), slice(0, self.act_split), 0),
            (self.robot, slice(self.obs_split, None), slice(self.act_split, None),
             self.human.n_params),
        )


class ValueNet:
    """Shared state-value baseline over the joint observation.

    Targets are scaled by ``target_scale`` before fitting so the tanh body
    sees O(1) regression targets regardless of the reward magnitude.
    """

    def __init__(self, obs_dim, hidden=(128, 64), rng=None, target_scale=1e-3):
        self.mlp = Mlp((obs_dim, *hidden, 1), rng=rng)
        self.target_scale = float(target_scale)
        self.n_params = self.mlp.n_params

    def get_params(self):
        return self.mlp.params.copy()

    def set_params(self, flat):
        self.mlp.params[:] = flat

    def predict(self, obs):
        return self.mlp.forward(obs)[:, 0] / self.target_scale

    def fit(self, obs, targets, epochs, learning_rate):
        """Full-batch gradient descent on mean squared error.

        Returns the per-epoch loss curve (scaled space), length epochs + 1
        including the initial loss.
        """
        obs = np.atleast_2d(obs)
        y = np.asarray(targets, dtype=float) * self.target_scale
        n = y.shape[0]
        losses = []
        for _ in range(int(epochs)):
            pred = self.mlp.forward(obs)[:, 0]
            err = pred - y
            losses.append(float(np.mean(err * err)))
            grad = self.mlp.vjp(obs, (2.0 / n) * err[:, None])
            self.mlp.params -= learning_rate * grad
        pred = self.mlp.forward(obs)[:, 0]
        losses.append(float(np.mean((pred - y) ** 2)))
        return losses
