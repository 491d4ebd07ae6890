"""Weight-normalized SELU multilayer perceptron classifier target.

The network is built from weight-normalized linear features: each feature
vector is stored as a direction ``phi_d`` and a scale ``phi_s`` and enters
the forward pass as ``phi_s * phi_d / ||phi_d||``, so model outputs are
invariant to positive rescaling of any direction.  Hidden layers apply the
SELU activation; optional residual layers (equal in/out width) compute
``x + W2 selu(W1 x + b1) + b2`` with the branch-final scales initialized
to a small constant so that fresh residual branches start as near
identities.

Priors (all contribute to the negative log joint and its gradient):

* directions: unit-length attractor, neglog p = (s/2) (||phi_d||^2 - 1)^2
  with stiffness ``s`` defaulting to the direction dimensionality;
* scales: group Laplace per layer, neglog p = ||phi_s|| / b;
* biases: broad Gaussian, neglog p = ||bias||^2 / (2 var).

Differentiation is hand-written reverse-mode over this fixed topology; the
test suite pins every piece against central finite differences.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateDirectionError

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

_ORIGIN_GUARD = 1e-12  # subgradient choice at the group-Laplace kink


def selu(x):
    """Self-normalizing activation lambda * (x if x > 0 else alpha (e^x - 1))."""
    arr = np.asarray(x, dtype=np.float64)
    out = SELU_LAMBDA * np.where(arr > 0, arr, SELU_ALPHA * np.expm1(np.minimum(arr, 0.0)))
    return float(out) if np.isscalar(x) else out


def selu_grad(x):
    """Derivative of :func:`selu`; strictly positive everywhere."""
    arr = np.asarray(x, dtype=np.float64)
    out = SELU_LAMBDA * np.where(arr > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(arr, 0.0)))
    return float(out) if np.isscalar(x) else out


def weightnorm_feature(phi_d, phi_s):
    """Feature vector phi_s * phi_d / ||phi_d||; its norm equals |phi_s|."""
    phi_d = np.asarray(phi_d, dtype=np.float64)
    norm = np.linalg.norm(phi_d)
    if norm == 0.0:
        raise DegenerateDirectionError("direction vector has zero norm")
    return float(phi_s) * phi_d / norm


def direction_prior_grad(phi_d, d_strength):
    """Gradient of the negative log unit-length prior: 2 s (||phi||^2 - 1) phi."""
    phi_d = np.asarray(phi_d, dtype=np.float64)
    sq = float(np.dot(phi_d, phi_d))
    return 2.0 * d_strength * (sq - 1.0) * phi_d


def group_laplace_grad(theta_group, b):
    """Gradient of ||theta|| / b, with the zero subgradient at the origin."""
    if b <= 0:
        raise ConfigError(f"group Laplace scale must be positive, got {b}")
    theta_group = np.asarray(theta_group, dtype=np.float64)
    norm = np.linalg.norm(theta_group)
    return theta_group / (b * max(norm, _ORIGIN_GUARD))


def _rows_to_weights(phi_d, phi_s):
    norms = np.linalg.norm(phi_d, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateDirectionError(f"direction row {bad} has zero norm")
    return phi_s[:, None] * phi_d / norms[:, None], norms


def _weight_backward(d_weights, phi_d, phi_s, norms):
    unit = phi_d / norms[:, None]
    d_scale = np.sum(d_weights * unit, axis=1)
    d_dir = (phi_s / norms)[:, None] * (d_weights - d_scale[:, None] * unit)
    return d_dir, d_scale


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


@dataclass(frozen=True)
class _Linear:
    """Layout of one weight-normalized linear inside the flat parameter vector."""

    fan_in: int
    fan_out: int
    dir_slice: slice
    scale_slice: slice
    bias_slice: slice
    branch_final: bool  # second linear of a residual branch


class MlpClassifier:
    """Fixed-topology classifier; all parameters live in one flat vector."""

    def __init__(self, widths, residual=None, laplace_scale=5.0,
                 direction_strength=None, bias_prior_var=100.0):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2 or any(w <= 0 for w in widths):
            raise ConfigError(f"widths must be >= 2 positive integers, got {widths}")
        n_layers = len(widths) - 1
        residual = tuple(bool(r) for r in (residual or (False,) * n_layers))
        if len(residual) != n_layers:
            raise ConfigError(
                f"residual flags ({len(residual)}) must match weight layers ({n_layers})"
            )
        if residual[-1]:
            raise ConfigError("the output layer cannot be residual")
        for i, flag in enumerate(residual):
            if flag and widths[i] != widths[i + 1]:
                raise ConfigError(
                    f"residual layer {i} needs equal widths, got {widths[i]} -> {widths[i+1]}"
                )
        if laplace_scale <= 0 or bias_prior_var <= 0:
            raise ConfigError("prior scales must be positive")
        self.widths = widths
        self.residual = residual
        self.laplace_scale = float(laplace_scale)
        self.direction_strength = direction_strength
        self.bias_prior_var = float(bias_prior_var)
        self._linears: list[_Linear] = []
        self._layers = []  # per weight layer: ("plain"|"residual"|"logits", linear indices)
        offset = 0

        def add_linear(fan_in, fan_out, branch_final=False):
            nonlocal offset
            d = slice(offset, offset + fan_out * fan_in)
            offset = d.stop
            s = slice(offset, offset + fan_out)
            offset = s.stop
            b = slice(offset, offset + fan_out)
            offset = b.stop
            self._linears.append(_Linear(fan_in, fan_out, d, s, b, branch_final))
            return len(self._linears) - 1

        for i in range(n_layers):
            fan_in, fan_out = widths[i], widths[i + 1]
            if residual[i]:
                first = add_linear(fan_in, fan_out)
                second = add_linear(fan_out, fan_out, branch_final=True)
                self._layers.append(("residual", (first, second)))
            elif i == n_layers - 1:
                self._layers.append(("logits", (add_linear(fan_in, fan_out),)))
            else:
                self._layers.append(("plain", (add_linear(fan_in, fan_out),)))
        self.n_params = offset

    @property
    def n_features(self):
        return self.widths[0]

    @property
    def n_classes(self):
        return self.widths[-1]

    def _check_theta(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ConfigError(
                f"parameter vector has shape {theta.shape}, expected ({self.n_params},)"
            )
        return theta

    def _tensors(self, theta, lin: _Linear):
        phi_d = theta[lin.dir_slice].reshape(lin.fan_out, lin.fan_in)
        phi_s = theta[lin.scale_slice]
        bias = theta[lin.bias_slice]
        return phi_d, phi_s, bias

    def init_params(self, rng, branch_scale=0.1):
        """Direction rows drawn then normalized to unit length; scales 1
        except branch-final ones, which get ``branch_scale``; biases 0."""
        rng = np.random.default_rng(rng)
        theta = np.zeros(self.n_params)
        for lin in self._linears:
            rows = rng.standard_normal((lin.fan_out, lin.fan_in))
            rows /= np.linalg.norm(rows, axis=1, keepdims=True)
            theta[lin.dir_slice] = rows.ravel()
            theta[lin.scale_slice] = branch_scale if lin.branch_final else 1.0
        return theta

    def _forward(self, theta, x, keep_cache):
        theta = self._check_theta(theta)
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.n_features:
            raise ConfigError(
                f"inputs have {x.shape[1]} features, model expects {self.n_features}"
            )
        cache = []
        act = x
        for layer_idx, (kind, lin_ids) in enumerate(self._layers):
            if kind == "residual":
                lin1 = self._linears[lin_ids[0]]
                lin2 = self._linears[lin_ids[1]]
                d1, s1, b1 = self._tensors(theta, lin1)
                d2, s2, b2 = self._tensors(theta, lin2)
                w1, n1 = _rows_to_weights(d1, s1)
                w2, n2 = _rows_to_weights(d2, s2)
                pre = act @ w1.T + b1
                hidden = selu(pre)
                out = act + hidden @ w2.T + b2
                if keep_cache:
                    cache.append((kind, layer_idx, act, pre, hidden, (w1, n1), (w2, n2)))
                act = out
            else:
                lin = self._linears[lin_ids[0]]
                d, s, b = self._tensors(theta, lin)
                w, n = _rows_to_weights(d, s)
                pre = act @ w.T + b
                if keep_cache:
                    cache.append((kind, layer_idx, act, pre, None, (w, n), None))
                act = pre if kind == "logits" else selu(pre)
        return act, cache

    def forward(self, theta, x):
        """Logits for a batch of inputs."""
        logits, _ = self._forward(theta, x, keep_cache=False)
        return logits

    def predict(self, theta, x):
        """Class probabilities (softmax over logits); rows sum to one."""
        return np.exp(_log_softmax(self.forward(theta, x)))

    def nll_sum(self, theta, x, labels):
        """Sum over examples of -log p(label | input, theta)."""
        logp = _log_softmax(self.forward(theta, x))
        labels = np.asarray(labels, dtype=np.int64)
        return float(-np.sum(logp[np.arange(labels.size), labels]))

    def nll_gradient(self, theta, x, labels):
        """Flat gradient of :meth:`nll_sum` over the given examples."""
        theta = self._check_theta(theta)
        labels = np.asarray(labels, dtype=np.int64)
        logits, cache = self._forward(theta, x, keep_cache=True)
        probs = np.exp(_log_softmax(logits))
        d_act = probs
        d_act[np.arange(labels.size), labels] -= 1.0
        grad = np.zeros_like(theta)
        for kind, layer_idx, act_in, pre, hidden, first, second in reversed(cache):
            lin_ids = self._layers[layer_idx][1]
            if kind == "residual":
                lin1, lin2 = self._linears[lin_ids[0]], self._linears[lin_ids[1]]
                w2, n2 = second
                d2, s2, _ = self._tensors(theta, lin2)
                d_w2 = d_act.T @ hidden
                d_b2 = d_act.sum(axis=0)
                d_hidden = d_act @ w2
                dd2, ds2 = _weight_backward(d_w2, d2, s2, n2)
                grad[lin2.dir_slice] += dd2.ravel()
                grad[lin2.scale_slice] += ds2
                grad[lin2.bias_slice] += d_b2
                d_pre = d_hidden * selu_grad(pre)
                w1, n1 = first
                d1, s1, _ = self._tensors(theta, lin1)
                d_w1 = d_pre.T @ act_in
                d_b1 = d_pre.sum(axis=0)
                dd1, ds1 = _weight_backward(d_w1, d1, s1, n1)
                grad[lin1.dir_slice] += dd1.ravel()
                grad[lin1.scale_slice] += ds1
                grad[lin1.bias_slice] += d_b1
                d_act = d_act + d_pre @ w1  # skip connection + branch path
            else:
                d_pre = d_act * selu_grad(pre) if kind == "plain" else d_act
                lin = self._linears[lin_ids[0]]
                w, n = first
                d, s, _ = self._tensors(theta, lin)
                d_w = d_pre.T @ act_in
                d_b = d_pre.sum(axis=0)
                dd, ds = _weight_backward(d_w, d, s, n)
                grad[lin.dir_slice] += dd.ravel()
                grad[lin.scale_slice] += ds
                grad[lin.bias_slice] += d_b
                d_act = d_pre @ w
        return grad

    def _direction_stiffness(self, lin: _Linear):
        return self.direction_strength if self.direction_strength is not None else lin.fan_in

    def prior_neglog(self, theta):
        theta = self._check_theta(theta)
        total = 0.0
        for lin in self._linears:
            phi_d, phi_s, bias = self._tensors(theta, lin)
            stiffness = self._direction_stiffness(lin)
            sq = np.sum(phi_d * phi_d, axis=1)
            total += 0.5 * stiffness * np.sum((sq - 1.0) ** 2)
            total += np.linalg.norm(phi_s) / self.laplace_scale
            total += 0.5 * np.dot(bias, bias) / self.bias_prior_var
        return float(total)

    def prior_gradient(self, theta):
        theta = self._check_theta(theta)
        grad = np.zeros_like(theta)
        for lin in self._linears:
            phi_d, phi_s, bias = self._tensors(theta, lin)
            stiffness = self._direction_stiffness(lin)
            sq = np.sum(phi_d * phi_d, axis=1)
            grad[lin.dir_slice] = (2.0 * stiffness * (sq - 1.0)[:, None] * phi_d).ravel()
            grad[lin.scale_slice] = group_laplace_grad(phi_s, self.laplace_scale)
            grad[lin.bias_slice] = bias / self.bias_prior_var
        return grad


class MlpTarget:
    """Classifier + dataset bound into the target interface."""

    def __init__(self, model: MlpClassifier, x, y, branch_scale=0.1):
        self.model = model
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.int64)
        if self.x.ndim != 2 or self.x.shape[0] != self.y.shape[0]:
            raise ConfigError("dataset features and labels do not line up")
        if self.x.shape[1] != model.n_features:
            raise ConfigError(
                f"dataset has {self.x.shape[1]} features, model expects {model.n_features}"
            )
        if np.any(self.y < 0) or np.any(self.y >= model.n_classes):
            raise ConfigError(f"labels must lie in [0, {model.n_classes})")
        self.branch_scale = float(branch_scale)

    @property
    def dim(self):
        return self.model.n_params

    @property
    def n_examples(self):
        return self.x.shape[0]

    def initial_position(self, rng):
        return self.model.init_params(rng, self.branch_scale)

    def minibatch_gradient(self, theta, idx):
        idx = np.asarray(idx)
        scale = self.n_examples / idx.size
        grad = scale * self.model.nll_gradient(theta, self.x[idx], self.y[idx])
        return grad + self.model.prior_gradient(theta)

    def full_gradient(self, theta):
        return self.minibatch_gradient(theta, np.arange(self.n_examples))

    def log_joint(self, theta):
        return -(self.model.nll_sum(theta, self.x, self.y) + self.model.prior_neglog(theta))

    def predict(self, theta, x):
        return self.model.predict(theta, x)
