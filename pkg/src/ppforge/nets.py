"""Small ELU MLPs with hand-rolled exact gradients, Adam, and checkpoints.

Everything works on flat float64 parameter vectors so optimizers and
checkpoints stay trivial. The gradient-penalty helper returns the exact
parameter gradient of mean ||d output / d input||^2 via a forward tangent
pass followed by a reverse pass through the augmented computation; no
finite differences anywhere.
"""

from __future__ import annotations

import json

import numpy as np

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0

CKPT_MAGIC = "ppforge-ckpt v1"


# ---- activations ------------------------------------------------------------

def elu(z):
    return np.where(z > 0, z, np.expm1(z))


def elu_d1(z):
    return np.where(z > 0, 1.0, np.exp(z))


def elu_d2(z):
    return np.where(z > 0, 0.0, np.exp(z))


# ---- layered MLP over a flat parameter vector -------------------------------

class MlpSpec:
    """Layer widths [in, h1, ..., out]; linear output, ELU hidden units."""

    def __init__(self, widths):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError("need at least input and output widths, all positive")
        self.widths = widths
        self.slices = []
        off = 0
        for i in range(len(widths) - 1):
            fan_in, fan_out = widths[i], widths[i + 1]
            w_sl = slice(off, off + fan_out * fan_in)
            off += fan_out * fan_in
            b_sl = slice(off, off + fan_out)
            off += fan_out
            self.slices.append((w_sl, b_sl, (fan_out, fan_in)))
        self.size = off

    @property
    def n_layers(self):
        return len(self.slices)

    def unpack(self, params):
        if params.shape != (self.size,):
            raise ValueError("parameter vector has wrong length")
        out = []
        for w_sl, b_sl, shape in self.slices:
            out.append((params[w_sl].reshape(shape), params[b_sl]))
        return out

    def pack_grads(self, per_layer):
        g = np.empty(self.size)
        for (w_sl, b_sl, shape), (gw, gb) in zip(self.slices, per_layer):
            g[w_sl] = gw.reshape(-1)
            g[b_sl] = gb
        return g


def init_mlp(rng, spec: MlpSpec, out_gain: float = 1.0) -> np.ndarray:
    """Orthogonal weights (sign-fixed QR), zero biases."""
    params = np.zeros(spec.size)
    n = spec.n_layers
    for i, (w_sl, b_sl, shape) in enumerate(spec.slices):
        fan_out, fan_in = shape
        a = rng.standard_normal((max(shape), min(shape)))
        q, r = np.linalg.qr(a)
        q = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))
        w = q if fan_out >= fan_in else q.T
        gain = out_gain if i == n - 1 else np.sqrt(2.0)
        params[w_sl] = (gain * w[:fan_out, :fan_in]).reshape(-1)
    return params


def mlp_forward(spec: MlpSpec, params, x):
    """Returns (output, cache); cache feeds the backward passes."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    layers = spec.unpack(params)
    acts = [x]
    zs = []
    a = x
    for i, (w, b) in enumerate(layers):
        z = a @ w.T + b
        zs.append(z)
        a = elu(z) if i < len(layers) - 1 else z
        acts.append(a)
    return acts[-1], (acts, zs, layers)


def mlp_backward(spec: MlpSpec, cache, gy):
    """Grad of sum(gy * output) wrt params and input; gy is batch x out."""
    acts, zs, layers = cache
    n = len(layers)
    grads = [None] * n
    delta = np.asarray(gy, dtype=float)
    for i in range(n - 1, -1, -1):
        w, _ = layers[i]
        grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
        delta = delta @ w
        if i > 0:
            delta = delta * elu_d1(zs[i - 1])
    return spec.pack_grads(grads), delta


def mlp_input_grad(cache):
    """Per-sample gradient of a scalar output wrt the input, batch x in."""
    acts, zs, layers = cache
    if layers[-1][0].shape[0] != 1:
        raise ValueError("input gradient is defined for scalar-output nets")
    u = np.ones((acts[0].shape[0], 1))
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        u = u @ w
        if i > 0:
            u = u * elu_d1(zs[i - 1])
    return u


def penalty_and_grads(spec: MlpSpec, params, x, unsquared: bool = False):
    """Exact value and parameter gradient of the input-gradient penalty.

    penalty = mean_b ||g_b||^2 with g_b = d output_b / d x_b (or mean ||g_b||
    when unsquared). The parameter gradient is the reverse pass through the
    computation of the directional derivative of the output along stopgrad(g):
    a forward tangent sweep produces the per-layer tangents, then one adjoint
    sweep accumulates both the primal- and tangent-path contributions.
    """
    _, cache = mlp_forward(spec, params, x)
    acts, zs, layers = cache
    batch = acts[0].shape[0]
    g = mlp_input_grad(cache)

    if unsquared:
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        penalty = float(norms.mean())
        v = np.where(norms > 1e-12, g / np.maximum(norms, 1e-12), 0.0)
        seed = 1.0 / batch
    else:
        penalty = float((g * g).sum(axis=1).mean())
        v = g
        seed = 2.0 / batch

    # forward tangent pass with input tangent v
    n = len(layers)
    a_dot = [v]
    z_dot = []
    t = v
    for i, (w, _) in enumerate(layers):
        zt = t @ w.T
        z_dot.append(zt)
        t = zt if i == n - 1 else elu_d1(zs[i]) * zt
        a_dot.append(t)

    # adjoint sweep; u_bar follows the tangent path, g_bar the primal path
    u_bar = np.full((batch, layers[-1][0].shape[0]), seed)
    g_bar = np.zeros_like(u_bar)
    grads = [None] * n
    for i in range(n - 1, -1, -1):
        w, _ = layers[i]
        gw = g_bar.T @ acts[i] + u_bar.T @ a_dot[i]
        gb = g_bar.sum(axis=0)
        grads[i] = (gw, gb)
        if i == 0:
            break
        u_w = u_bar @ w
        g_w = g_bar @ w
        d1 = elu_d1(zs[i - 1])
        u_bar = d1 * u_w
        g_bar = d1 * g_w + elu_d2(zs[i - 1]) * z_dot[i - 1] * u_w
    return penalty, spec.pack_grads(grads)


def clip_grad_norm(g, max_norm):
    norm = float(np.linalg.norm(g))
    if max_norm > 0 and norm > max_norm:
        return g * (max_norm / norm), norm
    return g, norm


# ---- optimizer ---------------------------------------------------------------

class Adam:
    """Adam with decoupled weight decay applied before the moment update."""

    def __init__(self, size, lr, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        if self.weight_decay > 0:
            params = params * (1.0 - self.lr * self.weight_decay)
        self.m = self.beta1 * self.m + (1 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1 - self.beta2) * grads * grads
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self):
        return {"m": self.m, "v": self.v, "t": self.t, "lr": self.lr}

    def load_state(self, st):
        self.m = np.asarray(st["m"], dtype=float)
        self.v = np.asarray(st["v"], dtype=float)
        self.t = int(st["t"])
        self.lr = float(st["lr"])


# ---- diagonal Gaussian action head -------------------------------------------

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def gaussian_log_prob(mean, log_std, actions):
    log_std = np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    inv_std = np.exp(-log_std)
    z = (actions - mean) * inv_std
    return -0.5 * (z * z).sum(axis=-1) - log_std.sum() - mean.shape[-1] * _HALF_LOG_2PI


def gaussian_entropy(log_std):
    log_std = np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    return float(np.sum(log_std + 0.5 + _HALF_LOG_2PI))


def gaussian_sample(rng, mean, log_std):
    """Raw sample, its log-prob, and the [-1, 1]-clamped copy sent to the env."""
    log_std = np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    noise = rng.standard_normal(mean.shape)
    raw = mean + np.exp(log_std) * noise
    logp = gaussian_log_prob(mean, log_std, raw)
    return raw, logp, np.clip(raw, -1.0, 1.0)


# ---- text checkpoints ---------------------------------------------------------

def save_checkpoint(path, sections):
    """sections: {name: {key: ndarray | int | float | str | json-able dict}}."""
    lines = [CKPT_MAGIC]
    for name, payload in sections.items():
        lines.append("[%s]" % name)
        for key, val in payload.items():
            if isinstance(val, np.ndarray):
                flat = np.asarray(val, dtype=float).reshape(-1)
                dims = " ".join(str(d) for d in val.shape)
                lines.append("array %s %d %s" % (key, val.ndim, dims))
                for i in range(0, len(flat), 8):
                    lines.append(" ".join("%.17g" % x for x in flat[i:i + 8]))
            elif isinstance(val, dict):
                lines.append("json %s %s" % (key, json.dumps(val, sort_keys=True)))
            elif isinstance(val, bool):
                lines.append("%s = %s" % (key, "true" if val else "false"))
            elif isinstance(val, (int, np.integer)):
                lines.append("%s = %d" % (key, val))
            elif isinstance(val, (float, np.floating)):
                lines.append("%s = %.17g" % (key, val))
            elif isinstance(val, str):
                lines.append("%s = %s" % (key, val))
            else:
                raise TypeError("cannot serialize %r of type %s" % (key, type(val)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != CKPT_MAGIC:
        raise ValueError("%s: not a ppforge checkpoint (bad magic line)" % path)
    sections = {}
    current = None
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = {}
            sections[line[1:-1]] = current
            continue
        if current is None:
            raise ValueError("%s: content before first section, line %d" % (path, i))
        if line.startswith("array "):
            parts = line.split()
            key, ndim = parts[1], int(parts[2])
            shape = tuple(int(d) for d in parts[3:3 + ndim])
            count = int(np.prod(shape)) if shape else 1
            vals = []
            while len(vals) < count:
                vals.extend(float(x) for x in lines[i].split())
                i += 1
            current[key] = np.array(vals[:count]).reshape(shape)
        elif line.startswith("json "):
            _, key, blob = line.split(" ", 2)
            current[key] = json.loads(blob)
        elif " = " in line:
            key, _, raw = line.partition(" = ")
            if raw in ("true", "false"):
                current[key] = raw == "true"
            else:
                try:
                    current[key] = int(raw)
                except ValueError:
                    try:
                        current[key] = float(raw)
                    except ValueError:
                        current[key] = raw
        else:
            raise ValueError("%s: unparseable line %d: %r" % (path, i, line))
    return sections
