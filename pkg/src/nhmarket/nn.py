"""Small fully connected network with hand-written backpropagation."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

OUTPUT_ACTIVATIONS = ("identity", "tanh")


class Mlp:
    """ReLU hidden layers, identity or tanh output.

    Weights are stored as ``(fan_in, fan_out)`` matrices so that a batch of
    row vectors ``x`` maps to ``x @ W + b``.
    """

    def __init__(
        self,
        sizes: Sequence[int],
        output: str = "identity",
        rng: Optional[np.random.Generator] = None,
        final_scale: float = 3e-3,
    ):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if output not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"output activation must be one of {OUTPUT_ACTIVATIONS}")
        self.sizes = [int(s) for s in sizes]
        self.output = output
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights, self.biases = [], []
        last = len(self.sizes) - 2
        for k, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = final_scale if k == last else 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, fan_out))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def num_params(self) -> int:
        return sum((i + 1) * o for i, o in zip(self.sizes[:-1], self.sizes[1:]))

    def copy(self) -> "Mlp":
        clone = Mlp.__new__(Mlp)
        clone.sizes = list(self.sizes)
        clone.output = self.output
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def forward(self, x, keep: bool = False):
        """Evaluate on a batch; with ``keep`` also return the activations needed by ``backward``."""
        a = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [a]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            if k < last:
                a = np.maximum(z, 0.0)
            elif self.output == "tanh":
                a = np.tanh(z)
            else:
                a = z
            acts.append(a)
        return (a, acts) if keep else a

    def backward(self, acts, grad_out):
        """Gradients of ``sum(grad_out * output)`` w.r.t. parameters and input.

        Returns ``(param_grads, grad_input)`` with ``param_grads`` ordered like
        ``params``.
        """
        g = np.asarray(grad_out, dtype=float)
        if self.output == "tanh":
            g = g * (1.0 - acts[-1] ** 2)
        grads = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            grads[2 * k] = acts[k].T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.weights[k].T
            if k > 0:
                g = g * (acts[k] > 0)
        return grads, g

    def soft_update(self, source: "Mlp", tau: float):
        for dst, src in zip(self.params, source.params):
            dst *= 1.0 - tau
            dst += tau * src

    def set_params(self, flat_params: Sequence[np.ndarray]):
        for dst, src in zip(self.params, flat_params):
            dst[...] = src


class Adam:
    """Adam with a constant step size."""

    def __init__(self, params: Sequence[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def save_networks(path, nets: dict[str, Mlp]):
    """Plain-text checkpoint: one section per network, sizes header then row-major values."""
    with open(path, "w") as fh:
        fh.write("# nhmarket checkpoint v1\n")
        for name, net in nets.items():
            fh.write(f"net {name} {net.output} {' '.join(map(str, net.sizes))}\n")
            for w, b in zip(net.weights, net.biases):
                for row in w:
                    fh.write(" ".join(repr(float(v)) for v in row) + "\n")
                fh.write(" ".join(repr(float(v)) for v in b) + "\n")


def load_networks(path) -> dict[str, Mlp]:
    try:
        return _parse_networks(path)
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed checkpoint {path}: {exc}") from None


def _parse_networks(path) -> dict[str, Mlp]:
    nets = {}
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    i = 0
    while i < len(lines):
        head = lines[i].split()
        if head[0] != "net":
            raise ValueError(f"malformed checkpoint at line {i}: {lines[i][:40]!r}")
        name, output, sizes = head[1], head[2], [int(s) for s in head[3:]]
        i += 1
        net = Mlp.__new__(Mlp)
        net.sizes, net.output, net.weights, net.biases = sizes, output, [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = np.array([[float(v) for v in lines[i + r].split()] for r in range(fan_in)])
            i += fan_in
            b = np.array([float(v) for v in lines[i].split()])
            i += 1
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ValueError(f"checkpoint network {name!r} does not match its header")
            net.weights.append(w)
            net.biases.append(b)
        nets[name] = net
    return nets
