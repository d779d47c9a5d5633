"""Textbook reference optimizers used as independent trajectory oracles.

These are the plainest possible update loops, written against a gradient
callback and sharing no code with the stepping engine, so preset
configurations can be compared against them trajectory-for-trajectory.
Weight decay is decoupled and multiplicative, applied before the update
with the gradient taken at the pre-decay point.
"""

from __future__ import annotations

import numpy as np

REFERENCE_NAMES = ("sgd", "heavyball", "adam_nobc", "lion")


def sgd_trajectory(grad_fn, theta0, lr, steps, weight_decay=0.0):
    theta = np.array(theta0, dtype=np.float64)
    out = [theta.copy()]
    for _ in range(steps):
        g = grad_fn(theta)
        if weight_decay != 0.0:
            theta = theta * (1.0 - lr * weight_decay)
        theta = theta - lr * g
        out.append(theta.copy())
    return np.array(out)


def heavyball_trajectory(grad_fn, theta0, lr, momentum, steps, weight_decay=0.0):
    theta = np.array(theta0, dtype=np.float64)
    u = np.zeros_like(theta)
    out = [theta.copy()]
    for _ in range(steps):
        g = grad_fn(theta)
        if weight_decay != 0.0:
            theta = theta * (1.0 - lr * weight_decay)
        u = momentum * u + g
        theta = theta - lr * u
        out.append(theta.copy())
    return np.array(out)


def adam_nobc_trajectory(
    grad_fn, theta0, lr, steps, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0
):
    """Adam without bias correction, decoupled weight decay."""
    theta = np.array(theta0, dtype=np.float64)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    out = [theta.copy()]
    for _ in range(steps):
        g = grad_fn(theta)
        if weight_decay != 0.0:
            theta = theta * (1.0 - lr * weight_decay)
        v = beta2 * v + (1.0 - beta2) * g * g
        m = beta1 * m + (1.0 - beta1) * g
        theta = theta - lr * m / (np.sqrt(v) + eps)
        out.append(theta.copy())
    return np.array(out)


def lion_trajectory(
    grad_fn, theta0, lr, steps, beta1=0.9, beta2=0.99, weight_decay=0.0
):
    """Sign of the beta1-blended moment; the moment itself decays with beta2."""
    theta = np.array(theta0, dtype=np.float64)
    m = np.zeros_like(theta)
    out = [theta.copy()]
    for _ in range(steps):
        g = grad_fn(theta)
        if weight_decay != 0.0:
            theta = theta * (1.0 - lr * weight_decay)
        c = beta1 * m + (1.0 - beta1) * g
        theta = theta - lr * np.sign(c)
        m = beta2 * m + (1.0 - beta2) * g
        out.append(theta.copy())
    return np.array(out)


def reference_oracle(name, hyper, grad_fn, theta0, steps):
    """Dispatch a named reference loop; returns the (steps+1, dim) trajectory."""
    hyper = dict(hyper or {})
    if name == "sgd":
        return sgd_trajectory(
            grad_fn, theta0, hyper["lr"], steps, hyper.get("weight_decay", 0.0)
        )
    if name == "heavyball":
        return heavyball_trajectory(
            grad_fn, theta0, hyper["lr"], hyper["momentum"], steps,
            hyper.get("weight_decay", 0.0),
        )
    if name == "adam_nobc":
        return adam_nobc_trajectory(
            grad_fn, theta0, hyper["lr"], steps,
            beta1=hyper.get("beta1", 0.9), beta2=hyper.get("beta2", 0.999),
            eps=hyper.get("eps", 1e-8), weight_decay=hyper.get("weight_decay", 0.0),
        )
    if name == "lion":
        return lion_trajectory(
            grad_fn, theta0, hyper["lr"], steps,
            beta1=hyper.get("beta1", 0.9), beta2=hyper.get("beta2", 0.99),
            weight_decay=hyper.get("weight_decay", 0.0),
        )
    raise ValueError(f"unknown reference optimizer {name!r}")
