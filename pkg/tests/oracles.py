"""Shared independent oracles for the unit and acceptance suites."""

import math

import numpy as np

from yoho.label_codec import Event
from yoho.loss import yoho_loss, yoho_loss_grad
from yoho.network.layers import (AddChannel, BatchNorm, Conv1D, Conv2D, DepthwiseConv2D,
                                 FlattenFreq, MaxPoolFreq, ReLU, Sigmoid, SpatialDropout)
from yoho.network.model import ArchConfig, Network


def mini_network(seed=0, l2=0.0, dropout=0.0):
    """Two convolutions plus every other layer kind, 64-bit, on an 8 x 8 input."""
    rng = np.random.default_rng(seed)
    f64 = np.float64
    layers = [
        AddChannel(),
        Conv2D(1, 3, (3, 3), (2, 2), l2=l2, rng=rng, dtype=f64),
        BatchNorm(3, dtype=f64),
        ReLU(),
        DepthwiseConv2D(3, (3, 3), (2, 2), rng=rng, dtype=f64),
        BatchNorm(3, dtype=f64),
        ReLU(),
        Conv2D(3, 4, (1, 1), (1, 1), l2=l2, rng=rng, dtype=f64),
        MaxPoolFreq(),
    ]
    if dropout:
        layers.append(SpatialDropout(dropout, np.random.default_rng(seed + 1)))
    layers += [FlattenFreq(), Conv1D(4, 6, rng=rng, dtype=f64), Sigmoid()]
    return Network(layers, ArchConfig("yoho", 8, 8, 2))


def relative_error(a, b, floor=1e-5):
    # the floor sits above central-difference round-off (~machine eps * loss / eps)
    return abs(a - b) / max(abs(a), abs(b), floor)


def gradcheck(net, x, target, probes, rng, eps=1e-5):
    """Compare analytic and central-difference gradients of
    ``yoho_loss + l2_penalty`` at ``probes`` random parameter coordinates.
    Returns the list of relative errors."""
    dropouts = [layer for layer in net.layers if isinstance(layer, SpatialDropout)]
    state = [d.rng.bit_generator.state for d in dropouts]

    def run(backward=False):
        for d, s in zip(dropouts, state):
            d.rng.bit_generator.state = s
        pred = net.forward(x, training=True)
        loss = yoho_loss(pred, target).total + net.l2_penalty()
        grads = net.backward(yoho_loss_grad(pred, target)) if backward else None
        return loss, grads

    _, grads = run(backward=True)
    params = list(net.named_parameters())
    errors = []
    for _ in range(probes):
        key, layer, name, value = params[rng.integers(len(params))]
        idx = tuple(int(rng.integers(n)) for n in value.shape)
        orig = value[idx]
        value[idx] = orig + eps
        up, _ = run()
        value[idx] = orig - eps
        down, _ = run()
        value[idx] = orig
        numeric = (up - down) / (2 * eps)
        errors.append(relative_error(grads[key][idx], numeric))
    return errors


def random_target(rng, steps, classes):
    t = np.zeros((steps, classes, 3))
    t[..., 0] = rng.random((steps, classes)) < 0.5
    lo = rng.random((steps, classes)) * 0.5
    t[..., 1] = lo * t[..., 0]
    t[..., 2] = (lo + 0.5) * t[..., 0]
    return t.reshape(steps, 3 * classes)


def bruteforce_segments(reference, estimate, seg, total, classes):
    """Independent oracle: rasterize by scanning each segment and each event."""
    k = math.ceil(round(total / seg, 9))
    tp = fp = fn = s = d = i = n = 0
    for j in range(k):
        lo, hi = j * seg, (j + 1) * seg
        act = lambda evs, c: any(e.class_name == c and min(e.offset, hi) - max(e.onset, lo) > 1e-12
                                 for e in evs)
        fn_k = fp_k = 0
        for c in classes:
            r, e = act(reference, c), act(estimate, c)
            tp += r and e
            fp += e and not r
            fn += r and not e
            fn_k += r and not e
            fp_k += e and not r
            n += r
        s += min(fn_k, fp_k)
        d += max(0, fn_k - fp_k)
        i += max(0, fp_k - fn_k)
    return tp, fp, fn, s, d, i, n


def random_events(rng, n=10, classes=("a", "b", "c"), span=20.0):
    out = []
    for _ in range(n):
        onset = rng.uniform(0, span - 0.1)
        out.append(Event(rng.choice(classes), onset, min(span, onset + rng.uniform(0.05, 4))))
    return out
