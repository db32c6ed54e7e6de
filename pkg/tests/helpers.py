import itertools

import numpy as np

from ngr.network import MlpParams, init_mlp, loss

FD_STEP = 1e-5
# smallest |pre-activation| or |weight| tolerated near a kink when checking gradients
KINK_MARGIN = 1e-3


def numeric_gradients(mlp: MlpParams, x, pw, masks=None, h=FD_STEP):
    """Central finite differences of the total loss for every parameter."""
    out = []
    for arrays in (mlp.weights, mlp.biases):
        grads = []
        for a in arrays:
            g = np.zeros_like(a)
            for idx in np.ndindex(a.shape):
                orig = a[idx]
                a[idx] = orig + h
                fp = loss(mlp, x, pw, masks).total
                a[idx] = orig - h
                fm = loss(mlp, x, pw, masks).total
                a[idx] = orig
                g[idx] = (fp - fm) / (2 * h)
            grads.append(g)
        out.append(grads)
    return out[0], out[1]


def max_relative_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for a_list, n_list in zip(analytic, numeric):
        for a, n in zip(a_list, n_list):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
            worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def away_from_kinks(mlp: MlpParams, x) -> bool:
    """True if no ReLU pre-activation and no weight sits within KINK_MARGIN of 0."""
    if any(np.abs(w).min() < KINK_MARGIN for w in mlp.weights):
        return False
    h = np.asarray(x, dtype=float)
    for w, b, act in zip(mlp.weights, mlp.biases, mlp.relu):
        z = h @ w.T + b
        if act and np.abs(z).min() < KINK_MARGIN:
            return False
        h = np.maximum(z, 0.0) if act else z
    return True


def random_net(rng, d, hidden, seed):
    mlp = init_mlp([d, *hidden, d], seed)
    for b in mlp.biases:
        b[:] = 0.1 * rng.normal(size=b.shape)
    return mlp


def identity_net(d: int) -> MlpParams:
    """Two-layer net computing x exactly: relu(x) - relu(-x) routed through 2d hidden units."""
    w1 = np.vstack([np.eye(d), -np.eye(d)])
    w2 = np.hstack([np.eye(d), -np.eye(d)])
    return MlpParams([d, 2 * d, d], [w1, w2], [np.zeros(2 * d), np.zeros(d)])


def enumerate_paths(weights):
    """Brute-force path sums: for every (input, output) pair, add up the
    product of |w| along every hidden-unit sequence."""
    dims = [weights[0].shape[1]] + [w.shape[0] for w in weights]
    s = np.zeros((dims[-1], dims[0]))
    for i in range(dims[0]):
        for o in range(dims[-1]):
            total = 0.0
            for hidden in itertools.product(*[range(d) for d in dims[1:-1]]):
                units = (i, *hidden, o)
                prod = 1.0
                for l, w in enumerate(weights):
                    prod *= abs(w[units[l + 1], units[l]])
                total += prod
            s[o, i] = total
    return s
