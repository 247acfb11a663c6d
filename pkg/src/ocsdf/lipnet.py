"""1-Lipschitz feed-forward networks built from orthogonally projected dense
layers and sorting activations.

A layer maps R^cols -> R^rows through ``x -> theta @ x + bias`` where ``theta``
is the orthogonal projection of an unconstrained weight matrix ``raw``. The
projection is computed with a fixed number of first-order iterations
(``theta <- 1.5*theta - 0.5*theta @ theta.T @ theta``) after dividing by a
power-iteration upper bound of the largest singular value, and gradients are
backpropagated through the unrolled iterations, so the unconstrained weights
can be trained directly.

Everything is float64; gradient checks at the 1e-4 level are not reachable in
float32.
"""

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

SPECTRAL_SAFETY = 1.01
SPECTRAL_FLOOR = 1e-12
DEFAULT_BJORCK_ITERATIONS = 15
DEFAULT_POWER_ITERATIONS = 30
ORTHOGONALITY_TOL = 1e-5


# ---------------------------------------------------------------------------
# spectral norm and orthogonal projection


def _power_iteration(W, iterations):
    """Power iteration on W^T W; returns (sigma_lower_estimate, u, v).

    The start vector is deterministic (ones plus a small ramp, so symmetric
    matrices with the all-ones vector in their null space do not stall).
    """
    rows, cols = W.shape
    v = np.ones(cols) + np.linspace(0.0, 0.5, cols)
    v /= np.sqrt(v @ v)
    for _ in range(iterations):
        u = W @ v
        nu = np.sqrt(u @ u)
        if nu < SPECTRAL_FLOOR:
            return 0.0, np.zeros(rows), v
        v = W.T @ (u / nu)
        nv = np.sqrt(v @ v)
        if nv < SPECTRAL_FLOOR:
            return 0.0, np.zeros(rows), np.zeros(cols)
        v /= nv
    u = W @ v
    sigma = np.sqrt(u @ u)
    if sigma < SPECTRAL_FLOOR:
        return 0.0, np.zeros(rows), v
    return float(sigma), u / sigma, v


def spectral_norm_upper(W, iterations=DEFAULT_POWER_ITERATIONS):
    """Upper estimate of the largest singular value of W.

    Power iteration converges to sigma_max from below; the result is inflated
    by a fixed safety factor so it can be used to pre-scale a matrix before
    orthogonal projection. A zero matrix yields a small positive floor rather
    than zero so division by the estimate is always safe.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.size == 0:
        raise ValueError("empty matrix")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    sigma, _, _ = _power_iteration(W, iterations)
    return max(SPECTRAL_SAFETY * sigma, SPECTRAL_FLOOR)


@dataclass
class BjorckTape:
    """Intermediates of one projection, kept for backpropagation."""

    raw: np.ndarray
    sigma: float
    u: np.ndarray
    v: np.ndarray
    at_floor: bool
    iterates: list
    grams: list
    theta: np.ndarray


def _bjorck_forward(W, iterations, power_iterations):
    sigma_pi, u, v = _power_iteration(W, power_iterations)
    sigma = SPECTRAL_SAFETY * sigma_pi
    at_floor = sigma < SPECTRAL_FLOOR
    if at_floor:
        sigma = SPECTRAL_FLOOR
    B = W / sigma
    iterates, grams = [], []
    for _ in range(iterations):
        S = B.T @ B
        iterates.append(B)
        grams.append(S)
        B = 1.5 * B - 0.5 * (B @ S)
    return B, BjorckTape(raw=W, sigma=sigma, u=u, v=v, at_floor=at_floor,
                         iterates=iterates, grams=grams, theta=B)


def _bjorck_backward(tape, d_theta):
    """Vector-Jacobian product of the projection, unrolled in reverse."""
    G = d_theta
    for B, S in zip(reversed(tape.iterates), reversed(tape.grams)):
        # d(B S) contributes G S + B (G^T B) + B B^T G; the two inner factors
        # are transposes of each other, so one GEMM serves both
        t = B.T @ G
        G = 1.5 * G - 0.5 * (G @ S + B @ (t + t.T))
    dW = G / tape.sigma
    if not tape.at_floor:
        # d sigma / dW = safety * u v^T at the converged singular pair
        coeff = float(np.sum(G * tape.raw)) / tape.sigma**2
        dW = dW - (coeff * SPECTRAL_SAFETY) * np.outer(tape.u, tape.v)
    return dW


def orthogonality_residual(theta):
    """Frobenius distance of theta @ theta.T (or theta.T @ theta) from I."""
    rows, cols = theta.shape
    if rows <= cols:
        gram = theta @ theta.T
        return float(np.linalg.norm(gram - np.eye(rows)))
    gram = theta.T @ theta
    return float(np.linalg.norm(gram - np.eye(cols)))


def bjorck_project(W, iterations=DEFAULT_BJORCK_ITERATIONS,
                   power_iterations=DEFAULT_POWER_ITERATIONS):
    """Nearest-orthogonal projection of W (polar factor in the limit).

    The input is pre-scaled by ``spectral_norm_upper`` so the iteration
    converges for any matrix; ill-conditioned inputs may still need more
    iterations, in which case the achieved residual is reported via a
    warning so callers can raise the count.
    """
    W = np.asarray(W, dtype=np.float64)
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    theta, _ = _bjorck_forward(W, iterations, power_iterations)
    residual = orthogonality_residual(theta)
    if residual > ORTHOGONALITY_TOL:
        logger.warning(
            "projection residual %.3e exceeds %.0e after %d iterations; "
            "input may be rank-deficient or need more iterations",
            residual, ORTHOGONALITY_TOL, iterations)
    return theta


# ---------------------------------------------------------------------------
# activations


def group_sort(v, group_size):
    """Sort each contiguous group of ``group_size`` entries ascending.

    FullSort is the ``group_size == len(v)`` case. The output is a
    permutation of the input, so the l2 norm is preserved exactly.
    """
    v = np.asarray(v, dtype=np.float64)
    if group_size < 1 or v.shape[-1] % group_size != 0:
        raise ValueError(
            f"vector length {v.shape[-1]} not divisible by group size {group_size}")
    shape = v.shape
    return np.sort(v.reshape(-1, group_size), axis=-1).reshape(shape)


def _group_sort_values(P, group_size):
    """Batched group sort, values only (inference path)."""
    n, width = P.shape
    if group_size == width:
        return np.sort(P, axis=-1)
    return np.sort(P.reshape(n, width // group_size, group_size),
                   axis=-1).reshape(n, width)


def _group_sort_batch(P, group_size):
    """Batched group sort with the permutation recorded for backprop.

    numpy's default introsort is deterministic for a fixed input, so the
    subgradient routing on exact ties is reproducible (ties are a
    measure-zero event).
    """
    n, width = P.shape
    if group_size == width:
        idx = np.argsort(P, axis=-1)
        return np.take_along_axis(P, idx, axis=-1), idx
    grouped = P.reshape(n, width // group_size, group_size)
    idx = np.argsort(grouped, axis=-1)
    out = np.take_along_axis(grouped, idx, axis=-1).reshape(n, width)
    return out, idx


def _group_sort_backward(d_out, idx):
    n, width = d_out.shape
    group_size = idx.shape[-1]
    if idx.ndim == 2:
        d_in = np.empty_like(d_out)
        np.put_along_axis(d_in, idx, d_out, axis=-1)
        return d_in
    grouped = d_out.reshape(n, width // group_size, group_size)
    d_in = np.empty_like(grouped)
    np.put_along_axis(d_in, idx, grouped, axis=-1)
    return d_in.reshape(n, width)


@dataclass(frozen=True)
class Activation:
    """GroupSort(group_size), FullSort, or Identity."""

    kind: str
    group_size: int | None = None

    _KINDS = ("groupsort", "fullsort", "identity")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind == "groupsort":
            if self.group_size is None or self.group_size < 1:
                raise ValueError("groupsort needs a positive group_size")

    def group_for_width(self, width):
        """Effective group size at a given layer width (None = no-op)."""
        if self.kind == "fullsort":
            return width if width > 1 else None
        if self.kind == "groupsort":
            if width % self.group_size != 0:
                raise ValueError(
                    f"width {width} not divisible by group size {self.group_size}")
            return self.group_size if self.group_size > 1 else None
        return None


# ---------------------------------------------------------------------------
# layers and network


class OrthoDense:
    """Dense layer with unconstrained weights projected to an orthogonal
    matrix on use. The projected matrix is cached and keyed to a version
    counter bumped on every raw-weight mutation."""

    def __init__(self, raw, bias=None, bjorck_iterations=DEFAULT_BJORCK_ITERATIONS,
                 power_iterations=DEFAULT_POWER_ITERATIONS):
        self.raw = np.array(raw, dtype=np.float64)
        if self.raw.ndim != 2 or self.raw.size == 0:
            raise ValueError("raw weights must be a non-empty matrix")
        self.bias = (np.zeros(self.rows) if bias is None
                     else np.array(bias, dtype=np.float64))
        if self.bias.shape != (self.rows,):
            raise ValueError(f"bias shape {self.bias.shape} != ({self.rows},)")
        self.bjorck_iterations = bjorck_iterations
        self.power_iterations = power_iterations
        self._version = 0
        self._theta = None
        self._theta_version = -1

    @property
    def rows(self):
        return self.raw.shape[0]

    @property
    def cols(self):
        return self.raw.shape[1]

    def mark_dirty(self):
        self._version += 1

    def theta(self):
        if self._theta_version != self._version:
            self._theta, _ = _bjorck_forward(
                self.raw, self.bjorck_iterations, self.power_iterations)
            self._theta_version = self._version
        return self._theta

    def project_with_tape(self):
        theta, tape = _bjorck_forward(
            self.raw, self.bjorck_iterations, self.power_iterations)
        self._theta = theta
        self._theta_version = self._version
        return tape


@dataclass
class ForwardTrace:
    """Per-layer inputs, pre-activations and sort permutations of one pass."""

    layer_inputs: list
    pre_activations: list
    sort_perms: list
    thetas: list
    biases: list
    score: float


def replay_trace(trace):
    """Recompute the forward pass from a trace, reusing the recorded
    permutations instead of re-sorting; bit-identical to the original."""
    H = trace.layer_inputs[0]
    for theta, bias, idx in zip(trace.thetas, trace.biases, trace.sort_perms):
        P = H @ theta.T + bias
        if idx is None:
            H = P
        elif idx.ndim == 2:
            H = np.take_along_axis(P, idx, axis=-1)
        else:
            n, width = P.shape
            grouped = P.reshape(n, idx.shape[1], idx.shape[2])
            H = np.take_along_axis(grouped, idx, axis=-1).reshape(n, width)
    return float(H[0, 0])


class LipNet:
    """Composition of (OrthoDense, Activation) pairs ending in a scalar."""

    def __init__(self, layers):
        if not layers:
            raise ValueError("network needs at least one layer")
        for (prev, _), (nxt, _) in zip(layers, layers[1:]):
            if nxt.cols != prev.rows:
                raise ValueError(
                    f"layer dims do not chain: {prev.rows} -> {nxt.cols}")
        if layers[-1][0].rows != 1:
            raise ValueError("last layer must have a single output")
        for layer, act in layers:
            act.group_for_width(layer.rows)  # raises on indivisible widths
        self.layers = list(layers)
        self.input_dim = layers[0][0].cols

    @classmethod
    def create(cls, input_dim, widths=(512, 512, 512, 512),
               activation=Activation("fullsort"),
               bjorck_iterations=DEFAULT_BJORCK_ITERATIONS,
               power_iterations=DEFAULT_POWER_ITERATIONS, rng=None):
        """Standard architecture: input -> widths... -> 1, orthogonal init,
        identity activation on the scalar output layer."""
        if rng is None:
            rng = np.random.default_rng(0)
        dims = [input_dim, *widths, 1]
        layers = []
        for i, (cin, cout) in enumerate(zip(dims[:-1], dims[1:])):
            raw = _orthogonal_init(cout, cin, rng)
            act = activation if i < len(dims) - 2 else Activation("identity")
            layers.append((OrthoDense(raw, bjorck_iterations=bjorck_iterations,
                                      power_iterations=power_iterations), act))
        return cls(layers)

    # -- projection -------------------------------------------------------

    def thetas(self):
        return [layer.theta() for layer, _ in self.layers]

    def project(self):
        """Force-refresh every projected-weight cache."""
        for layer, _ in self.layers:
            layer.theta()

    def project_with_tapes(self):
        return [layer.project_with_tape() for layer, _ in self.layers]

    # -- evaluation -------------------------------------------------------

    def _forward_core(self, X, thetas, want_tape):
        H = X
        inputs, preacts, perms = [], [], []
        for (layer, act), theta in zip(self.layers, thetas):
            if want_tape:
                inputs.append(H)
            P = H @ theta.T + layer.bias
            g = act.group_for_width(layer.rows)
            if g is None:
                out, idx = P, None
            elif want_tape:
                out, idx = _group_sort_batch(P, g)
            else:
                out, idx = _group_sort_values(P, g), None
            if want_tape:
                preacts.append(P)
                perms.append(idx)
            H = out
        return H[:, 0], (inputs, preacts, perms)

    def forward_batch(self, X):
        X = self._check_batch(X)
        scores, _ = self._forward_core(X, self.thetas(), want_tape=False)
        return scores

    def __call__(self, X):
        return self.forward_batch(X)

    def _input_backward(self, thetas, perms, n):
        G = np.ones((n, 1))
        for theta, idx in zip(reversed(thetas), reversed(perms)):
            if idx is not None:
                G = _group_sort_backward(G, idx)
            G = G @ theta
        return G

    def input_gradients(self, X):
        """d score / d x for each row of X, shape (n, input_dim)."""
        return self.scores_and_input_gradients(X)[1]

    def scores_and_input_gradients(self, X):
        """Scores plus input-space gradients from a single shared pass."""
        X = self._check_batch(X)
        thetas = self.thetas()
        scores, (_, _, perms) = self._forward_core(X, thetas, want_tape=True)
        return scores, self._input_backward(thetas, perms, X.shape[0])

    def param_gradients_batch(self, X, upstream, tapes=None):
        """Gradients of sum_i upstream[i] * f(x_i) w.r.t. raw weights and
        biases, backpropagated through the unrolled projection.

        Returns one (d_raw, d_bias) pair per layer.
        """
        upstream = np.asarray(upstream, dtype=np.float64)
        if upstream.shape != (np.asarray(X).shape[0],):
            raise ValueError(
                f"upstream shape {upstream.shape} != ({np.asarray(X).shape[0]},)")
        _, grads = self.value_and_param_gradients(X, lambda _: upstream, tapes)
        return grads

    def value_and_param_gradients(self, X, upstream_fn, tapes=None):
        """One fused pass: scores plus parameter gradients, where the
        per-sample loss gradients are produced from the scores by
        upstream_fn. Avoids scoring the batch twice per optimizer step."""
        X = self._check_batch(X)
        if tapes is None:
            tapes = self.project_with_tapes()
        thetas = [t.theta for t in tapes]
        scores, (inputs, _, perms) = self._forward_core(X, thetas, want_tape=True)
        upstream = np.asarray(upstream_fn(scores), dtype=np.float64)
        grads = [None] * len(self.layers)
        G = upstream[:, None]
        for l in range(len(self.layers) - 1, -1, -1):
            if perms[l] is not None:
                G = _group_sort_backward(G, perms[l])
            d_theta = G.T @ inputs[l]
            d_bias = G.sum(axis=0)
            if l > 0:
                G = G @ thetas[l]
            grads[l] = (_bjorck_backward(tapes[l], d_theta), d_bias)
        return scores, grads

    # -- flat parameter views (for the optimizer) --------------------------

    def n_params(self):
        return sum(layer.raw.size + layer.bias.size for layer, _ in self.layers)

    def params_flat(self):
        parts = []
        for layer, _ in self.layers:
            parts.append(layer.raw.ravel())
            parts.append(layer.bias)
        return np.concatenate(parts)

    def set_params_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params(),):
            raise ValueError("flat parameter vector has the wrong length")
        off = 0
        for layer, _ in self.layers:
            k = layer.raw.size
            layer.raw[...] = flat[off:off + k].reshape(layer.raw.shape)
            off += k
            layer.bias[...] = flat[off:off + layer.bias.size]
            off += layer.bias.size
            layer.mark_dirty()

    def grads_flat(self, grads):
        parts = []
        for d_raw, d_bias in grads:
            parts.append(d_raw.ravel())
            parts.append(d_bias)
        return np.concatenate(parts)

    def _check_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(
                f"expected batch of shape (n, {self.input_dim}), got {X.shape}")
        return X


def _orthogonal_init(rows, cols, rng):
    A = rng.standard_normal((max(rows, cols), min(rows, cols)))
    Q, _ = np.linalg.qr(A)
    return np.ascontiguousarray(Q if rows >= cols else Q.T)


# ---------------------------------------------------------------------------
# single-sample operations


def forward(net, x):
    """Score one input; also returns the trace of the pass."""
    x = _check_vector(net, x)
    thetas = net.thetas()
    scores, (inputs, preacts, perms) = net._forward_core(
        x[None, :], thetas, want_tape=True)
    trace = ForwardTrace(layer_inputs=inputs, pre_activations=preacts,
                         sort_perms=perms, thetas=thetas,
                         biases=[layer.bias for layer, _ in net.layers],
                         score=float(scores[0]))
    return trace.score, trace


def input_gradient(net, x):
    """Gradient of the score w.r.t. the input, by reverse traversal."""
    x = _check_vector(net, x)
    return net.input_gradients(x[None, :])[0]


def param_gradients(net, batch, upstream):
    """Gradients of the weighted batch score w.r.t. raw weights and biases."""
    return net.param_gradients_batch(batch, upstream)


def _check_vector(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise ValueError(f"expected vector of dim {net.input_dim}, got {x.shape}")
    return x
