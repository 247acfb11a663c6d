"""Datasets: toy 2D generators, CSV ingestion for tabular anomaly-detection
benchmarks, standardization, domain-box derivation, splits, and the
unconstrained ReLU baseline network used for Lipschitz-blow-up comparisons.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .sampler import DomainBox

logger = logging.getLogger(__name__)

TOY_NAMES = ("one_blob", "two_circles", "two_blobs", "blob_cloud", "two_moons")


class CsvFormatError(ValueError):
    """Malformed CSV input; carries the offending row number."""


@dataclass
class Dataset:
    points: np.ndarray
    labels: np.ndarray | None = None  # 0 = normal, 1 = anomaly
    name: str = ""

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise ValueError("points must be a non-empty (n, d) matrix")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.points.shape[0],):
                raise ValueError("labels must have one entry per row")

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def normals(self):
        if self.labels is None:
            raise ValueError(f"dataset {self.name!r} has no labels")
        return self.points[self.labels == 0]

    def anomalies(self):
        if self.labels is None:
            raise ValueError(f"dataset {self.name!r} has no labels")
        return self.points[self.labels == 1]


# ---------------------------------------------------------------------------
# toy generators

_BLOB_CENTERS = np.array([[-1.5, 0.0], [1.5, 0.0]])
_BLOB_CLOUD_CENTERS = np.array([[-2.0, 0.0], [2.0, 0.0]])
_CIRCLE_RADII = np.array([1.0, 0.5])
_MOON_OFFSET = np.array([1.0, 0.5])


def make_toy(name, n, noise, rng):
    """Sample one of the named 2D toy distributions.

    noise is the standard deviation of the isotropic Gaussian jitter (for the
    blob families it doubles as the cluster spread); with noise=0 every point
    lies exactly on the defining manifold of the generator.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if name == "one_blob":
        points = noise * rng.standard_normal((n, 2))
    elif name == "two_blobs":
        which = rng.integers(0, 2, size=n)
        points = _BLOB_CENTERS[which] + noise * rng.standard_normal((n, 2))
    elif name == "blob_cloud":
        # a tight blob next to a diffuse cloud
        which = rng.integers(0, 2, size=n)
        spread = np.where(which == 0, noise, 4.0 * noise)
        points = _BLOB_CLOUD_CENTERS[which] + spread[:, None] * rng.standard_normal((n, 2))
    elif name == "two_circles":
        which = rng.integers(0, 2, size=n)
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        radii = _CIRCLE_RADII[which]
        points = radii[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
        points += noise * rng.standard_normal((n, 2))
    elif name == "two_moons":
        n_outer = n - n // 2
        t = rng.uniform(0.0, np.pi, size=n)
        arc = np.column_stack([np.cos(t), np.sin(t)])
        points = np.where(np.arange(n)[:, None] < n_outer, arc, _MOON_OFFSET - arc)
        points += noise * rng.standard_normal((n, 2))
    else:
        raise ValueError(f"unknown toy dataset {name!r}; choose from {TOY_NAMES}")
    return Dataset(points=points, name=name)


def uniform_disk(n, rng, radius=1.0, center=(0.0, 0.0)):
    """n points uniform in a 2D disk (area-uniform, not radius-uniform)."""
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, size=n))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    points = np.asarray(center, dtype=np.float64) + np.column_stack(
        [r * np.cos(theta), r * np.sin(theta)])
    return Dataset(points=points, name="uniform_disk")


# ---------------------------------------------------------------------------
# standardization and the sampling domain


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray
    constant_axes: np.ndarray = field(default=None)

    def apply(self, points):
        return (np.asarray(points, dtype=np.float64) - self.mean) / self.std

    def invert(self, points):
        return np.asarray(points, dtype=np.float64) * self.std + self.mean


def standardize(data):
    """Shift/scale to per-axis zero mean and unit (population) std.

    Axes with zero spread keep their values (std forced to 1) and are
    flagged in the returned stats.
    """
    if data.n < 2:
        raise ValueError("standardization needs at least two points")
    mean = data.points.mean(axis=0)
    std = data.points.std(axis=0)
    constant = std == 0.0
    if np.any(constant):
        logger.warning("constant axes %s: std forced to 1",
                       np.flatnonzero(constant).tolist())
        std = np.where(constant, 1.0, std)
    stats = StandardizationStats(mean=mean, std=std, constant_axes=constant)
    return Dataset(points=stats.apply(data.points), labels=data.labels,
                   name=data.name), stats


def domain_box(data, half_width_sigmas=5.0):
    """Axis-aligned sampling box centered on the data: per axis the half
    width is half_width_sigmas times the sample std (side 10 sigma by
    default, [-5, 5] on standardized data)."""
    mean = data.points.mean(axis=0)
    std = data.points.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    half = half_width_sigmas * std
    return DomainBox(low=mean - half, high=mean + half)


# ---------------------------------------------------------------------------
# CSV ingestion


def load_csv(path, label_column=None):
    """Parse a numeric CSV with a header row into a Dataset.

    If label_column names a column, it is removed from the features and its
    {0,1} values become the normal/anomaly labels. Ragged rows, non-numeric
    cells and a missing label column raise CsvFormatError with the row
    number.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        label_idx = None
        if label_column is not None:
            if label_column not in header:
                raise CsvFormatError(
                    f"{path}: row 1: no column named {label_column!r}")
            label_idx = header.index(label_column)
        width = len(header)
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width:
                raise CsvFormatError(
                    f"{path}: row {lineno}: expected {width} cells, got {len(row)}")
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise CsvFormatError(
                    f"{path}: row {lineno}: non-numeric cell") from None
            if label_idx is not None:
                label = values.pop(label_idx)
                if label not in (0.0, 1.0):
                    raise CsvFormatError(
                        f"{path}: row {lineno}: label must be 0 or 1, got {label}")
                labels.append(int(label))
            rows.append(values)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    return Dataset(points=np.array(rows, dtype=np.float64),
                   labels=np.array(labels, dtype=np.int64) if labels else None,
                   name=str(path))


def save_csv(data, path):
    """Deterministic CSV writer; round-trips through load_csv bit-for-bit
    (floats are written with repr, the shortest exact decimal form)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = [f"x{j}" for j in range(data.dim)]
        if data.labels is not None:
            header.append("label")
        writer.writerow(header)
        for i in range(data.n):
            row = [repr(float(v)) for v in data.points[i]]
            if data.labels is not None:
                row.append(str(int(data.labels[i])))
            writer.writerow(row)


def split(data, train_fraction, seed):
    """Deterministic shuffle split into disjoint, exhaustive train/test."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    n_train = int(round(data.n * train_fraction))
    if n_train == 0 or n_train == data.n:
        raise ValueError(
            f"fraction {train_fraction} leaves an empty side for n={data.n}")
    perm = np.random.default_rng(seed).permutation(data.n)
    tr, te = perm[:n_train], perm[n_train:]

    def _take(idx, suffix):
        return Dataset(points=data.points[idx],
                       labels=None if data.labels is None else data.labels[idx],
                       name=f"{data.name}{suffix}")

    return _take(tr, "/train"), _take(te, "/test")


# ---------------------------------------------------------------------------
# unconstrained ReLU baseline


class BaselineNet:
    """Plain ReLU MLP with the same shape as the constrained network but no
    weight projection; exists to show the local Lipschitz constant blowing
    up under conventional training."""

    def __init__(self, weights, biases):
        self.weights = [np.array(W, dtype=np.float64) for W in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        if self.weights[-1].shape[0] != 1:
            raise ValueError("last layer must have a single output")
        self.input_dim = self.weights[0].shape[1]

    def forward_batch(self, X):
        H = self._check_batch(X)
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            H = H @ W.T + b
            if i < len(self.weights) - 1:
                H = np.maximum(H, 0.0)
        return H[:, 0]

    def __call__(self, X):
        return self.forward_batch(X)

    def _tape(self, X):
        H = X
        inputs, masks = [], []
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(H)
            P = H @ W.T + b
            if i < len(self.weights) - 1:
                mask = P > 0.0
                H = P * mask
                masks.append(mask)
            else:
                H = P
                masks.append(None)
        return H[:, 0], inputs, masks

    def input_gradients(self, X):
        return self.scores_and_input_gradients(X)[1]

    def scores_and_input_gradients(self, X):
        X = self._check_batch(X)
        scores, _, masks = self._tape(X)
        G = np.ones((X.shape[0], 1))
        for W, mask in zip(reversed(self.weights), reversed(masks)):
            if mask is not None:
                G = G * mask
            G = G @ W
        return scores, G

    def param_gradients_batch(self, X, upstream):
        upstream = np.asarray(upstream, dtype=np.float64)
        _, grads = self.value_and_param_gradients(X, lambda _: upstream)
        return grads

    def value_and_param_gradients(self, X, upstream_fn, tapes=None):
        X = self._check_batch(X)
        scores, inputs, masks = self._tape(X)
        upstream = np.asarray(upstream_fn(scores), dtype=np.float64)
        grads = [None] * len(self.weights)
        G = upstream[:, None]
        for l in range(len(self.weights) - 1, -1, -1):
            if masks[l] is not None:
                G = G * masks[l]
            grads[l] = (G.T @ inputs[l], G.sum(axis=0))
            if l > 0:
                G = G @ self.weights[l]
        return scores, grads

    def n_params(self):
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def params_flat(self):
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_params_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        off = 0
        for W, b in zip(self.weights, self.biases):
            W[...] = flat[off:off + W.size].reshape(W.shape)
            off += W.size
            b[...] = flat[off:off + b.size]
            off += b.size

    def grads_flat(self, grads):
        parts = []
        for dW, db in grads:
            parts.append(dW.ravel())
            parts.append(db)
        return np.concatenate(parts)

    def _check_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(
                f"expected batch of shape (n, {self.input_dim}), got {X.shape}")
        return X


def baseline_unconstrained_net(dims, rng=None):
    """ReLU MLP for the full layer-size chain dims, e.g. (2, 512, ..., 1).

    He-scaled Gaussian init, the conventional choice for ReLU stacks.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    dims = list(dims)
    if len(dims) < 2 or dims[-1] != 1:
        raise ValueError("dims must chain from the input size to a single output")
    weights, biases = [], []
    for cin, cout in zip(dims[:-1], dims[1:]):
        weights.append(rng.standard_normal((cout, cin)) * np.sqrt(2.0 / cin))
        biases.append(np.zeros(cout))
    return BaselineNet(weights, biases)
