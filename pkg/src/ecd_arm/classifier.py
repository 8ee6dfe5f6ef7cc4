"""Quadratic discriminant surface for the sign of the averaged power flow.

Features are standardised, ``z = (x - mu) / sigma``, and expanded to

    [1, z_1..z_n, z_1^2..z_n^2, z_1 z_2, z_1 z_3, ..., z_{n-1} z_n]

(``1 + 2n + n(n-1)/2`` terms, 78 for n = 11). The coefficients are a ridge
least-squares fit against the +/-1 labels; ``f(X) = 0`` is the dividing
surface and ``|f(X)| <= epsilon`` abstains. By default the coefficients
minimise a squared-hinge ridge objective, so ``|f| = 1`` marks the margin.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .trajectory import N_FEATURES

ABSTAIN = 0
DEFAULT_RIDGE = 1e-6
MIN_ROWS = 500
CHUNK = 8192
STEP_TOL = 1e-12
CSV_HEADER = [f"x{i}" for i in range(1, N_FEATURES + 1)] + ["phi12bar", "label"]


class DegenerateData(ValueError):
    pass


class SchemaError(ValueError):
    pass


def n_terms(n_features: int) -> int:
    return 1 + 2 * n_features + n_features * (n_features - 1) // 2


def expand_features(x, mu=None, sigma=None) -> np.ndarray:
    """Quadratic expansion of one row (``(n,)``) or a batch (``(N, n)``)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    n = X.shape[1]
    mu = np.zeros(n) if mu is None else np.asarray(mu, dtype=float)
    sigma = np.ones(n) if sigma is None else np.asarray(sigma, dtype=float)
    Z = (X - mu) / sigma
    i, j = np.triu_indices(n, k=1)
    out = np.hstack([np.ones((Z.shape[0], 1)), Z, Z**2, Z[:, i] * Z[:, j]])
    return out[0] if single else out


def polynomial_value(coef, z) -> float:
    """Direct evaluation of the quadratic form on standardised ``z``."""
    z = np.asarray(z, dtype=float)
    n = z.size
    total = coef[0]
    pos = 1
    for k in range(n):
        total += coef[pos + k] * z[k]
    pos += n
    for k in range(n):
        total += coef[pos + k] * z[k] ** 2
    pos += n
    for a in range(n):
        for b in range(a + 1, n):
            total += coef[pos] * z[a] * z[b]
            pos += 1
    return float(total)


@dataclass
class Dataset:
    X: np.ndarray
    phi12bar: np.ndarray
    label: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.phi12bar = np.asarray(self.phi12bar, dtype=float)
        self.label = np.asarray(self.label, dtype=int)
        if not (len(self.X) == len(self.phi12bar) == len(self.label)):
            raise SchemaError("X, phi12bar and label lengths differ")
        if self.label.size and not np.all(np.isin(self.label, (-1, 1))):
            raise SchemaError("labels must be +1 or -1")

    def __len__(self):
        return len(self.label)

    def subset(self, mask) -> "Dataset":
        return Dataset(self.X[mask], self.phi12bar[mask], self.label[mask], dict(self.metadata))

    def split(self):
        """Deterministic 80/20 train/test split from a hash of the row index."""
        test = holdout_mask(len(self))
        return self.subset(~test), self.subset(test)

    def write_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for x, phi, lab in zip(self.X, self.phi12bar, self.label):
                w.writerow([repr(float(v)) for v in x] + [repr(float(phi)), int(lab)])
        sidecar(path).write_text(json.dumps(self.metadata, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read_csv(cls, path) -> "Dataset":
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise SchemaError(f"{path}: empty file")
        header = rows[0]
        n_x = sum(1 for h in header if h.startswith("x"))
        if n_x != N_FEATURES or header[-2:] != ["phi12bar", "label"]:
            raise SchemaError(f"{path}: expected header {','.join(CSV_HEADER)}, "
                              f"got {n_x} feature columns")
        body = np.array(rows[1:], dtype=float).reshape(-1, len(header))
        meta_path = sidecar(path)
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(body[:, :N_FEATURES], body[:, -2], body[:, -1].astype(int), meta)


def sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def _splitmix64(i: np.ndarray) -> np.ndarray:
    z = i.astype(np.uint64) + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def holdout_mask(n: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        return _splitmix64(np.arange(n)) % np.uint64(5) == 0


@dataclass
class SignModel:
    coef: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    epsilon: float = 0.0
    ridge: float = DEFAULT_RIDGE
    n_train: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if not np.all(self.sigma > 0):
            raise ValueError("sigma entries must be strictly positive")
        if self.coef.size != n_terms(self.mu.size):
            raise ValueError(f"expected {n_terms(self.mu.size)} coefficients, got {self.coef.size}")

    def decision_function(self, X) -> np.ndarray:
        return expand_features(X, self.mu, self.sigma) @ self.coef

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("coef", "mu", "sigma"):
            d[key] = getattr(self, key).tolist()
        d["coefficient_order"] = "1; z1..zn; z1^2..zn^2; z1z2, z1z3, ..., z(n-1)zn"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SignModel":
        kw = {k: d[k] for k in ("coef", "mu", "sigma", "epsilon", "ridge", "n_train")}
        return cls(metadata=d.get("metadata", {}), **kw)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "SignModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _normal_system(X, y, weights, mu, sigma):
    """Accumulate ``Phi^T W Phi`` and ``Phi^T W y`` over fixed chunks in row order."""
    p = n_terms(X.shape[1])
    G = np.zeros((p, p))
    r = np.zeros(p)
    for start in range(0, len(y), CHUNK):
        sl = slice(start, start + CHUNK)
        Phi = expand_features(X[sl], mu, sigma)
        wPhi = Phi * weights[sl, None]
        G += wPhi.T @ Phi
        r += wPhi.T @ y[sl]
    return G, r


def _ridge_solve(G, r, n, ridge):
    G = G / n
    penalty = np.full(G.shape[0], ridge)
    penalty[0] = 0.0  # intercept is not penalised
    G[np.diag_indices_from(G)] += penalty
    try:
        coef = cho_solve(cho_factor(G), r / n)
    except LinAlgError as exc:
        raise DegenerateData(f"normal system is singular: {exc}") from exc
    if not np.all(np.isfinite(coef)):
        raise DegenerateData("normal system produced non-finite coefficients")
    return coef


def train(data: Dataset, ridge: float = DEFAULT_RIDGE, loss: str = "squared_hinge",
          max_iter: int = 200) -> SignModel:
    """Fit the quadratic surface on standardised features.

    ``loss="squared"`` is plain ridge least squares of the +/-1 labels.
    ``loss="squared_hinge"`` (default) keeps the squared error only for rows
    with ``y f < 1``: starting from the least-squares fit, the active set is
    refined by Newton steps with an exact line search until it stops
    changing, which gives the exact minimiser of
    ``mean(max(0, 1 - y f)^2) + ridge * |L[1:]|^2``.
    """
    n = len(data)
    if n < MIN_ROWS:
        raise DegenerateData(f"need at least {MIN_ROWS} rows, got {n}")
    if not (np.any(data.label == 1) and np.any(data.label == -1)):
        raise DegenerateData("both classes must be present")
    if loss not in ("squared", "squared_hinge"):
        raise ValueError(f"unknown loss {loss!r}")
    mu = data.X.mean(axis=0)
    sigma = data.X.std(axis=0)
    if not np.all(sigma > 0):
        raise DegenerateData(f"constant feature column(s): {np.flatnonzero(sigma <= 0).tolist()}")

    y = data.label.astype(float)
    coef = _ridge_solve(*_normal_system(data.X, y, np.ones(n), mu, sigma), n, ridge)
    iterations = 0
    if loss == "squared_hinge":
        f = expand_features(data.X, mu, sigma) @ coef
        active = y * f < 1.0
        for iterations in range(1, max_iter + 1):
            if not (np.any(active & (y > 0)) and np.any(active & (y < 0))):
                break
            G, r = _normal_system(data.X, y, active.astype(float), mu, sigma)
            target = _ridge_solve(G, r, n, ridge)
            step = target - coef
            if np.max(np.abs(step)) <= STEP_TOL * (1.0 + np.max(np.abs(coef))):
                break
            df = expand_features(data.X, mu, sigma) @ step
            t = _line_search(coef, step, f, df, y, ridge)
            coef = coef + t * step
            f = f + t * df
            new_active = y * f < 1.0
            if t == 1.0 and np.array_equal(new_active, active):
                break
            active = new_active
        else:
            raise DegenerateData(f"squared-hinge fit did not converge in {max_iter} iterations")
    meta = {"loss": loss, "iterations": iterations}
    return SignModel(coef, mu, sigma, epsilon=0.0, ridge=ridge, n_train=n, metadata=meta)


def _line_search(coef, step, f, df, y, ridge):
    """Exact minimiser over ``t`` in (0, 1] of the convex piecewise-quadratic objective."""
    def slope(t):
        slack = np.maximum(0.0, 1.0 - y * (f + t * df))
        return (-2.0 * np.mean(slack * y * df)
                + 2.0 * ridge * np.dot(coef[1:] + t * step[1:], step[1:]))

    if slope(1.0) <= 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def predict_values(f, epsilon: float) -> np.ndarray:
    """Sign rule with a closed abstention band ``[-epsilon, epsilon]``."""
    f = np.asarray(f, dtype=float)
    return np.where(f > epsilon, 1, np.where(f < -epsilon, -1, ABSTAIN))


def predict(model: SignModel, x, epsilon: float | None = None):
    eps = model.epsilon if epsilon is None else epsilon
    out = predict_values(model.decision_function(x), eps)
    return int(out) if np.ndim(out) == 0 else out


def choose_epsilon(model: SignModel, X, target_abstention: float = 0.2) -> float:
    """Band half-width abstaining on roughly ``target_abstention`` of ``X``."""
    if not 0 <= target_abstention < 1:
        raise ValueError("target_abstention must lie in [0, 1)")
    if target_abstention == 0:
        return 0.0
    return float(np.quantile(np.abs(model.decision_function(X)), target_abstention))


def evaluate_model(model: SignModel, data: Dataset, epsilon: float | None = None) -> dict:
    eps = model.epsilon if epsilon is None else float(epsilon)
    f = model.decision_function(data.X) if len(data) else np.empty(0)
    pred = predict_values(f, eps)
    kept = pred != ABSTAIN
    y = data.label
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == -1)))
    tn = int(np.sum((pred == -1) & (y == -1)))
    fn = int(np.sum((pred == -1) & (y == 1)))
    n_kept = int(kept.sum())
    return {
        "epsilon": eps,
        "n": len(data),
        "n_retained": n_kept,
        "n_abstained": len(data) - n_kept,
        "abstention_rate": (len(data) - n_kept) / len(data) if len(data) else None,
        "accuracy_on_retained": (tp + tn) / n_kept if n_kept else None,
        "confusion": {"tp": tp, "fp": fp, "tn": tn, "fn": fn},
    }
