"""Learned cluster-count predictor.

A small multilayer perceptron maps the per-frame state (weights w, gains h) to
the optimal number of clusters m* found by the priority-based search. At
decision time the predicted m replaces the loop over m, so one LP is solved
instead of N//2 + 1.

Layout: features are [w_1..w_N, h_1..h_N]; classes are m = 0..N//2.
"""
from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import InstanceConfig, draw_devices
from .model import NetworkInstance, sample_channels
from .strategy import StrategyResult, _result, priority_iterative, priority_strategy, solve_strategies

MAGIC = "WPMEC-MLP"
FORMAT_VERSION = 1


# -- dataset ---------------------------------------------------------------------

@dataclass
class Dataset:
    N: int
    w: np.ndarray        # (n, N)
    h: np.ndarray        # (n, N)
    m_star: np.ndarray   # (n,) int
    skipped: dict = field(default_factory=dict)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float).reshape(-1, self.N)
        self.h = np.asarray(self.h, dtype=float).reshape(-1, self.N)
        self.m_star = np.asarray(self.m_star, dtype=int).reshape(-1)
        if not len(self.w) == len(self.h) == len(self.m_star):
            raise ValueError("w, h and m_star must have the same number of samples")
        if len(self.m_star) and (self.m_star.min() < 0 or self.m_star.max() > self.N // 2):
            raise ValueError(f"labels must lie in 0..{self.N // 2}")

    def __len__(self):
        return len(self.m_star)

    @property
    def features(self) -> np.ndarray:
        return np.hstack([self.w, self.h])

    @property
    def n_classes(self) -> int:
        return self.N // 2 + 1

    def subset(self, idx) -> "Dataset":
        return Dataset(self.N, self.w[idx], self.h[idx], self.m_star[idx])

    def label_counts(self) -> np.ndarray:
        return np.bincount(self.m_star, minlength=self.n_classes)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"w{n + 1}" for n in range(self.N)] + [f"h{n + 1}" for n in range(self.N)]
                        + ["m_star"])
            for w, h, m in zip(self.w, self.h, self.m_star):
                wr.writerow([repr(float(x)) for x in w] + [repr(float(x)) for x in h] + [int(m)])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        N = (len(header) - 1) // 2
        arr = np.array([[float(x) for x in r] for r in body]).reshape(-1, 2 * N + 1)
        return cls(N, arr[:, :N], arr[:, N:2 * N], arr[:, -1].astype(int))


def _template_instance(template, seed):
    if isinstance(template, InstanceConfig):
        devs = draw_devices(template, seed)
        hap = template.hap()
        ch = sample_channels(hap, [d.distance for d in devs], 0, fading=False)
        return NetworkInstance(devs, hap, ch, template.l_th), template.fading
    ch = template.channels
    fading = ch.mean_gains is None or not np.array_equal(ch.gains, ch.mean_gains)
    return template, fading


def generate_dataset(template, n_samples: int, seed: int = 0, redraw_weights: bool = False,
                     weight_range=(1.0, 2.0), max_attempts: int | None = None,
                     options=None) -> Dataset:
    """Label redrawn frames of ``template`` with the priority search's m*.

    ``template`` is a NetworkInstance or an InstanceConfig (devices drawn with
    ``seed``). Each sample redraws the fading and, optionally, the weights.
    Frames that violate the energy-constrained assumption or that no priority
    strategy can serve are skipped and redrawn; the counts land in ``skipped``.
    """
    base, fading = _template_instance(template, seed)
    N = base.N
    rng = np.random.default_rng([int(seed), 2])
    cap = max_attempts if max_attempts is not None else 50 * n_samples + 50
    W, H, M = [], [], []
    skipped = {"assumption": 0, "infeasible": 0}
    dist = [d.distance for d in base.devices]
    attempts = 0
    while len(M) < n_samples:
        if attempts >= cap:
            raise RuntimeError(f"only {len(M)} of {n_samples} usable frames after {attempts} draws; "
                               "the template is mostly infeasible")
        attempts += 1
        fs = int(rng.integers(2 ** 63))
        w = rng.uniform(*weight_range, N) if redraw_weights else base.weights
        inst = NetworkInstance(base.devices, base.hap, sample_channels(base.hap, dist, fs, fading=fading),
                               base.l_th).with_weights(w)
        if inst.assumption_violations:
            skipped["assumption"] += 1
            continue
        r = priority_iterative(inst, options)
        if not r.feasible:
            skipped["infeasible"] += 1
            continue
        W.append(inst.weights)
        H.append(inst.h)
        M.append(r.m)
    return Dataset(N, np.array(W).reshape(-1, N), np.array(H).reshape(-1, N), np.array(M, dtype=int),
                   skipped)


# -- standardization -------------------------------------------------------------

@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        const = std <= 1e-12 * np.maximum(np.abs(mean), 1e-300)
        if const.any():
            warnings.warn(f"constant features {np.flatnonzero(const).tolist()} get std = 1", stacklevel=2)
            std = np.where(const, 1.0, std)
        return cls(mean, std)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.mean.size:
            raise ValueError(f"expected {self.mean.size} features, got {X.shape[-1]}")
        return (X - self.mean) / self.std

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.std + self.mean


# -- network ---------------------------------------------------------------------

def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class MlpModel:
    """ReLU feedforward classifier trained with softmax cross-entropy."""

    def __init__(self, sizes, seed: int = 0):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        rng = np.random.default_rng(seed)
        # He initialisation for ReLU layers
        self.W = [rng.normal(0.0, np.sqrt(2.0 / a), (a, b)) for a, b in zip(self.sizes[:-1], self.sizes[1:])]
        self.b = [np.zeros(b) for b in self.sizes[1:]]

    @property
    def params(self) -> list:
        out = []
        for W, b in zip(self.W, self.b):
            out += [W, b]
        return out

    def copy(self) -> "MlpModel":
        m = MlpModel.__new__(MlpModel)
        m.sizes = self.sizes
        m.W = [W.copy() for W in self.W]
        m.b = [b.copy() for b in self.b]
        return m

    def logits(self, X) -> np.ndarray:
        a = np.atleast_2d(np.asarray(X, dtype=float))
        if a.shape[1] != self.sizes[0]:
            raise ValueError(f"model expects {self.sizes[0]} inputs, got {a.shape[1]}")
        for k, (W, b) in enumerate(zip(self.W, self.b)):
            a = a @ W + b
            if k < len(self.W) - 1:
                a = np.maximum(a, 0.0)
        return a

    def predict_proba(self, X) -> np.ndarray:
        return _softmax(self.logits(X))

    def loss(self, X, y) -> float:
        p = self.predict_proba(X)
        y = np.asarray(y, dtype=int)
        return float(-np.mean(np.log(np.maximum(p[np.arange(len(y)), y], 1e-300))))

    def loss_and_grads(self, X, y):
        """Mean cross-entropy and its gradients, ordered like ``params``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=int)
        acts = [X]
        a = X
        for k, (W, b) in enumerate(zip(self.W, self.b)):
            a = a @ W + b
            if k < len(self.W) - 1:
                a = np.maximum(a, 0.0)
            acts.append(a)
        p = _softmax(acts[-1])
        n = len(y)
        loss = float(-np.mean(np.log(np.maximum(p[np.arange(n), y], 1e-300))))
        delta = p
        delta[np.arange(n), y] -= 1.0
        delta /= n
        grads = []
        for k in range(len(self.W) - 1, -1, -1):
            gW = acts[k].T @ delta
            gb = delta.sum(axis=0)
            grads = [gW, gb] + grads
            if k > 0:
                delta = (delta @ self.W[k].T) * (acts[k] > 0)
        return loss, grads


def gradient_check(model: MlpModel, X, y, eps: float = 1e-6) -> list:
    """Relative error between backprop and central differences, one value per parameter array."""
    _, grads = model.loss_and_grads(X, y)
    errs = []
    for P, G in zip(model.params, grads):
        num = np.zeros_like(P)
        it = np.nditer(P, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = P[i]
            P[i] = old + eps
            lp = model.loss(X, y)
            P[i] = old - eps
            lm = model.loss(X, y)
            P[i] = old
            num[i] = (lp - lm) / (2 * eps)
        denom = max(np.linalg.norm(num) + np.linalg.norm(G), 1e-12)
        errs.append(float(np.linalg.norm(num - G) / denom))
    return errs


@dataclass(frozen=True)
class TrainParams:
    hidden: tuple = (64, 64)
    learning_rate: float = 1e-2
    batch_size: int = 32
    epochs: int = 200
    val_fraction: float = 0.2


@dataclass
class Predictor:
    """Trained model plus the standardizer fitted on its training split."""
    model: MlpModel
    standardizer: Standardizer
    N: int
    history: dict = field(default_factory=dict)

    def predict(self, w, h) -> int:
        return predict_m(self.model, self.standardizer, w, h)

    def save(self, path) -> None:
        save_predictor(self, path)


def train(dataset: Dataset, params: TrainParams = TrainParams(), seed: int = 0) -> Predictor:
    """Minibatch SGD on cross-entropy; returns the epoch with the lowest validation loss."""
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_val = int(round(params.val_fraction * n)) if n > 1 else 0
    val_idx, tr_idx = order[:n_val], order[n_val:]
    X = dataset.features
    y = dataset.m_star
    if not np.all(np.isfinite(X)):
        raise ValueError("dataset contains non-finite features")
    std = Standardizer.fit(X[tr_idx])
    Z = std.apply(X)
    Ztr, ytr = Z[tr_idx], y[tr_idx]
    Zva, yva = Z[val_idx], y[val_idx]
    model = MlpModel((2 * dataset.N, *params.hidden, dataset.n_classes), seed=seed)
    best, best_loss = model.copy(), np.inf
    hist = {"train_loss": [], "val_loss": [], "best_epoch": -1}
    for epoch in range(params.epochs):
        perm = rng.permutation(len(tr_idx))
        for s in range(0, len(perm), params.batch_size):
            bi = perm[s:s + params.batch_size]
            loss, grads = model.loss_and_grads(Ztr[bi], ytr[bi])
            if not np.isfinite(loss):
                raise FloatingPointError(f"training diverged at epoch {epoch} (loss={loss}); "
                                         f"lower learning_rate below {params.learning_rate}")
            for P, G in zip(model.params, grads):
                P -= params.learning_rate * G
        tr_loss = model.loss(Ztr, ytr)
        va_loss = model.loss(Zva, yva) if n_val else tr_loss
        if not np.isfinite(tr_loss):
            raise FloatingPointError(f"training diverged at epoch {epoch}; "
                                     f"lower learning_rate below {params.learning_rate}")
        hist["train_loss"].append(tr_loss)
        hist["val_loss"].append(va_loss)
        if va_loss < best_loss:
            best, best_loss = model.copy(), va_loss
            hist["best_epoch"] = epoch
    hist["val_idx"] = val_idx
    return Predictor(best, std, dataset.N, hist)


def predict_m(model: MlpModel, standardizer: Standardizer, w, h) -> int:
    """argmax class; equal scores go to the smallest m."""
    x = np.concatenate([np.asarray(w, dtype=float).ravel(), np.asarray(h, dtype=float).ravel()])
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    z = model.logits(standardizer.apply(x))[0]
    return int(np.argmax(z))


def dl_solve(instance: NetworkInstance, predictor: Predictor, options=None) -> StrategyResult:
    """Priority strategy with the predicted number of clusters; one LP solve."""
    if predictor.N != instance.N:
        raise ValueError(f"predictor trained for N={predictor.N}, instance has N={instance.N}")
    t0 = time.perf_counter()
    m = predictor.predict(instance.weights, instance.h)
    s = priority_strategy(instance, m)
    res = solve_strategies(instance, [s], options)[0]
    return _result("DL", instance, s, res, 1, t0)


# -- persistence -----------------------------------------------------------------

def _row(v) -> str:
    return " ".join(repr(float(x)) for x in np.ravel(v))


def save_predictor(pred: Predictor, path) -> None:
    """Text format: magic line, N, layer sizes, standardizer, then row-major weights."""
    m = pred.model
    lines = [f"{MAGIC} {FORMAT_VERSION}", f"N {pred.N}", "sizes " + " ".join(map(str, m.sizes)),
             "mean " + _row(pred.standardizer.mean), "std " + _row(pred.standardizer.std)]
    for k, (W, b) in enumerate(zip(m.W, m.b)):
        lines.append(f"W{k} {W.shape[0]} {W.shape[1]}")
        lines += [_row(r) for r in W]
        lines.append(f"b{k} " + _row(b))
    Path(path).write_text("\n".join(lines) + "\n")


def load_predictor(path) -> Predictor:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if len(head) != 2 or head[0] != MAGIC:
        raise ValueError(f"{path} is not a saved predictor")
    if int(head[1]) != FORMAT_VERSION:
        raise ValueError(f"unsupported predictor format version {head[1]}")
    N = int(lines[1].split()[1])
    sizes = tuple(int(s) for s in lines[2].split()[1:])
    mean = np.array([float(x) for x in lines[3].split()[1:]])
    std = np.array([float(x) for x in lines[4].split()[1:]])
    model = MlpModel(sizes)
    i = 5
    for k in range(len(sizes) - 1):
        _, r, c = lines[i].split()
        r, c = int(r), int(c)
        model.W[k] = np.array([[float(x) for x in lines[i + 1 + j].split()] for j in range(r)]).reshape(r, c)
        i += 1 + r
        model.b[k] = np.array([float(x) for x in lines[i].split()[1:]])
        i += 1
    return Predictor(model, Standardizer(mean, std), N)
