"""The five supervised models behind one train/score contract.

Tree ensembles are backed by scikit-learn; logistic regression, KNN, and
the small perceptron are implemented here so their numerics (loss traces,
tie handling, dropout behavior) are fully pinned. Every variant is
deterministic for a fixed seed and emits scores in [0, 1].
"""

from __future__ import annotations

import json
import pickle
import struct
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from sklearn.ensemble import HistGradientBoostingClassifier, RandomForestClassifier

VARIANTS = (
    "random-forest",
    "gradient-boosted-trees",
    "logistic-regression",
    "k-nearest-neighbors",
    "multilayer-perceptron",
)

DEFAULT_HYPERPARAMETERS = {
    "random-forest": {"trees": 1000},
    "gradient-boosted-trees": {"rounds": 1000, "depth": 6, "learning_rate": 0.1,
                               "l2_leaf_penalty": 1.0},
    "logistic-regression": {"l2_lambda": 1e-4, "grad_tol": 1e-6, "max_iter": 1000},
    "k-nearest-neighbors": {"k": 5, "distance": "euclidean"},
    "multilayer-perceptron": {"hidden": [32, 16], "dropout": 0.5, "batch_size": 32,
                              "learning_rate": 1e-3, "patience": 10, "max_epochs": 200,
                              "validation_fraction": 0.1},
}

MODEL_MAGIC = b"CIM1"


class ClassifierError(Exception):
    pass


@dataclass(frozen=True)
class ClassifierSpec:
    variant: str
    hyperparameters: dict
    seed: int = 0

    @classmethod
    def default(cls, variant: str, seed: int = 0, **overrides) -> "ClassifierSpec":
        if variant not in VARIANTS:
            raise ClassifierError(f"unknown classifier variant: {variant}")
        params = dict(DEFAULT_HYPERPARAMETERS[variant])
        params.update(overrides)
        return cls(variant=variant, hyperparameters=params, seed=seed)


@dataclass
class TrainedModel:
    spec: ClassifierSpec
    feature_dim: int
    state: object
    training_report: dict = field(default_factory=dict)


def _check_training_inputs(spec, X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ClassifierError(f"bad shapes: X {X.shape}, y {y.shape}")
    if not np.all(np.isfinite(X)):
        raise ClassifierError("non-finite feature values")
    classes = set(np.unique(y))
    if not classes <= {0, 1}:
        raise ClassifierError(f"labels must be binary, got {sorted(classes)}")
    tolerant = spec.variant in ("k-nearest-neighbors", "random-forest")
    if len(classes) < 2 and not tolerant:
        raise ClassifierError(f"{spec.variant} requires both classes present")
    return X, y


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------- logistic


def _fit_logistic(X, y, params, seed):
    n, d = X.shape
    lam = params["l2_lambda"]
    Xb = np.hstack([X, np.ones((n, 1))])

    def loss_grad(w):
        z = Xb @ w
        # log(1 + exp(-|z|)) form avoids overflow
        loss = np.mean(np.logaddexp(0.0, z) - y * z)
        loss += 0.5 * lam * np.dot(w[:-1], w[:-1])  # bias unpenalized
        g = Xb.T @ (_sigmoid(z) - y) / n
        g[:-1] += lam * w[:-1]
        return loss, g

    losses = []

    def record(w):
        losses.append(float(loss_grad(w)[0]))

    w0 = np.zeros(d + 1)
    record(w0)
    res = minimize(
        loss_grad, w0, jac=True, method="L-BFGS-B", callback=record,
        options={"maxiter": params["max_iter"], "gtol": params["grad_tol"], "ftol": 0.0},
    )
    return {"weights": res.x[:-1], "bias": res.x[-1]}, {
        "iterations": int(res.nit),
        "final_loss": float(res.fun),
        "loss_history": losses,
        "grad_norm": float(np.max(np.abs(res.jac))),
    }


# ------------------------------------------------------------- perceptron


def _init_mlp(d, hidden, rng):
    dims = [d] + list(hidden) + [1]
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        layers.append([w, np.zeros(fan_out)])
    return layers


def _mlp_forward(layers, X, dropout=0.0, rng=None):
    """Returns (activations, pre-dropout hiddens, masks, output probs)."""
    acts = [X]
    masks = []
    h = X
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        if i < len(layers) - 1:
            h = np.maximum(z, 0.0)
            if dropout > 0.0:
                mask = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
                h = h * mask
                masks.append(mask)
            else:
                masks.append(None)
            acts.append(h)
        else:
            h = _sigmoid(z.ravel())
    return acts, masks, h


def _bce(p, y):
    eps = 1e-12
    return -np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps))


def _fit_mlp(X, y, params, seed):
    rng = np.random.default_rng(seed)
    n, d = X.shape
    layers = _init_mlp(d, params["hidden"], rng)

    n_val = max(1, int(round(params["validation_fraction"] * n)))
    order = rng.permutation(n)
    val_idx, tr_idx = order[:n_val], order[n_val:]
    if len(tr_idx) == 0:
        tr_idx = val_idx
    Xtr, ytr, Xval, yval = X[tr_idx], y[tr_idx], X[val_idx], y[val_idx]

    # Adam state
    m = [[np.zeros_like(w), np.zeros_like(b)] for w, b in layers]
    v = [[np.zeros_like(w), np.zeros_like(b)] for w, b in layers]
    beta1, beta2, eps, lr = 0.9, 0.999, 1e-8, params["learning_rate"]
    step = 0

    best_val = np.inf
    best_layers = [[w.copy(), b.copy()] for w, b in layers]
    stale = 0
    epochs_run = 0
    batch = params["batch_size"]
    dropout = params["dropout"]

    for epoch in range(params["max_epochs"]):
        epochs_run = epoch + 1
        idx = rng.permutation(len(Xtr))
        for start in range(0, len(idx), batch):
            sel = idx[start : start + batch]
            xb, yb = Xtr[sel], ytr[sel]
            acts, masks, p = _mlp_forward(layers, xb, dropout=dropout, rng=rng)
            grad_z = (p - yb)[:, None] / len(yb)  # d(BCE)/d(logit)
            grads = []
            for i in range(len(layers) - 1, -1, -1):
                w, _ = layers[i]
                gw = acts[i].T @ grad_z
                gb = grad_z.sum(axis=0)
                grads.append((gw, gb))
                if i > 0:
                    grad_h = grad_z @ w.T
                    if masks[i - 1] is not None:
                        grad_h = grad_h * masks[i - 1]
                    grad_z = grad_h * (acts[i] > 0)
            grads.reverse()
            step += 1
            for i, (gw, gb) in enumerate(grads):
                for j, g in enumerate((gw, gb)):
                    m[i][j] = beta1 * m[i][j] + (1 - beta1) * g
                    v[i][j] = beta2 * v[i][j] + (1 - beta2) * g * g
                    mhat = m[i][j] / (1 - beta1**step)
                    vhat = v[i][j] / (1 - beta2**step)
                    layers[i][j] -= lr * mhat / (np.sqrt(vhat) + eps)
        _, _, pval = _mlp_forward(layers, Xval)
        val_loss = _bce(pval, yval)
        if val_loss < best_val - 1e-6:
            best_val = val_loss
            best_layers = [[w.copy(), b.copy()] for w, b in layers]
            stale = 0
        else:
            stale += 1
            if stale >= params["patience"]:
                break
    return {"layers": best_layers}, {
        "epochs": epochs_run,
        "final_loss": float(best_val),
    }


# ------------------------------------------------------------------ train


def train_classifier(spec: ClassifierSpec, X, y) -> TrainedModel:
    X, y = _check_training_inputs(spec, X, y)
    params = spec.hyperparameters
    t0 = time.perf_counter()
    report: dict = {}

    if spec.variant == "random-forest":
        forest = RandomForestClassifier(
            n_estimators=params["trees"], max_features="sqrt",
            min_samples_leaf=1, bootstrap=True, random_state=spec.seed,
        )
        forest.fit(X, y)
        state = forest
        report["trees"] = params["trees"]
    elif spec.variant == "gradient-boosted-trees":
        booster = HistGradientBoostingClassifier(
            max_iter=params["rounds"], max_depth=params["depth"],
            learning_rate=params["learning_rate"],
            l2_regularization=params["l2_leaf_penalty"],
            early_stopping=False, random_state=spec.seed,
        )
        booster.fit(X, y)
        state = booster
        report["trees"] = params["rounds"]
    elif spec.variant == "logistic-regression":
        state, report = _fit_logistic(X, y, params, spec.seed)
    elif spec.variant == "k-nearest-neighbors":
        state = {"X": X.copy(), "y": y.copy()}
    elif spec.variant == "multilayer-perceptron":
        state, report = _fit_mlp(X, y, params, spec.seed)
    else:
        raise ClassifierError(f"unknown classifier variant: {spec.variant}")

    report["duration_s"] = time.perf_counter() - t0
    return TrainedModel(spec=spec, feature_dim=X.shape[1], state=state,
                        training_report=report)


def _knn_scores(state, X, k, distance):
    Xtr, ytr = state["X"], state["y"]
    if distance == "cosine":
        a = X / np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1e-30)
        b = Xtr / np.maximum(np.linalg.norm(Xtr, axis=1, keepdims=True), 1e-30)
        dists = 1.0 - a @ b.T
    else:
        dists = np.sqrt(
            np.maximum(
                (X**2).sum(1)[:, None] - 2 * X @ Xtr.T + (Xtr**2).sum(1)[None, :],
                0.0,
            )
        )
    # stable sort keeps training-index order among distance ties
    nearest = np.argsort(dists, axis=1, kind="stable")[:, : min(k, len(ytr))]
    return ytr[nearest].mean(axis=1)


def predict_scores(model: TrainedModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.feature_dim:
        raise ClassifierError(
            f"feature dim mismatch: model expects {model.feature_dim}, got {X.shape}"
        )
    variant = model.spec.variant
    params = model.spec.hyperparameters

    if variant == "random-forest":
        votes = np.stack([est.predict(X) for est in model.state.estimators_])
        return votes.mean(axis=0)
    if variant == "gradient-boosted-trees":
        return model.state.predict_proba(X)[:, 1]
    if variant == "logistic-regression":
        return _sigmoid(X @ model.state["weights"] + model.state["bias"])
    if variant == "k-nearest-neighbors":
        return _knn_scores(model.state, X, params["k"], params["distance"])
    if variant == "multilayer-perceptron":
        _, _, p = _mlp_forward(model.state["layers"], X)  # no dropout at inference
        return p
    raise ClassifierError(f"unknown classifier variant: {variant}")


def predict_labels(model: TrainedModel, X, threshold: float = 0.5) -> np.ndarray:
    if not 0.0 <= threshold <= 1.0:
        raise ClassifierError(f"threshold must be in [0,1], got {threshold}")
    return (predict_scores(model, X) >= threshold).astype(int)


# ------------------------------------------------------------ persistence


def save_model(model: TrainedModel, path):
    header = json.dumps(
        {
            "format_version": 1,
            "variant": model.spec.variant,
            "hyperparameters": model.spec.hyperparameters,
            "seed": model.spec.seed,
            "feature_dim": model.feature_dim,
            "training_report": model.training_report,
        }
    ).encode("utf-8")
    payload = pickle.dumps(model.state, protocol=4)
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(payload)


def load_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        if fh.read(4) != MODEL_MAGIC:
            raise ClassifierError(f"not a model container: {path}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        state = pickle.loads(fh.read())
    spec = ClassifierSpec(
        variant=header["variant"], hyperparameters=header["hyperparameters"],
        seed=header["seed"],
    )
    return TrainedModel(spec=spec, feature_dim=header["feature_dim"], state=state,
                        training_report=header["training_report"])
