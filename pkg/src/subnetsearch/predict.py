"""Surrogate objective predictors: ridge regression and epsilon-SVR.

Ridge solves the normal equations on centered data (intercept unpenalized).
The SVR solves the epsilon-insensitive dual by sequential optimization of
maximal-violating variable pairs under the box and equality constraints,
tracking the dual objective so callers can audit monotone progress.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import (
    ConfigError,
    ConvergenceFailure,
    DimensionMismatch,
    SingularSystem,
    UndefinedCorrelation,
    ZeroDenominator,
)
from .util import stable_hash64, subseed


# ---------------------------------------------------------------------------
# Ridge
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RidgeModel:
    weights: np.ndarray
    bias: float
    lam: float
    encoding_scheme: str = "one_hot"
    training_fingerprint: str | None = None


def fit_ridge(
    X, y, lam: float, encoding_scheme: str = "one_hot"
) -> RidgeModel:
    """Regularized least squares with an unpenalized intercept."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] < 1:
        raise ConfigError("fit_ridge needs a non-empty 2-D feature matrix")
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} rows vs {y.shape[0]} targets")
    if lam < 0:
        raise ConfigError("lambda must be >= 0")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    d = X.shape[1]
    if lam == 0 and np.linalg.matrix_rank(Xc) < d:
        raise SingularSystem(
            "centered feature matrix is rank-deficient at lambda=0; use lambda>0"
        )
    A = Xc.T @ Xc + lam * np.eye(d)
    try:
        w = np.linalg.solve(A, Xc.T @ yc)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"normal equations singular: {exc}") from exc
    return RidgeModel(
        weights=w,
        bias=float(y_mean - x_mean @ w),
        lam=float(lam),
        encoding_scheme=encoding_scheme,
        training_fingerprint=_fingerprint(X, y),
    )


# ---------------------------------------------------------------------------
# Epsilon-SVR
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelSpec:
    kind: str  # "rbf" | "linear"
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in ("rbf", "linear"):
            raise ConfigError(f"unknown kernel {self.kind!r}")


def _kernel(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if spec.kind == "linear":
        return A @ B.T
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-spec.gamma * sq)


@dataclass(frozen=True, eq=False)
class SvrModel:
    support_vectors: np.ndarray
    dual_coeffs: np.ndarray
    bias: float
    kernel: KernelSpec
    C: float
    epsilon: float
    feature_dim: int
    support_indices: tuple[int, ...] = ()
    encoding_scheme: str = "one_hot"
    n_iter: int = 0
    converged: bool = True
    dual_objective_history: tuple[float, ...] = ()
    training_fingerprint: str | None = None


def fit_svr(
    X,
    y,
    C: float = 1.0,
    epsilon: float = 0.01,
    kernel: KernelSpec = KernelSpec("rbf"),
    tol: float = 1e-3,
    max_iter: int = 200_000,
    encoding_scheme: str = "one_hot",
) -> SvrModel:
    """Solve the epsilon-insensitive dual to KKT tolerance `tol`.

    Raises ConvergenceFailure (carrying the best iterate) if the pairwise
    optimizer hits `max_iter` before the maximal KKT violation drops below tol.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if n < 2:
        raise ConfigError("fit_svr needs at least 2 samples")
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{n} rows vs {y.shape[0]} targets")
    if C <= 0:
        raise ConfigError("C must be > 0")
    if epsilon < 0:
        raise ConfigError("epsilon must be >= 0")
    if kernel.kind == "rbf" and kernel.gamma is None:
        kernel = KernelSpec("rbf", gamma=1.0 / d)

    K = _kernel(kernel, X, X)
    # Dual variables z = [alpha; alpha*], signs q, linear term p.
    q = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([epsilon - y, epsilon + y])
    z = np.zeros(2 * n)
    G = p.copy()
    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        score = -q * G
        up = ((q > 0) & (z < C)) | ((q < 0) & (z > 0))
        low = ((q > 0) & (z > 0)) | ((q < 0) & (z < C))
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        gap = score[i] - score[j]
        if gap <= tol:
            converged = True
            break
        bi, bj = i % n, j % n
        a = K[bi, bi] + K[bj, bj] - 2.0 * K[bi, bj]
        if a <= 0:
            a = 1e-12
        qq = q[i] * q[j]
        delta = q[i] * gap / a
        # box limits for z_i and z_j along the feasible direction
        lo = -z[i]
        hi = C - z[i]
        if qq > 0:  # dz_j = -delta
            lo = max(lo, z[j] - C)
            hi = min(hi, z[j])
        else:  # dz_j = +delta
            lo = max(lo, -z[j])
            hi = min(hi, C - z[j])
        delta = min(max(delta, lo), hi)
        z[i] += delta
        z[j] -= qq * delta
        for t in (i, j):  # snap to the box to avoid numerical drift
            if z[t] < 1e-12:
                z[t] = 0.0
            elif z[t] > C - 1e-12:
                z[t] = C
        kcol_i = np.concatenate([K[:, bi], K[:, bi]])
        kcol_j = np.concatenate([K[:, bj], K[:, bj]])
        G += (q * kcol_i) * (q[i] * delta) + (q * kcol_j) * (q[j] * (-qq * delta))
        history.append(-0.5 * float(z @ (G + p)))  # maximization form

    # bias from free variables, else midpoint of the KKT bounds
    score = -q * G
    free = (z > 0) & (z < C)
    if free.any():
        bias = float(score[free].mean())
    else:
        up = ((q > 0) & (z < C)) | ((q < 0) & (z > 0))
        low = ((q > 0) & (z > 0)) | ((q < 0) & (z < C))
        m_up = float(score[up].max()) if up.any() else 0.0
        m_low = float(score[low].min()) if low.any() else 0.0
        bias = 0.5 * (m_up + m_low)

    beta = z[:n] - z[n:]
    sv = np.abs(beta) > 1e-12
    model = SvrModel(
        support_vectors=X[sv],
        dual_coeffs=beta[sv],
        bias=bias,
        kernel=kernel,
        C=float(C),
        epsilon=float(epsilon),
        feature_dim=d,
        support_indices=tuple(int(i) for i in np.nonzero(sv)[0]),
        encoding_scheme=encoding_scheme,
        n_iter=it,
        converged=converged,
        dual_objective_history=tuple(history),
        training_fingerprint=_fingerprint(X, y),
    )
    if not converged:
        raise ConvergenceFailure(
            f"SVR did not reach KKT tolerance {tol} in {max_iter} iterations",
            model=model,
        )
    return model


# ---------------------------------------------------------------------------
# Prediction and metrics
# ---------------------------------------------------------------------------


def predict(model: RidgeModel | SvrModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if isinstance(model, RidgeModel):
        if X.shape[1] != model.weights.shape[0]:
            raise DimensionMismatch(
                f"model expects {model.weights.shape[0]} features, got {X.shape[1]}"
            )
        return X @ model.weights + model.bias
    if isinstance(model, SvrModel):
        if X.shape[1] != model.feature_dim:
            raise DimensionMismatch(
                f"model expects {model.feature_dim} features, got {X.shape[1]}"
            )
        if model.support_vectors.shape[0] == 0:
            return np.full(X.shape[0], model.bias)
        return _kernel(model.kernel, X, model.support_vectors) @ model.dual_coeffs + model.bias
    raise ConfigError(f"unknown model type {type(model).__name__}")


def mape(actual, predicted) -> float:
    """Mean absolute percentage error, as a percentage."""
    a = np.asarray(actual, dtype=float).ravel()
    p = np.asarray(predicted, dtype=float).ravel()
    if a.shape != p.shape:
        raise DimensionMismatch(f"lengths differ: {a.shape[0]} vs {p.shape[0]}")
    if np.any(a == 0):
        raise ZeroDenominator("MAPE undefined for zero actual values")
    return float(np.mean(np.abs(a - p) / np.abs(a)) * 100.0)


def kendall_tau(a, b) -> float:
    """Tie-corrected Kendall rank correlation (tau-b)."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"lengths differ: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 2:
        raise ConfigError("kendall_tau needs length >= 2")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise UndefinedCorrelation("tau undefined for an all-constant vector")
    res = stats.kendalltau(a, b, variant="b")
    return float(res.statistic)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _fingerprint(X: np.ndarray, y: np.ndarray) -> str:
    return format(stable_hash64(X.tobytes(), y.tobytes()), "016x")


def model_to_dict(model: RidgeModel | SvrModel) -> dict:
    if isinstance(model, RidgeModel):
        return {
            "family": "ridge",
            "encoding_scheme": model.encoding_scheme,
            "lambda": model.lam,
            "weights": model.weights.tolist(),
            "bias": model.bias,
            "training_fingerprint": model.training_fingerprint,
        }
    if isinstance(model, SvrModel):
        return {
            "family": "svr",
            "encoding_scheme": model.encoding_scheme,
            "kernel": {"kind": model.kernel.kind, "gamma": model.kernel.gamma},
            "C": model.C,
            "epsilon": model.epsilon,
            "support_vectors": model.support_vectors.tolist(),
            "dual_coeffs": model.dual_coeffs.tolist(),
            "bias": model.bias,
            "feature_dim": model.feature_dim,
            "support_indices": list(model.support_indices),
            "training_fingerprint": model.training_fingerprint,
        }
    raise ConfigError(f"unknown model type {type(model).__name__}")


def model_from_dict(d: dict) -> RidgeModel | SvrModel:
    try:
        family = d["family"]
        if family == "ridge":
            return RidgeModel(
                weights=np.asarray(d["weights"], dtype=float),
                bias=float(d["bias"]),
                lam=float(d["lambda"]),
                encoding_scheme=d["encoding_scheme"],
                training_fingerprint=d.get("training_fingerprint"),
            )
        if family == "svr":
            sv = np.asarray(d["support_vectors"], dtype=float)
            if sv.size == 0:
                sv = sv.reshape(0, int(d["feature_dim"]))
            return SvrModel(
                support_vectors=sv,
                dual_coeffs=np.asarray(d["dual_coeffs"], dtype=float),
                bias=float(d["bias"]),
                kernel=KernelSpec(d["kernel"]["kind"], d["kernel"].get("gamma")),
                C=float(d["C"]),
                epsilon=float(d["epsilon"]),
                feature_dim=int(d["feature_dim"]),
                support_indices=tuple(d.get("support_indices", ())),
                encoding_scheme=d["encoding_scheme"],
                training_fingerprint=d.get("training_fingerprint"),
            )
        raise ConfigError(f"unknown model family {family!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed model document: {exc}") from exc


def save_model(model, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def load_model(path: str | Path) -> RidgeModel | SvrModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Trial protocol for predictor quality analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialResult:
    train_size: int
    trial: int
    mape: float
    kendall: float


def run_prediction_trials(
    X,
    y,
    fit_fn,
    train_sizes,
    test_size: int = 500,
    trials: int = 10,
    seed: int = 0,
) -> list[TrialResult]:
    """Repeated train/test analysis of a predictor.

    Per trial the pool is shuffled, a fixed test set of `test_size` rows is
    held out, and the predictor is retrained on nested subsets of the
    remaining rows at each requested training size.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    train_sizes = sorted(set(int(s) for s in train_sizes))
    needed = test_size + max(train_sizes)
    if X.shape[0] < needed:
        raise ConfigError(
            f"need at least {needed} pooled samples, have {X.shape[0]}"
        )
    results = []
    for trial in range(trials):
        rng = np.random.default_rng(subseed(seed, "predict-trial", trial))
        perm = rng.permutation(X.shape[0])
        test_idx = perm[:test_size]
        pool_idx = perm[test_size:]
        for size in train_sizes:
            train_idx = pool_idx[:size]
            model = fit_fn(X[train_idx], y[train_idx])
            preds = predict(model, X[test_idx])
            results.append(
                TrialResult(
                    train_size=size,
                    trial=trial,
                    mape=mape(y[test_idx], preds),
                    kendall=kendall_tau(y[test_idx], preds),
                )
            )
    return results
