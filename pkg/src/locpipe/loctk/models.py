"""Closed-form ridge regression and exhaustive k-nearest-neighbors.

Both models are implemented in plain Python on plain floats: no numerics
framework, no threads, no global state. That keeps every fit and prediction
bit-reproducible for identical inputs, which is what the cache and the
exact-rerun guarantee are built on. ``alpha = 0`` recovers ordinary linear
least squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from ..errors import BuiltinError

KNN_WEIGHTS = ("uniform", "distance")
KNN_METRICS = ("euclidean", "manhattan")

Matrix = list[list[float]]


class SingularSystemError(BuiltinError):
    """The normal equations are (numerically) singular."""


def _cholesky_solve(a: Matrix, b: Matrix) -> Matrix:
    """Solve A X = B for symmetric positive-definite A via Cholesky."""
    n = len(a)
    scale = max((abs(a[i][i]) for i in range(n)), default=1.0)
    tol = 1e-10 * max(scale, 1.0)
    lower = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1):
            acc = sum(lower[i][m] * lower[j][m] for m in range(j))
            if i == j:
                diag = a[i][i] - acc
                if diag <= tol:
                    raise SingularSystemError("normal equations are singular")
                lower[i][i] = math.sqrt(diag)
            else:
                lower[i][j] = (a[i][j] - acc) / lower[j][j]
    cols = len(b[0])
    # forward substitution: L z = b
    z = [[0.0] * cols for _ in range(n)]
    for i in range(n):
        for c in range(cols):
            acc = sum(lower[i][m] * z[m][c] for m in range(i))
            z[i][c] = (b[i][c] - acc) / lower[i][i]
    # back substitution: L^T x = z
    x = [[0.0] * cols for _ in range(n)]
    for i in range(n - 1, -1, -1):
        for c in range(cols):
            acc = sum(lower[m][i] * x[m][c] for m in range(i + 1, n))
            x[i][c] = (z[i][c] - acc) / lower[i][i]
    return x


@dataclass(frozen=True)
class RidgeModel:
    coef: Matrix            # m features x 2 targets
    intercept: list[float]  # per target

    def predict(self, rows: Sequence[Sequence[float]]) -> Matrix:
        preds = []
        for row in rows:
            out = list(self.intercept)
            for value, coefs in zip(row, self.coef):
                out[0] += value * coefs[0]
                out[1] += value * coefs[1]
            preds.append(out)
        return preds


def ridge_fit(
    x_rows: Sequence[Sequence[float]],
    y_rows: Sequence[Sequence[float]],
    alpha: float,
    fit_intercept: bool,
) -> RidgeModel:
    """Normal-equation ridge fit, one solve shared by both target columns.

    With ``fit_intercept`` the design and targets are centered on the
    training data and the intercept is recovered afterwards, so the penalty
    never applies to the intercept.
    """
    if alpha < 0:
        raise BuiltinError(f"ridge: alpha must be >= 0, got {alpha}")
    n = len(x_rows)
    if n == 0:
        raise BuiltinError("ridge: empty training set")
    m = len(x_rows[0])
    x_mean = [0.0] * m
    y_mean = [0.0, 0.0]
    if fit_intercept:
        for row in x_rows:
            for j, value in enumerate(row):
                x_mean[j] += value
        x_mean = [v / n for v in x_mean]
        for row in y_rows:
            y_mean[0] += row[0]
            y_mean[1] += row[1]
        y_mean = [v / n for v in y_mean]

    xtx = [[0.0] * m for _ in range(m)]
    xty = [[0.0, 0.0] for _ in range(m)]
    for row, target in zip(x_rows, y_rows):
        xc = [row[j] - x_mean[j] for j in range(m)]
        yc = [target[0] - y_mean[0], target[1] - y_mean[1]]
        for j in range(m):
            xj = xc[j]
            for l in range(j, m):
                xtx[j][l] += xj * xc[l]
            xty[j][0] += xj * yc[0]
            xty[j][1] += xj * yc[1]
    for j in range(m):
        for l in range(j):
            xtx[j][l] = xtx[l][j]
        xtx[j][j] += alpha

    coef = _cholesky_solve(xtx, xty)
    intercept = [0.0, 0.0]
    if fit_intercept:
        intercept = [
            y_mean[0] - sum(x_mean[j] * coef[j][0] for j in range(m)),
            y_mean[1] - sum(x_mean[j] * coef[j][1] for j in range(m)),
        ]
    return RidgeModel(coef=coef, intercept=intercept)


@dataclass(frozen=True)
class KnnModel:
    train_x: Matrix
    train_y: Matrix
    k: int
    weights: str
    metric: str

    def predict(self, rows: Sequence[Sequence[float]]) -> Matrix:
        return [knn_predict_one(self.train_x, self.train_y, row, self.k, self.weights, self.metric)
                for row in rows]


def _distance(a: Sequence[float], b: Sequence[float], metric: str) -> float:
    if metric == "euclidean":
        return math.sqrt(sum((u - v) ** 2 for u, v in zip(a, b)))
    return sum(abs(u - v) for u, v in zip(a, b))


def knn_predict_one(
    train_x: Matrix,
    train_y: Matrix,
    query: Sequence[float],
    k: int,
    weights: str,
    metric: str,
) -> list[float]:
    """Exhaustive scan; ties at the k boundary break toward the lowest row index.

    ``distance`` weighting uses 1/d; any zero-distance neighbors among the k
    take over exclusively (prediction = mean of their targets).
    """
    n = len(train_x)
    if not 1 <= k <= n:
        raise BuiltinError(f"knn: k must be in [1, {n}], got {k}")
    if weights not in KNN_WEIGHTS:
        raise BuiltinError(f"knn: unknown weights '{weights}'")
    if metric not in KNN_METRICS:
        raise BuiltinError(f"knn: unknown metric '{metric}'")
    scored = sorted(
        ((_distance(query, row, metric), idx) for idx, row in enumerate(train_x)),
        key=lambda pair: (pair[0], pair[1]),
    )[:k]
    if weights == "distance":
        exact = [idx for dist, idx in scored if dist == 0.0]
        if exact:
            return [
                sum(train_y[i][0] for i in exact) / len(exact),
                sum(train_y[i][1] for i in exact) / len(exact),
            ]
        total = 0.0
        acc = [0.0, 0.0]
        for dist, idx in scored:
            w = 1.0 / dist
            total += w
            acc[0] += w * train_y[idx][0]
            acc[1] += w * train_y[idx][1]
        return [acc[0] / total, acc[1] / total]
    return [
        sum(train_y[idx][0] for _, idx in scored) / k,
        sum(train_y[idx][1] for _, idx in scored) / k,
    ]


# ---------------------------------------------------------------------------
# Model artifacts (reloadable JSON documents)


def fit_model(model_id: str, params: dict, x_rows: Matrix, y_rows: Matrix):
    if model_id == "ridge":
        return ridge_fit(x_rows, y_rows, params["alpha"], params["fit_intercept"])
    if model_id == "knn":
        if params["k"] > len(x_rows):
            raise BuiltinError(f"knn: k={params['k']} exceeds training size {len(x_rows)}")
        return KnnModel(
            train_x=[list(r) for r in x_rows],
            train_y=[list(r) for r in y_rows],
            k=params["k"],
            weights=params["weights"],
            metric=params["metric"],
        )
    raise BuiltinError(f"unknown model '{model_id}'")


def artifact_doc(model_id: str, params: dict, fitted) -> dict:
    if model_id == "ridge":
        return {
            "model": "ridge",
            "params": params,
            "coef": fitted.coef,
            "intercept": fitted.intercept,
        }
    return {
        "model": "knn",
        "params": params,
        "train_x": fitted.train_x,
        "train_y": fitted.train_y,
    }


def load_artifact(doc: dict):
    """Rebuild a fitted model from its artifact document."""
    try:
        model_id = doc["model"]
        params = doc["params"]
        if model_id == "ridge":
            return RidgeModel(coef=doc["coef"], intercept=doc["intercept"])
        if model_id == "knn":
            return KnnModel(
                train_x=doc["train_x"],
                train_y=doc["train_y"],
                k=params["k"],
                weights=params["weights"],
                metric=params["metric"],
            )
    except (KeyError, TypeError):
        raise BuiltinError("corrupt model artifact") from None
    raise BuiltinError(f"unknown model '{model_id}' in artifact")
