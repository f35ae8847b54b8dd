"""Regression models used to attack a released representation.

All models are built on numpy directly so their behaviour is pinned by this
package: an elastic net solved by cyclic coordinate descent, a random forest
of variance-reduction CART trees, a linear epsilon-insensitive SVR trained by
subgradient descent, and dense nets in five preset shapes.  Each model is
deterministic given its seed and exposes fit(X, y) / predict(X) for a single
target vector.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import (ConstantTarget, DimMismatch, InvalidSpec, IoError,
                     LengthMismatch, NotConvergedWarning, NotFitted)
from .jsonio import read_json, write_json
from .seeding import derive_rng, derive_seed

# Hidden-layer widths for the dense-net attackers.
MLP_PRESETS = {
    "standard": [64, 64],
    "wide": [256, 256],
    "narrow": [16, 16],
    "shallow": [64],
    "deep": [64, 64, 64, 64],
}

# Names and order of the held-out evaluation suite.
EVALUATION_SUITE = ("SVR", "RFR", "ElasticNet", "Wide Net", "Narrow Net",
                    "Shallow Net", "Deep Net", "Standard Net")

MODEL_DUMP_VERSION = "pcal-regressor-v1"


def _check_xy(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.ndim != 2:
        raise DimMismatch(f"X must be 2-D, got ndim={x.ndim}")
    if x.shape[0] != y.size:
        raise LengthMismatch(f"X has {x.shape[0]} rows, y has {y.size}")
    if x.shape[0] < 1:
        raise LengthMismatch("need at least one row")
    return x, y


def r_squared(pred, target):
    """Coefficient of determination, 1 - SS_res / SS_tot.

    SS_tot is taken about the target mean.  May be negative for predictors
    worse than the mean.  Raises ConstantTarget when SS_tot is zero.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise LengthMismatch(f"length {pred.size} vs {target.size}")
    if target.size < 2:
        raise LengthMismatch("need at least 2 samples")
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    if ss_tot == 0.0:
        raise ConstantTarget("target vector is constant; r_squared undefined")
    ss_res = float(np.sum((target - pred) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass
class ElasticNetParams:
    alpha: float = 0.01
    l1_ratio: float = 0.5
    max_iters: int = 1000
    tol: float = 1e-6

    def __post_init__(self):
        if self.alpha < 0:
            raise InvalidSpec(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.l1_ratio <= 1.0:
            raise InvalidSpec(f"l1_ratio must be in [0, 1], got {self.l1_ratio}")
        if self.max_iters < 1:
            raise InvalidSpec("max_iters must be >= 1")


def _soft_threshold(z, gamma):
    return np.sign(z) * max(abs(z) - gamma, 0.0)


class ElasticNetRegressor:
    """Linear model with L1+L2 penalty, solved by cyclic coordinate descent.

    Minimizes (1/2n)||y - Xw - b||^2 + alpha*(l1_ratio*||w||_1
    + (1-l1_ratio)/2*||w||_2^2) with an unpenalized intercept.
    """

    kind = "elastic_net"

    def __init__(self, params=None, record_objective=False):
        self.params = params or ElasticNetParams()
        self.record_objective = record_objective
        self.objective_history = []
        self.coef_ = None
        self.intercept_ = 0.0
        self.seed = None    # deterministic solver; kept for a uniform interface

    def _objective(self, x, y):
        n = x.shape[0]
        resid = y - x @ self.coef_ - self.intercept_
        p = self.params
        return (0.5 / n) * float(resid @ resid) + p.alpha * (
            p.l1_ratio * float(np.abs(self.coef_).sum())
            + 0.5 * (1.0 - p.l1_ratio) * float(self.coef_ @ self.coef_))

    def fit(self, x, y):
        x, y = _check_xy(x, y)
        n, d = x.shape
        p = self.params
        self.coef_ = np.zeros(d)
        self.intercept_ = float(y.mean())
        self.objective_history = []
        col_sq = (x * x).mean(axis=0)            # (1/n) sum x_ij^2 per column
        resid = y - self.intercept_              # residual excludes nothing else yet
        l1_pen = p.alpha * p.l1_ratio
        l2_pen = p.alpha * (1.0 - p.l1_ratio)
        for _ in range(p.max_iters):
            max_change = 0.0
            for j in range(d):
                old = self.coef_[j]
                xj = x[:, j]
                # rho_j = (1/n) x_j . (resid + x_j w_j): correlation with the
                # residual that excludes column j's own contribution
                rho = (xj @ resid) / n + col_sq[j] * old
                denom = col_sq[j] + l2_pen
                new = 0.0 if denom == 0.0 else _soft_threshold(rho, l1_pen) / denom
                if new != old:
                    resid += xj * (old - new)
                    self.coef_[j] = new
                    max_change = max(max_change, abs(new - old))
            new_b = self.intercept_ + resid.mean()
            change_b = abs(new_b - self.intercept_)
            resid -= new_b - self.intercept_
            self.intercept_ = new_b
            if self.record_objective:
                self.objective_history.append(self._objective(x, y))
            if max(max_change, change_b) < p.tol:
                break
        else:
            warnings.warn("coordinate descent hit max_iters before tol",
                          NotConvergedWarning)
        return self

    def predict(self, x):
        if self.coef_ is None:
            raise NotFitted("elastic net predict() before fit()")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.coef_.size:
            raise DimMismatch(f"expected 2-D X with {self.coef_.size} columns")
        return x @ self.coef_ + self.intercept_

    def to_dict(self):
        if self.coef_ is None:
            raise NotFitted("cannot dump an unfitted model")
        return {"kind": self.kind,
                "alpha": self.params.alpha, "l1_ratio": self.params.l1_ratio,
                "coef": self.coef_.tolist(), "intercept": self.intercept_}


@dataclass
class ForestParams:
    n_trees: int = 50
    max_depth: int = 8
    min_samples_leaf: int = 5
    feature_subsample: float = 0.7
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise InvalidSpec("n_trees must be >= 1")
        if self.max_depth < 0:
            raise InvalidSpec("max_depth must be >= 0")
        if self.min_samples_leaf < 1:
            raise InvalidSpec("min_samples_leaf must be >= 1")
        if not 0.0 < self.feature_subsample <= 1.0:
            raise InvalidSpec("feature_subsample must be in (0, 1]")


class _TreeNode:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, value=0.0):
        self.feature = -1
        self.threshold = 0.0
        self.left = None
        self.right = None
        self.value = value

    @property
    def is_leaf(self):
        return self.left is None


def _best_split(x, y, feat_idx, min_leaf):
    """Best (feature, threshold) by squared-error reduction, or None.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values of each candidate feature.
    """
    n = y.size
    best = None
    best_score = np.inf    # total child SSE; lower is better
    for f in feat_idx:
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        ys = y[order]
        cum = np.cumsum(ys)
        cum_sq = np.cumsum(ys * ys)
        # split after position i puts i+1 rows left
        counts = np.arange(1, n)
        valid = xs[1:] > xs[:-1]
        valid &= (counts >= min_leaf) & (n - counts >= min_leaf)
        if not valid.any():
            continue
        left_sum = cum[:-1]
        left_sq = cum_sq[:-1]
        right_sum = cum[-1] - left_sum
        right_sq = cum_sq[-1] - left_sq
        sse = (left_sq - left_sum ** 2 / counts
               + right_sq - right_sum ** 2 / (n - counts))
        sse[~valid] = np.inf
        i = int(np.argmin(sse))
        if sse[i] < best_score - 1e-12:
            best_score = sse[i]
            best = (f, 0.5 * (xs[i] + xs[i + 1]))
    return best


def _grow_tree(x, y, depth, params, rng, n_features):
    node = _TreeNode(float(y.mean()))
    if depth >= params.max_depth or y.size < 2 * params.min_samples_leaf:
        return node
    if np.ptp(y) == 0.0:
        return node
    k = max(1, int(round(params.feature_subsample * n_features)))
    feat_idx = np.sort(rng.choice(n_features, size=k, replace=False))
    found = _best_split(x, y, feat_idx, params.min_samples_leaf)
    if found is None:
        return node
    f, thr = found
    mask = x[:, f] <= thr
    node.feature = int(f)
    node.threshold = float(thr)
    node.left = _grow_tree(x[mask], y[mask], depth + 1, params, rng, n_features)
    node.right = _grow_tree(x[~mask], y[~mask], depth + 1, params, rng, n_features)
    return node


def _tree_predict(node, x):
    out = np.empty(x.shape[0])
    stack = [(node, np.arange(x.shape[0]))]
    while stack:
        nd, idx = stack.pop()
        if nd.is_leaf:
            out[idx] = nd.value
            continue
        mask = x[idx, nd.feature] <= nd.threshold
        stack.append((nd.left, idx[mask]))
        stack.append((nd.right, idx[~mask]))
    return out


class RandomForestRegressor:
    """Bagged CART regression trees; prediction is the mean over trees."""

    kind = "random_forest"

    def __init__(self, params=None, seed=0):
        self.params = params or ForestParams()
        self.seed = int(seed)
        self.trees_ = None

    def fit(self, x, y):
        x, y = _check_xy(x, y)
        n, d = x.shape
        self.trees_ = []
        for t in range(self.params.n_trees):
            rng = derive_rng(self.seed, "tree", t)
            if self.params.bootstrap:
                idx = rng.integers(0, n, size=n)
                xt, yt = x[idx], y[idx]
            else:
                xt, yt = x, y
            self.trees_.append(_grow_tree(xt, yt, 0, self.params, rng, d))
        return self

    def predict(self, x):
        if self.trees_ is None:
            raise NotFitted("forest predict() before fit()")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise DimMismatch("X must be 2-D")
        preds = np.stack([_tree_predict(t, x) for t in self.trees_])
        return preds.mean(axis=0)

    def _dump_tree(self, node):
        # flatten to parallel arrays in preorder
        feats, thrs, lefts, rights, values = [], [], [], [], []

        def visit(nd):
            i = len(feats)
            feats.append(nd.feature)
            thrs.append(nd.threshold)
            values.append(nd.value)
            lefts.append(-1)
            rights.append(-1)
            if not nd.is_leaf:
                lefts[i] = visit(nd.left)
                rights[i] = visit(nd.right)
            return i

        visit(node)
        return {"feature": feats, "threshold": thrs, "left": lefts,
                "right": rights, "value": values}

    def to_dict(self):
        if self.trees_ is None:
            raise NotFitted("cannot dump an unfitted model")
        return {"kind": self.kind, "seed": self.seed,
                "params": {"n_trees": self.params.n_trees,
                           "max_depth": self.params.max_depth,
                           "min_samples_leaf": self.params.min_samples_leaf,
                           "feature_subsample": self.params.feature_subsample,
                           "bootstrap": self.params.bootstrap},
                "trees": [self._dump_tree(t) for t in self.trees_]}


@dataclass
class SvrParams:
    epsilon: float = 0.1
    c: float = 1.0
    learning_rate: float = 0.1
    epochs: int = 300

    def __post_init__(self):
        if self.epsilon < 0:
            raise InvalidSpec("epsilon must be >= 0")
        if self.c < 0:
            raise InvalidSpec("c must be >= 0")
        if self.learning_rate <= 0 or self.epochs < 1:
            raise InvalidSpec("learning_rate must be > 0 and epochs >= 1")


class LinearSvr:
    """Linear epsilon-insensitive regression by full-batch subgradient descent.

    Objective: 0.5*||w||^2 + c * sum_i max(0, |y_i - w.x_i - b| - epsilon).
    The subgradient is scaled by 1/n and the step decays as 1/sqrt(t), which
    keeps the configured learning_rate meaningful across sample sizes.
    """

    kind = "linear_svr"

    def __init__(self, params=None):
        self.params = params or SvrParams()
        self.coef_ = None
        self.intercept_ = 0.0
        self.seed = None   # full-batch updates; nothing random

    def fit(self, x, y):
        x, y = _check_xy(x, y)
        n, d = x.shape
        p = self.params
        w = np.zeros(d)
        b = float(y.mean())
        for t in range(p.epochs):
            resid = y - x @ w - b
            outside = np.abs(resid) > p.epsilon
            sign = np.sign(resid) * outside
            gw = w - p.c * (x.T @ sign)
            gb = -p.c * float(sign.sum())
            lr = p.learning_rate / np.sqrt(1.0 + t)
            w -= lr * gw / n
            b -= lr * gb / n
        self.coef_ = w
        self.intercept_ = b
        return self

    def predict(self, x):
        if self.coef_ is None:
            raise NotFitted("svr predict() before fit()")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.coef_.size:
            raise DimMismatch(f"expected 2-D X with {self.coef_.size} columns")
        return x @ self.coef_ + self.intercept_

    def to_dict(self):
        if self.coef_ is None:
            raise NotFitted("cannot dump an unfitted model")
        return {"kind": self.kind, "epsilon": self.params.epsilon,
                "c": self.params.c, "coef": self.coef_.tolist(),
                "intercept": self.intercept_}


@dataclass
class MlpParams:
    epochs: int = 60
    batch_size: int = 128
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise InvalidSpec("mlp params out of range")


class MlpRegressor:
    """Dense-net regressor in one of the preset shapes, trained with Adam."""

    kind = "mlp"

    def __init__(self, shape_name, seed=0, params=None):
        if shape_name not in MLP_PRESETS:
            raise InvalidSpec(f"unknown mlp preset {shape_name!r}; "
                              f"choose from {sorted(MLP_PRESETS)}")
        self.shape_name = shape_name
        self.seed = int(seed)
        self.params = params or MlpParams()
        self.net_ = None

    def fit(self, x, y):
        x, y = _check_xy(x, y)
        n, d = x.shape
        target = y[:, None]
        widths = [d] + MLP_PRESETS[self.shape_name] + [1]
        net = nn.init_net(nn.NetShape(widths), derive_seed(self.seed, "init"))
        state = nn.OptimizerState(learning_rate=self.params.learning_rate)
        rng = derive_rng(self.seed, "batches")
        bs = min(self.params.batch_size, n)
        for _ in range(self.params.epochs):
            order = rng.permutation(n)
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                pred, cache = nn.forward(net, x[idx])
                _, grad = nn.mse_loss(pred, target[idx])
                grads, _ = nn.backward(net, cache, grad)
                nn.optimizer_step(net, grads, state)
        self.net_ = net
        return self

    def predict(self, x):
        if self.net_ is None:
            raise NotFitted("mlp predict() before fit()")
        out, _ = nn.forward(self.net_, np.asarray(x, dtype=np.float64))
        return out[:, 0]

    def to_dict(self, checkpoint_path=None):
        """Dump with the net either inline or by checkpoint reference."""
        if self.net_ is None:
            raise NotFitted("cannot dump an unfitted model")
        doc = {"kind": self.kind, "shape_name": self.shape_name, "seed": self.seed}
        if checkpoint_path is None:
            doc["net"] = {
                "version": nn.CHECKPOINT_VERSION,
                "shape": self.net_.shape.to_dict(),
                "seed": self.net_.init_seed,
                "layers": [{"weights": w.tolist(), "bias": b.tolist()}
                           for w, b in zip(self.net_.weights, self.net_.biases)],
            }
        else:
            nn.save_net(self.net_, checkpoint_path)
            doc["net_checkpoint"] = str(checkpoint_path)
        return doc


# convenience fit functions mirroring the operation surface ------------------

def fit_elastic_net(x, y, params=None):
    return ElasticNetRegressor(params).fit(x, y)


def fit_random_forest(x, y, params=None, seed=0):
    return RandomForestRegressor(params, seed).fit(x, y)


def fit_linear_svr(x, y, params=None):
    return LinearSvr(params).fit(x, y)


def fit_mlp_attacker(x, y, shape_name, seed=0, params=None):
    return MlpRegressor(shape_name, seed, params).fit(x, y)


def build_evaluation_suite(d, seed):
    """The eight held-out attack models, unfitted, with derived seeds.

    Same (d, seed) always yields identical initial states.  The seeds come
    from a dedicated stream so they cannot collide with a training ensemble
    built from the same root seed.
    """
    if d < 1:
        raise InvalidSpec(f"input width must be >= 1, got {d}")
    suite = []
    for name in EVALUATION_SUITE:
        s = derive_seed(seed, "suite", name)
        if name == "SVR":
            model = LinearSvr()
        elif name == "RFR":
            model = RandomForestRegressor(seed=s)
        elif name == "ElasticNet":
            model = ElasticNetRegressor()
        else:
            preset = name.rsplit(" ", 1)[0].lower()
            model = MlpRegressor(preset, seed=s)
        suite.append((name, model))
    return suite


def save_regressor(model, path, checkpoint_path=None):
    """Write a fitted model as a versioned JSON document."""
    if isinstance(model, MlpRegressor):
        doc = model.to_dict(checkpoint_path)
    else:
        doc = model.to_dict()
    doc["version"] = MODEL_DUMP_VERSION
    write_json(path, doc)


def load_regressor(path):
    doc = read_json(path)
    if doc.get("version") != MODEL_DUMP_VERSION:
        raise IoError(f"{path}: expected version {MODEL_DUMP_VERSION}, "
                      f"got {doc.get('version')!r}")
    kind = doc.get("kind")
    if kind == "elastic_net":
        model = ElasticNetRegressor(ElasticNetParams(doc["alpha"], doc["l1_ratio"]))
        model.coef_ = np.array(doc["coef"], dtype=np.float64)
        model.intercept_ = float(doc["intercept"])
        return model
    if kind == "linear_svr":
        model = LinearSvr(SvrParams(epsilon=doc["epsilon"], c=doc["c"]))
        model.coef_ = np.array(doc["coef"], dtype=np.float64)
        model.intercept_ = float(doc["intercept"])
        return model
    if kind == "random_forest":
        model = RandomForestRegressor(ForestParams(**doc["params"]), doc["seed"])
        model.trees_ = [_load_tree(t) for t in doc["trees"]]
        return model
    if kind == "mlp":
        model = MlpRegressor(doc["shape_name"], doc["seed"])
        if "net" in doc:
            net_doc = doc["net"]
            shape = nn.NetShape.from_dict(net_doc["shape"])
            weights = [np.array(l["weights"]) for l in net_doc["layers"]]
            biases = [np.array(l["bias"]) for l in net_doc["layers"]]
            model.net_ = nn.DenseNet(shape, weights, biases, int(net_doc["seed"]))
        else:
            model.net_ = nn.load_net(doc["net_checkpoint"])
        return model
    raise IoError(f"{path}: unknown regressor kind {kind!r}")


def _load_tree(doc):
    nodes = [_TreeNode(v) for v in doc["value"]]
    for i, nd in enumerate(nodes):
        nd.feature = doc["feature"][i]
        nd.threshold = doc["threshold"][i]
        li, ri = doc["left"][i], doc["right"][i]
        if li >= 0:
            nd.left = nodes[li]
            nd.right = nodes[ri]
    return nodes[0]
