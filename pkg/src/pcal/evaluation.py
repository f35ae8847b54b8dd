"""Scoring protocol for released representations.

Privacy is audited by fitting a fixed suite of eight held-out attack models
on the training-side representation and scoring r-squared per protected
attribute on the evaluation side; the headline number is the worst case over
attackers and attributes.  Utility is the accuracy of a fresh task net
trained on the same representation, so every method is scored by the same
procedure regardless of how the representation was produced.
"""

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .attackers import EVALUATION_SUITE, build_evaluation_suite, r_squared
from .data import filter_strong_protection, filter_weak_protection, split
from .errors import ConfigError, IoError
from .jsonio import dumps_canonical
from .seeding import derive_rng, derive_seed
from .trainer import anonymize, train_pcal

METHODS = ("UP", "WP", "SP", "PCAL")
# Column order used by rendered tables.
METHOD_ORDER = ("WP", "SP", "PCAL", "UP")

REPORT_VERSION = "pcal-report-v1"

UTILITY_ROW_LABEL = "Loan Decision Accuracy"


@dataclass
class EvalReport:
    """Scores of one method on one dataset."""

    method: str
    utility_accuracy: float
    attack_table: dict                 # attacker name -> {per_attribute, mean}
    worst_case_r2: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if set(self.attack_table) != set(EVALUATION_SUITE):
            raise ConfigError("attack_table must have exactly the suite's "
                              f"attacker names {list(EVALUATION_SUITE)}")

    def to_dict(self):
        return {
            "version": REPORT_VERSION,
            "method": self.method,
            "utility_accuracy": self.utility_accuracy,
            "attack_table": {
                name: {"per_attribute": list(entry["per_attribute"]),
                       "mean": entry["mean"]}
                for name, entry in self.attack_table.items()
            },
            "worst_case_r2": self.worst_case_r2,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("version") != REPORT_VERSION:
            raise IoError(f"expected report version {REPORT_VERSION}, "
                          f"got {doc.get('version')!r}")
        return cls(doc["method"], doc["utility_accuracy"], doc["attack_table"],
                   doc["worst_case_r2"], doc.get("metadata", {}))


def _zscore_pair(train, other):
    """Standardize both matrices with the training-side statistics."""
    mean = train.mean(axis=0)
    std = np.maximum(train.std(axis=0), 1e-12)
    return (train - mean) / std, (other - mean) / std


def _thread_count():
    """Worker count for attacker fits; PCAL_THREADS=0 means auto."""
    raw = os.environ.get("PCAL_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"PCAL_THREADS must be an integer, got {raw!r}") from None
    if value < 0:
        raise ConfigError("PCAL_THREADS must be >= 0")
    if value == 0:
        return os.cpu_count() or 1
    return value


def evaluate_privacy(z_train, yp_train, z_eval, yp_eval, suite_seed):
    """Fit the eight-attacker suite and score r-squared per attribute.

    Representations are standardized with training-side statistics before
    fitting (an attacker could always do this, so the audit should).  Returns
    (attack_table, worst_case_r2); fits are independent and may run in
    parallel (capped by PCAL_THREADS) without changing the result.
    """
    z_train = np.asarray(z_train, dtype=np.float64)
    z_eval = np.asarray(z_eval, dtype=np.float64)
    yp_train = np.atleast_2d(np.asarray(yp_train, dtype=np.float64).T).T
    yp_eval = np.atleast_2d(np.asarray(yp_eval, dtype=np.float64).T).T
    zt, ze = _zscore_pair(z_train, z_eval)
    suite = build_evaluation_suite(zt.shape[1], suite_seed)
    n_attr = yp_train.shape[1]

    def score_one(model):
        scores = []
        for j in range(n_attr):
            model.fit(zt, yp_train[:, j])
            scores.append(r_squared(model.predict(ze), yp_eval[:, j]))
        return scores

    workers = _thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            all_scores = list(pool.map(score_one, [m for _, m in suite]))
    else:
        all_scores = [score_one(m) for _, m in suite]

    table = {}
    worst = -np.inf
    for (name, _), scores in zip(suite, all_scores):
        table[name] = {"per_attribute": scores,
                       "mean": float(np.mean(scores))}
        worst = max(worst, max(scores))
    return table, float(worst)


def evaluate_utility(z_train, yt_train, z_eval, yt_eval, seed,
                     epochs=50, batch_size=128, learning_rate=1e-3,
                     hidden_width=64):
    """Accuracy (percent) of a fresh sigmoid task net trained on z_train.

    The same training recipe is used for every method so utility numbers are
    comparable.  Predictions are thresholded at 0.5.
    """
    z_train = np.asarray(z_train, dtype=np.float64)
    z_eval = np.asarray(z_eval, dtype=np.float64)
    yt_train = np.asarray(yt_train, dtype=np.float64).ravel()[:, None]
    yt_eval = np.asarray(yt_eval, dtype=np.float64).ravel()
    zt, ze = _zscore_pair(z_train, z_eval)
    n, d = zt.shape
    net = nn.init_net(nn.NetShape([d, hidden_width, hidden_width, 1],
                                  output_activation="sigmoid"),
                      derive_seed(seed, "utility-net"))
    state = nn.OptimizerState(learning_rate=learning_rate)
    rng = derive_rng(seed, "utility-batches")
    bs = min(batch_size, n)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            pred, cache = nn.forward(net, zt[idx])
            _, grad = nn.mse_loss(pred, yt_train[idx])
            grads, _ = nn.backward(net, cache, grad)
            nn.optimizer_step(net, grads, state)
    pred, _ = nn.forward(net, ze)
    return 100.0 * float(np.mean((pred[:, 0] > 0.5) == (yt_eval > 0.5)))


def _representation_views(method, ds):
    """Column view of the dataset a method releases (None for PCAL)."""
    if method == "UP":
        return ds
    if method == "WP":
        return filter_weak_protection(ds)
    if method == "SP":
        return filter_strong_protection(ds)
    return None


def assert_suite_disjoint(suite_seed, trained_state):
    """Evaluation attackers must be untrained, unseen models.

    Asserts that no evaluation-suite seed collides with any seed the training
    ensemble ever used and that no parameter array is shared between the two
    populations.
    """
    suite_seeds = {derive_seed(suite_seed, "suite", name)
                   for name in EVALUATION_SUITE}
    train_seeds = set(trained_state.ensemble.all_seeds)
    overlap = suite_seeds & train_seeds
    if overlap:
        raise ConfigError(f"evaluation suite shares seeds with the training "
                          f"ensemble: {sorted(overlap)}")
    member_arrays = {id(p) for m in trained_state.ensemble.members
                     for p in m.params()}
    suite = build_evaluation_suite(1, suite_seed)
    for name, model in suite:
        net = getattr(model, "net_", None)
        if net is not None and any(id(p) in member_arrays for p in net.params()):
            raise ConfigError(f"evaluation attacker {name} shares arrays with "
                              "the training ensemble")
    return True


def run_method(method, ds, pcal_config=None, *, root_seed, eval_fraction=0.2,
               split_seed=None, trained=None, utility_epochs=50):
    """Produce an EvalReport for one method on a standardized dataset.

    The dataset is split with a seed derived from root_seed (or the explicit
    split_seed), so every method sees the same rows.  For PCAL, a trained
    state may be supplied (e.g. from checkpoints); otherwise training runs
    here on the train split.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")
    if split_seed is None:
        split_seed = derive_seed(root_seed, "split")
    suite_seed = derive_seed(root_seed, "eval")
    utility_seed = derive_seed(root_seed, "utility")

    view = _representation_views(method, ds)
    if method == "PCAL":
        train_ds, eval_ds = split(ds, eval_fraction, split_seed)
        if pcal_config is None:
            raise ConfigError("PCAL needs a pcal_config")
        if trained is None:
            trained = train_pcal(pcal_config, train_ds)
        assert_suite_disjoint(suite_seed, trained)
        z_train = anonymize(trained.anonymizer, train_ds.features)
        z_eval = anonymize(trained.anonymizer, eval_ds.features)
    else:
        train_ds, eval_ds = split(view, eval_fraction, split_seed)
        z_train, z_eval = train_ds.features, eval_ds.features

    utility = evaluate_utility(z_train, train_ds.utility_labels,
                               z_eval, eval_ds.utility_labels, utility_seed,
                               epochs=utility_epochs)
    table, worst = evaluate_privacy(z_train, train_ds.privacy_labels,
                                    z_eval, eval_ds.privacy_labels, suite_seed)

    metadata = {
        "seeds": {"root": int(root_seed), "split": split_seed,
                  "suite": suite_seed, "utility": utility_seed},
        "config_hash": _config_hash(pcal_config),
        "dataset_id": ds.content_id(),
        "timestamps": None,
        "privacy_attributes": list(ds.privacy_names),
        "eval_fraction": eval_fraction,
        "representation_width": int(z_train.shape[1]),
    }
    if method == "PCAL":
        pred, _ = nn.forward(trained.task_net,
                             anonymize(trained.anonymizer, eval_ds.features))
        cotrained = 100.0 * float(np.mean(
            (pred[:, 0] > 0.5) == (eval_ds.utility_labels > 0.5)))
        metadata["cotrained_task_accuracy"] = cotrained
        metadata["suite_disjoint_from_training"] = True
        metadata["restart_count"] = trained.restart_count
    return EvalReport(method, utility, table, worst, metadata)


def _config_hash(pcal_config):
    if pcal_config is None:
        return None
    blob = dumps_canonical(pcal_config.to_dict()).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


# rendering -------------------------------------------------------------------

def _ordered(reports):
    by_method = {}
    for rep in reports:
        if rep.method in by_method:
            raise ConfigError(f"duplicate report for method {rep.method}")
        by_method[rep.method] = rep
    return [by_method[m] for m in METHOD_ORDER if m in by_method]


def render_report(reports, fmt="text-table"):
    """Render EvalReports as a text table, canonical JSON, or flat CSV.

    The text table puts methods in WP/SP/PCAL/UP column order, one utility
    row on top and one row per attacker below (mean r-squared over
    attributes).  JSON renders are canonical, so render(parse(render)) is
    byte-stable.
    """
    reports = list(reports)
    if not reports:
        raise ConfigError("need at least one report to render")
    ordered = _ordered(reports)
    if fmt == "json":
        return dumps_canonical([rep.to_dict() for rep in ordered])
    if fmt == "csv":
        lines = ["method,metric,attacker,attribute,value"]
        for rep in ordered:
            attrs = rep.metadata.get(
                "privacy_attributes",
                [str(i) for i in range(len(next(iter(
                    rep.attack_table.values()))["per_attribute"]))])
            lines.append(f"{rep.method},utility_accuracy,,,{rep.utility_accuracy!r}")
            for name in EVALUATION_SUITE:
                entry = rep.attack_table[name]
                for attr, value in zip(attrs, entry["per_attribute"]):
                    lines.append(f"{rep.method},attack_r2,{name},{attr},{value!r}")
            lines.append(f"{rep.method},worst_case_r2,,,{rep.worst_case_r2!r}")
        return "\n".join(lines) + "\n"
    if fmt != "text-table":
        raise ConfigError(f"unknown report format {fmt!r}")

    label_width = max(len(UTILITY_ROW_LABEL), *(len(n) for n in EVALUATION_SUITE))
    col_width = 8
    header = " ".join([" " * label_width]
                      + [f"{rep.method:>{col_width}}" for rep in ordered])
    rows = [header]
    utility_cells = [f"{rep.utility_accuracy:>{col_width}.2f}" for rep in ordered]
    rows.append(" ".join([f"{UTILITY_ROW_LABEL:<{label_width}}"] + utility_cells))
    for name in EVALUATION_SUITE:
        cells = [f"{rep.attack_table[name]['mean']:>{col_width}.2f}"
                 for rep in ordered]
        rows.append(" ".join([f"{name:<{label_width}}"] + cells))
    return "\n".join(rows) + "\n"
