"""Tabular data handling: schema-driven CSV ingestion, standardization,
splitting, correlation-based column filters, and a synthetic generator whose
utility signal is laid out so that masking the sensitive block costs accuracy
without destroying the task."""

import csv
import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateSplit, EmptyDataset, InvalidSpec, IoError,
                     LengthMismatch, MalformedCell, MissingColumn,
                     NoFeaturesRemain, SchemaError)
from .jsonio import read_json, write_json
from .seeding import derive_rng

ROLES = ("feature", "utility_label", "privacy_label", "ignore")
KINDS = ("numeric", "categorical")

SCHEMA_VERSION = "pcal-schema-v1"

# Stddev floor used when a column is (near) constant.
STD_EPS = 1e-12


@dataclass
class ColumnSpec:
    """One source column: its name, role in the pipeline, and value kind."""

    name: str
    role: str
    kind: str = "numeric"

    def __post_init__(self):
        if self.role not in ROLES:
            raise SchemaError(f"column {self.name!r}: unknown role {self.role!r}")
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.role in ("utility_label", "privacy_label") and self.kind != "numeric":
            raise SchemaError(f"column {self.name!r}: {self.role} must be numeric")


def validate_schema(schema):
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise SchemaError(f"duplicate column names in schema: {dupes}")
    n_util = sum(1 for c in schema if c.role == "utility_label")
    if n_util != 1:
        raise SchemaError(f"schema needs exactly one utility_label, found {n_util}")
    if not any(c.role == "privacy_label" for c in schema):
        raise SchemaError("schema needs at least one privacy_label column")
    return schema


class Dataset:
    """Feature matrix plus task and protected-attribute targets.

    Arrays are locked read-only after construction; operations return new
    Dataset objects.  privacy_derived marks feature columns that carry a
    protected attribute directly (by default: feature names that also appear
    among the privacy target names).
    """

    def __init__(self, schema, features, feature_names, utility_labels,
                 privacy_labels, privacy_names, privacy_derived=None):
        self.schema = validate_schema(list(schema))
        self.features = np.array(features, dtype=np.float64)
        self.feature_names = list(feature_names)
        self.utility_labels = np.array(utility_labels, dtype=np.float64)
        self.privacy_labels = np.array(privacy_labels, dtype=np.float64)
        self.privacy_names = list(privacy_names)
        if privacy_derived is None:
            privacy_derived = [n in set(self.privacy_names) for n in self.feature_names]
        self.privacy_derived = list(privacy_derived)
        self._validate()
        for arr in (self.features, self.utility_labels, self.privacy_labels):
            arr.setflags(write=False)

    def _validate(self):
        if self.features.ndim != 2:
            raise SchemaError("features must be a 2-D matrix")
        n, d = self.features.shape
        if d < 1:
            raise NoFeaturesRemain("dataset has no feature columns")
        if self.privacy_labels.ndim != 2 or self.privacy_labels.shape[1] < 1:
            raise SchemaError("privacy_labels must be a 2-D matrix with >= 1 column")
        if self.utility_labels.ndim != 1:
            raise SchemaError("utility_labels must be a vector")
        if not (len(self.utility_labels) == n == self.privacy_labels.shape[0]):
            raise SchemaError("row counts of features and labels disagree")
        if len(self.feature_names) != d or len(self.privacy_derived) != d:
            raise SchemaError("feature metadata length does not match features")
        if len(self.privacy_names) != self.privacy_labels.shape[1]:
            raise SchemaError("privacy_names length does not match privacy_labels")
        if not np.all(np.isfinite(self.features)):
            raise MalformedCell("features contain non-finite values")
        if not np.all(np.isfinite(self.privacy_labels)):
            raise MalformedCell("privacy labels contain non-finite values")
        bad = ~np.isin(self.utility_labels, (0.0, 1.0))
        if bad.any():
            raise MalformedCell(
                f"utility labels must be 0 or 1; first bad row {int(np.argmax(bad))}")

    @property
    def row_count(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def n_privacy(self):
        return self.privacy_labels.shape[1]

    def with_feature_subset(self, keep_idx):
        keep_idx = list(keep_idx)
        if not keep_idx:
            raise NoFeaturesRemain("filter removed every feature column")
        return Dataset(self.schema,
                       self.features[:, keep_idx],
                       [self.feature_names[i] for i in keep_idx],
                       self.utility_labels,
                       self.privacy_labels,
                       self.privacy_names,
                       [self.privacy_derived[i] for i in keep_idx])

    def with_rows(self, idx):
        return Dataset(self.schema, self.features[idx], self.feature_names,
                       self.utility_labels[idx], self.privacy_labels[idx],
                       self.privacy_names, self.privacy_derived)

    def content_id(self):
        """Hash of matrices and names; identifies dataset content."""
        h = hashlib.sha256()
        h.update(self.features.tobytes())
        h.update(self.utility_labels.tobytes())
        h.update(self.privacy_labels.tobytes())
        h.update("\x1f".join(self.feature_names + self.privacy_names).encode())
        return h.hexdigest()[:16]


@dataclass
class ScalerParams:
    """Per-column centering/scaling for features and privacy targets."""

    feature_mean: np.ndarray
    feature_std: np.ndarray
    privacy_mean: np.ndarray
    privacy_std: np.ndarray


@dataclass
class SyntheticSpec:
    """Knobs for generate_synthetic."""

    n_rows: int = 5000
    n_private_driver_features: int = 2
    n_correlated_features: int = 3
    n_free_features: int = 3
    noise_std: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_rows < 1:
            raise InvalidSpec(f"n_rows must be >= 1, got {self.n_rows}")
        if self.n_private_driver_features < 1:
            raise InvalidSpec("n_private_driver_features must be >= 1, got "
                              f"{self.n_private_driver_features}")
        if self.n_correlated_features < 0:
            raise InvalidSpec("n_correlated_features must be >= 0, got "
                              f"{self.n_correlated_features}")
        if self.n_free_features < 1:
            raise InvalidSpec(f"n_free_features must be >= 1, got {self.n_free_features}")
        total = (self.n_private_driver_features + self.n_correlated_features
                 + self.n_free_features)
        if total < 2:
            raise InvalidSpec(f"total feature count must be >= 2, got {total}")
        if self.noise_std < 0:
            raise InvalidSpec(f"noise_std must be >= 0, got {self.noise_std}")

    def to_dict(self):
        return {
            "n_rows": self.n_rows,
            "n_private_driver_features": self.n_private_driver_features,
            "n_correlated_features": self.n_correlated_features,
            "n_free_features": self.n_free_features,
            "noise_std": self.noise_std,
            "seed": self.seed,
        }


# schema JSON ----------------------------------------------------------------

def write_schema(schema, path):
    validate_schema(schema)
    doc = {
        "version": SCHEMA_VERSION,
        "columns": {c.name: {"role": c.role, "kind": c.kind} for c in schema},
    }
    write_json(path, doc)


def load_schema(path):
    try:
        doc = read_json(path)
    except IoError as exc:
        raise SchemaError(str(exc)) from exc
    columns = doc.get("columns", doc) if isinstance(doc, dict) else None
    if not isinstance(columns, dict) or not columns:
        raise SchemaError(f"{path}: schema must map column names to role/kind")
    specs = []
    for name, entry in columns.items():
        if not isinstance(entry, dict) or "role" not in entry:
            raise SchemaError(f"{path}: column {name!r} needs a role")
        specs.append(ColumnSpec(name, entry["role"], entry.get("kind", "numeric")))
    return validate_schema(specs)


# CSV ingestion / export -----------------------------------------------------

def _parse_numeric(cell, row_idx, col_name):
    try:
        value = float(cell)
    except (TypeError, ValueError):
        raise MalformedCell(
            f"row {row_idx}, column {col_name!r}: cannot parse {cell!r} as a number"
        ) from None
    if not np.isfinite(value):
        raise MalformedCell(
            f"row {row_idx}, column {col_name!r}: non-finite value {cell!r}")
    return value


def load_csv(path, schema):
    """Build a Dataset from an RFC-4180 CSV with a header row.

    Categorical feature columns are one-hot encoded with categories in sorted
    order; ignore-role columns are dropped without parsing.
    """
    validate_schema(schema)
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{path}: file has no header row") from None
        rows = list(reader)
    if not rows:
        raise EmptyDataset(f"{path}: no data rows")

    by_name = {c.name: c for c in schema}
    col_index = {}
    for name in by_name:
        if name not in header:
            raise MissingColumn(f"{path}: schema column {name!r} not in CSV header")
    for pos, name in enumerate(header):
        if name not in by_name:
            raise SchemaError(f"{path}: CSV column {name!r} is not in the schema")
        if name in col_index:
            raise SchemaError(f"{path}: duplicate CSV column {name!r}")
        col_index[name] = pos

    arity = len(header)
    for i, row in enumerate(rows):
        if len(row) != arity:
            raise MalformedCell(f"row {i}: has {len(row)} cells, expected {arity}")

    feature_cols = []   # (name, values) in header order, one-hot expanded
    privacy_cols = []
    utility_values = None
    for name in header:
        spec = by_name[name]
        pos = col_index[name]
        if spec.role == "ignore":
            continue
        if spec.role == "feature" and spec.kind == "categorical":
            raw = [row[pos] for row in rows]
            for cat in sorted(set(raw)):
                feature_cols.append(
                    (f"{name}={cat}", [1.0 if v == cat else 0.0 for v in raw]))
            continue
        values = [_parse_numeric(row[pos], i, name) for i, row in enumerate(rows)]
        if spec.role == "feature":
            feature_cols.append((name, values))
        elif spec.role == "privacy_label":
            privacy_cols.append((name, values))
        else:
            utility_values = values

    if not feature_cols:
        raise NoFeaturesRemain(f"{path}: schema declares no feature columns")
    features = np.column_stack([v for _, v in feature_cols])
    privacy = np.column_stack([v for _, v in privacy_cols])
    return Dataset(schema, features, [n for n, _ in feature_cols],
                   np.asarray(utility_values), privacy, [n for n, _ in privacy_cols])


def _fmt(value):
    return format(float(value), ".17g")


def write_csv(ds, csv_path, schema_path=None):
    """Write the dataset (post-encoding, numeric-only) and optionally a schema
    that reloads it.  Values are printed at 17 significant digits, so a reload
    reproduces the matrices exactly."""
    utility_name = next(c.name for c in ds.schema if c.role == "utility_label")
    taken = set(ds.feature_names) | {utility_name}
    privacy_out = []
    for name in ds.privacy_names:
        out = name
        while out in taken:
            out = out + "_target"   # avoid duplicate headers when a feature shares the name
        taken.add(out)
        privacy_out.append(out)

    header = list(ds.feature_names) + [utility_name] + privacy_out
    try:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(ds.row_count):
                row = [_fmt(v) for v in ds.features[i]]
                row.append(_fmt(ds.utility_labels[i]))
                row.extend(_fmt(v) for v in ds.privacy_labels[i])
                writer.writerow(row)
    except OSError as exc:
        raise IoError(f"cannot write {csv_path}: {exc}") from exc

    out_schema = ([ColumnSpec(n, "feature", "numeric") for n in ds.feature_names]
                  + [ColumnSpec(utility_name, "utility_label")]
                  + [ColumnSpec(n, "privacy_label") for n in privacy_out])
    if schema_path is not None:
        write_schema(out_schema, schema_path)
    return out_schema


# transforms -----------------------------------------------------------------

def standardize(ds):
    """Center and scale features and privacy targets to mean 0, stddev 1.

    Population (divide-by-n) convention; a column with stddev below 1e-12 is
    centered and left unscaled via the floored divisor.  Returns the new
    Dataset and the ScalerParams that invert it.
    """
    fmean = ds.features.mean(axis=0)
    fstd = np.maximum(ds.features.std(axis=0), STD_EPS)
    pmean = ds.privacy_labels.mean(axis=0)
    pstd = np.maximum(ds.privacy_labels.std(axis=0), STD_EPS)
    out = Dataset(ds.schema, (ds.features - fmean) / fstd, ds.feature_names,
                  ds.utility_labels, (ds.privacy_labels - pmean) / pstd,
                  ds.privacy_names, ds.privacy_derived)
    return out, ScalerParams(fmean, fstd, pmean, pstd)


def invert_standardize(ds, params):
    """Undo standardize(); exact up to float rounding."""
    return Dataset(ds.schema,
                   ds.features * params.feature_std + params.feature_mean,
                   ds.feature_names, ds.utility_labels,
                   ds.privacy_labels * params.privacy_std + params.privacy_mean,
                   ds.privacy_names, ds.privacy_derived)


def split(ds, eval_fraction, seed):
    """Deterministic row split into (train, eval).

    eval row count is floor(fraction * n), clamped so neither side is empty.
    """
    if not 0.0 < eval_fraction < 1.0:
        raise DegenerateSplit(f"eval_fraction must be in (0, 1), got {eval_fraction}")
    n = ds.row_count
    if n < 2:
        raise DegenerateSplit(f"cannot split {n} rows into two non-empty parts")
    n_eval = int(np.floor(eval_fraction * n))
    n_eval = max(1, min(n - 1, n_eval))
    perm = np.random.default_rng(int(seed)).permutation(n)
    eval_idx = np.sort(perm[:n_eval])
    train_idx = np.sort(perm[n_eval:])
    return ds.with_rows(train_idx), ds.with_rows(eval_idx)


def pearson_correlation(x, y):
    """Pearson correlation; 0.0 when either vector is constant."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise LengthMismatch(f"length {x.size} vs {y.size}")
    if x.size < 2:
        raise LengthMismatch("need at least 2 samples")
    sx = x.std()
    sy = y.std()
    if sx == 0.0 or sy == 0.0:
        return 0.0
    xn = (x - x.mean()) / sx
    yn = (y - y.mean()) / sy
    return float(np.clip(np.mean(xn * yn), -1.0, 1.0))


def filter_weak_protection(ds):
    """Drop feature columns that carry a protected attribute directly."""
    keep = [i for i, flag in enumerate(ds.privacy_derived) if not flag]
    return ds.with_feature_subset(keep)


def filter_strong_protection(ds, threshold=0.4):
    """Drop privacy-derived columns plus any feature whose |correlation| with
    some privacy target exceeds the threshold."""
    keep = []
    for i in range(ds.n_features):
        if ds.privacy_derived[i]:
            continue
        col = ds.features[:, i]
        if any(abs(pearson_correlation(col, ds.privacy_labels[:, j])) > threshold
               for j in range(ds.n_privacy)):
            continue
        keep.append(i)
    return ds.with_feature_subset(keep)


# synthetic generator ---------------------------------------------------------

# Relative weights of the three utility-score components (sensitive block,
# correlated block, free block).  Dropping the sensitive block caps attainable
# accuracy near 80%; dropping the correlated block too caps it near 65%.
UTILITY_WEIGHTS = (0.588, 0.670, 0.454)


def generate_synthetic(spec):
    """Generate a dataset with a tunable privacy/utility layout.

    Sensitive columns are iid standard normals; the single privacy target is
    their mean direction plus Gaussian noise, so a linear regressor on the
    sensitive block recovers it (exactly when noise_std=0).  Correlated
    columns mix the privacy signal with fresh noise.  The binary utility label
    thresholds a linear score whose components are constructed orthogonal to
    the privacy signal, so a transform can in principle keep the task solvable
    while revealing nothing about the target.
    """
    if not isinstance(spec, SyntheticSpec):
        raise InvalidSpec(f"expected SyntheticSpec, got {type(spec).__name__}")
    rng = derive_rng(spec.seed, "data")
    n = spec.n_rows
    kd, kc, kf = (spec.n_private_driver_features, spec.n_correlated_features,
                  spec.n_free_features)

    # Fixed draw order keeps same-seed outputs byte-identical.
    drivers = rng.standard_normal((n, kd))
    label_noise = rng.standard_normal(n)
    corr_noise = rng.standard_normal((n, kc)) if kc else np.zeros((n, 0))
    free = rng.standard_normal((n, kf))

    w = np.full(kd, 1.0 / np.sqrt(kd))
    signal = drivers @ w                       # unit-variance privacy signal
    y_p = signal + spec.noise_std * label_noise

    if kc:
        rho = np.linspace(0.5, 0.85, kc)
        correlated = signal[:, None] * rho + corr_noise * np.sqrt(1.0 - rho ** 2)
    else:
        rho = np.zeros(0)
        correlated = corr_noise

    parts = []
    alpha_d, alpha_c, alpha_f = UTILITY_WEIGHTS
    if kd >= 2:
        v = np.zeros(kd)
        v[0], v[1] = 1.0 / np.sqrt(2.0), -1.0 / np.sqrt(2.0)   # orthogonal to w
        parts.append(alpha_d * (drivers @ v))
    if kc >= 2:
        ones = np.ones(kc)
        c = ones - (ones @ rho) / (rho @ rho) * rho             # orthogonal to rho
        norm = np.sqrt(np.sum(c ** 2 * (1.0 - rho ** 2)))
        if norm > 1e-12:
            parts.append(alpha_c * (correlated @ (c / norm)))
    parts.append(alpha_f * (free @ np.full(kf, 1.0 / np.sqrt(kf))))
    score = np.sum(parts, axis=0)
    y_t = (score > 0.0).astype(np.float64)

    feature_names = ([f"sensitive_{i}" for i in range(kd)]
                     + [f"correlated_{j}" for j in range(kc)]
                     + [f"free_{k}" for k in range(kf)])
    schema = ([ColumnSpec(name, "feature") for name in feature_names]
              + [ColumnSpec("outcome", "utility_label"),
                 ColumnSpec("sensitive_index", "privacy_label")])
    return Dataset(schema, np.hstack([drivers, correlated, free]), feature_names,
                   y_t, y_p[:, None], ["sensitive_index"],
                   [True] * kd + [False] * (kc + kf))
