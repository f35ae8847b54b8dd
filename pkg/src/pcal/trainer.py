"""Adversarial training of a masking net.

Three parties share one representation Z = f_A(X): the anonymizer f_A, a task
net f_T predicting the utility label from Z, and an ensemble of hacker nets
each regressing the protected attributes from Z.  Each minibatch runs two
phases:

  1. hacker round: every ensemble member takes k optimizer steps on its own
     regression loss, with Z treated as a constant (f_A and f_T untouched);
  2. adversary round: f_A and f_T take one step each on
     J = task_loss + lambda * phi, where phi is minus the loss of the
     reduced ensemble member (by default the current best hacker, i.e. the
     strongest attacker), whose parameters stay frozen.

Driving phi down means making even the best hacker's loss large.  When the
per-epoch phi stops improving for `restart_patience` epochs, every ensemble
member is reinitialized with fresh seeds while f_A and f_T keep their weights,
which gives the adversary a new population of attackers to fool.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .attackers import MLP_PRESETS
from .errors import (ConfigError, DimMismatch, IoError, MissingCheckpoint,
                     NonFiniteLoss)
from .jsonio import read_json, write_json
from .seeding import derive_rng, derive_seed

PHI_REDUCTIONS = ("min", "max", "mean")

# Ensemble member shapes cycle through the presets in this order.
ENSEMBLE_SHAPE_ORDER = ("standard", "wide", "narrow", "shallow", "deep")

TRAIN_MANIFEST_VERSION = "pcal-train-v1"


@dataclass
class PcalConfig:
    """Hyperparameters of one adversarial training run.

    lambda_ weighs the privacy term against the task loss; 0 disables the
    privacy term entirely, in which case the run degenerates to joint
    task-only training (hackers still train, but never influence f_A/f_T).
    ensemble_seed defaults to a stream derived from seed; setting it
    explicitly varies hacker initialization without touching anything else.
    """

    lambda_: float = 1.0
    repr_width: int = None          # None: same width as the input
    epochs: int = 60
    batch_size: int = 128
    lr_anonymizer: float = 1e-3
    lr_task: float = 1e-3
    lr_hacker: float = 1e-3
    ensemble_size: int = 5
    hacker_steps: int = 5
    restart_patience: int = 10
    restart_min_delta: float = 1e-4
    seed: int = 0
    ensemble_seed: int = None
    phi_reduction: str = "min"
    hidden_width: int = 64

    def __post_init__(self):
        if self.lambda_ < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lambda_}")
        if self.repr_width is not None and self.repr_width < 1:
            raise ConfigError("repr_width must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        for name in ("lr_anonymizer", "lr_task", "lr_hacker"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.ensemble_size < 1:
            raise ConfigError("ensemble_size must be >= 1")
        if self.hacker_steps < 1:
            raise ConfigError("hacker_steps must be >= 1")
        if self.restart_patience < 1:
            raise ConfigError("restart_patience must be >= 1")
        if self.restart_min_delta < 0:
            raise ConfigError("restart_min_delta must be >= 0")
        if self.phi_reduction not in PHI_REDUCTIONS:
            raise ConfigError(f"phi_reduction must be one of {PHI_REDUCTIONS}")
        if self.hidden_width < 1:
            raise ConfigError("hidden_width must be >= 1")

    def to_dict(self):
        return {
            "lambda": self.lambda_,
            "repr_width": self.repr_width,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr_anonymizer": self.lr_anonymizer,
            "lr_task": self.lr_task,
            "lr_hacker": self.lr_hacker,
            "ensemble_size": self.ensemble_size,
            "hacker_steps": self.hacker_steps,
            "restart_patience": self.restart_patience,
            "restart_min_delta": self.restart_min_delta,
            "seed": self.seed,
            "ensemble_seed": self.ensemble_seed,
            "phi_reduction": self.phi_reduction,
            "hidden_width": self.hidden_width,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "lambda" in d:
            d["lambda_"] = d.pop("lambda")
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown pcal config fields: {sorted(unknown)}")
        return cls(**d)


class HackerEnsemble:
    """Fixed-size population of dense-net attackers trained inside the loop."""

    def __init__(self, members, opt_states, seeds, lr):
        self.members = members
        self.opt_states = opt_states
        self.seeds = list(seeds)
        self.lr = lr
        self.all_seeds = list(seeds)    # every seed ever used, across restarts

    @classmethod
    def build(cls, size, in_width, out_width, lr, ensemble_seed):
        members, states, seeds = [], [], []
        for i in range(size):
            preset = ENSEMBLE_SHAPE_ORDER[i % len(ENSEMBLE_SHAPE_ORDER)]
            widths = [in_width] + MLP_PRESETS[preset] + [out_width]
            seed = derive_seed(ensemble_seed, "member", i, 0)
            members.append(nn.init_net(nn.NetShape(widths), seed))
            states.append(nn.OptimizerState(learning_rate=lr))
            seeds.append(seed)
        if len(set(seeds)) != size:
            raise ConfigError("derived ensemble seeds collide; change the seed")
        return cls(members, states, seeds, lr)

    def __len__(self):
        return len(self.members)

    def reinit_all(self, ensemble_seed, restart_count):
        """Fresh weights and optimizer states for every member."""
        for i in range(len(self.members)):
            seed = derive_seed(ensemble_seed, "member", i, restart_count)
            self.members[i] = nn.reinit(self.members[i], seed)
            self.opt_states[i] = nn.OptimizerState(learning_rate=self.lr)
            self.seeds[i] = seed
            self.all_seeds.append(seed)


@dataclass
class PcalState:
    """Everything produced by train_pcal."""

    config: PcalConfig
    anonymizer: nn.DenseNet
    task_net: nn.DenseNet
    ensemble: HackerEnsemble
    anonymizer_opt: nn.OptimizerState
    task_opt: nn.OptimizerState
    history: list = field(default_factory=list)
    best_phi: float = np.inf
    epochs_since_improvement: int = 0
    restart_count: int = 0


def compute_phi(ensemble, z, y_p, reduction="min"):
    """Privacy proxy from the hacker ensemble on representation z.

    Returns (phi, winner_index, member_losses).  phi is minus the reduced
    member loss; with the default "min" reduction the winner is the member
    with the smallest loss (the strongest attacker), ties resolved to the
    lowest index.  "max" selects the weakest attacker instead and "mean"
    averages all members.
    """
    if reduction not in PHI_REDUCTIONS:
        raise ConfigError(f"unknown phi reduction {reduction!r}")
    losses = []
    for member in ensemble.members:
        pred, _ = nn.forward(member, z)
        loss, _ = nn.mse_loss(pred, y_p)
        losses.append(loss)
    arr = np.asarray(losses)
    if reduction == "max":
        winner = int(np.argmax(arr))
        phi = -float(arr[winner])
    elif reduction == "mean":
        winner = int(np.argmin(arr))
        phi = -float(arr.mean())
    else:
        winner = int(np.argmin(arr))
        phi = -float(arr[winner])
    return phi, winner, losses


def hacker_update_round(state, x_batch, yp_batch, k=None, member_order=None):
    """Train every ensemble member for k steps on the current representation.

    The representation is computed once and treated as a constant; f_A and
    f_T are not touched.  Members are independent, so any update order yields
    identical results (member_order exists to make that assertable).
    """
    k = state.config.hacker_steps if k is None else int(k)
    z = anonymize(state.anonymizer, x_batch)
    order = range(len(state.ensemble)) if member_order is None else member_order
    for i in order:
        member = state.ensemble.members[i]
        opt = state.ensemble.opt_states[i]
        for _ in range(k):
            pred, cache = nn.forward(member, z)
            loss, grad = nn.mse_loss(pred, yp_batch)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"hacker {i} loss is not finite")
            grads, _ = nn.backward(member, cache, grad)
            nn.optimizer_step(member, grads, opt)
    return state


def adversary_update_round(state, x_batch, yt_batch, yp_batch, lambda_=None):
    """One joint step of f_A and f_T against the frozen winning hacker.

    The task gradient flows into f_T and through it into f_A; the privacy
    gradient flows into f_A through the reduced hacker member(s), whose own
    parameters stay frozen.  With lambda 0 the privacy term is skipped
    outright and f_A/f_T see only the task loss.  Returns per-batch metrics
    (task loss, member losses, phi, winner).
    """
    cfg = state.config
    lambda_ = cfg.lambda_ if lambda_ is None else float(lambda_)
    z, cache_a = nn.forward(state.anonymizer, x_batch)
    pred_t, cache_t = nn.forward(state.task_net, z)
    l_task, grad_t = nn.mse_loss(pred_t, yt_batch)
    if not np.isfinite(l_task):
        raise NonFiniteLoss("task loss is not finite")
    task_grads, gz_task = nn.backward(state.task_net, cache_t, grad_t)

    phi, winner, losses = compute_phi(state.ensemble, z, yp_batch,
                                      cfg.phi_reduction)
    if not np.all(np.isfinite(losses)):
        raise NonFiniteLoss("a hacker loss is not finite")

    gz = gz_task
    if lambda_ > 0.0:
        if cfg.phi_reduction == "mean":
            gz_priv = np.zeros_like(z)
            for member in state.ensemble.members:
                pred_p, cache_p = nn.forward(member, z)
                _, grad_p = nn.mse_loss(pred_p, yp_batch)
                _, gz_m = nn.backward(member, cache_p, grad_p)
                gz_priv += gz_m
            gz_priv /= len(state.ensemble)
        else:
            member = state.ensemble.members[winner]
            pred_p, cache_p = nn.forward(member, z)
            _, grad_p = nn.mse_loss(pred_p, yp_batch)
            _, gz_priv = nn.backward(member, cache_p, grad_p)
        gz = gz_task - lambda_ * gz_priv

    anon_grads, _ = nn.backward(state.anonymizer, cache_a, gz)
    nn.optimizer_step(state.anonymizer, anon_grads, state.anonymizer_opt)
    nn.optimizer_step(state.task_net, task_grads, state.task_opt)
    return l_task, losses, phi, winner


def restart_if_stalled(state, patience=None, min_delta=None):
    """Reinitialize the whole ensemble when phi has stopped improving.

    Improvement means the latest epoch phi undercuts the best phi seen so far
    by at least min_delta.  After `patience` consecutive epochs without one,
    every member gets fresh weights (seeds derived from a restart counter)
    and a fresh optimizer state; f_A and f_T are left exactly as they are.
    Returns (state, restarted).
    """
    cfg = state.config
    patience = cfg.restart_patience if patience is None else int(patience)
    min_delta = cfg.restart_min_delta if min_delta is None else float(min_delta)
    if not state.history:
        raise ConfigError("restart check needs at least one completed epoch")
    phi = state.history[-1]["phi"]
    if phi < state.best_phi - min_delta:
        state.best_phi = phi
        state.epochs_since_improvement = 0
        return state, False
    state.epochs_since_improvement += 1
    if state.epochs_since_improvement < patience:
        return state, False
    state.restart_count += 1
    ens_seed = _ensemble_seed(cfg)
    state.ensemble.reinit_all(ens_seed, state.restart_count)
    state.epochs_since_improvement = 0
    state.history[-1]["restarted"] = True
    return state, True


def _ensemble_seed(cfg):
    if cfg.ensemble_seed is not None:
        return cfg.ensemble_seed
    return derive_seed(cfg.seed, "ensemble")


def _as_column(vec):
    return np.asarray(vec, dtype=np.float64)[:, None]


def init_state(config, n_features, n_privacy):
    """Freshly initialized nets and ensemble for a training run."""
    rw = config.repr_width or n_features
    h = config.hidden_width
    f_a = nn.init_net(nn.NetShape([n_features, h, h, rw]),
                      derive_seed(config.seed, "anonymizer"))
    f_t = nn.init_net(nn.NetShape([rw, h, h, 1], output_activation="sigmoid"),
                      derive_seed(config.seed, "task"))
    ens = HackerEnsemble.build(config.ensemble_size, rw, n_privacy,
                               config.lr_hacker, _ensemble_seed(config))
    return PcalState(
        config=config, anonymizer=f_a, task_net=f_t, ensemble=ens,
        anonymizer_opt=nn.OptimizerState(learning_rate=config.lr_anonymizer),
        task_opt=nn.OptimizerState(learning_rate=config.lr_task))


def train_pcal(config, train_ds, debug_isolation=False):
    """Run the full adversarial loop on a (standardized) training dataset.

    Per epoch: shuffle rows, then for each minibatch run a hacker round
    followed by an adversary round; record epoch means and check the restart
    condition.  Everything is deterministic given config.seed.  With
    debug_isolation=True, parameter checksums assert each round that hacker
    rounds never touch f_A/f_T and adversary rounds never touch the ensemble.
    """
    x = train_ds.features
    yt = _as_column(train_ds.utility_labels)
    yp = train_ds.privacy_labels
    n = x.shape[0]
    state = init_state(config, x.shape[1], yp.shape[1])
    batch_rng = derive_rng(config.seed, "batches")
    bs = min(config.batch_size, n)

    for epoch in range(config.epochs):
        order = batch_rng.permutation(n)
        task_sum = 0.0
        member_sums = np.zeros(len(state.ensemble))
        rows_seen = 0
        try:
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                xb, ytb, ypb = x[idx], yt[idx], yp[idx]
                if debug_isolation:
                    before = (nn.net_checksum(state.anonymizer),
                              nn.net_checksum(state.task_net))
                hacker_update_round(state, xb, ypb)
                if debug_isolation:
                    after = (nn.net_checksum(state.anonymizer),
                             nn.net_checksum(state.task_net))
                    assert before == after, "hacker round touched f_A or f_T"
                    ens_before = [nn.net_checksum(m) for m in state.ensemble.members]
                l_task, losses, _, _ = adversary_update_round(state, xb, ytb, ypb)
                if debug_isolation:
                    ens_after = [nn.net_checksum(m) for m in state.ensemble.members]
                    assert ens_before == ens_after, "adversary round touched the ensemble"
                task_sum += l_task * len(idx)
                member_sums += np.asarray(losses) * len(idx)
                rows_seen += len(idx)
        except NonFiniteLoss as exc:
            raise NonFiniteLoss(f"epoch {epoch}: {exc}") from exc

        l_hackers = (member_sums / rows_seen).tolist()
        arr = np.asarray(l_hackers)
        if config.phi_reduction == "max":
            winner = int(np.argmax(arr))
            phi = -float(arr[winner])
        elif config.phi_reduction == "mean":
            winner = int(np.argmin(arr))
            phi = -float(arr.mean())
        else:
            winner = int(np.argmin(arr))
            phi = -float(arr[winner])
        state.history.append({
            "epoch": epoch,
            "l_task": task_sum / rows_seen,
            "l_hackers": l_hackers,
            "phi": phi,
            "winner": winner,
            "restarted": False,
        })
        restart_if_stalled(state)
    return state


def anonymize(anonymizer, x):
    """Apply the masking net; pure function of (net, x)."""
    out, _ = nn.forward(anonymizer, np.asarray(x, dtype=np.float64))
    return out


# artifacts -------------------------------------------------------------------

def write_history(state, path):
    """History as JSON lines, one epoch per line."""
    import json

    try:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in state.history:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def save_training(state, out_dir):
    """Dump nets and a manifest into a checkpoint directory."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    nn.save_net(state.anonymizer, os.path.join(out_dir, "anonymizer.json"))
    nn.save_net(state.task_net, os.path.join(out_dir, "task.json"))
    member_files = []
    for i, member in enumerate(state.ensemble.members):
        name = f"member_{i:02d}.json"
        nn.save_net(member, os.path.join(out_dir, name))
        member_files.append(name)
    write_json(os.path.join(out_dir, "manifest.json"), {
        "version": TRAIN_MANIFEST_VERSION,
        "anonymizer": "anonymizer.json",
        "task": "task.json",
        "ensemble": member_files,
        "ensemble_seeds": state.ensemble.seeds,
        "all_ensemble_seeds": state.ensemble.all_seeds,
        "restart_count": state.restart_count,
        "epochs_completed": len(state.history),
        "config": state.config.to_dict(),
    })


def load_training(check_dir):
    """Rebuild a PcalState from a checkpoint directory.

    Optimizer moments are not checkpointed, so the result is for inference
    and evaluation, not for resuming training mid-run.
    """
    import os

    manifest_path = os.path.join(check_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise MissingCheckpoint(f"no training manifest at {manifest_path}")
    doc = read_json(manifest_path)
    if doc.get("version") != TRAIN_MANIFEST_VERSION:
        raise IoError(f"{manifest_path}: expected version {TRAIN_MANIFEST_VERSION}, "
                      f"got {doc.get('version')!r}")
    config = PcalConfig.from_dict(doc["config"])
    for key in ("anonymizer", "task"):
        if not os.path.exists(os.path.join(check_dir, doc[key])):
            raise MissingCheckpoint(f"missing {doc[key]} in {check_dir}")
    anonymizer = nn.load_net(os.path.join(check_dir, doc["anonymizer"]))
    task_net = nn.load_net(os.path.join(check_dir, doc["task"]))
    members = [nn.load_net(os.path.join(check_dir, f)) for f in doc["ensemble"]]
    ens = HackerEnsemble(members,
                         [nn.OptimizerState(learning_rate=config.lr_hacker)
                          for _ in members],
                         doc["ensemble_seeds"], config.lr_hacker)
    ens.all_seeds = list(doc["all_ensemble_seeds"])
    state = PcalState(
        config=config, anonymizer=anonymizer, task_net=task_net, ensemble=ens,
        anonymizer_opt=nn.OptimizerState(learning_rate=config.lr_anonymizer),
        task_opt=nn.OptimizerState(learning_rate=config.lr_task),
        restart_count=doc["restart_count"])
    return state
