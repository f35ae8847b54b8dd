"""Watch the adversarial loop push the hackers away from the protected value.

Trains a small masking net twice: once with the privacy term switched off
(lambda 0) and once with it active.  The winner column is the training-time
hacker loss; higher means the released representation tells it less.
"""

from pcal.data import SyntheticSpec, generate_synthetic, split, standardize
from pcal.trainer import PcalConfig, train_pcal

ds, _ = standardize(generate_synthetic(SyntheticSpec(n_rows=1000, seed=3)))
train_ds, _ = split(ds, 0.2, seed=0)

for lam in (0.0, 2.0):
    cfg = PcalConfig(lambda_=lam, epochs=12, batch_size=128, ensemble_size=3,
                     hidden_width=16, repr_width=4, seed=9)
    state = train_pcal(cfg, train_ds)
    print(f"lambda={lam}")
    print(f"  {'epoch':>5} {'task loss':>10} {'winner hacker loss':>19}")
    for rec in state.history[::3]:
        print(f"  {rec['epoch']:>5} {rec['l_task']:>10.4f} "
              f"{min(rec['l_hackers']):>19.4f}")
    print()

# a stalled run: with lambda 0 the hackers only get better, so the best phi
# from epoch 0 is never undercut and the ensemble is re-randomized
cfg = PcalConfig(lambda_=0.0, epochs=8, batch_size=128, ensemble_size=3,
                 hidden_width=16, repr_width=4, seed=9, restart_patience=3)
state = train_pcal(cfg, train_ds)
restarts = [rec["epoch"] for rec in state.history if rec["restarted"]]
print(f"stalled run: ensemble restarts at epochs {restarts}, "
      f"{state.restart_count} total")
