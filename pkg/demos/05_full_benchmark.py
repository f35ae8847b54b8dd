"""Run the four-method comparison through the library, no CLI involved.

A smaller dataset than the default benchmark keeps this quick; the ordering
is the same: the adversarially masked representation keeps almost all of the
task accuracy while the worst-case attack drops to the strong baseline's
level.
"""

from pcal.data import SyntheticSpec, generate_synthetic, standardize
from pcal.evaluation import render_report, run_method
from pcal.trainer import PcalConfig

ds, _ = standardize(generate_synthetic(SyntheticSpec(n_rows=1500, seed=1)))
cfg = PcalConfig(lambda_=1.0, epochs=30, batch_size=128, seed=5)

reports = [run_method(method, ds, cfg, root_seed=99)
           for method in ("UP", "WP", "SP", "PCAL")]
print(render_report(reports, "text-table"))
for rep in reports:
    print(f"{rep.method}: utility {rep.utility_accuracy:.2f}%, "
          f"worst-case attack r2 {rep.worst_case_r2:.3f}")
