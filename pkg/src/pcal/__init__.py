"""pcal: learn a masking transform for tabular data that keeps a prediction
task accurate while making protected attributes hard to regress, and audit the
result against a suite of held-out attack models."""

__version__ = "0.1.0"

from .data import (ColumnSpec, Dataset, ScalerParams, SyntheticSpec,
                   filter_strong_protection, filter_weak_protection,
                   generate_synthetic, load_csv, pearson_correlation, split,
                   standardize, write_csv)
from .nn import (DenseNet, NetShape, OptimizerState, backward, forward,
                 init_net, load_net, mse_loss, optimizer_step, reinit,
                 save_net)
from .attackers import (build_evaluation_suite, fit_elastic_net,
                        fit_linear_svr, fit_mlp_attacker, fit_random_forest,
                        r_squared)
from .trainer import (PcalConfig, anonymize, compute_phi, train_pcal)
from .evaluation import (EvalReport, evaluate_privacy, evaluate_utility,
                         render_report, run_method)
