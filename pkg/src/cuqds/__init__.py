"""Sparse-GP uncertainty and online conformal calibration for trajectory predictors."""

from .conformal import (ConformalState, Interval, StreamRecord, conformal_score, coverage_error,
                        make_interval, run_stream, split_cp_quantile, update_quantile,
                        warmup_validation)
from .data import (Dataset, Regime, Sample, ScenarioConfig, generate_scenario, read_samples,
                   split_dataset, standardize_trajectory, write_samples)
from .gpr import (GprSurrogate, KernelParams, fit_inducing, grad_l2, kernel, loss_l2,
                  predictive_std)
from .metrics import (MetricReport, coverage_rate, evaluate_records, gaussian_nll, min_ade,
                      min_fde, miss_rate)
from .predictors import (ConstantVelocityPredictor, LinearPredictor, PredictorOutput, TrainConfig,
                         loss_l1, predict_constant_velocity, predict_linear, train_joint)

__version__ = "0.1.0"
