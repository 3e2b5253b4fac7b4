"""Social-network similarity kernels, non-linear multiple kernel learning
over a support-vector-regression base learner, and a cross-validated
rating-prediction benchmark against neighbor-influence and
collaborative-filtering baselines."""

from .baselines import (BaselineConfig, pearson_similarity, predict_cf,
                        predict_mni, predict_ni, predict_ucf_bias)
from .communities import CommunityAssignment, detect_communities, modularity
from .dataset import (Dataset, FoldAssignment, RatingMatrix, SyntheticParams,
                      generate_synthetic, load_dataset, split_folds,
                      write_dataset_csvs)
from .evaluation import (METHOD_NAMES, EvaluationReport, HarnessConfig,
                         MethodResult, export_report, friend_bin_table,
                         paired_t_test, rmse, run_cross_validation)
from .graph import (SocialGraph, bfs_levels, friend_count_bin, laplacian,
                    transition_matrix)
from .kernels import (KERNEL_ORDER, KernelConfig, KernelMatrix,
                      action_overlap_kernel, all_ones_kernel, build_kernel_bank,
                      claim_kernel, commute_time_kernel, community_kernel,
                      cosine_normalize, demographic_kernel,
                      impact_distribution_kernel, load_kernel,
                      rating_bias_kernel, save_kernel, validate_psd)
from .mkl import (MklConfig, MklState, combine_kernels, fit_nlmkl,
                  mkl_gradient, project_onto_ball, write_eta_trace)
from .svr import (SvrConfig, SvrModel, dual_objective, model_from_json,
                  model_to_json, predict_svr, train_svr)

__version__ = "0.1.0"
