"""Binary hash embeddings trained by maximizing the mutual information
between Hamming distances and neighbor membership, plus a packed-code
retrieval engine and evaluation harness."""

from .batch_gradients import (AffinityMatrix, BatchGradients, BatchWorkspace,
                              BinScratch, batch_histograms, efficient_jacobian,
                              minibatch_objective, naive_jacobian,
                              pairwise_relaxed_distances)
from .codes import (BinaryCode, BinaryCodeSet, hamming_to_all, hard_hamming,
                    load_codes, save_codes)
from .data import (AffinityOracle, Dataset, build_oracle, load_features,
                   make_splits, synth_dataset)
from .embedding import (HashModel, binarize, encode, forward_linear,
                        gaussian_init, load_model, relax, relax_jacobian_diag,
                        relaxed_codes, save_model, sign_codes)
from .errors import FileFormatError, InvalidInput, TrainingDiverged
from .histograms import (DistanceHistogramPair, hard_histogram,
                         relaxed_hamming, soft_histogram, triangular_subgrad,
                         triangular_weight)
from .information import (MIValue, entropy, mi_grad_wrt_histograms,
                          mutual_information)
from .retrieval import (RankedList, average_precision, lsh_codes,
                        mean_average_precision, mean_query_mi, precision_at_k,
                        rank_database)
from .trainer import (OptimizerState, TrainConfig, TrainResult,
                      backprop_to_weights, sample_minibatch, sgd_step, train)

__all__ = [
    "AffinityMatrix", "AffinityOracle", "BatchGradients", "BatchWorkspace",
    "BinScratch", "BinaryCode", "BinaryCodeSet", "Dataset",
    "DistanceHistogramPair",
    "FileFormatError", "HashModel", "InvalidInput", "MIValue",
    "OptimizerState", "RankedList", "TrainConfig", "TrainResult",
    "TrainingDiverged", "average_precision", "backprop_to_weights",
    "batch_histograms", "binarize", "build_oracle", "efficient_jacobian",
    "encode", "entropy", "forward_linear", "gaussian_init", "hamming_to_all",
    "hard_hamming", "hard_histogram", "load_codes", "load_features",
    "load_model", "lsh_codes", "make_splits", "mean_average_precision",
    "mean_query_mi", "mi_grad_wrt_histograms", "minibatch_objective",
    "mutual_information", "naive_jacobian", "pairwise_relaxed_distances",
    "precision_at_k", "rank_database", "relax", "relax_jacobian_diag",
    "relaxed_codes", "relaxed_hamming", "sample_minibatch", "save_codes",
    "save_model", "sgd_step", "sign_codes", "soft_histogram", "synth_dataset",
    "train", "triangular_subgrad", "triangular_weight",
]
