"""Stochastic binary neural codes for large multi-class classification.

Learn an encoder from inputs to per-bit Bernoulli parameters and a decoder
from binary codes to classes, then decode at inference through the trained
linear decoder, exact Hamming nearest-neighbor search (brute force or
multi-index hashing), or an exhaustive code table.
"""

from .codes import BinaryCode
from .data import Dataset, Split, load_svmlight, make_blobs, save_svmlight, split_dataset
from .errors import DataError, DsncError, NumericError
from .hamming import (CodeIndex, CodeTable, MihIndex, build_index, build_mih,
                      enumerate_table, hamming_distance, mih_query, nn_decode,
                      table_decode)
from .model import (DsncModel, code_log_prob, decode_train, encode_probs,
                    init_model, reinforce_gradient, sample_code, ste_backward,
                    threshold_code)
from .regularizer import RegCoeffs, adapt_coeffs, pair_penalty
from .baselines import (EcocModel, MlpModel, ecoc_predict, generate_code_matrix,
                        train_ecoc, train_mlp)
from .serialize import load_model, save_model
from .trainer import CodeStats, TrainConfig, code_stats, evaluate, fit, write_metrics_csv

__version__ = "0.1.0"

__all__ = [
    "BinaryCode", "CodeIndex", "CodeStats", "CodeTable", "DataError", "Dataset",
    "DsncError", "DsncModel", "EcocModel", "MihIndex", "MlpModel", "NumericError",
    "RegCoeffs", "Split", "TrainConfig", "adapt_coeffs", "build_index", "build_mih",
    "code_log_prob", "code_stats", "decode_train", "ecoc_predict", "encode_probs",
    "enumerate_table", "evaluate", "fit", "generate_code_matrix", "hamming_distance",
    "init_model", "load_model", "load_svmlight", "make_blobs", "mih_query",
    "nn_decode", "pair_penalty", "reinforce_gradient", "sample_code", "save_model",
    "save_svmlight", "split_dataset", "ste_backward", "table_decode",
    "threshold_code", "train_ecoc", "train_mlp", "write_metrics_csv",
]
