"""Denoised 1-NN subsample ensembles: k-NN accuracy at close to 1-NN prediction cost."""

from .data import (LabeledDataset, Standardizer, SynthSpec, SyntheticDistribution, bayes_error,
                   load_csv, split, standardize, synth_manifold)
from .ensemble import (BaggedModel, BatchPrediction, DenoisedModel, SubNNModel, bagged_predict,
                       build_bagged, build_denoised, build_subnn, denoised_predict, draw_subsample,
                       subnn_predict, subnn_predict_batch)
from .knn import (KnnModel, LabelSet, TheoryParams, classification_labels, knn_classify,
                  knn_regress, knn_regress_value, regression_targets, rk_theoretical_bound)
from .neighbors import NeighborList, NNIndex, build_index, kth_nn_distance, query_knn
from .selection import CvConfig, CvResult, cross_validate_k, stage1_grid, stage2_grid

__version__ = "0.1.0"
