"""Label confidence estimation for noisy-labeled datasets.

Given sample embeddings and possibly-corrupted labels, the estimator builds
a k-NN similarity graph, minimizes a smoothness-plus-fidelity energy over
the label distribution, and reads off each sample's refined probability on
its given label as its clean confidence. A loss-based two-component GMM
baseline, PCA acceleration, synthetic corpora with noise injection, and a
co-training refurbishment pipeline round out the toolkit.
"""

from .core import (
    ConfidenceVector,
    FeatureMatrix,
    LabelDistribution,
    NoisyDataset,
    SparseGraph,
    one_hot,
)
from .corpus import (
    NoiseSpec,
    inject_asymmetric,
    inject_symmetric,
    make_gaussian_blobs,
)
from .errors import (
    ConvergenceError,
    DegenerateFitError,
    DegenerateGraphError,
    FormatError,
    InputError,
    LabelConfError,
)
from .gmm import Gmm2, clean_posterior, fit_gmm2, per_sample_loss
from .graph import build_graph, knn_adjacency, normalize
from .laplace import (
    SolverConfig,
    estimate,
    extract_confidence,
    laplacian_energy,
    row_normalize,
    solve_labels,
)
from .metrics import accuracy, confusion_matrix, noise_detection_scores
from .pca import PcaModel, pca_fit, pca_transform
from .trainer import (
    MlpClassifier,
    TrainConfig,
    cotrain_pseudo_label,
    loss_and_gradient,
    refurbish,
    run_pipeline,
    sharpen,
)

__version__ = "0.1.0"
