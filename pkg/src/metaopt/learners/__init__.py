"""Six regression learner families behind one ``fit``/``predict`` interface.

=======  ==============================================================
LINEAR   least squares, ridge damping 1e-8, standardized inputs
TREE     variance-reduction tree, min leaf 2, reduced-error pruning
         on a random 25% holdout
KNN      5 nearest neighbours, Euclidean on standardized inputs
GP       squared-exponential GP, median-heuristic length scale
SVM      epsilon-SVR, RBF kernel, C=1, epsilon=1e-3, gamma=1/k, SMO
RF       100 bootstrapped unpruned trees, floor(log2 k)+1 features/split
=======  ==============================================================
"""

from .base import (
    FAMILIES,
    ConstantModel,
    Dataset,
    FitError,
    LearnerSpec,
    RegressionModel,
)
from .gp import fit_gp, sq_exp_kernel
from .knn import fit_knn
from .linear import fit_linear
from .svm import fit_svm
from .tree import fit_forest, fit_tree

_FITTERS = {
    "LINEAR": fit_linear,
    "TREE": fit_tree,
    "KNN": fit_knn,
    "GP": fit_gp,
    "SVM": fit_svm,
    "RF": fit_forest,
}


def fit(spec: LearnerSpec, data: Dataset) -> RegressionModel:
    if len(data) == 0:
        raise FitError("cannot fit a model on an empty dataset")
    return _FITTERS[spec.family](data, dict(spec.params), int(spec.seed))


def predict(model: RegressionModel, x):
    return model.predict(x)


__all__ = [
    "FAMILIES",
    "ConstantModel",
    "Dataset",
    "FitError",
    "LearnerSpec",
    "RegressionModel",
    "fit",
    "predict",
    "sq_exp_kernel",
]
