"""HOG as weighted local second-order pixel interactions, with a dual-CD linear SVM."""

from .features import (
    HogBaselineFeatures,
    HogConvFeatures,
    HogReformFeatures,
    LocalQuadraticFeatures,
    PixelFeatures,
    make_extractor,
)
from .hog import (
    FilterBank,
    ProjectionMatrix,
    apply_projection,
    build_projection,
    hog_baseline,
    hog_conv,
    make_gabor_bank,
)
from .image import DimensionError, PoolingSpec, box_pooling, conv2d_same, power_normalize, whiten
from .quad import LocalWindow, local_quadratic_compact, local_quadratic_full, quad_dimension
from .svm import (
    DualCDClassifier,
    ShardPlan,
    SvmModel,
    consensus_train,
    dcd_train,
    margin_reweighting_check,
    predict,
)

__version__ = "0.1.0"
