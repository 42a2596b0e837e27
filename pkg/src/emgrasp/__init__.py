"""EMG grasp-intent pipeline.

Preprocess multichannel EMG into MVC-normalized envelopes, segment each
reach-to-grasp trial into movement phases without supervision, train an
extremely-randomized-trees gesture classifier under phase-selection
strategies, and evaluate everything on a grasp-aligned timeline. A seeded
synthetic-session generator provides ground truth for verification.
"""

__version__ = "0.1.0"

from .annotation import Phase, TrainingStrategy, build_training_set, label_windows
from .errors import (
    ConfigError,
    DataError,
    DegenerateMvcError,
    EmgraspError,
    FilterDesignError,
    InvariantError,
    SingularityError,
)
from .evaluation import (
    EvalCurves,
    FoldPlan,
    align_and_average,
    compute_d_p,
    compute_t_i,
    confusion_matrix,
    evaluate_sessions,
    make_folds,
    run_strategy,
)
from .extra_trees import (
    ExtraTreesModel,
    TrainConfig,
    load_model,
    predict,
    predict_proba,
    save_model,
    train,
)
from .features import FeatureVector, extract_features
from .ggs import GgsConfig, Segmentation, ggs_segment, objective, segment_cost
from .signal_pipeline import (
    EnvelopeTrial,
    FilterCoefficients,
    MvcRecording,
    RawTrial,
    WindowView,
    apply_filter,
    design_bandpass,
    envelope,
    mvc_normalize,
    window_iter,
)
from .synth import SynthConfig, gen_session, gen_templates
