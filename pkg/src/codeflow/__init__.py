"""Controlled ODEs driven by a few vector fields, their Lie brackets, and interpolation training."""

from .canonical import (
    canonical_five,
    degree_cover_check,
    sl_generators,
    verify_appendix_identities,
    verify_sl_generation,
)
from .flow import (
    BlowUpError,
    ControlPath,
    SmoothField,
    Trajectory,
    commutator_flow_residual,
    integrate,
    integrate_with_variation,
    jacobian_bound,
)
from .lie_engine import (
    interpolates_at_tuple,
    interpolation_matrix,
    lie_closure_bounded,
    lyndon_words,
    witt_dimension,
)
from .poly_vf import PolyVectorField, lie_bracket
from .random_fields import (
    FieldSampleSpec,
    NeuralFieldSpec,
    neural_fields,
    perturb_to_universal,
    reference_hat_fields,
    sample_polynomial_fields,
)
from .trainer import ReadoutMode, TrainConfig, TrainingSet, TrainResult, gradient, loss, train, validate_training_set

__all__ = [
    "BlowUpError",
    "ControlPath",
    "FieldSampleSpec",
    "NeuralFieldSpec",
    "PolyVectorField",
    "ReadoutMode",
    "SmoothField",
    "TrainConfig",
    "TrainResult",
    "TrainingSet",
    "Trajectory",
    "canonical_five",
    "commutator_flow_residual",
    "degree_cover_check",
    "gradient",
    "integrate",
    "integrate_with_variation",
    "interpolates_at_tuple",
    "interpolation_matrix",
    "jacobian_bound",
    "lie_bracket",
    "lie_closure_bounded",
    "loss",
    "lyndon_words",
    "neural_fields",
    "perturb_to_universal",
    "reference_hat_fields",
    "sample_polynomial_fields",
    "sl_generators",
    "train",
    "validate_training_set",
    "verify_appendix_identities",
    "verify_sl_generation",
    "witt_dimension",
]
