"""Dictionary-based fusion of acoustic and contact microphones for wind-noise reduction."""

from .stft import Spectrogram, StftConfig, Waveform, analyze, synthesize
from .sparse_coding import (
    CostBreakdown,
    complex_soft_threshold,
    evaluate_cost,
    lipschitz_step,
    sparse_code,
)
from .dictionary_learning import (
    Dictionary,
    DictKind,
    TrainConfig,
    dictionary_update,
    init_dictionary,
    train_dictionary,
)
from .fusion import (
    CompositeProblem,
    EnhanceReport,
    build_composite,
    enhance_acoustic_only,
    enhance_contact_only,
    enhance_fused,
    estimate_rtf_diagonal,
)
from .baselines import (
    SpatialCovariance,
    color_correction,
    cw_rtf,
    energy_vad,
    estimate_noise_covariance,
    mvdr_enhance,
)

__version__ = "0.1.0"
