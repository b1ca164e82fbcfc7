"""Source camera identification from sensor pattern noise.

Pipeline: extract per-image noise residuals with a wavelet Wiener denoiser,
estimate a camera fingerprint from many images, correlate questioned residuals
against fingerprint-times-image references, and decide matches by a signed
peak-to-correlation-energy threshold.  A built-in sensor simulator and an
evaluation harness cover nominal and off-nominal (over-/under-exposed)
operating conditions.
"""

from .core import (
    CameraFingerprint,
    DEFAULT_PCE_THRESHOLD,
    ExposureValue,
    Image,
    ImageMeta,
    NoiseResidual,
    PceResult,
    classify_exposure_offset,
    exposure_value_rel,
)
from .denoise import DenoiseConfig, denoise, dwt2, idwt2, local_variance, wiener_attenuate
from .errors import (
    DegenerateInput,
    DomainError,
    DuplicateEntry,
    InsufficientImages,
    ManifestError,
    ManifestNotFound,
    ManifestSchemaError,
    MissingAsset,
    PrnuError,
    UnclassifiableExposure,
)
from .fingerprint import (
    NuaConfig,
    SaturationRule,
    estimate_camera_fingerprint,
    image_residual,
    load_fingerprint,
    nua_suppress,
    saturation_mask,
    save_fingerprint,
)
from .matching import MatchConfig, cross_correlation_plane, match, signed_pce
from .dataset import (
    DiskCorpus,
    Manifest,
    ManifestRow,
    TrialPartition,
    decode_image,
    load_manifest,
    partition_trial,
    save_manifest,
)
from .sim import ExposureModel, SceneModel, SyntheticCamera, SyntheticCorpus, render, render_corpus, write_corpus
from .evaluation import (
    EXPERIMENTS,
    ErrorRates,
    ExperimentReport,
    KappaResult,
    ScoreMatrix,
    balanced_error_rates,
    compute_scores,
    estimate_fingerprints,
    fleiss_kappa,
    load_score_matrix,
    mixing_sensitivity,
    run_experiment,
    save_score_matrix,
    threshold_sweep,
    zero_fpr_threshold,
)

__version__ = "0.1.0"
