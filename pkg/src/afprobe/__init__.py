"""Articulatory-feature probing of frame-level speech representations."""

from .af import (
    DEFAULT_DROP,
    AfInventory,
    AfMap,
    AfVector,
    LabeledFrameSet,
    concat_labeled,
    default_af_map,
    label_frames,
    load_af_map,
    read_labeled,
    write_labeled,
)
from .errors import AfprobeError, DataError, InternalError
from .metrics import (
    CorrelationSummary,
    PerReport,
    ProbeReport,
    correlate_report,
    edit_counts,
    macro_f1,
    pearson,
    per,
    per_corpus,
    probe_report,
    read_trn,
)
from .mfcc import MfccConfig, mfcc, read_wav, splice, write_wav
from .objectives import (
    CpcBatch,
    CtcScore,
    MaskedBatch,
    QuantizerConfig,
    cpc_loss,
    ctc_log_prob,
    hubert_loss,
    joint_objective,
    product_quantize,
    w2v2_loss,
)
from .probe import (
    LinearProbe,
    ProbeConfig,
    Standardizer,
    fit_probe,
    predict,
    predict_scores,
    read_probe,
    write_probe,
)
from .store import (
    FeatureMatrix,
    Manifest,
    ManifestEntry,
    PhoneAlignment,
    Segment,
    read_alignment,
    read_features,
    read_manifest,
    write_features,
    write_manifest,
)

__version__ = "0.1.0"
