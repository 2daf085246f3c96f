"""HMM decoding with uncertainty-decoding, missing-feature and model-adaptation rules."""

from .gauss import (
    VARIANCE_FLOOR,
    Gaussian,
    Gmm,
    gaussian_convolve,
    gaussian_logpdf,
    gaussian_product,
    gmm_logpdf,
    log_sum_exp,
)
from .hmm import ConventionalScorer, DecodeContext, DecodeResult, EmissionScorer, FrameEvidence, Hmm
from .decode import (
    decode_combined_order,
    decode_conditional,
    forward_log_score,
    viterbi,
    viterbi_3d,
)

__version__ = "0.1.0"

__all__ = [
    "VARIANCE_FLOOR", "Gaussian", "Gmm", "gaussian_convolve", "gaussian_logpdf", "gaussian_product",
    "gmm_logpdf", "log_sum_exp", "ConventionalScorer", "DecodeContext", "DecodeResult", "EmissionScorer",
    "FrameEvidence", "Hmm", "decode_combined_order", "decode_conditional", "forward_log_score", "viterbi",
    "viterbi_3d",
]
