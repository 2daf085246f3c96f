"""Compensation rules: emission scorers and model adapters, addressed by string id.

Each registry entry records what the technique produces (``scorer``,
``adapter`` or ``joint``), which decoder it needs and how to build it from
a clean model and a parameter dict.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from ..hmm import ConventionalScorer, Hmm
from ._common import MissingEvidenceError
from .adaptation import (
    AdaptedHmm,
    BayesianMllrScorer,
    MapPrior,
    MllrPrior,
    bayesian_mllr_frame_scorer,
    cmllr_transform,
    map_adapt_means,
    mllr_adapt_means,
)
from .logsum import (
    PmcNoiseHmmScorer,
    ReverbPartialPathScorer,
    TakiguchiScorer,
    pmc_adapt,
    pmc_noise_hmm_scorer,
    rev_vts_adapt,
    reverb_log_add_adapt,
    takiguchi_scorer,
    vts_adapt,
    vts_expansion,
)
from .missing import (
    MissingFeatureScorer,
    ModifiedImputationScorer,
    SignificanceScorer,
    missing_feature_scorer,
    modified_imputation_scorer,
    significance_scorer,
)
from .uncertainty import (
    ArrowoodScorer,
    DvcScorer,
    IonScorer,
    JudScorer,
    SpliceScorer,
    arrowood_scorer,
    dvc_scorer,
    ion_scorer,
    jud_scorer,
    splice_scorer,
)

SCORER, ADAPTER, JOINT = "scorer", "adapter", "joint"
STANDARD, CONDITIONAL, PARTIAL, THREE_D = "standard", "conditional", "partial_path", "3d"


@dataclass(frozen=True)
class Technique:
    id: str
    kind: str
    decoder: str
    build: Callable[[Hmm, dict], object]
    params: tuple = ()


def _t(id, kind, build, params=(), decoder=STANDARD):
    return Technique(id, kind, decoder, build, tuple(params))


_ENTRIES = [
    _t("conventional", SCORER, lambda h, p: ConventionalScorer(h)),
    _t("arrowood", SCORER, lambda h, p: ArrowoodScorer(h)),
    _t("dvc", SCORER, lambda h, p: DvcScorer(h)),
    _t("splice.convolution", SCORER, lambda h, p: SpliceScorer(h, p["spec"], "convolution"), ["spec"]),
    _t("splice.prior_model", SCORER, lambda h, p: SpliceScorer(h, p["spec"], "prior_model"), ["spec"]),
    _t("jud", SCORER, lambda h, p: JudScorer(h, p["assignment"]), ["assignment"]),
    _t("ion", SCORER, lambda h, p: IonScorer(h, p["prior_mean"], p["prior_var"]), ["prior_mean", "prior_var"]),
    _t("missing.imputation", SCORER, lambda h, p: MissingFeatureScorer(h, "imputation")),
    _t("missing.marginalization", SCORER,
       lambda h, p: MissingFeatureScorer(h, "marginalization", p["marginal_mean"], p["marginal_var"]),
       ["marginal_mean", "marginal_var"]),
    _t("missing.marginalization_flat", SCORER, lambda h, p: MissingFeatureScorer(h, "marginalization", flat=True)),
    _t("modified_imputation", SCORER, lambda h, p: ModifiedImputationScorer(h)),
    _t("significance", SCORER, lambda h, p: SignificanceScorer(h)),
    _t("bayesian_mllr", SCORER, lambda h, p: BayesianMllrScorer(h, p["prior"]), ["prior"]),
    _t("takiguchi", SCORER, lambda h, p: TakiguchiScorer(h, p["spec"]), ["spec"], CONDITIONAL),
    _t("cmllr", ADAPTER, lambda h, p: cmllr_transform(h, p["assignment"]), ["assignment"]),
    _t("mllr", ADAPTER, lambda h, p: mllr_adapt_means(h, p["assignment"]), ["assignment"]),
    _t("map", ADAPTER, lambda h, p: map_adapt_means(h, p["prior"], p["data"]), ["prior", "data"]),
    _t("vts", ADAPTER, lambda h, p: vts_adapt(h, p["spec"]), ["spec"]),
    _t("rev_vts", ADAPTER, lambda h, p: rev_vts_adapt(h, p["spec"]), ["spec"]),
]
for _approx in ("log_add", "log_normal", "quadrature"):
    _ENTRIES.append(_t(f"pmc.{_approx}", ADAPTER, lambda h, p, a=_approx: pmc_adapt(h, p["spec"], a), ["spec"]))
    _ENTRIES.append(_t(f"pmc_noise_hmm.{_approx}", JOINT,
                       lambda h, p, a=_approx: PmcNoiseHmmScorer(h, p["spec"], a), ["spec"], THREE_D))
for _moment in ("log_add", "log_normal"):
    _ENTRIES.append(_t(f"reverb.static_prior.{_moment}", ADAPTER,
                       lambda h, p, m=_moment: reverb_log_add_adapt(h, p["spec"], "static_prior", m), ["spec"]))
    _ENTRIES.append(_t(f"reverb.partial_path.{_moment}", SCORER,
                       lambda h, p, m=_moment: ReverbPartialPathScorer(h, p["spec"], m), ["spec"], PARTIAL))

TECHNIQUES = {t.id: t for t in _ENTRIES}


def technique(tid: str) -> Technique:
    try:
        return TECHNIQUES[tid]
    except KeyError:
        raise KeyError(f"unknown technique {tid!r}; known: {', '.join(sorted(TECHNIQUES))}") from None


def build(tid: str, hmm: Hmm, params: dict | None = None):
    """Instantiate technique ``tid`` for ``hmm``."""
    t = technique(tid)
    params = params or {}
    missing = [p for p in t.params if p not in params]
    if missing:
        raise ValueError(f"technique {tid!r} needs parameters {missing}")
    return t.build(hmm, params)


__all__ = [
    "TECHNIQUES", "Technique", "technique", "build", "MissingEvidenceError",
    "AdaptedHmm", "MapPrior", "MllrPrior",
    "ArrowoodScorer", "DvcScorer", "SpliceScorer", "JudScorer", "IonScorer",
    "MissingFeatureScorer", "ModifiedImputationScorer", "SignificanceScorer",
    "BayesianMllrScorer", "PmcNoiseHmmScorer", "ReverbPartialPathScorer", "TakiguchiScorer",
    "arrowood_scorer", "dvc_scorer", "splice_scorer", "jud_scorer", "ion_scorer",
    "missing_feature_scorer", "modified_imputation_scorer", "significance_scorer",
    "pmc_adapt", "pmc_noise_hmm_scorer", "vts_adapt", "vts_expansion", "cmllr_transform",
    "mllr_adapt_means", "map_adapt_means", "bayesian_mllr_frame_scorer", "rev_vts_adapt",
    "reverb_log_add_adapt", "takiguchi_scorer",
]
