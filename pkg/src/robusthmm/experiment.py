"""Desk-scale classification experiments.

A run draws ``trials`` labelled utterances from per-class clean models and
an observation model, scores each utterance against every class model
with the chosen technique, and classifies by the best score.  Labels,
lengths and every sampled variable come from named streams of the one
config seed, so trial ``i`` is reproducible on its own and trials can run
in any order or in parallel.

Config document (``"kind": "experiment"``)::

    {"schema_version": 1, "kind": "experiment", "seed": 7,
     "task": {"classes": 2, "states": 2, "dim": 2, "separation": 1.5,
              "variance": 1.0, "self_loop": 0.7},      # or "models": "file.json"
     "observation_model": {"family": "AdditiveGaussian", ...},
     "technique": {"id": "arrowood", "params": {}, "evidence": {"bias": "spec"}},
     "trials": 500, "frames": {"min": 5, "max": 20},
     "decoder": "forward", "output": "out", "format": "csv"}

Evidence options attach per-frame information to the observed features:
``"bias": "spec"`` copies the additive bias moments of an
``AdditiveGaussian`` model, ``"mask": {"threshold": t}`` marks dimension d
reliable when ``|y_d - x_d| <= t`` (an oracle mask built from the clean
track).
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import compensation as comp
from . import io
from .decode import decode_conditional, forward_log_score, viterbi, viterbi_3d
from .hmm import FrameEvidence, Hmm
from .obsmodels import AdditiveGaussian, SampledUtterance, sample_utterance, stream
from .synthetic import class_models

DECODERS = ("forward", "viterbi")
FORMATS = ("csv", "bin")
TASK_DEFAULTS = {"classes": 2, "states": 2, "dim": 2, "separation": 1.5, "variance": 1.0, "self_loop": 0.7}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    observation_model: object
    technique: str = "conventional"
    params: dict = field(default_factory=dict)
    evidence: dict = field(default_factory=dict)
    task: dict = field(default_factory=lambda: dict(TASK_DEFAULTS))
    models_path: Optional[Path] = None
    trials: int = 100
    frames: tuple = (5, 20)
    decoder: str = "forward"
    output: Path = Path("out")
    format: str = "csv"
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        comp.technique(self.technique)
        if self.trials < 1:
            raise ConfigError("trials must be positive")
        lo, hi = self.frames
        if not 1 <= lo <= hi:
            raise ConfigError(f"frame range must satisfy 1 <= min <= max, got {self.frames}")
        if self.decoder not in DECODERS:
            raise ConfigError(f"decoder must be one of {DECODERS}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        unknown = set(self.evidence) - {"bias", "mask"}
        if unknown:
            raise ConfigError(f"unknown evidence options {sorted(unknown)}")

    def with_overrides(self, seed=None, technique=None, output=None, fmt=None) -> "ExperimentConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = seed
        if technique is not None and technique != self.technique:
            changes.update(technique=technique, params={})
        if output is not None:
            changes["output"] = Path(output)
        if fmt is not None:
            changes["format"] = fmt
        return replace(self, **changes)

    def digest(self) -> str:
        return hashlib.sha256(io.dumps(self.raw).encode()).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    doc = io.read_json(path, "experiment")
    return config_from_dict(doc, path.parent)


def config_from_dict(doc: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    io.check_header(doc, "experiment", "config")
    if "seed" not in doc:
        raise ConfigError("config must set a seed")
    if "observation_model" not in doc:
        raise ConfigError("config must describe an observation model")
    tech = doc.get("technique", {"id": "conventional"})
    if isinstance(tech, str):
        tech = {"id": tech}
    tid = tech.get("id", "conventional")
    comp.technique(tid)
    frames = doc.get("frames", {"min": 5, "max": 20})
    models_path = doc.get("models")
    task = dict(TASK_DEFAULTS)
    task.update(doc.get("task", {}))
    return ExperimentConfig(
        seed=doc["seed"],
        observation_model=io.spec_from_dict(doc["observation_model"]),
        technique=tid,
        params=io.params_from_dict(tid, tech.get("params", {}), base_dir),
        evidence=dict(tech.get("evidence", {})),
        task=task,
        models_path=None if models_path is None else base_dir / models_path,
        trials=int(doc.get("trials", 100)),
        frames=(int(frames["min"]), int(frames["max"])),
        decoder=doc.get("decoder", "forward"),
        output=base_dir / doc.get("output", "out"),
        format=doc.get("format", "csv"),
        raw=doc,
    )


# --- task generation ----------------------------------------------------------


def clean_models(cfg: ExperimentConfig) -> list[Hmm]:
    if cfg.models_path is not None:
        return io.read_models(cfg.models_path)
    t = cfg.task
    return class_models(stream(cfg.seed, 0, -1, "models"), int(t["classes"]), int(t["states"]), int(t["dim"]),
                        float(t["separation"]), float(t["variance"]), float(t["self_loop"]))


def trial_plan(cfg: ExperimentConfig, num_classes: int, trial: int) -> tuple[int, int]:
    """(label, frame count) of one trial."""
    label = int(stream(cfg.seed, trial, -1, "label").integers(num_classes))
    n = int(stream(cfg.seed, trial, -1, "length").integers(cfg.frames[0], cfg.frames[1] + 1))
    return label, n


def draw_trial(cfg: ExperimentConfig, models: list[Hmm], trial: int) -> tuple[int, SampledUtterance]:
    label, n = trial_plan(cfg, len(models), trial)
    utt = sample_utterance(cfg.observation_model, models[label], n, cfg.seed, trial)
    # features live at float32 precision, exactly as they are stored on disk
    utt.clean = utt.clean.astype(np.float32).astype(float)
    utt.observed = utt.observed.astype(np.float32).astype(float)
    if not np.all(np.isfinite(utt.observed)):
        raise ArithmeticError(f"trial {trial}: non-finite observed features")
    return label, utt


def build_evidence(cfg: ExperimentConfig, observed: np.ndarray, clean: Optional[np.ndarray]) -> list[FrameEvidence]:
    opts = cfg.evidence
    extra: list[dict] = [{} for _ in range(len(observed))]
    if "bias" in opts:
        spec = cfg.observation_model
        if opts["bias"] != "spec" or not isinstance(spec, AdditiveGaussian):
            raise ConfigError("bias evidence needs \"bias\": \"spec\" and an AdditiveGaussian model")
        for n, e in enumerate(extra):
            e["bias_mean"] = spec.bias_mean if spec.bias_mean.ndim == 1 else spec.bias_mean[n]
            e["bias_cov"] = spec.bias_cov if spec.bias_cov.ndim == 1 else spec.bias_cov[n]
    if "mask" in opts:
        if clean is None:
            raise ConfigError("oracle masks need the clean features")
        thr = float(opts["mask"]["threshold"])
        rel = np.abs(observed - clean) <= thr
        for e, r in zip(extra, rel):
            e["reliable"] = r
    return [FrameEvidence(y, **e) for y, e in zip(observed, extra)]


# --- scoring ------------------------------------------------------------------


@dataclass
class ClassScorer:
    """A technique instantiated for one class model."""

    hmm: Hmm
    tech: comp.Technique
    built: object

    @property
    def scorer(self):
        return self.built.scorer() if self.tech.kind == comp.ADAPTER else self.built

    @property
    def decode_hmm(self) -> Hmm:
        return self.built.hmm if self.tech.kind == comp.ADAPTER else self.hmm


def instantiate(cfg: ExperimentConfig, models: list[Hmm]) -> list[ClassScorer]:
    tech = comp.technique(cfg.technique)
    params = dict(cfg.params)
    if "spec" in tech.params and "spec" not in params:
        params["spec"] = cfg.observation_model
    return [ClassScorer(m, tech, comp.build(cfg.technique, m, params)) for m in models]


def decoder_kind(cfg: ExperimentConfig) -> str:
    d = comp.technique(cfg.technique).decoder
    return cfg.decoder if d == comp.STANDARD else d


def class_score(cs: ClassScorer, frames, mode: str) -> float:
    d = cs.tech.decoder
    if d == comp.STANDARD:
        if mode == "forward":
            return forward_log_score(cs.decode_hmm, cs.scorer, frames)
        return viterbi(cs.decode_hmm, cs.scorer, frames).total_log_score
    if d == comp.CONDITIONAL:
        return decode_conditional(cs.hmm, cs.scorer, frames).total_log_score
    if d == comp.PARTIAL:
        return viterbi(cs.hmm, cs.scorer, frames).total_log_score
    return viterbi_3d(cs.hmm, cs.built.noise, cs.scorer, frames).log_score


def utterance_result(cs: ClassScorer, frames) -> dict:
    """Best path under one class model with per-frame score increments."""
    d = cs.tech.decoder
    if d == comp.THREE_D:
        r = viterbi_3d(cs.hmm, cs.built.noise, cs.scorer, frames)
        return {"decoder_kind": "3d", "path": r.speech_path, "noise_path": r.noise_path,
                "total_log_score": r.log_score}
    if d == comp.CONDITIONAL:
        r = decode_conditional(cs.hmm, cs.scorer, frames)
    else:
        r = viterbi(cs.decode_hmm, cs.scorer, frames)
    h = cs.decode_hmm
    trans = np.empty(len(r.path))
    trans[0] = h.log_initial()[r.path[0]]
    trans[1:] = h.log_transitions()[r.path[:-1], r.path[1:]]
    out = {"decoder_kind": r.decoder_kind, "path": r.path, "total_log_score": r.total_log_score,
           "emission_scores": r.frame_scores, "frame_scores": trans + r.frame_scores}
    if r.diagnostics:
        out["diagnostics"] = r.diagnostics
    return out


# --- running trials -----------------------------------------------------------

_WORKER: dict = {}


def _init_worker(cfg: ExperimentConfig, models: list[Hmm], traces: bool) -> None:
    _WORKER.update(cfg=cfg, models=models, scorers=instantiate(cfg, models), traces=traces)


def _run_trial(item) -> dict:
    trial, observed, clean, label = item
    cfg, scorers = _WORKER["cfg"], _WORKER["scorers"]
    if observed is None:
        label, utt = draw_trial(cfg, _WORKER["models"], trial)
        observed, clean = utt.observed, utt.clean
    frames = build_evidence(cfg, observed, clean)
    scores = [class_score(cs, frames, cfg.decoder) for cs in scorers]
    if any(math.isnan(s) for s in scores):
        raise ArithmeticError(f"trial {trial}: NaN class score")
    decision = int(np.argmax(scores))
    others = [s for c, s in enumerate(scores) if c != label]
    margin = scores[label] - max(others) if others else 0.0
    rec = {"trial": trial, "label": int(label), "decision": decision, "correct": decision == label,
           "scores": scores, "margin": margin}
    if _WORKER["traces"]:
        rec["result"] = dict(utterance_result(scorers[decision], frames), trial=trial,
                             model_id=scorers[decision].hmm.model_id)
    return rec


def run_trials(cfg: ExperimentConfig, models: list[Hmm], items: list, jobs: int = 1,
               traces: bool = True) -> list[dict]:
    """Score ``items`` = [(trial, observed|None, clean|None, label|None)]; result order is by trial id."""
    if jobs <= 1:
        _init_worker(cfg, models, traces)
        out = [_run_trial(it) for it in items]
    else:
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(cfg, models, traces)) as ex:
            out = list(ex.map(_run_trial, items, chunksize=max(1, len(items) // (4 * jobs))))
    return sorted(out, key=lambda r: r["trial"])


def provenance(cfg: ExperimentConfig, command: str, **extra) -> dict:
    return {"tool": "robusthmm", "version": __version__, "command": command, "seed": cfg.seed,
            "technique": cfg.technique, "config_digest": cfg.digest(), **extra}


def metrics_report(cfg: ExperimentConfig, records: list[dict], command: str = "decode") -> dict:
    n = len(records)
    acc = sum(r["correct"] for r in records) / n
    trials = [{k: r[k] for k in ("trial", "label", "decision", "correct", "scores", "margin")} for r in records]
    return io.document("metrics", provenance(cfg, command), technique=cfg.technique, decoder=decoder_kind(cfg),
                       seed=cfg.seed, trials=n, accuracy=acc,
                       mean_margin=float(np.mean([r["margin"] for r in records])),
                       decisions=trials)


def results_document(cfg: ExperimentConfig, records: list[dict], command: str = "decode") -> dict:
    return io.document("decode_results", provenance(cfg, command),
                       utterances=[r["result"] for r in records if "result" in r])


def evaluate(cfg: ExperimentConfig, models: list[Hmm] | None = None, jobs: int = 1,
             traces: bool = False) -> tuple[dict, list[dict]]:
    """Generate the trials in memory and classify them; returns (report, records)."""
    models = models if models is not None else clean_models(cfg)
    items = [(i, None, None, None) for i in range(cfg.trials)]
    records = run_trials(cfg, models, items, jobs, traces)
    return metrics_report(cfg, records, "evaluate"), records


# --- datasets -----------------------------------------------------------------


def _utt_name(i: int) -> str:
    return f"utt{i:05d}"


def generate(cfg: ExperimentConfig, out: Path | None = None) -> Path:
    """Write clean and observed features, latent sidecars, the models and a manifest."""
    out = Path(out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    models = clean_models(cfg)
    suffix = io.FEATURE_SUFFIX[cfg.format]
    entries = []
    for i in range(cfg.trials):
        label, utt = draw_trial(cfg, models, i)
        name = _utt_name(i)
        io.write_features(out / f"{name}.clean{suffix}", utt.clean, cfg.format)
        io.write_features(out / f"{name}.observed{suffix}", utt.observed, cfg.format)
        side = {"states": utt.states, "components": utt.components,
                "latents": {k: v for k, v in sorted(utt.latents.items())}}
        if utt.noise_states is not None:
            side["noise_states"] = utt.noise_states
        io.write_json(out / f"{name}.latent.json", io.document("latents", {}, utterance=i, **side))
        entries.append({"id": name, "trial": i, "label": label, "frames": int(utt.clean.shape[0]),
                        "clean": f"{name}.clean{suffix}", "observed": f"{name}.observed{suffix}",
                        "latents": f"{name}.latent.json"})
    io.write_models(out / "models.json", models, provenance(cfg, "generate"))
    io.write_json(out / "spec.json", io.document("observation_model", provenance(cfg, "generate"),
                                                 spec=io.spec_to_dict(cfg.observation_model)))
    io.write_json(out / "manifest.json", io.document("dataset", provenance(cfg, "generate"),
                                                     utterances=entries, format=cfg.format))
    return out


def load_dataset(path) -> tuple[list[dict], Path]:
    path = Path(path)
    manifest = io.read_json(path / "manifest.json", "dataset")
    return manifest["utterances"], path


def decode_dataset(cfg: ExperimentConfig, data_dir, models: list[Hmm] | None = None,
                   jobs: int = 1) -> tuple[dict, dict]:
    """Classify every utterance of a generated dataset; returns (metrics, decode results)."""
    entries, root = load_dataset(data_dir)
    models = models if models is not None else io.read_models(root / "models.json")
    items = [(e["trial"], io.read_features(root / e["observed"]).astype(float),
              io.read_features(root / e["clean"]).astype(float), e["label"]) for e in entries]
    records = run_trials(cfg, models, items, jobs, traces=True)
    return metrics_report(cfg, records), results_document(cfg, records)
