"""Train-score-reason workflow around one configuration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..reasoning import ReasoningModel
from ..surprise import REASONS, VARIANTS, SurpriseScorer
from ..typicality import TypicalityModel
from .config import EngineConfig

SCORE_FIELDS = tuple(f"surprise_{r}" for r in REASONS)


@dataclass(eq=False)
class Engine:
    """A fitted typicality model plus the surprise priors built on top of it."""

    config: EngineConfig
    typicality: TypicalityModel
    reasoning: ReasoningModel

    @classmethod
    def train(cls, records, vocab=None, config=None, prior_records=None):
        """Fit the typicality model, then the priors.

        Priors are fitted on the surprise triples of ``prior_records`` when
        given and of the training records otherwise.
        """
        config = config or EngineConfig()
        typicality = TypicalityModel(
            grid_size=config.grid_size,
            smoothing=config.smoothing,
            entropy_floor=config.entropy_floor,
            holdout_fraction=config.holdout_fraction,
        ).fit(records, vocab)
        engine = cls(config, typicality, None)
        triples = engine.raw_scores(prior_records if prior_records is not None else records)
        engine.reasoning = ReasoningModel(
            threshold=config.decision_threshold,
            shift_eps=config.shift_eps,
            shift_method=config.shift_method,
        ).fit(triples)
        return engine

    def scorer(self, ablation=None):
        abl = VARIANTS[ablation or self.config.ablation]
        return SurpriseScorer(self.typicality, abl.use_relevance, abl.use_reliability,
                              abl.use_location, abl.use_size_modulation, self.config.clamp_max)

    def raw_scores(self, evidence, ablation=None):
        """Raw (object, context, scene) surprise, one row per image."""
        return self.scorer(ablation).transform(list(evidence))

    def normalize(self, raw):
        return self.reasoning.transform(np.asarray(raw, dtype=float))

    def score_records(self, evidence, ablation=None):
        evidence = list(evidence)
        raw = self.raw_scores(evidence, ablation)
        return [score_record(ev.image_id, row) for ev, row in zip(evidence, raw)]

    def reason_records(self, score_rows):
        """Normalized triples, final score, decision and dominant reason."""
        ids = [row["image_id"] for row in score_rows]
        raw = np.array([[row[k] for k in SCORE_FIELDS] for row in score_rows], dtype=float).reshape(-1, 3)
        if not ids:
            return []
        normalized = self.normalize(raw)
        return [reason_record(i, n, self.reasoning.threshold) for i, n in zip(ids, normalized)]


def score_record(image_id, raw):
    return {"image_id": image_id, **{k: float(v) for k, v in zip(SCORE_FIELDS, raw)}}


def reason_record(image_id, normalized, threshold):
    normalized = np.asarray(normalized, dtype=float)
    final = float(normalized.max())
    return {
        "image_id": image_id,
        "normalized": {r: float(v) for r, v in zip(REASONS, normalized)},
        "final": final,
        "abnormal": bool(final > threshold),
        "reason": REASONS[int(np.argmax(normalized))],
    }
