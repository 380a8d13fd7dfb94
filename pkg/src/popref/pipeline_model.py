"""The hand-engineered competitor: max-margin embeddings plus two thresholds.

Two linear maps project queries and candidates into a shared space, trained
with a max-margin ranking loss on (query, positive, negative) triples so
matching pairs score higher cosine similarity than mismatched ones.  At
prediction time the similarity profile is thresholded by two separately
tuned heuristics: protest when no candidate clears a minimum-similarity
floor (the missing-referent rule), or when the top two similarities sit
closer than a minimum gap (the multiple-referent rule); otherwise point at
the argmax.

Similarities are cosines, not raw dot products — the tuned thresholds only
make sense on a bounded scale.  Anomalous training acts contribute no
triples: a missing-referent act has no positive and a multiple-referent act
an ambiguous one.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .datagen import POINT
from .errors import ConfigError, ContractViolation
from .numerics import Rng, derive_seed, finite_diff_grad, glorot_uniform, rel_error
from .pop_model import GradcheckReport, Prediction
from .training import TrainConfig, TrainLog, train

logger = logging.getLogger(__name__)

MISS_GRID = tuple(round(-1.0 + 0.05 * k, 2) for k in range(41))
GAP_GRID = tuple(round(0.01 * k, 2) for k in range(51))


@dataclass(frozen=True)
class PipelineConfig:
    d_query: int
    d_cand: int
    d_shared: int = 300
    margin: float = 0.5

    def validate(self) -> None:
        for name, dim in (("d_query", self.d_query), ("d_cand", self.d_cand),
                          ("d_shared", self.d_shared)):
            if dim < 1:
                raise ConfigError(f"{name} must be >= 1, got {dim}")
        if self.margin <= 0:
            raise ConfigError(f"margin must be > 0, got {self.margin}")

    def to_dict(self) -> dict:
        return {
            "d_query": self.d_query,
            "d_cand": self.d_cand,
            "d_shared": self.d_shared,
            "margin": self.margin,
        }

    @staticmethod
    def from_dict(record: dict) -> "PipelineConfig":
        return PipelineConfig(**record)


@dataclass
class PipelineParams:
    """query_map: d_shared x d_query; object_map: d_shared x d_cand."""

    config: PipelineConfig
    query_map: np.ndarray
    object_map: np.ndarray

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {"query_map": self.query_map, "object_map": self.object_map}

    def copy(self) -> "PipelineParams":
        return PipelineParams(
            config=self.config,
            query_map=self.query_map.copy(),
            object_map=self.object_map.copy(),
        )

    def validate(self) -> None:
        cfg = self.config
        expected = {
            "query_map": (cfg.d_shared, cfg.d_query),
            "object_map": (cfg.d_shared, cfg.d_cand),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ContractViolation(
                    f"parameter {name} has shape {arr.shape}, expected {shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise ContractViolation(f"parameter {name} holds non-finite entries")


@dataclass(frozen=True)
class Thresholds:
    """min_similarity catches missing referents; min_gap catches duplicates."""

    min_similarity: float
    min_gap: float

    def validate(self) -> None:
        for name, value in (("min_similarity", self.min_similarity),
                            ("min_gap", self.min_gap)):
            if not (-1.0 <= value <= 1.0):
                raise ConfigError(
                    f"{name} must lie in the cosine range [-1, 1], got {value}"
                )

    def to_dict(self) -> dict:
        return {"min_similarity": self.min_similarity, "min_gap": self.min_gap}

    @staticmethod
    def from_dict(record: dict) -> "Thresholds":
        return Thresholds(**record)


def init_pipeline_params(config: PipelineConfig, rng: Rng) -> PipelineParams:
    config.validate()
    return PipelineParams(
        config=config,
        query_map=glorot_uniform(rng, config.d_shared, config.d_query),
        object_map=glorot_uniform(rng, config.d_shared, config.d_cand),
    )


def extract_pairs(encoded_acts, corpus_negatives: int = 0, rng: Rng | None = None):
    """Training triples (query, positive, negative) from successful acts only.

    The positive is the gold candidate; every other candidate in the same
    act yields one triple.  ``corpus_negatives`` additionally samples that
    many negatives per act from other acts' candidates (requires ``rng``) for
    corpus-wide contrast instead of purely in-sequence negatives.
    """
    acts = [act for act in encoded_acts if act.gold.kind == POINT]
    if corpus_negatives and rng is None:
        raise ConfigError("corpus_negatives requires an rng")
    pooled = []
    if corpus_negatives:
        for idx, act in enumerate(acts):
            pooled.extend((idx, vec) for vec in act.candidate_vecs)
    triples = []
    for idx, act in enumerate(acts):
        positive = act.candidate_vecs[act.gold.index]
        for k, candidate in enumerate(act.candidate_vecs):
            if k != act.gold.index:
                triples.append((act.query_vec, positive, candidate))
        for _ in range(corpus_negatives):
            for _attempt in range(1000):
                source, vec = pooled[rng.randrange(len(pooled))]
                if source != idx:
                    triples.append((act.query_vec, positive, vec))
                    break
    return triples


def _cosine(u: np.ndarray, v: np.ndarray, context: str = "") -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        logger.warning("zero-norm mapped vector%s; cosine defined as 0",
                       f" ({context})" if context else "")
        return 0.0
    return float(u @ v) / (nu * nv)


def hinge_loss(query, positive, negative, params: PipelineParams,
               margin: float | None = None) -> float:
    """max(0, margin - cos(Mq q, Mo pos) + cos(Mq q, Mo neg))."""
    m = params.config.margin if margin is None else margin
    if m <= 0:
        raise ConfigError(f"margin must be > 0, got {m}")
    qv = params.query_map @ np.asarray(query, dtype=np.float64)
    pv = params.object_map @ np.asarray(positive, dtype=np.float64)
    nv = params.object_map @ np.asarray(negative, dtype=np.float64)
    return max(0.0, m - _cosine(qv, pv, "positive") + _cosine(qv, nv, "negative"))


def _dcos(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Partials of cos(u, v) w.r.t. u and v; zero at a zero-norm vector."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return np.zeros_like(u), np.zeros_like(v)
    c = float(u @ v) / (nu * nv)
    du = v / (nu * nv) - c * u / (nu * nu)
    dv = u / (nu * nv) - c * v / (nv * nv)
    return du, dv


def hinge_grads(query, positive, negative, params: PipelineParams) -> tuple[float, dict[str, np.ndarray]]:
    """Hinge loss and its exact subgradients for both maps.

    When the margin is satisfied the hinge is flat and all gradients are
    zero; otherwise the loss is margin - cos_pos + cos_neg and the chain
    rule runs through both cosines into the two linear maps.
    """
    query = np.asarray(query, dtype=np.float64)
    positive = np.asarray(positive, dtype=np.float64)
    negative = np.asarray(negative, dtype=np.float64)
    qv = params.query_map @ query
    pv = params.object_map @ positive
    nv = params.object_map @ negative
    cos_pos = _cosine(qv, pv, "positive")
    cos_neg = _cosine(qv, nv, "negative")
    value = params.config.margin - cos_pos + cos_neg
    zeros = {
        "query_map": np.zeros_like(params.query_map),
        "object_map": np.zeros_like(params.object_map),
    }
    if value <= 0.0:
        return 0.0, zeros

    dq_pos, dp = _dcos(qv, pv)
    dq_neg, dn = _dcos(qv, nv)
    dqv = -dq_pos + dq_neg
    grads = {
        "query_map": np.outer(dqv, query),
        "object_map": np.outer(-dp, positive) + np.outer(dn, negative),
    }
    return value, grads


class PipelineTrainable:
    """Adapter over (query, positive, negative) triples for the generic trainer."""

    def __init__(self, params: PipelineParams):
        self.params = params

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        return self.params.named_arrays()

    def loss_and_grads(self, triple) -> tuple[float, dict[str, np.ndarray]]:
        query, positive, negative = triple
        return hinge_grads(query, positive, negative, self.params)


def train_pipeline(
    encoded_acts,
    config: PipelineConfig,
    train_config: TrainConfig,
    params: PipelineParams | None = None,
    corpus_negatives: int = 0,
) -> tuple[PipelineParams, TrainLog]:
    """Initialize (unless given), extract triples, and run online SGD."""
    if params is None:
        params = init_pipeline_params(
            config, Rng(derive_seed(train_config.seed, "pipeline-init"))
        )
    pair_rng = (
        Rng(derive_seed(train_config.seed, "corpus-negatives"))
        if corpus_negatives else None
    )
    triples = extract_pairs(encoded_acts, corpus_negatives=corpus_negatives,
                            rng=pair_rng)
    log = train(PipelineTrainable(params), triples, train_config)
    return params, log


def similarity_profile(params: PipelineParams, act) -> np.ndarray:
    """Cosine similarity of the mapped query against each mapped candidate."""
    qv = params.query_map @ np.asarray(act.query_vec, dtype=np.float64)
    return np.array([
        _cosine(qv, params.object_map @ np.asarray(vec, dtype=np.float64))
        for vec in act.candidate_vecs
    ])


def pipeline_predict(params: PipelineParams, thresholds: Thresholds, act) -> Prediction:
    """Apply the two protest heuristics, else point at the best candidate.

    Protest when the best similarity falls below ``min_similarity`` (nothing
    matches well enough), or — for two or more candidates — when the top two
    similarities differ by less than ``min_gap`` (two things match equally
    well).  Single-candidate acts skip the gap rule.  Ties in the argmax
    break toward the lowest index.
    """
    sims = similarity_profile(params, act)
    best = int(np.argmax(sims))
    if sims[best] < thresholds.min_similarity:
        return Prediction.protest()
    if sims.size >= 2:
        top_two = np.sort(sims)[-2:]
        if float(top_two[1] - top_two[0]) < thresholds.min_gap:
            return Prediction.protest()
    return Prediction.point(best)


def _act_profiles(params: PipelineParams, encoded_acts):
    """Per-act (max_sim, top-two gap, argmax, gold) arrays for fast tuning."""
    max_sims, gaps, argmaxes, gold_indices, is_anomaly = [], [], [], [], []
    for act in encoded_acts:
        sims = similarity_profile(params, act)
        max_sims.append(float(np.max(sims)))
        if sims.size >= 2:
            top_two = np.sort(sims)[-2:]
            gaps.append(float(top_two[1] - top_two[0]))
        else:
            gaps.append(np.inf)  # the gap rule is skipped for n = 1
        argmaxes.append(int(np.argmax(sims)))
        if act.gold.kind == POINT:
            gold_indices.append(act.gold.index)
            is_anomaly.append(False)
        else:
            gold_indices.append(-1)
            is_anomaly.append(True)
    return (np.array(max_sims), np.array(gaps), np.array(argmaxes),
            np.array(gold_indices), np.array(is_anomaly))


def tune_thresholds(
    params: PipelineParams,
    encoded_val_acts,
    miss_grid=MISS_GRID,
    gap_grid=GAP_GRID,
) -> Thresholds:
    """Grid-search both thresholds for maximum overall validation accuracy.

    Ties resolve to the smaller thresholds (lexicographically, the
    minimum-similarity floor first): the grids are scanned in ascending
    order and only strictly better accuracy replaces the incumbent.
    """
    acts = list(encoded_val_acts)
    if not acts:
        raise ConfigError("threshold tuning needs a nonempty validation set")
    max_sims, gaps, argmaxes, gold_indices, is_anomaly = _act_profiles(params, acts)
    point_correct = (~is_anomaly) & (argmaxes == gold_indices)

    best = (-1, Thresholds(min_similarity=miss_grid[0], min_gap=gap_grid[0]))
    for theta_miss in miss_grid:
        below_floor = max_sims < theta_miss
        for theta_gap in gap_grid:
            protest = below_floor | (gaps < theta_gap)
            correct = int(np.sum(np.where(protest, is_anomaly, point_correct)))
            if correct > best[0]:
                best = (correct, Thresholds(min_similarity=theta_miss,
                                            min_gap=theta_gap))
    return best[1]


def gradcheck_pipeline(
    trials: int = 10,
    seed: int = 20260815,
    tolerance: float = 1e-4,
    h: float = 1e-5,
) -> GradcheckReport:
    """Finite-difference verification of the hinge-loss gradients.

    Triples are resampled until the hinge is active with at least 1e-3 of
    slack, so the finite-difference probe never straddles the max(0, .) kink.
    """
    rng = Rng(seed)
    max_err = 0.0
    failures: list[str] = []
    for trial in range(trials):
        config = PipelineConfig(
            d_query=2 + rng.randrange(3),
            d_cand=2 + rng.randrange(3),
            d_shared=3 + rng.randrange(3),
            margin=0.5,
        )
        params = None
        triple = None
        for _ in range(200):
            params = init_pipeline_params(config, rng.fork())
            triple = (rng.normals(config.d_query), rng.normals(config.d_cand),
                      rng.normals(config.d_cand))
            value = hinge_loss(*triple, params)
            if value > 1e-3:
                break
        else:
            failures.append(f"trial {trial}: could not activate the hinge")
            continue

        _, analytic = hinge_grads(*triple, params)
        analytic_vec = np.concatenate(
            [analytic[name].ravel() for name in params.named_arrays()]
        )

        probe = params.copy()
        shapes = [(name, arr.shape, arr.size)
                  for name, arr in probe.named_arrays().items()]

        def objective(vec: np.ndarray) -> float:
            offset = 0
            arrays = probe.named_arrays()
            for name, shape, size in shapes:
                arrays[name][...] = vec[offset:offset + size].reshape(shape)
                offset += size
            return hinge_loss(*triple, probe)

        flat = np.concatenate(
            [arr.ravel() for arr in params.named_arrays().values()]
        )
        numeric_vec = finite_diff_grad(objective, flat, h=h)
        err = rel_error(analytic_vec, numeric_vec)
        max_err = max(max_err, err)
        if err >= tolerance:
            failures.append(f"trial {trial}: rel error {err:.3e}")
    return GradcheckReport(
        passed=not failures,
        trials=trials,
        max_rel_error=max_err,
        tolerance=tolerance,
        failures=failures,
    )
