"""The pointing network: score candidates against a query, or protest.

Architecture, per forward pass over one encoded act with n candidates:

* a shared entity map turns every candidate vector into an entity vector;
* a separate query map turns the query into the same space;
* the similarity profile is the dot product of the query vector with each
  entity vector — its raw entries become the n pointing logits;
* an anomaly pathway sharpens the profile (contrast nonlinearity), sums it,
  concatenates the candidate count, feeds the pair through a bank of sensor
  cells, combines the cells into one score, and squashes it into (0, 1) —
  that score becomes logit n + 1;
* softmax over the n + 1 logits yields the output distribution: argmax < n
  points at a candidate, argmax = n protests.

Because the entity map is shared and the anomaly pathway pools by summing,
permuting the candidates permutes the pointing probabilities identically and
leaves the protest probability unchanged, and one parameter set evaluates
sequences of any length.

Gradients are hand-derived (no autodiff).  The similarity profile feeds BOTH
the output logits and the anomaly pathway, so its gradient sums two paths;
:func:`gradcheck_pop` verifies every parameter against central finite
differences.

The same graph serves the dense-input and one-hot-input (tabula rasa) model
variants; they differ only in how acts are encoded upstream.
"""

from dataclasses import dataclass, field

import numpy as np

from .datagen import ANOMALY, Gold
from .embeddings import EncodedAct
from .errors import ConfigError, ContractViolation
from .numerics import (
    Rng,
    finite_diff_grad,
    glorot_uniform,
    logsumexp,
    rel_error,
    softmax,
)


def _relu(x):
    return np.maximum(x, 0.0)


def _drelu(x):
    # Subgradient 0 at the kink; gradcheck resamples away from it.
    return (np.asarray(x) > 0.0).astype(np.float64)


def _sigmoid(x):
    arr = np.asarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if arr.ndim else float(out)


def _dsigmoid(x):
    s = _sigmoid(np.asarray(x, dtype=np.float64))
    return s * (1.0 - s)


def _identity(x):
    return np.asarray(x, dtype=np.float64)


def _didentity(x):
    return np.ones_like(np.asarray(x, dtype=np.float64))


def _tanh(x):
    return np.tanh(x)


def _dtanh(x):
    t = np.tanh(x)
    return 1.0 - t * t


# name -> (function, derivative-as-a-function-of-the-INPUT)
NONLINEARITIES = {
    "relu": (_relu, _drelu),
    "sigmoid": (_sigmoid, _dsigmoid),
    "identity": (_identity, _didentity),
    "tanh": (_tanh, _dtanh),
}


@dataclass(frozen=True)
class PopConfig:
    """Dimensions and switches of the pointing network.

    ``contrast`` names the profile-sharpening nonlinearity on the anomaly
    pathway, ``score_squash`` the one bounding the anomaly score.  The sensor
    cells apply the contrast nonlinearity too when ``sensor_nonlinearity`` is
    on (default), which is what lets multiple sensors express non-linear
    patterns in (cumulative similarity, cardinality) space; turn it off to
    ablate down to a purely linear sensor bank.  Biases are off by default —
    every map is then a plain linear transformation.
    """

    d_query: int
    d_cand: int
    d_ent: int = 300
    n_sensors: int = 100
    contrast: str = "relu"
    score_squash: str = "sigmoid"
    sensor_nonlinearity: bool = True
    use_bias: bool = False

    def validate(self) -> None:
        for name, dim in (("d_query", self.d_query), ("d_cand", self.d_cand),
                          ("d_ent", self.d_ent), ("n_sensors", self.n_sensors)):
            if dim < 1:
                raise ConfigError(f"{name} must be >= 1, got {dim}")
        for name, value in (("contrast", self.contrast),
                            ("score_squash", self.score_squash)):
            if value not in NONLINEARITIES:
                raise ConfigError(
                    f"unknown {name} nonlinearity {value!r}; "
                    f"expected one of {sorted(NONLINEARITIES)}"
                )

    def to_dict(self) -> dict:
        return {
            "d_query": self.d_query,
            "d_cand": self.d_cand,
            "d_ent": self.d_ent,
            "n_sensors": self.n_sensors,
            "contrast": self.contrast,
            "score_squash": self.score_squash,
            "sensor_nonlinearity": self.sensor_nonlinearity,
            "use_bias": self.use_bias,
        }

    @staticmethod
    def from_dict(record: dict) -> "PopConfig":
        return PopConfig(**record)


@dataclass
class PopParams:
    """The learned arrays.  Shapes:

    * entity_map: d_ent x d_cand (shared across candidates)
    * query_map: d_ent x d_query
    * sensor_in: n_sensors x 2 (acts on [cumulative similarity, cardinality])
    * sensor_out: 1 x n_sensors
    * optional biases matching each map's output dimension
    """

    config: PopConfig
    entity_map: np.ndarray
    query_map: np.ndarray
    sensor_in: np.ndarray
    sensor_out: np.ndarray
    entity_bias: np.ndarray | None = None
    query_bias: np.ndarray | None = None
    sensor_in_bias: np.ndarray | None = None
    sensor_out_bias: np.ndarray | None = None

    def named_arrays(self) -> dict[str, np.ndarray]:
        """Live references to every learned array, in a fixed order."""
        out = {
            "entity_map": self.entity_map,
            "query_map": self.query_map,
            "sensor_in": self.sensor_in,
            "sensor_out": self.sensor_out,
        }
        if self.config.use_bias:
            out["entity_bias"] = self.entity_bias
            out["query_bias"] = self.query_bias
            out["sensor_in_bias"] = self.sensor_in_bias
            out["sensor_out_bias"] = self.sensor_out_bias
        return out

    def copy(self) -> "PopParams":
        return PopParams(
            config=self.config,
            entity_map=self.entity_map.copy(),
            query_map=self.query_map.copy(),
            sensor_in=self.sensor_in.copy(),
            sensor_out=self.sensor_out.copy(),
            entity_bias=None if self.entity_bias is None else self.entity_bias.copy(),
            query_bias=None if self.query_bias is None else self.query_bias.copy(),
            sensor_in_bias=(
                None if self.sensor_in_bias is None else self.sensor_in_bias.copy()
            ),
            sensor_out_bias=(
                None if self.sensor_out_bias is None else self.sensor_out_bias.copy()
            ),
        )

    def validate(self) -> None:
        cfg = self.config
        expected = {
            "entity_map": (cfg.d_ent, cfg.d_cand),
            "query_map": (cfg.d_ent, cfg.d_query),
            "sensor_in": (cfg.n_sensors, 2),
            "sensor_out": (1, cfg.n_sensors),
        }
        if cfg.use_bias:
            expected.update({
                "entity_bias": (cfg.d_ent,),
                "query_bias": (cfg.d_ent,),
                "sensor_in_bias": (cfg.n_sensors,),
                "sensor_out_bias": (1,),
            })
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr is None or arr.shape != shape:
                raise ContractViolation(
                    f"parameter {name} has shape "
                    f"{None if arr is None else arr.shape}, expected {shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise ContractViolation(f"parameter {name} holds non-finite entries")


def init_params(config: PopConfig, rng: Rng) -> PopParams:
    """Glorot-uniform matrices (bound sqrt(6 / (fan_in + fan_out))), zero biases."""
    config.validate()
    params = PopParams(
        config=config,
        entity_map=glorot_uniform(rng, config.d_ent, config.d_cand),
        query_map=glorot_uniform(rng, config.d_ent, config.d_query),
        sensor_in=glorot_uniform(rng, config.n_sensors, 2),
        sensor_out=glorot_uniform(rng, 1, config.n_sensors),
    )
    if config.use_bias:
        params.entity_bias = np.zeros(config.d_ent)
        params.query_bias = np.zeros(config.d_ent)
        params.sensor_in_bias = np.zeros(config.n_sensors)
        params.sensor_out_bias = np.zeros(1)
    return params


@dataclass
class ForwardTrace:
    """Every intermediate of one forward pass, cached for exact backprop."""

    query_in: np.ndarray
    candidates_in: np.ndarray  # n x d_cand
    entity_vecs: np.ndarray    # n x d_ent
    query_vec: np.ndarray
    sims: np.ndarray
    sharpened: np.ndarray
    cum_sim: float
    cardinality: float
    sensor_pre: np.ndarray
    sensors: np.ndarray
    anomaly_raw: float
    anomaly_score: float
    logits: np.ndarray
    probs: np.ndarray


def forward(params: PopParams, act) -> ForwardTrace:
    """Run the network over one encoded act; returns the full trace."""
    cfg = params.config
    query_in = np.asarray(act.query_vec, dtype=np.float64)
    candidates = np.stack(
        [np.asarray(v, dtype=np.float64) for v in act.candidate_vecs]
    )
    if query_in.shape != (cfg.d_query,):
        raise ContractViolation(
            f"query vector has shape {query_in.shape}, expected ({cfg.d_query},)"
        )
    if candidates.shape[1] != cfg.d_cand:
        raise ContractViolation(
            f"candidate vectors have dim {candidates.shape[1]}, expected {cfg.d_cand}"
        )
    n = candidates.shape[0]

    entity_vecs = candidates @ params.entity_map.T
    query_vec = params.query_map @ query_in
    if cfg.use_bias:
        entity_vecs = entity_vecs + params.entity_bias
        query_vec = query_vec + params.query_bias

    sims = entity_vecs @ query_vec

    contrast, _ = NONLINEARITIES[cfg.contrast]
    squash, _ = NONLINEARITIES[cfg.score_squash]

    sharpened = contrast(sims)
    cum_sim = float(sharpened.sum())
    cardinality = float(n)
    pooled = np.array([cum_sim, cardinality])

    sensor_pre = params.sensor_in @ pooled
    if cfg.use_bias:
        sensor_pre = sensor_pre + params.sensor_in_bias
    sensors = contrast(sensor_pre) if cfg.sensor_nonlinearity else sensor_pre.copy()

    anomaly_raw = float((params.sensor_out @ sensors)[0])
    if cfg.use_bias:
        anomaly_raw += float(params.sensor_out_bias[0])
    anomaly_score = float(squash(anomaly_raw))

    logits = np.concatenate([sims, [anomaly_score]])
    probs = softmax(logits)
    return ForwardTrace(
        query_in=query_in,
        candidates_in=candidates,
        entity_vecs=entity_vecs,
        query_vec=query_vec,
        sims=sims,
        sharpened=sharpened,
        cum_sim=cum_sim,
        cardinality=cardinality,
        sensor_pre=sensor_pre,
        sensors=sensors,
        anomaly_raw=anomaly_raw,
        anomaly_score=anomaly_score,
        logits=logits,
        probs=probs,
    )


def _target_cell(gold: Gold, n: int) -> int:
    """Point gold targets its index; both anomaly subtypes target cell n."""
    if gold.kind == ANOMALY:
        return n
    if gold.index is None or not (0 <= gold.index < n):
        raise ContractViolation(
            f"gold index {gold.index} invalid for {n} candidates"
        )
    return gold.index


def loss(trace: ForwardTrace, gold: Gold) -> float:
    """Negative log-likelihood of the gold cell."""
    n = trace.sims.shape[0]
    target = _target_cell(gold, n)
    return logsumexp(trace.logits) - float(trace.logits[target])


def backward(params: PopParams, trace: ForwardTrace, gold: Gold) -> dict[str, np.ndarray]:
    """Exact gradient of :func:`loss` for every learned array.

    The chain runs softmax -> logits, then splits: the protest logit descends
    through the score squash, the sensor combiner, the sensor bank, and the
    pooled pair into the sharpened profile, while the pointing logits reach
    the similarity profile directly.  Both contributions are summed at the
    profile before flowing into the entity and query maps.
    """
    cfg = params.config
    n = trace.sims.shape[0]
    target = _target_cell(gold, n)

    _, dcontrast = NONLINEARITIES[cfg.contrast]
    _, dsquash = NONLINEARITIES[cfg.score_squash]

    dlogits = trace.probs.copy()
    dlogits[target] -= 1.0

    # Anomaly pathway.
    danomaly_score = float(dlogits[n])
    danomaly_raw = danomaly_score * float(dsquash(trace.anomaly_raw))
    d_sensor_out = danomaly_raw * trace.sensors[np.newaxis, :]
    dsensors = danomaly_raw * params.sensor_out[0]
    if cfg.sensor_nonlinearity:
        dsensor_pre = dsensors * dcontrast(trace.sensor_pre)
    else:
        dsensor_pre = dsensors
    pooled = np.array([trace.cum_sim, trace.cardinality])
    d_sensor_in = np.outer(dsensor_pre, pooled)
    dcum_sim = float(dsensor_pre @ params.sensor_in[:, 0])
    dsims_via_anomaly = dcum_sim * dcontrast(trace.sims)

    # Both paths meet at the similarity profile.
    dsims = dlogits[:n] + dsims_via_anomaly

    dquery_vec = trace.entity_vecs.T @ dsims
    dentity_vecs = np.outer(dsims, trace.query_vec)

    grads = {
        "entity_map": dentity_vecs.T @ trace.candidates_in,
        "query_map": np.outer(dquery_vec, trace.query_in),
        "sensor_in": d_sensor_in,
        "sensor_out": d_sensor_out,
    }
    if cfg.use_bias:
        grads["entity_bias"] = dentity_vecs.sum(axis=0)
        grads["query_bias"] = dquery_vec
        grads["sensor_in_bias"] = dsensor_pre
        grads["sensor_out_bias"] = np.array([danomaly_raw])
    return grads


PROTEST = "protest"


@dataclass(frozen=True)
class Prediction:
    """A model's answer: point at candidate ``index``, or protest."""

    kind: str
    index: int | None = None

    @staticmethod
    def point(index: int) -> "Prediction":
        return Prediction(kind="point", index=int(index))

    @staticmethod
    def protest() -> "Prediction":
        return Prediction(kind=PROTEST)

    @property
    def is_protest(self) -> bool:
        return self.kind == PROTEST


def predict(params: PopParams, act) -> Prediction:
    """Argmax over the output distribution; ties break toward the lowest index."""
    trace = forward(params, act)
    n = trace.sims.shape[0]
    best = int(np.argmax(trace.probs))  # argmax returns the first maximum
    return Prediction.protest() if best == n else Prediction.point(best)


class PopTrainable:
    """Adapter giving the generic trainer a uniform handle on the network."""

    def __init__(self, params: PopParams):
        self.params = params

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        return self.params.named_arrays()

    def loss_and_grads(self, act) -> tuple[float, dict[str, np.ndarray]]:
        trace = forward(self.params, act)
        return loss(trace, act.gold), backward(self.params, trace, act.gold)

    def example_id(self, act) -> str:
        return getattr(act, "act_id", "") or "<unnamed>"


def _params_to_vector(params: PopParams) -> np.ndarray:
    return np.concatenate([arr.ravel() for arr in params.named_arrays().values()])


def _set_params_from_vector(params: PopParams, vec: np.ndarray) -> None:
    offset = 0
    for arr in params.named_arrays().values():
        size = arr.size
        arr[...] = vec[offset:offset + size].reshape(arr.shape)
        offset += size


@dataclass
class GradcheckReport:
    passed: bool
    trials: int
    max_rel_error: float
    tolerance: float
    failures: list[str] = field(default_factory=list)


def _random_act(rng: Rng, d_query: int, d_cand: int, n: int, gold: Gold) -> EncodedAct:
    return EncodedAct(
        query_vec=rng.normals(d_query),
        candidate_vecs=[rng.normals(d_cand) for _ in range(n)],
        cardinality=n,
        gold=gold,
        act_id="gradcheck",
    )


def gradcheck_pop(
    trials: int = 20,
    seed: int = 20260815,
    tolerance: float = 1e-4,
    h: float = 1e-5,
) -> GradcheckReport:
    """Compare hand-derived gradients to central finite differences.

    Each trial draws a small random configuration (lengths 2-5, cycling gold
    through point / missing-referent / multiple-referent, toggling biases and
    the sensor nonlinearity) and checks every parameter coordinate.  Inputs
    are resampled while any pre-kink activation sits within 1e-3 of zero,
    since finite differences straddle the relu kink there.
    """
    rng = Rng(seed)
    golds = [Gold.point(0), Gold.miss(), Gold.mult(), Gold.point(1)]
    max_err = 0.0
    failures: list[str] = []
    for trial in range(trials):
        n = 2 + rng.randrange(4)
        config = PopConfig(
            d_query=2 + rng.randrange(3),
            d_cand=2 + rng.randrange(3),
            d_ent=3 + rng.randrange(3),
            n_sensors=2 + rng.randrange(3),
            sensor_nonlinearity=bool(rng.randrange(2)),
            use_bias=bool(rng.randrange(2)),
        )
        gold = golds[trial % len(golds)]
        if gold.kind == "point" and gold.index >= n:
            gold = Gold.point(n - 1)

        params = None
        for _ in range(100):
            params = init_params(config, rng.fork())
            act = _random_act(rng, config.d_query, config.d_cand, n, gold)
            trace = forward(params, act)
            margin = float(np.min(np.abs(trace.sims)))
            if config.sensor_nonlinearity:
                margin = min(margin, float(np.min(np.abs(trace.sensor_pre))))
            if margin > 1e-3:
                break
        else:
            failures.append(f"trial {trial}: could not avoid a relu kink")
            continue

        trace = forward(params, act)
        analytic = backward(params, trace, gold)
        analytic_vec = np.concatenate(
            [analytic[name].ravel() for name in params.named_arrays()]
        )

        probe = params.copy()

        def objective(vec: np.ndarray) -> float:
            _set_params_from_vector(probe, vec)
            return loss(forward(probe, act), gold)

        numeric_vec = finite_diff_grad(objective, _params_to_vector(params), h=h)
        err = rel_error(analytic_vec, numeric_vec)
        max_err = max(max_err, err)
        if err >= tolerance:
            failures.append(
                f"trial {trial}: rel error {err:.3e} (n={n}, gold={gold.kind}"
                f"/{gold.anomaly_kind or gold.index}, bias={config.use_bias})"
            )
    return GradcheckReport(
        passed=not failures,
        trials=trials,
        max_rel_error=max_err,
        tolerance=tolerance,
        failures=failures,
    )
