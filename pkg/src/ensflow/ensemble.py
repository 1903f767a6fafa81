"""Ensemble post-processing: from a parameter sample to predictive quantiles.

The pipeline turns a collection of m calibrated parameter pairs into one set
of predictive quantiles for the test months:

1. each parameter pair is simulated over the error-training and test months,
   giving m equally plausible "sister" predictions;
2. on the error-training months each sister's errors are computed with the
   convention  error = prediction - observation  (positive error means the
   model predicted too much water);
3. a regression error model maps a sister's prediction to conditional error
   quantiles.  Three variants share this interface: variant 1 fits one model
   per sister, variant 2 pools every sister's training rows into one model,
   and variant 3 fits one model on a single sister chosen uniformly at
   random from the scheme seed;
4. error quantiles on the test months are predicted per sister;
5. each sister's error quantiles are converted into quantiles of an
   auxiliary streamflow process by subtraction.  Because the error enters
   with a minus sign the probability label flips:  aux quantile at p equals
   prediction minus error quantile at 1 - p, which is why the probability
   set must be symmetric around one half;
6. the delivered quantile at (p, t) is the arithmetic mean over the m
   auxiliary quantiles.

The regression family is a second switch: "linear" uses least squares with
Gaussian predictive quantiles, "quantile" uses pinball-loss regression per
probability.  Numbered schemes combine the two switches: schemes 1-3 are the
linear family with variants 1-3, schemes 4-6 the quantile family with
variants 1-3.  Two "basic" benchmark schemes skip the ensemble entirely and
regress observed flow on the forcing over every pre-test month.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .calibrate import PosteriorSample
from .evaluate import INTERVAL_ALPHAS, IntervalPrediction
from .gr2m import simulate_batch
from .regress import (
    LinearFit,
    QuantileFit,
    RegressionDataset,
    design_matrix,
    fit_ols,
    fit_quantile_set,
    predict_ols_quantile,
)
from .timeseries import MonthlySeries, PeriodPartition

# ten symmetric probabilities; adjacent pairs bound the 99, 97.5, 95, 90
# and 80 percent central intervals
DEFAULT_PROBABILITIES = (0.005, 0.0125, 0.025, 0.05, 0.10, 0.90, 0.95, 0.975, 0.9875, 0.995)

ERROR_MODEL_KINDS = ("linear", "quantile")

# scheme id -> (error-model variant, regression family)
SCHEME_DEFS = {
    "1": (1, "linear"),
    "2": (2, "linear"),
    "3": (3, "linear"),
    "4": (1, "quantile"),
    "5": (2, "quantile"),
    "6": (3, "quantile"),
}
BASIC_SCHEMES = ("basic-linear", "basic-quantile")
ALL_SCHEMES = BASIC_SCHEMES + tuple(SCHEME_DEFS)


def _check_probabilities(probabilities: tuple[float, ...]) -> tuple[float, ...]:
    probs = tuple(float(p) for p in probabilities)
    if len(probs) < 2:
        raise ValueError("need at least two probabilities")
    for p in probs:
        if not 0.0 < p < 1.0:
            raise ValueError(f"probabilities must lie in (0, 1), got {p}")
    if any(a >= b for a, b in zip(probs, probs[1:])):
        raise ValueError(f"probabilities must be strictly increasing, got {probs}")
    for a, b in zip(probs, reversed(probs)):
        if abs(a + b - 1.0) > 1e-12:
            raise ValueError(
                f"probability set must be symmetric around 0.5 ({a} and {b} do not pair up)"
            )
    return probs


@dataclass(frozen=True)
class SchemeConfig:
    """Switches shared by the numbered schemes.

    ``m`` sisters are taken from the head of the parameter sample; the
    ``seed`` only feeds variant 3's choice of training sister.  The optional
    non-negativity clamp is off by default: delivered quantiles are reported
    exactly as computed unless the caller explicitly asks for flooring.
    """

    variant: int = 2
    error_model: str = "quantile"
    probabilities: tuple[float, ...] = DEFAULT_PROBABILITIES
    m: int = 600
    seed: int = 0
    include_warmup_in_basic: bool = True
    clamp_nonnegative: bool = False

    def __post_init__(self) -> None:
        if self.variant not in (1, 2, 3):
            raise ValueError(f"variant must be 1, 2 or 3, got {self.variant}")
        if self.error_model not in ERROR_MODEL_KINDS:
            raise ValueError(f"error_model must be one of {ERROR_MODEL_KINDS}, got {self.error_model!r}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        object.__setattr__(self, "probabilities", _check_probabilities(self.probabilities))


@dataclass(frozen=True)
class SisterEnsemble:
    """m sister predictions over the error-training and test months.

    ``predictions`` is (m, n2 + n3); ``errors`` is (m, n2) and follows the
    convention  error = prediction - observation  on the training months.
    """

    predictions: np.ndarray
    errors: np.ndarray

    def __post_init__(self) -> None:
        predictions = np.asarray(self.predictions, dtype=float)
        errors = np.asarray(self.errors, dtype=float)
        if predictions.ndim != 2 or errors.ndim != 2:
            raise ValueError("predictions and errors must be 2-d")
        if predictions.shape[0] != errors.shape[0]:
            raise ValueError(
                f"sister counts differ: {predictions.shape[0]} predictions vs {errors.shape[0]} errors"
            )
        if errors.shape[1] >= predictions.shape[1]:
            raise ValueError("predictions must extend past the error-training months")
        object.__setattr__(self, "predictions", predictions)
        object.__setattr__(self, "errors", errors)

    @property
    def m(self) -> int:
        return self.predictions.shape[0]

    @property
    def n2(self) -> int:
        return self.errors.shape[1]

    @property
    def n3(self) -> int:
        return self.predictions.shape[1] - self.errors.shape[1]

    @property
    def training_predictions(self) -> np.ndarray:
        return self.predictions[:, : self.n2]

    @property
    def test_predictions(self) -> np.ndarray:
        return self.predictions[:, self.n2 :]


@dataclass(frozen=True)
class TrainedErrorModels:
    """Fitted error models: one per sister (variant 1) or a single one (2, 3)."""

    kind: str
    variant: int
    models: tuple
    selected_sister: int | None = None

    def model_for(self, sister: int):
        return self.models[sister] if self.variant == 1 else self.models[0]


@dataclass(frozen=True)
class AuxiliaryQuantiles:
    """Per-sister quantiles of the auxiliary process, shape (m, n_probs, n3)."""

    probabilities: tuple[float, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3 or values.shape[1] != len(self.probabilities):
            raise ValueError(
                f"values must be (m, {len(self.probabilities)}, n3), got {values.shape}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probabilities", _check_probabilities(self.probabilities))

    @property
    def m(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class CombinedPrediction:
    """Delivered quantile series, shape (n_probs, n3)."""

    probabilities: tuple[float, ...]
    quantiles: np.ndarray

    def __post_init__(self) -> None:
        quantiles = np.asarray(self.quantiles, dtype=float)
        if quantiles.ndim != 2 or quantiles.shape[0] != len(self.probabilities):
            raise ValueError(
                f"quantiles must be ({len(self.probabilities)}, n3), got {quantiles.shape}"
            )
        object.__setattr__(self, "quantiles", quantiles)
        object.__setattr__(self, "probabilities", tuple(float(p) for p in self.probabilities))


def _probability_index(probabilities: tuple[float, ...], p: float) -> int:
    for i, q in enumerate(probabilities):
        if abs(q - p) <= 1e-9:
            return i
    raise ValueError(f"probability {p} not in the delivered set {probabilities}")


def intervals_from_prediction(
    pred: CombinedPrediction, alphas=INTERVAL_ALPHAS
) -> dict[float, IntervalPrediction]:
    """Pair off quantiles into central intervals, keyed by alpha."""
    out: dict[float, IntervalPrediction] = {}
    for alpha in alphas:
        lo = _probability_index(pred.probabilities, alpha / 2.0)
        hi = _probability_index(pred.probabilities, 1.0 - alpha / 2.0)
        out[alpha] = IntervalPrediction(alpha, pred.quantiles[lo], pred.quantiles[hi])
    return out


def member_interval_bounds(aux: AuxiliaryQuantiles, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-sister central-interval bounds at one level: two (m, n3) arrays."""
    lo = _probability_index(aux.probabilities, alpha / 2.0)
    hi = _probability_index(aux.probabilities, 1.0 - alpha / 2.0)
    return aux.values[:, lo, :], aux.values[:, hi, :]


def generate_sisters(
    sample: PosteriorSample, series: MonthlySeries, split: PeriodPartition
) -> SisterEnsemble:
    """Simulate every retained parameter pair and collect training errors."""
    if series.n < split.n_total:
        raise ValueError(f"series has {series.n} months, partition needs {split.n_total}")
    simulated = simulate_batch(
        sample.pairs[:, 0],
        sample.pairs[:, 1],
        series.precipitation,
        series.potential_evaporation,
        split,
    )
    # keep the error-training and test months, drop the calibration months
    predictions = simulated[:, split.n1 :]
    observed_training = np.asarray(series.streamflow, dtype=float)[split.t2]
    errors = predictions[:, : split.n2] - observed_training[np.newaxis, :]
    return SisterEnsemble(predictions=predictions, errors=errors)


def _fit_one(kind: str, u: np.ndarray, e: np.ndarray, probabilities: tuple[float, ...]):
    data = RegressionDataset(design_matrix(u), e)
    return fit_ols(data) if kind == "linear" else fit_quantile_set(data, probabilities)


def train_error_model(ensemble: SisterEnsemble, config: SchemeConfig) -> TrainedErrorModels:
    """Fit the configured error-model variant on the training errors."""
    kind = config.error_model
    u = ensemble.training_predictions
    e = ensemble.errors
    if config.variant == 1:
        models = []
        for i in range(ensemble.m):
            try:
                models.append(_fit_one(kind, u[i], e[i], config.probabilities))
            except ValueError as exc:
                raise type(exc)(f"sister {i}: {exc}") from exc
        return TrainedErrorModels(kind=kind, variant=1, models=tuple(models))
    if config.variant == 2:
        # pool every sister's rows, sister-major order
        model = _fit_one(kind, u.reshape(-1), e.reshape(-1), config.probabilities)
        return TrainedErrorModels(kind=kind, variant=2, models=(model,))
    rng = np.random.default_rng(config.seed)
    chosen = int(rng.integers(ensemble.m))
    try:
        model = _fit_one(kind, u[chosen], e[chosen], config.probabilities)
    except ValueError as exc:
        raise type(exc)(f"sister {chosen}: {exc}") from exc
    return TrainedErrorModels(kind=kind, variant=3, models=(model,), selected_sister=chosen)


def _quantile_coefficients(model: QuantileFit, p: float) -> np.ndarray:
    try:
        return model.coefficients[p]
    except KeyError:
        key = min(model.coefficients, key=lambda q: abs(q - p))
        if abs(key - p) > 1e-9:
            raise ValueError(f"model was not trained at probability {p}") from None
        return model.coefficients[key]


def predict_error_quantiles(
    models: TrainedErrorModels, ensemble: SisterEnsemble, probabilities: tuple[float, ...]
) -> np.ndarray:
    """Conditional error quantiles on the test months, shape (m, n_probs, n3)."""
    probs = _check_probabilities(probabilities)
    out = np.empty((ensemble.m, len(probs), ensemble.n3))
    for i in range(ensemble.m):
        x = design_matrix(ensemble.test_predictions[i])
        model = models.model_for(i)
        if isinstance(model, LinearFit):
            for j, p in enumerate(probs):
                out[i, j] = predict_ols_quantile(model, x, p)
        elif isinstance(model, QuantileFit):
            for j, p in enumerate(probs):
                out[i, j] = x @ _quantile_coefficients(model, p)
        else:
            raise TypeError(f"unsupported error model {type(model).__name__}")
    return out


def to_auxiliary(
    ensemble: SisterEnsemble, error_quantiles: np.ndarray, probabilities: tuple[float, ...]
) -> AuxiliaryQuantiles:
    """Subtract error quantiles from the sister prediction, flipping labels.

    aux quantile at probability p = prediction - error quantile at 1 - p;
    with a sorted symmetric probability set the flip is a reversal along the
    probability axis.
    """
    probs = _check_probabilities(probabilities)
    eq = np.asarray(error_quantiles, dtype=float)
    expected = (ensemble.m, len(probs), ensemble.n3)
    if eq.shape != expected:
        raise ValueError(f"error quantiles must have shape {expected}, got {eq.shape}")
    values = ensemble.test_predictions[:, np.newaxis, :] - eq[:, ::-1, :]
    return AuxiliaryQuantiles(probabilities=probs, values=values)


def combine(aux: AuxiliaryQuantiles) -> CombinedPrediction:
    """Arithmetic mean over sisters at each (probability, month)."""
    return CombinedPrediction(
        probabilities=aux.probabilities, quantiles=aux.values.mean(axis=0)
    )


def run_basic_scheme(
    model_kind: str,
    series: MonthlySeries,
    split: PeriodPartition,
    probabilities: tuple[float, ...] = DEFAULT_PROBABILITIES,
    include_warmup: bool = True,
) -> CombinedPrediction:
    """Benchmark without an ensemble: regress flow on forcing, predict quantiles.

    Trains on every month before the test period (warm-up months included by
    default, switchable) with precipitation and potential evaporation as
    predictors, then emits quantiles for the test months.
    """
    if model_kind not in ERROR_MODEL_KINDS:
        raise ValueError(f"model kind must be one of {ERROR_MODEL_KINDS}, got {model_kind!r}")
    probs = _check_probabilities(probabilities)
    if series.n < split.n_total:
        raise ValueError(f"series has {series.n} months, partition needs {split.n_total}")
    start = 0 if include_warmup else split.warmup
    rows = slice(start, split.warmup + split.n1 + split.n2)
    p = np.asarray(series.precipitation, dtype=float)
    e = np.asarray(series.potential_evaporation, dtype=float)
    y = np.asarray(series.streamflow, dtype=float)
    data = RegressionDataset(design_matrix(p[rows], e[rows]), y[rows])
    x_test = design_matrix(p[split.t3], e[split.t3])

    quantiles = np.empty((len(probs), split.n3))
    if model_kind == "linear":
        fit = fit_ols(data)
        for j, prob in enumerate(probs):
            quantiles[j] = predict_ols_quantile(fit, x_test, prob)
    else:
        fit = fit_quantile_set(data, probs)
        for j, prob in enumerate(probs):
            quantiles[j] = x_test @ fit.coefficients[prob]
    return CombinedPrediction(probabilities=probs, quantiles=quantiles)


def run_ensemble_scheme(
    sample: PosteriorSample,
    series: MonthlySeries,
    split: PeriodPartition,
    config: SchemeConfig,
) -> tuple[CombinedPrediction, AuxiliaryQuantiles, SisterEnsemble]:
    """Steps 1-6 for one numbered scheme; returns the delivered prediction
    plus the per-sister intermediates needed for crowd bookkeeping."""
    if sample.m < config.m:
        raise ValueError(f"need {config.m} parameter pairs, sample holds {sample.m}")
    if sample.m > config.m:
        sample = PosteriorSample(
            pairs=sample.pairs[: config.m],
            mode=sample.mode,
            converged=sample.converged,
            psrf=sample.psrf,
        )
    ensemble = generate_sisters(sample, series, split)
    models = train_error_model(ensemble, config)
    error_quantiles = predict_error_quantiles(models, ensemble, config.probabilities)
    aux = to_auxiliary(ensemble, error_quantiles, config.probabilities)
    combined = combine(aux)
    if config.clamp_nonnegative:
        combined = CombinedPrediction(
            probabilities=combined.probabilities,
            quantiles=np.maximum(combined.quantiles, 0.0),
        )
    return combined, aux, ensemble


@dataclass(frozen=True)
class SchemeResult:
    scheme: str
    prediction: CombinedPrediction
    auxiliary: AuxiliaryQuantiles | None
    elapsed_seconds: float


def run_scheme(
    scheme: str | int,
    series: MonthlySeries,
    split: PeriodPartition,
    config: SchemeConfig | None = None,
    sample: PosteriorSample | None = None,
) -> SchemeResult:
    """Dispatch one scheme id and time it.

    Numbered schemes override the config's variant and regression family
    (that is what the number means) and require a parameter sample.
    """
    scheme_id = str(scheme)
    if config is None:
        config = SchemeConfig()
    t_start = time.perf_counter()
    if scheme_id in BASIC_SCHEMES:
        prediction = run_basic_scheme(
            scheme_id.removeprefix("basic-"),
            series,
            split,
            config.probabilities,
            include_warmup=config.include_warmup_in_basic,
        )
        if config.clamp_nonnegative:
            prediction = CombinedPrediction(
                probabilities=prediction.probabilities,
                quantiles=np.maximum(prediction.quantiles, 0.0),
            )
        auxiliary = None
    elif scheme_id in SCHEME_DEFS:
        if sample is None:
            raise ValueError(f"scheme {scheme_id} needs a calibration sample")
        variant, kind = SCHEME_DEFS[scheme_id]
        scheme_config = replace(config, variant=variant, error_model=kind)
        prediction, auxiliary, _ = run_ensemble_scheme(sample, series, split, scheme_config)
    else:
        raise ValueError(f"unknown scheme {scheme_id!r}, expected one of {ALL_SCHEMES}")
    return SchemeResult(
        scheme=scheme_id,
        prediction=prediction,
        auxiliary=auxiliary,
        elapsed_seconds=time.perf_counter() - t_start,
    )
