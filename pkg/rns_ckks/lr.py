"""
Encrypted logistic-regression training by mini-batch gradient descent.

Each ciphertext packs one mini-batch: ``samples`` rows of ``aligned`` slots,
row ``i`` holding ``y_i * (1, x_i)`` with labels ``y_i`` in {-1, +1} and the
features zero-padded to a power of two. The weights are replicated in every
row. One iteration is:

    ip   = rowsum(Z * W)                      inner products, per row
    g    = (lr/B) * sigma(-ip)                 Chebyshev polynomial fit
    W   += colsum(g * Z)                       gradient step, replicated

The same polynomial drives a cleartext reference run so the encrypted
weights can be checked against it.
"""

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial import polynomial as P
from pydantic import BaseModel, Field

from .approx_mod import chebyshev_depth, evaluate_chebyshev
from .bootstrap import BootstrapPrecomputation, bootstrap, bootstrap_keygen, bootstrap_setup
from .ciphertext import Ciphertext
from .client import EvaluationKeys, SecretKey, decrypt, encrypt, evaluation_keygen, keygen, rotation_keygen
from .config import BootstrapConfig, Parameters
from .context import Context, create_context
from .encoding import decode, encode
from .evaluator import encode_for_mult, h_add, h_mult, h_rotate, pt_mult, rescale
from .exceptions import DatasetError, LevelError, ParameterError
from .serialization import load_or_build_precomputation
from .utils import is_power_of_two

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 1024
DEFAULT_ALIGNMENT = 32
DEFAULT_SIGMOID_DEGREE = 3
DEFAULT_SIGMOID_BOUND = 8.0
# Columns of the unpublished loan-eligibility set the synthetic generator mimics
LOAN_DATASET_SHAPE = (45000, 25)


class LrConfig(BaseModel):
    """Training configuration for :func:`run_lr_demo`."""

    dataset_path: Optional[str] = Field(None, description="CSV file; None means synthetic data")
    samples: int = Field(DEFAULT_SAMPLES, description="Samples per ciphertext (mini-batch size)")
    feature_alignment: int = Field(DEFAULT_ALIGNMENT, description="Slots per sample, a power of two")
    learning_rate: float = Field(1.0, description="Gradient step size")
    iterations: int = Field(5, description="Gradient steps")
    bootstrap: bool = Field(False, description="Bootstrap the weights after every iteration")
    sigmoid_degree: int = Field(DEFAULT_SIGMOID_DEGREE, description="Degree of the sigmoid fit")
    sigmoid_bound: float = Field(DEFAULT_SIGMOID_BOUND, description="Fit interval is [-bound, bound]")
    synthetic_samples: int = Field(4096, description="Rows generated when no dataset is given")
    synthetic_features: int = Field(2, description="Features generated when no dataset is given")
    seed: Optional[int] = Field(None, description="Seed for data generation and key sampling")

    def validate_config(self, feature_count: int) -> None:
        if not is_power_of_two(self.samples):
            raise ParameterError(f"samples per ciphertext must be a power of two, got {self.samples}")
        if not is_power_of_two(self.feature_alignment):
            raise ParameterError(f"feature alignment must be a power of two, got {self.feature_alignment}")
        if feature_count + 1 > self.feature_alignment:
            raise DatasetError(
                f"{feature_count} features plus bias exceed the alignment of {self.feature_alignment}"
            )
        if self.iterations < 0:
            raise ParameterError(f"iterations must be >= 0, got {self.iterations}")
        if self.sigmoid_degree < 1:
            raise ParameterError(f"sigmoid degree must be >= 1, got {self.sigmoid_degree}")

    @property
    def slots(self) -> int:
        return self.samples * self.feature_alignment


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    @property
    def feature_count(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]


# --- data ---------------------------------------------------------------------------------------

def load_csv(path: str) -> Dataset:
    """Header row, numeric feature columns, final 0/1 label column."""
    file = Path(path)
    if not file.is_file():
        raise DatasetError(f"dataset not found: {path}")
    with file.open(newline="") as handle:
        rows = list(csv.reader(handle))
    if len(rows) < 2:
        raise DatasetError(f"{path}: need a header row and at least one sample")
    header, body = rows[0], [r for r in rows[1:] if r]
    if len(header) < 2:
        raise DatasetError(f"{path}: need at least one feature column and a label column")
    for number, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DatasetError(f"{path}:{number}: expected {len(header)} columns, found {len(row)}")
    try:
        data = np.array(body, dtype=np.float64)
    except ValueError as e:
        raise DatasetError(f"{path}: non-numeric value ({e})") from e
    if not np.all(np.isfinite(data)):
        raise DatasetError(f"{path}: non-finite value")
    labels = data[:, -1]
    if not np.all(np.isin(labels, (0.0, 1.0))):
        raise DatasetError(f"{path}: label column must be 0 or 1")
    logger.info("Loaded %d samples with %d features from %s", len(body), len(header) - 1, path)
    return Dataset(features=data[:, :-1], labels=labels.astype(np.int64))


def synthetic_dataset(samples: int, features: int, seed: Optional[int] = None, margin: float = 0.05) -> Dataset:
    """Linearly separable points in [-1, 1]^features with a gap of ``margin`` around the boundary."""
    if samples < 1 or features < 1:
        raise DatasetError("synthetic data needs at least one sample and one feature")
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=features)
    direction /= np.linalg.norm(direction)
    rows: List[np.ndarray] = []
    while sum(len(r) for r in rows) < samples:
        x = rng.uniform(-1.0, 1.0, size=(samples, features))
        rows.append(x[np.abs(x @ direction) >= margin])
    x = np.concatenate(rows)[:samples]
    return Dataset(features=x, labels=(x @ direction > 0).astype(np.int64))


def normalize_features(data: Dataset) -> Dataset:
    """Scale every column into [-1, 1]."""
    peak = np.max(np.abs(data.features), axis=0)
    peak[peak == 0] = 1.0
    return Dataset(features=data.features / peak, labels=data.labels)


def signed_rows(data: Dataset, alignment: int) -> np.ndarray:
    """``y' * (1, x)`` per sample, zero-padded to ``alignment`` columns."""
    out = np.zeros((len(data), alignment), dtype=np.float64)
    out[:, 0] = 1.0
    out[:, 1: data.feature_count + 1] = data.features
    return out * (2.0 * data.labels - 1.0)[:, None]


def mini_batches(data: Dataset, cfg: LrConfig) -> List[np.ndarray]:
    """Signed rows split into full batches of ``cfg.samples``."""
    rows = signed_rows(data, cfg.feature_alignment)
    count = len(rows) // cfg.samples
    if count == 0:
        raise DatasetError(f"{len(rows)} samples do not fill one batch of {cfg.samples}")
    if len(rows) % cfg.samples:
        logger.info("Dropping %d samples that do not fill a batch", len(rows) % cfg.samples)
    return [rows[b * cfg.samples: (b + 1) * cfg.samples] for b in range(count)]


# --- sigmoid -------------------------------------------------------------------------------------

def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def sigmoid_polynomial(degree: int = DEFAULT_SIGMOID_DEGREE, bound: float = DEFAULT_SIGMOID_BOUND) -> np.ndarray:
    """Power-basis coefficients of the least-squares fit of the sigmoid on [-bound, bound]."""
    grid = np.linspace(-bound, bound, 4001)
    fit = P.Polynomial.fit(grid, sigmoid(grid), degree)
    return fit.convert().coef


def gradient_coefficients(poly: np.ndarray, bound: float, factor: float) -> np.ndarray:
    """Chebyshev coefficients of ``y -> factor * poly(-bound * y)`` on [-1, 1]."""
    powers = (-bound) ** np.arange(len(poly))
    return C.poly2cheb(np.asarray(poly) * powers * factor)


# --- cleartext reference ------------------------------------------------------------------------------

def cleartext_train(batches: Sequence[np.ndarray], cfg: LrConfig, poly: np.ndarray) -> np.ndarray:
    """Same update as the encrypted run, in floating point."""
    weights = np.zeros(cfg.feature_alignment)
    step = cfg.learning_rate / cfg.samples
    for t in range(cfg.iterations):
        z = batches[t % len(batches)]
        g = step * P.polyval(-(z @ weights), poly)
        weights = weights + g @ z
    return weights


def accuracy(weights: np.ndarray, data: Dataset) -> float:
    bias, coeffs = weights[0], weights[1: data.feature_count + 1]
    predicted = (data.features @ coeffs + bias > 0).astype(np.int64)
    return float(np.mean(predicted == data.labels))


# --- encrypted training --------------------------------------------------------------------------------

def iteration_depth(degree: int) -> int:
    """Levels one iteration consumes: product, mask, sigmoid, gradient."""
    return 3 + chebyshev_depth(degree)


def rotation_plan(cfg: LrConfig) -> Tuple[List[int], List[int], List[int]]:
    """Steps of the row sum, the row broadcast and the column sum."""
    n, f = cfg.slots, cfg.feature_alignment
    row_left = [1 << k for k in range(f.bit_length() - 1)]
    row_right = [(n - s) % n for s in row_left]
    columns = [f << k for k in range(cfg.samples.bit_length() - 1)]
    return row_left, row_right, columns


def lr_rotations(cfg: LrConfig) -> List[int]:
    row_left, row_right, columns = rotation_plan(cfg)
    return sorted({s for s in row_left + row_right + columns if s % cfg.slots})


def _rotate_sum(ct: Ciphertext, steps: Sequence[int], keys: EvaluationKeys) -> Ciphertext:
    for s in steps:
        ct = h_add(ct, h_rotate(ct, s, keys))
    return ct


class EncryptedTrainer:
    """Holds the packed ciphertexts, keys and constants of one training run."""

    def __init__(
        self,
        ctx: Context,
        cfg: LrConfig,
        batches: Sequence[Ciphertext],
        keys: EvaluationKeys,
        coeffs: np.ndarray,
        precomp: Optional[BootstrapPrecomputation] = None,
    ):
        self.ctx = ctx
        self.cfg = cfg
        self.batches = list(batches)
        self.keys = keys
        self.coeffs = coeffs
        self.precomp = precomp
        self.mask = np.zeros(cfg.slots)
        self.mask[::cfg.feature_alignment] = 1.0 / cfg.sigmoid_bound
        self.row_left, self.row_right, self.columns = rotation_plan(cfg)
        self.depth = iteration_depth(len(coeffs) - 1)

    def step(self, weights: Ciphertext, z: Ciphertext) -> Ciphertext:
        if weights.level < self.depth:
            raise LevelError(
                f"an iteration needs {self.depth} levels, weights have {weights.level}; enable bootstrapping"
            )
        products = rescale(h_mult(z, weights, self.keys))
        ip = _rotate_sum(products, self.row_left, self.keys)
        ip = rescale(pt_mult(ip, encode_for_mult(self.ctx, self.mask, ip)))
        ip = _rotate_sum(ip, self.row_right, self.keys)
        g = evaluate_chebyshev(ip, self.coeffs, self.keys)
        gradient = _rotate_sum(rescale(h_mult(g, z, self.keys)), self.columns, self.keys)
        return h_add(weights, gradient)

    def refresh(self, weights: Ciphertext) -> Ciphertext:
        if self.precomp is None:
            raise ParameterError("bootstrapping requested without a bootstrap precomputation")
        return bootstrap(weights, self.precomp, self.keys)

    def train(self, weights: Ciphertext) -> Tuple[Ciphertext, List[float], List[float]]:
        """Run ``cfg.iterations`` steps; returns the weights and per-iteration timings."""
        iteration_seconds: List[float] = []
        bootstrap_seconds: List[float] = []
        for t in range(self.cfg.iterations):
            started = time.perf_counter()
            weights = self.step(weights, self.batches[t % len(self.batches)])
            iteration_seconds.append(time.perf_counter() - started)
            if self.cfg.bootstrap:
                started = time.perf_counter()
                weights = self.refresh(weights)
                bootstrap_seconds.append(time.perf_counter() - started)
            logger.info("LR iteration %d/%d done at level %d", t + 1, self.cfg.iterations, weights.level)
        return weights, iteration_seconds, bootstrap_seconds


def decrypt_weights(weights: Ciphertext, sk: SecretKey, alignment: int) -> np.ndarray:
    return decode(decrypt(weights, sk))[:alignment].real


class LrReport(BaseModel):
    params: List[int]
    fingerprint: str
    samples: int
    features: int
    alignment: int
    batches: int
    iterations: int
    bootstrap: bool
    iteration_seconds: List[float]
    bootstrap_seconds: List[float]
    mean_iteration_seconds: float
    mean_iteration_with_bootstrap_seconds: float
    encrypted_weights: List[float]
    cleartext_weights: List[float]
    max_weight_diff: float
    encrypted_accuracy: float
    cleartext_accuracy: float


def _mean(values: Sequence[float]) -> float:
    return float(np.mean(values)) if values else 0.0


def run_lr_demo(
    cfg: LrConfig,
    params: Parameters,
    data: Optional[Dataset] = None,
    boot_config: Optional[BootstrapConfig] = None,
    precomp_path: Optional[Union[str, Path]] = None,
) -> LrReport:
    """Train encrypted and in the clear on the same batches and compare.

    ``precomp_path`` caches the bootstrap precomputation between runs.
    """
    if data is None:
        if cfg.dataset_path:
            data = normalize_features(load_csv(cfg.dataset_path))
        else:
            data = synthetic_dataset(cfg.synthetic_samples, cfg.synthetic_features, cfg.seed)
    cfg.validate_config(data.feature_count)
    if cfg.slots > params.ring_degree // 2:
        raise ParameterError(
            f"{cfg.samples} samples x {cfg.feature_alignment} slots exceed N/2={params.ring_degree // 2}"
        )
    batches = mini_batches(data, cfg)
    poly = sigmoid_polynomial(cfg.sigmoid_degree, cfg.sigmoid_bound)
    coeffs = gradient_coefficients(poly, cfg.sigmoid_bound, cfg.learning_rate / cfg.samples)

    ctx = create_context(params)
    try:
        rng = np.random.default_rng(cfg.seed)
        sk, pk = keygen(ctx, rng)
        precomp = None
        if cfg.bootstrap:
            config = boot_config or BootstrapConfig(slots=cfg.slots)
            if precomp_path is None:
                precomp = bootstrap_setup(ctx, config)
            else:
                precomp = load_or_build_precomputation(ctx, config, precomp_path)
            keys = bootstrap_keygen(ctx, sk, precomp, rng)
        else:
            keys = evaluation_keygen(ctx, sk, rng=rng)
        for steps in lr_rotations(cfg):
            g = ctx.galois_element(steps)
            if g not in keys.rotations:
                keys.rotations[g] = rotation_keygen(ctx, sk, steps, rng)

        n = cfg.slots
        cts = [encrypt(encode(ctx, z.reshape(-1), slot_count=n), pk, rng) for z in batches]
        weights = encrypt(encode(ctx, np.zeros(n), slot_count=n), pk, rng)
        trainer = EncryptedTrainer(ctx, cfg, cts, keys, coeffs, precomp)
        weights, iteration_seconds, bootstrap_seconds = trainer.train(weights)
        encrypted = decrypt_weights(weights, sk, cfg.feature_alignment)
    finally:
        ctx.close()

    reference = cleartext_train(batches, cfg, poly)
    totals = [a + b for a, b in zip(iteration_seconds, bootstrap_seconds)] if bootstrap_seconds else iteration_seconds
    report = LrReport(
        params=params.as_list(),
        fingerprint=params.fingerprint(),
        samples=cfg.samples,
        features=data.feature_count,
        alignment=cfg.feature_alignment,
        batches=len(batches),
        iterations=cfg.iterations,
        bootstrap=cfg.bootstrap,
        iteration_seconds=iteration_seconds,
        bootstrap_seconds=bootstrap_seconds,
        mean_iteration_seconds=_mean(iteration_seconds),
        mean_iteration_with_bootstrap_seconds=_mean(totals),
        encrypted_weights=[float(w) for w in encrypted],
        cleartext_weights=[float(w) for w in reference],
        max_weight_diff=float(np.max(np.abs(encrypted - reference))),
        encrypted_accuracy=accuracy(encrypted, data),
        cleartext_accuracy=accuracy(reference, data),
    )
    logger.info(
        "LR finished: %d iterations, max |dw| = %.3g, accuracy %.3f (clear %.3f)",
        cfg.iterations, report.max_weight_diff, report.encrypted_accuracy, report.cleartext_accuracy,
    )
    return report
