"""Supervised autoencoder classifier with hand-derived backpropagation.

Three dense subnetworks share a bottleneck code: a tanh encoder, a decoder
with linear output reconstructing the input, and a sigmoid-output classifier
reading the code. The training objective combines per-sample binary cross
entropy (weight alpha) and per-dimension mean squared reconstruction error
(weight beta), plus L1 and L2 penalties on weight matrices only, never on
biases.

Training runs plain mini-batch SGD in two phases: a joint phase updating
every parameter with the full composite gradient, then a classifier-only
phase in which encoder and decoder arrays are left untouched (bit-identical
freeze) and only the cross-entropy term plus the classifier's own
regularization drive updates.

All gradients are exact analytic derivatives of the loss as implemented,
including the L1 subgradient (0 at w=0) and the probability clamp (gradient
0 where the clamp is active), so central finite differences reproduce them
to near machine precision.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Label
from .errors import ConfigError, DataError, NumericalError

P_CLAMP = 1e-12

LayerParams = tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class NetworkConfig:
    """Layer widths for the three subnetworks.

    ae_nodes lists encoder and decoder widths as one odd-length palindrome:
    (40, 20, 40) means encoder input->40->20 and decoder 20->40->input, with
    the middle entry as the code width. clf_nodes lists classifier widths
    from the code onward and must end in 1.
    """

    input_dim: int
    ae_nodes: tuple[int, ...]
    clf_nodes: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "ae_nodes", tuple(int(n) for n in self.ae_nodes))
        object.__setattr__(self, "clf_nodes", tuple(int(n) for n in self.clf_nodes))
        if self.input_dim < 2:
            raise ConfigError(f"input_dim must be >= 2, got {self.input_dim}")
        if not self.ae_nodes or len(self.ae_nodes) % 2 == 0:
            raise ConfigError("ae_nodes must have odd length")
        if self.ae_nodes != self.ae_nodes[::-1]:
            raise ConfigError(f"ae_nodes {self.ae_nodes} must be palindromic")
        if not self.clf_nodes or self.clf_nodes[-1] != 1:
            raise ConfigError("clf_nodes must end with a single output unit")
        if any(n < 1 for n in self.ae_nodes + self.clf_nodes):
            raise ConfigError("layer widths must be positive")
        if self.code_dim >= self.input_dim:
            raise ConfigError(
                f"code width {self.code_dim} must be smaller than "
                f"input width {self.input_dim}"
            )

    @property
    def code_dim(self) -> int:
        return self.ae_nodes[len(self.ae_nodes) // 2]

    def layer_shapes(self) -> tuple[list[tuple[int, int]], ...]:
        """Per-subnet (fan_in, fan_out) pairs: (encoder, decoder, classifier)."""
        mid = len(self.ae_nodes) // 2
        enc_widths = (self.input_dim,) + self.ae_nodes[: mid + 1]
        dec_widths = self.ae_nodes[mid:] + (self.input_dim,)
        clf_widths = (self.code_dim,) + self.clf_nodes

        def pairs(widths: tuple[int, ...]) -> list[tuple[int, int]]:
            return list(zip(widths[:-1], widths[1:]))

        return pairs(enc_widths), pairs(dec_widths), pairs(clf_widths)

    @property
    def n_params(self) -> int:
        return sum(
            fin * fout + fout for shapes in self.layer_shapes() for fin, fout in shapes
        )


@dataclass(frozen=True)
class TrainConfig:
    """Loss weights, regularization factors and the SGD schedule."""

    alpha: float = 1.0
    beta: float = 1.0
    l1: float = 0.0001
    l2: float = 0.0001
    lr: float = 0.01
    batch: int = 32
    joint_epochs: int = 50
    clf_epochs: int = 150
    seed: int = 0

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be >= 0")
        if self.alpha == 0 and self.beta == 0:
            raise ConfigError("alpha and beta cannot both be 0")
        if self.l1 < 0 or self.l2 < 0:
            raise ConfigError("l1 and l2 must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")
        if self.joint_epochs < 0 or self.clf_epochs < 0:
            raise ConfigError("epoch counts must be >= 0")

    @property
    def total_epochs(self) -> int:
        return self.joint_epochs + self.clf_epochs


@dataclass(frozen=True, eq=False)
class SaeParams:
    """Weight/bias pairs per subnet; arrays are never mutated in place."""

    encoder: tuple[LayerParams, ...]
    decoder: tuple[LayerParams, ...]
    classifier: tuple[LayerParams, ...]


@dataclass(frozen=True, eq=False)
class StandardizerStats:
    """Per-feature training mean and std; zero stds are replaced by 1."""

    mean: np.ndarray
    std: np.ndarray


def fit_standardizer(features: np.ndarray) -> StandardizerStats:
    x = np.asarray(features, dtype=np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    return StandardizerStats(mean=mean, std=np.where(std > 0.0, std, 1.0))


def standardize(stats: StandardizerStats, features: np.ndarray) -> np.ndarray:
    return (np.asarray(features, dtype=np.float64) - stats.mean) / stats.std


def init_params(config: NetworkConfig, seed: int) -> SaeParams:
    """Uniform(-s, s) weights with s = sqrt(6/(fan_in+fan_out)); zero biases."""
    rng = np.random.default_rng(seed)

    def draw(shapes: list[tuple[int, int]]) -> tuple[LayerParams, ...]:
        layers = []
        for fin, fout in shapes:
            s = np.sqrt(6.0 / (fin + fout))
            layers.append((rng.uniform(-s, s, size=(fin, fout)), np.zeros(fout)))
        return tuple(layers)

    enc, dec, clf = config.layer_shapes()
    return SaeParams(encoder=draw(enc), decoder=draw(dec), classifier=draw(clf))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    neg = ~pos
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[neg])
    out[neg] = ez / (1.0 + ez)
    # Saturated logits would otherwise round to exactly 0 or 1; keeping the
    # output strictly inside (0, 1) also makes the cross-entropy clamp exact.
    return np.clip(out, P_CLAMP, 1.0 - P_CLAMP)


def encode(params: SaeParams, x: np.ndarray) -> np.ndarray:
    """Code vector(s); tanh at every encoder layer keeps entries in (-1, 1)."""
    h = np.asarray(x, dtype=np.float64)
    expected = params.encoder[0][0].shape[0]
    if h.shape[-1] != expected:
        raise DataError(f"expected {expected} input features, got {h.shape[-1]}")
    for w, b in params.encoder:
        h = np.tanh(h @ w + b)
    return h


def decode(params: SaeParams, code: np.ndarray) -> np.ndarray:
    """Reconstruction; hidden layers tanh, output layer linear."""
    h = np.asarray(code, dtype=np.float64)
    for w, b in params.decoder[:-1]:
        h = np.tanh(h @ w + b)
    w, b = params.decoder[-1]
    return h @ w + b


def classify(params: SaeParams, code: np.ndarray):
    """Probability of the Right class; scalar for a single code vector."""
    h = np.asarray(code, dtype=np.float64)
    single = h.ndim == 1
    h = np.atleast_2d(h)
    for w, b in params.classifier[:-1]:
        h = np.tanh(h @ w + b)
    w, b = params.classifier[-1]
    p = _sigmoid((h @ w + b).ravel())
    return float(p[0]) if single else p


@dataclass(frozen=True)
class LossComponents:
    """Composite loss split into its three additive pieces (alpha/beta scaled)."""

    classification: float
    reconstruction: float
    regularization: float

    @property
    def total(self) -> float:
        return self.classification + self.reconstruction + self.regularization


def _check_batch(features: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError("empty batch")
    if y.shape != (x.shape[0],):
        raise DataError("one label per sample required")
    return x, y


def _bce(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    clamped = np.clip(p, P_CLAMP, 1.0 - P_CLAMP)
    return -(y * np.log(clamped) + (1.0 - y) * np.log(1.0 - clamped))


def _regularization(layers: Sequence[LayerParams], l1: float, l2: float) -> float:
    return sum(l1 * np.abs(w).sum() + l2 * np.square(w).sum() for w, _ in layers)


def _forward(params: SaeParams, x: np.ndarray):
    """Cache every activation needed by the backward pass."""
    enc_acts = [x]
    for w, b in params.encoder:
        enc_acts.append(np.tanh(enc_acts[-1] @ w + b))
    code = enc_acts[-1]
    dec_acts = [code]
    for w, b in params.decoder[:-1]:
        dec_acts.append(np.tanh(dec_acts[-1] @ w + b))
    w, b = params.decoder[-1]
    xhat = dec_acts[-1] @ w + b
    clf_acts = [code]
    for w, b in params.classifier[:-1]:
        clf_acts.append(np.tanh(clf_acts[-1] @ w + b))
    w, b = params.classifier[-1]
    p = _sigmoid((clf_acts[-1] @ w + b).ravel())
    return enc_acts, dec_acts, xhat, clf_acts, p


def loss_components(
    params: SaeParams, features: np.ndarray, labels: np.ndarray, cfg: TrainConfig
) -> LossComponents:
    x, y = _check_batch(features, labels)
    _, _, xhat, _, p = _forward(params, x)
    n, d = x.shape
    classification = cfg.alpha * _bce(p, y).sum() / n
    reconstruction = cfg.beta * np.square(xhat - x).sum() / (n * d)
    reg = _regularization(
        params.encoder + params.decoder + params.classifier, cfg.l1, cfg.l2
    )
    return LossComponents(
        classification=float(classification),
        reconstruction=float(reconstruction),
        regularization=float(reg),
    )


def composite_loss(
    params: SaeParams, features: np.ndarray, labels: np.ndarray, cfg: TrainConfig
) -> float:
    """Mean composite loss over the batch plus weight regularization."""
    return loss_components(params, features, labels, cfg).total


def classifier_objective(
    params: SaeParams, features: np.ndarray, labels: np.ndarray, cfg: TrainConfig
) -> float:
    """The phase-2 target: cross-entropy term plus classifier regularization."""
    x, y = _check_batch(features, labels)
    p = classify(params, encode(params, x))
    classification = cfg.alpha * _bce(p, y).sum() / x.shape[0]
    return float(classification + _regularization(params.classifier, cfg.l1, cfg.l2))


def _reg_grad(w: np.ndarray, l1: float, l2: float) -> np.ndarray:
    return l1 * np.sign(w) + 2.0 * l2 * w


def _backprop_dense(
    acts: list[np.ndarray], layers: Sequence[LayerParams], delta: np.ndarray
) -> tuple[list[LayerParams], np.ndarray]:
    """Walk tanh layers backwards given d(loss)/d(pre-activation) at the top."""
    grads: list[LayerParams] = []
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads.append((acts[i].T @ delta, delta.sum(axis=0)))
        if i > 0:
            delta = (delta @ w.T) * (1.0 - acts[i] ** 2)
    grads.reverse()
    return grads, delta @ layers[0][0].T


def _classifier_delta(
    p: np.ndarray, y: np.ndarray, alpha: float, n: int
) -> np.ndarray:
    clamped = np.clip(p, P_CLAMP, 1.0 - P_CLAMP)
    inside = (p > P_CLAMP) & (p < 1.0 - P_CLAMP)
    dp = (alpha / n) * inside * (-y / clamped + (1.0 - y) / (1.0 - clamped))
    return (dp * p * (1.0 - p))[:, None]


def gradients(
    params: SaeParams, features: np.ndarray, labels: np.ndarray, cfg: TrainConfig
) -> SaeParams:
    """Exact gradient of the composite loss for every parameter."""
    x, y = _check_batch(features, labels)
    n, d = x.shape
    enc_acts, dec_acts, xhat, clf_acts, p = _forward(params, x)

    # Reconstruction path: linear output layer, then tanh decoder hiddens.
    delta = (2.0 * cfg.beta / (n * d)) * (xhat - x)
    dec_grads: list[LayerParams] = [(dec_acts[-1].T @ delta, delta.sum(axis=0))]
    w_out, _ = params.decoder[-1]
    dlast = delta @ w_out.T  # gradient wrt the deepest decoder activation
    if len(params.decoder) > 1:
        delta = dlast * (1.0 - dec_acts[-1] ** 2)
        hidden, dcode_dec = _backprop_dense(dec_acts[:-1], params.decoder[:-1], delta)
        dec_grads = hidden + dec_grads
    else:
        dcode_dec = dlast

    # Classification path down to the code.
    delta = _classifier_delta(p, y, cfg.alpha, n)
    if len(params.classifier) > 1:
        w_last, _ = params.classifier[-1]
        clf_grads = [(clf_acts[-1].T @ delta, delta.sum(axis=0))]
        delta = (delta @ w_last.T) * (1.0 - clf_acts[-1] ** 2)
        hidden, dcode_clf = _backprop_dense(
            clf_acts[:-1], params.classifier[:-1], delta
        )
        clf_grads = hidden + clf_grads
    else:
        clf_grads = [(clf_acts[0].T @ delta, delta.sum(axis=0))]
        dcode_clf = delta @ params.classifier[0][0].T

    # Both paths meet at the code and flow back through the encoder.
    delta = (dcode_dec + dcode_clf) * (1.0 - enc_acts[-1] ** 2)
    enc_grads, _ = _backprop_dense(enc_acts[:-1], params.encoder, delta)

    def with_reg(grads, layers):
        return tuple(
            (dw + _reg_grad(w, cfg.l1, cfg.l2), db)
            for (dw, db), (w, _) in zip(grads, layers)
        )

    return SaeParams(
        encoder=with_reg(enc_grads, params.encoder),
        decoder=with_reg(dec_grads, params.decoder),
        classifier=with_reg(clf_grads, params.classifier),
    )


def classifier_gradients(
    params: SaeParams, features: np.ndarray, labels: np.ndarray, cfg: TrainConfig
) -> tuple[LayerParams, ...]:
    """Gradient of the phase-2 objective for classifier parameters only."""
    x, y = _check_batch(features, labels)
    code = encode(params, x)
    clf_acts = [code]
    for w, b in params.classifier[:-1]:
        clf_acts.append(np.tanh(clf_acts[-1] @ w + b))
    w, b = params.classifier[-1]
    p = _sigmoid((clf_acts[-1] @ w + b).ravel())

    delta = _classifier_delta(p, y, cfg.alpha, x.shape[0])
    grads: list[LayerParams] = []
    for i in range(len(params.classifier) - 1, -1, -1):
        w, _ = params.classifier[i]
        grads.append((clf_acts[i].T @ delta, delta.sum(axis=0)))
        if i > 0:
            delta = (delta @ w.T) * (1.0 - clf_acts[i] ** 2)
    grads.reverse()
    return tuple(
        (dw + _reg_grad(w, cfg.l1, cfg.l2), db)
        for (dw, db), (w, _) in zip(grads, params.classifier)
    )


def _sgd_step(
    layers: tuple[LayerParams, ...], grads: Sequence[LayerParams], lr: float
) -> tuple[LayerParams, ...]:
    return tuple(
        (w - lr * dw, b - lr * db) for (w, b), (dw, db) in zip(layers, grads)
    )


@dataclass(frozen=True, eq=False)
class TrainedSae:
    """Everything needed to classify new feature vectors and to checkpoint."""

    config: NetworkConfig
    train_config: TrainConfig
    params: SaeParams
    stats: StandardizerStats
    log: np.ndarray  # (epochs, 5): epoch, total, classification, recon, reg


def train(
    features: np.ndarray,
    labels: np.ndarray,
    net_cfg: NetworkConfig,
    train_cfg: TrainConfig,
) -> TrainedSae:
    """Two-phase mini-batch SGD; deterministic for fixed inputs and seed."""
    x_raw, y = _check_batch(features, labels)
    if not np.isfinite(x_raw).all():
        raise DataError("training features contain non-finite values")
    if x_raw.shape[1] != net_cfg.input_dim:
        raise DataError(
            f"network expects {net_cfg.input_dim} features, got {x_raw.shape[1]}"
        )
    present = set(np.unique(y).tolist())
    if not present <= {0.0, 1.0}:
        raise DataError(f"labels must be 0 or 1, got {sorted(present)}")
    if len(present) < 2:
        raise DataError("training set contains a single class")

    stats = fit_standardizer(x_raw)
    x = standardize(stats, x_raw)
    params = init_params(net_cfg, train_cfg.seed)
    shuffle_rng = np.random.default_rng(
        np.random.SeedSequence(train_cfg.seed).spawn(1)[0]
    )

    n = x.shape[0]
    log = np.empty((train_cfg.total_epochs, 5))
    for epoch in range(train_cfg.total_epochs):
        joint = epoch < train_cfg.joint_epochs
        order = shuffle_rng.permutation(n)
        for start in range(0, n, train_cfg.batch):
            idx = order[start : start + train_cfg.batch]
            xb, yb = x[idx], y[idx]
            if joint:
                g = gradients(params, xb, yb, train_cfg)
                params = SaeParams(
                    encoder=_sgd_step(params.encoder, g.encoder, train_cfg.lr),
                    decoder=_sgd_step(params.decoder, g.decoder, train_cfg.lr),
                    classifier=_sgd_step(
                        params.classifier, g.classifier, train_cfg.lr
                    ),
                )
            else:
                g = classifier_gradients(params, xb, yb, train_cfg)
                params = SaeParams(
                    encoder=params.encoder,
                    decoder=params.decoder,
                    classifier=_sgd_step(params.classifier, g, train_cfg.lr),
                )
        comps = loss_components(params, x, y, train_cfg)
        log[epoch] = (
            epoch + 1,
            comps.total,
            comps.classification,
            comps.reconstruction,
            comps.regularization,
        )

    for layers in (params.encoder, params.decoder, params.classifier):
        for w, b in layers:
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NumericalError("training diverged to non-finite parameters")
    return TrainedSae(
        config=net_cfg, train_config=train_cfg, params=params, stats=stats, log=log
    )


def predict_proba(
    params: SaeParams, stats: StandardizerStats, features: np.ndarray
) -> np.ndarray:
    """Right-class probability per row of raw (unstandardized) features."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    return classify(params, encode(params, standardize(stats, x)))


def predict(
    params: SaeParams, stats: StandardizerStats, features: np.ndarray
) -> np.ndarray:
    """Hard labels; Right wherever the probability is >= 0.5."""
    p = predict_proba(params, stats, features)
    return np.where(p >= 0.5, int(Label.RIGHT), int(Label.LEFT)).astype(np.int64)


def params_to_vector(params: SaeParams) -> np.ndarray:
    """Canonical flattening: encoder, decoder, classifier; W then b per layer."""
    chunks = []
    for layers in (params.encoder, params.decoder, params.classifier):
        for w, b in layers:
            chunks.append(w.ravel())
            chunks.append(b)
    return np.concatenate(chunks)


def vector_to_params(config: NetworkConfig, vec: np.ndarray) -> SaeParams:
    """Inverse of :func:`params_to_vector` for the given architecture."""
    values = np.asarray(vec, dtype=np.float64)
    if values.shape != (config.n_params,):
        raise DataError(
            f"expected {config.n_params} parameter values, got {values.shape}"
        )
    pos = 0
    subnets = []
    for shapes in config.layer_shapes():
        layers = []
        for fin, fout in shapes:
            w = values[pos : pos + fin * fout].reshape(fin, fout)
            pos += fin * fout
            b = values[pos : pos + fout]
            pos += fout
            layers.append((w.copy(), b.copy()))
        subnets.append(tuple(layers))
    return SaeParams(encoder=subnets[0], decoder=subnets[1], classifier=subnets[2])


_CHECKPOINT_MAGIC = b"MISAE"
_CHECKPOINT_VERSION = 1


def save_checkpoint(model: TrainedSae, path: str | Path) -> None:
    """Byte-deterministic binary: magic, version, JSON header, float64 payload."""
    header = {
        "input_dim": model.config.input_dim,
        "ae_nodes": list(model.config.ae_nodes),
        "clf_nodes": list(model.config.clf_nodes),
        "train": {f.name: getattr(model.train_config, f.name) for f in fields(TrainConfig)},
        "log_rows": int(model.log.shape[0]),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    payload = np.concatenate(
        [
            params_to_vector(model.params),
            model.stats.mean,
            model.stats.std,
            model.log.ravel(),
        ]
    ).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HI", _CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(payload.tobytes())


def load_checkpoint(path: str | Path) -> TrainedSae:
    """Read a model written by :func:`save_checkpoint`."""
    raw = Path(path).read_bytes()
    fixed = len(_CHECKPOINT_MAGIC) + struct.calcsize("<HI")
    if len(raw) < fixed:
        raise DataError(f"truncated checkpoint {path}")
    if raw[: len(_CHECKPOINT_MAGIC)] != _CHECKPOINT_MAGIC:
        raise DataError(f"bad magic in checkpoint {path}")
    version, blob_len = struct.unpack_from("<HI", raw, len(_CHECKPOINT_MAGIC))
    if version != _CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(raw[fixed : fixed + blob_len].decode())
        config = NetworkConfig(
            input_dim=int(header["input_dim"]),
            ae_nodes=tuple(header["ae_nodes"]),
            clf_nodes=tuple(header["clf_nodes"]),
        )
        train_cfg = TrainConfig(**header["train"])
        log_rows = int(header["log_rows"])
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise DataError(f"malformed checkpoint header in {path}: {exc}") from exc
    values = np.frombuffer(raw[fixed + blob_len :], dtype="<f8")
    expected = config.n_params + 2 * config.input_dim + 5 * log_rows
    if values.shape[0] != expected:
        raise DataError(
            f"checkpoint payload has {values.shape[0]} values, expected {expected}"
        )
    pos = config.n_params
    params = vector_to_params(config, values[:pos])
    mean = values[pos : pos + config.input_dim].copy()
    pos += config.input_dim
    std = values[pos : pos + config.input_dim].copy()
    pos += config.input_dim
    log = values[pos:].reshape(log_rows, 5).copy()
    return TrainedSae(
        config=config,
        train_config=train_cfg,
        params=params,
        stats=StandardizerStats(mean=mean, std=std),
        log=log,
    )
