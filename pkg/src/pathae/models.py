"""The four autoencoder families: dense AE/VAE and their pathway-constrained
variants PAAE/PAVAE.

A pathway model routes each pathway's gene columns through a small encoder
stack ending in a single activity score; the concatenated activity vector is
compressed by a latent encoder and decoded back to the full gene vector.
Dense models skip the pathway stage.  Variational kinds emit (mu, logvar)
and sample z with the reparameterization trick during training; at inference
they use mu and dropout is disabled everywhere.

Training is plain mini-batch Adam over hand-derived backprop; there is no
autodiff anywhere in the package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError, ShapeError, TrainingDiverged
from .ndcore import (
    AdamState,
    RngStream,
    adam_step,
    affine_backward,
    affine_forward,
    as_stream,
    dropout_backward,
    dropout_forward,
    init_weights,
    relu_backward,
    relu_forward,
)

KINDS = ("ae", "vae", "paae", "pavae")
SCHEDULES = ("none", "step", "smooth")


def is_variational(kind: str) -> bool:
    return kind in ("vae", "pavae")


def is_pathway_kind(kind: str) -> bool:
    return kind in ("paae", "pavae")


@dataclass
class PathwayMask:
    """A pathway resolved to column indices of a specific gene axis."""

    name: str
    indices: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.intp)
        if self.indices.size == 0:
            raise ConfigError(f"pathway {self.name!r} resolved to an empty mask")
        if len(np.unique(self.indices)) != len(self.indices):
            raise ConfigError(f"pathway {self.name!r} has duplicate gene indices")
        if self.indices.min() < 0:
            raise ShapeError(f"pathway {self.name!r} has negative indices")

    def check_bounds(self, gene_count: int):
        if self.indices.max() >= gene_count:
            raise ShapeError(
                f"pathway {self.name!r} index {int(self.indices.max())} out of "
                f"bounds for {gene_count} genes"
            )

    @property
    def size(self) -> int:
        return int(self.indices.size)


@dataclass
class ArchitectureConfig:
    """Shape and regularization choices for one model.

    encoder_layer_sizes lists the latent-encoder widths; the last entry is
    the latent dimension d_z.  Variational kinds double the final layer to
    hold mu and logvar.  decoder_layer_sizes defaults to the mirrored
    encoder hidden sizes followed by the gene count.
    """

    kind: str
    encoder_layer_sizes: list[int]
    pathway_hidden_sizes: list[int] = field(default_factory=list)
    decoder_layer_sizes: list[int] | None = None
    dropout_rate: float = 0.5
    beta: float = 1.0
    schedule: str = "none"
    t_start: int = 32
    t_end: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"unknown schedule {self.schedule!r}; expected one of {SCHEDULES}")
        if not self.encoder_layer_sizes or any(s < 1 for s in self.encoder_layer_sizes):
            raise ConfigError("encoder_layer_sizes must be a non-empty list of positive sizes")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.beta < 0:
            raise ConfigError(f"beta must be nonnegative, got {self.beta}")
        if self.t_end is None:
            self.t_end = self.t_start + 128
        if self.schedule == "smooth" and self.t_end <= self.t_start:
            raise ConfigError(
                f"smooth schedule needs t_end > t_start, got ({self.t_start}, {self.t_end})"
            )

    @property
    def latent_dim(self) -> int:
        return self.encoder_layer_sizes[-1]


@dataclass
class ModelParams:
    """Per-layer (W, b) stacks. pathway_encoders is empty for dense kinds."""

    pathway_encoders: list[list[tuple[np.ndarray, np.ndarray]]]
    encoder: list[tuple[np.ndarray, np.ndarray]]
    decoder: list[tuple[np.ndarray, np.ndarray]]


@dataclass
class Model:
    arch: ArchitectureConfig
    gene_count: int
    masks: list[PathwayMask]
    params: ModelParams
    gene_names: list[str] | None = None
    pathway_names: list[str] | None = None

    def __post_init__(self):
        if self.pathway_names is None:
            self.pathway_names = [m.name for m in self.masks]


@dataclass
class ForwardOutputs:
    x_hat: np.ndarray
    z: np.ndarray
    a: np.ndarray | None = None
    mu: np.ndarray | None = None
    logvar: np.ndarray | None = None
    caches: dict | None = None


def _build_stack(sizes: list[int], rng: RngStream) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = init_weights(fan_in, fan_out, rng)
        b = np.zeros((1, fan_out))
        layers.append((W, b))
    return layers


def build_model(
    arch: ArchitectureConfig,
    gene_count: int,
    masks: list[PathwayMask] | None = None,
    rng=None,
    gene_names: list[str] | None = None,
) -> Model:
    """Initialize a model. Pathway kinds require a non-empty mask list;
    dense kinds ignore masks entirely."""
    rng = as_stream(rng)
    masks = list(masks) if masks else []
    if is_pathway_kind(arch.kind):
        if not masks:
            raise ConfigError(f"{arch.kind} requires at least one pathway mask")
        for m in masks:
            m.check_bounds(gene_count)
    else:
        masks = []

    pathway_encoders = []
    if is_pathway_kind(arch.kind):
        for m in masks:
            sizes = [m.size] + list(arch.pathway_hidden_sizes) + [1]
            pathway_encoders.append(_build_stack(sizes, rng))

    enc_in = len(masks) if is_pathway_kind(arch.kind) else gene_count
    enc_sizes = [enc_in] + list(arch.encoder_layer_sizes)
    if is_variational(arch.kind):
        enc_sizes[-1] = 2 * arch.latent_dim
    encoder = _build_stack(enc_sizes, rng)

    if arch.decoder_layer_sizes is not None:
        dec_sizes = [arch.latent_dim] + list(arch.decoder_layer_sizes)
        if dec_sizes[-1] != gene_count:
            raise ConfigError(
                f"decoder must end at the gene count ({gene_count}), "
                f"got {dec_sizes[-1]}"
            )
    else:
        dec_sizes = [arch.latent_dim] + list(reversed(arch.encoder_layer_sizes[:-1])) + [gene_count]
    decoder = _build_stack(dec_sizes, rng)

    params = ModelParams(pathway_encoders=pathway_encoders, encoder=encoder, decoder=decoder)
    return Model(arch=arch, gene_count=gene_count, masks=masks, params=params, gene_names=gene_names)


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------


def _stack_forward(x, layers, dropout_rate, training, rng):
    """Hidden layers: affine -> ReLU -> dropout. Final layer: affine only."""
    cache = []
    h = x
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        lin_in = h
        h = affine_forward(h, W, b)
        if i < last:
            pre = h
            h = relu_forward(h)
            h, mask = dropout_forward(h, dropout_rate, training, rng)
            cache.append((lin_in, pre, mask))
        else:
            cache.append((lin_in, None, None))
    return h, cache


def _stack_backward(upstream, layers, cache):
    grads = [None] * len(layers)
    g = upstream
    last = len(layers) - 1
    for i in range(last, -1, -1):
        W, _b = layers[i]
        lin_in, pre, mask = cache[i]
        if i < last:
            g = dropout_backward(g, mask)
            g = relu_backward(g, pre)
        g, gW, gb = affine_backward(lin_in, W, g)
        grads[i] = (gW, gb)
    return g, grads


def pathway_activity_forward(model: Model, x, training=False, rng=None):
    """Concatenated pathway activity scores, one column per pathway."""
    a, _ = _pathway_forward_cached(model, x, training, as_stream(rng))
    return a


def _pathway_forward_cached(model, x, training, rng):
    if not is_pathway_kind(model.arch.kind):
        raise ConfigError(f"{model.arch.kind} has no pathway activity space")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != model.gene_count:
        raise ShapeError(f"input has {x.shape[1]} genes, model expects {model.gene_count}")
    cols = []
    caches = []
    for mask, layers in zip(model.masks, model.params.pathway_encoders):
        xj = x[:, mask.indices]
        aj, cache = _stack_forward(xj, layers, model.arch.dropout_rate, training, rng)
        cols.append(aj)
        caches.append(cache)
    return np.concatenate(cols, axis=1), caches


def encode(model: Model, inp, training=False, rng=None):
    """Latent encoder. Returns z for deterministic kinds, (mu, logvar) for
    variational kinds (the final layer is split into halves)."""
    out, _ = _encode_cached(model, inp, training, as_stream(rng))
    return out


def _encode_cached(model, inp, training, rng):
    h, cache = _stack_forward(
        np.asarray(inp, dtype=np.float64),
        model.params.encoder,
        model.arch.dropout_rate,
        training,
        rng,
    )
    if is_variational(model.arch.kind):
        d = model.arch.latent_dim
        return (h[:, :d], h[:, d:]), cache
    return h, cache


def reparameterize(mu, logvar, rng=None, eps=None):
    """z = mu + exp(logvar/2) * eps with eps ~ N(0, 1).

    ``eps`` can be injected to make the draw explicit (gradient checks)."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise ShapeError(f"reparameterize: mu {mu.shape} vs logvar {logvar.shape}")
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(logvar))):
        raise NumericError("reparameterize: non-finite inputs")
    if eps is None:
        eps = as_stream(rng).normal(size=mu.shape)
    return mu + np.exp(0.5 * logvar) * eps, eps


def decode(model: Model, z, training=False, rng=None):
    out, _ = _stack_forward(
        np.asarray(z, dtype=np.float64),
        model.params.decoder,
        model.arch.dropout_rate,
        training,
        as_stream(rng),
    )
    return out


def forward(model: Model, x, training=False, rng=None) -> ForwardOutputs:
    """Full forward pass; caches are kept for the matching backward pass.

    Inference (training=False) disables dropout and uses mu as z for
    variational kinds, so repeated calls are deterministic.
    """
    rng = as_stream(rng)
    x = np.asarray(x, dtype=np.float64)
    caches = {}
    if is_pathway_kind(model.arch.kind):
        a, caches["pathway"] = _pathway_forward_cached(model, x, training, rng)
        enc_in = a
    else:
        if x.shape[1] != model.gene_count:
            raise ShapeError(f"input has {x.shape[1]} genes, model expects {model.gene_count}")
        a = None
        enc_in = x
    enc_out, caches["encoder"] = _encode_cached(model, enc_in, training, rng)
    if is_variational(model.arch.kind):
        mu, logvar = enc_out
        if training:
            z, eps = reparameterize(mu, logvar, rng)
            caches["eps"] = eps
        else:
            z = mu
    else:
        mu = logvar = None
        z = enc_out
    x_hat, caches["decoder"] = _stack_forward(
        z, model.params.decoder, model.arch.dropout_rate, training, rng
    )
    return ForwardOutputs(x_hat=x_hat, z=z, a=a, mu=mu, logvar=logvar, caches=caches)


# ---------------------------------------------------------------------------
# losses and schedule
# ---------------------------------------------------------------------------


def mse_loss(x, x_hat):
    """Mean over samples and features of the squared error.

    Returns (value, grad w.r.t. x_hat)."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"mse_loss: shapes {x.shape} vs {x_hat.shape}")
    diff = x_hat - x
    value = float(np.mean(diff * diff))
    grad = 2.0 * diff / diff.size
    return value, grad


def kl_gaussian(mu, logvar):
    """KL(N(mu, sigma^2) || N(0, I)), summed over dims, averaged over samples.

    Returns (value, grad_mu, grad_logvar)."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise ShapeError(f"kl_gaussian: shapes {mu.shape} vs {logvar.shape}")
    n = mu.shape[0]
    var = np.exp(logvar)
    value = float(0.5 * np.sum(mu * mu + var - 1.0 - logvar) / n)
    grad_mu = mu / n
    grad_logvar = 0.5 * (var - 1.0) / n
    return value, grad_mu, grad_logvar


def beta_schedule(t, kind: str, beta: float, t_start: int, t_end: int | None = None) -> float:
    """Effective KL weight at epoch t.

    step: 0 before t_start, beta from t_start on.
    smooth: logistic ramp centered at (t_start+t_end)/2 with slope
    10/(t_end-t_start), so the value is ~0.7% of beta at t_start and ~99.3%
    at t_end, and exactly beta/2 at the midpoint.
    """
    if kind == "none":
        return float(beta)
    if kind == "step":
        return float(beta) if t >= t_start else 0.0
    if kind == "smooth":
        if t_end is None:
            t_end = t_start + 128
        if t_end <= t_start:
            raise ConfigError(f"smooth schedule needs t_end > t_start, got ({t_start}, {t_end})")
        mid = 0.5 * (t_start + t_end)
        u = 10.0 * (t - mid) / (t_end - t_start)
        return float(beta) / (1.0 + np.exp(-u))
    raise ConfigError(f"unknown schedule kind {kind!r}")


def loss(model: Model, x, outputs: ForwardOutputs, beta_eff: float = 0.0):
    """Composite loss value for the model kind: MSE, plus beta_eff * KL for
    variational kinds."""
    mse, _ = mse_loss(x, outputs.x_hat)
    if is_variational(model.arch.kind):
        kl, _, _ = kl_gaussian(outputs.mu, outputs.logvar)
        return mse + beta_eff * kl
    return mse


# ---------------------------------------------------------------------------
# parameter bookkeeping
# ---------------------------------------------------------------------------


def flat_params(model: Model) -> list[np.ndarray]:
    """Canonical flat parameter order: pathway stacks, encoder, decoder;
    within a stack per layer W then b."""
    out = []
    for stack in model.params.pathway_encoders:
        for W, b in stack:
            out.append(W)
            out.append(b)
    for W, b in model.params.encoder:
        out.append(W)
        out.append(b)
    for W, b in model.params.decoder:
        out.append(W)
        out.append(b)
    return out


def count_params(model_or_params) -> int:
    params = model_or_params.params if isinstance(model_or_params, Model) else model_or_params
    total = 0
    for stack in params.pathway_encoders:
        for W, b in stack:
            total += W.size + b.size
    for W, b in params.encoder + params.decoder:
        total += W.size + b.size
    return int(total)


def loss_and_grads(model: Model, x, outputs: ForwardOutputs, beta_eff: float = 0.0):
    """Composite loss plus gradients for every parameter, aligned with
    flat_params ordering. Requires outputs produced by forward()."""
    caches = outputs.caches
    if caches is None:
        raise ValueError("loss_and_grads needs outputs with caches from forward()")
    x = np.asarray(x, dtype=np.float64)

    total, grad_xhat = mse_loss(x, outputs.x_hat)
    grad_z, dec_grads = _stack_backward(grad_xhat, model.params.decoder, caches["decoder"])

    if is_variational(model.arch.kind):
        kl, kl_gmu, kl_glogvar = kl_gaussian(outputs.mu, outputs.logvar)
        total += beta_eff * kl
        eps = caches["eps"]
        sigma = np.exp(0.5 * outputs.logvar)
        grad_mu = grad_z + beta_eff * kl_gmu
        grad_logvar = 0.5 * grad_z * eps * sigma + beta_eff * kl_glogvar
        enc_upstream = np.concatenate([grad_mu, grad_logvar], axis=1)
    else:
        enc_upstream = grad_z

    grad_enc_in, enc_grads = _stack_backward(enc_upstream, model.params.encoder, caches["encoder"])

    pw_grads = []
    if is_pathway_kind(model.arch.kind):
        for j, (layers, cache) in enumerate(
            zip(model.params.pathway_encoders, caches["pathway"])
        ):
            upstream_j = grad_enc_in[:, j : j + 1]
            _, gj = _stack_backward(upstream_j, layers, cache)
            pw_grads.append(gj)

    flat = []
    for stack in pw_grads:
        for gW, gb in stack:
            flat.append(gW)
            flat.append(gb)
    for gW, gb in enc_grads:
        flat.append(gW)
        flat.append(gb)
    for gW, gb in dec_grads:
        flat.append(gW)
        flat.append(gb)
    return total, flat


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 1024
    learning_rate: float = 1e-4
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


def fit(model: Model, X, config: TrainConfig, rng=None) -> list[float]:
    """Mini-batch Adam training; beta scheduling by epoch for variational
    kinds. Returns the per-epoch mean training loss (length == epochs).

    Raises TrainingDiverged as soon as a batch loss is non-finite, naming
    the epoch.
    """
    rng = as_stream(rng if rng is not None else config.seed)
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ShapeError("fit: empty training matrix")
    params = flat_params(model)
    state = AdamState.for_params(params)
    arch = model.arch
    history: list[float] = []
    for epoch in range(config.epochs):
        beta_eff = (
            beta_schedule(epoch, arch.schedule, arch.beta, arch.t_start, arch.t_end)
            if is_variational(arch.kind)
            else 0.0
        )
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb = X[idx]
            try:
                outs = forward(model, xb, training=True, rng=rng)
                value, grads = loss_and_grads(model, xb, outs, beta_eff)
                if not np.isfinite(value):
                    raise TrainingDiverged(epoch, value)
                adam_step(params, grads, state, config.learning_rate)
            except TrainingDiverged:
                raise
            except NumericError as exc:
                # non-finite values can surface mid-forward before the loss
                raise TrainingDiverged(epoch, float("nan")) from exc
            epoch_loss += value * len(idx)
        history.append(epoch_loss / n)
    return history


def reconstruct(model: Model, X) -> np.ndarray:
    """Deterministic inference reconstruction (dropout off, mu for z)."""
    return forward(model, X, training=False).x_hat


# ---------------------------------------------------------------------------
# checkpoint container
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"PATHAE-CKPT-v1\n"


def _tensor_entries(model: Model):
    entries = []
    for j, stack in enumerate(model.params.pathway_encoders):
        for i, (W, b) in enumerate(stack):
            entries.append((f"pathway/{j}/{i}/W", W))
            entries.append((f"pathway/{j}/{i}/b", b))
    for i, (W, b) in enumerate(model.params.encoder):
        entries.append((f"encoder/{i}/W", W))
        entries.append((f"encoder/{i}/b", b))
    for i, (W, b) in enumerate(model.params.decoder):
        entries.append((f"decoder/{i}/W", W))
        entries.append((f"decoder/{i}/b", b))
    return entries


def save_checkpoint(model: Model, path):
    """Self-describing container: JSON header plus raw little-endian float64
    tensor bytes. Writing the same model twice yields identical bytes."""
    entries = _tensor_entries(model)
    tensors = []
    offset = 0
    blobs = []
    for name, arr in entries:
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    arch = model.arch
    header = {
        "format": 1,
        "kind": arch.kind,
        "arch": {
            "kind": arch.kind,
            "encoder_layer_sizes": list(arch.encoder_layer_sizes),
            "pathway_hidden_sizes": list(arch.pathway_hidden_sizes),
            "decoder_layer_sizes": (
                list(arch.decoder_layer_sizes) if arch.decoder_layer_sizes is not None else None
            ),
            "dropout_rate": arch.dropout_rate,
            "beta": arch.beta,
            "schedule": arch.schedule,
            "t_start": arch.t_start,
            "t_end": arch.t_end,
        },
        "gene_count": model.gene_count,
        "gene_names": model.gene_names,
        "masks": [
            {"name": m.name, "indices": [int(i) for i in m.indices]} for m in model.masks
        ],
        "tensors": tensors,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(f"{len(head)}\n".encode("ascii"))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path) -> Model:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ConfigError(f"{path}: not a checkpoint file (bad magic)")
        head_len = int(fh.readline().decode("ascii").strip())
        header = json.loads(fh.read(head_len).decode("utf-8"))
        body = fh.read()
    arch = ArchitectureConfig(**header["arch"])
    masks = [PathwayMask(m["name"], np.asarray(m["indices"])) for m in header["masks"]]
    named = {}
    for t in header["tensors"]:
        shape = tuple(t["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = t["offset"]
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=start).reshape(shape)
        named[t["name"]] = arr.astype(np.float64)

    def stack_for(prefix, n_layers):
        return [(named[f"{prefix}/{i}/W"], named[f"{prefix}/{i}/b"]) for i in range(n_layers)]

    n_pw_layers = len(arch.pathway_hidden_sizes) + 1
    pathway_encoders = [
        stack_for(f"pathway/{j}", n_pw_layers) for j in range(len(masks))
    ]
    n_enc = len(arch.encoder_layer_sizes)
    encoder = stack_for("encoder", n_enc)
    if arch.decoder_layer_sizes is not None:
        n_dec = len(arch.decoder_layer_sizes)
    else:
        n_dec = len(arch.encoder_layer_sizes[:-1]) + 1
    decoder = stack_for("decoder", n_dec)
    params = ModelParams(pathway_encoders=pathway_encoders, encoder=encoder, decoder=decoder)
    return Model(
        arch=arch,
        gene_count=header["gene_count"],
        masks=masks,
        params=params,
        gene_names=header["gene_names"],
    )
