"""Encoder-pooling-decoder trajectory generator with optional QTC-weighted pooling.

Each agent's observed displacements are encoded by an LSTM. For every other
agent in the scene the relative position of the last observed points goes
through the relative-pose embedding layer; in ``neurosym`` mode that
embedding is multiplied by the CND transition label of the pair's latest QTC
state before being concatenated with the neighbour's hidden state, passed
through the pooling MLP and max-pooled. The decoder LSTM starts from a
context vector plus per-sample noise and emits displacements which are
integrated from the last observed position.
"""
from __future__ import annotations

import enum
import io
import json
import math
import struct
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .cnd import CndTable, alpha_of, default_cnd
from .core import ContractError, ObservationWindow, Scene, scene_windows
from .neural import (
    RELU,
    DenseLayer,
    LstmCell,
    adam_step,
    dense_backward,
    dense_forward,
    lstm_step,
    lstm_step_backward,
    variety_loss_batch,
    zero_moments,
)
from .qtc import DEFAULT_EPS, qtc_c1_state

MAGIC = b"QSYM"
FORMAT_VERSION = 1


class Mode(str, enum.Enum):
    BASELINE = "baseline"
    NEUROSYM = "neurosym"


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PredictorConfig:
    obs_len: int = 8
    pred_len: int = 12
    encoder_hidden: int = 32
    decoder_hidden: int = 32
    embed_dim: int = 16
    pool_mlp_dim: int = 64
    noise_dim: int = 8
    k_train: int = 8
    mode: Mode = Mode.BASELINE
    seed: int = 0
    rate_hz: float = 2.5
    qtc_eps: float = DEFAULT_EPS

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", Mode(self.mode))
        dims = ("pred_len", "encoder_hidden", "decoder_hidden", "embed_dim",
                "pool_mlp_dim", "noise_dim", "k_train")
        for name in dims:
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.obs_len < 2:
            raise ContractError("obs_len must be >= 2")
        if self.noise_dim >= self.decoder_hidden:
            raise ContractError("noise_dim must be smaller than decoder_hidden")
        if not self.rate_hz > 0:
            raise ContractError("rate_hz must be positive")

    def to_json(self) -> str:
        d = asdict(self)
        d["mode"] = self.mode.value
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> PredictorConfig:
        d = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ModelFormatError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


# Layer declaration order; this is also the on-disk tensor order.
LAYERS = (
    "enc_embed", "encoder", "pose_embed", "pool_mlp",
    "context", "dec_embed", "decoder", "output",
)


def _layer_shapes(cfg: PredictorConfig) -> dict[str, tuple]:
    E, He, Hd, D = cfg.embed_dim, cfg.encoder_hidden, cfg.decoder_hidden, cfg.pool_mlp_dim
    return {
        "enc_embed": ("dense", 2, E, "identity"),
        "encoder": ("lstm", E, He),
        "pose_embed": ("dense", 2, E, "identity"),
        "pool_mlp": ("dense", E + He, D, RELU),
        "context": ("dense", He + D, Hd - cfg.noise_dim, RELU),
        "dec_embed": ("dense", 2, E, "identity"),
        "decoder": ("lstm", E, Hd),
        "output": ("dense", Hd, 2, "identity"),
    }


@dataclass
class PredictorModel:
    config: PredictorConfig
    layers: dict

    @classmethod
    def init(cls, config: PredictorConfig, seed: int | None = None) -> PredictorModel:
        rng = np.random.default_rng(config.seed if seed is None else seed)
        layers = {}
        for name, spec in _layer_shapes(config).items():
            if spec[0] == "dense":
                layers[name] = DenseLayer.init(spec[1], spec[2], rng, spec[3])
            else:
                layers[name] = LstmCell.init(spec[1], spec[2], rng)
        return cls(config, layers)

    def params(self) -> dict[str, np.ndarray]:
        """Flat ``layer.param`` view in declaration order (arrays are shared)."""
        out = {}
        for name in LAYERS:
            for pname, arr in self.layers[name].params().items():
                out[f"{name}.{pname}"] = arr
        return out

    def with_params(self, flat: dict[str, np.ndarray]) -> PredictorModel:
        layers = {}
        for name in LAYERS:
            layer = self.layers[name]
            kw = {p: np.array(flat[f"{name}.{p}"], dtype=np.float64) for p in layer.params()}
            layers[name] = replace(layer, **kw)
        return PredictorModel(self.config, layers)

    def copy(self) -> PredictorModel:
        return self.with_params(self.params())

    def with_mode(self, mode: Mode | str) -> PredictorModel:
        """Same parameters, different pooling mode."""
        return PredictorModel(replace(self.config, mode=Mode(mode)), self.layers)

    def zeroed(self) -> PredictorModel:
        return self.with_params({k: np.zeros_like(v) for k, v in self.params().items()})


@dataclass(frozen=True, eq=False)
class PredictionBatch:
    window_id: int
    t_last: float
    agent_ids: tuple[int, ...]
    trajectories: np.ndarray  # (n_agents, k, pred_len, 2) absolute positions
    inference_seconds: float = 0.0
    mode: str = Mode.BASELINE.value

    @property
    def k(self) -> int:
        return self.trajectories.shape[1]

    def for_agent(self, agent_id: int) -> np.ndarray:
        return self.trajectories[self.agent_ids.index(agent_id)]


# --------------------------------------------------------------------------
# batch assembly


@dataclass
class Batch:
    """Network inputs for a set of scenes stacked along the agent axis."""

    obs_rel: np.ndarray  # (N, S, 2) observed displacements
    last_pos: np.ndarray  # (N, 2)
    a_idx: np.ndarray  # (P,) target of each pair, sorted
    b_idx: np.ndarray  # (P,) neighbour of each pair
    rel_pose: np.ndarray  # (P, 2) last_pos[b] - last_pos[a]
    alpha: np.ndarray  # (P,)
    fut_rel: np.ndarray | None = None  # (N, T, 2)

    @property
    def n(self) -> int:
        return self.obs_rel.shape[0]


@dataclass
class _WindowData:
    obs: np.ndarray  # (n, obs_len, 2)
    fut: np.ndarray | None  # (n, pred_len, 2)
    alpha: np.ndarray  # (n, n) label of pair (a, b); diagonal unused


def pair_alphas(positions: np.ndarray, cnd: CndTable, eps: float = DEFAULT_EPS) -> np.ndarray:
    """CND label of the QTC state over each pair's last two observed steps."""
    n = positions.shape[0]
    out = np.ones((n, n))
    for a in range(n):
        for b in range(n):
            if a != b:
                state = qtc_c1_state(
                    positions[a, -2], positions[a, -1], positions[b, -2], positions[b, -1], eps
                )
                out[a, b] = alpha_of(cnd, state)
    return out


def _window_data(
    positions: np.ndarray, cfg: PredictorConfig, cnd: CndTable | None, future: np.ndarray | None = None
) -> _WindowData:
    n = positions.shape[0]
    if cfg.mode is Mode.NEUROSYM:
        alpha = pair_alphas(positions, cnd or default_cnd(), cfg.qtc_eps)
    else:
        alpha = np.ones((n, n))
    return _WindowData(positions, future, alpha)


def _assemble(data: Sequence[_WindowData], alpha_override: float | None = None) -> Batch:
    obs = np.concatenate([d.obs for d in data])
    a_idx, b_idx, alphas = [], [], []
    offset = 0
    for d in data:
        n = d.obs.shape[0]
        for a in range(n):
            for b in range(n):
                if a != b:
                    a_idx.append(offset + a)
                    b_idx.append(offset + b)
                    alphas.append(d.alpha[a, b])
        offset += n
    a_idx = np.array(a_idx, dtype=np.int64)
    b_idx = np.array(b_idx, dtype=np.int64)
    last = obs[:, -1]
    alpha = np.array(alphas, dtype=np.float64)
    if alpha_override is not None:
        alpha = np.full_like(alpha, float(alpha_override))
    fut_rel = None
    if data[0].fut is not None:
        fut = np.concatenate([d.fut for d in data])
        fut_rel = np.diff(np.concatenate([last[:, None], fut], axis=1), axis=1)
    return Batch(
        obs_rel=np.diff(obs, axis=1),
        last_pos=last,
        a_idx=a_idx,
        b_idx=b_idx,
        rel_pose=(last[b_idx] - last[a_idx]).reshape(-1, 2),
        alpha=alpha,
        fut_rel=fut_rel,
    )


# --------------------------------------------------------------------------
# forward / backward


def _pool_forward(model: PredictorModel, batch: Batch, h_enc: np.ndarray):
    L = model.layers
    N, D = batch.n, model.config.pool_mlp_dim
    pooled = np.zeros((N, D))
    if len(batch.a_idx) == 0:
        return pooled, None
    emb, c_pose = dense_forward(L["pose_embed"], batch.rel_pose)
    if model.config.mode is Mode.NEUROSYM:
        emb = emb * batch.alpha[:, None]
    u = np.concatenate([emb, h_enc[batch.b_idx]], axis=1)
    m, c_mlp = dense_forward(L["pool_mlp"], u)
    starts = np.flatnonzero(np.r_[True, batch.a_idx[1:] != batch.a_idx[:-1]])
    targets = batch.a_idx[starts]
    seg_max = np.maximum.reduceat(m, starts, axis=0)
    pooled[targets] = seg_max
    return pooled, (c_pose, c_mlp, m, starts, targets, seg_max)


def pose_embedding(model: PredictorModel, offsets, alphas=None) -> np.ndarray:
    """Relative-pose embedding of neighbour offsets ``X_B - X_A``, optionally scaled."""
    offsets = np.asarray(offsets, dtype=np.float64).reshape(-1, 2)
    emb, _ = dense_forward(model.layers["pose_embed"], offsets)
    if alphas is not None:
        emb = emb * np.asarray(alphas, dtype=np.float64).reshape(-1, 1)
    return emb


def pool(
    target_agent: int,
    window: ObservationWindow,
    hidden_states: dict[int, np.ndarray],
    mode: Mode | str,
    cnd: CndTable | None = None,
    model: PredictorModel | None = None,
    alpha_override: float | None = None,
) -> np.ndarray:
    """Pooled interaction vector of ``target_agent`` against every other agent."""
    if model is None:
        raise ContractError("pool needs the model whose layers it applies")
    model = model.with_mode(mode)
    for a in window.agent_ids:
        if a not in hidden_states:
            raise ContractError(f"missing hidden state for agent {a}")
    ti = window.agent_ids.index(target_agent)
    order = [ti] + [i for i in range(len(window.agent_ids)) if i != ti]
    pos = window.positions[order]
    data = _window_data(pos, model.config, cnd)
    n = len(order)
    batch = Batch(
        obs_rel=np.diff(pos, axis=1),
        last_pos=pos[:, -1],
        a_idx=np.zeros(n - 1, dtype=np.int64),
        b_idx=np.arange(1, n, dtype=np.int64),
        rel_pose=(pos[1:, -1] - pos[0, -1]).reshape(-1, 2),
        alpha=data.alpha[0, 1:] if alpha_override is None else np.full(n - 1, float(alpha_override)),
    )
    h = np.array([hidden_states[window.agent_ids[i]] for i in order], dtype=np.float64)
    pooled, _ = _pool_forward(model, batch, h)
    return pooled[0]


def _forward(model: PredictorModel, batch: Batch, noise: np.ndarray):
    """Return displacements ``(k, N, T, 2)`` and the cache for backprop."""
    cfg, L = model.config, model.layers
    N, He = batch.n, cfg.encoder_hidden
    k = noise.shape[0]
    h = np.zeros((N, He))
    c = np.zeros((N, He))
    enc = []
    for s in range(batch.obs_rel.shape[1]):
        e, ce = dense_forward(L["enc_embed"], batch.obs_rel[:, s])
        h, c, cl = lstm_step(L["encoder"], e, h, c)
        enc.append((ce, cl))
    h_enc = h

    pooled, pool_cache = _pool_forward(model, batch, h_enc)
    ctx, c_ctx = dense_forward(L["context"], np.concatenate([h_enc, pooled], axis=1))

    h = np.concatenate([np.tile(ctx, (k, 1)), noise.reshape(k * N, -1)], axis=1)
    c = np.zeros_like(h)
    prev = np.tile(batch.obs_rel[:, -1], (k, 1))
    dec, outs = [], []
    for _ in range(cfg.pred_len):
        e, ce = dense_forward(L["dec_embed"], prev)
        h, c, cl = lstm_step(L["decoder"], e, h, c)
        d, co = dense_forward(L["output"], h)
        dec.append((ce, cl, co))
        outs.append(d)
        prev = d
    disp = np.stack(outs, axis=1).reshape(k, N, cfg.pred_len, 2)
    return disp, (enc, h_enc, pool_cache, c_ctx, dec, k)


def _backward(model: PredictorModel, batch: Batch, cache, d_disp: np.ndarray) -> dict:
    cfg, L = model.config, model.layers
    enc, h_enc, pool_cache, c_ctx, dec, k = cache
    N, T = batch.n, cfg.pred_len
    grads = {name: np.zeros_like(p) for name, p in model.params().items()}

    def acc(layer: str, g: dict) -> None:
        for pname, val in g.items():
            grads[f"{layer}.{pname}"] += val

    d_disp = d_disp.reshape(k * N, T, 2)
    hd = L["decoder"].hidden
    dh = np.zeros((k * N, hd))
    dc = np.zeros((k * N, hd))
    d_prev = np.zeros((k * N, 2))
    for t in reversed(range(T)):
        ce, cl, co = dec[t]
        g, dh_out = dense_backward(L["output"], co, d_disp[:, t] + d_prev)
        acc("output", g)
        g, de, dh, dc = lstm_step_backward(L["decoder"], cl, dh + dh_out, dc)
        acc("decoder", g)
        g, d_prev = dense_backward(L["dec_embed"], ce, de)
        acc("dec_embed", g)

    n_ctx = hd - cfg.noise_dim
    d_ctx = dh[:, :n_ctx].reshape(k, N, n_ctx).sum(axis=0)
    g, d_ctx_in = dense_backward(L["context"], c_ctx, d_ctx)
    acc("context", g)
    He = cfg.encoder_hidden
    dh_enc = d_ctx_in[:, :He].copy()
    d_pooled = d_ctx_in[:, He:]

    if pool_cache is not None:
        c_pose, c_mlp, m, starts, targets, seg_max = pool_cache
        P, D = m.shape
        seg = np.repeat(np.arange(len(starts)), np.diff(np.r_[starts, P]))
        rows = np.where(m == seg_max[seg], np.arange(P)[:, None], P)
        first = np.minimum.reduceat(rows, starts, axis=0)  # route to one argmax
        dm = np.zeros_like(m)
        dm[first, np.arange(D)[None, :]] = d_pooled[targets]
        g, du = dense_backward(L["pool_mlp"], c_mlp, dm)
        acc("pool_mlp", g)
        E = cfg.embed_dim
        np.add.at(dh_enc, batch.b_idx, du[:, E:])
        d_emb = du[:, :E]
        if cfg.mode is Mode.NEUROSYM:
            d_emb = d_emb * batch.alpha[:, None]
        g, _ = dense_backward(L["pose_embed"], c_pose, d_emb)
        acc("pose_embed", g)

    dh, dc = dh_enc, np.zeros_like(dh_enc)
    for ce, cl in reversed(enc):
        g, de, dh, dc = lstm_step_backward(L["encoder"], cl, dh, dc)
        acc("encoder", g)
        g, _ = dense_backward(L["enc_embed"], ce, de)
        acc("enc_embed", g)
    return grads


def make_batch(
    model: PredictorModel,
    observed: np.ndarray,
    future: np.ndarray | None = None,
    cnd: CndTable | None = None,
    alpha_override: float | None = None,
) -> Batch:
    """Network inputs for one scene: ``observed`` is (n, obs_len, 2), ``future`` (n, pred_len, 2)."""
    observed = np.asarray(observed, dtype=np.float64)
    if observed.ndim != 3 or observed.shape[1:] != (model.config.obs_len, 2):
        raise ContractError(f"observed positions must be (n, {model.config.obs_len}, 2), got {observed.shape}")
    if future is not None:
        future = np.asarray(future, dtype=np.float64)
        if future.shape != (observed.shape[0], model.config.pred_len, 2):
            raise ContractError(f"future positions have shape {future.shape}")
    return _assemble([_window_data(observed, model.config, cnd, future)], alpha_override)


def sample_displacements(model: PredictorModel, batch: Batch, noise: np.ndarray) -> np.ndarray:
    """Decoder output for noise ``(k, n, noise_dim)``: displacements ``(k, n, pred_len, 2)``."""
    return _forward(model, batch, noise)[0]


def loss_and_grads(model: PredictorModel, batch: Batch, noise: np.ndarray):
    """Variety loss on displacements and its gradient for every parameter."""
    disp, cache = _forward(model, batch, noise)
    loss, d_disp = variety_loss_batch(disp, batch.fut_rel)
    return loss, _backward(model, batch, cache, d_disp)


def encode(model: PredictorModel, window: ObservationWindow) -> dict[int, np.ndarray]:
    """Final encoder hidden state of every agent in ``window``."""
    batch = _assemble([_window_data(window.positions, replace(model.config, mode=Mode.BASELINE), None)])
    N, He = batch.n, model.config.encoder_hidden
    h, c = np.zeros((N, He)), np.zeros((N, He))
    for s in range(batch.obs_rel.shape[1]):
        e, _ = dense_forward(model.layers["enc_embed"], batch.obs_rel[:, s])
        h, c, _ = lstm_step(model.layers["encoder"], e, h, c)
    return {a: h[i] for i, a in enumerate(window.agent_ids)}


def predict(
    model: PredictorModel,
    window: ObservationWindow,
    k: int = 20,
    rng_seed: int | Sequence[int] = 0,
    cnd: CndTable | None = None,
    alpha_override: float | None = None,
) -> PredictionBatch:
    """Sample ``k`` future trajectories per agent in absolute coordinates."""
    if k < 1:
        raise ContractError("k must be >= 1")
    if not isinstance(window, ObservationWindow):
        raise ContractError("predict needs an ObservationWindow")
    cfg = model.config
    if window.length != cfg.obs_len:
        raise ContractError(f"window has {window.length} steps; model expects {cfg.obs_len}")
    start = time.perf_counter()
    batch = _assemble([_window_data(window.positions, cfg, cnd)], alpha_override)
    rng = np.random.default_rng(rng_seed)
    noise = rng.standard_normal((k, batch.n, cfg.noise_dim))
    disp, _ = _forward(model, batch, noise)
    traj = batch.last_pos[None, :, None, :] + np.cumsum(disp, axis=2)
    traj = np.ascontiguousarray(traj.transpose(1, 0, 2, 3))
    elapsed = time.perf_counter() - start
    return PredictionBatch(
        window.window_id, window.t_last, window.agent_ids, traj, elapsed, cfg.mode.value
    )


# --------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    model: PredictorModel
    losses: list[float] = field(default_factory=list)


def training_windows(
    dataset: Sequence[Scene], cfg: PredictorConfig, cnd: CndTable | None = None
) -> list[_WindowData]:
    length = cfg.obs_len + cfg.pred_len
    out = []
    for scene in dataset:
        if not math.isclose(scene.rate_hz, cfg.rate_hz):
            raise ContractError(
                f"scene sampled at {scene.rate_hz} Hz; model runs at {cfg.rate_hz} Hz"
            )
        for w in scene_windows(scene, length):
            obs = w.positions[:, : cfg.obs_len]
            out.append(_window_data(obs, cfg, cnd, w.positions[:, cfg.obs_len :]))
    return out


def train(
    model: PredictorModel,
    dataset: Sequence[Scene],
    epochs: int = 100,
    lr: float = 1e-3,
    *,
    batch_size: int = 32,
    clip_norm: float = 5.0,
    lr_final: float | None = None,
    seed: int | None = None,
    k: int | None = None,
    cnd: CndTable | None = None,
    windows: Sequence[_WindowData] | None = None,
) -> TrainResult:
    """Fit the generator with the variety loss; returns a new model and per-epoch losses.

    The learning rate follows a cosine schedule from ``lr`` down to
    ``lr_final`` (default ``lr / 20``) over all optimisation steps.
    """
    cfg = model.config
    if windows is None:
        if not dataset:
            raise ContractError("empty dataset")
        windows = training_windows(dataset, cfg, cnd)
    if not windows:
        raise ContractError(f"dataset yields no windows of {cfg.obs_len + cfg.pred_len} steps")
    if epochs < 0:
        raise ContractError("epochs must be >= 0")
    k = cfg.k_train if k is None else k
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    params = {n: p.copy() for n, p in model.params().items()}
    moments = zero_moments(params)
    current = model.with_params(params)
    trace: list[float] = []
    step = 0
    lr_final = lr / 20 if lr_final is None else lr_final
    total_steps = max(1, epochs * math.ceil(len(windows) / batch_size))
    for _ in range(epochs):
        order = rng.permutation(len(windows))
        total, count = 0.0, 0
        for lo in range(0, len(order), batch_size):
            batch = _assemble([windows[i] for i in order[lo : lo + batch_size]])
            noise = rng.standard_normal((k, batch.n, cfg.noise_dim))
            loss, grads = loss_and_grads(current, batch, noise)
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if clip_norm and norm > clip_norm:
                grads = {n: g * (clip_norm / norm) for n, g in grads.items()}
            rate = lr_final + 0.5 * (lr - lr_final) * (1 + math.cos(math.pi * step / total_steps))
            step += 1
            params, moments = adam_step(params, grads, moments, step, rate)
            current = model.with_params(params)
            total += loss * batch.n
            count += batch.n
        trace.append(total / count)
    return TrainResult(current, trace)


def evaluate(
    model: PredictorModel,
    dataset: Sequence[Scene] | None = None,
    k: int = 20,
    seed: int = 0,
    cnd: CndTable | None = None,
    windows: Sequence[_WindowData] | None = None,
) -> tuple[float, float]:
    """Best-of-k ADE and FDE averaged over every (window, agent) pair."""
    cfg = model.config
    if windows is None:
        windows = training_windows(dataset or [], cfg, cnd)
    if not windows:
        raise ContractError("nothing to evaluate")
    rng = np.random.default_rng(seed)
    ades, fdes = [], []
    for lo in range(0, len(windows), 64):
        batch = _assemble(windows[lo : lo + 64])
        noise = rng.standard_normal((k, batch.n, cfg.noise_dim))
        disp, _ = _forward(model, batch, noise)
        pred = np.cumsum(disp, axis=2)
        gt = np.cumsum(batch.fut_rel, axis=1)[None]
        dist = np.linalg.norm(pred - gt, axis=-1)  # (k, N, T)
        ades.append(dist.mean(axis=-1).min(axis=0))
        fdes.append(dist[..., -1].min(axis=0))
    return float(np.mean(np.concatenate(ades))), float(np.mean(np.concatenate(fdes)))


# --------------------------------------------------------------------------
# persistence


def dumps_model(model: PredictorModel) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    cfg = model.config.to_json().encode()
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)
    params = model.params()
    buf.write(struct.pack("<I", len(params)))
    for name, arr in params.items():
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data, self.pos = data, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError(
                f"truncated model file: need {n} bytes for {what} at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads_model(data: bytes) -> PredictorModel:
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise ModelFormatError("not a QSYM model file (bad magic)")
    (version,) = r.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version} (expected {FORMAT_VERSION})")
    (n_cfg,) = r.unpack("<I", "config length")
    try:
        cfg = PredictorConfig.from_json(r.take(n_cfg, "config").decode())
    except (json.JSONDecodeError, UnicodeDecodeError, TypeError, ContractError) as exc:
        raise ModelFormatError(f"invalid model config: {exc}") from exc
    template = PredictorModel.init(cfg).params()
    (count,) = r.unpack("<I", "tensor count")
    if count != len(template):
        raise ModelFormatError(f"expected {len(template)} tensors, found {count}")
    flat = {}
    for expected_name, expected in template.items():
        (n_name,) = r.unpack("<H", "tensor name length")
        name = r.take(n_name, "tensor name").decode()
        if name != expected_name:
            raise ModelFormatError(f"tensor {name!r} out of order; expected {expected_name!r}")
        (ndim,) = r.unpack("<I", f"{name} rank")
        shape = r.unpack(f"<{ndim}I", f"{name} shape")
        if tuple(shape) != expected.shape:
            raise ModelFormatError(f"tensor {name} has shape {shape}; config implies {expected.shape}")
        raw = r.take(8 * int(np.prod(shape)), f"{name} data")
        flat[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(data):
        raise ModelFormatError(f"{len(data) - r.pos} trailing bytes after the last tensor")
    return PredictorModel.init(cfg).with_params(flat)


def save_model(model: PredictorModel, path: str | Path) -> None:
    Path(path).write_bytes(dumps_model(model))


def load_model(path: str | Path) -> PredictorModel:
    return loads_model(Path(path).read_bytes())
