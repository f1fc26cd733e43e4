"""Recurrent sequence regressors built on numpy: LSTM cells, bidirectional
layers, log-cosh loss, and Adam with global-norm gradient clipping.

The two-layer network is recurrent layer -> ReLU -> dropout -> recurrent
layer -> ReLU -> dropout -> last time step -> affine head. The head is
linear in scaled space: targets are robust-scaled and routinely negative,
so predictions are left unclamped here and floored at zero only after the
inverse transform back to price units.

Backpropagation runs through both the hidden-state and cell-state
recurrences of every layer. All training randomness (shuffling, dropout
masks) comes from one seeded generator, so a training run is a pure
function of (initial network, samples, config).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _binio
from .errors import (
    BadArtifact,
    ConfigError,
    DataError,
    DivergedLoss,
    LengthMismatch,
    NonFiniteActivation,
    ShapeMismatch,
    StaleCache,
)

_NET_MAGIC = b"WFNN"
_NET_VERSION = 1
TAG_BILSTM = 1
TAG_LSTM = 2
TAG_LINEAR = 3
TAG_SVR = 4


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class LstmParams:
    """One direction of one layer; each gate weight is (hidden, hidden+input)
    and multiplies the concatenation [a_prev, x]."""

    w_c: np.ndarray
    w_u: np.ndarray
    w_f: np.ndarray
    w_o: np.ndarray
    b_c: np.ndarray
    b_u: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray

    @property
    def hidden(self) -> int:
        return self.w_c.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_c.shape[1] - self.w_c.shape[0]


def init_lstm_params(hidden: int, input_dim: int, rng: np.random.Generator) -> LstmParams:
    """Uniform +-1/sqrt(fan_in) weights, zero biases except forget gate at 1."""
    bound = 1.0 / math.sqrt(hidden + input_dim)

    def draw() -> np.ndarray:
        return rng.uniform(-bound, bound, size=(hidden, hidden + input_dim))

    return LstmParams(
        w_c=draw(), w_u=draw(), w_f=draw(), w_o=draw(),
        b_c=np.zeros(hidden), b_u=np.zeros(hidden),
        b_f=np.ones(hidden), b_o=np.zeros(hidden),
    )


def lstm_cell_forward(
    params: LstmParams,
    a_prev: np.ndarray,
    c_prev: np.ndarray,
    x: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """One step: candidate tanh, update/forget/output sigmoids, new (a, c)."""
    a_prev = np.atleast_2d(np.asarray(a_prev, dtype=np.float64))
    c_prev = np.atleast_2d(np.asarray(c_prev, dtype=np.float64))
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if a_prev.shape[1] != params.hidden or x.shape[1] != params.input_dim:
        raise ShapeMismatch(
            f"cell expects state width {params.hidden} and input width "
            f"{params.input_dim}, got {a_prev.shape[1]} and {x.shape[1]}"
        )
    z = np.concatenate([a_prev, x], axis=1)
    c_tilde = np.tanh(z @ params.w_c.T + params.b_c)
    gu = _sigmoid(z @ params.w_u.T + params.b_u)
    gf = _sigmoid(z @ params.w_f.T + params.b_f)
    go = _sigmoid(z @ params.w_o.T + params.b_o)
    c = gu * c_tilde + gf * c_prev
    tc = np.tanh(c)
    a = go * tc
    if not np.isfinite(a).all():
        raise NonFiniteActivation("lstm cell")
    cache = {"z": z, "c_tilde": c_tilde, "gu": gu, "gf": gf, "go": go,
             "c_prev": c_prev, "tc": tc}
    return a, c, cache


def lstm_layer_forward(params: LstmParams, seq: np.ndarray) -> tuple[np.ndarray, dict]:
    """Run the cell across seq (m, L, d) from zero initial state."""
    m, length, d = seq.shape
    h = params.hidden
    if d != params.input_dim:
        raise ShapeMismatch(f"layer expects input width {params.input_dim}, got {d}")
    z = np.empty((length, m, h + d))
    c_tilde = np.empty((length, m, h))
    gu = np.empty((length, m, h))
    gf = np.empty((length, m, h))
    go = np.empty((length, m, h))
    c_all = np.empty((length, m, h))
    tc = np.empty((length, m, h))
    out = np.empty((m, length, h))

    a = np.zeros((m, h))
    c = np.zeros((m, h))
    for t in range(length):
        zt = np.concatenate([a, seq[:, t, :]], axis=1)
        ct = np.tanh(zt @ params.w_c.T + params.b_c)
        ut = _sigmoid(zt @ params.w_u.T + params.b_u)
        ft = _sigmoid(zt @ params.w_f.T + params.b_f)
        ot = _sigmoid(zt @ params.w_o.T + params.b_o)
        c = ut * ct + ft * c
        a = ot * np.tanh(c)
        z[t], c_tilde[t], gu[t], gf[t], go[t] = zt, ct, ut, ft, ot
        c_all[t] = c
        tc[t] = np.tanh(c)
        out[:, t, :] = a
    if not np.isfinite(out).all():
        raise NonFiniteActivation("lstm layer")
    cache = {"z": z, "c_tilde": c_tilde, "gu": gu, "gf": gf, "go": go,
             "c": c_all, "tc": tc, "shape": (m, length, d)}
    return out, cache


def lstm_layer_backward(
    params: LstmParams, cache: dict, d_out: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Backpropagate through time, through both the a and c recurrences."""
    m, length, d = cache["shape"]
    h = params.hidden
    grads = {
        "w_c": np.zeros_like(params.w_c), "w_u": np.zeros_like(params.w_u),
        "w_f": np.zeros_like(params.w_f), "w_o": np.zeros_like(params.w_o),
        "b_c": np.zeros_like(params.b_c), "b_u": np.zeros_like(params.b_u),
        "b_f": np.zeros_like(params.b_f), "b_o": np.zeros_like(params.b_o),
    }
    d_seq = np.empty((m, length, d))
    da_next = np.zeros((m, h))
    dc_next = np.zeros((m, h))
    for t in range(length - 1, -1, -1):
        z, ct, gu, gf, go = cache["z"][t], cache["c_tilde"][t], cache["gu"][t], cache["gf"][t], cache["go"][t]
        tc = cache["tc"][t]
        c_prev = cache["c"][t - 1] if t > 0 else np.zeros((m, h))

        da = d_out[:, t, :] + da_next
        dc = dc_next + da * go * (1.0 - tc * tc)
        dso = (da * tc) * go * (1.0 - go)
        dsc = (dc * gu) * (1.0 - ct * ct)
        dsu = (dc * ct) * gu * (1.0 - gu)
        dsf = (dc * c_prev) * gf * (1.0 - gf)
        dc_next = dc * gf

        grads["w_c"] += dsc.T @ z
        grads["w_u"] += dsu.T @ z
        grads["w_f"] += dsf.T @ z
        grads["w_o"] += dso.T @ z
        grads["b_c"] += dsc.sum(axis=0)
        grads["b_u"] += dsu.sum(axis=0)
        grads["b_f"] += dsf.sum(axis=0)
        grads["b_o"] += dso.sum(axis=0)

        dz = dsc @ params.w_c + dsu @ params.w_u + dsf @ params.w_f + dso @ params.w_o
        da_next = dz[:, :h]
        d_seq[:, t, :] = dz[:, h:]
    return d_seq, grads


def bilstm_forward(
    fwd: LstmParams, bwd: LstmParams, seq: np.ndarray
) -> tuple[np.ndarray, dict]:
    """output[t] = concat(forward[t], backward-on-reversed-input re-reversed [t])."""
    out_f, cache_f = lstm_layer_forward(fwd, seq)
    out_b_rev, cache_b = lstm_layer_forward(bwd, seq[:, ::-1, :])
    out = np.concatenate([out_f, out_b_rev[:, ::-1, :]], axis=2)
    return out, {"fwd": cache_f, "bwd": cache_b}


def bilstm_backward(
    fwd: LstmParams, bwd: LstmParams, cache: dict, d_out: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray], dict[str, np.ndarray]]:
    h = fwd.hidden
    d_seq_f, grads_f = lstm_layer_backward(fwd, cache["fwd"], d_out[:, :, :h])
    d_seq_b, grads_b = lstm_layer_backward(bwd, cache["bwd"], d_out[:, ::-1, h:])
    return d_seq_f + d_seq_b[:, ::-1, :], grads_f, grads_b


@dataclass
class BiLstmNetwork:
    """Two recurrent layers with ReLU + dropout between, affine head on the
    last time step. layer*_bwd is None for the unidirectional variant."""

    layer1_fwd: LstmParams
    layer1_bwd: LstmParams | None
    layer2_fwd: LstmParams
    layer2_bwd: LstmParams | None
    dense_w: np.ndarray
    dense_b: np.ndarray
    dropout_rate: float

    @property
    def bidirectional(self) -> bool:
        return self.layer1_bwd is not None

    @property
    def input_dim(self) -> int:
        return self.layer1_fwd.input_dim

    @property
    def hidden1(self) -> int:
        return self.layer1_fwd.hidden

    @property
    def hidden2(self) -> int:
        return self.layer2_fwd.hidden

    def param_dict(self) -> dict[str, np.ndarray]:
        """Live references in a fixed order; the optimizer mutates in place."""
        cells = [("l1f", self.layer1_fwd), ("l1b", self.layer1_bwd),
                 ("l2f", self.layer2_fwd), ("l2b", self.layer2_bwd)]
        out: dict[str, np.ndarray] = {}
        for prefix, cell in cells:
            if cell is None:
                continue
            for gate in ("c", "u", "f", "o"):
                out[f"{prefix}.w_{gate}"] = getattr(cell, f"w_{gate}")
            for gate in ("c", "u", "f", "o"):
                out[f"{prefix}.b_{gate}"] = getattr(cell, f"b_{gate}")
        out["dense.w"] = self.dense_w
        out["dense.b"] = self.dense_b
        return out


def build_network(
    input_dim: int,
    hidden1: int = 800,
    hidden2: int = 1000,
    dropout_rate: float = 0.2,
    bidirectional: bool = True,
    seed: int = 0,
) -> BiLstmNetwork:
    if input_dim < 1 or hidden1 < 1 or hidden2 < 1:
        raise ConfigError(
            f"widths must be positive, got input={input_dim}, h1={hidden1}, h2={hidden2}"
        )
    if not (0.0 <= dropout_rate < 1.0):
        raise ConfigError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
    rng = np.random.default_rng(seed)
    width1 = 2 * hidden1 if bidirectional else hidden1
    dense_in = 2 * hidden2 if bidirectional else hidden2
    layer1_fwd = init_lstm_params(hidden1, input_dim, rng)
    layer1_bwd = init_lstm_params(hidden1, input_dim, rng) if bidirectional else None
    layer2_fwd = init_lstm_params(hidden2, width1, rng)
    layer2_bwd = init_lstm_params(hidden2, width1, rng) if bidirectional else None
    bound = 1.0 / math.sqrt(dense_in)
    return BiLstmNetwork(
        layer1_fwd=layer1_fwd,
        layer1_bwd=layer1_bwd,
        layer2_fwd=layer2_fwd,
        layer2_bwd=layer2_bwd,
        dense_w=rng.uniform(-bound, bound, size=dense_in),
        dense_b=np.zeros(1),
        dropout_rate=dropout_rate,
    )


def _layer_pass(net: BiLstmNetwork, which: int, seq: np.ndarray) -> tuple[np.ndarray, dict]:
    fwd = net.layer1_fwd if which == 1 else net.layer2_fwd
    bwd = net.layer1_bwd if which == 1 else net.layer2_bwd
    if bwd is None:
        out, cache = lstm_layer_forward(fwd, seq)
        return out, {"fwd": cache, "bwd": None}
    return bilstm_forward(fwd, bwd, seq)


def network_forward(
    net: BiLstmNetwork,
    inputs: np.ndarray,
    mode: str = "eval",
    seed: int | None = None,
) -> tuple[np.ndarray | float, dict]:
    """Predict in scaled space. mode="train" applies inverted-scaling dropout
    from a generator seeded with `seed`; mode="eval" is deterministic."""
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    inputs = np.asarray(inputs, dtype=np.float64)
    single = inputs.ndim == 2
    if single:
        inputs = inputs[None, :, :]
    if inputs.ndim != 3 or inputs.shape[2] != net.input_dim:
        raise ShapeMismatch(
            f"inputs must be (m, L, {net.input_dim}), got {inputs.shape}"
        )
    if not np.isfinite(inputs).all():
        raise NonFiniteActivation("network inputs")

    rate = net.dropout_rate if mode == "train" else 0.0
    rng = np.random.default_rng(seed) if rate > 0.0 else None

    def dropout(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        if rng is None:
            return arr, None
        keep = (rng.random(arr.shape) >= rate) / (1.0 - rate)
        return arr * keep, keep

    out1, cache1 = _layer_pass(net, 1, inputs)
    relu1 = out1 > 0.0
    act1, drop1 = dropout(out1 * relu1)

    out2, cache2 = _layer_pass(net, 2, act1)
    relu2 = out2 > 0.0
    act2, drop2 = dropout(out2 * relu2)

    last = act2[:, -1, :]
    preds = last @ net.dense_w + net.dense_b[0]
    if not np.isfinite(preds).all():
        raise NonFiniteActivation("dense head")
    cache = {
        "mode": mode, "l1": cache1, "l2": cache2,
        "relu1": relu1, "relu2": relu2, "drop1": drop1, "drop2": drop2,
        "last": last, "m_l_k": act2.shape,
    }
    return (float(preds[0]) if single else preds), cache


def _layer_back(
    net: BiLstmNetwork, which: int, cache: dict, d_out: np.ndarray,
    grads: dict[str, np.ndarray],
) -> np.ndarray:
    fwd = net.layer1_fwd if which == 1 else net.layer2_fwd
    bwd = net.layer1_bwd if which == 1 else net.layer2_bwd
    prefix = f"l{which}"
    if bwd is None:
        d_seq, g_f = lstm_layer_backward(fwd, cache["fwd"], d_out)
        g_b = None
    else:
        d_seq, g_f, g_b = bilstm_backward(fwd, bwd, cache, d_out)
    for gate, arr in g_f.items():
        grads[f"{prefix}f.{gate}"] = arr
    if g_b is not None:
        for gate, arr in g_b.items():
            grads[f"{prefix}b.{gate}"] = arr
    return d_seq


def network_backward(
    net: BiLstmNetwork, cache: dict, d_preds: np.ndarray | float
) -> dict[str, np.ndarray]:
    """Gradients of the scalar loss for every parameter, keyed like
    param_dict. Needs a cache produced by a train-mode forward pass."""
    if cache.get("mode") != "train":
        raise StaleCache()
    d_preds = np.atleast_1d(np.asarray(d_preds, dtype=np.float64))
    m, length, k = cache["m_l_k"]
    if d_preds.shape != (m,):
        raise ShapeMismatch(f"upstream gradient must be ({m},), got {d_preds.shape}")

    grads: dict[str, np.ndarray] = {}
    grads["dense.w"] = cache["last"].T @ d_preds
    grads["dense.b"] = np.array([d_preds.sum()])

    d_act2 = np.zeros((m, length, k))
    d_act2[:, -1, :] = np.outer(d_preds, net.dense_w)
    if cache["drop2"] is not None:
        d_act2 = d_act2 * cache["drop2"]
    d_out2 = d_act2 * cache["relu2"]

    d_act1 = _layer_back(net, 2, cache["l2"], d_out2, grads)
    if cache["drop1"] is not None:
        d_act1 = d_act1 * cache["drop1"]
    d_out1 = d_act1 * cache["relu1"]
    _layer_back(net, 1, cache["l1"], d_out1, grads)

    ordered = net.param_dict()
    return {name: grads[name] for name in ordered}


def logcosh_loss(preds: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean log-cosh of the residuals in the overflow-proof form
    |r| + log1p(exp(-2|r|)) - log 2, with gradient tanh(r)/m."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.ndim != 1 or preds.shape != targets.shape:
        raise LengthMismatch(preds.shape[0] if preds.ndim else 0,
                             targets.shape[0] if targets.ndim else 0)
    if preds.size == 0:
        raise LengthMismatch(0, 0)
    r = preds - targets
    a = np.abs(r)
    loss = float(np.mean(a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)))
    return loss, np.tanh(r) / r.size


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0
    dropout_rate: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("beta1 and beta2 must be in [0, 1)")
        if self.eps <= 0 or self.clip_norm < 0:
            raise ConfigError("eps must be positive and clip_norm non-negative")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def init_adam_state(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        m={name: np.zeros_like(arr) for name, arr in params.items()},
        v={name: np.zeros_like(arr) for name, arr in params.items()},
    )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update after global-norm clipping; parameter
    arrays are updated in place."""
    if set(params) != set(grads):
        raise ShapeMismatch("parameter and gradient key sets differ")
    sq = 0.0
    for name, arr in params.items():
        if arr.shape != grads[name].shape:
            raise ShapeMismatch(
                f"{name}: parameter {arr.shape} vs gradient {grads[name].shape}"
            )
        sq += float(np.sum(grads[name] * grads[name]))
    norm = math.sqrt(sq)
    factor = 1.0
    if config.clip_norm > 0.0 and norm > config.clip_norm:
        factor = config.clip_norm / norm

    state.step += 1
    t = state.step
    for name, arr in params.items():
        g = grads[name] * factor
        state.m[name] = config.beta1 * state.m[name] + (1.0 - config.beta1) * g
        state.v[name] = config.beta2 * state.v[name] + (1.0 - config.beta2) * (g * g)
        m_hat = state.m[name] / (1.0 - config.beta1 ** t)
        v_hat = state.v[name] / (1.0 - config.beta2 ** t)
        arr -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return params, state


def train(net: BiLstmNetwork, inputs: np.ndarray, targets: np.ndarray,
          config: TrainConfig) -> tuple[BiLstmNetwork, list[float]]:
    """Mini-batch training; returns the trained net and mean loss per epoch.

    The net's dropout rate is taken from config so one config block drives
    both architecture and optimization.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.ndim != 3 or targets.ndim != 1 or len(inputs) != len(targets):
        raise DataError(f"bad training shapes {inputs.shape} / {targets.shape}")
    m = len(targets)
    if m < 1:
        raise DataError("need at least one training sample")
    net.dropout_rate = config.dropout_rate

    rng = np.random.default_rng(config.seed)
    params = net.param_dict()
    state = init_adam_state(params)
    losses: list[float] = []
    for epoch in range(config.epochs):
        perm = rng.permutation(m)
        total = 0.0
        for lo in range(0, m, config.batch_size):
            chunk = perm[lo: lo + config.batch_size]
            step_seed = int(rng.integers(0, 2**63 - 1))
            preds, cache = network_forward(net, inputs[chunk], "train", step_seed)
            loss, d_preds = logcosh_loss(preds, targets[chunk])
            grads = network_backward(net, cache, d_preds)
            adam_step(params, grads, state, config)
            total += loss * len(chunk)
        epoch_loss = total / m
        if not math.isfinite(epoch_loss):
            raise DivergedLoss(epoch)
        losses.append(epoch_loss)
    return net, losses


def save_losses(losses: list[float], path: str) -> None:
    with open(path, "w") as f:
        f.write("epoch,loss\n")
        for epoch, loss in enumerate(losses):
            f.write(f"{epoch},{loss!r}\n")


def save_network(net: BiLstmNetwork, path: str) -> None:
    with open(path, "wb") as f:
        f.write(_NET_MAGIC)
        _binio.write_u16(f, _NET_VERSION)
        _binio.write_u8(f, TAG_BILSTM if net.bidirectional else TAG_LSTM)
        _binio.write_u64(f, net.input_dim)
        _binio.write_u64(f, net.hidden1)
        _binio.write_u64(f, net.hidden2)
        _binio.write_f64(f, net.dropout_rate)
        for arr in net.param_dict().values():
            _binio.write_f64_array(f, arr)


def load_network(path: str) -> BiLstmNetwork:
    with open(path, "rb") as f:
        _binio.expect_magic(f, _NET_MAGIC, path)
        version = _binio.read_u16(f, path)
        if version != _NET_VERSION:
            raise BadArtifact(path, f"unsupported network version {version}")
        tag = _binio.read_u8(f, path)
        if tag not in (TAG_BILSTM, TAG_LSTM):
            raise BadArtifact(path, f"not a recurrent-network checkpoint (tag {tag})")
        input_dim = _binio.read_u64(f, path)
        hidden1 = _binio.read_u64(f, path)
        hidden2 = _binio.read_u64(f, path)
        dropout_rate = _binio.read_f64(f, path)
        net = build_network(input_dim, hidden1, hidden2, dropout_rate,
                            bidirectional=(tag == TAG_BILSTM), seed=0)
        for name, arr in net.param_dict().items():
            arr[...] = _binio.read_f64_array(f, arr.shape, path)
    return net
