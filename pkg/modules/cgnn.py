# modules/cgnn.py
"""
Commute-weighted message passing (numpy, full batch).

One layer, for node i with in-neighbors N_in(i) and out-neighbors N_out(i):
  m_in(i)  = mean_{j in N_in(i)}  c_in[i, j]  * h(j) W_in
  m_out(i) = mean_{j in N_out(i)} c_out[i, j] * h(j) W_out
  h'(i)    = mean of {h(i) W_self, m_in(i) if N_in(i) else -, m_out(i) if N_out(i) else -} + b

With every weight equal to 1 this is the plain direction-aware (DirGNN) layer.
Layers are followed by the activation except the last; a linear head maps to logits.
Gradients are written out by hand and checked against central differences.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse, special

from config import settings
from modules.commute import ProximityWeights
from modules.errors import ConfigError, ConvergenceError, DatasetFormatError, GraphError
from modules.graph_core import DiGraph

logger = logging.getLogger("CgnnApp")

ACTIVATIONS = ("relu", "identity")
CHECKPOINT_MAGIC = "cgnn-checkpoint v1"


# ----- TYPES -----
@dataclass
class LayerParams:
    W_in: np.ndarray
    W_out: np.ndarray
    W_self: np.ndarray
    b: np.ndarray


@dataclass
class ModelParams:
    layers: List[LayerParams]
    W_head: np.ndarray
    b_head: np.ndarray
    activation: str = settings.ACTIVATION
    seed: int = settings.SEED

    @property
    def dims(self) -> List[int]:
        d = [self.layers[0].W_self.shape[0]] if self.layers else [self.W_head.shape[0]]
        d += [lp.W_self.shape[1] for lp in self.layers]
        return d + [self.W_head.shape[1]]

    def blocks(self) -> List[Tuple[str, np.ndarray]]:
        """Every parameter array with a stable name, in checkpoint order."""
        out = []
        for k, lp in enumerate(self.layers):
            out += [(f"layer{k}.W_in", lp.W_in), (f"layer{k}.W_out", lp.W_out),
                    (f"layer{k}.W_self", lp.W_self), (f"layer{k}.b", lp.b)]
        return out + [("head.W", self.W_head), ("head.b", self.b_head)]

    def copy(self) -> "ModelParams":
        return ModelParams(
            layers=[LayerParams(lp.W_in.copy(), lp.W_out.copy(), lp.W_self.copy(), lp.b.copy())
                    for lp in self.layers],
            W_head=self.W_head.copy(), b_head=self.b_head.copy(),
            activation=self.activation, seed=self.seed,
        )

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for _, a in self.blocks())


@dataclass(frozen=True)
class TrainConfig:
    layers: int = settings.LAYERS
    hidden: int = settings.HIDDEN
    lr: float = settings.LEARNING_RATE
    weight_decay: float = settings.WEIGHT_DECAY
    epochs: int = settings.EPOCHS
    seed: int = settings.SEED
    rank_q: int = settings.RANK_Q
    backend: str = settings.DEFAULT_BACKEND
    activation: str = settings.ACTIVATION

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigError("layers must be >= 1")
        if self.hidden < 1:
            raise ConfigError("hidden must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        # lr == 0 is accepted: it is the frozen-parameter run
        if self.lr < 0:
            raise ConfigError("learning rate must be >= 0")
        if self.weight_decay < 0:
            raise ConfigError("weight decay must be >= 0")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation '{self.activation}'")


# ----- AGGREGATION OPERATORS -----
@dataclass(frozen=True)
class Aggregation:
    """Row-normalized weighted in/out operators plus the per-node combine scale."""
    in_op: sparse.csr_matrix
    out_op: sparse.csr_matrix
    scale: np.ndarray

    @staticmethod
    def build(g: DiGraph, w: ProximityWeights) -> "Aggregation":
        n = g.num_nodes
        if w.num_nodes != n:
            raise GraphError(f"proximity weights cover {w.num_nodes} nodes, graph has {n}")
        if set(w.c_out) != g.edge_set:
            raise GraphError("out-weight keys do not match the graph's out-edges")
        if set(w.c_in) != {(j, i) for i, j in g.edges}:
            raise GraphError("in-weight keys do not match the graph's in-edges")
        in_deg = g.in_degrees().astype(float)
        out_deg = g.out_degrees().astype(float)
        inv_in = np.divide(1.0, in_deg, out=np.zeros(n), where=in_deg > 0)
        inv_out = np.divide(1.0, out_deg, out=np.zeros(n), where=out_deg > 0)
        in_op = (sparse.diags(inv_in) @ w.in_matrix()).tocsr()
        out_op = (sparse.diags(inv_out) @ w.out_matrix()).tocsr()
        scale = 1.0 / (1.0 + (in_deg > 0) + (out_deg > 0))
        return Aggregation(in_op=in_op, out_op=out_op, scale=scale)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    return np.maximum(z, 0.0) if activation == "relu" else z


def _check_input(h: np.ndarray, n: int, d: int, where: str):
    if h.ndim != 2 or h.shape != (n, d):
        raise GraphError(f"{where}: expected input of shape ({n}, {d}), got {h.shape}")


# ----- FORWARD -----
def _layer(h_prev: np.ndarray, agg: Aggregation, lp: LayerParams):
    in_h = agg.in_op @ h_prev
    out_h = agg.out_op @ h_prev
    z = agg.scale[:, None] * (h_prev @ lp.W_self + in_h @ lp.W_in + out_h @ lp.W_out) + lp.b
    return z, in_h, out_h


def cgnn_layer(h_prev: np.ndarray, g: DiGraph, w: ProximityWeights, params: LayerParams) -> np.ndarray:
    h_prev = np.asarray(h_prev, dtype=float)
    _check_input(h_prev, g.num_nodes, params.W_self.shape[0], "cgnn_layer")
    z, _, _ = _layer(h_prev, Aggregation.build(g, w), params)
    return z


def _forward(params: ModelParams, agg: Aggregation, x: np.ndarray):
    cache = []
    h = x
    last = len(params.layers) - 1
    for k, lp in enumerate(params.layers):
        z, in_h, out_h = _layer(h, agg, lp)
        cache.append((h, in_h, out_h, z))
        h = _activate(z, params.activation) if k < last else z
    logits = h @ params.W_head + params.b_head
    return logits, h, cache


def forward(params: ModelParams, g: DiGraph, x: np.ndarray, w: ProximityWeights) -> np.ndarray:
    """Logits (pre-softmax), N x K."""
    x = np.asarray(x, dtype=float)
    _check_input(x, g.num_nodes, params.dims[0], "forward")
    logits, _, _ = _forward(params, Aggregation.build(g, w), x)
    return logits


def dirgnn_forward(params: ModelParams, g: DiGraph, x: np.ndarray) -> np.ndarray:
    """Same network with every proximity weight fixed to 1."""
    return forward(params, g, x, ProximityWeights.uniform(g, 1.0))


# ----- LOSS / BACKWARD -----
def _loss(logits: np.ndarray, labels: np.ndarray, idx: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over idx and its gradient w.r.t. the logits."""
    logp = special.log_softmax(logits[idx], axis=1)
    loss = -float(logp[np.arange(idx.size), labels[idx]].mean())
    g_sel = np.exp(logp)
    g_sel[np.arange(idx.size), labels[idx]] -= 1.0
    grad = np.zeros_like(logits)
    grad[idx] = g_sel / idx.size
    return loss, grad


def loss_and_grads(params: ModelParams, agg: Aggregation, x: np.ndarray, labels: np.ndarray,
                   idx: np.ndarray) -> Tuple[float, ModelParams]:
    logits, h_last, cache = _forward(params, agg, x)
    loss, g_logits = _loss(logits, labels, idx)

    grads_layers: List[Optional[LayerParams]] = [None] * len(params.layers)
    d_head_w = h_last.T @ g_logits
    d_head_b = g_logits.sum(axis=0)
    g_h = g_logits @ params.W_head.T
    last = len(params.layers) - 1
    for k in range(last, -1, -1):
        lp = params.layers[k]
        h_prev, in_h, out_h, z = cache[k]
        g_z = g_h * (z > 0) if (k < last and params.activation == "relu") else g_h
        g_s = agg.scale[:, None] * g_z
        grads_layers[k] = LayerParams(
            W_in=in_h.T @ g_s,
            W_out=out_h.T @ g_s,
            W_self=h_prev.T @ g_s,
            b=g_z.sum(axis=0),
        )
        g_h = (g_s @ lp.W_self.T
               + agg.in_op.T @ (g_s @ lp.W_in.T)
               + agg.out_op.T @ (g_s @ lp.W_out.T))

    grads = ModelParams(layers=grads_layers, W_head=d_head_w, b_head=d_head_b,
                        activation=params.activation, seed=params.seed)
    return loss, grads


# ----- INIT / TRAIN / EVAL -----
def init_params(dims: Sequence[int], seed: int = settings.SEED,
                activation: str = settings.ACTIVATION) -> ModelParams:
    """dims = [d_in, hidden_1, ..., hidden_L, K]; U(+-INIT_GAIN / sqrt(fan_in)), zero biases."""
    if len(dims) < 3:
        raise ConfigError("need at least one message-passing layer: dims = [d, hidden..., K]")
    rng = np.random.default_rng(seed)

    def _u(fan_in, fan_out):
        bound = settings.INIT_GAIN / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    layers = []
    for d_in, d_out in zip(dims[:-2], dims[1:-1]):
        layers.append(LayerParams(W_in=_u(d_in, d_out), W_out=_u(d_in, d_out),
                                  W_self=_u(d_in, d_out), b=np.zeros(d_out)))
    return ModelParams(layers=layers, W_head=_u(dims[-2], dims[-1]), b_head=np.zeros(dims[-1]),
                       activation=activation, seed=seed)


def _predict(logits: np.ndarray) -> np.ndarray:
    # argmax returns the first maximum: ties go to the lowest class index
    return np.argmax(logits, axis=1)


def _accuracy(logits: np.ndarray, labels: np.ndarray, idx: np.ndarray) -> float:
    return float((_predict(logits[idx]) == labels[idx]).mean())


def _apply_update(params: ModelParams, grads: ModelParams, lr: float, wd: float):
    for (name, p), (_, gr) in zip(params.blocks(), grads.blocks()):
        decay = 0.0 if name.endswith(".b") else wd
        p -= lr * gr + lr * decay * p


def train(g: DiGraph, x: np.ndarray, labels: np.ndarray, splits, w: ProximityWeights,
          cfg: TrainConfig) -> Tuple[ModelParams, List[Dict[str, float]]]:
    """
    Full-batch gradient descent with weight decay on the train split.
    Returns the parameters of the epoch with the best validation accuracy (earliest on ties)
    and the per-epoch history.
    """
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    train_idx = np.asarray(splits.train, dtype=np.int64)
    val_idx = np.asarray(splits.val, dtype=np.int64)
    if train_idx.size == 0:
        raise GraphError("train split is empty")
    num_classes = int(labels.max()) + 1
    if cfg.lr == 0:
        logger.warning("Train: learning rate is 0; parameters will not change")

    dims = [x.shape[1]] + [cfg.hidden] * cfg.layers + [num_classes]
    params = init_params(dims, seed=cfg.seed, activation=cfg.activation)
    _check_input(x, g.num_nodes, dims[0], "train")
    agg = Aggregation.build(g, w)

    best = params.copy()
    best_val = -1.0
    history: List[Dict[str, float]] = []
    for epoch in range(1, cfg.epochs + 1):
        loss, grads = loss_and_grads(params, agg, x, labels, train_idx)
        _apply_update(params, grads, cfg.lr, cfg.weight_decay)

        logits, _, _ = _forward(params, agg, x)
        train_acc = _accuracy(logits, labels, train_idx)
        val_acc = _accuracy(logits, labels, val_idx) if val_idx.size else float("nan")
        history.append({"epoch": epoch, "train_loss": loss, "train_acc": train_acc, "val_acc": val_acc})

        score = val_acc if val_idx.size else train_acc
        if score > best_val:
            best_val = score
            best = params.copy()
        if epoch == 1 or epoch % 50 == 0 or epoch == cfg.epochs:
            logger.info(f"Train: epoch {epoch:4d} loss={loss:.4f} train_acc={train_acc:.3f} val_acc={val_acc:.3f}")
        if not (np.isfinite(loss) and params.is_finite()):
            raise ConvergenceError(f"training diverged at epoch {epoch} (loss={loss})")
    return best, history


def evaluate(params: ModelParams, g: DiGraph, x: np.ndarray, labels: np.ndarray,
             split: Sequence[int], w: ProximityWeights) -> float:
    idx = np.asarray(split, dtype=np.int64)
    if idx.size == 0:
        raise GraphError("cannot evaluate on an empty split")
    logits = forward(params, g, x, w)
    return _accuracy(logits, np.asarray(labels, dtype=np.int64), idx)


# ----- GRADIENT CHECK -----
def gradient_check(params: ModelParams, g: DiGraph, x: np.ndarray, labels: np.ndarray,
                   idx: Sequence[int], w: ProximityWeights, step: float = 1e-5,
                   floor: float = 1e-5) -> float:
    """
    Max relative error between analytic and central-difference gradients over every
    parameter entry: |a - n| / max(|a| + |n|, floor).
    """
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    idx = np.asarray(idx, dtype=np.int64)
    if g.num_nodes > 20 or x.shape[1] > 8:
        logger.warning(f"gradient_check on N={g.num_nodes}, d={x.shape[1]} will be slow")
    agg = Aggregation.build(g, w)
    _, grads = loss_and_grads(params, agg, x, labels, idx)

    perturbed = params.copy()
    worst = 0.0
    for (name, p), (_, analytic) in zip(perturbed.blocks(), grads.blocks()):
        flat = p.reshape(-1)
        a_flat = analytic.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            lp, _ = _loss(_forward(perturbed, agg, x)[0], labels, idx)
            flat[k] = orig - step
            lm, _ = _loss(_forward(perturbed, agg, x)[0], labels, idx)
            flat[k] = orig
            numeric = (lp - lm) / (2.0 * step)
            err = abs(a_flat[k] - numeric) / max(abs(a_flat[k]) + abs(numeric), floor)
            worst = max(worst, err)
    logger.debug(f"gradient_check: max relative error {worst:.3e}")
    return worst


# ----- CHECKPOINT -----
def save_checkpoint(path: str, params: ModelParams):
    dims = ",".join(str(d) for d in params.dims)
    lines = [f"{CHECKPOINT_MAGIC} seed={params.seed} dims={dims} activation={params.activation}"]
    for name, arr in params.blocks():
        mat = arr.reshape(1, -1) if arr.ndim == 1 else arr
        lines.append(f"{name} {mat.shape[0]} {mat.shape[1]}")
        for row in mat:
            lines.append(" ".join("%.17g" % v for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_checkpoint(path: str) -> ModelParams:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith(CHECKPOINT_MAGIC):
        raise DatasetFormatError("not a cgnn checkpoint (bad header)", path, 1)
    header = dict(tok.split("=", 1) for tok in lines[0][len(CHECKPOINT_MAGIC):].split())
    try:
        dims = [int(v) for v in header["dims"].split(",")]
        seed = int(header["seed"])
        activation = header.get("activation", settings.ACTIVATION)
    except (KeyError, ValueError) as e:
        raise DatasetFormatError(f"bad checkpoint header ({e})", path, 1) from e

    blocks: Dict[str, np.ndarray] = {}
    pos = 1
    while pos < len(lines):
        parts = lines[pos].split()
        if len(parts) != 3:
            raise DatasetFormatError("expected '<name> <rows> <cols>'", path, pos + 1)
        name, rows, cols = parts[0], int(parts[1]), int(parts[2])
        data = []
        for r in range(rows):
            line_no = pos + 2 + r
            if line_no - 1 >= len(lines):
                raise DatasetFormatError(f"block {name} truncated", path, line_no)
            row = [float(v) for v in lines[line_no - 1].split()]
            if len(row) != cols:
                raise DatasetFormatError(f"block {name}: expected {cols} values", path, line_no)
            data.append(row)
        blocks[name] = np.array(data, dtype=float).reshape(rows, cols)
        pos += 1 + rows

    n_layers = len(dims) - 2
    try:
        layers = [LayerParams(W_in=blocks[f"layer{k}.W_in"], W_out=blocks[f"layer{k}.W_out"],
                              W_self=blocks[f"layer{k}.W_self"], b=blocks[f"layer{k}.b"].ravel())
                  for k in range(n_layers)]
        params = ModelParams(layers=layers, W_head=blocks["head.W"], b_head=blocks["head.b"].ravel(),
                             activation=activation, seed=seed)
    except KeyError as e:
        raise DatasetFormatError(f"checkpoint is missing block {e}", path) from e
    if params.dims != dims:
        raise DatasetFormatError(f"block shapes {params.dims} disagree with header dims {dims}", path, 1)
    return params
