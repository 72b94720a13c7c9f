"""Bidirectional LSTM sequence classifier written directly in numpy.

Each direction runs the standard LSTM cell with gate blocks stacked in the
order input, forget, cell candidate, output::

    z = W x_t + U h_{t-1} + b
    i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
    c_t = f * c_{t-1} + i * g;  h_t = o * tanh(c_t)

The forward direction reads the steps in order, the backward direction in
reverse. Their final hidden states are concatenated (forward first), mapped
by a fully connected layer and a softmax. Training minimises the mean
cross-entropy with Adam; gradients come from backpropagation through time.
"""

import struct
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .errors import BadMagic, EmptyDataset, IndexOutOfRange, ShapeMismatch, TruncatedPayload
from .validation import check_labels, check_sequences

PROB_FLOOR = 1e-12


@dataclass
class LstmDirectionParams:
    W: np.ndarray  # (4H, F)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    @property
    def H(self):
        return self.U.shape[1]

    @property
    def F(self):
        return self.W.shape[1]

    def __post_init__(self):
        H4 = self.U.shape[0]
        if H4 % 4 or self.U.shape != (H4, H4 // 4) or self.W.shape[0] != H4 \
                or self.b.shape != (H4,):
            raise ShapeMismatch(
                f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}")


@dataclass
class BiLstmModel:
    """Parameters of the bidirectional LSTM plus its fully connected head."""

    fwd: LstmDirectionParams
    bwd: LstmDirectionParams
    fc_w: np.ndarray  # (K, 2H)
    fc_b: np.ndarray  # (K,)
    class_vocab: tuple = ()
    columns_as_steps: bool = False

    def __post_init__(self):
        self.class_vocab = tuple(str(c) for c in self.class_vocab)
        if self.fwd.H != self.bwd.H or self.fwd.F != self.bwd.F:
            raise ShapeMismatch("forward and backward directions disagree in size")
        K = self.fc_b.shape[0]
        if K < 2:
            raise ShapeMismatch("classifier needs at least 2 classes")
        if self.fc_w.shape != (K, 2 * self.H):
            raise ShapeMismatch(f"fc_w must be ({K}, {2 * self.H}), got {self.fc_w.shape}")
        if self.class_vocab and len(self.class_vocab) != K:
            raise ShapeMismatch(f"{len(self.class_vocab)} class names for {K} outputs")

    @property
    def H(self):
        return self.fwd.H

    @property
    def F(self):
        return self.fwd.F

    @property
    def K(self):
        return self.fc_b.shape[0]

    def arrays(self):
        """Parameter arrays in checkpoint order."""
        return [self.fwd.W, self.fwd.U, self.fwd.b,
                self.bwd.W, self.bwd.U, self.bwd.b, self.fc_w, self.fc_b]

    def with_arrays(self, arrays):
        a = list(arrays)
        return replace(self, fwd=LstmDirectionParams(*a[0:3]),
                       bwd=LstmDirectionParams(*a[3:6]), fc_w=a[6], fc_b=a[7])

    def copy(self):
        return self.with_arrays([x.copy() for x in self.arrays()])

    def zeros_like(self):
        return self.with_arrays([np.zeros_like(x) for x in self.arrays()])


def init_model(n_features, hidden_size, class_vocab, seed=0, columns_as_steps=False):
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights; zero biases except forget gate = 1."""
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 0])
    H, F, K = int(hidden_size), int(n_features), len(class_vocab)
    lim = 1.0 / np.sqrt(H)

    def direction():
        W = rng.uniform(-lim, lim, (4 * H, F))
        U = rng.uniform(-lim, lim, (4 * H, H))
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0
        return LstmDirectionParams(W, U, b)

    fwd, bwd = direction(), direction()
    fc_w = rng.uniform(-lim, lim, (K, 2 * H))
    return BiLstmModel(fwd, bwd, fc_w, np.zeros(K), tuple(class_vocab), columns_as_steps)


# -- forward / backward --------------------------------------------------------

def _run_direction(p, X):
    """Unroll one direction over X (B, T, F); returns final h and the step cache."""
    B, T, _ = X.shape
    H = p.H
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    cache = []
    for t in range(T):
        x = X[:, t]
        z = x @ p.W.T + h @ p.U.T + p.b
        i = expit(z[:, :H])
        f = expit(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = expit(z[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        cache.append((x, h, c, i, f, g, o, tc))
        h = o * tc
        c = c_new
    return h, cache


def _backprop_direction(p, cache, dh):
    """BPTT from a gradient on the final hidden state."""
    dW = np.zeros_like(p.W)
    dU = np.zeros_like(p.U)
    db = np.zeros_like(p.b)
    dc = np.zeros_like(dh)
    for x, h_prev, c_prev, i, f, g, o, tc in reversed(cache):
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dc * i * (1.0 - g * g),
            do * o * (1.0 - o),
        ], axis=1)
        dW += dz.T @ x
        dU += dz.T @ h_prev
        db += dz.sum(axis=0)
        dh = dz @ p.U
        dc = dc * f
    return dW, dU, db


def softmax(logits):
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def _as_steps(model, X):
    X = check_sequences(X)
    if model.columns_as_steps:
        X = np.swapaxes(X, 1, 2)
    if X.shape[2] != model.F:
        raise ShapeMismatch(f"model expects {model.F} features per step, got {X.shape[2]}")
    return X


def _forward_batch(model, X):
    hf, cache_f = _run_direction(model.fwd, X)
    hb, cache_b = _run_direction(model.bwd, X[:, ::-1])
    hcat = np.concatenate([hf, hb], axis=1)
    probs = softmax(hcat @ model.fc_w.T + model.fc_b)
    return probs, (hcat, cache_f, cache_b)


def predict_proba_batch(model, X):
    return _forward_batch(model, _as_steps(model, X))[0]


def forward(model, seq):
    """Class probabilities for one sequence shaped (steps, features)."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2:
        raise ShapeMismatch(f"a sequence must be 2-D, got shape {seq.shape}")
    return predict_proba_batch(model, seq[None])[0]


def loss(probs, label):
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= label < probs.shape[-1]:
        raise IndexOutOfRange(f"label {label} outside {probs.shape[-1]} classes")
    return float(-np.log(max(probs[label], PROB_FLOOR)))


def loss_and_grad(model, X, y):
    """Mean cross-entropy over a batch and its gradient as a model-shaped object."""
    X = _as_steps(model, X)
    y = np.asarray(y, dtype=np.intp)
    B = X.shape[0]
    if y.shape != (B,):
        raise ShapeMismatch(f"{B} sequences but labels shaped {y.shape}")
    if np.any((y < 0) | (y >= model.K)):
        raise IndexOutOfRange("label index outside the class range")
    probs, (hcat, cache_f, cache_b) = _forward_batch(model, X)
    picked = np.maximum(probs[np.arange(B), y], PROB_FLOOR)
    mean_loss = float(np.mean(-np.log(picked)))

    dlogits = probs.copy()
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B
    dfc_w = dlogits.T @ hcat
    dfc_b = dlogits.sum(axis=0)
    dh = dlogits @ model.fc_w
    H = model.H
    gf = _backprop_direction(model.fwd, cache_f, dh[:, :H])
    gb = _backprop_direction(model.bwd, cache_b, dh[:, H:])
    grads = BiLstmModel(LstmDirectionParams(*gf), LstmDirectionParams(*gb),
                        dfc_w, dfc_b, model.class_vocab, model.columns_as_steps)
    return mean_loss, grads


def backward(model, seq, label):
    """Exact gradient of ``loss(forward(model, seq), label)`` for one sequence."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2:
        raise ShapeMismatch(f"a sequence must be 2-D, got shape {seq.shape}")
    return loss_and_grad(model, seq[None], [label])[1]


def predict(model, seq):
    """Index of the most probable class; ties go to the lowest index."""
    return int(np.argmax(forward(model, seq)))


# -- training -------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")


class Adam:
    def __init__(self, arrays, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, params, grads):
        """Update ``params`` in place."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(model, X, y, cfg=TrainConfig()):
    """Train a copy of ``model`` on sequences ``X`` with class indices ``y``.

    Returns ``(trained_model, loss_trace)`` where the trace holds the mean
    per-item training loss of each epoch. Batches are visited sequentially in
    an order drawn from ``cfg.seed``.
    """
    X = check_sequences(X, allow_empty=True)
    if X.shape[0] == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    y = np.asarray(check_labels(y, X.shape[0]), dtype=np.intp)
    model = model.copy()
    params = model.arrays()
    opt = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng([int(cfg.seed) & 0xFFFFFFFFFFFFFFFF, 1])
    n = X.shape[0]
    trace = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch_loss, grads = loss_and_grad(model, X[idx], y[idx])
            total += batch_loss * len(idx)
            opt.step(params, grads.arrays())
        trace.append(total / n)
    return model, trace


# -- checkpoint file ---------------------------------------------------------------

CKPT_MAGIC = b"EEGM"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sHHHHB")


def write_checkpoint(model, path):
    """Header (F, H, K, steps flag, class names) then f64 blocks in ``arrays()`` order."""
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, model.F, model.H,
                                   model.K, int(model.columns_as_steps)))
        vocab = model.class_vocab or tuple(str(k) for k in range(model.K))
        for name in vocab:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        for a in model.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CKPT_MAGIC:
        raise BadMagic(f"{path}: not a model checkpoint")
    _, version, F, H, K, steps_flag = _CKPT_HEADER.unpack_from(data, 0)
    if version != CKPT_VERSION:
        raise BadMagic(f"{path}: unsupported checkpoint version {version}")
    pos = _CKPT_HEADER.size
    vocab = []
    for _ in range(K):
        (n,) = struct.unpack_from("<H", data, pos)
        vocab.append(data[pos + 2:pos + 2 + n].decode("utf-8"))
        pos += 2 + n
    shapes = [(4 * H, F), (4 * H, H), (4 * H,)] * 2 + [(K, 2 * H), (K,)]
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        if pos + 8 * count > len(data):
            raise TruncatedPayload(f"{path}: parameter block truncated")
        arrays.append(np.frombuffer(data, "<f8", count, pos).astype(np.float64).reshape(shape))
        pos += 8 * count
    return BiLstmModel(LstmDirectionParams(*arrays[0:3]), LstmDirectionParams(*arrays[3:6]),
                       arrays[6], arrays[7], tuple(vocab), bool(steps_flag))


# -- scikit-learn estimator -----------------------------------------------------------

class BiLstmClassifier(ClassifierMixin, BaseEstimator):
    """Sequence classifier over inputs shaped (n_items, n_steps, n_features).

    Parameters
    ----------
    hidden_size : int
        Hidden units per direction.
    epochs, learning_rate, batch_size :
        Adam training schedule.
    random_state : int
        Seeds initialisation and batch order; equal seeds give bitwise equal fits.
    columns_as_steps : bool
        Feed matrix columns instead of rows as the time steps.
    """

    def __init__(self, hidden_size=20, epochs=5, learning_rate=1e-3, batch_size=32,
                 random_state=0, columns_as_steps=False):
        self.hidden_size = hidden_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.random_state = random_state
        self.columns_as_steps = columns_as_steps

    def train_config(self):
        return TrainConfig(self.epochs, self.learning_rate, self.batch_size,
                           self.random_state)

    def fit(self, X, y):
        X = check_sequences(X)
        y = check_labels(y, X.shape[0])
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need samples of at least 2 classes")
        n_features = X.shape[1] if self.columns_as_steps else X.shape[2]
        init = init_model(n_features, self.hidden_size, [str(c) for c in self.classes_],
                          self.random_state, self.columns_as_steps)
        self.model_, self.loss_curve_ = train(init, X, y_idx, self.train_config())
        self.n_features_in_ = n_features
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return predict_proba_batch(self.model_, X)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
