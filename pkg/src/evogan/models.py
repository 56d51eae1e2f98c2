"""Discriminator and generator MLPs, the decision rule and checkpoint files."""

import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ShapeError, Tensor, affine, as_tensor, detach, matmul, transpose

CONTRADICTION = 0
"""Prediction code for "no class strictly dominates" (classes are 1..L)."""

LEAKY_SLOPE = 0.2
_SLOPES = {"leaky_relu": LEAKY_SLOPE, "relu": 0.0, "linear": None}


def glorot_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class Layer:
    weight: Tensor  # fan_in x fan_out
    bias: Tensor  # 1 x fan_out
    activation: str = "leaky_relu"

    def __call__(self, x, frozen=False):
        w, b = (detach(self.weight), detach(self.bias)) if frozen else (self.weight, self.bias)
        return affine(x, w, b, _SLOPES[self.activation])


def _make_layers(rng, sizes, activations):
    layers = []
    for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
        layers.append(Layer(
            Tensor(glorot_uniform(rng, fan_in, fan_out), requires_grad=True),
            Tensor(np.zeros((1, fan_out)), requires_grad=True),
            act,
        ))
    return layers


def _forward_layers(layers, x, frozen):
    for layer in layers:
        x = layer(x, frozen)
    return x


@dataclass
class Discriminator:
    """Feature map (an MLP, possibly empty) followed by L linear heads.

    ``heads`` is L x p; scores are ``features @ heads.T``.
    """

    phi_layers: list
    heads: Tensor
    L: int
    input_dim: int = field(default=None)

    def __post_init__(self):
        if self.input_dim is None:
            self.input_dim = (self.phi_layers[0].weight.shape[0] if self.phi_layers
                              else self.heads.shape[1])
        p = self.phi_layers[-1].weight.shape[1] if self.phi_layers else self.input_dim
        if self.heads.shape != (self.L, p):
            raise ShapeError(f"heads must be {self.L}x{p}, got {self.heads.shape}")

    @classmethod
    def create(cls, input_dim, L, hidden=(64, 64), activation="leaky_relu", seed=0):
        rng = np.random.default_rng(seed)
        sizes = [input_dim, *hidden]
        layers = _make_layers(rng, sizes, [activation] * len(hidden))
        heads = Tensor(glorot_uniform(rng, sizes[-1], L).T, requires_grad=True)
        return cls(layers, heads, L, input_dim)

    @property
    def feature_dim(self):
        return self.heads.shape[1]

    def parameters(self):
        params = []
        for layer in self.phi_layers:
            params += [layer.weight, layer.bias]
        return params + [self.heads]

    def forward(self, x, frozen=False):
        """Return (features, scores); ``frozen`` keeps parameters off the graph."""
        x = as_tensor(x)
        if x.shape[1] != self.input_dim:
            raise ShapeError(f"discriminator expects {self.input_dim} columns, got {x.shape[1]}")
        feats = _forward_layers(self.phi_layers, x, frozen)
        heads = detach(self.heads) if frozen else self.heads
        return feats, matmul(feats, transpose(heads))

    __call__ = forward

    def scores(self, x):
        return self.forward(x, frozen=True)[1].values

    def predict(self, x, tie_tol=0.0):
        return decide_rows(self.scores(x), tie_tol)


@dataclass
class Generator:
    """Noise-to-sample MLP with a linear output layer."""

    layers: list
    noise_dim: int

    @classmethod
    def create(cls, noise_dim, output_dim, hidden=(64, 64), activation="leaky_relu", seed=0):
        rng = np.random.default_rng(seed)
        sizes = [noise_dim, *hidden, output_dim]
        acts = [activation] * len(hidden) + ["linear"]
        return cls(_make_layers(rng, sizes, acts), noise_dim)

    @property
    def output_dim(self):
        return self.layers[-1].weight.shape[1]

    def parameters(self):
        params = []
        for layer in self.layers:
            params += [layer.weight, layer.bias]
        return params

    def forward(self, noise, frozen=False):
        noise = as_tensor(noise)
        if noise.shape[1] != self.noise_dim:
            raise ShapeError(f"generator expects noise width {self.noise_dim}, got {noise.shape[1]}")
        return _forward_layers(self.layers, noise, frozen)

    __call__ = forward

    def sample_noise(self, rng, M):
        return rng.uniform(-1.0, 1.0, size=(M, self.noise_dim))


def disc_forward(d, x):
    return d.forward(x)


def gen_forward(g, noise):
    return g.forward(noise)


def decide(scores_row, tie_tol=0.0):
    """Class k (1-indexed) if s_k > s_l + tie_tol for every l != k, else CONTRADICTION."""
    if tie_tol < 0:
        raise ValueError(f"tie_tol must be non-negative, got {tie_tol}")
    s = np.asarray(scores_row, dtype=np.float64).reshape(-1)
    k = int(np.argmax(s))
    others = np.delete(s, k)
    if others.size and not np.all(s[k] > others + tie_tol):
        return CONTRADICTION
    return k + 1


def decide_rows(scores, tie_tol=0.0):
    """Vectorized ``decide`` over the rows of a score matrix."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim == 1:
        s = s[None, :]
    if s.shape[1] < 2:
        return np.ones(s.shape[0], dtype=np.int64)
    top2 = -np.partition(-s, 1, axis=1)[:, :2]
    labels = np.argmax(s, axis=1) + 1
    labels[~(top2[:, 0] > top2[:, 1] + tie_tol)] = CONTRADICTION
    return labels


# ---------------------------------------------------------------------------
# checkpoints
#
# Layout (all integers unsigned 32-bit big-endian, values float64 big-endian):
#   magic b"EVGC", version, kind (0 discriminator, 1 generator),
#   L (discriminator) or noise_dim (generator), number of arrays N,
#   then N records: rows, cols, activation name length, activation name
#   (ASCII, empty for head matrices and biases), rows*cols values row-major.
# Discriminators store weight/bias per layer then the heads; generators
# store weight/bias per layer.

_MAGIC = b"EVGC"
_VERSION = 1


def _write_array(fh, arr, name=""):
    raw = name.encode("ascii")
    fh.write(struct.pack(">III", arr.shape[0], arr.shape[1], len(raw)))
    fh.write(raw)
    fh.write(np.ascontiguousarray(arr, dtype=">f8").tobytes())


def _read_array(fh):
    rows, cols, nlen = struct.unpack(">III", fh.read(12))
    name = fh.read(nlen).decode("ascii")
    data = np.frombuffer(fh.read(8 * rows * cols), dtype=">f8").astype(np.float64)
    return data.reshape(rows, cols), name


def save_checkpoint(model, path):
    if isinstance(model, Discriminator):
        kind, extra, layers = 0, model.L, model.phi_layers
    elif isinstance(model, Generator):
        kind, extra, layers = 1, model.noise_dim, model.layers
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    count = 2 * len(layers) + (1 if kind == 0 else 0)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack(">IIII", _VERSION, kind, extra, count))
        for layer in layers:
            _write_array(fh, layer.weight.values, layer.activation)
            _write_array(fh, layer.bias.values)
        if kind == 0:
            _write_array(fh, model.heads.values)
            # input width is implicit only when layers exist
            fh.write(struct.pack(">I", model.input_dim))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        version, kind, extra, count = struct.unpack(">IIII", fh.read(16))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        arrays = [_read_array(fh) for _ in range(count)]
        n_layers = count // 2
        layers = [
            Layer(Tensor(arrays[2 * i][0], requires_grad=True),
                  Tensor(arrays[2 * i + 1][0], requires_grad=True),
                  arrays[2 * i][1])
            for i in range(n_layers)
        ]
        if kind == 1:
            return Generator(layers, extra)
        (input_dim,) = struct.unpack(">I", fh.read(4))
        heads = Tensor(arrays[-1][0], requires_grad=True)
        return Discriminator(layers, heads, extra, input_dim)
