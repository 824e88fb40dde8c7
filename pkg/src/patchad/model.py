"""The patch model: encoder, projection head, pair classifier, checkpoints.

Encoder: four conv blocks (conv + batchnorm + ReLU) with channels
[128, 256, 128, 64] and kernels [7, 5, 3, 3], followed by global average
pooling into a 64-dim embedding. Projection head: 64 -> 256 -> 256 MLP with
ReLU after the first layer. Classifier: one linear layer on the
concatenation of two embeddings, through a sigmoid.

Checkpoint format (little-endian): magic "PAAB", u32 version=1, u32 fields
d, w, l, K; then each tensor in the traversal order given by
``PatchModel.tensor_names()`` as (u32 rank, u32 dims..., f32 payload);
then the reduced memory bank as K rows of l f32 values; then a u32 CRC-32
of every byte after the 8-byte header and before the CRC itself.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import CheckpointError, InputError
from .nn import BatchNorm1d, Conv1d, GlobalAvgPool, Linear, ReLU, Sigmoid
from .patching import DEFAULT_EPS, instance_normalize

MAGIC = b"PAAB"
CHECKPOINT_VERSION = 1
EMBEDDING_DIM = 64
ENCODER_CHANNELS = (128, 256, 128, 64)
ENCODER_KERNELS = (7, 5, 3, 3)
PROJECTION_DIM = 256
MIN_WINDOW = 8


class PatchModel:
    """Holds all parameters and runs forward/backward passes."""

    def __init__(self, d: int, w: int, seed: int = 0, dtype=np.float32,
                 norm_eps: float = DEFAULT_EPS):
        if d < 1:
            raise InputError(f"channel count must be >= 1, got {d}")
        if w < MIN_WINDOW:
            raise InputError(f"patch length must be >= {MIN_WINDOW}, got {w}")
        self.d = d
        self.w = w
        self.dtype = dtype
        self.norm_eps = norm_eps
        rng = np.random.default_rng(seed)

        self.encoder = []
        c_in = d
        for c_out, k in zip(ENCODER_CHANNELS, ENCODER_KERNELS):
            self.encoder.append(Conv1d(c_in, c_out, k, rng=rng, dtype=dtype))
            self.encoder.append(BatchNorm1d(c_out, dtype=dtype))
            self.encoder.append(ReLU())
            c_in = c_out
        self.encoder.append(GlobalAvgPool())

        self.projection = [
            Linear(EMBEDDING_DIM, PROJECTION_DIM, rng=rng, dtype=dtype),
            ReLU(),
            Linear(PROJECTION_DIM, PROJECTION_DIM, rng=rng, dtype=dtype),
        ]
        self.classifier_linear = Linear(2 * EMBEDDING_DIM, 1, rng=rng, dtype=dtype)
        self.classifier_sigmoid = Sigmoid()

    # -- parameter bookkeeping -------------------------------------------

    def named_layers(self):
        conv_i = bn_i = 0
        for layer in self.encoder:
            if isinstance(layer, Conv1d):
                yield f"enc.conv{conv_i}", layer
                conv_i += 1
            elif isinstance(layer, BatchNorm1d):
                yield f"enc.bn{bn_i}", layer
                bn_i += 1
        yield "proj.fc0", self.projection[0]
        yield "proj.fc1", self.projection[2]
        yield "cls.fc", self.classifier_linear

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, layer in self.named_layers():
            for pname, arr in layer.params.items():
                out[f"{prefix}.{pname}"] = arr
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, layer in self.named_layers():
            if isinstance(layer, BatchNorm1d):
                out[f"{prefix}.running_mean"] = layer.running_mean
                out[f"{prefix}.running_var"] = layer.running_var
        return out

    def tensor_names(self) -> list[str]:
        """Fixed checkpoint traversal order: parameters, then buffers."""
        return list(self.params()) + list(self.buffers())

    def tensors(self) -> dict[str, np.ndarray]:
        return {**self.params(), **self.buffers()}

    def collect_grads(self) -> dict[str, np.ndarray]:
        """Gradients accumulated by the most recent backward passes."""
        out = {}
        for prefix, layer in self.named_layers():
            for pname, g in layer.grads.items():
                out[f"{prefix}.{pname}"] = g
        return out

    def clear_grads(self) -> None:
        for _, layer in self.named_layers():
            layer.grads.clear()

    # -- forward / backward ----------------------------------------------

    def encode(self, patches: np.ndarray, train: bool = False) -> np.ndarray:
        """Raw patches (B, w, d) or (w, d) -> embeddings (B, 64) or (64,)."""
        patches = np.asarray(patches)
        single = patches.ndim == 2
        if single:
            patches = patches[None]
        if patches.shape[1] != self.w or patches.shape[2] != self.d:
            raise InputError(
                f"expected patches of shape (*, {self.w}, {self.d}), got {patches.shape}"
            )
        x = instance_normalize(patches, self.norm_eps).astype(self.dtype)
        x = np.ascontiguousarray(x.transpose(0, 2, 1))  # (B, d, w)
        for layer in self.encoder:
            x = layer.forward(x, train)
        return x[0] if single else x

    def encode_batched(self, patches: np.ndarray, chunk: int = 2048) -> np.ndarray:
        """Eval-mode encode in chunks to bound memory."""
        parts = [self.encode(patches[i : i + chunk], train=False)
                 for i in range(0, len(patches), chunk)]
        return np.concatenate(parts, axis=0)

    def encoder_backward(self, dh: np.ndarray) -> None:
        dx = dh
        for layer in reversed(self.encoder):
            dx = layer.backward(dx)

    def project(self, h: np.ndarray, train: bool = False) -> np.ndarray:
        z = np.asarray(h, dtype=self.dtype)
        single = z.ndim == 1
        if single:
            z = z[None]
        for layer in self.projection:
            z = layer.forward(z, train)
        return z[0] if single else z

    def projection_backward(self, dz: np.ndarray) -> np.ndarray:
        dx = dz
        for layer in reversed(self.projection):
            dx = layer.backward(dx)
        return dx

    def classify_pairs(self, h_anchor: np.ndarray, h_candidate: np.ndarray,
                       train: bool = False) -> np.ndarray:
        """Probability that ``h_candidate`` immediately precedes ``h_anchor``.

        The pair order matters: inputs are concatenated as
        (anchor, candidate-predecessor).
        """
        a = np.atleast_2d(np.asarray(h_anchor, dtype=self.dtype))
        c = np.atleast_2d(np.asarray(h_candidate, dtype=self.dtype))
        if a.shape[1] != EMBEDDING_DIM or c.shape[1] != EMBEDDING_DIM:
            raise InputError("classify_pairs expects 64-dim embeddings")
        x = np.concatenate([a, c], axis=1)
        logits = self.classifier_linear.forward(x, train)
        p = self.classifier_sigmoid.forward(logits, train)
        p = p[:, 0]
        return p if p.shape[0] > 1 or np.asarray(h_anchor).ndim == 2 else float(p[0])

    def classifier_backward(self, dp: np.ndarray):
        dlogits = self.classifier_sigmoid.backward(np.asarray(dp)[:, None])
        dx = self.classifier_linear.backward(dlogits)
        return dx[:, :EMBEDDING_DIM], dx[:, EMBEDDING_DIM:]


def init_model(d: int, w: int, seed: int) -> PatchModel:
    """Fresh model with fan-in-scaled uniform weights, deterministic in seed."""
    return PatchModel(d=d, w=w, seed=seed)


# -- checkpoint io ---------------------------------------------------------


def save_checkpoint(model: PatchModel, bank: np.ndarray, path) -> None:
    """Write model parameters, buffers and the reduced memory bank."""
    bank = np.asarray(bank, dtype=np.float32)
    if bank.ndim != 2 or bank.shape[1] != EMBEDDING_DIM:
        raise InputError(f"bank must be (K, {EMBEDDING_DIM}), got {bank.shape}")
    body = bytearray()
    body += struct.pack("<4I", model.d, model.w, EMBEDDING_DIM, bank.shape[0])
    tensors = model.tensors()
    for name in model.tensor_names():
        arr = np.asarray(tensors[name], dtype=np.float32)
        body += struct.pack("<I", arr.ndim)
        body += struct.pack(f"<{arr.ndim}I", *arr.shape)
        body += arr.astype("<f4").tobytes()
    body += bank.astype("<f4").tobytes()
    crc = zlib.crc32(bytes(body))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(body)
        fh.write(struct.pack("<I", crc))


def load_checkpoint(path) -> tuple[PatchModel, np.ndarray]:
    """Read a checkpoint back; returns (model, reduced bank)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    if len(blob) < 12:
        raise CheckpointError("truncated checkpoint")
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    body, (crc_stored,) = blob[8:-4], struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(body) != crc_stored:
        raise CheckpointError("checksum mismatch (corrupted or truncated file)")

    off = 0

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(body):
            raise CheckpointError("truncated checkpoint body")
        vals = struct.unpack_from(fmt, body, off)
        off += size
        return vals

    d, w, l, k = take("<4I")
    if l != EMBEDDING_DIM:
        raise CheckpointError(f"embedding dim {l} does not match expected {EMBEDDING_DIM}")
    model = PatchModel(d=d, w=w, seed=0)
    tensors = model.tensors()
    for name in model.tensor_names():
        (rank,) = take("<I")
        shape = take(f"<{rank}I") if rank else ()
        expected = tensors[name]
        if tuple(shape) != expected.shape:
            raise CheckpointError(
                f"tensor {name}: shape {tuple(shape)} does not match expected {expected.shape}"
            )
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        size = 4 * count
        if off + size > len(body):
            raise CheckpointError("truncated checkpoint body")
        arr = np.frombuffer(body, dtype="<f4", count=count, offset=off).reshape(shape)
        off += size
        expected[...] = arr
    size = 4 * k * l
    if off + size != len(body):
        raise CheckpointError("checkpoint size does not match declared bank size")
    bank = np.frombuffer(body, dtype="<f4", count=k * l, offset=off).reshape(k, l).copy()
    return model, bank
